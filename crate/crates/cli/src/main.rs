use clap::Parser;

fn main() {
    let cli = synclab::Cli::parse();
    std::process::exit(synclab::run(cli));
}
