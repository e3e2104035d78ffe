//! Small dense linear algebra for the dimensions this crate works in (d ≤ 8).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix. Serialized as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows).map(|i| m.row(i).to_vec()).collect()
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Invalid("matrix has no rows".into()));
        }
        let cols = rows[0].as_ref().len();
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Invalid("ragged matrix rows".into()));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid("matrix entries must be finite".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: n, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matrix product shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(self.cols, v.len(), "matrix-vector shape mismatch");
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Submatrix made of the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs())).unwrap();
            if a[(p, c)] == 0.0 {
                return 0.0;
            }
            if p != c {
                a.swap_rows(p, c);
                det = -det;
            }
            let piv = a[(c, c)];
            det *= piv;
            for r in c + 1..n {
                let f = a[(r, c)] / piv;
                if f != 0.0 {
                    for k in c..n {
                        let v = a[(c, k)];
                        a[(r, k)] -= f * v;
                    }
                }
            }
        }
        det
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::Invalid("inverse of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Matrix::identity(n);
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs())).unwrap();
            if a[(p, c)].abs() <= scale * 1e-15 || a[(p, c)] == 0.0 {
                return Err(Error::SingularTransform { det: self.det() });
            }
            a.swap_rows(p, c);
            inv.swap_rows(p, c);
            let piv = a[(c, c)];
            for k in 0..n {
                a[(c, k)] /= piv;
                inv[(c, k)] /= piv;
            }
            for r in 0..n {
                if r == c {
                    continue;
                }
                let f = a[(r, c)];
                if f != 0.0 {
                    for k in 0..n {
                        let av = a[(c, k)];
                        let iv = inv[(c, k)];
                        a[(r, k)] -= f * av;
                        inv[(r, k)] -= f * iv;
                    }
                }
            }
        }
        Ok(inv)
    }

    /// Upper bound on the 2-norm condition number, ‖A‖_F·‖A⁻¹‖_F.
    pub fn condition_bound(&self) -> f64 {
        match self.inverse() {
            Ok(inv) => self.norm_frobenius() * inv.norm_frobenius(),
            Err(_) => f64::INFINITY,
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Complex number as (re, im); only what eigenvalue formulas need.
pub type Complex = (f64, f64);

fn cabs((re, im): Complex) -> f64 {
    re.hypot(im)
}

/// Eigenvalues of a matrix of order ≤ 3 from its characteristic polynomial.
pub fn small_eigenvalues(a: &Matrix) -> Option<Vec<Complex>> {
    if !a.is_square() {
        return None;
    }
    match a.rows() {
        1 => Some(vec![(a[(0, 0)], 0.0)]),
        2 => {
            let tr = a[(0, 0)] + a[(1, 1)];
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            Some(quadratic_roots(-tr, det).to_vec())
        }
        3 => {
            let c2 = -(a[(0, 0)] + a[(1, 1)] + a[(2, 2)]);
            let c1 = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)] + a[(0, 0)] * a[(2, 2)]
                - a[(0, 2)] * a[(2, 0)]
                + a[(1, 1)] * a[(2, 2)]
                - a[(1, 2)] * a[(2, 1)];
            let c0 = -a.det();
            Some(cubic_roots(c2, c1, c0))
        }
        _ => None,
    }
}

/// Roots of λ² + bλ + c.
fn quadratic_roots(b: f64, c: f64) -> [Complex; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        // avoid cancellation
        let q = -0.5 * (b + b.signum() * sq);
        if q == 0.0 {
            return [(0.0, 0.0), (0.0, 0.0)];
        }
        [(q, 0.0), (c / q, 0.0)]
    } else {
        let im = (-disc).sqrt() / 2.0;
        [(-b / 2.0, im), (-b / 2.0, -im)]
    }
}

/// Roots of λ³ + c2λ² + c1λ + c0: one real root by bracketed Newton, then deflation.
fn cubic_roots(c2: f64, c1: f64, c0: f64) -> Vec<Complex> {
    let p = |x: f64| ((x + c2) * x + c1) * x + c0;
    let dp = |x: f64| (3.0 * x + 2.0 * c2) * x + c1;
    // Cauchy bound on the root moduli
    let bound = 1.0 + c2.abs().max(c1.abs()).max(c0.abs());
    let (mut lo, mut hi) = (-bound, bound);
    let mut x = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        x = mid;
        if hi - lo <= 1e-3 * bound.max(1.0) {
            break;
        }
    }
    for _ in 0..100 {
        let d = dp(x);
        if d == 0.0 {
            break;
        }
        let nx = x - p(x) / d;
        if !(nx > lo - 1e-12 && nx < hi + 1e-12) {
            break;
        }
        if (nx - x).abs() <= 1e-16 * x.abs().max(1e-300) {
            x = nx;
            break;
        }
        x = nx;
    }
    // polish by bisection fallback if Newton wandered
    if p(x).abs() > 1e-10 * (1.0 + bound.powi(3)) {
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        x = 0.5 * (lo + hi);
    }
    // λ³ + c2λ² + c1λ + c0 = (λ − x)(λ² + bλ + c)
    let b = c2 + x;
    let c = c1 + x * b;
    let [r1, r2] = quadratic_roots(b, c);
    vec![(x, 0.0), r1, r2]
}

/// Spectral radius estimate from power iteration: `iters` iterations per start,
/// `restarts` seeded starts; the rate is the geometric mean growth over the last
/// quarter of the run (robust to a rotating dominant complex pair).
pub fn power_iteration_radius(a: &Matrix, iters: usize, restarts: usize, seed: u64) -> PowerEstimate {
    use rand::{Rng, SeedableRng};
    let n = a.rows();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let window = (iters / 4).max(1);
    let mut estimates = Vec::with_capacity(restarts);
    for _ in 0..restarts {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut log_growth = Vec::with_capacity(iters);
        for _ in 0..iters {
            let w = a.mul_vec(&v);
            let nw = norm(&w);
            if nw == 0.0 || !nw.is_finite() {
                log_growth.push(f64::NEG_INFINITY);
                break;
            }
            log_growth.push(nw.ln());
            v = w.into_iter().map(|x| x / nw).collect();
        }
        let tail = &log_growth[log_growth.len().saturating_sub(window)..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        estimates.push(mean.exp());
    }
    let max = estimates.iter().cloned().fold(0.0, f64::max);
    let min = estimates.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if max > 0.0 { (max - min) / max } else { 0.0 };
    PowerEstimate { radius: max, spread }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub radius: f64,
    /// Relative disagreement between restarts.
    pub spread: f64,
}

/// Spectral radius via Gelfand's formula ρ = lim ‖A^(2^j)‖^(1/2^j), with
/// renormalized repeated squaring.
pub fn gelfand_radius(a: &Matrix) -> f64 {
    let mut m = a.clone();
    let s0 = m.norm_frobenius();
    if s0 == 0.0 {
        return 0.0;
    }
    m = m.scale(1.0 / s0);
    let mut log_rho = s0.ln();
    let mut weight = 0.5;
    for _ in 0..60 {
        let sq = m.mul(&m);
        let s = sq.norm_frobenius();
        if s == 0.0 {
            return 0.0;
        }
        log_rho += weight * s.ln();
        weight *= 0.5;
        m = sq.scale(1.0 / s);
    }
    log_rho.exp()
}

/// Spectral radius: exact characteristic-polynomial roots for order ≤ 3,
/// Gelfand's formula above that.
pub fn spectral_radius(a: &Matrix) -> f64 {
    match small_eigenvalues(a) {
        Some(ev) => ev.into_iter().map(cabs).fold(0.0, f64::max),
        None => gelfand_radius(a),
    }
}

/// Matrix exponential by scaling and squaring with a degree-12 Taylor polynomial.
pub fn expm(a: &Matrix) -> Matrix {
    let n = a.rows();
    let norm = a.norm_one();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.scale(0.5_f64.powi(s));
    let mut term = Matrix::identity(n);
    let mut sum = Matrix::identity(n);
    for k in 1..=12 {
        term = term.mul(&scaled).scale(1.0 / k as f64);
        sum = sum.add(&term);
    }
    for _ in 0..s {
        sum = sum.mul(&sum);
    }
    sum
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
