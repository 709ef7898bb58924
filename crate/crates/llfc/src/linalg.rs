//! Dense row-major `f64` matrices and the small numerical kernel the rest of
//! the library is built on: products, norms, normalized distance / cosine
//! metrics, power-iteration spectral norm and a one-sided Jacobi SVD.

use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Dense row-major matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Construct from row-major data, rejecting non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Column `c` as an owned vector.
    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Elementwise `self * s + other * t`.
    pub fn scaled_add(&self, s: f64, other: &Matrix, t: f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * s + b * t)
            .collect();
        Ok(Matrix::from_vec(self.rows, self.cols, data))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.scaled_add(1.0, other, -1.0)
    }

    /// Select rows by index (gather); used for permutation application.
    pub fn gather_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (r, &src) in idx.iter().enumerate() {
            out.data[r * self.cols..(r + 1) * self.cols]
                .copy_from_slice(&self.data[src * self.cols..(src + 1) * self.cols]);
        }
        out
    }

    /// Select columns by index (gather).
    pub fn gather_cols(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            for (c, &src) in idx.iter().enumerate() {
                out.data[r * idx.len() + c] = self.data[r * self.cols + src];
            }
        }
        out
    }
}

/// Matrix product in 64-bit arithmetic.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {}x{} * {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    // ikj order keeps the inner loop contiguous in both b and out
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for j in 0..b.cols {
                orow[j] += aik * brow[j];
            }
        }
    }
    Ok(out)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// dist(x, y) = ||x - y||^2 / (||x|| * ||y||).
///
/// Both vectors zero gives 0; exactly one zero is degenerate and reported as
/// `None` so callers can exclude it from aggregates.
pub fn normalized_dist(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("vectors {} vs {}", x.len(), y.len())));
    }
    let nx = norm(x);
    let ny = norm(y);
    if nx == 0.0 && ny == 0.0 {
        return Ok(Some(0.0));
    }
    if nx == 0.0 || ny == 0.0 {
        return Ok(None);
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Some(d2 / (nx * ny)))
}

/// Cosine similarity clamped to [-1, 1]; both-zero convention is 1.
pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("vectors {} vs {}", x.len(), y.len())));
    }
    let nx = norm(x);
    let ny = norm(y);
    if nx == 0.0 && ny == 0.0 {
        return Ok(1.0);
    }
    if nx == 0.0 || ny == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    norm(&m.data)
}

/// Largest singular value by power iteration on m^T m.
///
/// The starting vector is seeded by the matrix dimensions so repeated calls
/// are reproducible.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    if tol <= 0.0 {
        return Err(Error::Domain("tol must be positive".into()));
    }
    let fro = frobenius_norm(m);
    if fro == 0.0 {
        return Err(Error::Domain("spectral_norm of zero matrix".into()));
    }
    let n = m.cols;
    let mut rng = CounterRng::substream(m.rows as u64, m.cols as u64);
    let mut v: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
    let nv = norm(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut sigma = 0.0f64;
    for _ in 0..max_iter {
        // w = m^T (m v)
        let mut mv = vec![0.0; m.rows];
        for i in 0..m.rows {
            mv[i] = dot(m.row(i), &v);
        }
        let mut w = vec![0.0; n];
        for i in 0..m.rows {
            let s = mv[i];
            let row = m.row(i);
            for j in 0..n {
                w[j] += s * row[j];
            }
        }
        let nw = norm(&w);
        if nw == 0.0 {
            // v landed in the null space; restart from a fresh vector
            v = (0..n).map(|_| rng.next_gaussian()).collect();
            let nv = norm(&v);
            for x in v.iter_mut() {
                *x /= nv;
            }
            continue;
        }
        let next = nw.sqrt();
        for j in 0..n {
            v[j] = w[j] / nw;
        }
        if (next - sigma).abs() <= tol * next {
            return Ok(next);
        }
        sigma = next;
    }
    Err(Error::Convergence {
        max_iter,
        last: sigma,
    })
}

const JACOBI_MAX_SWEEPS: usize = 60;

/// All min(rows, cols) singular values, descending, via one-sided Jacobi.
pub fn singular_spectrum(m: &Matrix) -> Vec<f64> {
    let k = m.rows.min(m.cols);
    if k == 0 {
        return Vec::new();
    }
    // work on columns of a tall copy so there are exactly k of them
    let mut a = if m.rows >= m.cols {
        m.clone()
    } else {
        m.transpose()
    };
    let (rows, cols) = (a.rows, a.cols);
    let threshold = 1e-12 * frobenius_norm(m);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for r in 0..rows {
                    let x = a.data[r * cols + p];
                    let y = a.data[r * cols + q];
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                off = off.max(apq.abs());
                if apq.abs() <= threshold {
                    continue;
                }
                // Jacobi rotation zeroing the (p,q) entry of A^T A
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let x = a.data[r * cols + p];
                    let y = a.data[r * cols + q];
                    a.data[r * cols + p] = c * x - s * y;
                    a.data[r * cols + q] = s * x + c * y;
                }
            }
        }
        if off <= threshold {
            break;
        }
    }
    let mut sigmas: Vec<f64> = (0..cols).map(|c| norm(&a.col(c))).collect();
    sigmas.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sigmas.truncate(k);
    sigmas
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::new(rows, cols, v.to_vec()).unwrap()
    }

    fn random_matrix(rng: &mut CounterRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.next_gaussian()).collect())
    }

    // independent triple-loop product used as the matmul oracle
    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let m = mat(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = matmul(&Matrix::identity(3), &m).unwrap();
        assert_eq!(r, m);
    }

    #[test]
    fn matmul_hand_case() {
        let a = mat(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = mat(2, 1, &[0.0, 1.0]);
        let r = matmul(&a, &b).unwrap();
        assert_eq!(r.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        let mut rng = CounterRng::new(11);
        let a = random_matrix(&mut rng, 5, 4);
        let b = random_matrix(&mut rng, 4, 3);
        let fast = matmul(&a, &b).unwrap();
        let slow = naive_matmul(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error() {
        let a = mat(2, 3, &[0.0; 6]);
        let b = mat(2, 2, &[0.0; 4]);
        assert!(matmul(&a, &b).is_err());
    }

    #[test]
    fn matmul_associative() {
        let mut rng = CounterRng::new(5);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 4, 3);
            let b = random_matrix(&mut rng, 3, 5);
            let c = random_matrix(&mut rng, 5, 2);
            let l = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let r = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = frobenius_norm(&l).max(1.0);
            for (x, y) in l.data().iter().zip(r.data()) {
                assert!((x - y).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn construction_rejects_nan() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn normalized_dist_cases() {
        let v = [1.0, -2.0, 3.0];
        assert_eq!(normalized_dist(&v, &v).unwrap(), Some(0.0));
        assert_eq!(normalized_dist(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), Some(2.0));
        // checked against direct evaluation of ||x-y||^2/(||x|| ||y||)
        let x = [2.0, -1.0, 0.0];
        let y = [1.0, 1.0, 1.0];
        let expect = (1.0f64 + 4.0 + 1.0) / ((5.0f64).sqrt() * (3.0f64).sqrt());
        let got = normalized_dist(&x, &y).unwrap().unwrap();
        assert!((got - expect).abs() < 1e-14);
        // degeneracy conventions
        assert_eq!(normalized_dist(&[0.0], &[0.0]).unwrap(), Some(0.0));
        assert_eq!(normalized_dist(&[0.0], &[1.0]).unwrap(), None);
        assert!(normalized_dist(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn normalized_dist_symmetric_nonneg() {
        let mut rng = CounterRng::new(8);
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.next_gaussian()).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.next_gaussian()).collect();
            let d1 = normalized_dist(&x, &y).unwrap().unwrap();
            let d2 = normalized_dist(&y, &x).unwrap().unwrap();
            assert!(d1 >= 0.0);
            assert_eq!(d1, d2);
        }
    }

    #[test]
    fn cosine_cases() {
        let v = [0.3, -0.4, 0.5];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[0.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn frobenius_cases() {
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 4)), 0.0);
        assert!((frobenius_norm(&Matrix::identity(3)) - 3.0f64.sqrt()).abs() < 1e-15);
        assert!((frobenius_norm(&mat(1, 2, &[3.0, 4.0])) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn spectral_norm_diag() {
        let m = mat(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        assert!((spectral_norm(&m, 1e-12, 1000).unwrap() - 3.0).abs() < 1e-9);
        let i = Matrix::identity(4);
        assert!((spectral_norm(&i, 1e-12, 1000).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_matches_jacobi() {
        let mut rng = CounterRng::new(21);
        for _ in 0..5 {
            let m = random_matrix(&mut rng, 6, 4);
            let sn = spectral_norm(&m, 1e-12, 10000).unwrap();
            let top = singular_spectrum(&m)[0];
            assert!((sn - top).abs() <= 1e-8 * top, "{sn} vs {top}");
        }
    }

    #[test]
    fn spectral_le_frobenius() {
        let mut rng = CounterRng::new(9);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 5, 5);
            let sn = spectral_norm(&m, 1e-10, 10000).unwrap();
            assert!(sn <= frobenius_norm(&m) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn singular_spectrum_diag() {
        let m = mat(2, 2, &[2.0, 0.0, 0.0, 5.0]);
        let s = singular_spectrum(&m);
        assert!((s[0] - 5.0).abs() < 1e-12);
        assert!((s[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_spectrum_rank_one() {
        let u = [1.0, 2.0, -1.0];
        let v = [0.5, 3.0];
        let mut m = Matrix::zeros(3, 2);
        for i in 0..3 {
            for j in 0..2 {
                m.set(i, j, u[i] * v[j]);
            }
        }
        let s = singular_spectrum(&m);
        let expect = norm(&u) * norm(&v);
        assert!((s[0] - expect).abs() < 1e-10);
        assert!(s[1].abs() < 1e-10);
    }

    #[test]
    fn singular_spectrum_frobenius_identity() {
        let mut rng = CounterRng::new(33);
        for _ in 0..10 {
            let m = random_matrix(&mut rng, 5, 5);
            let s = singular_spectrum(&m);
            let sum_sq: f64 = s.iter().map(|x| x * x).sum();
            let fro2 = frobenius_norm(&m).powi(2);
            assert!((sum_sq - fro2).abs() <= 1e-9 * fro2);
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
            assert!(s.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn singular_spectrum_permutation_invariant() {
        let mut rng = CounterRng::new(44);
        let m = random_matrix(&mut rng, 4, 5);
        let p = rng.permutation(4);
        let q = rng.permutation(5);
        let pm = m.gather_rows(&p).gather_cols(&q);
        let s1 = singular_spectrum(&m);
        let s2 = singular_spectrum(&pm);
        for (a, b) in s1.iter().zip(&s2) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}
