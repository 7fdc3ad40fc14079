// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Small dense linear-algebra helpers shared across the crate.
//!
//! Determinants are computed by pivoted LU in log-magnitude + phase form so
//! that purity products stay meaningful down to 2^-L at L = 256, far below
//! the plain f64 underflow threshold for intermediate products.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// `ln|det|` plus unit-modulus phase factor. `det = phase * exp(ln_abs)`.
#[derive(Debug, Clone, Copy)]
pub struct LogDet {
    pub ln_abs: f64,
    pub phase: Complex64,
    /// True when an exactly zero pivot was hit (determinant is 0).
    pub zero: bool,
}

impl LogDet {
    pub fn value(&self) -> Complex64 {
        if self.zero {
            Complex64::new(0.0, 0.0)
        } else {
            self.phase * self.ln_abs.exp()
        }
    }
}

/// In-place pivoted LU log-determinant of a complex square matrix.
/// The matrix contents are destroyed.
pub fn logdet_lu(m: &mut DMatrix<Complex64>) -> LogDet {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    let mut ln_abs = 0.0f64;
    let mut phase = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let mut piv = k;
        let mut best = m[(k, k)].norm_sqr();
        for r in (k + 1)..n {
            let v = m[(r, k)].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return LogDet { ln_abs: f64::NEG_INFINITY, phase, zero: true };
        }
        if piv != k {
            m.swap_rows(piv, k);
            phase = -phase;
        }
        let d = m[(k, k)];
        let dn = d.norm();
        ln_abs += dn.ln();
        phase *= d / dn;
        for r in (k + 1)..n {
            let f = m[(r, k)] / d;
            m[(r, k)] = f;
            for c in (k + 1)..n {
                let v = m[(k, c)];
                m[(r, c)] -= f * v;
            }
        }
    }
    LogDet { ln_abs, phase, zero: false }
}

/// In-place pivoted LU log-determinant of a real square matrix.
/// Returns (ln|det|, sign) with sign in {-1.0, 0.0, 1.0}.
pub fn logdet_lu_real(m: &mut DMatrix<f64>) -> (f64, f64) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    let mut ln_abs = 0.0f64;
    let mut sign = 1.0f64;
    for k in 0..n {
        let mut piv = k;
        let mut best = m[(k, k)].abs();
        for r in (k + 1)..n {
            let v = m[(r, k)].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return (f64::NEG_INFINITY, 0.0);
        }
        if piv != k {
            m.swap_rows(piv, k);
            sign = -sign;
        }
        let d = m[(k, k)];
        ln_abs += d.abs().ln();
        if d < 0.0 {
            sign = -sign;
        }
        for r in (k + 1)..n {
            let f = m[(r, k)] / d;
            m[(r, k)] = f;
            for c in (k + 1)..n {
                let v = m[(k, c)];
                m[(r, c)] -= f * v;
            }
        }
    }
    (ln_abs, sign)
}

/// Largest entry magnitude of a complex matrix.
pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry magnitude of a real matrix.
pub fn max_abs_real(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Deviation from hermiticity, `max |M - M^dag|`.
pub fn hermiticity_error(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Symmetrize in place: `M <- (M + M^dag)/2`. Returns the applied correction.
pub fn hermitize(m: &mut DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let a = m[(i, j)];
            let b = m[(j, i)];
            let avg = (a + b.conj()) * 0.5;
            let d = (a - b.conj()).norm();
            if d > worst {
                worst = d;
            }
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix (ascending order not guaranteed).
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect()
}

/// Apply a real function to a Hermitian matrix through its eigendecomposition.
pub fn hermitian_function(
    m: &DMatrix<Complex64>,
    f: impl Fn(f64) -> f64,
) -> DMatrix<Complex64> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| Complex64::new(f(x), 0.0)));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Ordinary least squares for y = a + b x. Returns (intercept, slope, r^2).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (intercept, slope, r2)
}
