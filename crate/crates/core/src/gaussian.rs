// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Linear-algebra kernel for number-conserving fermionic Gaussian states.
//!
//! A Gaussian state on `L` modes is fully described by its correlation matrix
//! `C[n][m] = <c^dag_n c_m>`. This module provides the representations and the
//! determinant identities the measure pipelines are built on:
//!
//! * [`CorrelationMatrix`] — Hermitian `L x L`, spectrum in `[0, 1]`; a pure
//!   Slater determinant has `C^2 = C`.
//! * [`MajoranaCovariance`] — real antisymmetric `2L x 2L` matrix `Gamma` in
//!   the interleaved Majorana basis `x_n = c_n + c^dag_n`,
//!   `p_n = -i(c_n - c^dag_n)` (mode `n` owns rows `2n`, `2n+1`). For a
//!   number-conserving state the `(n, m)` block is
//!   `[[-Im A, Re A], [-Re A, -Im A]]` with `A = 2C - 1`; for real `C` this is
//!   `A (x) [[0, 1], [-1, 0]]`.
//! * [`GaussianExponent`] — real antisymmetric `W` with
//!   `rho = exp(1/4 a W a) / Z(W)`. Functional relations between the real
//!   antisymmetric matrices are evaluated through their Hermitian lifts
//!   `i Gamma`, `i W` (which carry the real paired spectrum `+-lambda`):
//!   `i Gamma = tanh(i W / 2)` and `exp(i W) = (1 + i Gamma)(1 - i Gamma)^-1`.
//!
//! Purity overlaps `Tr(rho_a rho_b)` are determinant ratios:
//!
//! ```text
//! D(Ca, Cb) = det(1 - Ca - Cb + 2 Ca Cb) = sqrt(det((1 - Ga Gb) / 2))
//! ```
//!
//! In conventions that keep the imaginary unit inside the Majorana tensor
//! factor the Gamma product enters with the opposite sign; with the real
//! convention used here, `(i Gamma_a)(i Gamma_b) = -Gamma_a Gamma_b`, hence
//! the minus sign under the square root. All determinants go through pivoted
//! LU in log-magnitude form ([`crate::linalg::logdet_lu`]) so that values of
//! order `2^-L` remain exact in the log domain at `L = 256`.
//!
//! `W` and `Z(W)` are singular for pure states (`|lambda_Gamma| -> 1`); every
//! measure path therefore routes through the determinant ratios, and
//! [`w_from_gamma`] / [`log_partition`] exist for mixed-state validation only.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;

/// Hermiticity tolerance for state matrices.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Warn when symmetrization moves a matrix by more than this.
pub const HERMITIZE_WARN: f64 = 1e-8;
/// Margin below 1 at which a Majorana singular value counts as pure.
pub const PURE_SINGULAR_MARGIN: f64 = 1e-6;
/// Isometry tolerance for orbital matrices.
pub const ISOMETRY_TOL: f64 = 1e-10;

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Fermionic correlation matrix `C[n][m] = <c^dag_n c_m>`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    mat: DMatrix<Complex64>,
}

impl CorrelationMatrix {
    /// Build from a matrix, enforcing hermiticity.
    ///
    /// The input is symmetrized; a correction larger than
    /// [`HERMITICITY_TOL`] is an invalid state, one above [`HERMITIZE_WARN`]
    /// is logged.
    pub fn new(mut mat: DMatrix<Complex64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Shape(format!(
                "correlation matrix must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let err = linalg::hermiticity_error(&mat);
        if err > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "correlation matrix is not Hermitian: |C - C^dag| = {err:.3e}"
            )));
        }
        linalg::hermitize(&mut mat);
        Ok(Self { mat })
    }

    /// Build from a matrix that is Hermitian by construction, symmetrizing
    /// away rounding noise. Logs when the correction is suspicious.
    pub(crate) fn from_hermitian_parts(mut mat: DMatrix<Complex64>) -> Self {
        let corr = linalg::hermitize(&mut mat);
        if corr > HERMITIZE_WARN {
            log::warn!("hermiticity correction {corr:.3e} exceeds {HERMITIZE_WARN:.0e}");
        }
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.mat
    }

    /// Diagonal occupation `<n_i>`.
    pub fn occupation(&self, i: usize) -> f64 {
        self.mat[(i, i)].re
    }

    /// Total particle number `Tr C`.
    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    /// `max |C^2 - C|`; zero for a pure Slater determinant.
    pub fn projector_error(&self) -> f64 {
        let sq = &self.mat * &self.mat;
        linalg::max_abs(&(sq - &self.mat))
    }

    /// Full state validation: hermiticity plus spectrum in `[-eps, 1+eps]`.
    pub fn validate_state(&self, eps: f64) -> Result<()> {
        let herm = linalg::hermiticity_error(&self.mat);
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!("hermiticity violation {herm:.3e}")));
        }
        for ev in linalg::hermitian_eigenvalues(&self.mat) {
            if !(-eps..=1.0 + eps).contains(&ev) {
                return Err(Error::InvalidState(format!(
                    "correlation spectrum leaves [0, 1]: eigenvalue {ev:.6e}"
                )));
            }
        }
        Ok(())
    }
}

/// Real antisymmetric Majorana covariance `Gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct MajoranaCovariance {
    mat: DMatrix<f64>,
}

impl MajoranaCovariance {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() % 2 != 0 {
            return Err(Error::Shape(format!(
                "Majorana covariance must be square with even dimension, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let asym = linalg::max_abs_real(&(&mat + mat.transpose()));
        if asym > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "Majorana covariance is not antisymmetric: |G + G^T| = {asym:.3e}"
            )));
        }
        Ok(Self { mat })
    }

    /// Majorana dimension `2L`.
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Singular values (eigenvalue magnitudes of the Hermitian lift).
    pub fn singular_values(&self) -> Vec<f64> {
        let lift = self.hermitian_lift();
        linalg::hermitian_eigenvalues(&lift).into_iter().map(f64::abs).collect()
    }

    /// Hermitian lift `i Gamma`.
    pub(crate) fn hermitian_lift(&self) -> DMatrix<Complex64> {
        self.mat.map(|x| c64(0.0, x))
    }
}

/// Gaussian exponent `W` with its log partition function.
#[derive(Debug, Clone)]
pub struct GaussianExponent {
    mat: DMatrix<f64>,
    log_z: f64,
}

impl GaussianExponent {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let log_z = log_partition(&mat)?;
        Ok(Self { mat, log_z })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// `ln Z(W)`.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// Check the paired `+-lambda` spectrum of the Hermitian lift.
    pub fn validate_paired_spectrum(&self, tol: f64) -> Result<()> {
        let lift = self.mat.map(|x| c64(0.0, x));
        let mut ev = linalg::hermitian_eigenvalues(&lift);
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = ev.len();
        for i in 0..n / 2 {
            if (ev[i] + ev[n - 1 - i]).abs() > tol {
                return Err(Error::InvalidState(format!(
                    "exponent spectrum is not paired: {} vs {}",
                    ev[i],
                    ev[n - 1 - i]
                )));
            }
        }
        Ok(())
    }
}

/// Ordered subset of mode indices for partial traces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSubset {
    indices: Vec<usize>,
}

impl ModeSubset {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Shape("mode subset indices must be strictly increasing".into()));
        }
        Ok(Self { indices })
    }

    /// Contiguous range of modes.
    pub fn range(r: std::ops::Range<usize>) -> Self {
        Self { indices: r.collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Positions of `other`'s indices inside this subset.
    pub fn positions_of(&self, other: &ModeSubset) -> Result<ModeSubset> {
        let mut pos = Vec::with_capacity(other.len());
        for &i in other.indices() {
            match self.indices.binary_search(&i) {
                Ok(p) => pos.push(p),
                Err(_) => {
                    return Err(Error::Shape(format!("mode {i} is not part of the observed subset")))
                }
            }
        }
        ModeSubset::new(pos)
    }
}

/// Isometry of occupied single-particle orbitals: one pure Slater state.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalMatrix {
    mat: DMatrix<Complex64>,
}

impl OrbitalMatrix {
    pub fn new(mat: DMatrix<Complex64>) -> Result<Self> {
        let s = Self { mat };
        let err = s.isometry_error();
        if err > ISOMETRY_TOL {
            return Err(Error::InvalidState(format!(
                "orbital matrix is not an isometry: |V^dag V - 1| = {err:.3e}"
            )));
        }
        Ok(s)
    }

    pub(crate) fn new_unchecked(mat: DMatrix<Complex64>) -> Self {
        Self { mat }
    }

    /// Total single-particle modes `M`.
    pub fn modes(&self) -> usize {
        self.mat.nrows()
    }

    /// Particle number `N` (occupied orbitals).
    pub fn particles(&self) -> usize {
        self.mat.ncols()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub(crate) fn entries_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.mat
    }

    /// `max |V^dag V - 1|`.
    pub fn isometry_error(&self) -> f64 {
        let n = self.particles();
        if n == 0 {
            return 0.0;
        }
        let g = self.mat.adjoint() * &self.mat;
        linalg::max_abs(&(g - DMatrix::identity(n, n)))
    }

    /// Re-orthonormalize the columns by thin QR. Errors if the columns are
    /// too degenerate to restore an isometry within `1e-6`.
    pub fn renormalize(&mut self) -> Result<()> {
        if self.particles() == 0 {
            return Ok(());
        }
        let qr = self.mat.clone().qr();
        self.mat = qr.q();
        let err = self.isometry_error();
        if err > 1e-6 {
            return Err(Error::Numerical(format!(
                "orbital renormalization failed, residual isometry error {err:.3e}"
            )));
        }
        Ok(())
    }

    /// Occupation `<n_i> = sum_k |V[i, k]|^2` without forming `C`.
    pub fn occupation(&self, i: usize) -> f64 {
        (0..self.particles()).map(|k| self.mat[(i, k)].norm_sqr()).sum()
    }

    /// Correlation matrix restricted to a mode subset, `conj(V_S) V_S^T`,
    /// computed without materializing the full `C`.
    pub fn reduced_correlation(&self, keep: &ModeSubset) -> Result<CorrelationMatrix> {
        let m = self.modes();
        if keep.indices().iter().any(|&i| i >= m) {
            return Err(Error::Shape(format!("subset index out of range for {m} modes")));
        }
        let k = keep.len();
        let n = self.particles();
        let mut rows = DMatrix::zeros(k, n);
        for (r, &i) in keep.indices().iter().enumerate() {
            for c in 0..n {
                rows[(r, c)] = self.mat[(i, c)];
            }
        }
        let c = rows.map(|z| z.conj()) * rows.transpose();
        Ok(CorrelationMatrix::from_hermitian_parts(c))
    }
}

/// `C = conj(V) V^T` for a Slater determinant, i.e. `C[n][m] = <c^dag_n c_m>`.
pub fn c_from_orbitals(v: &OrbitalMatrix) -> Result<CorrelationMatrix> {
    let err = v.isometry_error();
    if err > ISOMETRY_TOL {
        return Err(Error::InvalidState(format!(
            "orbital matrix is not an isometry: |V^dag V - 1| = {err:.3e}"
        )));
    }
    let c = v.entries().map(|z| z.conj()) * v.entries().transpose();
    Ok(CorrelationMatrix::from_hermitian_parts(c))
}

/// Majorana covariance from the correlation matrix (number-conserving case).
pub fn gamma_from_c(c: &CorrelationMatrix) -> Result<MajoranaCovariance> {
    let l = c.dim();
    let mut g = DMatrix::zeros(2 * l, 2 * l);
    for n in 0..l {
        for m in 0..l {
            let a = 2.0 * c.entries()[(n, m)] - if n == m { c64(1.0, 0.0) } else { c64(0.0, 0.0) };
            g[(2 * n, 2 * m)] = -a.im;
            g[(2 * n, 2 * m + 1)] = a.re;
            g[(2 * n + 1, 2 * m)] = -a.re;
            g[(2 * n + 1, 2 * m + 1)] = -a.im;
        }
    }
    MajoranaCovariance::new(g)
}

/// Inverse of [`gamma_from_c`]: read `A = 2C - 1` back out of the blocks.
pub fn c_from_gamma(g: &MajoranaCovariance) -> Result<CorrelationMatrix> {
    let l = g.dim() / 2;
    let mut c = DMatrix::zeros(l, l);
    for n in 0..l {
        for m in 0..l {
            let re_a = g.entries()[(2 * n, 2 * m + 1)];
            let im_a = -g.entries()[(2 * n, 2 * m)];
            let delta = if n == m { 1.0 } else { 0.0 };
            c[(n, m)] = c64((re_a + delta) / 2.0, im_a / 2.0);
        }
    }
    CorrelationMatrix::new(c)
}

/// Gaussian exponent from the covariance: `i W = 2 artanh(i Gamma)`.
///
/// Defined for mixed states only; a singular value within
/// [`PURE_SINGULAR_MARGIN`] of 1 means a (near-)pure mode where `W` and
/// `Z(W)` diverge — use the determinant-ratio overlaps instead.
pub fn w_from_gamma(g: &MajoranaCovariance) -> Result<GaussianExponent> {
    let lift = g.hermitian_lift();
    let eig = nalgebra::SymmetricEigen::new(lift);
    for &mu in eig.eigenvalues.iter() {
        if mu.abs() >= 1.0 - PURE_SINGULAR_MARGIN {
            return Err(Error::SingularState(format!(
                "Majorana singular value {:.9} is within {PURE_SINGULAR_MARGIN:.0e} of 1; \
                 the exponent diverges for pure modes — use the determinant-ratio overlap paths",
                mu.abs()
            )));
        }
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|mu| c64(2.0 * mu.atanh(), 0.0)));
    let w_lift = &eig.eigenvectors * d * eig.eigenvectors.adjoint();
    // W = -i (iW); the lift of a real antisymmetric matrix is purely
    // imaginary, so the imaginary residue measures rounding only.
    let mut w = DMatrix::zeros(g.dim(), g.dim());
    let mut resid = 0.0f64;
    for i in 0..g.dim() {
        for j in 0..g.dim() {
            w[(i, j)] = w_lift[(i, j)].im;
            resid = resid.max(w_lift[(i, j)].re.abs());
        }
    }
    if resid > 1e-8 {
        return Err(Error::Numerical(format!(
            "exponent reconstruction left a non-antisymmetric residue {resid:.3e}"
        )));
    }
    // Exact antisymmetrization.
    let wt = w.transpose();
    let w = (w - wt) * 0.5;
    GaussianExponent::new(w)
}

/// `ln(2 cosh(x/2))` without overflow for large `|x|`.
fn ln_2cosh_half(x: f64) -> f64 {
    let h = 0.5 * x.abs();
    h + (-2.0 * h).exp().ln_1p()
}

/// Log partition function `ln Z(W) = 1/2 sum_lambda ln(2 cosh(lambda/2))`
/// over all `2L` eigenvalues of the Hermitian lift `i W`.
pub fn log_partition(w: &DMatrix<f64>) -> Result<f64> {
    if w.nrows() != w.ncols() {
        return Err(Error::Shape(format!(
            "exponent must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let asym = linalg::max_abs_real(&(w + w.transpose()));
    if asym > 1e-9 {
        return Err(Error::InvalidState(format!(
            "exponent is not antisymmetric: |W + W^T| = {asym:.3e}"
        )));
    }
    let lift = w.map(|x| c64(0.0, x));
    let ev = linalg::hermitian_eigenvalues(&lift);
    Ok(0.5 * ev.iter().map(|&x| ln_2cosh_half(x)).sum::<f64>())
}

/// `ln Z` of the product exponent defined by `exp(iWc) = exp(iWa) exp(iWb)`.
///
/// The product of the two positive Hermitian exponentials is similar to
/// `exp(iWa/2) exp(iWb) exp(iWa/2)`, whose (positive) spectrum yields the
/// combined eigenvalues `lambda_c = ln mu`.
pub fn combined_log_partition(wa: &GaussianExponent, wb: &GaussianExponent) -> Result<f64> {
    if wa.dim() != wb.dim() {
        return Err(Error::Shape(format!(
            "exponent dimensions differ: {} vs {}",
            wa.dim(),
            wb.dim()
        )));
    }
    let lift_a = wa.entries().map(|x| c64(0.0, x));
    let lift_b = wb.entries().map(|x| c64(0.0, x));
    let ea_half = linalg::hermitian_function(&lift_a, |x| (0.5 * x).exp());
    let eb = linalg::hermitian_function(&lift_b, f64::exp);
    let mut prod = &ea_half * eb * &ea_half;
    linalg::hermitize(&mut prod);
    let mu = linalg::hermitian_eigenvalues(&prod);
    let mut log_z = 0.0;
    for m in mu {
        if m <= 0.0 {
            return Err(Error::Numerical(format!(
                "combined exponent spectrum is not positive: {m:.3e}"
            )));
        }
        log_z += 0.5 * ln_2cosh_half(m.ln());
    }
    Ok(log_z)
}

/// Lexicographic order on the raw f64 bit patterns of two equally-sized
/// complex matrices; used to make the overlap kernel exactly symmetric.
fn canonical_order<'a>(
    a: &'a DMatrix<Complex64>,
    b: &'a DMatrix<Complex64>,
) -> (&'a DMatrix<Complex64>, &'a DMatrix<Complex64>) {
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let kx = (x.re.to_bits(), x.im.to_bits());
        let ky = (y.re.to_bits(), y.im.to_bits());
        if kx != ky {
            return if kx < ky { (a, b) } else { (b, a) };
        }
    }
    (a, b)
}

/// Overlap determinant `D(Ca, Cb) = det(1 - Ca - Cb + 2 Ca Cb)` evaluated
/// into caller-provided scratch, with canonicalized argument order so the
/// result is bitwise symmetric in its arguments.
pub fn overlap_det_raw(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    scratch: &mut DMatrix<Complex64>,
) -> f64 {
    let (a, b) = canonical_order(a, b);
    let n = a.nrows();
    scratch.copy_from(a);
    {
        let s = scratch.as_mut_slice();
        let aa = a.as_slice();
        let bb = b.as_slice();
        for i in 0..s.len() {
            s[i] = -aa[i] - bb[i];
        }
    }
    scratch.gemm(c64(2.0, 0.0), a, b, c64(1.0, 0.0));
    for i in 0..n {
        scratch[(i, i)] += c64(1.0, 0.0);
    }
    linalg::logdet_lu(scratch).value().re
}

/// `Tr(rho_a rho_b)` from correlation matrices:
/// `D(Ca, Cb) = det(1 - Ca - Cb + 2 Ca Cb)`.
pub fn overlap_c(a: &CorrelationMatrix, b: &CorrelationMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "correlation dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut scratch = DMatrix::zeros(a.dim(), a.dim());
    Ok(overlap_det_raw(a.entries(), b.entries(), &mut scratch))
}

/// `Tr(rho_a rho_b)` from Majorana covariances:
/// `sqrt(det((1 - Ga Gb) / 2))` in the real antisymmetric convention.
///
/// A determinant below `-1e-10` is reported as a numerical degeneracy rather
/// than clamped.
pub fn overlap_gamma(a: &MajoranaCovariance, b: &MajoranaCovariance) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "covariance dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.dim();
    let mut m = a.entries() * b.entries();
    for v in m.iter_mut() {
        *v = -*v * 0.5;
    }
    for i in 0..n {
        m[(i, i)] += 0.5;
    }
    let (ln_abs, sign) = linalg::logdet_lu_real(&mut m);
    let det = if sign == 0.0 { 0.0 } else { sign * ln_abs.exp() };
    if det < -1e-10 {
        return Err(Error::Numerical(format!(
            "covariance overlap determinant is negative ({det:.3e}); \
             the input pair is numerically degenerate"
        )));
    }
    Ok(det.max(0.0).sqrt())
}

/// Principal submatrix of `C` on the kept modes: the correlation matrix of
/// the state with all other modes traced out.
pub fn reduce(c: &CorrelationMatrix, keep: &ModeSubset) -> Result<CorrelationMatrix> {
    let l = c.dim();
    if keep.indices().iter().any(|&i| i >= l) {
        return Err(Error::Shape(format!("subset index out of range for {l} modes")));
    }
    let k = keep.len();
    let mut out = DMatrix::zeros(k, k);
    for (r, &i) in keep.indices().iter().enumerate() {
        for (s, &j) in keep.indices().iter().enumerate() {
            out[(r, s)] = c.entries()[(i, j)];
        }
    }
    Ok(CorrelationMatrix::from_hermitian_parts(out))
}
