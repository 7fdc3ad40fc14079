// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Reproducible random states for tests route validation: Haar-ish unitaries,
//! isometries, and mixed correlation matrices with a spectrum kept away from
//! the singular pure limit.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::gaussian::{CorrelationMatrix, OrbitalMatrix};

fn ginibre(m: usize, n: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
    // Box-Muller pairs; the exact distribution is irrelevant, QR makes it uniform enough.
    DMatrix::from_fn(m, n, |_, _| {
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        Complex64::new(r * (2.0 * std::f64::consts::PI * u2).cos(), r * (2.0 * std::f64::consts::PI * u2).sin())
    })
}

/// Random unitary from the QR of a complex Gaussian matrix.
pub fn random_unitary(m: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
    ginibre(m, m, rng).qr().q()
}

/// Random isometry: `n` orthonormal columns on `m` modes.
pub fn random_isometry(m: usize, n: usize, rng: &mut impl Rng) -> OrbitalMatrix {
    assert!(n <= m);
    let q = ginibre(m, n, rng).qr().q();
    OrbitalMatrix::new(q).expect("QR output is an isometry")
}

/// Random mixed correlation matrix `U diag(c) U^dag` with occupations drawn
/// uniformly from `[margin, 1 - margin]`.
pub fn random_mixed_correlation(l: usize, margin: f64, rng: &mut impl Rng) -> CorrelationMatrix {
    let u = random_unitary(l, rng);
    let d = DMatrix::from_fn(l, l, |i, j| {
        if i == j {
            Complex64::new(margin + (1.0 - 2.0 * margin) * rng.gen::<f64>(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    CorrelationMatrix::new(&u * d * u.adjoint()).expect("conjugation preserves hermiticity")
}

/// Random pure correlation matrix of rank `n` on `l` modes.
pub fn random_pure_correlation(l: usize, n: usize, rng: &mut impl Rng) -> CorrelationMatrix {
    crate::gaussian::c_from_orbitals(&random_isometry(l, n, rng)).expect("isometry by construction")
}
