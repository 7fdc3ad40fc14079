// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Quantum-jump trajectory engine for Gaussianity-preserving dephasing.
//!
//! Each trajectory is a pure Slater determinant held as an [`OrbitalMatrix`]
//! and evolved with a first-order unraveling:
//!
//! * per step, every dissipative site `i` fires a jump with probability
//!   `p_i = gamma dt <n_i>` (the jump operator `sqrt(gamma) n_i` annihilates
//!   the empty sector, so only occupied-collapses occur);
//! * a step without jumps applies `exp(-i h_eff dt)` with
//!   `h_eff = h - i gamma/2 P_diss` (using `n_i^2 = n_i`), followed by QR
//!   re-orthonormalization.
//!
//! The correlation matrix is always derived from the orbitals, never evolved
//! directly, which keeps every snapshot an exact projector. Trajectory
//! `alpha` draws its randomness from stream `alpha` of a counter-based
//! generator seeded with the master seed, so ensembles are reproducible
//! bit-for-bit regardless of execution order or thread count.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CorrelationMatrix, ModeSubset, OrbitalMatrix};
use crate::lattice::{LatticeModel, ModelSummary};

pub use crate::oracle::JumpOutcome;

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Time grid and ensemble-size configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Integration step.
    pub dt: f64,
    /// Total evolution time.
    pub t_max: f64,
    /// Trajectory count.
    pub n_traj: usize,
    /// Steps between recorded snapshots.
    pub sample_stride: usize,
    /// Master seed; trajectory `alpha` uses stream `alpha`.
    pub master_seed: u64,
    /// Run trajectories on the thread pool (results are identical either way).
    pub parallel: bool,
}

impl ScheduleConfig {
    pub fn new(dt: f64, t_max: f64, n_traj: usize, sample_stride: usize, master_seed: u64) -> Self {
        Self { dt, t_max, n_traj, sample_stride, master_seed, parallel: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_max < self.dt {
            return Err(Error::Config(format!(
                "t_max ({}) must be at least dt ({})",
                self.t_max, self.dt
            )));
        }
        if self.n_traj == 0 {
            return Err(Error::Config("n_traj must be at least 1".into()));
        }
        if self.sample_stride == 0 {
            return Err(Error::Config("sample_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round().max(1.0) as usize
    }

    /// Step indices at which snapshots are recorded (always includes 0 and
    /// the final step).
    pub fn sample_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut steps: Vec<usize> = (0..=n).step_by(self.sample_stride).collect();
        if *steps.last().unwrap() != n {
            steps.push(n);
        }
        steps
    }

    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_steps().into_iter().map(|s| s as f64 * self.dt).collect()
    }
}

/// Product state with the given occupation pattern: one standard-basis
/// column per occupied mode, `C = diag(pattern)`.
pub fn initial_product_state(pattern: &[bool]) -> OrbitalMatrix {
    let m = pattern.len();
    let n = pattern.iter().filter(|&&b| b).count();
    let mut v = DMatrix::zeros(m, n);
    let mut col = 0;
    for (i, &occ) in pattern.iter().enumerate() {
        if occ {
            v[(i, col)] = c64(1.0, 0.0);
            col += 1;
        }
    }
    OrbitalMatrix::new_unchecked(v)
}

/// Maximally entangled S-A preparation: one orbital
/// `(e_{S_i} + e_{A_i})/sqrt(2)` per site pair, `B` left empty.
pub fn bell_pairs(model: &LatticeModel) -> Result<OrbitalMatrix> {
    let a = model
        .a_modes()
        .ok_or_else(|| Error::Config("bell-pair preparation needs a layout with an A chain".into()))?;
    let l = model.sites_per_chain();
    let m = model.total_modes();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = DMatrix::zeros(m, l);
    for i in 0..l {
        v[(i, i)] = c64(s, 0.0);
        v[(a.start + i, i)] = c64(s, 0.0);
    }
    Ok(OrbitalMatrix::new_unchecked(v))
}

/// Precomputed no-click propagator `exp(-i h_eff dt)`; non-unitary whenever
/// `gamma > 0`.
#[derive(Debug, Clone)]
pub struct Propagator {
    u: DMatrix<Complex64>,
    dt: f64,
}

impl Propagator {
    pub fn new(model: &LatticeModel, dt: f64) -> Self {
        let gdt = model.gamma() * dt;
        if gdt > 0.1 {
            log::warn!("gamma*dt = {gdt:.3} exceeds 0.1; the first-order jump scheme degrades");
        }
        let h = model.hamiltonian();
        let hnorm = (0..h.nrows())
            .map(|i| (0..h.ncols()).map(|j| h[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if hnorm * dt > 0.5 {
            log::warn!("|h|*dt = {:.3} is large; reduce dt", hnorm * dt);
        }
        let m = model.total_modes();
        let mut expo = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                expo[(i, j)] = c64(0.0, -dt * h[(i, j)]);
            }
        }
        for &s in model.dissipative_sites() {
            expo[(s, s)] += c64(-0.5 * model.gamma() * dt, 0.0);
        }
        Self { u: expo.exp(), dt }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.u
    }
}

/// Collapse the Slater determinant after a projective `n_site` outcome.
///
/// A Householder rotation concentrates all `site` amplitude into orbital 0;
/// the occupied outcome replaces that orbital by `e_site`, the empty outcome
/// removes its `site` component. Either way the result is re-orthonormalized
/// and satisfies `C_ii = 1` (or 0) with a decoupled row/column `i`.
pub fn jump_update(state: &mut OrbitalMatrix, site: usize, outcome: JumpOutcome) -> Result<()> {
    let m = state.modes();
    let n = state.particles();
    if site >= m {
        return Err(Error::Shape(format!("site {site} out of range for {m} modes")));
    }
    let occ = state.occupation(site);
    match outcome {
        JumpOutcome::Occupied if occ <= 1e-12 => {
            return Err(Error::ImpossibleOutcome(format!(
                "occupied outcome at site {site} has probability {occ:.3e}"
            )));
        }
        JumpOutcome::Empty if 1.0 - occ <= 1e-12 => {
            return Err(Error::ImpossibleOutcome(format!(
                "empty outcome at site {site} has probability {:.3e}",
                1.0 - occ
            )));
        }
        JumpOutcome::Empty if occ <= 1e-12 => {
            // Site already empty: the projection is the identity.
            return Ok(());
        }
        _ => {}
    }

    // Householder H (Hermitian, unitary) with H x = alpha e_0 for
    // x = conj(row_site)^T; applied on the right it rotates all site
    // amplitude into column 0.
    let v = state.entries_mut();
    let mut x = nalgebra::DVector::<Complex64>::zeros(n);
    for k in 0..n {
        x[k] = v[(site, k)].conj();
    }
    let xnorm = x.norm();
    let alpha = if x[0].norm() > 0.0 { -x[0] / x[0].norm() * xnorm } else { c64(-xnorm, 0.0) };
    let mut w = x;
    w[0] -= alpha;
    let wn = w.norm();
    if wn > 1e-14 {
        w /= c64(wn, 0.0);
        // V <- V (1 - 2 w w^dag)
        let proj = &*v * &w; // M x 1
        for r in 0..m {
            let f = proj[r] * 2.0;
            for k in 0..n {
                v[(r, k)] -= f * w[k].conj();
            }
        }
    }

    match outcome {
        JumpOutcome::Occupied => {
            for r in 0..m {
                v[(r, 0)] = c64(0.0, 0.0);
            }
            v[(site, 0)] = c64(1.0, 0.0);
            for k in 1..n {
                v[(site, k)] = c64(0.0, 0.0);
            }
        }
        JumpOutcome::Empty => {
            // Remove the site component of orbital 0 and renormalize it.
            v[(site, 0)] = c64(0.0, 0.0);
            let col_norm: f64 = (0..m).map(|r| v[(r, 0)].norm_sqr()).sum::<f64>().sqrt();
            if col_norm <= 1e-12 {
                return Err(Error::ImpossibleOutcome(format!(
                    "empty outcome at site {site} annihilates the state"
                )));
            }
            for r in 0..m {
                v[(r, 0)] /= col_norm;
            }
            for k in 1..n {
                v[(site, k)] = c64(0.0, 0.0);
            }
        }
    }
    state.renormalize()
}

/// One first-order step: per-site jump draws against the incoming
/// occupations, then either the fired collapses or the no-click evolution.
/// Returns the sites that jumped.
pub fn step(
    state: &mut OrbitalMatrix,
    model: &LatticeModel,
    prop: &Propagator,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let gdt = model.gamma() * prop.dt();
    let mut fired = Vec::new();
    // Fixed draw count per step keeps the stream aligned across outcomes.
    for &site in model.dissipative_sites() {
        let p = gdt * state.occupation(site);
        let u: f64 = rng.gen();
        if u < p {
            fired.push(site);
        }
    }
    if fired.is_empty() {
        let evolved = prop.matrix() * state.entries();
        *state.entries_mut() = evolved;
        state.renormalize()?;
    } else {
        for &site in &fired {
            // Simultaneous fires are O(dt^2) events; an earlier collapse can
            // empty a later site, in which case its jump no longer applies.
            if state.occupation(site) <= 1e-12 {
                continue;
            }
            jump_update(state, site, JumpOutcome::Occupied)?;
        }
    }
    Ok(fired)
}

/// Time-indexed collection of per-trajectory reduced correlation matrices.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub times: Vec<f64>,
    pub observe: ModeSubset,
    /// `snapshots[alpha][time_index]`, each reduced to `observe`.
    pub snapshots: Vec<Vec<CorrelationMatrix>>,
    /// Per-trajectory stream ids under the master seed.
    pub streams: Vec<u64>,
    pub model: ModelSummary,
    pub schedule: ScheduleConfig,
}

impl TrajectoryEnsemble {
    pub fn n_traj(&self) -> usize {
        self.snapshots.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Ensemble-averaged correlation matrix at one time index.
    pub fn mean_correlation(&self, t_index: usize) -> CorrelationMatrix {
        let dim = self.observe.len();
        let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
        for traj in &self.snapshots {
            acc += traj[t_index].entries();
        }
        acc /= c64(self.n_traj() as f64, 0.0);
        CorrelationMatrix::new(acc).expect("mean of Hermitian matrices is Hermitian")
    }

    /// Check purity and shape invariants on every snapshot.
    pub fn validate_invariants(&self, tol: f64) -> Result<()> {
        for (alpha, traj) in self.snapshots.iter().enumerate() {
            if traj.len() != self.times.len() {
                return Err(Error::Shape(format!(
                    "trajectory {alpha} has {} snapshots for {} times",
                    traj.len(),
                    self.times.len()
                )));
            }
            for (ti, c) in traj.iter().enumerate() {
                let perr = c.projector_error();
                if perr > tol {
                    return Err(Error::InvalidState(format!(
                        "snapshot (traj {alpha}, t index {ti}) projector error {perr:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn run_trajectory_inner(
    model: &LatticeModel,
    schedule: &ScheduleConfig,
    observe: &ModeSubset,
    initial: &OrbitalMatrix,
    prop: &Propagator,
    stream: u64,
) -> Result<Vec<CorrelationMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.master_seed);
    rng.set_stream(stream);
    let mut state = initial.clone();
    let sample_steps = schedule.sample_steps();
    let mut snapshots = Vec::with_capacity(sample_steps.len());
    let mut next_sample = 0usize;
    if sample_steps[next_sample] == 0 {
        snapshots.push(state.reduced_correlation(observe)?);
        next_sample += 1;
    }
    for s in 1..=schedule.n_steps() {
        step(&mut state, model, prop, &mut rng)?;
        if next_sample < sample_steps.len() && sample_steps[next_sample] == s {
            snapshots.push(state.reduced_correlation(observe)?);
            next_sample += 1;
        }
    }
    Ok(snapshots)
}

/// Deterministic single trajectory: snapshots reduced to `observe` at every
/// sample step. The same `(model, schedule, observe, initial, stream)`
/// always produces a bitwise-identical snapshot list.
pub fn run_trajectory(
    model: &LatticeModel,
    schedule: &ScheduleConfig,
    observe: &ModeSubset,
    initial: &OrbitalMatrix,
    stream: u64,
) -> Result<Vec<CorrelationMatrix>> {
    schedule.validate()?;
    let prop = Propagator::new(model, schedule.dt);
    run_trajectory_inner(model, schedule, observe, initial, &prop, stream)
}

/// Run the full ensemble; trajectory `alpha` uses stream `alpha`. The result
/// does not depend on execution order or the thread pool.
pub fn run_ensemble(
    model: &LatticeModel,
    schedule: &ScheduleConfig,
    observe: &ModeSubset,
    initial: &OrbitalMatrix,
) -> Result<TrajectoryEnsemble> {
    schedule.validate()?;
    if initial.modes() != model.total_modes() {
        return Err(Error::Shape(format!(
            "initial state has {} modes but the model has {}",
            initial.modes(),
            model.total_modes()
        )));
    }
    if let Some(&max) = observe.indices().last() {
        if max >= model.total_modes() {
            return Err(Error::Shape(format!(
                "observed mode {max} out of range for {} modes",
                model.total_modes()
            )));
        }
    }
    let prop = Propagator::new(model, schedule.dt);
    let streams: Vec<u64> = (0..schedule.n_traj as u64).collect();
    let snapshots: Vec<Vec<CorrelationMatrix>> = if schedule.parallel {
        streams
            .par_iter()
            .map(|&s| run_trajectory_inner(model, schedule, observe, initial, &prop, s))
            .collect::<Result<Vec<_>>>()?
    } else {
        streams
            .iter()
            .map(|&s| run_trajectory_inner(model, schedule, observe, initial, &prop, s))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(TrajectoryEnsemble {
        times: schedule.sample_times(),
        observe: observe.clone(),
        snapshots,
        streams,
        model: model.summary(),
        schedule: schedule.clone(),
    })
}

/// `Tr(h C)` on the observed modes; conserved under closed evolution.
pub fn energy(model: &LatticeModel, c: &CorrelationMatrix) -> f64 {
    let h = model.hamiltonian();
    let mut acc = 0.0;
    for n in 0..c.dim() {
        for m in 0..c.dim() {
            acc += h[(n, m)] * c.entries()[(m, n)].re;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian;
    use crate::lattice::{build_model, ChainLayout, ModelParams};
    use crate::linalg;
    use crate::oracle;
    use crate::samples;

    fn all_modes(model: &LatticeModel) -> ModeSubset {
        ModeSubset::range(0..model.total_modes())
    }

    #[test]
    fn product_state_patterns() {
        let v = initial_product_state(&[true, false]);
        let c = gaussian::c_from_orbitals(&v).unwrap();
        assert!((c.entries()[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!(c.entries()[(1, 1)].norm() < 1e-14);

        let neel = initial_product_state(&[true, false, true, false]);
        let c = gaussian::c_from_orbitals(&neel).unwrap();
        for i in 0..4 {
            assert!((c.entries()[(i, i)].re - if i % 2 == 0 { 1.0 } else { 0.0 }).abs() < 1e-14);
        }

        let anti = initial_product_state(&[false, true, false, true]);
        let ca = gaussian::c_from_orbitals(&anti).unwrap();
        assert_eq!(gaussian::overlap_c(&c, &ca).unwrap(), 0.0);
    }

    #[test]
    fn bell_pairs_block_and_marginal() {
        let model = build_model(ModelParams::coupled(1, ChainLayout::SAB, 1.0, 1.0, 1.0)).unwrap();
        let v = bell_pairs(&model).unwrap();
        let c = gaussian::c_from_orbitals(&v).unwrap();
        // Dense construction of (|10> + |01>)/sqrt(2) on the S-A pair.
        let dense = oracle::DenseState::from_pure(&oracle::dense_from_orbitals(&v).unwrap());
        let ops = oracle::build_fock_operators(3).unwrap();
        let c_dense = oracle::c_from_dense(&dense, &ops).unwrap();
        assert!(linalg::max_abs(&(c.entries() - c_dense.entries())) < 1e-10);
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((c.entries()[(i, j)] - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        }
        // Marginal on S is maximally mixed.
        let red = gaussian::reduce(&c, &ModeSubset::new(vec![0]).unwrap()).unwrap();
        assert!((red.entries()[(0, 0)].re - 0.5).abs() < 1e-12);

        // Purity of the S marginal of two pairs is 2^-2.
        let model2 = build_model(ModelParams::coupled(2, ChainLayout::SAB, 1.0, 1.0, 1.0)).unwrap();
        let v2 = bell_pairs(&model2).unwrap();
        let c2 = gaussian::c_from_orbitals(&v2).unwrap();
        let s2 = gaussian::reduce(&c2, &ModeSubset::new(vec![0, 1]).unwrap()).unwrap();
        assert!((gaussian::overlap_c(&s2, &s2).unwrap() - 0.25).abs() < 1e-12);

        let no_a = build_model(ModelParams::coupled(1, ChainLayout::SB, 1.0, 1.0, 1.0)).unwrap();
        assert!(matches!(bell_pairs(&no_a), Err(Error::Config(_))));
    }

    #[test]
    fn closed_step_is_unitary() {
        let model = build_model(ModelParams::coupled(2, ChainLayout::SB, 1.0, 1.0, 0.0)).unwrap();
        let prop = Propagator::new(&model, 0.02);
        // gamma = 0: propagator is unitary.
        let u = prop.matrix();
        let id = DMatrix::<Complex64>::identity(4, 4);
        assert!(linalg::max_abs(&(u.adjoint() * u - id)) < 1e-12);

        let mut state = initial_product_state(&[true, false, false, false]);
        let c0 = gaussian::c_from_orbitals(&state).unwrap();
        let mut ev0 = linalg::hermitian_eigenvalues(c0.entries());
        ev0.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            step(&mut state, &model, &prop, &mut rng).unwrap();
        }
        let c1 = gaussian::c_from_orbitals(&state).unwrap();
        let mut ev1 = linalg::hermitian_eigenvalues(c1.entries());
        ev1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ev0.iter().zip(&ev1) {
            assert!((a - b).abs() < 1e-10, "spectrum must be preserved");
        }
        assert!(state.isometry_error() < 1e-10);
    }

    #[test]
    fn diagonal_state_is_fixed_point_of_pure_dephasing() {
        // h = 0, diagonal C: jumps collapse onto the already-occupied site.
        let model = build_model(ModelParams::markovian_control(2, 0.0, 1.0)).unwrap();
        let prop = Propagator::new(&model, 0.05);
        let mut state = initial_product_state(&[true, false]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            step(&mut state, &model, &prop, &mut rng).unwrap();
            let c = gaussian::c_from_orbitals(&state).unwrap();
            assert!((c.entries()[(0, 0)].re - 1.0).abs() < 1e-10);
            assert!(c.entries()[(1, 1)].norm() < 1e-10);
            assert!(c.entries()[(0, 1)].norm() < 1e-10);
        }
    }

    #[test]
    fn jump_update_examples() {
        // One particle spread over two modes.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = DMatrix::from_column_slice(2, 1, &[c64(s, 0.0), c64(s, 0.0)]);
        let mut st = OrbitalMatrix::new(v.clone()).unwrap();
        jump_update(&mut st, 0, JumpOutcome::Occupied).unwrap();
        let c = gaussian::c_from_orbitals(&st).unwrap();
        assert!((c.entries()[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(c.entries()[(1, 1)].norm() < 1e-12);

        let mut st = OrbitalMatrix::new(v).unwrap();
        jump_update(&mut st, 0, JumpOutcome::Empty).unwrap();
        let c = gaussian::c_from_orbitals(&st).unwrap();
        assert!(c.entries()[(0, 0)].norm() < 1e-12);
        assert!((c.entries()[(1, 1)].re - 1.0).abs() < 1e-12);

        // Zero-probability outcome.
        let mut st = initial_product_state(&[true, false]);
        assert!(matches!(
            jump_update(&mut st, 1, JumpOutcome::Occupied),
            Err(Error::ImpossibleOutcome(_))
        ));
    }

    #[test]
    fn jump_update_matches_dense_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        while checked < 40 {
            let v = samples::random_isometry(4, 2, &mut rng);
            let site = (rng.gen::<u64>() % 4) as usize;
            let occ = v.occupation(site);
            for outcome in [JumpOutcome::Occupied, JumpOutcome::Empty] {
                let p = match outcome {
                    JumpOutcome::Occupied => occ,
                    JumpOutcome::Empty => 1.0 - occ,
                };
                if p < 1e-6 {
                    continue;
                }
                let mut st = v.clone();
                jump_update(&mut st, site, outcome).unwrap();
                let c_traj = gaussian::c_from_orbitals(&st).unwrap();

                let psi = oracle::dense_from_orbitals(&v).unwrap();
                let post = oracle::projective_jump_dense(&psi, site, outcome).unwrap();
                let ops = oracle::build_fock_operators(4).unwrap();
                let c_dense =
                    oracle::c_from_dense(&oracle::DenseState::from_pure(&post), &ops).unwrap();
                assert!(
                    linalg::max_abs(&(c_traj.entries() - c_dense.entries())) < 1e-10,
                    "site {site}, outcome {outcome:?}"
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn trajectory_conserves_energy_and_number() {
        let model = build_model(ModelParams::coupled(2, ChainLayout::SB, 1.0, 1.0, 0.0)).unwrap();
        let schedule = ScheduleConfig::new(0.02, 3.0, 1, 5, 42);
        let initial = initial_product_state(&[true, false, false, true]);
        let snaps =
            run_trajectory(&model, &schedule, &all_modes(&model), &initial, 0).unwrap();
        let e0 = energy(&model, &snaps[0]);
        for c in &snaps {
            assert!((energy(&model, c) - e0).abs() < 1e-8, "energy drift");
            assert!((c.trace() - 2.0).abs() < 1e-8, "number drift");
            assert!(c.projector_error() < 1e-8);
        }

        // With dissipation the particle number is still conserved.
        let model = build_model(ModelParams::coupled(2, ChainLayout::SB, 1.0, 1.0, 1.0)).unwrap();
        let snaps =
            run_trajectory(&model, &schedule, &all_modes(&model), &initial, 7).unwrap();
        for c in &snaps {
            assert!((c.trace() - 2.0).abs() < 1e-8);
            assert!(c.projector_error() < 1e-8);
        }
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let model = build_model(ModelParams::coupled(2, ChainLayout::SB, 1.0, 1.0, 1.0)).unwrap();
        let schedule = ScheduleConfig::new(0.02, 2.0, 1, 10, 1234);
        let initial = initial_product_state(&[true, false, false, false]);
        let a = run_trajectory(&model, &schedule, &all_modes(&model), &initial, 3).unwrap();
        let b = run_trajectory(&model, &schedule, &all_modes(&model), &initial, 3).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.entries().iter().zip(y.entries().iter()) {
                assert_eq!(u.re.to_bits(), v.re.to_bits());
                assert_eq!(u.im.to_bits(), v.im.to_bits());
            }
        }
    }

    #[test]
    fn ensemble_is_thread_invariant_and_matches_single_runs() {
        let model = build_model(ModelParams::coupled(1, ChainLayout::SB, 1.0, 1.0, 1.0)).unwrap();
        let mut schedule = ScheduleConfig::new(0.02, 1.0, 8, 10, 99);
        let initial = initial_product_state(&[true, false]);
        let obs = all_modes(&model);
        let par = run_ensemble(&model, &schedule, &obs, &initial).unwrap();
        schedule.parallel = false;
        let ser = run_ensemble(&model, &schedule, &obs, &initial).unwrap();
        assert_eq!(par.n_traj(), 8);
        for (a, b) in par.snapshots.iter().zip(&ser.snapshots) {
            for (x, y) in a.iter().zip(b) {
                for (u, v) in x.entries().iter().zip(y.entries().iter()) {
                    assert_eq!(u.re.to_bits(), v.re.to_bits());
                    assert_eq!(u.im.to_bits(), v.im.to_bits());
                }
            }
        }
        // n_traj = 1 equals a bare run_trajectory.
        let mut one = schedule.clone();
        one.n_traj = 1;
        let ens1 = run_ensemble(&model, &one, &obs, &initial).unwrap();
        let direct = run_trajectory(&model, &one, &obs, &initial, 0).unwrap();
        for (x, y) in ens1.snapshots[0].iter().zip(&direct) {
            assert_eq!(x.entries(), y.entries());
        }
        ens1.validate_invariants(1e-8).unwrap();
    }

    #[test]
    fn jump_statistics_match_rate() {
        // 1e5 single-step samples at fixed C: empirical frequency at each
        // dissipative site within 5 sigma of gamma dt <n_i>.
        let model = build_model(ModelParams::coupled(1, ChainLayout::SB, 1.0, 1.0, 1.0)).unwrap();
        let dt = 0.02;
        let prop = Propagator::new(&model, dt);
        let a = 0.7f64.sqrt();
        let b = 0.3f64.sqrt();
        let v = DMatrix::from_column_slice(2, 1, &[c64(a, 0.0), c64(b, 0.0)]);
        let initial = OrbitalMatrix::new(v).unwrap();
        let p_expect = 1.0 * dt * 0.3; // site 1 is dissipative, <n_1> = 0.3
        let n = 100_000u64;
        let mut fired = 0u64;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..n {
            rng.set_stream(trial);
            let mut st = initial.clone();
            let jumped = step(&mut st, &model, &prop, &mut rng).unwrap();
            if jumped.contains(&1) {
                fired += 1;
            }
        }
        let freq = fired as f64 / n as f64;
        let sigma = (p_expect * (1.0 - p_expect) / n as f64).sqrt();
        assert!(
            (freq - p_expect).abs() < 5.0 * sigma,
            "frequency {freq} vs expected {p_expect} (sigma {sigma})"
        );
    }

    #[test]
    fn ensemble_average_approaches_lindblad() {
        // Binomial-error tolerance 4/sqrt(N); the acceptance suite adds the
        // dt-halving consistency check on top.
        let model = build_model(ModelParams::coupled(1, ChainLayout::SB, 1.0, 1.0, 1.0)).unwrap();
        let n_traj = 2000;
        let schedule = ScheduleConfig::new(0.02, 1.0, n_traj, 10, 5);
        let initial = initial_product_state(&[true, false]);
        let obs = all_modes(&model);
        let ens = run_ensemble(&model, &schedule, &obs, &initial).unwrap();

        let rho0 = oracle::DenseState::from_pure(&oracle::PureState::fock(&[true, false]));
        let dense = oracle::evolve_lindblad(&rho0, &model, 0.02, 1.0, 10).unwrap();
        let ops = oracle::build_fock_operators(2).unwrap();
        let tol = 4.0 / (n_traj as f64).sqrt();
        for (ti, (t, rho)) in dense.iter().enumerate() {
            let c_exact = oracle::c_from_dense(rho, &ops).unwrap();
            let c_mean = ens.mean_correlation(ti);
            let dev = linalg::max_abs(&(c_mean.entries() - c_exact.entries()));
            assert!(dev < tol, "t = {t}: deviation {dev} vs tolerance {tol}");
        }
    }
}
