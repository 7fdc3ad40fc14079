// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense Fock-space reference implementation.
//!
//! Everything here works on the full 2^M-dimensional Hilbert space and is
//! used to validate the correlation-matrix pipelines at small mode counts,
//! and as the exponential-cost baseline in the benchmark harness.
//!
//! Jordan-Wigner convention: mode `n` owns bit `n` of the basis index, modes
//! are ordered chain-major (all of `S`, then `A`, then `B`), and
//! `c_n |k> = (-1)^(number of occupied modes below n) |k - 2^n>`. Sign
//! strings depend on this ordering; keeping `B` on the highest bits makes the
//! naive bit-wise partial trace over `B` exact for the number-conserving
//! states evolved here.
//!
//! The Lindblad right-hand side applies the Hamiltonian through its sparse
//! Fock-space structure (a hopping Hamiltonian has O(M) entries per column),
//! so one step costs O(4^M * M) while the state itself stays dense. The
//! integrator is fixed-step RK4 with a step-halving accuracy check on the
//! first step; it runs single-threaded by contract since it doubles as the
//! benchmark baseline.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gaussian::{CorrelationMatrix, ModeSubset, OrbitalMatrix};
use crate::lattice::LatticeModel;
use crate::linalg;

/// Hard cap on dense operator construction (memory guard).
pub const MAX_DENSE_MODES: usize = 14;
/// Hard cap on density-matrix evolution (needs several 4^M buffers).
pub const MAX_EVOLVE_MODES: usize = 12;

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Density-matrix form of a dense state.
#[derive(Debug, Clone)]
pub struct DenseState {
    modes: usize,
    rho: DMatrix<Complex64>,
}

impl DenseState {
    pub fn new(modes: usize, rho: DMatrix<Complex64>) -> Result<Self> {
        let dim = 1usize << modes;
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::Shape(format!(
                "density matrix must be {dim}x{dim} for {modes} modes, got {}x{}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        Ok(Self { modes, rho })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let rho = DMatrix::from_fn(psi.dim(), psi.dim(), |i, j| psi.amp[i] * psi.amp[j].conj());
        Self { modes: psi.modes, rho }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn rho(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// Tr rho^2; for Hermitian rho this is the squared Frobenius norm.
    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Hermiticity, unit trace and positivity (within -1e-9) checks.
    pub fn validate(&self) -> Result<()> {
        let herm = linalg::hermiticity_error(&self.rho);
        if herm > 1e-10 {
            return Err(Error::InvalidState(format!("density matrix hermiticity {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidState(format!("density matrix trace {tr}")));
        }
        let min_ev = linalg::hermitian_eigenvalues(&self.rho)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_ev < -1e-9 {
            return Err(Error::InvalidState(format!("density matrix eigenvalue {min_ev:.3e}")));
        }
        Ok(())
    }
}

/// Wavefunction form of a dense pure state.
#[derive(Debug, Clone)]
pub struct PureState {
    modes: usize,
    amp: DVector<Complex64>,
}

impl PureState {
    pub fn new(modes: usize, amp: DVector<Complex64>) -> Result<Self> {
        if amp.len() != 1usize << modes {
            return Err(Error::Shape(format!(
                "state vector must have 2^{modes} amplitudes, got {}",
                amp.len()
            )));
        }
        Ok(Self { modes, amp })
    }

    /// The Fock basis state with the given occupation pattern.
    pub fn fock(pattern: &[bool]) -> Self {
        let modes = pattern.len();
        let mut idx = 0usize;
        for (n, &occ) in pattern.iter().enumerate() {
            if occ {
                idx |= 1 << n;
            }
        }
        let mut amp = DVector::zeros(1 << modes);
        amp[idx] = c64(1.0, 0.0);
        Self { modes, amp }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        self.amp.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amp
    }

    pub fn norm(&self) -> f64 {
        self.amp.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Dense matrices for `c_n`, `c^dag_n` and `n_n` on every mode.
pub struct FockOperatorSet {
    modes: usize,
    pub c: Vec<DMatrix<Complex64>>,
    pub cdag: Vec<DMatrix<Complex64>>,
    pub number: Vec<DMatrix<Complex64>>,
}

fn jw_sign(k: usize, below: usize) -> f64 {
    if (k & ((1usize << below) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Build the dense annihilation/creation/number operators on `m` modes.
pub fn build_fock_operators(m: usize) -> Result<FockOperatorSet> {
    if m > MAX_DENSE_MODES {
        return Err(Error::Resource(format!(
            "dense operators on {m} modes exceed the {MAX_DENSE_MODES}-mode memory guard"
        )));
    }
    let dim = 1usize << m;
    let mut c_ops = Vec::with_capacity(m);
    let mut cdag_ops = Vec::with_capacity(m);
    let mut n_ops = Vec::with_capacity(m);
    for n in 0..m {
        let mut c = DMatrix::zeros(dim, dim);
        let mut num = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            if k & (1 << n) != 0 {
                c[(k ^ (1 << n), k)] = c64(jw_sign(k, n), 0.0);
                num[(k, k)] = c64(1.0, 0.0);
            }
        }
        cdag_ops.push(c.adjoint());
        c_ops.push(c);
        n_ops.push(num);
    }
    Ok(FockOperatorSet { modes: m, c: c_ops, cdag: cdag_ops, number: n_ops })
}

impl FockOperatorSet {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        1 << self.modes
    }
}

/// Assemble the quadratic Hamiltonian `sum h[n][m] c^dag_n c_m` as a dense
/// Fock-space matrix. Validation-scale only.
pub fn hamiltonian_dense(h: &DMatrix<f64>, ops: &FockOperatorSet) -> DMatrix<Complex64> {
    let dim = ops.dim();
    let mut out = DMatrix::zeros(dim, dim);
    for n in 0..ops.modes {
        for m in 0..ops.modes {
            if h[(n, m)] != 0.0 {
                out += (&ops.cdag[n] * &ops.c[m]) * c64(h[(n, m)], 0.0);
            }
        }
    }
    out
}

/// Hopping Hamiltonian in sparse Fock-space form, grouped by column.
struct SparseHamiltonian {
    cols: Vec<Vec<(u32, f64)>>,
}

fn build_sparse_hamiltonian(h: &DMatrix<f64>, modes: usize) -> SparseHamiltonian {
    let dim = 1usize << modes;
    let mut cols = vec![Vec::new(); dim];
    let mut pairs = Vec::new();
    for n in 0..modes {
        for m in 0..modes {
            if h[(n, m)] != 0.0 {
                pairs.push((n, m, h[(n, m)]));
            }
        }
    }
    for k in 0..dim {
        for &(n, m, amp) in &pairs {
            if n == m {
                if k & (1 << n) != 0 {
                    cols[k].push((k as u32, amp));
                }
            } else if k & (1 << m) != 0 && k & (1 << n) == 0 {
                let k1 = k ^ (1 << m);
                let sign = jw_sign(k, m) * jw_sign(k1, n);
                cols[k].push(((k1 ^ (1 << n)) as u32, amp * sign));
            }
        }
    }
    SparseHamiltonian { cols }
}

/// Lindblad generator with dephasing jump operators `sqrt(gamma) n_i`.
struct LindbladEngine {
    dim: usize,
    gamma: f64,
    diss_mask: u64,
    h: SparseHamiltonian,
}

impl LindbladEngine {
    fn new(model: &LatticeModel) -> Self {
        let modes = model.total_modes();
        let mut diss_mask = 0u64;
        for &s in model.dissipative_sites() {
            diss_mask |= 1 << s;
        }
        Self {
            dim: 1usize << modes,
            gamma: model.gamma(),
            diss_mask,
            h: build_sparse_hamiltonian(model.hamiltonian(), modes),
        }
    }

    /// out = -i[H, rho] + gamma * sum_i (n_i rho n_i - {n_i, rho}/2).
    ///
    /// With diagonal jump operators the dissipator is elementwise:
    /// the (k, l) entry decays at rate gamma/2 times the number of
    /// dissipative modes whose occupation differs between k and l.
    fn rhs(&self, rho: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let d = self.dim;
        let rs = rho.as_slice();
        let os = out.as_mut_slice();
        os.fill(c64(0.0, 0.0));
        let half_gamma = 0.5 * self.gamma;
        for j in 0..d {
            let col = j * d;
            // -i H rho
            for (c, entries) in self.h.cols.iter().enumerate() {
                if entries.is_empty() {
                    continue;
                }
                let v = rs[col + c];
                let miv = c64(v.im, -v.re);
                for &(r, amp) in entries {
                    os[col + r as usize] += miv * amp;
                }
            }
            // +i rho H
            for &(c, amp) in &self.h.cols[j] {
                let src = (c as usize) * d;
                for i in 0..d {
                    let v = rs[src + i];
                    os[col + i] += c64(-v.im * amp, v.re * amp);
                }
            }
            // dephasing
            if half_gamma != 0.0 && self.diss_mask != 0 {
                for i in 0..d {
                    let n = (((i as u64) ^ (j as u64)) & self.diss_mask).count_ones();
                    if n != 0 {
                        os[col + i] -= rs[col + i] * (half_gamma * n as f64);
                    }
                }
            }
        }
    }

    fn rk4_step(
        &self,
        rho: &mut DMatrix<Complex64>,
        dt: f64,
        k: &mut DMatrix<Complex64>,
        stage: &mut DMatrix<Complex64>,
        acc: &mut DMatrix<Complex64>,
    ) {
        fn lincomb(
            out: &mut DMatrix<Complex64>,
            a: &DMatrix<Complex64>,
            b: &DMatrix<Complex64>,
            s: f64,
        ) {
            let (o, aa, bb) = (out.as_mut_slice(), a.as_slice(), b.as_slice());
            for i in 0..o.len() {
                o[i] = aa[i] + bb[i] * s;
            }
        }
        fn add_scaled(out: &mut DMatrix<Complex64>, b: &DMatrix<Complex64>, s: f64) {
            let (o, bb) = (out.as_mut_slice(), b.as_slice());
            for i in 0..o.len() {
                o[i] += bb[i] * s;
            }
        }
        self.rhs(rho, k);
        lincomb(acc, rho, k, dt / 6.0);
        lincomb(stage, rho, k, dt / 2.0);
        self.rhs(&stage.clone(), k);
        add_scaled(acc, k, dt / 3.0);
        lincomb(stage, rho, k, dt / 2.0);
        self.rhs(&stage.clone(), k);
        add_scaled(acc, k, dt / 3.0);
        lincomb(stage, rho, k, dt);
        self.rhs(&stage.clone(), k);
        add_scaled(acc, k, dt / 6.0);
        std::mem::swap(rho, acc);
    }
}

fn halving_error(
    engine: &LindbladEngine,
    rho: &DMatrix<Complex64>,
    dt: f64,
    k: &mut DMatrix<Complex64>,
    stage: &mut DMatrix<Complex64>,
    acc: &mut DMatrix<Complex64>,
) -> f64 {
    let mut full = rho.clone();
    engine.rk4_step(&mut full, dt, k, stage, acc);
    let mut halved = rho.clone();
    engine.rk4_step(&mut halved, dt / 2.0, k, stage, acc);
    engine.rk4_step(&mut halved, dt / 2.0, k, stage, acc);
    linalg::max_abs(&(full - halved))
}

/// Largest step `dt0 / 2^k` (k <= `max_halvings`) that passes the RK4
/// step-halving accuracy check for this model and initial state.
pub fn stable_dt(
    rho0: &DenseState,
    model: &LatticeModel,
    dt0: f64,
    max_halvings: usize,
) -> Result<f64> {
    if model.total_modes() != rho0.modes() {
        return Err(Error::Shape(format!(
            "state has {} modes but the model has {}",
            rho0.modes(),
            model.total_modes()
        )));
    }
    let engine = LindbladEngine::new(model);
    let d = engine.dim;
    let mut k = DMatrix::zeros(d, d);
    let mut stage = DMatrix::zeros(d, d);
    let mut acc = DMatrix::zeros(d, d);
    let mut dt = dt0;
    for _ in 0..=max_halvings {
        if halving_error(&engine, rho0.rho(), dt, &mut k, &mut stage, &mut acc) <= 1e-8 {
            return Ok(dt);
        }
        dt /= 2.0;
    }
    Err(Error::Numerical(format!(
        "no stable RK4 step found between {dt0} and {dt}"
    )))
}

/// Fixed-step RK4 integration of the Lindblad master equation, streaming the
/// sampled density matrices into `observe(step_index, t, rho)`.
///
/// Samples land on every `sample_stride`-th step plus the final one. The
/// first step is integrated once at `dt` and twice at `dt/2`; a mismatch
/// above 1e-8 aborts with an integration-failure error, as does trace drift
/// beyond 1e-6 at any sample.
pub fn evolve_lindblad_observed(
    rho0: &DenseState,
    model: &LatticeModel,
    dt: f64,
    t_max: f64,
    sample_stride: usize,
    mut observe: impl FnMut(usize, f64, &DMatrix<Complex64>) -> Result<()>,
) -> Result<()> {
    if model.total_modes() != rho0.modes() {
        return Err(Error::Shape(format!(
            "state has {} modes but the model has {}",
            rho0.modes(),
            model.total_modes()
        )));
    }
    if rho0.modes() > MAX_EVOLVE_MODES {
        return Err(Error::Resource(format!(
            "dense evolution on {} modes exceeds the {MAX_EVOLVE_MODES}-mode guard",
            rho0.modes()
        )));
    }
    if dt <= 0.0 || t_max < dt {
        return Err(Error::Config(format!("bad time grid: dt = {dt}, t_max = {t_max}")));
    }
    let stride = sample_stride.max(1);
    let engine = LindbladEngine::new(model);
    let n_steps = (t_max / dt).round() as usize;
    let d = engine.dim;

    let mut rho = rho0.rho().clone();
    let mut k = DMatrix::zeros(d, d);
    let mut stage = DMatrix::zeros(d, d);
    let mut acc = DMatrix::zeros(d, d);

    // Step-halving accuracy check on the first step.
    {
        let err = halving_error(&engine, &rho, dt, &mut k, &mut stage, &mut acc);
        if err > 1e-8 {
            return Err(Error::Numerical(format!(
                "RK4 step-halving check failed: local error {err:.3e} > 1e-8; reduce dt"
            )));
        }
    }

    let mut emit = |step: usize, rho: &mut DMatrix<Complex64>| -> Result<()> {
        linalg::hermitize(rho);
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-6 || tr.im.abs() > 1e-6 {
            return Err(Error::Numerical(format!(
                "trace drifted to {tr} after {step} steps; integration failed"
            )));
        }
        observe(step, step as f64 * dt, rho)
    };

    emit(0, &mut rho)?;
    for step in 1..=n_steps {
        engine.rk4_step(&mut rho, dt, &mut k, &mut stage, &mut acc);
        if step % stride == 0 || step == n_steps {
            emit(step, &mut rho)?;
        }
    }
    Ok(())
}

/// Storing variant of [`evolve_lindblad_observed`].
pub fn evolve_lindblad(
    rho0: &DenseState,
    model: &LatticeModel,
    dt: f64,
    t_max: f64,
    sample_stride: usize,
) -> Result<Vec<(f64, DenseState)>> {
    let modes = rho0.modes();
    let mut out = Vec::new();
    evolve_lindblad_observed(rho0, model, dt, t_max, sample_stride, |_, t, rho| {
        out.push((t, DenseState::new(modes, rho.clone())?));
        Ok(())
    })?;
    Ok(out)
}

/// Trace distance `d_1 = 1/2 sum |eig(rho - sigma)|`.
pub fn trace_distance(a: &DenseState, b: &DenseState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    let diff = a.rho() - b.rho();
    Ok(0.5 * linalg::hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>())
}

/// Hilbert-Schmidt distance `d_2 = sqrt(Tr (rho - sigma)^2 / 2)`.
pub fn hs_distance_dense(a: &DenseState, b: &DenseState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    let mut acc = 0.0;
    for (x, y) in a.rho().iter().zip(b.rho().iter()) {
        acc += (x - y).norm_sqr();
    }
    Ok((0.5 * acc).sqrt())
}

fn scatter_bits(compact: usize, positions: &[usize]) -> usize {
    let mut out = 0usize;
    for (i, &p) in positions.iter().enumerate() {
        if compact & (1 << i) != 0 {
            out |= 1 << p;
        }
    }
    out
}

/// Partial trace keeping the given modes.
///
/// This is the naive bit-wise reduction. It equals the fermionic reduced
/// state when no traced mode sits between two kept ones (Jordan-Wigner
/// strings of even operators on the kept block then cancel on everything
/// below it). The chain-major layout keeps all uses here contiguous: `S`,
/// `S+A`, and `A` out of `S+A`.
pub fn partial_trace(state: &DenseState, keep: &ModeSubset) -> Result<DenseState> {
    let m = state.modes();
    if keep.indices().iter().any(|&i| i >= m) {
        return Err(Error::Shape(format!("kept mode out of range for {m} modes")));
    }
    let kept: Vec<usize> = keep.indices().to_vec();
    let env: Vec<usize> = (0..m).filter(|i| !keep.contains(*i)).collect();
    let dk = 1usize << kept.len();
    let de = 1usize << env.len();
    let mut out = DMatrix::zeros(dk, dk);
    for ka in 0..dk {
        let ra = scatter_bits(ka, &kept);
        for kb in 0..dk {
            let rb = scatter_bits(kb, &kept);
            let mut acc = c64(0.0, 0.0);
            for e in 0..de {
                let re = scatter_bits(e, &env);
                acc += state.rho()[(ra | re, rb | re)];
            }
            out[(ka, kb)] = acc;
        }
    }
    DenseState::new(kept.len(), out)
}

fn vn_entropy(rho: &DMatrix<Complex64>) -> f64 {
    linalg::hermitian_eigenvalues(rho)
        .into_iter()
        .filter(|&p| p > 1e-14)
        .map(|p| -p * p.ln())
        .sum()
}

/// Von Neumann mutual information `I(S:A)` of a bipartite state, with the
/// `S` part given as a mode subset of the full register.
pub fn vn_mutual_info(rho_sa: &DenseState, split: &ModeSubset) -> Result<f64> {
    let m = rho_sa.modes();
    if split.indices().iter().any(|&i| i >= m) {
        return Err(Error::Shape(format!("split index out of range for {m} modes")));
    }
    let other = ModeSubset::new((0..m).filter(|i| !split.contains(*i)).collect())?;
    let rho_s = partial_trace(rho_sa, split)?;
    let rho_a = partial_trace(rho_sa, &other)?;
    Ok(vn_entropy(rho_s.rho()) + vn_entropy(rho_a.rho()) - vn_entropy(rho_sa.rho()))
}

/// Correlation matrix `C[n][m] = Tr(rho c^dag_n c_m)` from a dense state.
pub fn c_from_dense(state: &DenseState, ops: &FockOperatorSet) -> Result<CorrelationMatrix> {
    if state.modes() != ops.modes() {
        return Err(Error::Shape(format!(
            "state has {} modes but operators have {}",
            state.modes(),
            ops.modes()
        )));
    }
    let m = ops.modes();
    let mut c = DMatrix::zeros(m, m);
    for n in 0..m {
        for mm in 0..m {
            let op = &ops.cdag[n] * &ops.c[mm];
            // Tr(rho P) = sum_ij rho[i, j] P[j, i]
            let mut acc = c64(0.0, 0.0);
            for i in 0..state.dim() {
                for j in 0..state.dim() {
                    acc += state.rho()[(i, j)] * op[(j, i)];
                }
            }
            c[(n, mm)] = acc;
        }
    }
    CorrelationMatrix::new(c)
}

/// Jump outcome selector shared with the trajectory engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpOutcome {
    Occupied,
    Empty,
}

/// Projective measurement of `n_site` on a pure state:
/// `n |psi> / ||.||` or `(1 - n) |psi> / ||.||`.
pub fn projective_jump_dense(
    psi: &PureState,
    site: usize,
    outcome: JumpOutcome,
) -> Result<PureState> {
    if site >= psi.modes() {
        return Err(Error::Shape(format!("site {site} out of range for {} modes", psi.modes())));
    }
    let mask = 1usize << site;
    let mut amp = psi.amplitudes().clone();
    for (k, a) in amp.iter_mut().enumerate() {
        let keep = match outcome {
            JumpOutcome::Occupied => k & mask != 0,
            JumpOutcome::Empty => k & mask == 0,
        };
        if !keep {
            *a = c64(0.0, 0.0);
        }
    }
    let norm_sq: f64 = amp.iter().map(|z| z.norm_sqr()).sum();
    if norm_sq <= 1e-12 {
        return Err(Error::ImpossibleOutcome(format!(
            "outcome {outcome:?} at site {site} has probability {norm_sq:.3e}"
        )));
    }
    let norm = norm_sq.sqrt();
    for a in amp.iter_mut() {
        *a /= norm;
    }
    PureState::new(psi.modes(), amp)
}

/// Dense wavefunction of the Slater determinant described by an orbital
/// matrix: apply `sum_n V[n][k] c^dag_n` for each occupied orbital to the
/// vacuum.
pub fn dense_from_orbitals(v: &OrbitalMatrix) -> Result<PureState> {
    let m = v.modes();
    if m > MAX_DENSE_MODES {
        return Err(Error::Resource(format!(
            "dense state on {m} modes exceeds the {MAX_DENSE_MODES}-mode guard"
        )));
    }
    let dim = 1usize << m;
    let mut amp = DVector::<Complex64>::zeros(dim);
    amp[0] = c64(1.0, 0.0);
    let mut next = DVector::<Complex64>::zeros(dim);
    for orb in 0..v.particles() {
        next.fill(c64(0.0, 0.0));
        for n in 0..m {
            let coeff = v.entries()[(n, orb)];
            if coeff.norm_sqr() == 0.0 {
                continue;
            }
            for k in 0..dim {
                if k & (1 << n) == 0 {
                    let a = amp[k];
                    if a.re != 0.0 || a.im != 0.0 {
                        next[k | (1 << n)] += coeff * a * jw_sign(k, n);
                    }
                }
            }
        }
        std::mem::swap(&mut amp, &mut next);
    }
    let mut psi = PureState::new(m, amp)?;
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidState(format!(
            "orbital matrix produced a state of norm {norm}; not an isometry?"
        )));
    }
    for a in psi.amp.iter_mut() {
        *a /= norm;
    }
    Ok(psi)
}

/// Exact `d_2(t)` between two Lindblad evolutions started from occupation
/// patterns, reduced to the `S` chain, on the same sample grid the
/// trajectory engine uses.
pub fn d2_series_dense(
    model: &LatticeModel,
    pattern_p: &[bool],
    pattern_q: &[bool],
    dt: f64,
    t_max: f64,
    sample_stride: usize,
) -> Result<crate::measures::DistanceSeries> {
    let keep = ModeSubset::range(model.s_modes());
    let mut times = Vec::new();
    let mut reduced: [Vec<DMatrix<Complex64>>; 2] = [Vec::new(), Vec::new()];
    for (slot, pattern) in [(0usize, pattern_p), (1usize, pattern_q)] {
        let rho0 = DenseState::from_pure(&PureState::fock(pattern));
        let modes = model.total_modes();
        evolve_lindblad_observed(&rho0, model, dt, t_max, sample_stride, |_, t, rho| {
            if slot == 0 {
                times.push(t);
            }
            let st = DenseState::new(modes, rho.clone())?;
            reduced[slot].push(partial_trace(&st, &keep)?.rho().clone());
            Ok(())
        })?;
    }
    let values: Vec<f64> = reduced[0]
        .iter()
        .zip(&reduced[1])
        .map(|(a, b)| {
            let mut acc = 0.0;
            for (x, y) in a.iter().zip(b.iter()) {
                acc += (x - y).norm_sqr();
            }
            (0.5 * acc).sqrt()
        })
        .collect();
    let sigmas = vec![0.0; values.len()];
    Ok(crate::measures::DistanceSeries {
        kind: crate::measures::SeriesKind::HilbertSchmidt,
        times,
        values,
        sigmas,
    })
}

/// Exact Renyi-2 mutual information `I_2(t)` between `S` and the idle
/// ancilla `A` of a Lindblad-evolved S+A+B state (literal `Tr rho^2`
/// convention, or its log variant).
pub fn i2_series_dense(
    model: &LatticeModel,
    initial: &crate::gaussian::OrbitalMatrix,
    dt: f64,
    t_max: f64,
    sample_stride: usize,
    log_variant: bool,
) -> Result<crate::measures::DistanceSeries> {
    let a = model
        .a_modes()
        .ok_or_else(|| Error::Config("I2 series needs a layout with an A chain".into()))?;
    let sa = ModeSubset::range(model.s_modes().start..a.end);
    let s_in_sa = ModeSubset::range(model.s_modes());
    let a_in_sa = ModeSubset::range(model.s_modes().end..a.end);
    let rho0 = DenseState::from_pure(&dense_from_orbitals(initial)?);
    let modes = model.total_modes();
    let mut times = Vec::new();
    let mut values = Vec::new();
    evolve_lindblad_observed(&rho0, model, dt, t_max, sample_stride, |_, t, rho| {
        let st = DenseState::new(modes, rho.clone())?;
        let rho_sa = partial_trace(&st, &sa)?;
        let ps = partial_trace(&rho_sa, &s_in_sa)?.purity();
        let pa = partial_trace(&rho_sa, &a_in_sa)?.purity();
        let psa = rho_sa.purity();
        times.push(t);
        values.push(if log_variant { -ps.ln() - pa.ln() + psa.ln() } else { ps + pa - psa });
        Ok(())
    })?;
    let sigmas = vec![0.0; values.len()];
    Ok(crate::measures::DistanceSeries {
        kind: if log_variant {
            crate::measures::SeriesKind::Renyi2MiLog
        } else {
            crate::measures::SeriesKind::Renyi2Mi
        },
        times,
        values,
        sigmas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian;
    use crate::lattice::{build_model, ChainLayout, ModelParams};
    use crate::samples;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_mode_annihilation_matrix() {
        let ops = build_fock_operators(1).unwrap();
        assert_eq!(ops.c[0][(0, 1)], c64(1.0, 0.0));
        assert_eq!(ops.c[0][(0, 0)], c64(0.0, 0.0));
        assert_eq!(ops.c[0][(1, 0)], c64(0.0, 0.0));
        assert_eq!(ops.c[0][(1, 1)], c64(0.0, 0.0));
    }

    #[test]
    fn anticommutation_relations() {
        let ops = build_fock_operators(3).unwrap();
        let dim = ops.dim();
        let id = DMatrix::<Complex64>::identity(dim, dim);
        for n in 0..3 {
            for m in 0..3 {
                let anti = &ops.c[n] * &ops.cdag[m] + &ops.cdag[m] * &ops.c[n];
                let expect = if n == m { id.clone() } else { DMatrix::zeros(dim, dim) };
                assert!(linalg::max_abs(&(anti - expect)) < 1e-12, "{{c_{n}, c^dag_{m}}}");
                let anti2 = &ops.c[n] * &ops.c[m] + &ops.c[m] * &ops.c[n];
                assert!(linalg::max_abs(&anti2) < 1e-12, "{{c_{n}, c_{m}}}");
            }
        }
    }

    #[test]
    fn number_operator_commutes_with_hopping() {
        let ops = build_fock_operators(3).unwrap();
        let model = build_model(ModelParams::coupled(3, ChainLayout::SOnly, 1.0, 0.0, 0.0)).unwrap();
        let h = hamiltonian_dense(model.hamiltonian(), &ops);
        let total_n = &ops.number[0] + &ops.number[1] + &ops.number[2];
        let comm = &h * &total_n - &total_n * &h;
        assert!(linalg::max_abs(&comm) < 1e-12);
    }

    #[test]
    fn mode_guard() {
        assert!(matches!(build_fock_operators(15), Err(Error::Resource(_))));
    }

    #[test]
    fn sparse_hamiltonian_matches_dense_assembly() {
        let model = build_model(ModelParams::coupled(2, ChainLayout::SB, 1.0, 0.7, 0.0)).unwrap();
        let ops = build_fock_operators(4).unwrap();
        let dense = hamiltonian_dense(model.hamiltonian(), &ops);
        let sparse = build_sparse_hamiltonian(model.hamiltonian(), 4);
        let mut rebuilt = DMatrix::<Complex64>::zeros(16, 16);
        for (col, entries) in sparse.cols.iter().enumerate() {
            for &(row, amp) in entries {
                rebuilt[(row as usize, col)] += c64(amp, 0.0);
            }
        }
        assert!(linalg::max_abs(&(dense - rebuilt)) < 1e-12);
    }

    #[test]
    fn unitary_evolution_preserves_purity() {
        let model = build_model(ModelParams::coupled(2, ChainLayout::SB, 1.0, 1.0, 0.0)).unwrap();
        let psi = PureState::fock(&[true, false, false, false]);
        let rho = DenseState::from_pure(&psi);
        let series = evolve_lindblad(&rho, &model, 0.01, 1.0, 10).unwrap();
        for (_, s) in &series {
            assert!((s.purity() - 1.0).abs() < 1e-8);
            assert!((s.trace().re - 1.0).abs() < 1e-10);
            assert!(linalg::hermiticity_error(s.rho()) < 1e-12);
        }
        // The strict state validator covers freshly constructed states.
        rho.validate().unwrap();
    }

    #[test]
    fn pure_dephasing_decays_coherence_analytically() {
        // Single mode, h = 0, dephasing gamma: off-diagonals decay as exp(-gamma t / 2).
        let model = build_model(ModelParams::markovian_control(1, 0.0, 0.8)).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = PureState::new(1, DVector::from_vec(vec![c64(s, 0.0), c64(s, 0.0)])).unwrap();
        let rho = DenseState::from_pure(&psi);
        let series = evolve_lindblad(&rho, &model, 0.01, 2.0, 50).unwrap();
        for (t, st) in &series {
            let expect = 0.5 * (-0.8 * t / 2.0).exp();
            assert!((st.rho()[(0, 1)].re - expect).abs() < 1e-6, "t={t}");
            assert!((st.rho()[(0, 0)].re - 0.5).abs() < 1e-9, "diagonal must stay put");
        }
    }

    #[test]
    fn rk4_step_halving_guard_fires_for_huge_dt() {
        let model = build_model(ModelParams::coupled(2, ChainLayout::SB, 1.0, 1.0, 1.0)).unwrap();
        let psi = PureState::fock(&[true, false, false, false]);
        let rho = DenseState::from_pure(&psi);
        assert!(matches!(
            evolve_lindblad(&rho, &model, 1.5, 3.0, 1),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn trace_distance_examples() {
        let a = DenseState::from_pure(&PureState::fock(&[true, false]));
        let b = DenseState::from_pure(&PureState::fock(&[false, true]));
        assert!(trace_distance(&a, &a).unwrap() < 1e-14);
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        // Classical pair: diag(1, 0) vs diag(1/2, 1/2) on one mode.
        let p = DenseState::new(1, DMatrix::from_diagonal(&DVector::from_vec(vec![c64(1.0, 0.0), c64(0.0, 0.0)]))).unwrap();
        let q = DenseState::new(1, DMatrix::from_diagonal(&DVector::from_vec(vec![c64(0.5, 0.0), c64(0.5, 0.0)]))).unwrap();
        assert!((trace_distance(&p, &q).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hs_distance_examples() {
        let a = DenseState::from_pure(&PureState::fock(&[true, false]));
        let b = DenseState::from_pure(&PureState::fock(&[false, true]));
        assert!(hs_distance_dense(&a, &a).unwrap() < 1e-14);
        assert!((hs_distance_dense(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hs_distance_matches_overlap_combination() {
        // Tr(rho - sigma)^2 = D(Ca,Ca) + D(Cb,Cb) - 2 D(Ca,Cb) for Gaussian states.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let va = samples::random_isometry(3, 1, &mut rng);
        let vb = samples::random_isometry(3, 2, &mut rng);
        let ca = gaussian::c_from_orbitals(&va).unwrap();
        let cb = gaussian::c_from_orbitals(&vb).unwrap();
        let da = DenseState::from_pure(&dense_from_orbitals(&va).unwrap());
        let db = DenseState::from_pure(&dense_from_orbitals(&vb).unwrap());
        let lhs = 2.0 * hs_distance_dense(&da, &db).unwrap().powi(2);
        let rhs = gaussian::overlap_c(&ca, &ca).unwrap() + gaussian::overlap_c(&cb, &cb).unwrap()
            - 2.0 * gaussian::overlap_c(&ca, &cb).unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn vn_mutual_info_examples() {
        // Product state.
        let prod = DenseState::from_pure(&PureState::fock(&[true, false]));
        let split = ModeSubset::new(vec![0]).unwrap();
        assert!(vn_mutual_info(&prod, &split).unwrap().abs() < 1e-10);
        // Bell pair (|10> + |01>)/sqrt(2): I = 2 ln 2.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut amp = DVector::zeros(4);
        amp[0b01] = c64(s, 0.0);
        amp[0b10] = c64(s, 0.0);
        let bell = DenseState::from_pure(&PureState::new(2, amp).unwrap());
        let mi = vn_mutual_info(&bell, &split).unwrap();
        assert!((mi - 2.0 * 2.0f64.ln()).abs() < 1e-10);
        // Dephased Bell pair: off-diagonals halved. Eigenvalues of rho_SA
        // become {3/4 occupied sector split as 1/2 +- 1/4}, marginals stay
        // maximally mixed: I = 2 ln 2 - H({3/4, 1/4}).
        let mut rho = bell.rho().clone();
        rho[(0b01, 0b10)] *= 0.5;
        rho[(0b10, 0b01)] *= 0.5;
        let dephased = DenseState::new(2, rho).unwrap();
        let h2 = -(0.75f64.ln() * 0.75 + 0.25f64.ln() * 0.25);
        let expect = 2.0 * 2.0f64.ln() - h2;
        assert!((vn_mutual_info(&dephased, &split).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn c_from_dense_examples() {
        let ops = build_fock_operators(2).unwrap();
        let c = c_from_dense(&DenseState::from_pure(&PureState::fock(&[true, false])), &ops).unwrap();
        assert!((c.entries()[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-12);
        assert!((c.entries()[(1, 1)]).norm() < 1e-12);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut amp = DVector::zeros(4);
        amp[0b01] = c64(s, 0.0);
        amp[0b10] = c64(s, 0.0);
        let bell = DenseState::from_pure(&PureState::new(2, amp).unwrap());
        let c = c_from_dense(&bell, &ops).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((c.entries()[(i, j)] - c64(0.5, 0.0)).norm() < 1e-12, "({i},{j})");
            }
        }

        // Diagonal mixture keeps a diagonal C of occupations.
        let mut rho = DMatrix::zeros(4, 4);
        rho[(0b00, 0b00)] = c64(0.25, 0.0);
        rho[(0b01, 0b01)] = c64(0.40, 0.0);
        rho[(0b11, 0b11)] = c64(0.35, 0.0);
        let therm = DenseState::new(2, rho).unwrap();
        let c = c_from_dense(&therm, &ops).unwrap();
        assert!((c.entries()[(0, 0)].re - 0.75).abs() < 1e-12);
        assert!((c.entries()[(1, 1)].re - 0.35).abs() < 1e-12);
        assert!(c.entries()[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn c_from_orbitals_matches_dense_expectations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let v = samples::random_isometry(4, 2, &mut rng);
            let via_gaussian = gaussian::c_from_orbitals(&v).unwrap();
            let ops = build_fock_operators(4).unwrap();
            let dense = DenseState::from_pure(&dense_from_orbitals(&v).unwrap());
            let via_dense = c_from_dense(&dense, &ops).unwrap();
            assert!(
                linalg::max_abs(&(via_gaussian.entries() - via_dense.entries())) < 1e-10,
                "correlation mismatch"
            );
        }
    }

    #[test]
    fn gamma_convention_pinned_by_dense_expectations() {
        // Evaluate i(<a_j a_k> - delta) on |1> and |0> directly.
        let ops = build_fock_operators(1).unwrap();
        let x = &ops.c[0] + &ops.cdag[0];
        let p = (&ops.c[0] - &ops.cdag[0]) * c64(0.0, -1.0);
        for (occ, expect_xp) in [(true, 1.0), (false, -1.0)] {
            let rho = DenseState::from_pure(&PureState::fock(&[occ]));
            let exp = |op: &DMatrix<Complex64>| -> Complex64 {
                let mut acc = c64(0.0, 0.0);
                for i in 0..2 {
                    for j in 0..2 {
                        acc += rho.rho()[(i, j)] * op[(j, i)];
                    }
                }
                acc
            };
            let gamma_xp = c64(0.0, 1.0) * exp(&(&x * &p));
            assert!((gamma_xp.re - expect_xp).abs() < 1e-12, "occ={occ}");
            assert!(gamma_xp.im.abs() < 1e-12);
            // Matches gamma_from_c on the same state.
            let ci = c_from_dense(&rho, &ops).unwrap();
            let g = gaussian::gamma_from_c(&ci).unwrap();
            assert!((g.entries()[(0, 1)] - expect_xp).abs() < 1e-12);
        }
    }

    #[test]
    fn projective_jump_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut amp = DVector::zeros(4);
        amp[0b01] = c64(s, 0.0);
        amp[0b10] = c64(s, 0.0);
        let psi = PureState::new(2, amp).unwrap();
        let occ = projective_jump_dense(&psi, 0, JumpOutcome::Occupied).unwrap();
        assert!((occ.amplitudes()[0b01].norm() - 1.0).abs() < 1e-12);
        let emp = projective_jump_dense(&psi, 0, JumpOutcome::Empty).unwrap();
        assert!((emp.amplitudes()[0b10].norm() - 1.0).abs() < 1e-12);
        let vac = PureState::fock(&[false, false]);
        assert!(matches!(
            projective_jump_dense(&vac, 0, JumpOutcome::Occupied),
            Err(Error::ImpossibleOutcome(_))
        ));
    }

    #[test]
    fn partial_trace_of_bell_pair_is_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut amp = DVector::zeros(4);
        amp[0b01] = c64(s, 0.0);
        amp[0b10] = c64(s, 0.0);
        let bell = DenseState::from_pure(&PureState::new(2, amp).unwrap());
        for keep in [vec![0], vec![1]] {
            let red = partial_trace(&bell, &ModeSubset::new(keep).unwrap()).unwrap();
            assert!((red.rho()[(0, 0)].re - 0.5).abs() < 1e-12);
            assert!((red.rho()[(1, 1)].re - 0.5).abs() < 1e-12);
            assert!(red.rho()[(0, 1)].norm() < 1e-12);
        }
    }

    #[test]
    fn reduce_matches_dense_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(501);
        let ops3 = build_fock_operators(3).unwrap();
        for _ in 0..5 {
            let v = samples::random_isometry(3, 2, &mut rng);
            let c = gaussian::c_from_orbitals(&v).unwrap();
            let dense = DenseState::from_pure(&dense_from_orbitals(&v).unwrap());
            // Subsets whose complement does not interleave with the kept
            // modes: the naive bit-wise trace is only operator-faithful when
            // no traced mode sits between two kept ones (the {0, 2} subset
            // would put a Jordan-Wigner string through the traced mode 1).
            for keep in [vec![0], vec![1], vec![2], vec![0, 1], vec![1, 2]] {
                let subset = ModeSubset::new(keep.clone()).unwrap();
                let red_c = gaussian::reduce(&c, &subset).unwrap();
                let red_dense = partial_trace(&dense, &subset).unwrap();
                let ops_k = if keep.len() == 3 { &ops3 } else { &build_fock_operators(keep.len()).unwrap() };
                let red_from_dense = c_from_dense(&red_dense, ops_k).unwrap();
                assert!(
                    linalg::max_abs(&(red_c.entries() - red_from_dense.entries())) < 1e-10,
                    "keep={keep:?}"
                );
            }
        }
    }

    #[test]
    fn markovian_distances_contract_under_lindblad() {
        // Dephasing directly on the observed chain: d1 and d2 between any two
        // evolving states must be non-increasing over every sub-interval.
        let model = build_model(ModelParams::markovian_control(2, 1.0, 1.0)).unwrap();
        let p0 = DenseState::from_pure(&PureState::fock(&[true, false]));
        let q0 = DenseState::from_pure(&PureState::fock(&[false, true]));
        let sp = evolve_lindblad(&p0, &model, 0.02, 4.0, 10).unwrap();
        let sq = evolve_lindblad(&q0, &model, 0.02, 4.0, 10).unwrap();
        let mut prev_d1 = f64::INFINITY;
        let mut prev_d2 = f64::INFINITY;
        for ((_, p), (_, q)) in sp.iter().zip(&sq) {
            let d1 = trace_distance(p, q).unwrap();
            let d2 = hs_distance_dense(p, q).unwrap();
            assert!(d1 <= prev_d1 + 1e-8, "d1 must contract: {prev_d1} -> {d1}");
            assert!(d2 <= prev_d2 + 1e-8, "d2 must contract: {prev_d2} -> {d2}");
            prev_d1 = d1;
            prev_d2 = d2;
        }
    }
}
