// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Timing harness: Gaussian pipeline vs dense full-state baseline.
//!
//! Each timed cell runs the complete distance pipeline end-to-end (state
//! preparation, evolution, `d_2(t)` over the sample grid, positive
//! variation) after a short discarded warm-up. Cells execute strictly
//! serially and single-threaded so the two methods compare fairly; peak
//! memory comes from the allocation counters in [`crate::alloccount`] when
//! the counting allocator is installed.
//!
//! The dense baseline is refused above `L = 6` sites per chain (12 modes):
//! beyond that the density matrix no longer fits commodity memory budgets,
//! which is the point the harness demonstrates. Exponents come from
//! least-squares fits of `log2 T` vs `L` (dense, bits per site) and
//! `ln T` vs `ln L` (Gaussian power law), with an optional floor that drops
//! overhead-dominated rows.

use serde::{Deserialize, Serialize};

use crate::alloccount;
use crate::error::{Error, Result};
use crate::gaussian::ModeSubset;
use crate::lattice::{build_model, ChainLayout, LatticeModel, ModelParams};
use crate::linalg;
use crate::measures::{
    hs_distance_series, positive_variation, MeasureOpts,
};
use crate::oracle;
use crate::trajectory::{initial_product_state, run_ensemble, ScheduleConfig, TrajectoryEnsemble};

/// Largest `L` (sites per chain) the dense baseline will accept.
pub const DENSE_MAX_L: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Gaussian,
    Dense,
}

impl BenchMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BenchMethod::Gaussian => "gaussian",
            BenchMethod::Dense => "dense",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: BenchMethod,
    pub l: usize,
    pub n_traj: usize,
    pub wall_secs: f64,
    pub peak_mem_bytes: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn rows_for(&self, method: BenchMethod) -> Vec<&TimingRow> {
        let mut rows: Vec<&TimingRow> = self.rows.iter().filter(|r| r.method == method).collect();
        rows.sort_by_key(|r| (r.l, r.n_traj));
        rows
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if !(r.wall_secs > 0.0) {
                return Err(Error::Numerical(format!(
                    "non-positive wall time {} for {} L={}",
                    r.wall_secs,
                    r.method.as_str(),
                    r.l
                )));
            }
        }
        Ok(())
    }

    pub fn merged(mut self, other: TimingTable) -> TimingTable {
        self.rows.extend(other.rows);
        self
    }
}

fn bench_pair(l: usize) -> (Vec<bool>, Vec<bool>) {
    // Half-filled domain walls exist at every L >= 2.
    let half = l / 2 + l % 2;
    ((0..l).map(|i| i < half).collect(), (0..l).map(|i| i >= l - half).collect())
}

fn bench_model(l: usize) -> Result<LatticeModel> {
    build_model(ModelParams::coupled(l, ChainLayout::SB, 1.0, 1.0, 1.0))
}

fn extend(pattern: &[bool], total: usize) -> Vec<bool> {
    let mut full = vec![false; total];
    full[..pattern.len()].copy_from_slice(pattern);
    full
}

/// One Gaussian cell: two ensembles plus the d_2 pipeline, single-threaded.
fn gaussian_cell(l: usize, sched: &ScheduleConfig, parallel: bool) -> Result<f64> {
    let model = bench_model(l)?;
    let (pp, pq) = bench_pair(l);
    let total = model.total_modes();
    let mut sched = sched.clone();
    sched.parallel = parallel;
    let observe = ModeSubset::range(model.s_modes());
    let ens_p = run_ensemble(&model, &sched, &observe, &initial_product_state(&extend(&pp, total)))?;
    let ens_q = run_ensemble(&model, &sched, &observe, &initial_product_state(&extend(&pq, total)))?;
    let opts = MeasureOpts { parallel, ..MeasureOpts::default() }.without_bootstrap();
    let series = hs_distance_series(&ens_p, &ens_q, &opts)?;
    positive_variation(&series, 0.0)
}

fn dense_refusal(l: usize) -> Error {
    Error::Resource(format!(
        "dense full-state simulation refused for L = {l} (> {DENSE_MAX_L}); \
         the 2^(2L)-dimensional density matrix is out of budget"
    ))
}

/// The RK4 accuracy contract needs a finer step as |H| grows with L. The
/// harness probes the stable step once at the largest dense L of the grid so
/// every dense cell integrates with the same dt and the timed scaling
/// reflects state size alone.
fn dense_grid_dt(l_max: usize, dt0: f64) -> Result<f64> {
    let model = bench_model(l_max)?;
    let (pp, _) = bench_pair(l_max);
    let full_p = extend(&pp, model.total_modes());
    let rho0 = oracle::DenseState::from_pure(&oracle::PureState::fock(&full_p));
    oracle::stable_dt(&rho0, &model, dt0, 6)
}

/// One dense cell: two Lindblad evolutions plus the d_2 pipeline.
fn dense_cell(l: usize, sched: &ScheduleConfig, dt: f64) -> Result<f64> {
    if l > DENSE_MAX_L {
        return Err(dense_refusal(l));
    }
    let model = bench_model(l)?;
    let (pp, pq) = bench_pair(l);
    let total = model.total_modes();
    let stride = (sched.sample_stride as f64 * sched.dt / dt).round().max(1.0) as usize;
    let series = oracle::d2_series_dense(
        &model,
        &extend(&pp, total),
        &extend(&pq, total),
        dt,
        sched.t_max,
        stride,
    )?;
    positive_variation(&series, 0.0)
}

fn warmup_schedule(sched: &ScheduleConfig) -> ScheduleConfig {
    let mut w = sched.clone();
    w.t_max = (2.0 * w.dt).min(sched.t_max);
    w.n_traj = w.n_traj.min(4);
    w
}

fn time_cell(
    method: BenchMethod,
    l: usize,
    sched: &ScheduleConfig,
    parallel: bool,
    dense_dt: f64,
) -> Result<TimingRow> {
    // Discarded warm-up at a reduced schedule, then the timed run.
    let warm = warmup_schedule(sched);
    match method {
        BenchMethod::Gaussian => gaussian_cell(l, &warm, parallel).map(|_| ())?,
        BenchMethod::Dense => dense_cell(l, &warm, dense_dt).map(|_| ())?,
    }
    let baseline = alloccount::reset_peak();
    let t0 = std::time::Instant::now();
    match method {
        BenchMethod::Gaussian => gaussian_cell(l, sched, parallel).map(|_| ())?,
        BenchMethod::Dense => dense_cell(l, sched, dense_dt).map(|_| ())?,
    }
    let wall_secs = t0.elapsed().as_secs_f64();
    let peak = if alloccount::installed() { alloccount::peak_since(baseline) as u64 } else { 0 };
    Ok(TimingRow { method, l, n_traj: sched.n_traj, wall_secs, peak_mem_bytes: peak })
}

/// Time every (method, L) cell of the grid, end to end. Cells run serially;
/// Gaussian cells use one thread unless `parallel_gaussian` is set (such rows
/// are for separate reporting, not for the dense comparison).
pub fn time_grid(
    methods: &[BenchMethod],
    l_grid: &[usize],
    sched: &ScheduleConfig,
    parallel_gaussian: bool,
) -> Result<TimingTable> {
    sched.validate()?;
    let dense_dt = if methods.contains(&BenchMethod::Dense) {
        if let Some(&bad) = l_grid.iter().find(|&&l| l > DENSE_MAX_L) {
            return Err(dense_refusal(bad));
        }
        let l_max = *l_grid.iter().max().ok_or_else(|| Error::Config("empty L grid".into()))?;
        dense_grid_dt(l_max, sched.dt)?
    } else {
        sched.dt
    };
    let mut rows = Vec::new();
    for &method in methods {
        for &l in l_grid {
            log::info!("bench cell: {} L={l}", method.as_str());
            rows.push(time_cell(
                method,
                l,
                sched,
                parallel_gaussian && method == BenchMethod::Gaussian,
                dense_dt,
            )?);
        }
    }
    let table = TimingTable { rows };
    table.validate()?;
    Ok(table)
}

/// Time only the measure pipeline (pair sums over the recorded grid) against
/// the trajectory count, on ensembles evolved once at the largest `n`.
pub fn time_measure_vs_ntr(
    l: usize,
    ntr_grid: &[usize],
    sched: &ScheduleConfig,
) -> Result<TimingTable> {
    if ntr_grid.is_empty() {
        return Err(Error::Config("empty n_traj grid".into()));
    }
    let n_max = *ntr_grid.iter().max().unwrap();
    let model = bench_model(l)?;
    let (pp, pq) = bench_pair(l);
    let total = model.total_modes();
    let mut big = sched.clone();
    big.n_traj = n_max;
    big.parallel = false;
    let observe = ModeSubset::range(model.s_modes());
    let ens_p = run_ensemble(&model, &big, &observe, &initial_product_state(&extend(&pp, total)))?;
    let ens_q = run_ensemble(&model, &big, &observe, &initial_product_state(&extend(&pq, total)))?;
    let opts = MeasureOpts { parallel: false, ..MeasureOpts::default() }.without_bootstrap();

    let truncate = |ens: &TrajectoryEnsemble, n: usize| -> TrajectoryEnsemble {
        let mut t = ens.clone();
        t.snapshots.truncate(n);
        t.streams.truncate(n);
        t.schedule.n_traj = n;
        t
    };

    // Warm-up at the smallest size.
    let n0 = *ntr_grid.iter().min().unwrap();
    let _ = hs_distance_series(&truncate(&ens_p, n0), &truncate(&ens_q, n0), &opts)?;

    let mut rows = Vec::new();
    for &n in ntr_grid {
        if n > n_max {
            return Err(Error::Config(format!("n_traj {n} exceeds the evolved {n_max}")));
        }
        let tp = truncate(&ens_p, n);
        let tq = truncate(&ens_q, n);
        let baseline = alloccount::reset_peak();
        let t0 = std::time::Instant::now();
        let _ = hs_distance_series(&tp, &tq, &opts)?;
        let wall_secs = t0.elapsed().as_secs_f64();
        let peak = if alloccount::installed() { alloccount::peak_since(baseline) as u64 } else { 0 };
        rows.push(TimingRow { method: BenchMethod::Gaussian, l, n_traj: n, wall_secs, peak_mem_bytes: peak });
    }
    let table = TimingTable { rows };
    table.validate()?;
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingModel {
    /// `log2 T = a + slope * L`: slope in bits per site.
    Exponential,
    /// `ln T = a + exponent * ln L`.
    PowerLaw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ScalingModel,
    pub exponent: f64,
    pub r_squared: f64,
    pub n_used: usize,
}

/// Least-squares scaling fit over timing rows, excluding rows whose wall time
/// sits below `floor_secs` (overhead-dominated cells).
pub fn fit_scaling(rows: &[&TimingRow], model: ScalingModel, floor_secs: f64) -> Result<FitResult> {
    let usable: Vec<&&TimingRow> = rows.iter().filter(|r| r.wall_secs > floor_secs).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "scaling fit needs at least 3 usable rows, got {} (floor {floor_secs}s)",
            usable.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = match model {
        ScalingModel::Exponential => usable
            .iter()
            .map(|r| (r.l as f64, r.wall_secs.log2()))
            .unzip(),
        ScalingModel::PowerLaw => usable
            .iter()
            .map(|r| ((r.l as f64).ln(), r.wall_secs.ln()))
            .unzip(),
    };
    let (_, slope, r2) = linalg::linear_fit(&xs, &ys);
    Ok(FitResult { model, exponent: slope, r_squared: r2, n_used: usable.len() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: BenchMethod,
    pub fit: Option<FitResult>,
    /// Nominal complexity of the method for the summary table.
    pub complexity: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossoverReport {
    /// Smallest overlapping L where the Gaussian pipeline is faster.
    pub crossover_l: Option<usize>,
    pub overlap_l: Vec<usize>,
    pub summary: Vec<MethodSummary>,
}

/// Locate the crossover point and assemble the complexity summary.
///
/// The table should hold one Gaussian row per L at the same trajectory count
/// as the dense comparison (the full-bench driver arranges this).
pub fn crossover_report(table: &TimingTable) -> Result<CrossoverReport> {
    let dense = table.rows_for(BenchMethod::Dense);
    let gauss = table.rows_for(BenchMethod::Gaussian);
    if dense.is_empty() || gauss.is_empty() {
        return Err(Error::InsufficientData(
            "crossover needs rows from both methods on overlapping L".into(),
        ));
    }
    let mut overlap = Vec::new();
    let mut crossover = None;
    for d in &dense {
        if let Some(g) = gauss.iter().find(|g| g.l == d.l) {
            overlap.push(d.l);
            if crossover.is_none() && g.wall_secs < d.wall_secs {
                crossover = Some(d.l);
            }
        }
    }
    if overlap.is_empty() {
        return Err(Error::InsufficientData("no overlapping L between the methods".into()));
    }
    let dense_fit = fit_scaling(&dense, ScalingModel::Exponential, 0.0).ok();
    let gauss_fit = fit_scaling(&gauss, ScalingModel::PowerLaw, 0.0).ok();
    Ok(CrossoverReport {
        crossover_l: crossover,
        overlap_l: overlap,
        summary: vec![
            MethodSummary {
                method: BenchMethod::Dense,
                fit: dense_fit,
                complexity: "~O(2^(2L)) full-state entries per step".into(),
            },
            MethodSummary {
                method: BenchMethod::Gaussian,
                fit: gauss_fit,
                complexity: "~O(N_tr^2 L^3) pair determinants".into(),
            },
        ],
    })
}

/// Configuration of the full benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Grid timed with both methods at `crossover_n_traj`.
    pub crossover_l_grid: Vec<usize>,
    /// Gaussian-only grid for the power-law fit.
    pub power_l_grid: Vec<usize>,
    pub power_n_traj: usize,
    /// Trajectory-count grid for the measure-pipeline scan.
    pub ntr_grid: Vec<usize>,
    pub ntr_l: usize,
    pub crossover_n_traj: usize,
    pub dt: f64,
    pub t_max: f64,
    pub sample_stride: usize,
    pub master_seed: u64,
    /// Floor for the scaling fits.
    pub fit_floor_secs: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            crossover_l_grid: vec![2, 3, 4, 5, 6],
            power_l_grid: vec![16, 32, 64, 128],
            power_n_traj: 32,
            ntr_grid: vec![32, 64, 128, 256],
            ntr_l: 32,
            crossover_n_traj: 500,
            dt: 0.02,
            t_max: 0.1,
            sample_stride: 1,
            master_seed: 7,
            fit_floor_secs: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub table: TimingTable,
    pub dense_fit: Option<FitResult>,
    pub gaussian_fit: Option<FitResult>,
    pub ntr_fit: Option<FitResult>,
    pub crossover: CrossoverReport,
    pub config: BenchConfig,
}

/// Run all three scans and assemble fits plus the crossover report.
pub fn run_full_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let mut sched = ScheduleConfig::new(cfg.dt, cfg.t_max, cfg.crossover_n_traj, cfg.sample_stride, cfg.master_seed);
    sched.parallel = false;

    // Crossover scan: both methods at the same pipeline and trajectory count.
    let crossover_table = time_grid(
        &[BenchMethod::Dense, BenchMethod::Gaussian],
        &cfg.crossover_l_grid,
        &sched,
        false,
    )?;

    // Power-law scan: Gaussian only, smaller N keeps large L affordable.
    let mut power_sched = sched.clone();
    power_sched.n_traj = cfg.power_n_traj;
    let power_table = time_grid(&[BenchMethod::Gaussian], &cfg.power_l_grid, &power_sched, false)?;

    // Measure-pipeline scan against N_tr at fixed L.
    let mut ntr_sched = sched.clone();
    ntr_sched.n_traj = *cfg.ntr_grid.iter().max().unwrap_or(&cfg.power_n_traj);
    let ntr_table = time_measure_vs_ntr(cfg.ntr_l, &cfg.ntr_grid, &ntr_sched)?;

    let dense_rows: Vec<&TimingRow> = crossover_table
        .rows_for(BenchMethod::Dense)
        .into_iter()
        .filter(|r| r.l >= 3)
        .collect();
    let dense_fit = fit_scaling(&dense_rows, ScalingModel::Exponential, cfg.fit_floor_secs).ok();
    let gaussian_fit = fit_scaling(
        &power_table.rows_for(BenchMethod::Gaussian),
        ScalingModel::PowerLaw,
        cfg.fit_floor_secs,
    )
    .ok();

    // N_tr exponent: power-law fit in N at fixed L (reuse the machinery by
    // treating n_traj as the abscissa).
    let ntr_rows = ntr_table.rows_for(BenchMethod::Gaussian);
    let ntr_fit = {
        let xs: Vec<f64> = ntr_rows.iter().map(|r| (r.n_traj as f64).ln()).collect();
        let ys: Vec<f64> = ntr_rows.iter().map(|r| r.wall_secs.ln()).collect();
        if xs.len() >= 3 {
            let (_, slope, r2) = linalg::linear_fit(&xs, &ys);
            Some(FitResult { model: ScalingModel::PowerLaw, exponent: slope, r_squared: r2, n_used: xs.len() })
        } else {
            None
        }
    };

    let crossover = crossover_report(&crossover_table)?;
    let table = crossover_table.merged(power_table).merged(ntr_table);
    Ok(BenchReport { table, dense_fit, gaussian_fit, ntr_fit, crossover, config: cfg.clone() })
}
