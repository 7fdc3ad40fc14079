// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Run dispatch: build the model from a [`RunConfig`], execute the requested
//! pipeline and write the artifacts (`series.csv`, `result.json`,
//! `timing.csv`).
//!
//! `result.json` carries the version, the full config echo and the master
//! seed; re-running from the echoed config reproduces every non-timing byte.

use std::path::Path;

use serde::Serialize;

use crate::bench::run_full_bench;
use crate::config::{CommandKind, RunConfig};
use crate::error::{Error, Result};
use crate::gaussian::ModeSubset;
use crate::lattice::{build_model, LatticeModel};
use crate::measures::{
    blp2, default_preparations, hs_distance_series, lfs2, positive_variation, DistanceSeries,
    InitialPairCatalog, MeasureOpts, MeasureResult,
};
use crate::oracle;
use crate::output;
use crate::trajectory::{initial_product_state, run_ensemble};

/// Version string embedded into every result file.
pub fn version() -> &'static str {
    option_env!("BACKFLOW_GIT_DESCRIBE").unwrap_or(concat!("v", env!("CARGO_PKG_VERSION")))
}

#[derive(Serialize)]
struct TimingInfo {
    wall_secs: f64,
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    version: &'static str,
    command: &'static str,
    master_seed: u64,
    config: &'a RunConfig,
    result: R,
    timing: TimingInfo,
}

fn envelope<'a, R: Serialize>(cfg: &'a RunConfig, result: R, wall_secs: f64) -> Envelope<'a, R> {
    Envelope {
        version: version(),
        command: cfg.command.as_str(),
        master_seed: cfg.master_seed,
        config: cfg,
        result,
        timing: TimingInfo { wall_secs },
    }
}

fn catalog_from(cfg: &RunConfig) -> Result<InitialPairCatalog> {
    let all = InitialPairCatalog::defaults(cfg.l);
    let filtered: Vec<_> = match cfg.pairs.as_str() {
        "defaults" | "both" => all.pairs,
        name @ ("neel" | "wall") => {
            all.pairs.into_iter().filter(|p| p.name == name).collect()
        }
        other => {
            return Err(Error::Config(format!(
                "unknown pair catalog `{other}` (use defaults, neel or wall)"
            )))
        }
    };
    if filtered.is_empty() {
        return Err(Error::Config(format!(
            "pair catalog `{}` is empty at L = {} (neel needs even L)",
            cfg.pairs, cfg.l
        )));
    }
    Ok(InitialPairCatalog { pairs: filtered })
}

fn measure_opts(cfg: &RunConfig) -> MeasureOpts {
    MeasureOpts {
        parallel: cfg.parallel,
        n_boot: cfg.n_boot,
        n_blocks: cfg.n_blocks,
        deadband: cfg.deadband,
        log_mi: cfg.log_mi,
    }
}

fn write_measure_artifacts(
    cfg: &RunConfig,
    out: &Path,
    result: &MeasureResult,
) -> Result<()> {
    let argmax = result
        .candidates
        .iter()
        .find(|c| c.name == result.argmax)
        .expect("argmax candidate exists");
    output::write_series_csv(&out.join("series.csv"), &argmax.series)?;
    for cand in &result.candidates {
        output::write_series_csv(&out.join(format!("series_{}.csv", cand.name)), &cand.series)?;
    }
    output::write_json(&out.join("result.json"), &envelope(cfg, result, result.wall_secs))?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    times: Vec<f64>,
    mean_occupation: Vec<f64>,
    occupation_stderr: Vec<f64>,
    n_traj: usize,
    dumped_files: usize,
}

fn run_simulate(cfg: &RunConfig, model: &LatticeModel, out: &Path) -> Result<()> {
    let t0 = std::time::Instant::now();
    let observe = ModeSubset::range(0..model.total_modes());
    let pattern: Vec<bool> = {
        // Half-filled domain wall on S, everything else empty.
        let l = model.sites_per_chain();
        let half = l / 2 + l % 2;
        let mut p = vec![false; model.total_modes()];
        for i in 0..half {
            p[i] = true;
        }
        p
    };
    let ens = run_ensemble(model, &cfg.schedule(), &observe, &initial_product_state(&pattern))?;
    let n = ens.n_traj() as f64;
    let mut mean = Vec::with_capacity(ens.n_times());
    let mut stderr = Vec::with_capacity(ens.n_times());
    for ti in 0..ens.n_times() {
        let traces: Vec<f64> = ens.snapshots.iter().map(|tr| tr[ti].trace()).collect();
        let m = traces.iter().sum::<f64>() / n;
        let var = traces.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
        mean.push(m);
        stderr.push((var / n).sqrt());
    }
    let series = DistanceSeries {
        kind: crate::measures::SeriesKind::HilbertSchmidt,
        times: ens.times.clone(),
        values: mean.clone(),
        sigmas: stderr.clone(),
    };
    output::write_series_csv(&out.join("series.csv"), &series)?;
    let dumped = match cfg.dump {
        Some(fmt) => output::dump_ensemble(&out.join("snapshots"), &ens, fmt)?.len(),
        None => 0,
    };
    let summary = SimulateSummary {
        times: ens.times,
        mean_occupation: mean,
        occupation_stderr: stderr,
        n_traj: cfg.n_traj,
        dumped_files: dumped,
    };
    output::write_json(&out.join("result.json"), &envelope(cfg, &summary, t0.elapsed().as_secs_f64()))?;
    Ok(())
}

#[derive(Serialize)]
struct ValidateSummary {
    max_abs_dev: f64,
    tol: f64,
    pass: bool,
    pair: String,
    n_traj: usize,
}

fn run_validate(cfg: &RunConfig, model: &LatticeModel, out: &Path) -> Result<()> {
    let t0 = std::time::Instant::now();
    let catalog = catalog_from(cfg)?;
    let pair = &catalog.pairs[0];
    let total = model.total_modes();
    let mut full_p = vec![false; total];
    full_p[..cfg.l].copy_from_slice(&pair.pattern_p);
    let mut full_q = vec![false; total];
    full_q[..cfg.l].copy_from_slice(&pair.pattern_q);

    let observe = ModeSubset::range(model.s_modes());
    let schedule = cfg.schedule();
    let ens_p = run_ensemble(model, &schedule, &observe, &initial_product_state(&full_p))?;
    let ens_q = run_ensemble(model, &schedule, &observe, &initial_product_state(&full_q))?;
    let gaussian = hs_distance_series(&ens_p, &ens_q, &measure_opts(cfg))?;

    let dense = oracle::d2_series_dense(model, &full_p, &full_q, cfg.dt, cfg.t_max, cfg.sample_stride)?;
    let max_abs_dev = gaussian
        .values
        .iter()
        .zip(&dense.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    output::write_series_csv(&out.join("series.csv"), &gaussian)?;
    output::write_series_csv(&out.join("dense_series.csv"), &dense)?;
    let pass = max_abs_dev <= cfg.validate_tol;
    let summary = ValidateSummary {
        max_abs_dev,
        tol: cfg.validate_tol,
        pass,
        pair: pair.name.clone(),
        n_traj: cfg.n_traj,
    };
    output::write_json(&out.join("result.json"), &envelope(cfg, &summary, t0.elapsed().as_secs_f64()))?;
    println!("validate: max |d2_gaussian - d2_dense| = {max_abs_dev:.4} (tol {})", cfg.validate_tol);
    if !pass {
        return Err(Error::Numerical(format!(
            "validation failed: max deviation {max_abs_dev:.4} exceeds tolerance {}",
            cfg.validate_tol
        )));
    }
    Ok(())
}

fn run_bench(cfg: &RunConfig, out: &Path) -> Result<()> {
    let t0 = std::time::Instant::now();
    let report = run_full_bench(&cfg.bench_config())?;
    output::write_timing_csv(&out.join("timing.csv"), &report.table)?;
    if cfg.bench_gnuplot {
        output::write_gnuplot(&out.join("bench_gnuplot.dat"), &report.table)?;
    }
    output::write_json(&out.join("bench.json"), &envelope(cfg, &report, t0.elapsed().as_secs_f64()))?;
    if let Some(l) = report.crossover.crossover_l {
        println!("bench: crossover at L = {l}");
    } else {
        println!("bench: no crossover in range");
    }
    Ok(())
}

/// Execute the configured command and write its artifacts into the output
/// directory. Errors map to process exit codes via [`Error::exit_code`].
pub fn dispatch(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let out = cfg.out_dir.clone();
    match cfg.command {
        CommandKind::Simulate => {
            let model = build_model(cfg.model_params())?;
            run_simulate(cfg, &model, &out)
        }
        CommandKind::Blp => {
            let model = build_model(cfg.model_params())?;
            let catalog = catalog_from(cfg)?;
            let result = blp2(&model, &cfg.schedule(), &catalog, &measure_opts(cfg))?;
            println!(
                "blp2: N = {:.6} +- {:.6} (argmax {})",
                result.value, result.sigma, result.argmax
            );
            write_measure_artifacts(cfg, &out, &result)
        }
        CommandKind::Lfs => {
            let model = build_model(cfg.model_params())?;
            let preps = default_preparations(&model)?;
            let result = lfs2(&model, &cfg.schedule(), &preps, &measure_opts(cfg))?;
            println!(
                "lfs2: N = {:.6} +- {:.6} (argmax {})",
                result.value, result.sigma, result.argmax
            );
            write_measure_artifacts(cfg, &out, &result)
        }
        CommandKind::Validate => {
            let model = build_model(cfg.model_params())?;
            run_validate(cfg, &model, &out)
        }
        CommandKind::Bench => run_bench(cfg, &out),
    }
}

/// Library-level entry point used by the FFI layer: run a measure command
/// described by config-file text and return the result without touching the
/// filesystem.
pub fn run_measure_from_text(command: CommandKind, config_text: &str) -> Result<MeasureResult> {
    let mut cfg = RunConfig::defaults(command);
    cfg.apply_file(config_text)?;
    cfg.validate()?;
    let model = build_model(cfg.model_params())?;
    match command {
        CommandKind::Blp => {
            let catalog = catalog_from(&cfg)?;
            blp2(&model, &cfg.schedule(), &catalog, &measure_opts(&cfg))
        }
        CommandKind::Lfs => {
            let preps = default_preparations(&model)?;
            lfs2(&model, &cfg.schedule(), &preps, &measure_opts(&cfg))
        }
        _ => Err(Error::Config("only the blp and lfs commands run through this entry".into())),
    }
}

/// Positive variation of a dense-oracle series; exposed for the validate
/// pipeline and the FFI layer.
pub fn dense_measure_reference(
    model: &LatticeModel,
    pattern_p: &[bool],
    pattern_q: &[bool],
    dt: f64,
    t_max: f64,
    stride: usize,
    deadband: f64,
) -> Result<(DistanceSeries, f64)> {
    let series = oracle::d2_series_dense(model, pattern_p, pattern_q, dt, t_max, stride)?;
    let n = positive_variation(&series, deadband)?;
    Ok((series, n))
}
