// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! `backflow` command line: trajectory simulation, backflow measures,
//! Gaussian-vs-dense validation and the scaling benchmark.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use backflow::config::{CommandKind, Method, RunConfig};
use backflow::lattice::ChainLayout;
use backflow::output::DumpFormat;
use backflow::run::dispatch;

#[global_allocator]
static ALLOC: backflow::alloccount::CountingAlloc = backflow::alloccount::CountingAlloc;

#[derive(Parser)]
#[command(
    name = "backflow",
    version,
    about = "Gaussian quantum-trajectory simulator with correlation-matrix backflow measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve one trajectory ensemble and dump occupation series/snapshots.
    Simulate(CommonOpts),
    /// Distance-backflow measure N_BLP,2 over an initial-pair catalog.
    Blp(CommonOpts),
    /// Mutual-information backflow measure N_LFS,2 (S+A+B layout).
    Lfs(CommonOpts),
    /// Gaussian-vs-dense d2 comparison at small L; fails above tolerance.
    Validate(CommonOpts),
    /// Time both pipelines, fit scaling exponents, locate the crossover.
    Bench(CommonOpts),
}

#[derive(Args)]
struct CommonOpts {
    /// Flat key=value config file (flags override file values).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sites per chain.
    #[arg(short = 'L', long = "sites")]
    l: Option<usize>,
    /// Intra-chain hopping.
    #[arg(long)]
    t_par: Option<f64>,
    /// S-B rung hopping.
    #[arg(long)]
    t_perp: Option<f64>,
    /// Dephasing rate.
    #[arg(long)]
    gamma: Option<f64>,
    /// Chain layout: s, sb or sab.
    #[arg(long)]
    layout: Option<String>,
    /// Dephase the S chain directly (Markovian control).
    #[arg(long)]
    dephase_on_s: bool,
    /// Integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Total evolution time.
    #[arg(long)]
    t_max: Option<f64>,
    /// Trajectory count.
    #[arg(long)]
    n_traj: Option<usize>,
    /// Steps between snapshots.
    #[arg(long)]
    stride: Option<usize>,
    /// Master seed (trajectory alpha uses stream alpha).
    #[arg(long)]
    seed: Option<u64>,
    /// Evolution/measure method: gaussian or dense.
    #[arg(long)]
    method: Option<String>,
    /// Initial-pair catalog: defaults, neel or wall.
    #[arg(long)]
    pairs: Option<String>,
    /// Report the log variant of the Renyi-2 mutual information.
    #[arg(long)]
    log_mi: bool,
    /// Noise deadband for the positive variation.
    #[arg(long)]
    deadband: Option<f64>,
    /// Bootstrap resample count (0 disables).
    #[arg(long)]
    n_boot: Option<usize>,
    /// Bootstrap block count.
    #[arg(long)]
    n_blocks: Option<usize>,
    /// Run single-threaded.
    #[arg(long)]
    serial: bool,
    /// Output directory (default $BACKFLOW_OUT or ./backflow_out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump per-(trajectory, time) snapshots: csv or bin.
    #[arg(long)]
    dump: Option<String>,
    /// Validation tolerance on max |d2 - d2_dense|.
    #[arg(long)]
    tol: Option<f64>,
    /// Bench: L grid timed with both methods (comma separated).
    #[arg(long)]
    crossover_grid: Option<String>,
    /// Bench: Gaussian-only L grid for the power-law fit.
    #[arg(long)]
    power_grid: Option<String>,
    /// Bench: trajectory-count grid for the measure-pipeline scan.
    #[arg(long)]
    ntr_grid: Option<String>,
    /// Bench: fixed L of the measure-pipeline scan.
    #[arg(long)]
    ntr_l: Option<usize>,
    /// Bench: trajectory count of the power-law scan.
    #[arg(long)]
    power_ntr: Option<usize>,
    /// Bench: trajectory count of the crossover scan.
    #[arg(long)]
    crossover_ntr: Option<usize>,
    /// Bench: evolution time per timed cell.
    #[arg(long)]
    bench_t_max: Option<f64>,
    /// Bench: sample stride per timed cell.
    #[arg(long)]
    bench_stride: Option<usize>,
    /// Bench: wall-time floor below which rows are excluded from fits.
    #[arg(long)]
    fit_floor: Option<f64>,
    /// Bench: also emit gnuplot-ready columns.
    #[arg(long)]
    gnuplot: bool,
}

fn build_config(kind: CommandKind, opts: &CommonOpts) -> backflow::Result<RunConfig> {
    let mut cfg = RunConfig::defaults(kind);
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path)?;
        cfg.apply_file(&text)?;
    }
    if let Some(v) = opts.l {
        cfg.l = v;
    }
    if let Some(v) = opts.t_par {
        cfg.t_par = v;
    }
    if let Some(v) = opts.t_perp {
        cfg.t_perp = v;
    }
    if let Some(v) = opts.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = &opts.layout {
        cfg.layout = ChainLayout::parse(v)?;
    }
    if opts.dephase_on_s {
        cfg.dephase_on_s = true;
    }
    if let Some(v) = opts.dt {
        cfg.dt = v;
    }
    if let Some(v) = opts.t_max {
        cfg.t_max = v;
    }
    if let Some(v) = opts.n_traj {
        cfg.n_traj = v;
    }
    if let Some(v) = opts.stride {
        cfg.sample_stride = v;
    }
    if let Some(v) = opts.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = &opts.method {
        cfg.method = Method::parse(v)?;
    }
    if let Some(v) = &opts.pairs {
        cfg.pairs = v.clone();
    }
    if opts.log_mi {
        cfg.log_mi = true;
    }
    if let Some(v) = opts.deadband {
        cfg.deadband = v;
    }
    if let Some(v) = opts.n_boot {
        cfg.n_boot = v;
    }
    if let Some(v) = opts.n_blocks {
        cfg.n_blocks = v;
    }
    if opts.serial {
        cfg.parallel = false;
    }
    if let Some(v) = &opts.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &opts.dump {
        cfg.dump = Some(DumpFormat::parse(v)?);
    }
    if let Some(v) = opts.tol {
        cfg.validate_tol = v;
    }
    let grid = |s: &String| -> backflow::Result<Vec<usize>> {
        s.split(',')
            .map(|x| {
                x.trim().parse::<usize>().map_err(|_| {
                    backflow::Error::Config(format!("invalid grid entry `{x}`"))
                })
            })
            .collect()
    };
    if let Some(v) = &opts.crossover_grid {
        cfg.bench_crossover_grid = grid(v)?;
    }
    if let Some(v) = &opts.power_grid {
        cfg.bench_power_grid = grid(v)?;
    }
    if let Some(v) = &opts.ntr_grid {
        cfg.bench_ntr_grid = grid(v)?;
    }
    if let Some(v) = opts.ntr_l {
        cfg.bench_ntr_l = v;
    }
    if let Some(v) = opts.power_ntr {
        cfg.bench_power_ntr = v;
    }
    if let Some(v) = opts.crossover_ntr {
        cfg.bench_crossover_ntr = v;
    }
    if let Some(v) = opts.bench_t_max {
        cfg.bench_t_max = v;
    }
    if let Some(v) = opts.bench_stride {
        cfg.bench_stride = v;
    }
    if let Some(v) = opts.fit_floor {
        cfg.bench_fit_floor = v;
    }
    if opts.gnuplot {
        cfg.bench_gnuplot = true;
    }
    Ok(cfg)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, opts) = match &cli.command {
        Cmd::Simulate(o) => (CommandKind::Simulate, o),
        Cmd::Blp(o) => (CommandKind::Blp, o),
        Cmd::Lfs(o) => (CommandKind::Lfs, o),
        Cmd::Validate(o) => (CommandKind::Validate, o),
        Cmd::Bench(o) => (CommandKind::Bench, o),
    };
    let result = build_config(kind, opts).and_then(|cfg| dispatch(&cfg));
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
