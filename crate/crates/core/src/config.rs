// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Run configuration: defaults, flat key-value config files, and validation.
//!
//! Precedence is defaults < config file < command-line flags. The file
//! format is one `key = value` per line, `#` comments, no sections; unknown
//! keys are rejected. The numeric defaults are the reference working point
//! of the coupled-chain model: `L = 2`, `t_par = t_perp = 1`, `gamma = 1`,
//! `dt = 0.02`, `t_max = 10`, `n_traj = 500`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::lattice::{Chain, ChainLayout, ModelParams};
use crate::output::DumpFormat;
use crate::trajectory::ScheduleConfig;

/// Environment variable holding the default output root.
pub const OUT_ENV: &str = "BACKFLOW_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gaussian,
    Dense,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Method::Gaussian),
            "dense" => Ok(Method::Dense),
            other => Err(Error::Config(format!("unknown method `{other}` (use gaussian or dense)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Simulate,
    Blp,
    Lfs,
    Validate,
    Bench,
}

impl CommandKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Blp => "blp",
            CommandKind::Lfs => "lfs",
            CommandKind::Validate => "validate",
            CommandKind::Bench => "bench",
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    // Model.
    pub l: usize,
    pub t_par: f64,
    pub t_perp: f64,
    pub gamma: f64,
    pub layout: ChainLayout,
    /// Put the dephasing directly on the S chain (Markovian control runs).
    pub dephase_on_s: bool,
    // Schedule.
    pub dt: f64,
    pub t_max: f64,
    pub n_traj: usize,
    pub sample_stride: usize,
    pub master_seed: u64,
    pub parallel: bool,
    // Measures.
    pub method: Method,
    pub pairs: String,
    pub log_mi: bool,
    pub deadband: f64,
    pub n_boot: usize,
    pub n_blocks: usize,
    // Artifacts.
    pub out_dir: PathBuf,
    pub dump: Option<DumpFormat>,
    // Validate.
    pub validate_tol: f64,
    // Bench.
    pub bench_crossover_grid: Vec<usize>,
    pub bench_power_grid: Vec<usize>,
    pub bench_ntr_grid: Vec<usize>,
    pub bench_ntr_l: usize,
    pub bench_power_ntr: usize,
    pub bench_crossover_ntr: usize,
    pub bench_t_max: f64,
    pub bench_stride: usize,
    pub bench_fit_floor: f64,
    pub bench_gnuplot: bool,
}

impl RunConfig {
    /// Defaults for a command; the layout follows the command's needs.
    pub fn defaults(command: CommandKind) -> Self {
        let layout = match command {
            CommandKind::Lfs => ChainLayout::SAB,
            _ => ChainLayout::SB,
        };
        let out_dir = std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("backflow_out"));
        let bench = BenchConfig::default();
        Self {
            command,
            l: 2,
            t_par: 1.0,
            t_perp: 1.0,
            gamma: 1.0,
            layout,
            dephase_on_s: false,
            dt: 0.02,
            t_max: 10.0,
            n_traj: 500,
            sample_stride: 10,
            master_seed: 7,
            parallel: true,
            method: Method::Gaussian,
            pairs: "defaults".into(),
            log_mi: false,
            deadband: 0.0,
            n_boot: 200,
            n_blocks: 50,
            out_dir,
            dump: None,
            validate_tol: 0.05,
            bench_crossover_grid: bench.crossover_l_grid,
            bench_power_grid: bench.power_l_grid,
            bench_ntr_grid: bench.ntr_grid,
            bench_ntr_l: bench.ntr_l,
            bench_power_ntr: bench.power_n_traj,
            bench_crossover_ntr: bench.crossover_n_traj,
            bench_t_max: bench.t_max,
            bench_stride: bench.sample_stride,
            bench_fit_floor: bench.fit_floor_secs,
            bench_gnuplot: false,
        }
    }

    /// Apply one key-value assignment (config file or flag spelling).
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse::<T>()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for key `{key}`")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(Error::Config(format!("invalid boolean `{value}` for key `{key}`"))),
            }
        }
        fn grid(key: &str, value: &str) -> Result<Vec<usize>> {
            value
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("invalid grid entry `{s}` in `{key}`")))
                })
                .collect()
        }
        match key {
            "l" => self.l = num(key, value)?,
            "t_par" => self.t_par = num(key, value)?,
            "t_perp" => self.t_perp = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "layout" => self.layout = ChainLayout::parse(value)?,
            "dephase_on_s" => self.dephase_on_s = flag(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "n_traj" => self.n_traj = num(key, value)?,
            "sample_stride" => self.sample_stride = num(key, value)?,
            "master_seed" => self.master_seed = num(key, value)?,
            "parallel" => self.parallel = flag(key, value)?,
            "method" => self.method = Method::parse(value)?,
            "pairs" => self.pairs = value.into(),
            "log_mi" => self.log_mi = flag(key, value)?,
            "deadband" => self.deadband = num(key, value)?,
            "n_boot" => self.n_boot = num(key, value)?,
            "n_blocks" => self.n_blocks = num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "dump" => self.dump = Some(DumpFormat::parse(value)?),
            "validate_tol" => self.validate_tol = num(key, value)?,
            "bench_crossover_grid" => self.bench_crossover_grid = grid(key, value)?,
            "bench_power_grid" => self.bench_power_grid = grid(key, value)?,
            "bench_ntr_grid" => self.bench_ntr_grid = grid(key, value)?,
            "bench_ntr_l" => self.bench_ntr_l = num(key, value)?,
            "bench_power_ntr" => self.bench_power_ntr = num(key, value)?,
            "bench_crossover_ntr" => self.bench_crossover_ntr = num(key, value)?,
            "bench_t_max" => self.bench_t_max = num(key, value)?,
            "bench_stride" => self.bench_stride = num(key, value)?,
            "bench_fit_floor" => self.bench_fit_floor = num(key, value)?,
            "bench_gnuplot" => self.bench_gnuplot = flag(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parse a flat config file into ordered key-value pairs.
    pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {} is not `key = value`: `{raw}`",
                    lineno + 1
                )));
            };
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(out)
    }

    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (k, v) in Self::parse_file(text)? {
            self.apply_kv(&k, &v)?;
        }
        Ok(())
    }

    /// Range checks plus the dense-size refusal.
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::Config("l must be at least 1".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_max < self.dt {
            return Err(Error::Config(format!(
                "t_max ({}) must be at least dt ({})",
                self.t_max, self.dt
            )));
        }
        if self.n_traj == 0 || self.sample_stride == 0 {
            return Err(Error::Config("n_traj and sample_stride must be at least 1".into()));
        }
        if self.deadband < 0.0 {
            return Err(Error::Config("deadband must be >= 0".into()));
        }
        let needs_dense = self.method == Method::Dense || self.command == CommandKind::Validate;
        if needs_dense && self.l > crate::bench::DENSE_MAX_L {
            return Err(Error::Resource(format!(
                "the dense method is refused for L = {} (> {})",
                self.l,
                crate::bench::DENSE_MAX_L
            )));
        }
        match self.command {
            CommandKind::Lfs if self.layout != ChainLayout::SAB => {
                return Err(Error::Config("the lfs command needs layout = sab".into()));
            }
            CommandKind::Blp if self.layout == ChainLayout::SAB => {
                return Err(Error::Config("the blp command runs on layout s or sb".into()));
            }
            _ => {}
        }
        if self.dephase_on_s && self.layout == ChainLayout::SB && self.t_perp != 0.0 {
            log::warn!("dephasing on S while coupled to B is an unusual configuration");
        }
        Ok(())
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            l: self.l,
            layout: self.layout,
            t_par: self.t_par,
            t_perp: self.t_perp,
            gamma: self.gamma,
            dephase_on: if self.dephase_on_s || self.layout == ChainLayout::SOnly {
                Chain::S
            } else {
                Chain::B
            },
            periodic: false,
        }
    }

    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            dt: self.dt,
            t_max: self.t_max,
            n_traj: self.n_traj,
            sample_stride: self.sample_stride,
            master_seed: self.master_seed,
            parallel: self.parallel,
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            crossover_l_grid: self.bench_crossover_grid.clone(),
            power_l_grid: self.bench_power_grid.clone(),
            power_n_traj: self.bench_power_ntr,
            ntr_grid: self.bench_ntr_grid.clone(),
            ntr_l: self.bench_ntr_l,
            crossover_n_traj: self.bench_crossover_ntr,
            dt: self.dt,
            t_max: self.bench_t_max,
            sample_stride: self.bench_stride,
            master_seed: self.master_seed,
            fit_floor_secs: self.bench_fit_floor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_point() {
        let cfg = RunConfig::defaults(CommandKind::Blp);
        assert_eq!(cfg.l, 2);
        assert_eq!(cfg.t_par, 1.0);
        assert_eq!(cfg.t_perp, 1.0);
        assert_eq!(cfg.gamma, 1.0);
        assert_eq!(cfg.dt, 0.02);
        assert_eq!(cfg.t_max, 10.0);
        assert_eq!(cfg.n_traj, 500);
        assert_eq!(cfg.layout, ChainLayout::SB);
        cfg.validate().unwrap();
        let lfs = RunConfig::defaults(CommandKind::Lfs);
        assert_eq!(lfs.layout, ChainLayout::SAB);
        lfs.validate().unwrap();
    }

    #[test]
    fn file_then_flag_precedence() {
        let mut cfg = RunConfig::defaults(CommandKind::Blp);
        cfg.apply_file("gamma = 0.5\nn_traj = 100 # comment\n\n# full-line comment\n").unwrap();
        assert_eq!(cfg.gamma, 0.5);
        assert_eq!(cfg.n_traj, 100);
        cfg.apply_kv("gamma", "2.0").unwrap();
        assert_eq!(cfg.gamma, 2.0);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let mut cfg = RunConfig::defaults(CommandKind::Blp);
        assert!(matches!(cfg.apply_kv("gammma", "1.0"), Err(Error::Config(_))));
        assert!(matches!(cfg.apply_kv("gamma", "fast"), Err(Error::Config(_))));
        assert!(matches!(cfg.apply_file("just a line\n"), Err(Error::Config(_))));
    }

    #[test]
    fn zero_gamma_is_accepted() {
        let mut cfg = RunConfig::defaults(CommandKind::Blp);
        cfg.apply_kv("gamma", "0").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn dense_size_guard() {
        let mut cfg = RunConfig::defaults(CommandKind::Simulate);
        cfg.apply_kv("method", "dense").unwrap();
        cfg.apply_kv("l", "8").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Resource(_))));
        cfg.apply_kv("l", "6").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn layout_command_compatibility() {
        let mut cfg = RunConfig::defaults(CommandKind::Lfs);
        cfg.apply_kv("layout", "sb").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::defaults(CommandKind::Blp);
        cfg.apply_kv("layout", "sab").unwrap();
        assert!(cfg.validate().is_err());
    }
}
