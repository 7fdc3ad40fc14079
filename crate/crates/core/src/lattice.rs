// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! The two/three-chain lattice model: single-particle hopping Hamiltonian
//! plus a dephasing site set.
//!
//! Chains are laid out chain-major, site-minor: all of `S` first, then `A`
//! (when present), then `B`. Jordan-Wigner sign strings in the dense oracle
//! depend on this ordering, and so does the convention that tracing out `B`
//! keeps the leading modes.
//!
//! * `S` — the observed system chain, intra-chain hopping `t_par`.
//! * `B` — the dissipative chain, intra-chain hopping `t_par`, coupled to `S`
//!   site-by-site with rung hopping `t_perp`, carrying dephasing jump
//!   operators `L_i = sqrt(gamma) n_i`.
//! * `A` — an idle ancilla chain mirroring `S`: no Hamiltonian terms, no
//!   dissipation. Used by the mutual-information measure.
//!
//! For Markovian control runs the dephasing can be placed directly on `S`
//! (with `B` absent or decoupled); the standard configuration keeps it on `B`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which chains exist, in mode order `S`, `A`, `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainLayout {
    /// A single chain `S`.
    #[serde(rename = "s")]
    SOnly,
    /// System plus dissipative chain.
    #[serde(rename = "sb")]
    SB,
    /// System, idle ancilla, dissipative chain.
    #[serde(rename = "sab")]
    SAB,
}

impl ChainLayout {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChainLayout::SOnly => "s",
            ChainLayout::SB => "sb",
            ChainLayout::SAB => "sab",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "s" | "s_only" => Ok(ChainLayout::SOnly),
            "sb" | "s+b" => Ok(ChainLayout::SB),
            "sab" | "s+a+b" => Ok(ChainLayout::SAB),
            other => Err(Error::Config(format!("unknown chain layout `{other}` (use s, sb, sab)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chain {
    S,
    A,
    B,
}

/// Parameters for [`build_model`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    /// Sites per chain.
    pub l: usize,
    pub layout: ChainLayout,
    /// Intra-chain hopping energy.
    pub t_par: f64,
    /// S-B rung hopping energy.
    pub t_perp: f64,
    /// Dephasing rate.
    pub gamma: f64,
    /// Which chain carries the dephasing operators.
    pub dephase_on: Chain,
    /// Periodic boundary conditions (open by default).
    pub periodic: bool,
}

impl ModelParams {
    /// The standard coupled-chain configuration: dephasing on `B`.
    pub fn coupled(l: usize, layout: ChainLayout, t_par: f64, t_perp: f64, gamma: f64) -> Self {
        let dephase_on = match layout {
            ChainLayout::SOnly => Chain::S,
            _ => Chain::B,
        };
        Self { l, layout, t_par, t_perp, gamma, dephase_on, periodic: false }
    }

    /// Markovian control: a bare `S` chain with dephasing directly on it.
    pub fn markovian_control(l: usize, t_par: f64, gamma: f64) -> Self {
        Self {
            l,
            layout: ChainLayout::SOnly,
            t_par,
            t_perp: 0.0,
            gamma,
            dephase_on: Chain::S,
            periodic: false,
        }
    }
}

/// Assembled lattice: single-particle Hamiltonian plus dissipation data.
#[derive(Debug, Clone)]
pub struct LatticeModel {
    params: ModelParams,
    h: DMatrix<f64>,
    dissipative_sites: Vec<usize>,
}

/// Serializable echo of the model for result files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub l: usize,
    pub layout: ChainLayout,
    pub t_par: f64,
    pub t_perp: f64,
    pub gamma: f64,
    pub dephase_on: Chain,
    pub periodic: bool,
    pub dissipative_sites: Vec<usize>,
}

/// Assemble the single-particle Hamiltonian and the dissipative site set.
pub fn build_model(params: ModelParams) -> Result<LatticeModel> {
    if params.l == 0 {
        return Err(Error::Config("model needs at least one site per chain".into()));
    }
    if params.gamma < 0.0 {
        return Err(Error::Config(format!("dephasing rate must be >= 0, got {}", params.gamma)));
    }
    let l = params.l;
    let (has_a, has_b) = match params.layout {
        ChainLayout::SOnly => (false, false),
        ChainLayout::SB => (false, true),
        ChainLayout::SAB => (true, true),
    };
    match params.dephase_on {
        Chain::A => {
            return Err(Error::Config("the idle ancilla chain A cannot carry dissipation".into()))
        }
        Chain::B if !has_b => {
            return Err(Error::Config("dephasing on B requires a layout with a B chain".into()))
        }
        _ => {}
    }

    let total = l * (1 + has_a as usize + has_b as usize);
    let s_off = 0usize;
    let b_off = if has_a { 2 * l } else { l };

    let mut h = DMatrix::zeros(total, total);
    let mut bond = |i: usize, j: usize, t: f64| {
        h[(i, j)] -= t;
        h[(j, i)] -= t;
    };
    // Intra-chain hopping on S and B; the A chain has no Hamiltonian terms.
    for (off, present) in [(s_off, true), (b_off, has_b)] {
        if !present {
            continue;
        }
        for i in 0..l.saturating_sub(1) {
            bond(off + i, off + i + 1, params.t_par);
        }
        if params.periodic && l > 2 {
            bond(off + l - 1, off, params.t_par);
        }
    }
    // Rungs.
    if has_b {
        for i in 0..l {
            bond(s_off + i, b_off + i, params.t_perp);
        }
    }

    let diss_off = match params.dephase_on {
        Chain::S => s_off,
        Chain::B => b_off,
        Chain::A => unreachable!(),
    };
    let dissipative_sites: Vec<usize> = (diss_off..diss_off + l).collect();

    Ok(LatticeModel { params, h, dissipative_sites })
}

impl LatticeModel {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn layout(&self) -> ChainLayout {
        self.params.layout
    }

    /// Sites per chain.
    pub fn sites_per_chain(&self) -> usize {
        self.params.l
    }

    pub fn total_modes(&self) -> usize {
        self.h.nrows()
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    /// Single-particle Hamiltonian matrix.
    pub fn hamiltonian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn dissipative_sites(&self) -> &[usize] {
        &self.dissipative_sites
    }

    pub fn s_modes(&self) -> std::ops::Range<usize> {
        0..self.params.l
    }

    pub fn a_modes(&self) -> Option<std::ops::Range<usize>> {
        match self.params.layout {
            ChainLayout::SAB => Some(self.params.l..2 * self.params.l),
            _ => None,
        }
    }

    pub fn b_modes(&self) -> Option<std::ops::Range<usize>> {
        let l = self.params.l;
        match self.params.layout {
            ChainLayout::SB => Some(l..2 * l),
            ChainLayout::SAB => Some(2 * l..3 * l),
            ChainLayout::SOnly => None,
        }
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            l: self.params.l,
            layout: self.params.layout,
            t_par: self.params.t_par,
            t_perp: self.params.t_perp,
            gamma: self.params.gamma,
            dephase_on: self.params.dephase_on,
            periodic: self.params.periodic,
            dissipative_sites: self.dissipative_sites.clone(),
        }
    }
}
