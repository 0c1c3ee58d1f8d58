//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Command-line overrides are applied after the file, using the
//! same keys, and the merged result is validated once.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamforming::{GradMode, OptimizerConfig};
use crate::channel::{DEFAULT_CROSS_CELL_GAIN, DEFAULT_NOISE_POWER, DEFAULT_POWER_BUDGET};
use crate::coordination::{Aggregation, GnnArchitecture};
use crate::search::SearchConfig;
use crate::sic::{Scheme, SearchStrategy};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub cells: usize,
    pub users_per_cell: usize,
    pub antennas: usize,
    pub corr_grid: Vec<f64>,
    pub cross_gain: f64,
    pub noise_power: f64,
    pub power_budget: f64,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub base_seed: u64,
    pub optimizer: OptimizerConfig,
    pub search: SearchConfig,
    /// Exchange rounds of the distributed pattern.
    pub rounds: usize,
    pub gnn_depth: usize,
    /// One size for every layer, or one per layer.
    pub gnn_embed: Vec<usize>,
    pub gnn_hidden: usize,
    pub gnn_aggregation: Aggregation,
    pub gnn_seed: u64,
    pub gnn_weights: Option<PathBuf>,
    /// Write measured wall time; when off, `wall_ms` is written as 0.
    pub timing: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cells: 3,
            users_per_cell: 6,
            antennas: 4,
            corr_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            cross_gain: DEFAULT_CROSS_CELL_GAIN,
            noise_power: DEFAULT_NOISE_POWER,
            power_budget: DEFAULT_POWER_BUDGET,
            schemes: vec![
                Scheme::Sdma,
                Scheme::BbNoma,
                Scheme::CbNoma(None),
                Scheme::ClusterFree(SearchStrategy::GreedyLocal),
            ],
            trials: 30,
            base_seed: 1,
            optimizer: OptimizerConfig::default(),
            search: SearchConfig::default(),
            rounds: 10,
            gnn_depth: 2,
            gnn_embed: vec![16],
            gnn_hidden: 32,
            gnn_aggregation: Aggregation::Mean,
            gnn_seed: 7,
            gnn_weights: None,
            timing: true,
            out: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "cells",
    "users",
    "antennas",
    "corr",
    "cross_gain",
    "noise_power",
    "power_budget",
    "schemes",
    "trials",
    "seed",
    "rounds",
    "gnn_depth",
    "gnn_embed",
    "gnn_hidden",
    "gnn_aggregation",
    "gnn_seed",
    "gnn_weights",
    "beta",
    "max_iters",
    "order_refresh",
    "step_init",
    "armijo_c",
    "backtrack_factor",
    "tol",
    "grad_mode",
    "tau",
    "exhaustive_limit",
    "inner_max_iters",
    "flip_budget",
    "timing",
    "out",
];

fn field_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(field: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| field_err(field, format!("cannot parse `{}`", v.trim())))
}

fn list<T: std::str::FromStr>(field: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(field, s))
        .collect()
}

/// Splits a config file into `(line number, key, value)` triples.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::ConfigSyntax {
                line: line_no,
                message: format!("expected `key = value`, found `{line}`"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::ConfigSyntax {
                line: line_no,
                message: "empty key".into(),
            });
        }
        if !KEYS.contains(&key) {
            return Err(Error::ConfigSyntax {
                line: line_no,
                message: format!("unknown key `{key}`"),
            });
        }
        out.push((line_no, key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Defaults, then the optional file, then `overrides` in order.
    pub fn from_sources(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (line, key, value) in parse_kv(&text)? {
                cfg.set(&key, &value).map_err(|e| match e {
                    Error::Config { field, message } => Error::Config {
                        field,
                        message: format!("{message} (line {line})"),
                    },
                    other => other,
                })?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "cells" => self.cells = num(key, value)?,
            "users" => self.users_per_cell = num(key, value)?,
            "antennas" => self.antennas = num(key, value)?,
            "corr" => self.corr_grid = list(key, value)?,
            "cross_gain" => self.cross_gain = num(key, value)?,
            "noise_power" => self.noise_power = num(key, value)?,
            "power_budget" => self.power_budget = num(key, value)?,
            "schemes" => {
                self.schemes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<Scheme>().map_err(|m| field_err(key, m)))
                    .collect::<Result<_>>()?
            }
            "trials" => self.trials = num(key, value)?,
            "seed" => self.base_seed = num(key, value)?,
            "rounds" => self.rounds = num(key, value)?,
            "gnn_depth" => self.gnn_depth = num(key, value)?,
            "gnn_embed" => self.gnn_embed = list(key, value)?,
            "gnn_hidden" => self.gnn_hidden = num(key, value)?,
            "gnn_aggregation" => {
                self.gnn_aggregation = value.parse().map_err(|m: String| field_err(key, m))?
            }
            "gnn_seed" => self.gnn_seed = num(key, value)?,
            "gnn_weights" => {
                self.gnn_weights = (!value.trim().is_empty()).then(|| PathBuf::from(value.trim()))
            }
            "beta" => self.optimizer.beta = num(key, value)?,
            "max_iters" => self.optimizer.max_iters = num(key, value)?,
            "order_refresh" => self.optimizer.order_refresh_period = num(key, value)?,
            "step_init" => self.optimizer.step_init = num(key, value)?,
            "armijo_c" => self.optimizer.armijo_c = num(key, value)?,
            "backtrack_factor" => self.optimizer.backtrack_factor = num(key, value)?,
            "tol" => self.optimizer.tol = num(key, value)?,
            "grad_mode" => {
                self.optimizer.grad_mode = match value.trim() {
                    "analytic" => GradMode::Analytic,
                    "finite_difference" => GradMode::FiniteDifference,
                    other => return Err(field_err(key, format!("unknown mode `{other}`"))),
                }
            }
            "tau" => self.search.tau = num(key, value)?,
            "exhaustive_limit" => self.search.exhaustive_limit = num(key, value)?,
            "inner_max_iters" => self.search.inner_opt.max_iters = num(key, value)?,
            "flip_budget" => self.search.flip_budget = num(key, value)?,
            "timing" => self.timing = num(key, value)?,
            "out" => self.out = (!value.trim().is_empty()).then(|| PathBuf::from(value.trim())),
            other => return Err(field_err(other, "unknown key")),
        }
        // Inner optimizer shares every setting but the iteration budget.
        let inner_iters = self.search.inner_opt.max_iters;
        self.search.inner_opt = OptimizerConfig {
            max_iters: inner_iters,
            ..self.optimizer
        };
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(field_err("cells", "must be at least 1"));
        }
        if self.users_per_cell == 0 {
            return Err(field_err("users", "must be at least 1"));
        }
        if self.antennas == 0 {
            return Err(field_err("antennas", "must be at least 1"));
        }
        if self.corr_grid.is_empty() {
            return Err(field_err("corr", "grid must not be empty"));
        }
        if let Some(bad) = self.corr_grid.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(field_err("corr", format!("{bad} is outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.cross_gain) {
            return Err(field_err("cross_gain", format!("{} is outside [0, 1]", self.cross_gain)));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(field_err("noise_power", "must be positive"));
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return Err(field_err("power_budget", "must be positive"));
        }
        if self.schemes.is_empty() {
            return Err(field_err("schemes", "at least one scheme is required"));
        }
        if self.trials == 0 {
            return Err(field_err("trials", "must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(field_err("rounds", "must be at least 1"));
        }
        for s in &self.schemes {
            if let Scheme::CbNoma(Some(n)) = s {
                if *n == 0 || *n > self.users_per_cell {
                    return Err(field_err("schemes", format!("cb_noma:{n} needs 1..={} clusters", self.users_per_cell)));
                }
            }
        }
        if let Err(e) = self.optimizer.validate() {
            return Err(field_err("optimizer", e.to_string()));
        }
        if let Err(e) = self.search.validate() {
            return Err(field_err("tau", e.to_string()));
        }
        self.gnn_arch()?;
        Ok(())
    }

    pub fn gnn_arch(&self) -> Result<GnnArchitecture> {
        if self.gnn_depth == 0 {
            return Err(field_err("gnn_depth", "must be at least 1"));
        }
        let embed_size = match self.gnn_embed.len() {
            1 => vec![self.gnn_embed[0]; self.gnn_depth],
            n if n == self.gnn_depth => self.gnn_embed.clone(),
            n => {
                return Err(field_err(
                    "gnn_embed",
                    format!("{n} sizes given for depth {}", self.gnn_depth),
                ))
            }
        };
        if embed_size.contains(&0) {
            return Err(field_err("gnn_embed", "sizes must be positive"));
        }
        if self.gnn_hidden == 0 {
            return Err(field_err("gnn_hidden", "must be positive"));
        }
        Ok(GnnArchitecture {
            embed_size,
            hidden_width: self.gnn_hidden,
            aggregation: self.gnn_aggregation,
        })
    }
}
