//! Seeded channel generation with a controllable intra-cell correlation.
//!
//! Every intra-cell channel is drawn as `√ρ·h₀ + √(1−ρ)·eᵤ` where `h₀` is
//! one shared vector per cell and `eᵤ` is an independent per-user vector,
//! all with i.i.d. CN(0, 1) entries. Inter-cell channels are independent
//! CN(0, I) draws scaled in amplitude by the cross-cell gain `ι`.
//!
//! Each link draws from its own ChaCha stream keyed by (BS, cell, local user
//! index), so growing a topology never perturbs the draws of existing links.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{inner, is_finite, norm, norm_sqr};
use crate::{Error, Result, C64};

pub const DEFAULT_NOISE_POWER: f64 = 1.0;
pub const DEFAULT_POWER_BUDGET: f64 = 10.0;
pub const DEFAULT_CROSS_CELL_GAIN: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub num_cells: usize,
    pub antennas_per_cell: usize,
    pub users_per_cell: usize,
    /// `channel[b][u]`: channel from BS `b` to global user `u`.
    pub channel: Vec<Vec<Vec<C64>>>,
    pub noise_power: f64,
    /// Per-BS transmit power budget.
    pub power_budget: f64,
    pub cell_of: Vec<usize>,
    pub seed: u64,
}

impl NetworkInstance {
    pub fn num_users(&self) -> usize {
        self.cell_of.len()
    }

    pub fn users_in_cell(&self, cell: usize) -> Range<usize> {
        cell * self.users_per_cell..(cell + 1) * self.users_per_cell
    }

    /// Channel from BS `bs` to user `user`.
    #[inline]
    pub fn link(&self, bs: usize, user: usize) -> &[C64] {
        &self.channel[bs][user]
    }

    /// Channel carrying user `signal`'s beam to receiver `receiver`.
    #[inline]
    pub fn signal_link(&self, signal: usize, receiver: usize) -> &[C64] {
        &self.channel[self.cell_of[signal]][receiver]
    }

    /// Norm of the user's channel from its serving BS.
    pub fn data_channel_norm(&self, user: usize) -> f64 {
        norm(self.link(self.cell_of[user], user))
    }

    /// Single-cell instance holding only cell `cell`'s users and their data
    /// channels. Inter-cell links are dropped.
    pub fn cell_subinstance(&self, cell: usize) -> NetworkInstance {
        let users = self.users_in_cell(cell);
        NetworkInstance {
            num_cells: 1,
            antennas_per_cell: self.antennas_per_cell,
            users_per_cell: self.users_per_cell,
            channel: vec![users.map(|u| self.channel[cell][u].clone()).collect()],
            noise_power: self.noise_power,
            power_budget: self.power_budget,
            cell_of: vec![0; self.users_per_cell],
            seed: self.seed,
        }
    }

    /// Checks the structural invariants. Inter-cell links may be zero
    /// (cross-cell gain 0); every data channel must be nonzero.
    pub fn validate(&self) -> Result<()> {
        if self.num_cells == 0 || self.antennas_per_cell == 0 || self.users_per_cell == 0 {
            return Err(Error::Dimension(
                "cells, antennas and users per cell must be positive".into(),
            ));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(invalid("noise_power", self.noise_power));
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return Err(invalid("power_budget", self.power_budget));
        }
        let k = self.num_cells * self.users_per_cell;
        if self.cell_of.len() != k || self.channel.len() != self.num_cells {
            return Err(Error::Dimension("cell map or channel table size".into()));
        }
        for (u, &c) in self.cell_of.iter().enumerate() {
            if c != u / self.users_per_cell {
                return Err(Error::Dimension(format!("user {u} mapped to cell {c}")));
            }
        }
        for row in &self.channel {
            if row.len() != k {
                return Err(Error::Dimension("channel row length".into()));
            }
            for h in row {
                if h.len() != self.antennas_per_cell || !is_finite(h) {
                    return Err(Error::Dimension("channel vector length or finiteness".into()));
                }
            }
        }
        for u in 0..k {
            if norm_sqr(self.link(self.cell_of[u], u)) == 0.0 {
                return Err(Error::ZeroNorm);
            }
        }
        Ok(())
    }
}

fn invalid(field: &'static str, v: f64) -> Error {
    Error::InvalidParameter {
        field,
        message: format!("{v} is out of range"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGenConfig {
    /// Intra-cell correlation knob ρ ∈ [0, 1].
    pub corr_target: f64,
    /// Amplitude attenuation ι ∈ [0, 1] of inter-cell links.
    pub cross_cell_gain: f64,
    pub seed: u64,
    pub noise_power: f64,
    pub power_budget: f64,
}

impl Default for ChannelGenConfig {
    fn default() -> Self {
        Self {
            corr_target: 0.5,
            cross_cell_gain: DEFAULT_CROSS_CELL_GAIN,
            seed: 0,
            noise_power: DEFAULT_NOISE_POWER,
            power_budget: DEFAULT_POWER_BUDGET,
        }
    }
}

impl ChannelGenConfig {
    pub fn new(corr_target: f64, seed: u64) -> Self {
        Self {
            corr_target,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.corr_target) {
            return Err(invalid("corr_target", self.corr_target));
        }
        if !(0.0..=1.0).contains(&self.cross_cell_gain) {
            return Err(invalid("cross_cell_gain", self.cross_cell_gain));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(invalid("noise_power", self.noise_power));
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return Err(invalid("power_budget", self.power_budget));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum StreamKind {
    Shared = 1,
    Own = 2,
    Cross = 3,
}

fn stream_id(kind: StreamKind, bs: usize, cell: usize, local: usize) -> u64 {
    ((kind as u64) << 56) | ((bs as u64) << 40) | ((cell as u64) << 24) | local as u64
}

/// `n` i.i.d. CN(0, 1) entries from the given substream of `seed`.
fn draw_cn(seed: u64, stream: u64, n: usize) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re * s, im * s)
        })
        .collect()
}

pub fn generate_single_cell(
    num_users: usize,
    antennas: usize,
    cfg: &ChannelGenConfig,
) -> Result<NetworkInstance> {
    generate_multi_cell(1, num_users, antennas, cfg)
}

pub fn generate_multi_cell(
    num_cells: usize,
    users_per_cell: usize,
    antennas: usize,
    cfg: &ChannelGenConfig,
) -> Result<NetworkInstance> {
    cfg.validate()?;
    if num_cells == 0 {
        return Err(Error::InvalidParameter {
            field: "num_cells",
            message: "must be at least 1".into(),
        });
    }
    if users_per_cell == 0 {
        return Err(Error::InvalidParameter {
            field: "users_per_cell",
            message: "must be at least 1".into(),
        });
    }
    if antennas == 0 {
        return Err(Error::InvalidParameter {
            field: "antennas",
            message: "must be at least 1".into(),
        });
    }
    if num_cells >= 1 << 16 || users_per_cell >= 1 << 24 {
        return Err(Error::Dimension("topology too large for stream keys".into()));
    }

    let k = num_cells * users_per_cell;
    let shared_amp = cfg.corr_target.sqrt();
    let own_amp = (1.0 - cfg.corr_target).sqrt();
    let shared: Vec<Vec<C64>> = (0..num_cells)
        .map(|c| draw_cn(cfg.seed, stream_id(StreamKind::Shared, c, c, 0), antennas))
        .collect();

    let mut channel = vec![Vec::with_capacity(k); num_cells];
    for (bs, row) in channel.iter_mut().enumerate() {
        for u in 0..k {
            let cell = u / users_per_cell;
            let local = u % users_per_cell;
            let h = if bs == cell {
                let own = draw_cn(cfg.seed, stream_id(StreamKind::Own, bs, cell, local), antennas);
                shared[cell]
                    .iter()
                    .zip(&own)
                    .map(|(s, e)| s * shared_amp + e * own_amp)
                    .collect()
            } else {
                draw_cn(cfg.seed, stream_id(StreamKind::Cross, bs, cell, local), antennas)
                    .into_iter()
                    .map(|x| x * cfg.cross_cell_gain)
                    .collect()
            };
            row.push(h);
        }
    }

    let inst = NetworkInstance {
        num_cells,
        antennas_per_cell: antennas,
        users_per_cell,
        channel,
        noise_power: cfg.noise_power,
        power_budget: cfg.power_budget,
        cell_of: (0..k).map(|u| u / users_per_cell).collect(),
        seed: cfg.seed,
    };
    inst.validate()?;
    Ok(inst)
}

/// `|h_iᴴh_j| / (‖h_i‖·‖h_j‖)`, clamped into `[0, 1]`.
pub fn pairwise_correlation(hi: &[C64], hj: &[C64]) -> Result<f64> {
    if hi.len() != hj.len() {
        return Err(Error::Dimension(format!(
            "correlation of vectors of length {} and {}",
            hi.len(),
            hj.len()
        )));
    }
    let (ni, nj) = (norm(hi), norm(hj));
    if ni == 0.0 || nj == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((inner(hi, hj).norm() / (ni * nj)).min(1.0))
}

/// Correlation between two users' data channels (each from its own BS).
pub fn user_correlation(inst: &NetworkInstance, i: usize, j: usize) -> f64 {
    pairwise_correlation(
        inst.link(inst.cell_of[i], i),
        inst.link(inst.cell_of[j], j),
    )
    .expect("validated instance has nonzero data channels")
}
