//! Multi-cell coordination patterns and their message overhead.
//!
//! Every BS observes the channels from itself to all users. The centralized
//! pattern uploads that CSI to a central unit, optimizes jointly and sends
//! each BS its users' beams. The distributed pattern exchanges, every round,
//! the interference power each BS imposes on every other BS's users, after
//! which each BS re-optimizes its own cell with that interference frozen.
//! The GNN pattern exchanges one embedded message per layer per directed BS
//! pair. Rounds are synchronous: round-`r` messages are computed from the
//! state at the end of round `r − 1`.

pub mod gnn;
pub mod ledger;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gnn::{gnn_forward, gnn_overhead_closed_form, Aggregation, GnnArchitecture, GnnWeights};
pub use ledger::{overhead_bits, Endpoint, LedgerEntry, OverheadLedger};

use crate::beamforming::{optimize_beams, optimize_problem, zf_init_all, OptimTrace, OptimizerConfig, Problem};
use crate::channel::NetworkInstance;
use crate::linalg::inner;
use crate::sic::{validate, BeamformingSolution, SicMatrix};
use crate::{Error, Result};

/// Bits of the centralized pattern: CSI upload plus beam download.
pub fn centralized_overhead_closed_form(num_cells: u64, users_per_cell: u64, antennas: u64) -> u64 {
    let k = num_cells * users_per_cell;
    ledger::BITS_PER_COMPLEX * num_cells * (k * antennas + users_per_cell * antennas)
}

/// Bits of the distributed pattern over `rounds` exchange rounds.
pub fn distributed_overhead_closed_form(num_cells: u64, users_per_cell: u64, rounds: u64) -> u64 {
    ledger::BITS_PER_REAL * rounds * num_cells * num_cells.saturating_sub(1) * users_per_cell
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralizedOutcome {
    pub beams: BeamformingSolution,
    pub ledger: OverheadLedger,
    pub trace: OptimTrace,
}

pub fn centralized_optimize(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    cfg: &OptimizerConfig,
) -> Result<CentralizedOutcome> {
    let nt = inst.antennas_per_cell as u64;
    let k = inst.num_users() as u64;
    let kc = inst.users_per_cell as u64;
    let mut ledger = OverheadLedger::new();
    for b in 0..inst.num_cells {
        ledger.record(1, Endpoint::Bs(b), Endpoint::Center, 0, k * nt);
    }
    let (beams, trace) = optimize_beams(inst, sic, &zf_init_all(inst), cfg)?;
    for b in 0..inst.num_cells {
        ledger.record(2, Endpoint::Center, Endpoint::Bs(b), 0, kc * nt);
    }
    Ok(CentralizedOutcome {
        beams,
        ledger,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributedOutcome {
    pub beams: BeamformingSolution,
    pub ledger: OverheadLedger,
    /// Global true sum rate after each round.
    pub objective_trace: Vec<f64>,
}

/// Restriction of `sic` to the users of `cell`, re-indexed from zero.
pub fn cell_sic(inst: &NetworkInstance, sic: &SicMatrix, cell: usize) -> SicMatrix {
    let users = inst.users_in_cell(cell);
    let base = users.start;
    let mut m = SicMatrix::zeros(users.len());
    for i in users.clone() {
        for k in users.clone() {
            if sic.get(i, k) {
                m.set(i - base, k - base, true);
            }
        }
    }
    m
}

/// Interference power BS `from` imposes on each of cell `to`'s users.
fn imposed_interference(
    inst: &NetworkInstance,
    beams: &BeamformingSolution,
    from: usize,
    to: usize,
) -> Vec<f64> {
    inst.users_in_cell(to)
        .map(|u| {
            inst.users_in_cell(from)
                .map(|j| inner(inst.link(from, u), &beams.beams[j]).norm_sqr())
                .sum()
        })
        .collect()
}

pub fn distributed_optimize(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    rounds: usize,
    cfg: &OptimizerConfig,
) -> Result<DistributedOutcome> {
    if rounds == 0 {
        return Err(Error::InvalidParameter {
            field: "rounds",
            message: "at least one round is required".into(),
        });
    }
    validate(sic, inst)?;
    let global = Problem::new(inst, sic)?;
    let cells = inst.num_cells;
    let subs: Vec<NetworkInstance> = (0..cells).map(|c| inst.cell_subinstance(c)).collect();
    let sub_sics: Vec<SicMatrix> = (0..cells).map(|c| cell_sic(inst, sic, c)).collect();
    let kc = inst.users_per_cell;

    let mut beams = zf_init_all(inst);
    let mut ledger = OverheadLedger::new();
    let mut objective_trace = Vec::with_capacity(rounds);

    for round in 1..=rounds {
        // Exchange, computed entirely from the previous round's beams.
        let mut received = vec![vec![0.0; kc]; cells];
        for from in 0..cells {
            for to in 0..cells {
                if from == to {
                    continue;
                }
                let msg = imposed_interference(inst, &beams, from, to);
                ledger.record(round, Endpoint::Bs(from), Endpoint::Bs(to), kc as u64, 0);
                for (acc, v) in received[to].iter_mut().zip(msg) {
                    *acc += v;
                }
            }
        }

        let updates: Vec<Vec<Vec<crate::C64>>> = (0..cells)
            .into_par_iter()
            .map(|c| {
                let start = BeamformingSolution::new(
                    inst.users_in_cell(c).map(|u| beams.beams[u].clone()).collect(),
                );
                let problem = Problem::new(&subs[c], &sub_sics[c])?
                    .with_extra_interference(&received[c])?;
                let (w, _) = optimize_problem(&problem, &start, cfg)?;
                Ok(w.beams)
            })
            .collect::<Result<_>>()?;
        for (c, cell_beams) in updates.into_iter().enumerate() {
            for (u, w) in inst.users_in_cell(c).zip(cell_beams) {
                beams.beams[u] = w;
            }
        }
        objective_trace.push(global.sum_rate(&beams));
    }

    Ok(DistributedOutcome {
        beams,
        ledger,
        objective_trace,
    })
}
