//! Search over valid SIC matrices.
//!
//! Every candidate matrix is scored the same way: beams optimized from the
//! zero-forcing initialization with the inner optimizer settings, scored by
//! true sum rate. Because that score is a deterministic function of the
//! matrix, the exhaustive oracle dominates local search, and local search
//! (whose start pool always contains the all-zero matrix) dominates SDMA.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamforming::{optimize_beams, zf_init_all, OptimizerConfig};
use crate::channel::{user_correlation, NetworkInstance};
use crate::sic::{is_stronger, validate, BeamformingSolution, PairState, SicMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Correlation threshold for the greedy rule.
    pub tau: f64,
    pub exhaustive_limit: usize,
    pub inner_opt: OptimizerConfig,
    /// Maximum accepted moves per local-search run.
    pub flip_budget: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            exhaustive_limit: 4,
            inner_opt: OptimizerConfig {
                max_iters: 100,
                ..OptimizerConfig::default()
            },
            flip_budget: 200,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidParameter {
                field: "tau",
                message: format!("{} is outside [0, 1]", self.tau),
            });
        }
        self.inner_opt.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub sic: SicMatrix,
    pub beams: BeamformingSolution,
    pub sum_rate: f64,
    pub candidates_evaluated: usize,
    pub accepted_moves: usize,
}

/// Scores a SIC matrix: inner optimization from ZF, best true sum rate.
pub fn evaluate_candidate(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    opt: &OptimizerConfig,
) -> Result<(BeamformingSolution, f64)> {
    let (beams, trace) = optimize_beams(inst, sic, &zf_init_all(inst), opt)?;
    Ok((beams, trace.best_sum_rate))
}

/// Intra-cell unordered pairs `(a, b)`, `a < b`, in lexicographic order.
pub fn intra_cell_pairs(inst: &NetworkInstance) -> Vec<(usize, usize)> {
    let n = inst.num_users();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if inst.cell_of[a] == inst.cell_of[b] {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

const PAIR_STATES: [PairState; 3] = [
    PairState::None,
    PairState::FirstDecodedBySecond,
    PairState::SecondDecodedByFirst,
];

/// Every valid SIC matrix of a single-cell instance, one per assignment of
/// {none, a→b, b→a} to each unordered pair.
pub fn enumerate_valid_matrices(num_users: usize) -> Vec<SicMatrix> {
    let pairs: Vec<(usize, usize)> = (0..num_users)
        .flat_map(|a| (a + 1..num_users).map(move |b| (a, b)))
        .collect();
    let total = 3usize.pow(pairs.len() as u32);
    (0..total)
        .map(|mut code| {
            let mut m = SicMatrix::zeros(num_users);
            for &(a, b) in &pairs {
                m.set_pair_state(a, b, PAIR_STATES[code % 3]);
                code /= 3;
            }
            m
        })
        .collect()
}

/// Picks the highest sum rate; equal rates go to the smaller matrix.
fn better(a: &(SicMatrix, BeamformingSolution, f64), b: &(SicMatrix, BeamformingSolution, f64)) -> bool {
    a.2 > b.2 || (a.2 == b.2 && a.0 < b.0)
}

pub fn exhaustive_search(inst: &NetworkInstance, cfg: &SearchConfig) -> Result<SearchOutcome> {
    cfg.validate()?;
    if inst.num_cells != 1 {
        return Err(Error::InvalidParameter {
            field: "num_cells",
            message: "exhaustive search runs on single-cell instances".into(),
        });
    }
    let k = inst.num_users();
    if k > cfg.exhaustive_limit {
        return Err(Error::InvalidParameter {
            field: "exhaustive_limit",
            message: format!("{k} users exceed the exhaustive limit {}", cfg.exhaustive_limit),
        });
    }
    let candidates = enumerate_valid_matrices(k);
    let scored: Vec<(SicMatrix, BeamformingSolution, f64)> = candidates
        .into_par_iter()
        .map(|m| evaluate_candidate(inst, &m, &cfg.inner_opt).map(|(w, r)| (m, w, r)))
        .collect::<Result<_>>()?;
    let count = scored.len();
    let best = scored
        .into_iter()
        .reduce(|acc, x| if better(&x, &acc) { x } else { acc })
        .expect("at least the all-zero matrix");
    Ok(SearchOutcome {
        sic: best.0,
        beams: best.1,
        sum_rate: best.2,
        candidates_evaluated: count,
        accepted_moves: 0,
    })
}

/// Stronger user (by data-channel norm) decodes the weaker one for every
/// intra-cell pair whose correlation exceeds `tau`.
pub fn greedy_correlation(inst: &NetworkInstance, cfg: &SearchConfig) -> SicMatrix {
    let mut m = SicMatrix::zeros(inst.num_users());
    for (a, b) in intra_cell_pairs(inst) {
        if user_correlation(inst, a, b) > cfg.tau {
            let (strong, weak) = if is_stronger(inst, a, b) { (a, b) } else { (b, a) };
            m.set(weak, strong, true);
        }
    }
    m
}

/// All single-pair state changes of `sic`, in pair then state order.
pub fn neighbors(inst: &NetworkInstance, sic: &SicMatrix) -> Vec<SicMatrix> {
    let mut out = Vec::new();
    for (a, b) in intra_cell_pairs(inst) {
        let current = sic.pair_state(a, b);
        for state in PAIR_STATES {
            if state != current {
                let mut m = sic.clone();
                m.set_pair_state(a, b, state);
                out.push(m);
            }
        }
    }
    out
}

struct Evaluator<'a> {
    inst: &'a NetworkInstance,
    opt: &'a OptimizerConfig,
    cache: HashMap<SicMatrix, (BeamformingSolution, f64)>,
    evaluated: usize,
}

impl Evaluator<'_> {
    fn score_all(&mut self, mats: &[SicMatrix]) -> Result<Vec<f64>> {
        let missing: Vec<&SicMatrix> = mats
            .iter()
            .filter(|m| !self.cache.contains_key(*m))
            .collect();
        let fresh: Vec<(SicMatrix, (BeamformingSolution, f64))> = missing
            .into_par_iter()
            .map(|m| evaluate_candidate(self.inst, m, self.opt).map(|r| (m.clone(), r)))
            .collect::<Result<_>>()?;
        self.evaluated += fresh.len();
        self.cache.extend(fresh);
        Ok(mats.iter().map(|m| self.cache[m].1).collect())
    }

    fn steepest_ascent(&mut self, start: &SicMatrix, budget: usize) -> Result<(SicMatrix, f64, usize)> {
        let mut current = start.clone();
        let mut value = self.score_all(std::slice::from_ref(&current))?[0];
        let mut moves = 0;
        while moves < budget {
            let cands = neighbors(self.inst, &current);
            let scores = self.score_all(&cands)?;
            let mut best: Option<usize> = None;
            for (idx, &s) in scores.iter().enumerate() {
                if s > value && best.is_none_or(|b| s > scores[b]) {
                    best = Some(idx);
                }
            }
            let Some(idx) = best else { break };
            value = scores[idx];
            current = cands[idx].clone();
            moves += 1;
        }
        Ok((current, value, moves))
    }
}

/// Steepest-ascent local search. The start is the better of `d0` and the
/// all-zero matrix, ties going to `d0`, so the result never scores below
/// SDMA under the same inner optimizer.
pub fn local_search(
    inst: &NetworkInstance,
    d0: &SicMatrix,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    validate(d0, inst)?;
    let mut ev = Evaluator {
        inst,
        opt: &cfg.inner_opt,
        cache: HashMap::new(),
        evaluated: 0,
    };
    let zero = SicMatrix::zeros(inst.num_users());
    let starts = [d0.clone(), zero];
    let scores = ev.score_all(&starts)?;
    let start = if scores[1] > scores[0] { &starts[1] } else { &starts[0] };
    let best = ev.steepest_ascent(start, cfg.flip_budget)?;
    let beams = ev.cache[&best.0].0.clone();
    Ok(SearchOutcome {
        sic: best.0,
        beams,
        sum_rate: best.1,
        candidates_evaluated: ev.evaluated,
        accepted_moves: best.2,
    })
}
