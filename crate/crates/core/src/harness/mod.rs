//! Seeded experiment sweeps with CSV output and a JSON run manifest.
//!
//! Instance seeds depend only on `(base seed, correlation index, trial)`, so
//! every scheme is evaluated on the same channels and comparisons are
//! paired. Rows are sorted by `(corr, trial, scheme)` before writing, so the
//! CSV does not depend on execution order. Only `wall_ms` varies between
//! runs, and it can be pinned to zero with `timing = false`.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::ExperimentConfig;

use crate::beamforming::{optimize_beams, zf_init_all};
use crate::channel::{generate_multi_cell, ChannelGenConfig, NetworkInstance};
use crate::coordination::gnn::GnnDims;
use crate::coordination::{
    centralized_optimize, centralized_overhead_closed_form, distributed_optimize, gnn_forward,
    GnnWeights,
};
use crate::search::{exhaustive_search, greedy_correlation, local_search, SearchConfig};
use crate::sic::{
    rate_report, scheme_bb_noma, scheme_cb_noma, scheme_sdma, BeamformingSolution, Scheme,
    SearchStrategy, SicMatrix,
};
use crate::{Error, Result};

pub const CSV_HEADER: &str =
    "corr,scheme,trial,seed,sum_rate_bps_hz,iterations,wall_ms,overhead_bits";

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "NOMA_FORGE_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub corr: f64,
    pub scheme: String,
    pub trial: usize,
    pub seed: u64,
    pub sum_rate_bps_hz: f64,
    pub iterations: usize,
    pub wall_ms: u64,
    pub overhead_bits: u64,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Instance seed for one `(correlation index, trial)` cell of a sweep.
pub fn instance_seed(base_seed: u64, corr_index: usize, trial: usize) -> u64 {
    mix(mix(mix(base_seed) ^ corr_index as u64) ^ trial as u64)
}

pub fn channel_config(cfg: &ExperimentConfig, corr: f64, seed: u64) -> ChannelGenConfig {
    ChannelGenConfig {
        corr_target: corr,
        cross_cell_gain: cfg.cross_gain,
        seed,
        noise_power: cfg.noise_power,
        power_budget: cfg.power_budget,
    }
}

pub fn make_instance(cfg: &ExperimentConfig, corr: f64, seed: u64) -> Result<NetworkInstance> {
    generate_multi_cell(
        cfg.cells,
        cfg.users_per_cell,
        cfg.antennas,
        &channel_config(cfg, corr, seed),
    )
}

/// Runs `f` on a rayon pool sized by `NOMA_FORGE_THREADS` when set.
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| Error::Config {
            field: THREADS_ENV.into(),
            message: format!("cannot parse `{v}`"),
        })?;
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config {
        field: THREADS_ENV.into(),
        message: e.to_string(),
    })?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub sic: SicMatrix,
    pub beams: BeamformingSolution,
    pub sum_rate: f64,
    pub iterations: usize,
}

/// Best of full optimizations over `candidates`; ties keep the earlier one.
fn best_full_optimization(
    inst: &NetworkInstance,
    candidates: Vec<SicMatrix>,
    cfg: &ExperimentConfig,
) -> Result<SchemeResult> {
    let w0 = zf_init_all(inst);
    let mut best: Option<SchemeResult> = None;
    for sic in candidates {
        let (beams, trace) = optimize_beams(inst, &sic, &w0, &cfg.optimizer)?;
        let r = SchemeResult {
            sic,
            beams,
            sum_rate: trace.best_sum_rate,
            iterations: trace.iterations,
        };
        if best.as_ref().is_none_or(|b| r.sum_rate > b.sum_rate) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Builds the scheme's SIC matrix and beams on one instance.
///
/// SDMA and BB-NOMA optimize beams from ZF. CB-NOMA keeps its structured
/// cluster beams. Cluster-free searches the SIC matrix with the inner
/// optimizer, then re-optimizes the winner and the all-zero matrix with the
/// full optimizer and keeps the better.
pub fn evaluate_scheme(
    inst: &NetworkInstance,
    scheme: Scheme,
    cfg: &ExperimentConfig,
) -> Result<SchemeResult> {
    let search: &SearchConfig = &cfg.search;
    match scheme {
        Scheme::Sdma => best_full_optimization(inst, vec![scheme_sdma(inst.num_users())], cfg),
        Scheme::BbNoma => best_full_optimization(inst, vec![scheme_bb_noma(inst)], cfg),
        Scheme::CbNoma(n) => {
            let plan = scheme_cb_noma(inst, n)?;
            let sum_rate = rate_report(inst, &plan.sic, &plan.beams)?.sum_rate;
            Ok(SchemeResult {
                sic: plan.sic,
                beams: plan.beams,
                sum_rate,
                iterations: 0,
            })
        }
        Scheme::ClusterFree(strategy) => {
            let zero = scheme_sdma(inst.num_users());
            let found = match strategy {
                SearchStrategy::Greedy => greedy_correlation(inst, search),
                SearchStrategy::GreedyLocal => {
                    local_search(inst, &greedy_correlation(inst, search), search)?.sic
                }
                SearchStrategy::Exhaustive => exhaustive_search(inst, search)?.sic,
            };
            let candidates = if found == zero { vec![zero] } else { vec![found, zero] };
            best_full_optimization(inst, candidates, cfg)
        }
    }
}

fn scheme_overhead(inst: &NetworkInstance, scheme: Scheme) -> u64 {
    match scheme {
        _ if inst.num_cells == 1 => 0,
        // Per-cell construction, no exchange between BSs.
        Scheme::CbNoma(_) => 0,
        _ => centralized_overhead_closed_form(
            inst.num_cells as u64,
            inst.users_per_cell as u64,
            inst.antennas_per_cell as u64,
        ),
    }
}

fn elapsed_ms(start: Instant, timing: bool) -> u64 {
    if timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

/// Every `(corr index, trial)` pair of the grid.
fn grid(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    (0..cfg.corr_grid.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect()
}

/// Evaluates every scheme on every grid instance, sorted by
/// `(corr, trial, scheme)`.
pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut schemes = cfg.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let cells = grid(cfg);
    let per_cell: Vec<Vec<(usize, Scheme, ResultRow)>> = cells
        .par_iter()
        .map(|&(ci, trial)| {
            let corr = cfg.corr_grid[ci];
            let seed = instance_seed(cfg.base_seed, ci, trial);
            let inst = make_instance(cfg, corr, seed)?;
            schemes
                .iter()
                .map(|&scheme| {
                    let start = Instant::now();
                    let r = evaluate_scheme(&inst, scheme, cfg)?;
                    Ok((
                        ci,
                        scheme,
                        ResultRow {
                            corr,
                            scheme: scheme.to_string(),
                            trial,
                            seed,
                            sum_rate_bps_hz: r.sum_rate,
                            iterations: r.iterations,
                            wall_ms: elapsed_ms(start, cfg.timing),
                            overhead_bits: scheme_overhead(&inst, scheme),
                        },
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<(usize, Scheme, ResultRow)> = per_cell.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.0, r.2.trial, r.1));
    Ok(rows.into_iter().map(|r| r.2).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Coordination {
    Centralized,
    Distributed,
    Gnn,
}

impl Coordination {
    pub fn name(&self) -> &'static str {
        match self {
            Coordination::Centralized => "centralized",
            Coordination::Distributed => "distributed",
            Coordination::Gnn => "gnn",
        }
    }
}

pub fn gnn_weights(cfg: &ExperimentConfig) -> Result<GnnWeights> {
    let arch = cfg.gnn_arch()?;
    let dims = GnnDims::new(cfg.users_per_cell, cfg.antennas);
    let w = match &cfg.gnn_weights {
        Some(path) => GnnWeights::load(path)?,
        None => GnnWeights::random(&arch, dims, cfg.gnn_seed),
    };
    w.check(&arch, dims)?;
    Ok(w)
}

/// Overhead and sum rate of each coordination pattern on every grid
/// instance. The SIC matrix is the greedy correlation rule's.
pub fn overhead_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let arch = cfg.gnn_arch()?;
    let weights = gnn_weights(cfg)?;
    let cells = grid(cfg);
    let per_cell: Vec<Vec<ResultRow>> = cells
        .par_iter()
        .map(|&(ci, trial)| {
            let corr = cfg.corr_grid[ci];
            let seed = instance_seed(cfg.base_seed, ci, trial);
            let inst = make_instance(cfg, corr, seed)?;
            let sic = greedy_correlation(&inst, &cfg.search);
            let row = |pattern: Coordination, sum_rate: f64, iterations: usize, bits: u64, start: Instant| ResultRow {
                corr,
                scheme: pattern.name().to_string(),
                trial,
                seed,
                sum_rate_bps_hz: sum_rate,
                iterations,
                wall_ms: elapsed_ms(start, cfg.timing),
                overhead_bits: bits,
            };

            let start = Instant::now();
            let c = centralized_optimize(&inst, &sic, &cfg.optimizer)?;
            let central = row(
                Coordination::Centralized,
                c.trace.best_sum_rate,
                c.trace.iterations,
                c.ledger.total_bits(),
                start,
            );

            let start = Instant::now();
            let d = distributed_optimize(&inst, &sic, cfg.rounds, &cfg.optimizer)?;
            let dist = row(
                Coordination::Distributed,
                *d.objective_trace.last().expect("rounds >= 1"),
                cfg.rounds,
                d.ledger.total_bits(),
                start,
            );

            let start = Instant::now();
            let g = gnn_forward(&inst, &arch, &weights)?;
            let rate = rate_report(&inst, &sic, &g.beams)?.sum_rate;
            let gnn = row(Coordination::Gnn, rate, arch.depth(), g.ledger.total_bits(), start);
            Ok(vec![central, dist, gnn])
        })
        .collect::<Result<_>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub timestamp_unix: u64,
    pub csv: PathBuf,
    pub rows: usize,
    pub config: ExperimentConfig,
}

pub fn manifest_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_outputs(cfg: &ExperimentConfig, command: &str, default_name: &str, rows: &[ResultRow]) -> Result<RunOutput> {
    let csv = cfg.out.clone().unwrap_or_else(|| PathBuf::from(default_name));
    write_csv(&csv, rows)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        csv: csv.clone(),
        rows: rows.len(),
        config: cfg.clone(),
    };
    let mpath = manifest_path(&csv);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    Ok(RunOutput {
        csv,
        manifest: mpath,
        rows: rows.to_vec(),
    })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub rows: Vec<ResultRow>,
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let rows = with_thread_pool(|| sweep_rows(cfg))??;
    write_outputs(cfg, "sweep", "sweep.csv", &rows)
}

pub fn run_overhead(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let rows = with_thread_pool(|| overhead_rows(cfg))??;
    write_outputs(cfg, "overhead", "overhead.csv", &rows)
}
