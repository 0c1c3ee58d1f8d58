//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::time::{Duration, Instant};

use common::{brute_force_rates, permute_cells, random_beams, sdma_rates};
use noma_forge::beamforming::{
    finite_difference_gradient, optimize_beams, smooth_min, smoothed_gradient, zf_init_all,
    OptimizerConfig, Problem,
};
use noma_forge::channel::{generate_multi_cell, generate_single_cell, ChannelGenConfig};
use noma_forge::coordination::gnn::GnnDims;
use noma_forge::coordination::{
    centralized_optimize, distributed_optimize, gnn_forward, gnn_overhead_closed_form,
    centralized_overhead_closed_form, Aggregation, GnnArchitecture, GnnWeights,
};
use noma_forge::harness::{run_sweep, sweep_rows, ExperimentConfig};
use noma_forge::linalg::norm_sqr;
use noma_forge::search::{evaluate_candidate, exhaustive_search, greedy_correlation, local_search, SearchConfig};
use noma_forge::sic::{rate_report, scheme_bb_noma, scheme_sdma, Scheme, SearchStrategy, SicMatrix};
use noma_forge::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn generalization_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let inst = if seed % 2 == 0 {
            generate_single_cell(3 + seed as usize % 4, 4, &ChannelGenConfig::new(0.5, seed))
        } else {
            generate_multi_cell(3, 6, 4, &ChannelGenConfig::new(0.5, seed))
        }
        .map_err(|e| e.to_string())?;
        let beams = random_beams(&inst, seed, 1.0);
        let r = rate_report(&inst, &scheme_sdma(inst.num_users()), &beams).map_err(|e| e.to_string())?;
        for (a, b) in r.achievable_rate.iter().zip(sdma_rates(&inst, &beams)) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure!(worst <= 1e-12, "SDMA deviation {worst:e}");
    let mut worst_bb: f64 = 0.0;
    for seed in 0..100u64 {
        let k = 2 + seed as usize % 2;
        let inst = generate_single_cell(k, 4, &ChannelGenConfig::new(0.7, seed)).map_err(|e| e.to_string())?;
        let sic = scheme_bb_noma(&inst);
        let beams = random_beams(&inst, seed + 500, 2.0);
        let r = rate_report(&inst, &sic, &beams).map_err(|e| e.to_string())?;
        let (oracle, orders) = brute_force_rates(&inst, &sic, &beams);
        ensure!(r.order == orders, "seed {seed}: order differs from all-orders oracle");
        for (a, b) in r.achievable_rate.iter().zip(&oracle) {
            worst_bb = worst_bb.max((a - b).abs());
        }
    }
    ensure!(worst_bb <= 1e-12, "BB-NOMA deviation {worst_bb:e}");
    Ok(format!("SDMA max dev {worst:e} over 100 instances; BB-NOMA max dev {worst_bb:e} over 100 instances"))
}

fn sic_overuse() -> Outcome {
    let k = 4;
    let mut inst = generate_single_cell(k, 4, &ChannelGenConfig::new(0.0, 1)).map_err(|e| e.to_string())?;
    for u in 0..k {
        let mut h = vec![C64::new(0.0, 0.0); 4];
        h[u] = C64::new(0.5 + u as f64, 0.3);
        inst.channel[0][u] = h;
    }
    let zf = zf_init_all(&inst);
    let bb = scheme_bb_noma(&inst);
    let r = rate_report(&inst, &bb, &zf).map_err(|e| e.to_string())?;
    let zeroed = (0..k).filter(|&i| bb.decoders_of(i).next().is_some()).collect::<Vec<_>>();
    ensure!(zeroed.len() == k - 1, "{} users are decoded by another", zeroed.len());
    for &i in &zeroed {
        ensure!(r.achievable_rate[i] == 0.0, "user {i} rate {}", r.achievable_rate[i]);
    }
    let (_, trace) = optimize_beams(&inst, &scheme_sdma(k), &zf, &OptimizerConfig::default())
        .map_err(|e| e.to_string())?;
    ensure!(trace.best_sum_rate > r.sum_rate, "SDMA {} vs full SIC {}", trace.best_sum_rate, r.sum_rate);
    Ok(format!(
        "{} users at exactly 0; full-SIC sum {:.4} < optimized SDMA {:.4}",
        zeroed.len(),
        r.sum_rate,
        trace.best_sum_rate
    ))
}

fn correlation_sweep() -> Outcome {
    let cfg = ExperimentConfig {
        schemes: vec![
            Scheme::Sdma,
            Scheme::CbNoma(None),
            Scheme::ClusterFree(SearchStrategy::GreedyLocal),
        ],
        timing: false,
        ..ExperimentConfig::default()
    };
    ensure!(
        cfg.cells == 3 && cfg.users_per_cell == 6 && cfg.antennas == 4 && cfg.trials >= 30,
        "default topology drifted"
    );
    let start = Instant::now();
    let rows = sweep_rows(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut summary = Vec::new();
    for &corr in &cfg.corr_grid {
        let mean = |name: &str| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.corr == corr && r.scheme == name)
                .map(|r| r.sum_rate_bps_hz)
                .collect();
            (v.iter().sum::<f64>() / v.len() as f64, v.len())
        };
        let (cf, n) = mean("cluster_free");
        let (cb, _) = mean("cb_noma");
        let (sd, _) = mean("sdma");
        ensure!(n == cfg.trials, "corr {corr}: {n} trials");
        ensure!(cf >= cb && cf >= sd, "corr {corr}: cluster-free {cf:.4}, CB-NOMA {cb:.4}, SDMA {sd:.4}");
        summary.push(format!("{corr}: CF {cf:.2} / SDMA {sd:.2} / CB {cb:.2}"));
    }
    ensure!(elapsed <= Duration::from_secs(15 * 60), "took {:.0} s", elapsed.as_secs_f64());
    Ok(format!("{} in {:.0} s", summary.join("; "), elapsed.as_secs_f64()))
}

fn dominance_chain() -> Outcome {
    let cfg = SearchConfig::default();
    let mut margins = (f64::INFINITY, f64::INFINITY);
    for seed in 0..20u64 {
        let inst = generate_single_cell(3, 4, &ChannelGenConfig::new(0.7, seed)).map_err(|e| e.to_string())?;
        let ex = exhaustive_search(&inst, &cfg).map_err(|e| e.to_string())?;
        let ls = local_search(&inst, &greedy_correlation(&inst, &cfg), &cfg).map_err(|e| e.to_string())?;
        let sdma = evaluate_candidate(&inst, &scheme_sdma(3), &cfg.inner_opt).map_err(|e| e.to_string())?.1;
        ensure!(ex.sum_rate >= ls.sum_rate - 1e-9, "seed {seed}: exhaustive {} < local {}", ex.sum_rate, ls.sum_rate);
        ensure!(ls.sum_rate >= sdma - 1e-9, "seed {seed}: local {} < SDMA {sdma}", ls.sum_rate);
        margins.0 = margins.0.min(ex.sum_rate - ls.sum_rate);
        margins.1 = margins.1.min(ls.sum_rate - sdma);
    }
    Ok(format!("20 seeds; min margins {:.2e} and {:.2e}", margins.0, margins.1))
}

fn random_matrix(inst: &noma_forge::channel::NetworkInstance, rng: &mut ChaCha20Rng) -> SicMatrix {
    let mut sic = SicMatrix::zeros(inst.num_users());
    for c in 0..inst.num_cells {
        let users: Vec<usize> = inst.users_in_cell(c).collect();
        for (x, &a) in users.iter().enumerate() {
            for &b in &users[x + 1..] {
                match rng.random_range(0..3) {
                    1 => sic.set(a, b, true),
                    2 => sic.set(b, a, true),
                    _ => {}
                }
            }
        }
    }
    sic
}

fn optimizer_correctness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let inst = generate_multi_cell(1 + seed as usize % 2, 3, 3, &ChannelGenConfig::new(0.6, seed))
            .map_err(|e| e.to_string())?;
        let sic = random_matrix(&inst, &mut rng);
        let beams = random_beams(&inst, seed, 1.0);
        let p = Problem::new(&inst, &sic).map_err(|e| e.to_string())?;
        let orders = p.orders(&beams);
        let a = smoothed_gradient(&inst, &sic, &beams, &orders, 50.0).map_err(|e| e.to_string())?;
        let f = finite_difference_gradient(&inst, &sic, &beams, 50.0, 1e-6).map_err(|e| e.to_string())?;
        let num: f64 = a.iter().zip(&f).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = f.iter().map(|y| y * y).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    ensure!(worst <= 1e-4, "gradient relative error {worst:e}");

    let mut steps = 0;
    for seed in 0..5u64 {
        let inst = generate_multi_cell(3, 6, 4, &ChannelGenConfig::new(0.5, seed)).map_err(|e| e.to_string())?;
        let sic = random_matrix(&inst, &mut rng);
        let (_, trace) = optimize_beams(&inst, &sic, &zf_init_all(&inst), &OptimizerConfig::default())
            .map_err(|e| e.to_string())?;
        for e in &trace.entries {
            ensure!(e.objective > e.objective_before, "step {} did not increase", e.iteration);
            steps += 1;
        }
    }

    let mut gap: f64 = 0.0;
    for seed in 0..5u64 {
        let inst = generate_single_cell(1, 4, &ChannelGenConfig::new(0.5, seed)).map_err(|e| e.to_string())?;
        let (_, trace) = optimize_beams(&inst, &scheme_sdma(1), &random_beams(&inst, seed, 0.2), &OptimizerConfig::default())
            .map_err(|e| e.to_string())?;
        let cap = (1.0 + inst.power_budget * norm_sqr(inst.link(0, 0)) / inst.noise_power).log2();
        gap = gap.max((trace.best_sum_rate - cap).abs());
    }
    ensure!(gap <= 1e-3, "single-user gap {gap:e}");
    Ok(format!("grad rel err {worst:.1e}; {steps} accepted steps all increasing; single-user gap {gap:.1e}"))
}

fn smoothed_min_bound() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut evaluations = 0;
    while evaluations < 1000 {
        let inst = generate_single_cell(6, 4, &ChannelGenConfig::new(rng.random_range(0.0..1.0), rng.random()))
            .map_err(|e| e.to_string())?;
        let sic = random_matrix(&inst, &mut rng);
        let r = rate_report(&inst, &sic, &random_beams(&inst, rng.random(), 2.0)).map_err(|e| e.to_string())?;
        let beta = [1.0, 5.0, 50.0, 500.0][rng.random_range(0..4)];
        for row in &r.decode_rate {
            let rates: Vec<f64> = row.iter().flatten().copied().collect();
            let m = rates.iter().copied().fold(f64::INFINITY, f64::min);
            let s = smooth_min(&rates, beta).value;
            let cap = (rates.len() as f64).ln() / beta;
            ensure!(0.0 <= m - s && m - s <= cap, "rates {rates:?} beta {beta}: gap {}", m - s);
            evaluations += 1;
        }
    }
    Ok(format!("{evaluations} per-user evaluations"))
}

fn overhead_exactness() -> Outcome {
    let inst = generate_multi_cell(3, 6, 4, &ChannelGenConfig::new(0.5, 1)).map_err(|e| e.to_string())?;
    let arch = GnnArchitecture::uniform(2, 16, 32, Aggregation::Mean);
    let w = GnnWeights::random(&arch, GnnDims::for_instance(&inst), 3);
    let gnn = gnn_forward(&inst, &arch, &w).map_err(|e| e.to_string())?.ledger.total_bits();
    ensure!(gnn == 1536 && gnn == gnn_overhead_closed_form(&arch, 3), "GNN {gnn}");
    let quick = OptimizerConfig { max_iters: 10, ..OptimizerConfig::default() };
    let sic = scheme_sdma(18);
    let central = centralized_optimize(&inst, &sic, &quick).map_err(|e| e.to_string())?.ledger.total_bits();
    ensure!(central == 4608, "centralized {central}");
    let dist = distributed_optimize(&inst, &sic, 10, &quick).map_err(|e| e.to_string())?.ledger.total_bits();
    ensure!(dist == 2880, "distributed {dist}");
    let mut checked = 0;
    for depth in 1..=32 {
        for s in 1..=32 / depth {
            let a = GnnArchitecture::uniform(depth, s, 8, Aggregation::Sum);
            ensure!(gnn_overhead_closed_form(&a, 3) < centralized_overhead_closed_form(3, 6, 4), "L={depth} S={s}");
            checked += 1;
        }
    }
    Ok(format!("gnn {gnn}, centralized {central}, distributed {dist}; {checked} archs with sum(S) <= 32 below centralized"))
}

fn gnn_semantics() -> Outcome {
    let inst = generate_multi_cell(3, 6, 4, &ChannelGenConfig::new(0.5, 4)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for agg in [Aggregation::Max, Aggregation::Sum, Aggregation::Mean] {
        let arch = GnnArchitecture::uniform(2, 16, 32, agg);
        let w = GnnWeights::random(&arch, GnnDims::for_instance(&inst), 11);
        let base = gnn_forward(&inst, &arch, &w).map_err(|e| e.to_string())?;
        let again = gnn_forward(&inst, &arch, &w).map_err(|e| e.to_string())?;
        ensure!(base == again, "{agg}: not deterministic");
        for perm in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let out = gnn_forward(&permute_cells(&inst, &perm), &arch, &w).map_err(|e| e.to_string())?;
            for b in 0..3 {
                for (x, y) in base.raw_outputs[b].iter().zip(&out.raw_outputs[perm[b]]) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    ensure!(worst <= 1e-9, "relabeling deviation {worst:e}");
    Ok(format!("max relabeling deviation {worst:.1e} over max/sum/mean; repeated runs identical"))
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig {
        corr_grid: vec![0.3, 0.9],
        trials: 2,
        timing: false,
        ..ExperimentConfig::default()
    };
    cfg.out = Some(dir.path().join("first.csv"));
    let a = run_sweep(&cfg).map_err(|e| e.to_string())?;
    cfg.out = Some(dir.path().join("second.csv"));
    let b = run_sweep(&cfg).map_err(|e| e.to_string())?;
    let (x, y) = (
        std::fs::read(&a.csv).map_err(|e| e.to_string())?,
        std::fs::read(&b.csv).map_err(|e| e.to_string())?,
    );
    ensure!(x == y, "CSV files differ");
    Ok(format!("{} rows, {} bytes identical", a.rows.len(), x.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "generalization identities", generalization_identities),
        (2, "SIC overuse", sic_overuse),
        (3, "sum rate versus correlation ordering", correlation_sweep),
        (4, "search dominance chain", dominance_chain),
        (5, "optimizer correctness", optimizer_correctness),
        (6, "smoothed-min bound", smoothed_min_bound),
        (7, "overhead exactness", overhead_exactness),
        (8, "GNN semantics", gnn_semantics),
        (9, "end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
