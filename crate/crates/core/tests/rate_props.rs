mod common;

use common::{brute_force_rates, random_beams, sdma_rates};
use noma_forge::channel::{generate_multi_cell, generate_single_cell, ChannelGenConfig};
use noma_forge::sic::{rate_report, scheme_bb_noma, scheme_sdma, validate, SicMatrix};
use proptest::prelude::*;

#[test]
fn sdma_matches_plain_sinr_path() {
    for seed in 0..100u64 {
        let inst = if seed % 2 == 0 {
            generate_single_cell(2 + (seed as usize % 5), 4, &ChannelGenConfig::new(0.5, seed)).unwrap()
        } else {
            generate_multi_cell(3, 3, 2, &ChannelGenConfig::new(0.7, seed)).unwrap()
        };
        let beams = random_beams(&inst, seed + 1000, 1.5);
        let report = rate_report(&inst, &scheme_sdma(inst.num_users()), &beams).unwrap();
        let oracle = sdma_rates(&inst, &beams);
        for (k, (a, b)) in report.achievable_rate.iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() <= 1e-12, "seed {seed} user {k}: {a} vs {b}");
        }
    }
}

#[test]
fn bb_noma_matches_all_orders_oracle() {
    for seed in 0..60u64 {
        let k = 2 + (seed as usize % 2);
        let inst = generate_single_cell(k, 4, &ChannelGenConfig::new(0.6, seed)).unwrap();
        let sic = scheme_bb_noma(&inst);
        let beams = random_beams(&inst, seed + 77, 2.0);
        let report = rate_report(&inst, &sic, &beams).unwrap();
        let (oracle, orders) = brute_force_rates(&inst, &sic, &beams);
        assert_eq!(report.order, orders, "seed {seed}");
        for (a, b) in report.achievable_rate.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn order_rule_is_bottleneck_optimal_on_arbitrary_matrices() {
    for seed in 0..40u64 {
        let inst = generate_single_cell(3, 2, &ChannelGenConfig::new(0.4, seed)).unwrap();
        let mut sic = SicMatrix::zeros(3);
        let states = [seed % 3, (seed / 3) % 3, (seed / 9) % 3];
        for ((a, b), s) in [(0, 1), (0, 2), (1, 2)].into_iter().zip(states) {
            match s {
                1 => sic.set(a, b, true),
                2 => sic.set(b, a, true),
                _ => {}
            }
        }
        let beams = random_beams(&inst, seed, 1.0);
        let report = rate_report(&inst, &sic, &beams).unwrap();
        let (oracle, orders) = brute_force_rates(&inst, &sic, &beams);
        assert_eq!(report.order, orders);
        for (a, b) in report.achievable_rate.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

/// Valid single-cell matrix from one state digit per unordered pair.
fn matrix_from_states(k: usize, states: &[u8]) -> SicMatrix {
    let mut sic = SicMatrix::zeros(k);
    let mut idx = 0;
    for a in 0..k {
        for b in a + 1..k {
            match states[idx] % 3 {
                1 => sic.set(a, b, true),
                2 => sic.set(b, a, true),
                _ => {}
            }
            idx += 1;
        }
    }
    sic
}

fn sinr_from_rate(r: f64) -> f64 {
    r.exp2() - 1.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn adding_a_cancellation_is_monotone(
        seed in 0u64..10_000,
        states in prop::collection::vec(0u8..3, 6),
        pick in 0usize..12,
    ) {
        let inst = generate_single_cell(4, 3, &ChannelGenConfig::new(0.5, seed)).unwrap();
        let before_sic = matrix_from_states(4, &states);
        let (i, k) = (pick / 3, {
            let r = pick % 3;
            if r >= pick / 3 { r + 1 } else { r }
        });
        prop_assume!(!before_sic.get(i, k) && !before_sic.get(k, i));
        let mut after_sic = before_sic.clone();
        after_sic.set(i, k, true);
        prop_assert!(validate(&after_sic, &inst).is_ok());

        let beams = random_beams(&inst, seed ^ 0x55, 1.0);
        let before = rate_report(&inst, &before_sic, &beams).unwrap();
        let after = rate_report(&inst, &after_sic, &beams).unwrap();
        let order = &after.order[k];
        let pos = order.iter().position(|&s| s == i).unwrap();
        for &j in &order[..pos] {
            let (a, b) = (after.decode_rate[j][k].unwrap(), before.decode_rate[j][k].unwrap());
            prop_assert!((a - b).abs() <= 1e-12, "earlier signal {} changed: {} -> {}", j, b, a);
        }
        for &j in &order[pos + 1..] {
            let (a, b) = (after.decode_rate[j][k].unwrap(), before.decode_rate[j][k].unwrap());
            prop_assert!(sinr_from_rate(a) >= sinr_from_rate(b) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn joint_scaling_of_beams_and_noise_keeps_rates(
        seed in 0u64..10_000,
        states in prop::collection::vec(0u8..3, 6),
        c in 0.05f64..20.0,
    ) {
        let inst = generate_single_cell(4, 3, &ChannelGenConfig::new(0.5, seed)).unwrap();
        let sic = matrix_from_states(4, &states);
        let beams = random_beams(&inst, seed, 1.0);
        let base = rate_report(&inst, &sic, &beams).unwrap();

        let mut scaled_inst = inst.clone();
        scaled_inst.noise_power *= c * c;
        scaled_inst.power_budget *= c * c;
        let mut scaled = beams.clone();
        scaled.beams.iter_mut().flatten().for_each(|x| *x *= c);
        let other = rate_report(&scaled_inst, &sic, &scaled).unwrap();
        for (row_a, row_b) in base.decode_rate.iter().zip(&other.decode_rate) {
            for (a, b) in row_a.iter().zip(row_b) {
                match (a, b) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
                    (None, None) => {}
                    _ => prop_assert!(false, "decode sets differ"),
                }
            }
        }
    }

    #[test]
    fn achievable_never_exceeds_own_rate(
        seed in 0u64..10_000,
        states in prop::collection::vec(0u8..3, 6),
    ) {
        let inst = generate_single_cell(4, 2, &ChannelGenConfig::new(0.8, seed)).unwrap();
        let sic = matrix_from_states(4, &states);
        let report = rate_report(&inst, &sic, &random_beams(&inst, seed, 2.0)).unwrap();
        for i in 0..4 {
            prop_assert!(report.achievable_rate[i] <= report.decode_rate[i][i].unwrap());
            prop_assert!(report.achievable_rate[i] >= 0.0);
        }
        let total: f64 = report.achievable_rate.iter().sum();
        prop_assert_eq!(total, report.sum_rate);
    }
}
