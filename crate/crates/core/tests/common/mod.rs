//! Independent oracles shared by the integration tests. Nothing here calls
//! into the rate model of the library.

#![allow(dead_code)]

use noma_forge::channel::NetworkInstance;
use noma_forge::sic::{BeamformingSolution, SicMatrix};
use noma_forge::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// `|hᴴw|²` written out by hand.
pub fn power_seen(h: &[C64], w: &[C64]) -> f64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (a, b) in h.iter().zip(w) {
        // conj(a)·b
        re += a.re * b.re + a.im * b.im;
        im += a.re * b.im - a.im * b.re;
    }
    re * re + im * im
}

/// Power of signal `i` at user `k`.
pub fn gain(inst: &NetworkInstance, beams: &BeamformingSolution, k: usize, i: usize) -> f64 {
    let bs = inst.cell_of[i];
    power_seen(&inst.channel[bs][k], &beams.beams[i])
}

/// Plain SDMA: every other signal is interference.
pub fn sdma_rates(inst: &NetworkInstance, beams: &BeamformingSolution) -> Vec<f64> {
    let n = inst.num_users();
    (0..n)
        .map(|k| {
            let s = gain(inst, beams, k, k);
            let i: f64 = (0..n).filter(|&j| j != k).map(|j| gain(inst, beams, k, j)).sum();
            (1.0 + s / (inst.noise_power + i)).log2()
        })
        .collect()
}

pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for idx in 0..items.len() {
        let mut rest = items.to_vec();
        let first = rest.remove(idx);
        for mut p in permutations(&rest) {
            p.insert(0, first);
            out.push(p);
        }
    }
    out
}

/// Decode rates at receiver `k` for the given order of cancelled signals,
/// own signal appended last.
pub fn stage_rates(
    inst: &NetworkInstance,
    beams: &BeamformingSolution,
    k: usize,
    cancelled: &[usize],
) -> Vec<(usize, f64)> {
    let n = inst.num_users();
    let mut order = cancelled.to_vec();
    order.push(k);
    let outside: f64 = (0..n)
        .filter(|j| !order.contains(j))
        .map(|j| gain(inst, beams, k, j))
        .sum();
    order
        .iter()
        .enumerate()
        .map(|(m, &i)| {
            let later: f64 = order[m + 1..].iter().map(|&j| gain(inst, beams, k, j)).sum();
            let sinr = gain(inst, beams, k, i) / (inst.noise_power + later + outside);
            (i, (1.0 + sinr).log2())
        })
        .collect()
}

/// Brute-force rates: every receiver tries every order of its cancelled
/// signals and keeps the one with the largest bottleneck stage rate.
/// Returns `(achievable rates, chosen order per receiver)`.
pub fn brute_force_rates(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    beams: &BeamformingSolution,
) -> (Vec<f64>, Vec<Vec<usize>>) {
    let n = inst.num_users();
    let mut decode = vec![Vec::new(); n];
    let mut orders = Vec::new();
    for k in 0..n {
        let d_k: Vec<usize> = (0..n).filter(|&i| sic.get(i, k)).collect();
        let mut best: Option<(f64, Vec<usize>, Vec<(usize, f64)>)> = None;
        for p in permutations(&d_k) {
            let rates = stage_rates(inst, beams, k, &p);
            let bottleneck = rates[..rates.len() - 1]
                .iter()
                .map(|r| r.1)
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|b| bottleneck > b.0) {
                best = Some((bottleneck, p, rates));
            }
        }
        let (_, mut order, rates) = best.unwrap();
        order.push(k);
        orders.push(order);
        for (i, r) in rates {
            decode[i].push(r);
        }
    }
    let achievable = decode
        .iter()
        .map(|rs| rs.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    (achievable, orders)
}

pub fn random_beams(inst: &NetworkInstance, seed: u64, scale: f64) -> BeamformingSolution {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let beams = (0..inst.num_users())
        .map(|_| {
            (0..inst.antennas_per_cell)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
                .collect()
        })
        .collect();
    let mut b = BeamformingSolution::new(beams);
    noma_forge::beamforming::project(inst, &mut b);
    b
}

/// Relabels cells: old cell `b` becomes cell `perm[b]`, users keep their
/// local index.
pub fn permute_cells(inst: &NetworkInstance, perm: &[usize]) -> NetworkInstance {
    let kc = inst.users_per_cell;
    let map_user = |u: usize| perm[u / kc] * kc + u % kc;
    let mut out = inst.clone();
    for b in 0..inst.num_cells {
        for u in 0..inst.num_users() {
            out.channel[perm[b]][map_user(u)] = inst.channel[b][u].clone();
        }
    }
    out
}
