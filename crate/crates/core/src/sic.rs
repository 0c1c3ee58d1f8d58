//! Cluster-free SIC matrices, the decoding-order rule and the rate model.
//!
//! `d[i][k] = 1` means receiver `k` decodes (and cancels) user `i`'s signal
//! before decoding its own. At receiver `k` the cancelled signals are decoded
//! strongest effective gain first, and the receiver's own signal last. A
//! signal decoded at stage `m` sees as interference every signal decoded
//! after it plus every signal the receiver never cancels. A user's achievable
//! rate is the minimum of its decoding rates over all receivers that have to
//! decode it, which is how the SIC decoding condition enters the model.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::beamforming::zf_directions;
use crate::channel::{user_correlation, NetworkInstance};
use crate::linalg::{inner, norm_sqr};
use crate::{Error, Result, C64};

// ---------------------------------------------------------------------------
// SIC matrix
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<u8>>", try_from = "Vec<Vec<u8>>")]
pub struct SicMatrix {
    size: usize,
    // Row-major, entry (i, k) at i * size + k.
    bits: Vec<bool>,
}

impl SicMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            bits: vec![false; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Whether receiver `k` decodes user `i`'s signal.
    #[inline]
    pub fn get(&self, i: usize, k: usize) -> bool {
        self.bits[i * self.size + k]
    }

    pub fn set(&mut self, i: usize, k: usize, value: bool) {
        self.bits[i * self.size + k] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// All `(i, k)` with `d[i][k] = 1`, row-major.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(idx, _)| (idx / self.size, idx % self.size))
    }

    /// Signals cancelled at receiver `k`.
    pub fn decoded_at(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.size).filter(move |&i| self.get(i, k))
    }

    /// Receivers that must decode user `i`'s signal, excluding `i` itself.
    pub fn decoders_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.size).filter(move |&k| self.get(i, k))
    }

    /// State of the unordered pair `(a, b)`, `a < b`.
    pub fn pair_state(&self, a: usize, b: usize) -> PairState {
        match (self.get(a, b), self.get(b, a)) {
            (false, false) => PairState::None,
            (true, false) => PairState::FirstDecodedBySecond,
            (false, true) => PairState::SecondDecodedByFirst,
            (true, true) => PairState::Mutual,
        }
    }

    pub fn set_pair_state(&mut self, a: usize, b: usize, state: PairState) {
        let (ab, ba) = match state {
            PairState::None => (false, false),
            PairState::FirstDecodedBySecond => (true, false),
            PairState::SecondDecodedByFirst => (false, true),
            PairState::Mutual => (true, true),
        };
        self.set(a, b, ab);
        self.set(b, a, ba);
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.bits
            .chunks(self.size.max(1))
            .take(self.size)
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect()
    }

    /// Every violated invariant, with indices.
    pub fn violations(&self, inst: &NetworkInstance) -> Result<Vec<Violation>> {
        if self.size != inst.num_users() {
            return Err(Error::Dimension(format!(
                "SIC matrix is {0}x{0} but the instance has {1} users",
                self.size,
                inst.num_users()
            )));
        }
        let mut out = Vec::new();
        for i in 0..self.size {
            if self.get(i, i) {
                out.push(Violation::SelfDecoding(i));
            }
            for k in i + 1..self.size {
                if self.get(i, k) && self.get(k, i) {
                    out.push(Violation::MutualDecoding(i, k));
                }
            }
        }
        for (i, k) in self.edges() {
            if i != k && inst.cell_of[i] != inst.cell_of[k] {
                out.push(Violation::CrossCell(i, k));
            }
        }
        Ok(out)
    }
}

impl From<SicMatrix> for Vec<Vec<u8>> {
    fn from(m: SicMatrix) -> Self {
        m.rows()
    }
}

impl TryFrom<Vec<Vec<u8>>> for SicMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<u8>>) -> std::result::Result<Self, String> {
        let size = rows.len();
        let mut m = SicMatrix::zeros(size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(format!("row {i} has {} entries, expected {size}", row.len()));
            }
            for (k, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => m.set(i, k, true),
                    _ => return Err(format!("entry ({i},{k}) = {v} is not binary")),
                }
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairState {
    None,
    FirstDecodedBySecond,
    SecondDecodedByFirst,
    Mutual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    SelfDecoding(usize),
    MutualDecoding(usize, usize),
    CrossCell(usize, usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfDecoding(i) => write!(f, "self decoding at ({i},{i})"),
            Violation::MutualDecoding(i, k) => write!(f, "mutual decoding at ({i},{k})"),
            Violation::CrossCell(i, k) => write!(f, "cross-cell SIC at ({i},{k})"),
        }
    }
}

/// `Ok(())` iff the matrix satisfies all SIC invariants for `inst`.
pub fn validate(sic: &SicMatrix, inst: &NetworkInstance) -> Result<()> {
    let v = sic.violations(inst)?;
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSic(v))
    }
}

// ---------------------------------------------------------------------------
// Beamformers
// ---------------------------------------------------------------------------

/// Relative slack allowed on the per-BS power budget.
pub const POWER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformingSolution {
    /// One beam per global user, transmitted by the user's serving BS.
    pub beams: Vec<Vec<C64>>,
}

impl BeamformingSolution {
    pub fn new(beams: Vec<Vec<C64>>) -> Self {
        Self { beams }
    }

    pub fn zeros(inst: &NetworkInstance) -> Self {
        Self {
            beams: vec![vec![C64::new(0.0, 0.0); inst.antennas_per_cell]; inst.num_users()],
        }
    }

    pub fn cell_powers(&self, inst: &NetworkInstance) -> Vec<f64> {
        let mut p = vec![0.0; inst.num_cells];
        for (u, w) in self.beams.iter().enumerate() {
            p[inst.cell_of[u]] += norm_sqr(w);
        }
        p
    }

    pub fn check(&self, inst: &NetworkInstance) -> Result<()> {
        if self.beams.len() != inst.num_users()
            || self.beams.iter().any(|w| w.len() != inst.antennas_per_cell)
        {
            return Err(Error::Dimension("beamformer shape".into()));
        }
        if self
            .beams
            .iter()
            .any(|w| w.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()))
        {
            return Err(Error::NonFinite("beamformer entry".into()));
        }
        let budget = inst.power_budget * (1.0 + POWER_SLACK);
        for (cell, power) in self.cell_powers(inst).into_iter().enumerate() {
            if power > budget {
                return Err(Error::PowerViolation {
                    cell,
                    power,
                    budget: inst.power_budget,
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Effective gains and decoding orders
// ---------------------------------------------------------------------------

/// Effective gains `g_k(j) = |h_kᴴ w_j|²` for every receiver/signal pair,
/// where `h_k` is the channel from `j`'s serving BS to `k`.
#[derive(Debug, Clone)]
pub struct Gains {
    users: usize,
    /// `a_{jk}ᴴ w_j`, stored at `k * users + j`.
    amplitude: Vec<C64>,
    power: Vec<f64>,
}

impl Gains {
    pub fn compute(inst: &NetworkInstance, beams: &BeamformingSolution) -> Self {
        let n = inst.num_users();
        let mut amplitude = Vec::with_capacity(n * n);
        for k in 0..n {
            for j in 0..n {
                amplitude.push(inner(inst.signal_link(j, k), &beams.beams[j]));
            }
        }
        let power = amplitude.iter().map(|z| z.norm_sqr()).collect();
        Self {
            users: n,
            amplitude,
            power,
        }
    }

    #[inline]
    pub fn gain(&self, receiver: usize, signal: usize) -> f64 {
        self.power[receiver * self.users + signal]
    }

    #[inline]
    pub(crate) fn amplitude(&self, receiver: usize, signal: usize) -> C64 {
        self.amplitude[receiver * self.users + signal]
    }

    pub fn users(&self) -> usize {
        self.users
    }
}

/// Decoding order at every receiver; the receiver's own index is last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodingOrders(pub Vec<Vec<usize>>);

impl DecodingOrders {
    pub fn compute(sic: &SicMatrix, gains: &Gains) -> Self {
        Self(
            (0..sic.size())
                .map(|k| order_at(sic, k, |i| gains.gain(k, i)))
                .collect(),
        )
    }
}

fn order_at(sic: &SicMatrix, k: usize, gain: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut cancelled: Vec<(usize, f64)> = sic.decoded_at(k).map(|i| (i, gain(i))).collect();
    cancelled.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let mut order: Vec<usize> = cancelled.into_iter().map(|(i, _)| i).collect();
    order.push(k);
    order
}

/// Cancelled signals at receiver `k` by descending effective gain (ties to
/// the lower index), followed by `k` itself.
pub fn decoding_order(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    beams: &BeamformingSolution,
    k: usize,
) -> Vec<usize> {
    order_at(sic, k, |i| {
        inner(inst.signal_link(i, k), &beams.beams[i]).norm_sqr()
    })
}

// ---------------------------------------------------------------------------
// Rate model
// ---------------------------------------------------------------------------

/// One decoding stage at a receiver.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stage {
    pub signal: usize,
    /// `g_k(signal)`.
    pub desired: f64,
    /// Noise plus residual interference at this stage.
    pub interference: f64,
}

impl Stage {
    #[inline]
    pub fn rate(&self) -> f64 {
        (1.0 + self.desired / self.interference).log2()
    }
}

/// Decoding stages at receiver `k` for the given order and noise power.
pub(crate) fn receiver_stages(gains: &Gains, k: usize, order: &[usize], noise: f64) -> Vec<Stage> {
    let n = gains.users();
    let mut in_order = vec![false; n];
    for &i in order {
        in_order[i] = true;
    }
    let outside: f64 = (0..n)
        .filter(|&j| !in_order[j])
        .map(|j| gains.gain(k, j))
        .sum();
    let mut stages = vec![
        Stage {
            signal: 0,
            desired: 0.0,
            interference: 0.0
        };
        order.len()
    ];
    let mut later = 0.0;
    for (m, &i) in order.iter().enumerate().rev() {
        let desired = gains.gain(k, i);
        stages[m] = Stage {
            signal: i,
            desired,
            interference: noise + outside + later,
        };
        later += desired;
    }
    stages
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `decode_rate[i][k]`: rate at which receiver `k` decodes signal `i`,
    /// present iff `k == i` or `d[i][k] = 1`. In bit/s/Hz.
    pub decode_rate: Vec<Vec<Option<f64>>>,
    pub achievable_rate: Vec<f64>,
    pub sum_rate: f64,
    pub order: Vec<Vec<usize>>,
}

/// Decode-rate table for fixed orders and per-receiver noise powers.
pub(crate) fn decode_table(
    gains: &Gains,
    orders: &DecodingOrders,
    noise: &[f64],
) -> Vec<Vec<Option<f64>>> {
    let n = gains.users();
    let mut table = vec![vec![None; n]; n];
    for (k, order) in orders.0.iter().enumerate() {
        for stage in receiver_stages(gains, k, order, noise[k]) {
            table[stage.signal][k] = Some(stage.rate());
        }
    }
    table
}

pub(crate) fn report_from_table(
    decode_rate: Vec<Vec<Option<f64>>>,
    orders: DecodingOrders,
) -> RateReport {
    let achievable_rate: Vec<f64> = decode_rate
        .iter()
        .map(|row| row.iter().flatten().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let sum_rate = achievable_rate.iter().sum();
    RateReport {
        decode_rate,
        achievable_rate,
        sum_rate,
        order: orders.0,
    }
}

pub fn rate_report(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    beams: &BeamformingSolution,
) -> Result<RateReport> {
    validate(sic, inst)?;
    beams.check(inst)?;
    Ok(rate_report_unchecked(inst, sic, beams))
}

pub(crate) fn rate_report_unchecked(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    beams: &BeamformingSolution,
) -> RateReport {
    let gains = Gains::compute(inst, beams);
    let orders = DecodingOrders::compute(sic, &gains);
    let noise = vec![inst.noise_power; inst.num_users()];
    report_from_table(decode_table(&gains, &orders, &noise), orders)
}

pub fn sum_rate(report: &RateReport) -> f64 {
    report.achievable_rate.iter().sum()
}

// ---------------------------------------------------------------------------
// Schemes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SearchStrategy {
    /// Greedy correlation threshold followed by steepest-ascent local search.
    GreedyLocal,
    Greedy,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    Sdma,
    BbNoma,
    /// Cluster count; `None` means one cluster per antenna.
    CbNoma(Option<usize>),
    ClusterFree(SearchStrategy),
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Sdma => f.write_str("sdma"),
            Scheme::BbNoma => f.write_str("bb_noma"),
            Scheme::CbNoma(None) => f.write_str("cb_noma"),
            Scheme::CbNoma(Some(n)) => write!(f, "cb_noma:{n}"),
            Scheme::ClusterFree(SearchStrategy::GreedyLocal) => f.write_str("cluster_free"),
            Scheme::ClusterFree(SearchStrategy::Greedy) => f.write_str("cluster_free:greedy"),
            Scheme::ClusterFree(SearchStrategy::Exhaustive) => {
                f.write_str("cluster_free:exhaustive")
            }
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.as_str(), None),
        };
        match (name, arg) {
            ("sdma", None) => Ok(Scheme::Sdma),
            ("bb_noma", None) => Ok(Scheme::BbNoma),
            ("cb_noma", None) => Ok(Scheme::CbNoma(None)),
            ("cb_noma", Some(n)) => n
                .parse::<usize>()
                .map(|n| Scheme::CbNoma(Some(n)))
                .map_err(|_| format!("bad cluster count `{n}`")),
            ("cluster_free", None | Some("local")) => {
                Ok(Scheme::ClusterFree(SearchStrategy::GreedyLocal))
            }
            ("cluster_free", Some("greedy")) => Ok(Scheme::ClusterFree(SearchStrategy::Greedy)),
            ("cluster_free", Some("exhaustive")) => {
                Ok(Scheme::ClusterFree(SearchStrategy::Exhaustive))
            }
            _ => Err(format!("unknown scheme `{s}`")),
        }
    }
}

/// True iff user `a` ranks as stronger than `b`: larger data-channel norm,
/// ties to the lower index.
pub fn is_stronger(inst: &NetworkInstance, a: usize, b: usize) -> bool {
    let (na, nb) = (inst.data_channel_norm(a), inst.data_channel_norm(b));
    na > nb || (na == nb && a < b)
}

/// Users sorted strongest first.
pub fn strength_order(inst: &NetworkInstance, users: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<(usize, f64)> = users
        .into_iter()
        .map(|u| (u, inst.data_channel_norm(u)))
        .collect();
    v.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    v.into_iter().map(|(u, _)| u).collect()
}

/// Every stronger user of a group decodes every weaker user's signal.
fn full_sic_within(inst: &NetworkInstance, users: impl IntoIterator<Item = usize>, sic: &mut SicMatrix) {
    let order = strength_order(inst, users);
    for (pos, &i) in order.iter().enumerate() {
        for &k in &order[..pos] {
            sic.set(i, k, true);
        }
    }
}

pub fn scheme_sdma(num_users: usize) -> SicMatrix {
    SicMatrix::zeros(num_users)
}

/// Full sequential SIC inside every cell, strongest channel norm first.
pub fn scheme_bb_noma(inst: &NetworkInstance) -> SicMatrix {
    let mut sic = SicMatrix::zeros(inst.num_users());
    for c in 0..inst.num_cells {
        full_sic_within(inst, inst.users_in_cell(c), &mut sic);
    }
    sic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cell: usize,
    pub head: usize,
    /// Global user indices, head included, ascending.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbNomaPlan {
    pub clusters: Vec<Cluster>,
    pub sic: SicMatrix,
    pub beams: BeamformingSolution,
}

/// Cluster heads for one cell: start from the strongest user, then keep
/// adding the user whose largest correlation to the current heads is
/// smallest.
pub fn select_cluster_heads(inst: &NetworkInstance, cell: usize, count: usize) -> Vec<usize> {
    let users: Vec<usize> = inst.users_in_cell(cell).collect();
    let mut heads = vec![strength_order(inst, users.iter().copied())[0]];
    while heads.len() < count {
        let next = users
            .iter()
            .copied()
            .filter(|u| !heads.contains(u))
            .map(|u| {
                let worst = heads
                    .iter()
                    .map(|&h| user_correlation(inst, u, h))
                    .fold(0.0, f64::max);
                (u, worst)
            })
            .min_by(|a, b| {
                a.1.partial_cmp(&b.1)
                    .unwrap_or(Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            })
            .map(|(u, _)| u)
            .expect("count never exceeds cell size");
        heads.push(next);
    }
    heads
}

/// Index into `heads` of the head most correlated with `user`; ties go to
/// the earlier head.
pub fn closest_head(inst: &NetworkInstance, user: usize, heads: &[usize]) -> usize {
    let mut best = 0;
    let mut best_corr = f64::NEG_INFINITY;
    for (idx, &h) in heads.iter().enumerate() {
        let c = user_correlation(inst, user, h);
        if c > best_corr {
            best = idx;
            best_corr = c;
        }
    }
    best
}

/// Cluster-based NOMA, per cell: correlation clustering around
/// `n_clusters` heads, one zero-forcing direction per cluster computed over
/// the head channels, sequential SIC inside each cluster and an intra-cluster
/// power split proportional to `1/‖h‖²`.
pub fn scheme_cb_noma(inst: &NetworkInstance, n_clusters: Option<usize>) -> Result<CbNomaPlan> {
    let kc = inst.users_per_cell;
    let n = n_clusters.unwrap_or(inst.antennas_per_cell.min(kc));
    if n < 1 || n > kc {
        return Err(Error::InvalidParameter {
            field: "n_clusters",
            message: format!("{n} clusters for {kc} users per cell"),
        });
    }
    let mut sic = SicMatrix::zeros(inst.num_users());
    let mut beams = BeamformingSolution::zeros(inst);
    let mut clusters = Vec::new();
    let cluster_power = inst.power_budget / n as f64;

    for cell in 0..inst.num_cells {
        let heads = select_cluster_heads(inst, cell, n);
        let mut members: Vec<Vec<usize>> = heads.iter().map(|&h| vec![h]).collect();
        for u in inst.users_in_cell(cell) {
            if !heads.contains(&u) {
                members[closest_head(inst, u, &heads)].push(u);
            }
        }
        let head_channels: Vec<&[C64]> = heads.iter().map(|&h| inst.link(cell, h)).collect();
        let directions = zf_directions(&head_channels, inst.noise_power, inst.power_budget);

        for ((head, mut group), dir) in heads.iter().copied().zip(members).zip(directions) {
            group.sort_unstable();
            full_sic_within(inst, group.iter().copied(), &mut sic);
            let inv: Vec<f64> = group
                .iter()
                .map(|&u| 1.0 / inst.data_channel_norm(u).powi(2))
                .collect();
            let total: f64 = inv.iter().sum();
            for (&u, share) in group.iter().zip(&inv) {
                let amp = (cluster_power * share / total).sqrt();
                beams.beams[u] = dir.iter().map(|x| x * amp).collect();
            }
            clusters.push(Cluster {
                cell,
                head,
                members: group,
            });
        }
    }
    Ok(CbNomaPlan {
        clusters,
        sic,
        beams,
    })
}
