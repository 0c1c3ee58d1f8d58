//! Beamformer initialization and sum-rate maximization for a fixed SIC
//! matrix.
//!
//! The min over decoders in the achievable rate is replaced by the smoothed
//! minimum `smin_β(x) = −(1/β)·ln Σ exp(−β·x_j)`, which lies within
//! `ln(m)/β` below the true minimum of `m` values. Decoding orders depend on
//! the beams through a sort, so they are frozen between refreshes and the
//! objective is smooth in between. Ascent is projected gradient with Armijo
//! backtracking; the projection rescales a cell's beams whenever the cell
//! exceeds its power budget.

use serde::{Deserialize, Serialize};

use crate::channel::NetworkInstance;
use crate::linalg::{norm, regularized_pinv_columns};
use crate::sic::{
    decode_table, receiver_stages, report_from_table, validate, BeamformingSolution,
    DecodingOrders, Gains, RateReport, SicMatrix,
};
use crate::{Error, Result, C64};

// ---------------------------------------------------------------------------
// Zero-forcing initialization
// ---------------------------------------------------------------------------

/// Unit-norm (regularized) zero-forcing directions for the given channels.
///
/// Plain zero forcing is used while the channels fit the antenna count;
/// beyond that, or when the channels are linearly dependent, the Gram matrix
/// is regularized with `λ = σ²·K/P`.
pub fn zf_directions(channels: &[&[C64]], noise_power: f64, power_budget: f64) -> Vec<Vec<C64>> {
    let k = channels.len();
    if k == 0 {
        return Vec::new();
    }
    let n = channels[0].len();
    let lambda = noise_power * k as f64 / power_budget;
    let raw = if k <= n {
        regularized_pinv_columns(channels, 0.0)
            .filter(|cols| cols.iter().all(|c| norm(c) > 0.0))
            .or_else(|| regularized_pinv_columns(channels, lambda))
    } else {
        regularized_pinv_columns(channels, lambda)
    };
    let cols = raw.expect("regularized Gram matrix is positive definite");
    cols.into_iter()
        .zip(channels)
        .map(|(col, h)| {
            let nrm = norm(&col);
            if nrm > 0.0 && nrm.is_finite() {
                col.iter().map(|x| x / nrm).collect()
            } else {
                // Degenerate direction: fall back to the matched filter.
                let nh = norm(h);
                h.iter().map(|x| x / nh).collect()
            }
        })
        .collect()
}

/// ZF beams for one cell's users with equal power `P/K_c` per user.
pub fn zf_init(inst: &NetworkInstance, cell: usize) -> Vec<Vec<C64>> {
    let channels: Vec<&[C64]> = inst
        .users_in_cell(cell)
        .map(|u| inst.link(cell, u))
        .collect();
    let amp = (inst.power_budget / inst.users_per_cell as f64).sqrt();
    zf_directions(&channels, inst.noise_power, inst.power_budget)
        .into_iter()
        .map(|d| d.into_iter().map(|x| x * amp).collect())
        .collect()
}

/// [`zf_init`] for every cell.
pub fn zf_init_all(inst: &NetworkInstance) -> BeamformingSolution {
    let mut beams = Vec::with_capacity(inst.num_users());
    for cell in 0..inst.num_cells {
        beams.extend(zf_init(inst, cell));
    }
    BeamformingSolution::new(beams)
}

/// Rescales each cell over budget back onto its power budget.
pub fn project(inst: &NetworkInstance, beams: &mut BeamformingSolution) {
    for (cell, p) in beams.cell_powers(inst).into_iter().enumerate() {
        if p > inst.power_budget {
            let s = (inst.power_budget / p).sqrt();
            for u in inst.users_in_cell(cell) {
                for x in beams.beams[u].iter_mut() {
                    *x *= s;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Smoothed minimum
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SmoothMin {
    pub value: f64,
    /// `∂smin/∂x_j`; nonnegative and summing to one.
    pub weights: Vec<f64>,
}

/// Log-sum-exp smoothed minimum of a nonempty slice.
///
/// The result always satisfies `0 ≤ min − value ≤ ln(m)/β` when evaluated
/// in floating point.
pub fn smooth_min(values: &[f64], beta: f64) -> SmoothMin {
    assert!(!values.is_empty(), "smoothed min of an empty set");
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = values.iter().map(|x| (-beta * (x - m)).exp()).collect();
    let s: f64 = exps.iter().sum();
    let cap = (values.len() as f64).ln() / beta;
    let gap = (s.ln() / beta).clamp(0.0, cap);
    let mut value = m - gap;
    while m - value > cap {
        value = value.next_up();
    }
    SmoothMin {
        value,
        weights: exps.into_iter().map(|e| e / s).collect(),
    }
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

/// A fixed SIC matrix over an instance, with per-receiver noise powers.
///
/// The noise defaults to the instance noise power; distributed optimizers
/// fold frozen inter-cell interference into it.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub inst: &'a NetworkInstance,
    pub sic: &'a SicMatrix,
    noise: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(inst: &'a NetworkInstance, sic: &'a SicMatrix) -> Result<Self> {
        validate(sic, inst)?;
        Ok(Self {
            inst,
            sic,
            noise: vec![inst.noise_power; inst.num_users()],
        })
    }

    /// Adds `extra[k]` to receiver `k`'s noise power.
    pub fn with_extra_interference(mut self, extra: &[f64]) -> Result<Self> {
        if extra.len() != self.noise.len() {
            return Err(Error::Dimension("extra interference length".into()));
        }
        for (n, e) in self.noise.iter_mut().zip(extra) {
            *n += e;
        }
        Ok(self)
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn orders(&self, beams: &BeamformingSolution) -> DecodingOrders {
        DecodingOrders::compute(self.sic, &Gains::compute(self.inst, beams))
    }

    /// Rate report under this problem's noise powers, with fresh orders.
    pub fn report(&self, beams: &BeamformingSolution) -> RateReport {
        let gains = Gains::compute(self.inst, beams);
        let orders = DecodingOrders::compute(self.sic, &gains);
        report_from_table(decode_table(&gains, &orders, &self.noise), orders)
    }

    pub fn sum_rate(&self, beams: &BeamformingSolution) -> f64 {
        self.report(beams).sum_rate
    }

    pub fn smoothed(&self, beams: &BeamformingSolution, orders: &DecodingOrders, beta: f64) -> f64 {
        self.evaluate(beams, orders, beta, false).0
    }

    /// Smoothed objective and its gradient. Gradient entries hold
    /// `∂F/∂Re w + i·∂F/∂Im w` per antenna.
    pub fn smoothed_with_gradient(
        &self,
        beams: &BeamformingSolution,
        orders: &DecodingOrders,
        beta: f64,
    ) -> (f64, Vec<Vec<C64>>) {
        let (f, g) = self.evaluate(beams, orders, beta, true);
        (f, g.expect("gradient requested"))
    }

    fn evaluate(
        &self,
        beams: &BeamformingSolution,
        orders: &DecodingOrders,
        beta: f64,
        with_gradient: bool,
    ) -> (f64, Option<Vec<Vec<C64>>>) {
        let n = self.inst.num_users();
        let gains = Gains::compute(self.inst, beams);
        let stages: Vec<_> = orders
            .0
            .iter()
            .enumerate()
            .map(|(k, order)| receiver_stages(&gains, k, order, self.noise[k]))
            .collect();

        // (receiver, stage) pairs decoding each signal.
        let mut sites: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, st) in stages.iter().enumerate() {
            for (m, s) in st.iter().enumerate() {
                sites[s.signal].push((k, m));
            }
        }

        let mut objective = 0.0;
        let mut weight = vec![vec![0.0; 0]; n];
        for k in 0..n {
            weight[k] = vec![0.0; stages[k].len()];
        }
        for list in &sites {
            let rates: Vec<f64> = list.iter().map(|&(k, m)| stages[k][m].rate()).collect();
            let sm = smooth_min(&rates, beta);
            objective += sm.value;
            for (&(k, m), w) in list.iter().zip(sm.weights) {
                weight[k][m] = w;
            }
        }
        if !with_gradient {
            return (objective, None);
        }

        // coef[k][j] = ∂F/∂g_k(j)
        let ln2 = std::f64::consts::LN_2;
        let mut coef = vec![0.0; n * n];
        for (k, st) in stages.iter().enumerate() {
            let mut carried = 0.0;
            for (m, s) in st.iter().enumerate() {
                coef[k * n + s.signal] += carried;
                let a = s.interference + s.desired;
                let b = s.interference;
                let w = weight[k][m];
                coef[k * n + s.signal] += w / (ln2 * a);
                carried += w * (1.0 / a - 1.0 / b) / ln2;
            }
            let mut in_order = vec![false; n];
            for s in st {
                in_order[s.signal] = true;
            }
            for j in 0..n {
                if !in_order[j] {
                    coef[k * n + j] += carried;
                }
            }
        }

        let nt = self.inst.antennas_per_cell;
        let mut grad = vec![vec![C64::new(0.0, 0.0); nt]; n];
        for (j, gj) in grad.iter_mut().enumerate() {
            for k in 0..n {
                let c = coef[k * n + j];
                if c == 0.0 {
                    continue;
                }
                let z = gains.amplitude(k, j) * (2.0 * c);
                for (g, a) in gj.iter_mut().zip(self.inst.signal_link(j, k)) {
                    *g += a * z;
                }
            }
        }
        (objective, Some(grad))
    }

    /// Central-difference gradient of the smoothed objective over every real
    /// coordinate, ordered (user, antenna, re/im).
    pub fn finite_difference_gradient(
        &self,
        beams: &BeamformingSolution,
        orders: &DecodingOrders,
        beta: f64,
        h: f64,
    ) -> Vec<f64> {
        let mut probe = beams.clone();
        let mut out = Vec::with_capacity(beams.beams.len() * beams.beams[0].len() * 2);
        for u in 0..beams.beams.len() {
            for a in 0..beams.beams[u].len() {
                for part in 0..2 {
                    let delta = if part == 0 { C64::new(h, 0.0) } else { C64::new(0.0, h) };
                    let base = probe.beams[u][a];
                    probe.beams[u][a] = base + delta;
                    let up = self.smoothed(&probe, orders, beta);
                    probe.beams[u][a] = base - delta;
                    let down = self.smoothed(&probe, orders, beta);
                    probe.beams[u][a] = base;
                    out.push((up - down) / (2.0 * h));
                }
            }
        }
        out
    }
}

/// Flattens a complex gradient into (user, antenna, re/im) order.
pub fn flatten_gradient(grad: &[Vec<C64>]) -> Vec<f64> {
    grad.iter()
        .flat_map(|g| g.iter().flat_map(|x| [x.re, x.im]))
        .collect()
}

/// Smoothed sum rate with decoding orders taken from `beams`.
pub fn smoothed_sum_rate(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    beams: &BeamformingSolution,
    beta: f64,
) -> Result<f64> {
    let p = Problem::new(inst, sic)?;
    let orders = p.orders(beams);
    Ok(p.smoothed(beams, &orders, beta))
}

/// Smoothed sum rate with the given frozen orders.
pub fn smoothed_sum_rate_with_orders(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    beams: &BeamformingSolution,
    orders: &DecodingOrders,
    beta: f64,
) -> Result<f64> {
    Ok(Problem::new(inst, sic)?.smoothed(beams, orders, beta))
}

/// Analytic gradient of the smoothed sum rate, flattened like
/// [`finite_difference_gradient`].
pub fn smoothed_gradient(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    beams: &BeamformingSolution,
    orders: &DecodingOrders,
    beta: f64,
) -> Result<Vec<f64>> {
    let p = Problem::new(inst, sic)?;
    Ok(flatten_gradient(&p.smoothed_with_gradient(beams, orders, beta).1))
}

/// Central differences of the smoothed sum rate, orders frozen at `beams`.
pub fn finite_difference_gradient(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    beams: &BeamformingSolution,
    beta: f64,
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter {
            field: "h",
            message: "finite-difference step must be positive".into(),
        });
    }
    let p = Problem::new(inst, sic)?;
    let orders = p.orders(beams);
    Ok(p.finite_difference_gradient(beams, &orders, beta, h))
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub beta: f64,
    pub max_iters: usize,
    pub order_refresh_period: usize,
    pub step_init: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub tol: f64,
    pub grad_mode: GradMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta: 50.0,
            max_iters: 500,
            order_refresh_period: 25,
            step_init: 0.1,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            tol: 1e-6,
            grad_mode: GradMode::Analytic,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, v: f64| Error::InvalidParameter {
            field,
            message: format!("{v} is out of range"),
        };
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(bad("beta", self.beta));
        }
        if self.order_refresh_period == 0 {
            return Err(bad("order_refresh_period", 0.0));
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return Err(bad("step_init", self.step_init));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(bad("armijo_c", self.armijo_c));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(bad("backtrack_factor", self.backtrack_factor));
        }
        if !(self.tol >= 0.0) {
            return Err(bad("tol", self.tol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Index of the frozen-order window the step was taken in.
    pub order_epoch: usize,
    /// Smoothed objective before and after the step, same frozen orders.
    pub objective_before: f64,
    pub objective: f64,
    pub sum_rate: f64,
    pub step: f64,
    pub cell_power: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    /// One entry per accepted step.
    pub entries: Vec<TraceEntry>,
    pub iterations: usize,
    pub initial_sum_rate: f64,
    pub best_sum_rate: f64,
    pub converged: bool,
}

const MAX_STEP_GROWTH: f64 = 1e4;
const MIN_STEP_SHRINK: f64 = 1e-12;

fn real_dot(a: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y))
        .map(|(p, q)| p.re * q.re + p.im * q.im)
        .sum()
}

fn grad_at(
    problem: &Problem<'_>,
    beams: &BeamformingSolution,
    orders: &DecodingOrders,
    cfg: &OptimizerConfig,
) -> (f64, Vec<Vec<C64>>) {
    match cfg.grad_mode {
        GradMode::Analytic => problem.smoothed_with_gradient(beams, orders, cfg.beta),
        GradMode::FiniteDifference => {
            let f = problem.smoothed(beams, orders, cfg.beta);
            let flat = problem.finite_difference_gradient(beams, orders, cfg.beta, 1e-6);
            let nt = problem.inst.antennas_per_cell;
            let g = flat
                .chunks(2 * nt)
                .map(|c| c.chunks(2).map(|p| C64::new(p[0], p[1])).collect())
                .collect();
            (f, g)
        }
    }
}

/// Projected gradient ascent on the smoothed sum rate for a fixed SIC
/// matrix. Returns the best iterate seen by true sum rate.
pub fn optimize_beams(
    inst: &NetworkInstance,
    sic: &SicMatrix,
    initial: &BeamformingSolution,
    cfg: &OptimizerConfig,
) -> Result<(BeamformingSolution, OptimTrace)> {
    let problem = Problem::new(inst, sic)?;
    optimize_problem(&problem, initial, cfg)
}

pub fn optimize_problem(
    problem: &Problem<'_>,
    initial: &BeamformingSolution,
    cfg: &OptimizerConfig,
) -> Result<(BeamformingSolution, OptimTrace)> {
    cfg.validate()?;
    let inst = problem.inst;
    if initial.beams.len() != inst.num_users()
        || initial.beams.iter().any(|w| w.len() != inst.antennas_per_cell)
    {
        return Err(Error::Dimension("initial beamformer shape".into()));
    }

    let mut x = initial.clone();
    project(inst, &mut x);
    let mut orders = problem.orders(&x);
    let (mut f, mut g) = grad_at(problem, &x, &orders, cfg);
    if !f.is_finite() {
        return Err(Error::NonFinite(format!("initial smoothed objective {f}")));
    }

    let initial_rate = problem.sum_rate(&x);
    let mut best = (initial_rate, x.clone());
    let mut trace = OptimTrace {
        initial_sum_rate: initial_rate,
        best_sum_rate: initial_rate,
        ..OptimTrace::default()
    };
    let mut step = cfg.step_init;
    let mut epoch = 0;

    for iter in 1..=cfg.max_iters {
        trace.iterations = iter;
        if iter > 1 && (iter - 1) % cfg.order_refresh_period == 0 {
            let fresh = problem.orders(&x);
            if fresh != orders {
                orders = fresh;
                epoch += 1;
                (f, g) = grad_at(problem, &x, &orders, cfg);
            }
        }

        let mut accepted = None;
        let mut t = step;
        while t >= cfg.step_init * MIN_STEP_SHRINK {
            let mut cand = x.clone();
            for (w, d) in cand.beams.iter_mut().zip(&g) {
                for (a, b) in w.iter_mut().zip(d) {
                    *a += b * t;
                }
            }
            project(inst, &mut cand);
            let fc = problem.smoothed(&cand, &orders, cfg.beta);
            if !fc.is_finite() {
                return Err(Error::NonFinite(format!("smoothed objective {fc} at iteration {iter}")));
            }
            let diff: Vec<Vec<C64>> = cand
                .beams
                .iter()
                .zip(&x.beams)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect())
                .collect();
            let ascent = real_dot(&g, &diff);
            if fc > f && fc >= f + cfg.armijo_c * ascent {
                accepted = Some((cand, fc, t));
                break;
            }
            t *= cfg.backtrack_factor;
        }

        let Some((cand, fc, t)) = accepted else {
            // No ascent under the frozen orders: refresh once, else stop.
            let fresh = problem.orders(&x);
            if fresh != orders {
                orders = fresh;
                epoch += 1;
                (f, g) = grad_at(problem, &x, &orders, cfg);
                step = cfg.step_init;
                continue;
            }
            trace.converged = true;
            break;
        };

        let rel = (fc - f) / f.abs().max(1e-12);
        let before = f;
        x = cand;
        (f, g) = grad_at(problem, &x, &orders, cfg);
        let rate = problem.sum_rate(&x);
        trace.entries.push(TraceEntry {
            iteration: iter,
            order_epoch: epoch,
            objective_before: before,
            objective: fc,
            sum_rate: rate,
            step: t,
            cell_power: x.cell_powers(inst),
        });
        if rate > best.0 {
            best = (rate, x.clone());
        }
        step = (t / cfg.backtrack_factor).min(cfg.step_init * MAX_STEP_GROWTH);

        if rel < cfg.tol {
            let fresh = problem.orders(&x);
            if fresh == orders {
                trace.converged = true;
                break;
            }
            orders = fresh;
            epoch += 1;
            (f, g) = grad_at(problem, &x, &orders, cfg);
        }
    }

    trace.best_sum_rate = best.0;
    Ok((best.1, trace))
}
