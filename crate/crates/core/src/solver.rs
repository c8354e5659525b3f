//! Queue-weighted power allocation.
//!
//! For queue weights `X` and per-cell budgets `P_l` the solver maximizes
//!
//! ```text
//! sum_k X_k ln gamma_k(p)    subject to    sum_{k in cell l} p_k <= P_l
//! ```
//!
//! over transmit powers `p > 0` on locations with `X_k > 0`. In log-power
//! coordinates the problem is convex, and the stationarity condition of its
//! Lagrangian has the fixed-point form
//!
//! ```text
//! p_k = X_k / (beta_{c(k)} + h_k(p))
//! h_k(p) = sum_j X_j * (g[j][c(k)] + G(j -> k) [j copilot of k]) / D_j(p)
//! ```
//!
//! where `beta_l >= 0` is the dual price of cell `l`'s budget and `D_j` is
//! the SINR denominator of location `j`. The map `p -> X / (beta + h(p))` is
//! a standard interference function (positive, monotone, scalable), so the
//! inner iteration converges to the unique fixed point whenever one exists;
//! an outer projected subgradient ascent drives the duals to budget
//! feasibility and complementary slackness.
//!
//! A fixed point requires a positive dual on at least one cell holding
//! active locations: summing `p_k h_k` over locations gives
//! `sum_j X_j (D_j - 1) / D_j < sum_j X_j`, so `p_k h_k = X_k` cannot hold
//! for every `k` with all duals zero. The outer loop therefore never lets
//! the dual vector collapse to all zeros (see `solve`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{
    validate_powers, EffectiveGains, NetworkTopology, PowerError, PowerVector,
};

/// Per-location flow counts (the queue state of the network).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueueState(pub Vec<u64>);

impl QueueState {
    pub fn zeros(n: usize) -> Self {
        QueueState(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn weights(&self) -> QueueWeights {
        QueueWeights(self.0.iter().map(|&x| x as f64).collect())
    }
}

/// Nonnegative per-location weights used by the allocator: either raw flow
/// counts or quantized copies of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueueWeights(Vec<f64>);

impl QueueWeights {
    pub fn new(w: Vec<f64>) -> Result<Self, SolverError> {
        for (index, &value) in w.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(SolverError::BadWeight { index, value });
            }
        }
        Ok(QueueWeights(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Indices with positive weight, in network order.
    pub fn active(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&k| self.0[k] > 0.0).collect()
    }
}

impl From<&QueueState> for QueueWeights {
    fn from(x: &QueueState) -> Self {
        x.weights()
    }
}

/// Per-cell dual prices of the power budgets, all nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualVars(Vec<f64>);

impl DualVars {
    pub fn new(beta: Vec<f64>) -> Result<Self, SolverError> {
        for (index, &value) in beta.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(SolverError::BadDual { index, value });
            }
        }
        Ok(DualVars(beta))
    }

    pub fn zeros(cells: usize) -> Self {
        DualVars(vec![0.0; cells])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, l: usize) -> f64 {
        self.0[l]
    }
}

/// Outer dual step rule.
///
/// Subgradient steps are normalized per cell by `W_l / P_l^2`, where `W_l`
/// is the cell's active weight. The dual's natural magnitude is `W_l / P_l`
/// and the budget gap's is `P_l`, so with this normalization `delta0` and
/// `delta` are dimensionless and the dual trajectory is invariant to
/// rescaling the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `delta_i = delta0 / sqrt(i)`; converges from any start.
    Diminishing { delta0: f64 },
    /// Constant normalized step, for experiments.
    Fixed { delta: f64 },
    /// Per-cell quasi-Newton step `alpha_l (S_l - P_l) / kappa_l` with
    /// `kappa_l = sum_{k in l} p_k^2 / X_k`, the budget sensitivity at
    /// frozen interference. Interference feedback makes the true
    /// sensitivity larger, so the damping `alpha_l` halves whenever the
    /// cell's budget gap changes sign and recovers geometrically while it
    /// does not. Fastest on repeated warm-started solves.
    Adaptive,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Diminishing { delta0: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Inner loop stops when the largest relative power change per iteration
    /// drops below this.
    pub inner_tol: f64,
    /// Budget mismatch tolerated at termination, measured relative to
    /// `max(1, P_l)` so one setting works across power scales.
    pub outer_tol: f64,
    /// Relative stationarity residual the report is expected to meet.
    pub stationarity_tol: f64,
    pub step: StepSchedule,
    pub max_inner: u64,
    pub max_outer: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            inner_tol: 1e-10,
            outer_tol: 1e-6,
            stationarity_tol: 1e-6,
            step: StepSchedule::default(),
            max_inner: 100_000,
            max_outer: 50_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SolverError::BadConfig(format!("{name} must be positive and finite (got {v})")))
            }
        };
        positive("inner_tol", self.inner_tol)?;
        positive("outer_tol", self.outer_tol)?;
        positive("stationarity_tol", self.stationarity_tol)?;
        match self.step {
            StepSchedule::Diminishing { delta0 } => positive("delta0", delta0)?,
            StepSchedule::Fixed { delta } => positive("delta", delta)?,
            StepSchedule::Adaptive => {}
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(SolverError::BadConfig("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// Max-norm KKT residuals of a `(p, beta)` pair.
///
/// Stationarity is relative to the weights; primal feasibility and
/// complementary slackness are budget gaps relative to `max(1, P_l)`;
/// dual feasibility is absolute. Complementary slackness is the worst
/// budget mismatch over cells with a strictly positive dual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementary_slackness: f64,
}

impl KktResiduals {
    pub fn worst(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementary_slackness)
    }

    fn zero() -> Self {
        KktResiduals {
            stationarity: 0.0,
            primal_feasibility: 0.0,
            dual_feasibility: 0.0,
            complementary_slackness: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub powers: PowerVector,
    pub duals: DualVars,
    /// `sum_k X_k ln gamma_k` at the returned powers; zero when idle.
    pub objective: f64,
    pub outer_iterations: u64,
    /// Inner iterations summed over all outer steps.
    pub inner_iterations: u64,
    pub kkt: KktResiduals,
    /// All queues were empty; the all-zero power vector was returned without
    /// solving.
    pub empty: bool,
}

/// Warm-start state carried between repeated solves on nearby queue states.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub powers: Vec<f64>,
    pub duals: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error("queue weights: entry {index} must be nonnegative and finite (got {value})")]
    BadWeight { index: usize, value: f64 },
    #[error("duals: entry {index} must be nonnegative and finite (got {value})")]
    BadDual { index: usize, value: f64 },
    #[error("weights have {got} entries, expected {expected}")]
    WeightLength { got: usize, expected: usize },
    #[error("duals have {got} entries, expected {expected}")]
    DualLength { got: usize, expected: usize },
    #[error("solver config: {0}")]
    BadConfig(String),
    #[error("objective undefined: active location {location} has zero power")]
    ZeroPowerAtActive { location: usize },
    #[error("inner fixed point: no convergence within {iterations} iterations (last relative change {residual:.3e})")]
    InnerNonConvergence { iterations: u64, residual: f64 },
    #[error("outer dual ascent: no convergence within {iterations} iterations (worst budget mismatch {residual:.3e})")]
    OuterNonConvergence { iterations: u64, residual: f64 },
}

fn check_weights(w: &QueueWeights, topology: &NetworkTopology) -> Result<(), SolverError> {
    if w.len() != topology.num_locations() {
        return Err(SolverError::WeightLength { got: w.len(), expected: topology.num_locations() });
    }
    Ok(())
}

/// Weighted log-SINR utility `sum_k X_k ln gamma_k(p)`.
///
/// Locations with zero weight are ignored; an active location with zero
/// power makes the objective undefined and is an error.
pub fn objective(
    weights: &QueueWeights,
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    p: &[f64],
) -> Result<f64, SolverError> {
    check_weights(weights, topology)?;
    validate_powers(p, topology.num_locations())?;
    let d = gains.denominators(topology, p);
    let mut total = 0.0;
    for (k, &w) in weights.as_slice().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        if p[k] == 0.0 {
            return Err(SolverError::ZeroPowerAtActive { location: k });
        }
        // ln gamma expanded for scale robustness.
        total += w * (p[k].ln() + gains.own(k).ln() - d[k].ln());
    }
    Ok(total)
}

// h for every location from precomputed denominators `d`, written into
// `out`. `ratio` and `cell_acc` are scratch buffers (lengths n and L).
#[allow(clippy::too_many_arguments)]
fn h_into(
    w: &[f64],
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    d: &[f64],
    ratio: &mut [f64],
    cell_acc: &mut [f64],
    out: &mut [f64],
) {
    for (j, r) in ratio.iter_mut().enumerate() {
        *r = if w[j] > 0.0 { w[j] / d[j] } else { 0.0 };
    }
    cell_acc.fill(0.0);
    for (j, &r) in ratio.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        for (c, acc) in cell_acc.iter_mut().enumerate() {
            *acc += r * topology.gain(j, c);
        }
    }
    for (k, h) in out.iter_mut().enumerate() {
        let mut acc = cell_acc[topology.cell_of(k)];
        for &(j, g_jk) in gains.cross_in(k) {
            acc += ratio[j] * g_jk;
        }
        *h = acc;
    }
}

/// Interference prices `h_k(p)` for every location.
///
/// `h_k` is the marginal utility loss per unit of `p_k`, i.e. the gradient
/// of `sum_j X_j ln D_j(p)` with respect to `p_k`.
pub fn h_function(
    weights: &QueueWeights,
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    p: &[f64],
) -> Result<Vec<f64>, SolverError> {
    check_weights(weights, topology)?;
    validate_powers(p, topology.num_locations())?;
    let n = topology.num_locations();
    let d = gains.denominators(topology, p);
    let mut ratio = vec![0.0; n];
    let mut cell_acc = vec![0.0; topology.num_cells()];
    let mut out = vec![0.0; n];
    h_into(weights.as_slice(), topology, gains, &d, &mut ratio, &mut cell_acc, &mut out);
    Ok(out)
}

pub(crate) trait SolveObserver {
    fn inner_iteration(&mut self, active_locations: usize);
    fn outer_iteration(&mut self, cells: usize);
}

pub(crate) struct NoopObserver;

impl SolveObserver for NoopObserver {
    fn inner_iteration(&mut self, _active_locations: usize) {}
    fn outer_iteration(&mut self, _cells: usize) {}
}

struct Workspace {
    d: Vec<f64>,
    ratio: Vec<f64>,
    cell_acc: Vec<f64>,
    h: Vec<f64>,
    p_next: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, cells: usize) -> Self {
        Workspace {
            d: vec![0.0; n],
            ratio: vec![0.0; n],
            cell_acc: vec![0.0; cells],
            h: vec![0.0; n],
            p_next: vec![0.0; n],
        }
    }
}

// One inner fixed-point run at frozen duals. `p` holds the start on entry
// and the fixed point on exit (inactive entries stay zero). Returns the
// iteration count.
#[allow(clippy::too_many_arguments)]
fn inner_loop(
    w: &[f64],
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    beta: &[f64],
    active: &[usize],
    cfg: &SolverConfig,
    ws: &mut Workspace,
    p: &mut Vec<f64>,
    obs: &mut dyn SolveObserver,
) -> Result<u64, SolverError> {
    let mut residual = f64::INFINITY;
    for iter in 1..=cfg.max_inner {
        ws.d.clear();
        ws.d.extend(gains.denominators(topology, p));
        h_into(w, topology, gains, &ws.d, &mut ws.ratio, &mut ws.cell_acc, &mut ws.h);
        ws.p_next.copy_from_slice(p);
        residual = 0.0;
        for &k in active {
            let next = w[k] / (beta[topology.cell_of(k)] + ws.h[k]);
            let rel = (next - p[k]).abs() / p[k].max(f64::MIN_POSITIVE);
            residual = residual.max(rel);
            ws.p_next[k] = next;
        }
        std::mem::swap(p, &mut ws.p_next);
        obs.inner_iteration(active.len());
        if residual <= cfg.inner_tol {
            return Ok(iter);
        }
    }
    Err(SolverError::InnerNonConvergence { iterations: cfg.max_inner, residual })
}

/// Runs the inner fixed-point iteration at frozen duals from the uniform
/// budget split, returning the unique fixed point.
///
/// The iterates follow `p <- X / (beta + h(p))` exactly. A fixed point only
/// exists when at least one cell holding active locations carries a positive
/// dual; otherwise the iterates grow without bound until the iteration cap
/// trips.
pub fn inner_fixed_point(
    weights: &QueueWeights,
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    beta: &DualVars,
    config: &SolverConfig,
) -> Result<PowerVector, SolverError> {
    config.validate()?;
    check_weights(weights, topology)?;
    if beta.as_slice().len() != topology.num_cells() {
        return Err(SolverError::DualLength {
            got: beta.as_slice().len(),
            expected: topology.num_cells(),
        });
    }
    let active = weights.active();
    let mut p = uniform_split(weights, topology);
    if active.is_empty() {
        return Ok(PowerVector::from_raw(p));
    }
    let mut ws = Workspace::new(topology.num_locations(), topology.num_cells());
    inner_loop(
        weights.as_slice(),
        topology,
        gains,
        beta.as_slice(),
        &active,
        config,
        &mut ws,
        &mut p,
        &mut NoopObserver,
    )?;
    Ok(PowerVector::from_raw(p))
}

// Budget split evenly over each cell's active locations.
fn uniform_split(weights: &QueueWeights, topology: &NetworkTopology) -> Vec<f64> {
    let cells = topology.num_cells();
    let mut count = vec![0usize; cells];
    for k in 0..topology.num_locations() {
        if weights.get(k) > 0.0 {
            count[topology.cell_of(k)] += 1;
        }
    }
    (0..topology.num_locations())
        .map(|k| {
            let l = topology.cell_of(k);
            if weights.get(k) > 0.0 {
                topology.budget(l) / count[l] as f64
            } else {
                0.0
            }
        })
        .collect()
}

fn default_duals(weights: &QueueWeights, topology: &NetworkTopology) -> Vec<f64> {
    let mut beta = vec![0.0; topology.num_cells()];
    for k in 0..topology.num_locations() {
        beta[topology.cell_of(k)] += weights.get(k);
    }
    for (l, b) in beta.iter_mut().enumerate() {
        *b /= topology.budget(l);
    }
    beta
}

/// KKT residuals of an arbitrary `(p, beta)` pair; pure.
pub fn kkt_residuals(
    weights: &QueueWeights,
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    p: &[f64],
    beta: &DualVars,
) -> Result<KktResiduals, SolverError> {
    check_weights(weights, topology)?;
    validate_powers(p, topology.num_locations())?;
    if beta.as_slice().len() != topology.num_cells() {
        return Err(SolverError::DualLength {
            got: beta.as_slice().len(),
            expected: topology.num_cells(),
        });
    }
    let h = h_function(weights, topology, gains, p)?;
    let mut stationarity = 0.0;
    for (k, &w) in weights.as_slice().iter().enumerate() {
        if w > 0.0 {
            let r = (p[k] * (beta.get(topology.cell_of(k)) + h[k]) - w).abs() / w;
            stationarity = f64::max(stationarity, r);
        }
    }
    let mut cell_power = vec![0.0; topology.num_cells()];
    for (k, &pk) in p.iter().enumerate() {
        cell_power[topology.cell_of(k)] += pk;
    }
    let mut primal = 0.0;
    let mut dual = 0.0;
    let mut comp = 0.0;
    for (l, &spent) in cell_power.iter().enumerate() {
        let gap = (spent - topology.budget(l)) / topology.budget(l).max(1.0);
        primal = f64::max(primal, gap.max(0.0));
        dual = f64::max(dual, (-beta.get(l)).max(0.0));
        if beta.get(l) > 0.0 {
            comp = f64::max(comp, gap.abs());
        }
    }
    Ok(KktResiduals {
        stationarity,
        primal_feasibility: primal,
        dual_feasibility: dual,
        complementary_slackness: comp,
    })
}

/// Solves the weighted allocation problem; see the module docs.
///
/// Empty queues short-circuit to an all-zero power vector with the `empty`
/// flag set. On success the report satisfies, within tolerances: per-cell
/// budgets, complementary slackness, stationarity, and nonnegative duals.
pub fn solve(
    weights: &QueueWeights,
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    config: &SolverConfig,
) -> Result<SolverReport, SolverError> {
    solve_observed(weights, topology, gains, config, None, &mut NoopObserver)
}

/// `solve` with a warm start from a previous report on a nearby queue state.
pub fn solve_warm(
    weights: &QueueWeights,
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    config: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<SolverReport, SolverError> {
    solve_observed(weights, topology, gains, config, warm, &mut NoopObserver)
}

pub(crate) fn solve_observed(
    weights: &QueueWeights,
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    config: &SolverConfig,
    warm: Option<&WarmStart>,
    obs: &mut dyn SolveObserver,
) -> Result<SolverReport, SolverError> {
    config.validate()?;
    check_weights(weights, topology)?;
    let n = topology.num_locations();
    let cells = topology.num_cells();
    let active = weights.active();
    if active.is_empty() {
        return Ok(SolverReport {
            powers: PowerVector::from_raw(vec![0.0; n]),
            duals: DualVars::zeros(cells),
            objective: 0.0,
            outer_iterations: 0,
            inner_iterations: 0,
            kkt: KktResiduals::zero(),
            empty: true,
        });
    }
    let w = weights.as_slice();
    let mut cell_has_active = vec![false; cells];
    for &k in &active {
        cell_has_active[topology.cell_of(k)] = true;
    }
    // Dual scale per cell: total active weight over budget. Also the default
    // initial dual, which keeps the first inner problem well posed.
    let scale = default_duals(weights, topology);
    let mut beta: Vec<f64> = match warm {
        Some(ws) if ws.duals.len() == cells && ws.powers.len() == n => ws.duals.clone(),
        Some(_) => return Err(SolverError::BadConfig("warm start shape mismatch".into())),
        None => scale.clone(),
    };
    // A warm start from a different active pattern can leave every active
    // cell unpriced; fall back to the default duals.
    if !beta.iter().enumerate().any(|(l, &b)| cell_has_active[l] && b > 0.0) {
        beta = scale.clone();
    }
    // A cell with no active locations spends nothing, so its budget never
    // binds and its dual is zero; a warm start from a busier state may
    // carry a positive one that the weight-normalized steps cannot move.
    for (l, &has) in cell_has_active.iter().enumerate() {
        if !has {
            beta[l] = 0.0;
        }
    }
    let mut p: Vec<f64> = match warm {
        Some(ws) => {
            let mut p = ws.powers.clone();
            for (k, pk) in p.iter_mut().enumerate() {
                if w[k] == 0.0 {
                    *pk = 0.0;
                }
            }
            p
        }
        None => uniform_split(weights, topology),
    };
    let mut ws = Workspace::new(n, cells);
    let mut stepper = DualStepper::new(config.step, &scale, topology);
    let mut total_inner = 0u64;
    let mut cell_power = vec![0.0; cells];
    let mut worst_gap = f64::INFINITY;
    for outer in 1..=config.max_outer {
        total_inner += inner_loop(w, topology, gains, &beta, &active, config, &mut ws, &mut p, obs)?;
        obs.outer_iteration(cells);
        for s in cell_power.iter_mut() {
            *s = 0.0;
        }
        for &k in &active {
            cell_power[topology.cell_of(k)] += p[k];
        }
        let mut done = true;
        worst_gap = 0.0;
        for l in 0..cells {
            let gap = (cell_power[l] - topology.budget(l)) / topology.budget(l).max(1.0);
            let violated = if beta[l] > 0.0 { gap.abs() > config.outer_tol } else { gap > config.outer_tol };
            if violated {
                done = false;
            }
            worst_gap = worst_gap.max(if beta[l] > 0.0 { gap.abs() } else { gap.max(0.0) });
        }
        if done {
            let powers = PowerVector::from_raw(p);
            let duals = DualVars::new(beta)?;
            let kkt = kkt_residuals(weights, topology, gains, powers.as_slice(), &duals)?;
            let objective = objective(weights, topology, gains, powers.as_slice())?;
            return Ok(SolverReport {
                powers,
                duals,
                objective,
                outer_iterations: outer,
                inner_iterations: total_inner,
                kkt,
                empty: false,
            });
        }
        stepper.step(&mut beta, &cell_power, topology, w, &p, &cell_has_active, outer);
    }
    Err(SolverError::OuterNonConvergence { iterations: config.max_outer, residual: worst_gap })
}

struct DualStepper {
    schedule: StepSchedule,
    /// `W_l / P_l`, the dual magnitude scale (also the default start).
    scale: Vec<f64>,
    /// `W_l / P_l^2`, the subgradient normalization.
    norm: Vec<f64>,
    /// Adaptive damping, halved on budget-gap sign flips.
    alpha: Vec<f64>,
    last_gap: Vec<f64>,
}

impl DualStepper {
    fn new(schedule: StepSchedule, scale: &[f64], topology: &NetworkTopology) -> Self {
        let norm = scale
            .iter()
            .enumerate()
            .map(|(l, &s)| s / topology.budget(l))
            .collect();
        DualStepper {
            schedule,
            scale: scale.to_vec(),
            norm,
            alpha: vec![1.0; scale.len()],
            last_gap: vec![0.0; scale.len()],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        beta: &mut [f64],
        cell_power: &[f64],
        topology: &NetworkTopology,
        w: &[f64],
        p: &[f64],
        cell_has_active: &[bool],
        outer: u64,
    ) {
        let cells = beta.len();
        let mut next = vec![0.0; cells];
        match self.schedule {
            StepSchedule::Diminishing { delta0 } => {
                let delta = delta0 / (outer as f64).sqrt();
                for l in 0..cells {
                    let gap = cell_power[l] - topology.budget(l);
                    next[l] = (beta[l] + delta * self.norm[l] * gap).max(0.0);
                }
            }
            StepSchedule::Fixed { delta } => {
                for l in 0..cells {
                    let gap = cell_power[l] - topology.budget(l);
                    next[l] = (beta[l] + delta * self.norm[l] * gap).max(0.0);
                }
            }
            StepSchedule::Adaptive => {
                let mut kappa = vec![0.0; cells];
                for (k, &pk) in p.iter().enumerate() {
                    if w[k] > 0.0 {
                        kappa[topology.cell_of(k)] += pk * pk / w[k];
                    }
                }
                for l in 0..cells {
                    let gap = cell_power[l] - topology.budget(l);
                    if gap * self.last_gap[l] < 0.0 {
                        self.alpha[l] = (self.alpha[l] / 2.0).max(1e-3);
                    } else {
                        self.alpha[l] = (self.alpha[l] * 1.2).min(1.0);
                    }
                    self.last_gap[l] = gap;
                    if kappa[l] > 0.0 {
                        let raw = beta[l] + self.alpha[l] * gap / kappa[l];
                        let cap = 8.0 * beta[l].max(self.scale[l]);
                        next[l] = raw.clamp(0.0, cap);
                    } else {
                        next[l] = beta[l];
                    }
                }
            }
        }
        // No fixed point exists with every active cell unpriced; halve
        // instead of zeroing, which keeps descent toward genuinely slack
        // duals.
        if !next.iter().enumerate().any(|(l, &b)| cell_has_active[l] && b > 0.0) {
            for (l, b) in beta.iter().enumerate() {
                next[l] = if *b > 0.0 { *b / 2.0 } else { 0.0 };
            }
        }
        beta.copy_from_slice(&next);
    }
}
