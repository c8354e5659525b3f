//! Distributed execution of the power allocator.
//!
//! Two emulated exchange disciplines:
//!
//! * **Per-iteration exchange**: the cells jointly run the centralized
//!   iteration, trading one scalar per busy location per inner step plus a
//!   dual broadcast per outer step. Output is identical to the centralized
//!   solve; the ledger records the signaling cost.
//! * **Stale quantized exchange**: every `exchange_period` flow-slots the
//!   cells broadcast quantized queue lengths. Each base station then solves
//!   the full network problem locally on that shared snapshot, using the
//!   snapshot even for its own queues, and applies only its own cell's
//!   powers. The solves are deterministic on identical input, so the
//!   per-station power vectors agree bit for bit.
//!
//! Exchange is instantaneous and lossless at period boundaries; transport
//! effects are out of scope.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{EffectiveGains, NetworkTopology};
use crate::solver::{
    solve_observed, QueueState, QueueWeights, SolveObserver, SolverConfig, SolverError,
    SolverReport, WarmStart,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeMode {
    PerIteration,
    StaleQuantized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributedConfig {
    /// Flow-slots between queue exchanges.
    pub exchange_period: u64,
    /// Uniform quantizer step; the worst-case error is half of it.
    pub quant_step: f64,
    pub mode: ExchangeMode,
}

impl DistributedConfig {
    pub fn validate(&self) -> Result<(), DistributedError> {
        if self.exchange_period == 0 {
            return Err(DistributedError::BadConfig("exchange_period must be at least 1".into()));
        }
        if !(self.quant_step > 0.0 && self.quant_step.is_finite()) {
            return Err(DistributedError::BadConfig(format!(
                "quant_step must be positive and finite (got {})",
                self.quant_step
            )));
        }
        Ok(())
    }

    /// Worst-case quantization error `E_Q`.
    pub fn max_quant_error(&self) -> f64 {
        self.quant_step / 2.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DistributedError {
    #[error("distributed config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Nearest multiple of `step`, ties away from zero toward `+inf`.
///
/// Mid-tread: the error never exceeds `step / 2`, and a tied queue value
/// rounds up, so the allocator never underweights a location by more than
/// the error bound.
pub fn quantize_value(x: f64, step: f64) -> f64 {
    step * (x / step + 0.5).floor()
}

/// The queue snapshot shared by every base station between exchanges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaleView {
    xhat: Vec<f64>,
    exchanged_at: f64,
}

impl StaleView {
    /// Quantizes `x` and stamps the exchange time.
    pub fn exchange(x: &QueueState, quant_step: f64, now: f64) -> Self {
        StaleView {
            xhat: x.0.iter().map(|&v| quantize_value(v as f64, quant_step)).collect(),
            exchanged_at: now,
        }
    }

    pub fn weights(&self) -> QueueWeights {
        QueueWeights::new(self.xhat.clone()).expect("quantized queues are nonnegative")
    }

    pub fn values(&self) -> &[f64] {
        &self.xhat
    }

    pub fn exchanged_at(&self) -> f64 {
        self.exchanged_at
    }

    /// Slots since the exchange that produced this view.
    pub fn age(&self, now: f64) -> f64 {
        now - self.exchanged_at
    }
}

/// Running count of scalars moved between base stations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalingLedger {
    pub scalars_exchanged: u64,
    pub exchange_events: u64,
}

impl SignalingLedger {
    pub fn record(&mut self, scalars: u64) {
        self.scalars_exchanged += scalars;
        self.exchange_events += 1;
    }

    pub fn absorb(&mut self, other: &SignalingLedger) {
        self.scalars_exchanged += other.scalars_exchanged;
        self.exchange_events += other.exchange_events;
    }
}

impl SolveObserver for SignalingLedger {
    // Each busy location feeds one interference scalar back per inner step.
    fn inner_iteration(&mut self, active_locations: usize) {
        self.record(active_locations as u64);
    }

    // Dual prices are broadcast once per outer step.
    fn outer_iteration(&mut self, cells: usize) {
        self.record(cells as u64);
    }
}

/// Per-iteration exchange: centralized solve plus signaling accounting.
///
/// The returned report is the centralized one (the emulated exchange is
/// lossless); the ledger holds `busy * inner + cells * outer` scalars.
pub fn distributed_solve_periteration(
    weights: &QueueWeights,
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    config: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<(SolverReport, SignalingLedger), DistributedError> {
    let mut ledger = SignalingLedger::default();
    let report = solve_observed(weights, topology, gains, config, warm, &mut ledger)?;
    Ok((report, ledger))
}

/// Outcome of one stale-exchange solve round.
#[derive(Debug, Clone, PartialEq)]
pub struct StaleSolveOutcome {
    /// The canonical report (base station 0's local solve).
    pub report: SolverReport,
    /// Each base station's own-cell slice of its locally computed powers,
    /// indexed by cell then by that cell's locations in network order.
    pub per_bs_own: Vec<Vec<f64>>,
}

/// Stale quantized exchange: every base station solves the full problem on
/// the shared snapshot and keeps its own cell's powers.
///
/// Runs one full solve per base station to emulate the replicated
/// computation, then verifies the local solutions are bit-identical before
/// assembling the outcome.
pub fn distributed_solve_stale(
    view: &StaleView,
    topology: &NetworkTopology,
    gains: &EffectiveGains,
    config: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<StaleSolveOutcome, DistributedError> {
    let weights = view.weights();
    let mut reports = Vec::with_capacity(topology.num_cells());
    for _bs in 0..topology.num_cells() {
        reports.push(crate::solver::solve_warm(&weights, topology, gains, config, warm)?);
    }
    let canonical = reports[0].clone();
    for (bs, report) in reports.iter().enumerate() {
        for (k, (&a, &b)) in canonical
            .powers
            .as_slice()
            .iter()
            .zip(report.powers.as_slice())
            .enumerate()
        {
            assert_eq!(
                a.to_bits(),
                b.to_bits(),
                "replicated solve diverged at base station {bs}, location {k}"
            );
        }
    }
    let per_bs_own = (0..topology.num_cells())
        .map(|l| {
            topology
                .cell_members(l)
                .iter()
                .map(|&k| reports[l].powers.get(k))
                .collect()
        })
        .collect();
    Ok(StaleSolveOutcome { report: canonical, per_bs_own })
}

/// One observation for the staleness audit: a location's true queue against
/// the view, with the exchange-window activity seen so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StalenessSample {
    pub time: f64,
    pub location: usize,
    /// True queue at `time`.
    pub queue: u64,
    /// View entry the allocator is acting on.
    pub view: f64,
    /// Arrivals at this location since the last exchange, up to `time`.
    pub window_arrivals: u64,
    /// Departures at this location since the last exchange, up to `time`.
    pub window_departures: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StalenessReport {
    pub samples: u64,
    /// Samples violating the realized-path bound
    /// `|X - Xhat| <= max(window arrivals, window departures) + E_Q`.
    pub violations: u64,
    /// Largest observed `|X - Xhat| - realized bound` (nonpositive when the
    /// audit passes).
    pub worst_margin: f64,
    /// `D * max(lambda_max, R_max) + E_Q`, the rate-based envelope the
    /// realized bound refines.
    pub apriori_bound: f64,
    /// Samples exceeding the rate-based envelope.
    pub apriori_violations: u64,
}

impl StalenessReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Audits every sample of a stale-exchange run against the staleness bound.
///
/// Between exchanges a queue moves only by its own arrivals and departures,
/// so `|X(t) - X(t_exchange)|` is at most the larger of the two window
/// counts, and the view adds at most the quantization error on top. The
/// rate-based envelope replaces the realized counts with
/// `D * max(lambda_max, R_max)`.
pub fn staleness_bound_check(
    samples: &[StalenessSample],
    config: &DistributedConfig,
    lambda_max: f64,
    r_max: f64,
) -> StalenessReport {
    let e_q = config.max_quant_error();
    let apriori_bound = config.exchange_period as f64 * lambda_max.max(r_max) + e_q;
    let mut violations = 0;
    let mut apriori_violations = 0;
    let mut worst_margin = f64::NEG_INFINITY;
    for s in samples {
        let gap = (s.queue as f64 - s.view).abs();
        let realized = s.window_arrivals.max(s.window_departures) as f64 + e_q;
        let margin = gap - realized;
        worst_margin = worst_margin.max(margin);
        if margin > 1e-9 {
            violations += 1;
        }
        if gap > apriori_bound + 1e-9 {
            apriori_violations += 1;
        }
    }
    if samples.is_empty() {
        worst_margin = 0.0;
    }
    StalenessReport {
        samples: samples.len() as u64,
        violations,
        worst_margin,
        apriori_bound,
        apriori_violations,
    }
}
