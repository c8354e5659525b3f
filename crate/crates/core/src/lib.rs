//! Multi-cell massive MIMO downlink power control with flow-level dynamics.
//!
//! The crate is organized around one optimization problem and one process
//! that repeatedly invokes it:
//!
//! * [`netmodel`] fixes the physical layer: topology, channel gains, pilot
//!   assignment, and the effective SINR of a power allocation.
//! * [`solver`] maximizes queue-weighted log-SINR utility under per-cell
//!   power budgets via dual ascent over an inner fixed-point iteration.
//! * [`distributed`] emulates per-iteration and stale quantized exchange
//!   and accounts for the scalars each variant puts on the air.
//! * [`flowsim`] runs the flow-level arrival and departure process under a
//!   power policy and classifies empirical stability.
//! * [`oracle`] independently re-evaluates rates and solves small instances
//!   by exhaustive search, for cross-checking the fast paths.
//! * [`instances`] builds seeded random networks for tests and experiments.

pub mod distributed;
pub mod flowsim;
pub mod instances;
pub mod netmodel;
pub mod oracle;
pub mod solver;

pub use distributed::{
    quantize_value, staleness_bound_check, DistributedConfig, DistributedError, ExchangeMode,
    SignalingLedger, StaleView, StalenessReport, StalenessSample,
};
pub use flowsim::{
    drift_probe, drift_probe_stale, simulate, stability_sweep, stability_verdict,
    validate_trace, ArrivalConfig, EventKind, Policy, PowerChange, SimError, SimParams,
    SimTrace, SizeLaw, StabilityThresholds, StabilityVerdict, StaleDriftReport, SweepParams,
    SweepRow, SweepTable, TraceEvent, Verdict,
};
pub use netmodel::{
    effective_gains, rate, sinr, EffectiveGains, Location, NetworkTopology, PhyParams,
    PowerError, PowerVector, TopologyError,
};
pub use solver::{
    h_function, inner_fixed_point, kkt_residuals, objective, solve, solve_warm, DualVars,
    KktResiduals, QueueState, QueueWeights, SolverConfig, SolverError, SolverReport,
    StepSchedule, WarmStart,
};
