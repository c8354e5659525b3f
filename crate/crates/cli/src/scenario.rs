//! Builtin two-cell hexagonal scenario and rate presentation helpers.

use mimoflow_core::flowsim::{ArrivalConfig, Policy, SizeLaw};
use mimoflow_core::distributed::{DistributedConfig, ExchangeMode};
use mimoflow_core::solver::{SolverConfig, StepSchedule};

use crate::config::{
    CommandKind, ExperimentConfig, LocationConfig, PhyConfig, ScenarioConfig, SweepSection,
};

pub const PAPER_SEC5_NAME: &str = "paper-sec5";

/// Converts a rate in nats to bits: one nat is 1/ln(2) bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// Bit-rate presentation: nats per flow-slot scaled by a bandwidth in MHz,
/// with one slot per symbol.
pub fn rate_bits_per_second(rate_nats: f64, bandwidth_mhz: f64) -> f64 {
    nats_to_bits(rate_nats) * bandwidth_mhz * 1e6
}

/// Two hexagonal cells of radius 1 km, 100 antennas each, two pilots.
///
/// Geometry, so the gain table below is reproducible: base stations of
/// adjacent hexagonal cells sit sqrt(3) * 1000 m apart. Each cell serves
/// two user locations on the line connecting the stations: a near
/// location 100 m from its own station (hence sqrt(3) * 1000 - 100 m from
/// the neighbor) and a cell-border location at the midpoint, sqrt(3) * 500 m
/// from both. Path gain is distance^-2.5 (linear, relative to unit noise).
/// The near pair shares pilot 1 and the border pair shares pilot 2, the
/// worst-case contamination pattern. Budgets of 1e7 noise units and pilot
/// SNR 1e12 put the near user around SINR 49 and the border user around
/// 0.85 at an even power split.
///
/// Time is measured in flow-slots with unit-mean flow work: one work unit
/// stands for one fixed-size packet, and service rates are nats per slot.
/// The 20 MHz bandwidth enters only when rates are presented in bits per
/// second.
pub fn paper_sec5() -> ExperimentConfig {
    let spacing = 3.0_f64.sqrt() * 1000.0;
    let d_near = 100.0;
    let d_far = spacing - d_near;
    let d_border = spacing / 2.0;
    let pathloss = |d: f64| d.powf(-2.5);
    let g_near_own = pathloss(d_near);
    let g_near_other = pathloss(d_far);
    let g_border = pathloss(d_border);
    let locations = vec![
        LocationConfig { cell: 0, pilot: 1, gains: vec![g_near_own, g_near_other] },
        LocationConfig { cell: 0, pilot: 2, gains: vec![g_border, g_border] },
        LocationConfig { cell: 1, pilot: 1, gains: vec![g_near_other, g_near_own] },
        LocationConfig { cell: 1, pilot: 2, gains: vec![g_border, g_border] },
    ];
    ExperimentConfig {
        scenario: ScenarioConfig {
            phy: PhyConfig { antennas: 100, pilot_len: 2, pilot_snr: 1e12 },
            budgets: vec![1e7, 1e7],
            locations,
            queues: Some(vec![1, 1, 1, 1]),
            arrivals: Some(ArrivalConfig {
                // Near locations take five times the border load.
                lambda: vec![0.4, 0.08, 0.4, 0.08],
                mean_flow_size: 1.0,
                size_law: SizeLaw::Exponential,
            }),
            policy: Policy::Centralized,
            compare_policy: Some(Policy::Distributed(DistributedConfig {
                exchange_period: 10,
                quant_step: 2.0,
                mode: ExchangeMode::StaleQuantized,
            })),
            solver: SolverConfig { step: StepSchedule::Adaptive, ..SolverConfig::default() },
            horizon: 2000.0,
            sweep: Some(SweepSection {
                scale_grid: vec![0.5, 1.0, 2.0, 4.0, 7.0, 10.0],
                thresholds: None,
            }),
            bandwidth_mhz: Some(20.0),
        },
        command: CommandKind::Solve,
        out_dir: "artifacts".to_string(),
        seeds: vec![1, 2, 3],
    }
}
