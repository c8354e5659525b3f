//! Experiment configuration: schema, loading, validation.
//!
//! One JSON document drives every command. Units are fixed by convention
//! and documented on each field: channel gains are linear power ratios,
//! powers and budgets are in noise units, arrival rates are flows per
//! flow-slot, rates are nats per flow-slot unless a bandwidth is supplied
//! for bit-rate presentation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use mimoflow_core::flowsim::{ArrivalConfig, Policy, StabilityThresholds};
use mimoflow_core::netmodel::{effective_gains, EffectiveGains, Location, NetworkTopology, PhyParams};
use mimoflow_core::solver::SolverConfig;

use crate::scenario::{paper_sec5, PAPER_SEC5_NAME};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    /// One allocation for the configured queues.
    Solve,
    /// Flow-level simulation per seed.
    Simulate,
    /// Stability boundary along the arrival-rate ray.
    Sweep,
    /// Oracle batteries and property suites.
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhyConfig {
    /// Antennas per base station.
    pub antennas: usize,
    /// Orthogonal pilots per coherence block.
    pub pilot_len: u32,
    /// Pilot transmit SNR over noise.
    pub pilot_snr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationConfig {
    /// Serving cell index.
    pub cell: usize,
    /// Pilot slot, 1-based, at most `pilot_len`.
    pub pilot: u32,
    /// Linear channel gain toward every cell's base station.
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    /// Multipliers applied to the arrival-rate vector.
    pub scale_grid: Vec<f64>,
    #[serde(default)]
    pub thresholds: Option<StabilityThresholds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub phy: PhyConfig,
    /// Per-cell power budget in noise units.
    pub budgets: Vec<f64>,
    pub locations: Vec<LocationConfig>,
    /// Queue lengths: the weights for `solve`, the initial backlog for
    /// `simulate`. Defaults to one flow everywhere for `solve` and empty
    /// queues for `simulate`.
    #[serde(default)]
    pub queues: Option<Vec<u64>>,
    /// Required for `simulate` and `sweep`.
    #[serde(default)]
    pub arrivals: Option<ArrivalConfig>,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    /// Second policy swept side by side for boundary comparison.
    #[serde(default)]
    pub compare_policy: Option<Policy>,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Simulation length in flow-slots.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    /// When set, rates are additionally presented in bits per second:
    /// rate_nats / ln(2) * bandwidth in Hz.
    #[serde(default)]
    pub bandwidth_mhz: Option<f64>,
}

fn default_policy() -> Policy {
    Policy::Centralized
}

fn default_horizon() -> f64 {
    1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub command: CommandKind,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_out_dir() -> String {
    "artifacts".to_string()
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

/// Loads a configuration from a JSON file, or a builtin by name.
pub fn load_config(source: &str) -> Result<ExperimentConfig, CliError> {
    if source == PAPER_SEC5_NAME {
        return Ok(paper_sec5());
    }
    let path = Path::new(source);
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{source}: {e} (builtins: {PAPER_SEC5_NAME})")))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{source}: {e}")))
}

/// Physical model compiled from a validated configuration.
#[derive(Debug)]
pub struct BuiltScenario {
    pub phy: PhyParams,
    pub topology: NetworkTopology,
    pub gains: EffectiveGains,
}

/// Cross-checks every field and builds the physical model. Error messages
/// name the offending field.
pub fn validate(cfg: &ExperimentConfig) -> Result<BuiltScenario, CliError> {
    let sc = &cfg.scenario;
    let cells = sc.budgets.len();
    let n = sc.locations.len();
    if cells == 0 {
        return Err(CliError::Config("scenario.budgets: need at least one cell".into()));
    }
    for (l, &b) in sc.budgets.iter().enumerate() {
        if !(b > 0.0 && b.is_finite()) {
            return Err(CliError::Config(format!(
                "scenario.budgets[{l}]: budget must be positive and finite (got {b})"
            )));
        }
    }
    if n == 0 {
        return Err(CliError::Config("scenario.locations: need at least one location".into()));
    }
    let phy = PhyParams::new(sc.phy.antennas, sc.phy.pilot_len, sc.phy.pilot_snr)
        .map_err(|e| CliError::Config(format!("scenario.phy: {e}")))?;
    for (k, loc) in sc.locations.iter().enumerate() {
        if loc.cell >= cells {
            return Err(CliError::Config(format!(
                "scenario.locations[{k}].cell: {} out of range for {cells} cells",
                loc.cell
            )));
        }
        if loc.pilot == 0 || loc.pilot > sc.phy.pilot_len {
            return Err(CliError::Config(format!(
                "scenario.locations[{k}].pilot: {} outside 1..={}",
                loc.pilot, sc.phy.pilot_len
            )));
        }
        if loc.gains.len() != cells {
            return Err(CliError::Config(format!(
                "scenario.locations[{k}].gains: {} entries for {cells} cells",
                loc.gains.len()
            )));
        }
        for (l, &g) in loc.gains.iter().enumerate() {
            if !(g > 0.0 && g.is_finite()) {
                return Err(CliError::Config(format!(
                    "scenario.locations[{k}].gains[{l}]: gain must be positive and finite (got {g})"
                )));
            }
        }
    }
    if let Some(q) = &sc.queues {
        if q.len() != n {
            return Err(CliError::Config(format!(
                "scenario.queues: {} entries for {n} locations",
                q.len()
            )));
        }
    }
    if let Some(a) = &sc.arrivals {
        if a.lambda.len() != n {
            return Err(CliError::Config(format!(
                "scenario.arrivals.lambda: {} entries for {n} locations",
                a.lambda.len()
            )));
        }
        for (k, &l) in a.lambda.iter().enumerate() {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(CliError::Config(format!(
                    "scenario.arrivals.lambda[{k}]: rate must be nonnegative and finite (got {l})"
                )));
            }
        }
        if !(a.mean_flow_size > 0.0 && a.mean_flow_size.is_finite()) {
            return Err(CliError::Config(format!(
                "scenario.arrivals.mean_flow_size: must be positive and finite (got {})",
                a.mean_flow_size
            )));
        }
    }
    sc.solver.validate().map_err(|e| CliError::Config(format!("scenario.solver: {e}")))?;
    if let Policy::Distributed(d) = &sc.policy {
        d.validate().map_err(|e| CliError::Config(format!("scenario.policy: {e}")))?;
    }
    if let Some(Policy::Distributed(d)) = &sc.compare_policy {
        d.validate().map_err(|e| CliError::Config(format!("scenario.compare_policy: {e}")))?;
    }
    if !(sc.horizon > 0.0 && sc.horizon.is_finite()) {
        return Err(CliError::Config(format!(
            "scenario.horizon: must be positive and finite (got {})",
            sc.horizon
        )));
    }
    if let Some(b) = sc.bandwidth_mhz {
        if !(b > 0.0 && b.is_finite()) {
            return Err(CliError::Config(format!(
                "scenario.bandwidth_mhz: must be positive and finite (got {b})"
            )));
        }
    }
    match cfg.command {
        CommandKind::Simulate | CommandKind::Sweep => {
            if sc.arrivals.is_none() {
                return Err(CliError::Config(
                    "scenario.arrivals: required for simulate and sweep".into(),
                ));
            }
            if cfg.command == CommandKind::Sweep {
                let grid_ok = sc.sweep.as_ref().map(|s| !s.scale_grid.is_empty());
                if grid_ok != Some(true) {
                    return Err(CliError::Config(
                        "scenario.sweep.scale_grid: required and nonempty for sweep".into(),
                    ));
                }
                for (i, &s) in sc.sweep.as_ref().unwrap().scale_grid.iter().enumerate() {
                    if !(s >= 0.0 && s.is_finite()) {
                        return Err(CliError::Config(format!(
                            "scenario.sweep.scale_grid[{i}]: must be nonnegative and finite (got {s})"
                        )));
                    }
                }
            }
        }
        CommandKind::Solve | CommandKind::Verify => {}
    }
    if cfg.seeds.is_empty() {
        return Err(CliError::Config("seeds: need at least one seed".into()));
    }
    let locations: Vec<Location> = sc
        .locations
        .iter()
        .map(|l| Location { cell: l.cell, pilot: l.pilot, gains: l.gains.clone() })
        .collect();
    let topology = NetworkTopology::new(&phy, sc.budgets.clone(), locations)
        .map_err(|e| CliError::Config(format!("scenario.locations: {e}")))?;
    let gains = effective_gains(&phy, &topology)
        .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
    Ok(BuiltScenario { phy, topology, gains })
}
