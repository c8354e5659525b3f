//! Physical-layer model of a multi-cell downlink with per-cell conjugate
//! beamforming from uplink pilot estimates.
//!
//! Every location `k` is served by one base station `c(k)`; locations in
//! different cells may share an uplink pilot, which contaminates each other's
//! channel estimates. With `M` antennas per base station, pilot length `tau`,
//! pilot SNR `rho`, and large-scale gains `g[k][j]` between location `k` and
//! base station `j`, the effective SINR of location `k` under transmit powers
//! `p` (noise normalized to 1) is
//!
//! ```text
//! gamma_k = p_k * G_k / D_k
//! D_k     = 1 + sum_j g[k][j] * S_j + sum_{i in C(k)} p_i * G(k -> i)
//! G_k     = (M - 1) tau rho g[k][c(k)]^2 / (1 + tau rho q_k)
//! G(k->i) = (M - 1) tau rho g[k][c(i)]^2 / (1 + tau rho q_i)
//! q_i     = sum_{j: pilot(j) = pilot(i)} g[j][c(i)]
//! ```
//!
//! where `S_j` is the total power transmitted by cell `j` (the serving cell's
//! own power included) and `C(k)` is the set of co-pilot locations of `k` in
//! other cells. `G(k -> i)` is the coherent leakage gain of location `k`
//! through the contaminated estimate held by `i`'s base station. Rates are
//! `ln(1 + gamma)` in nats per flow-slot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Antenna, pilot, and pilot-SNR parameters shared by all base stations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhyParams {
    /// Antennas per base station, `M >= 2`.
    pub antennas: usize,
    /// Pilot sequence length `tau >= 1`; pilots are indexed `1..=tau`.
    pub pilot_len: u32,
    /// Uplink pilot SNR `rho > 0` at unit gain.
    pub pilot_snr: f64,
}

impl PhyParams {
    pub fn new(antennas: usize, pilot_len: u32, pilot_snr: f64) -> Result<Self, TopologyError> {
        let phy = PhyParams { antennas, pilot_len, pilot_snr };
        phy.validate()?;
        Ok(phy)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.antennas < 2 {
            return Err(TopologyError::TooFewAntennas(self.antennas));
        }
        if self.pilot_len == 0 {
            return Err(TopologyError::ZeroPilotLen);
        }
        if !(self.pilot_snr > 0.0 && self.pilot_snr.is_finite()) {
            return Err(TopologyError::BadPilotSnr(self.pilot_snr));
        }
        Ok(())
    }
}

/// One user location: serving cell, pilot index, and the large-scale gain
/// toward every base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub cell: usize,
    /// Pilot index in `1..=pilot_len`.
    pub pilot: u32,
    /// `gains[j]` is the large-scale gain toward base station `j`.
    pub gains: Vec<f64>,
}

/// Validated cell layout: per-cell power budgets and user locations.
///
/// Invariants enforced at construction: budgets positive and finite, gains
/// strictly positive and finite, one gain per cell, pilot indices in range,
/// and no two locations of the same cell sharing a pilot.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    budgets: Vec<f64>,
    locations: Vec<Location>,
    // Location indices per cell, in network order.
    members: Vec<Vec<usize>>,
    // Co-pilot partners of each location, excluding the location itself.
    copilots: Vec<Vec<usize>>,
}

impl NetworkTopology {
    pub fn new(
        phy: &PhyParams,
        budgets: Vec<f64>,
        locations: Vec<Location>,
    ) -> Result<Self, TopologyError> {
        phy.validate()?;
        if budgets.is_empty() {
            return Err(TopologyError::NoCells);
        }
        let cells = budgets.len();
        for (cell, &b) in budgets.iter().enumerate() {
            if !(b > 0.0 && b.is_finite()) {
                return Err(TopologyError::BadBudget { cell, value: b });
            }
        }
        for (k, loc) in locations.iter().enumerate() {
            if loc.cell >= cells {
                return Err(TopologyError::CellOutOfRange { location: k, cell: loc.cell, cells });
            }
            if loc.gains.len() != cells {
                return Err(TopologyError::GainCount { location: k, got: loc.gains.len(), cells });
            }
            for (cell, &g) in loc.gains.iter().enumerate() {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(TopologyError::BadGain { location: k, cell, value: g });
                }
            }
            if loc.pilot == 0 || loc.pilot > phy.pilot_len {
                return Err(TopologyError::PilotOutOfRange {
                    location: k,
                    pilot: loc.pilot,
                    pilot_len: phy.pilot_len,
                });
            }
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); cells];
        for (k, loc) in locations.iter().enumerate() {
            for &other in &members[loc.cell] {
                if locations[other].pilot == loc.pilot {
                    return Err(TopologyError::DuplicatePilot {
                        cell: loc.cell,
                        pilot: loc.pilot,
                        first: other,
                        second: k,
                    });
                }
            }
            members[loc.cell].push(k);
        }
        let copilots = locations
            .iter()
            .enumerate()
            .map(|(k, loc)| {
                locations
                    .iter()
                    .enumerate()
                    .filter(|&(i, other)| i != k && other.pilot == loc.pilot)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        Ok(NetworkTopology { budgets, locations, members, copilots })
    }

    pub fn num_cells(&self) -> usize {
        self.budgets.len()
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn budget(&self, cell: usize) -> f64 {
        self.budgets[cell]
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn location(&self, k: usize) -> &Location {
        &self.locations[k]
    }

    pub fn cell_of(&self, k: usize) -> usize {
        self.locations[k].cell
    }

    /// Large-scale gain of location `k` toward base station `j`.
    pub fn gain(&self, k: usize, j: usize) -> f64 {
        self.locations[k].gains[j]
    }

    /// Location indices served by `cell`, in network order.
    pub fn cell_members(&self, cell: usize) -> &[usize] {
        &self.members[cell]
    }

    /// Co-pilot partners of `k` (same pilot, necessarily other cells).
    pub fn copilots_of(&self, k: usize) -> &[usize] {
        &self.copilots[k]
    }
}

/// Precomputed effective beamforming gains for a fixed topology.
///
/// `own[k]` is the coherent gain `G_k` of location `k` toward its serving
/// base station; `q[k]` is the pilot contamination sum at that base station.
/// Cross gains `G(k -> i)` are stored per co-pilot edge in both orientations
/// so that SINR denominators and their gradients avoid recomputation.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveGains {
    own: Vec<f64>,
    q: Vec<f64>,
    // (i, G(k -> i)) for each co-pilot partner i of k: coefficient of p_i in D_k.
    cross_out: Vec<Vec<(usize, f64)>>,
    // (j, G(j -> k)) for each co-pilot partner j of k: coefficient of p_k in D_j.
    cross_in: Vec<Vec<(usize, f64)>>,
}

/// Computes the effective gain structure for `topology` under `phy`.
pub fn effective_gains(
    phy: &PhyParams,
    topology: &NetworkTopology,
) -> Result<EffectiveGains, TopologyError> {
    phy.validate()?;
    let n = topology.num_locations();
    let nu = (phy.antennas - 1) as f64;
    let taurho = phy.pilot_len as f64 * phy.pilot_snr;
    let q: Vec<f64> = (0..n)
        .map(|i| {
            let ci = topology.cell_of(i);
            let mut sum = topology.gain(i, ci);
            for &j in topology.copilots_of(i) {
                sum += topology.gain(j, ci);
            }
            sum
        })
        .collect();
    // G(a -> b): a's coherent leakage through the estimate held by b's base
    // station; a == b gives the own gain G_a.
    let cross = |a: usize, b: usize| {
        let g = topology.gain(a, topology.cell_of(b));
        nu * taurho * g * g / (1.0 + taurho * q[b])
    };
    let own: Vec<f64> = (0..n).map(|k| cross(k, k)).collect();
    let cross_out: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|k| topology.copilots_of(k).iter().map(|&i| (i, cross(k, i))).collect())
        .collect();
    let cross_in: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|k| topology.copilots_of(k).iter().map(|&j| (j, cross(j, k))).collect())
        .collect();
    Ok(EffectiveGains { own, q, cross_out, cross_in })
}

impl EffectiveGains {
    /// Coherent gain `G_k` toward the serving base station.
    pub fn own(&self, k: usize) -> f64 {
        self.own[k]
    }

    /// Pilot contamination sum `q_k` at the serving base station.
    pub fn q(&self, k: usize) -> f64 {
        self.q[k]
    }

    /// Cross-gain edges `(i, G(k -> i))` over co-pilot partners `i` of `k`.
    pub fn cross_out(&self, k: usize) -> &[(usize, f64)] {
        &self.cross_out[k]
    }

    /// Cross-gain edges `(j, G(j -> k))` over co-pilot partners `j` of `k`.
    pub fn cross_in(&self, k: usize) -> &[(usize, f64)] {
        &self.cross_in[k]
    }

    /// SINR denominators `D_k` for every location under powers `p`.
    ///
    /// `p` must hold one nonnegative entry per location; entries of silent
    /// locations are zero and drop out of every sum.
    pub fn denominators(&self, topology: &NetworkTopology, p: &[f64]) -> Vec<f64> {
        debug_assert_eq!(p.len(), self.own.len());
        let cells = topology.num_cells();
        let mut cell_power = vec![0.0; cells];
        for (k, &pk) in p.iter().enumerate() {
            cell_power[topology.cell_of(k)] += pk;
        }
        (0..p.len())
            .map(|k| {
                let mut d = 1.0;
                for (j, &cp) in cell_power.iter().enumerate() {
                    d += topology.gain(k, j) * cp;
                }
                for &(i, gci) in &self.cross_out[k] {
                    d += p[i] * gci;
                }
                d
            })
            .collect()
    }

    /// Effective SINR of every location under powers `p` (no validation).
    pub fn sinr_all(&self, topology: &NetworkTopology, p: &[f64]) -> Vec<f64> {
        let d = self.denominators(topology, p);
        (0..p.len()).map(|k| p[k] * self.own[k] / d[k]).collect()
    }
}

/// Effective SINR of location `k` under powers `p`.
///
/// `p` holds one entry per location; entries must be nonnegative and finite.
pub fn sinr(
    k: usize,
    p: &[f64],
    topology: &NetworkTopology,
    gains: &EffectiveGains,
) -> Result<f64, PowerError> {
    validate_powers(p, topology.num_locations())?;
    let d = gains.denominators(topology, p);
    Ok(p[k] * gains.own(k) / d[k])
}

/// Achievable rate `ln(1 + gamma_k)` of location `k`, in nats per flow-slot.
pub fn rate(
    k: usize,
    p: &[f64],
    topology: &NetworkTopology,
    gains: &EffectiveGains,
) -> Result<f64, PowerError> {
    Ok(sinr(k, p, topology, gains)?.ln_1p())
}

pub(crate) fn validate_powers(p: &[f64], expected: usize) -> Result<(), PowerError> {
    if p.len() != expected {
        return Err(PowerError::Length { got: p.len(), expected });
    }
    for (index, &value) in p.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(PowerError::BadEntry { index, value });
        }
    }
    Ok(())
}

/// Validated per-location transmit powers (nonnegative, finite, one entry
/// per location).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(p: Vec<f64>, topology: &NetworkTopology) -> Result<Self, PowerError> {
        validate_powers(&p, topology.num_locations())?;
        Ok(PowerVector(p))
    }

    pub(crate) fn from_raw(p: Vec<f64>) -> Self {
        debug_assert!(p.iter().all(|&x| x >= 0.0 && x.is_finite()));
        PowerVector(p)
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

    /// Total transmitted power per cell.
    pub fn cell_sums(&self, topology: &NetworkTopology) -> Vec<f64> {
        let mut sums = vec![0.0; topology.num_cells()];
        for (k, &pk) in self.0.iter().enumerate() {
            sums[topology.cell_of(k)] += pk;
        }
        sums
    }

    /// Largest per-cell budget violation, zero when feasible.
    pub fn budget_violation(&self, topology: &NetworkTopology) -> f64 {
        self.cell_sums(topology)
            .iter()
            .zip(topology.budgets())
            .map(|(s, b)| s - b)
            .fold(0.0, f64::max)
    }
}

impl AsRef<[f64]> for PowerVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("phy: antennas must be at least 2 (got {0})")]
    TooFewAntennas(usize),
    #[error("phy: pilot_len must be positive")]
    ZeroPilotLen,
    #[error("phy: pilot_snr must be positive and finite (got {0})")]
    BadPilotSnr(f64),
    #[error("topology: at least one cell required")]
    NoCells,
    #[error("topology: budget of cell {cell} must be positive and finite (got {value})")]
    BadBudget { cell: usize, value: f64 },
    #[error("topology: location {location} references cell {cell}, but only {cells} cells exist")]
    CellOutOfRange { location: usize, cell: usize, cells: usize },
    #[error("topology: location {location} has {got} gains, expected one per cell ({cells})")]
    GainCount { location: usize, got: usize, cells: usize },
    #[error("topology: gain of location {location} toward cell {cell} must be positive and finite (got {value})")]
    BadGain { location: usize, cell: usize, value: f64 },
    #[error("topology: pilot {pilot} of location {location} outside 1..={pilot_len}")]
    PilotOutOfRange { location: usize, pilot: u32, pilot_len: u32 },
    #[error("topology: locations {first} and {second} of cell {cell} share pilot {pilot}")]
    DuplicatePilot { cell: usize, pilot: u32, first: usize, second: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("power vector has {got} entries, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("power entry {index} must be nonnegative and finite (got {value})")]
    BadEntry { index: usize, value: f64 },
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_user() -> (PhyParams, NetworkTopology) {
        let phy = PhyParams::new(100, 8, 1.0).unwrap();
        let topo = NetworkTopology::new(
            &phy,
            vec![10.0],
            vec![Location { cell: 0, pilot: 1, gains: vec![1.0] }],
        )
        .unwrap();
        (phy, topo)
    }

    // Two cells, one location each, sharing a pilot; all gains 1.
    fn copilot_pair(antennas: usize, pilot_len: u32, pilot_snr: f64) -> (PhyParams, NetworkTopology) {
        let phy = PhyParams::new(antennas, pilot_len, pilot_snr).unwrap();
        let topo = NetworkTopology::new(
            &phy,
            vec![10.0, 10.0],
            vec![
                Location { cell: 0, pilot: 1, gains: vec![1.0, 1.0] },
                Location { cell: 1, pilot: 1, gains: vec![1.0, 1.0] },
            ],
        )
        .unwrap();
        (phy, topo)
    }

    #[test]
    fn own_gain_without_copilots() {
        let (phy, topo) = single_user();
        let eg = effective_gains(&phy, &topo).unwrap();
        // q = g = 1, G = 99 * 8 * 1 / (1 + 8) = 88.
        assert_eq!(eg.q(0), 1.0);
        assert_eq!(eg.own(0), 88.0);
        assert!(eg.cross_out(0).is_empty());
    }

    #[test]
    fn contamination_sum_adds_copilot_gains() {
        let (phy, topo) = copilot_pair(3, 1, 1.0);
        let eg = effective_gains(&phy, &topo).unwrap();
        assert_eq!(eg.q(0), 2.0);
        assert_eq!(eg.q(1), 2.0);
        // G = 2 * 1 * 1 / (1 + 2) for both own and cross edges.
        assert_relative_eq!(eg.own(0), 2.0 / 3.0);
        assert_eq!(eg.cross_out(0), &[(1, 2.0 / 3.0)]);
        assert_eq!(eg.cross_in(1), &[(0, 2.0 / 3.0)]);
    }

    #[test]
    fn pathloss_gain_at_hundred_meters() {
        // g = r^-2.5 at r = 100 m.
        let g = 100.0_f64.powf(-2.5);
        assert_relative_eq!(g, 1.0e-5, max_relative = 1e-12);
    }

    #[test]
    fn sinr_single_user() {
        let (phy, topo) = single_user();
        let eg = effective_gains(&phy, &topo).unwrap();
        // gamma = 10 * 88 / (1 + 1 * 10) = 80; the serving cell's own power
        // sits in the denominator.
        let gamma = sinr(0, &[10.0], &topo, &eg).unwrap();
        assert_relative_eq!(gamma, 80.0, max_relative = 1e-15);
        assert_relative_eq!(rate(0, &[10.0], &topo, &eg).unwrap(), 81.0_f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn sinr_symmetric_copilot_pair() {
        let (phy, topo) = copilot_pair(3, 1, 1.0);
        let eg = effective_gains(&phy, &topo).unwrap();
        let p = [5.0, 5.0];
        // D = 1 + (5 + 5) + 5 * 2/3 = 43/3, gamma = 5 * (2/3) / (43/3) = 10/43.
        let s0 = sinr(0, &p, &topo, &eg).unwrap();
        let s1 = sinr(1, &p, &topo, &eg).unwrap();
        assert_relative_eq!(s0, 10.0 / 43.0, max_relative = 1e-15);
        assert_eq!(s0, s1);
    }

    #[test]
    fn sinr_zero_powers() {
        let (phy, topo) = copilot_pair(3, 1, 1.0);
        let eg = effective_gains(&phy, &topo).unwrap();
        assert_eq!(sinr(0, &[0.0, 0.0], &topo, &eg).unwrap(), 0.0);
        assert_eq!(rate(0, &[0.0, 0.0], &topo, &eg).unwrap(), 0.0);
    }

    #[test]
    fn sinr_rejects_negative_and_mismatched_powers() {
        let (phy, topo) = copilot_pair(3, 1, 1.0);
        let eg = effective_gains(&phy, &topo).unwrap();
        assert!(matches!(
            sinr(0, &[-1.0, 0.0], &topo, &eg),
            Err(PowerError::BadEntry { index: 0, .. })
        ));
        assert!(matches!(sinr(0, &[1.0], &topo, &eg), Err(PowerError::Length { .. })));
    }

    #[test]
    fn sinr_monotone_in_own_power_and_interference() {
        let (phy, topo) = copilot_pair(16, 2, 0.5);
        let eg = effective_gains(&phy, &topo).unwrap();
        let base = sinr(0, &[2.0, 3.0], &topo, &eg).unwrap();
        let more_own = sinr(0, &[2.5, 3.0], &topo, &eg).unwrap();
        let more_other = sinr(0, &[2.0, 4.0], &topo, &eg).unwrap();
        assert!(more_own > base);
        assert!(more_other < base);
    }

    #[test]
    fn sinr_scale_sensitivity() {
        // Scaling every power by c > 1 raises gamma but by less than c.
        let (phy, topo) = copilot_pair(16, 2, 0.5);
        let eg = effective_gains(&phy, &topo).unwrap();
        let g1 = sinr(0, &[2.0, 3.0], &topo, &eg).unwrap();
        let gc = sinr(0, &[6.0, 9.0], &topo, &eg).unwrap();
        assert!(gc > g1);
        assert!(gc < 3.0 * g1);
    }

    #[test]
    fn evaluation_is_pure() {
        let (phy, topo) = copilot_pair(64, 4, 2.0);
        let eg1 = effective_gains(&phy, &topo).unwrap();
        let eg2 = effective_gains(&phy, &topo).unwrap();
        assert_eq!(eg1, eg2);
        let p = [1.23456, 4.56789];
        let a = sinr(0, &p, &topo, &eg1).unwrap();
        let b = sinr(0, &p, &topo, &eg2).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn topology_validation() {
        let phy = PhyParams::new(100, 2, 1.0).unwrap();
        let loc = |cell, pilot| Location { cell, pilot, gains: vec![1.0, 1.0] };
        assert!(matches!(
            NetworkTopology::new(&phy, vec![], vec![]),
            Err(TopologyError::NoCells)
        ));
        assert!(matches!(
            NetworkTopology::new(&phy, vec![10.0, 0.0], vec![]),
            Err(TopologyError::BadBudget { cell: 1, .. })
        ));
        assert!(matches!(
            NetworkTopology::new(&phy, vec![10.0, 10.0], vec![loc(2, 1)]),
            Err(TopologyError::CellOutOfRange { .. })
        ));
        assert!(matches!(
            NetworkTopology::new(&phy, vec![10.0, 10.0], vec![loc(0, 3)]),
            Err(TopologyError::PilotOutOfRange { .. })
        ));
        assert!(matches!(
            NetworkTopology::new(&phy, vec![10.0, 10.0], vec![loc(0, 1), loc(0, 1)]),
            Err(TopologyError::DuplicatePilot { .. })
        ));
        let bad_gain = Location { cell: 0, pilot: 1, gains: vec![1.0, 0.0] };
        assert!(matches!(
            NetworkTopology::new(&phy, vec![10.0, 10.0], vec![bad_gain]),
            Err(TopologyError::BadGain { cell: 1, .. })
        ));
        let short = Location { cell: 0, pilot: 1, gains: vec![1.0] };
        assert!(matches!(
            NetworkTopology::new(&phy, vec![10.0, 10.0], vec![short]),
            Err(TopologyError::GainCount { .. })
        ));
        assert!(matches!(PhyParams::new(1, 2, 1.0), Err(TopologyError::TooFewAntennas(1))));
        assert!(matches!(PhyParams::new(8, 0, 1.0), Err(TopologyError::ZeroPilotLen)));
        assert!(matches!(PhyParams::new(8, 2, f64::NAN), Err(TopologyError::BadPilotSnr(_))));
    }

    #[test]
    fn power_vector_validation_and_sums() {
        let (phy, topo) = copilot_pair(3, 1, 1.0);
        let _ = phy;
        let pv = PowerVector::new(vec![2.0, 3.0], &topo).unwrap();
        assert_eq!(pv.cell_sums(&topo), vec![2.0, 3.0]);
        assert_eq!(pv.budget_violation(&topo), 0.0);
        assert!(PowerVector::new(vec![-0.5, 1.0], &topo).is_err());
        assert!(PowerVector::new(vec![1.0], &topo).is_err());
    }
}
