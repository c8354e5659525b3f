//! Seeded construction of small random networks for tests and experiments.
//!
//! Every builder is deterministic in its seed. Gains are drawn uniformly
//! from `[1e-3, 1]`, so cross-cell interference and pilot contamination are
//! always material; pilots are aligned across cells (location `i` of every
//! cell shares pilot `i + 1`), which makes each location copilot with its
//! counterpart in every other cell.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::netmodel::{effective_gains, EffectiveGains, Location, NetworkTopology, PhyParams};
use crate::solver::QueueState;

pub const DEFAULT_BUDGET: f64 = 10.0;

fn phy(locs_per_cell: usize) -> PhyParams {
    PhyParams::new(64, locs_per_cell as u32, 2.0).expect("fixed parameters are valid")
}

/// Physical parameters every builder in this module uses, for callers that
/// need them alongside a generated topology (the oracle entry points do).
pub fn instance_phy(locs_per_cell: usize) -> PhyParams {
    phy(locs_per_cell)
}

/// Random network with `cells` cells and `locs_per_cell` locations per cell,
/// every cell with budget `DEFAULT_BUDGET`.
pub fn random_cells(seed: u64, cells: usize, locs_per_cell: usize) -> (NetworkTopology, EffectiveGains) {
    assert!(cells >= 1 && locs_per_cell >= 1);
    let phy = phy(locs_per_cell);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locations = Vec::with_capacity(cells * locs_per_cell);
    for cell in 0..cells {
        for slot in 0..locs_per_cell {
            let gains = (0..cells).map(|_| rng.random_range(1e-3..=1.0)).collect();
            locations.push(Location { cell, pilot: (slot + 1) as u32, gains });
        }
    }
    let topo = NetworkTopology::new(&phy, vec![DEFAULT_BUDGET; cells], locations)
        .expect("generated topology is valid");
    let eg = effective_gains(&phy, &topo).expect("generated topology is valid");
    (topo, eg)
}

/// Two cells, two locations per cell; the workhorse test network.
pub fn random_two_cell(seed: u64) -> (NetworkTopology, EffectiveGains) {
    random_cells(seed, 2, 2)
}

/// Queue state with entries uniform on `0..=max_flows`, resampled until at
/// least one location is busy.
pub fn random_weights(seed: u64, locations: usize, max_flows: u64) -> QueueState {
    assert!(locations >= 1 && max_flows >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let x: Vec<u64> = (0..locations).map(|_| rng.random_range(0..=max_flows)).collect();
        if x.iter().any(|&v| v > 0) {
            return QueueState(x);
        }
    }
}

/// Strictly positive powers with every cell at most at its budget.
pub fn random_powers(seed: u64, topo: &NetworkTopology) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; topo.num_cells()];
    for k in 0..topo.num_locations() {
        counts[topo.cell_of(k)] += 1;
    }
    (0..topo.num_locations())
        .map(|k| {
            let l = topo.cell_of(k);
            let cap = topo.budget(l) / counts[l] as f64;
            rng.random_range(1e-3 * cap..=cap)
        })
        .collect()
}

/// Two independent power draws plus a scale factor in `(1, 4]`, for
/// monotonicity and scalability probes.
pub fn random_power_pair(seed: u64, topo: &NetworkTopology) -> (Vec<f64>, Vec<f64>, f64) {
    let pa = random_powers(seed, topo);
    let pb = random_powers(seed.wrapping_add(0x9e3779b97f4a7c15), topo);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(2).wrapping_add(1));
    let c = rng.random_range(1.0..=4.0) + 1e-6;
    (pa, pb, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_are_deterministic() {
        let (ta, _) = random_two_cell(7);
        let (tb, _) = random_two_cell(7);
        for k in 0..ta.num_locations() {
            for l in 0..ta.num_cells() {
                assert_eq!(ta.gain(k, l).to_bits(), tb.gain(k, l).to_bits());
            }
        }
        assert_eq!(random_weights(3, 5, 4), random_weights(3, 5, 4));
        let (ta2, _) = random_two_cell(8);
        assert!((0..ta.num_locations())
            .any(|k| ta.gain(k, 0).to_bits() != ta2.gain(k, 0).to_bits()));
    }

    #[test]
    fn weights_never_all_zero() {
        for seed in 0..200 {
            assert!(random_weights(seed, 4, 3).total() > 0);
        }
    }

    #[test]
    fn powers_respect_budgets_and_positivity() {
        for seed in 0..50 {
            let (topo, _) = random_two_cell(seed);
            let (pa, pb, c) = random_power_pair(seed, &topo);
            assert!(c > 1.0);
            for p in [&pa, &pb] {
                assert!(p.iter().all(|&x| x > 0.0));
                let mut sums = vec![0.0; topo.num_cells()];
                for (k, &x) in p.iter().enumerate() {
                    sums[topo.cell_of(k)] += x;
                }
                for (l, &s) in sums.iter().enumerate() {
                    assert!(s <= topo.budget(l) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn pilots_align_across_cells() {
        let (topo, eg) = random_cells(11, 3, 2);
        // Location 0 (cell 0, pilot 1) is copilot with locations 2 and 4.
        assert_eq!(topo.copilots_of(0), &[2, 4]);
        assert_eq!(eg.cross_in(0).len(), 2);
    }
}
