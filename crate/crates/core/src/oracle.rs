//! Independent checks of allocator output.
//!
//! Everything here recomputes from first principles and shares no cached
//! state with the solver path: [`sinr_reference`] walks the topology
//! directly instead of using precomputed effective gains, grid search
//! maximizes by exhaustive enumeration, and the convexity and gradient
//! probes are finite-difference constructions on the raw objective.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::netmodel::{NetworkTopology, PhyParams};
use crate::solver::QueueWeights;

/// From-scratch effective SINR of location `k` under powers `p`.
///
/// Recomputes pilot energies, channel estimation quality, and copilot
/// contamination with plain loops over the topology. Quadratic cost; meant
/// for cross-validation, not for the solver path.
pub fn sinr_reference(
    phy: &PhyParams,
    topology: &NetworkTopology,
    p: &[f64],
    k: usize,
) -> f64 {
    let n = topology.num_locations();
    let cells = topology.num_cells();
    assert_eq!(p.len(), n);
    let taurho = phy.pilot_len as f64 * phy.pilot_snr;
    let nu = phy.antennas as f64 - 1.0;
    let pilot = topology.location(k).pilot;
    // Pilot energy landing on i's pilot sequence at i's serving cell, from
    // every location that transmits it.
    let q_of = |i: usize| -> f64 {
        let ci = topology.cell_of(i);
        (0..n)
            .filter(|&j| topology.location(j).pilot == topology.location(i).pilot)
            .map(|j| topology.gain(j, ci))
            .sum()
    };
    // Power serving location i arrives coherently at a victim v through
    // v's own channel toward i's cell, because i's channel estimate there
    // is contaminated by v's pilot.
    let coherent = |v: usize, i: usize| -> f64 {
        let g = topology.gain(v, topology.cell_of(i));
        nu * taurho * g * g / (1.0 + taurho * q_of(i))
    };
    let numerator = p[k] * coherent(k, k);
    let mut den = 1.0;
    for l in 0..cells {
        let cell_total: f64 =
            (0..n).filter(|&j| topology.cell_of(j) == l).map(|j| p[j]).sum();
        den += topology.gain(k, l) * cell_total;
    }
    for (j, &pj) in p.iter().enumerate() {
        if j != k && topology.location(j).pilot == pilot {
            den += pj * coherent(k, j);
        }
    }
    numerator / den
}

/// Weighted log-SINR utility evaluated through [`sinr_reference`].
pub fn reference_objective(
    phy: &PhyParams,
    topology: &NetworkTopology,
    weights: &QueueWeights,
    p: &[f64],
) -> f64 {
    let mut total = 0.0;
    for k in 0..topology.num_locations() {
        let w = weights.get(k);
        if w > 0.0 {
            total += w * sinr_reference(phy, topology, p, k).ln();
        }
    }
    total
}

const MAX_GRID_POINTS: u128 = 10_000_000;
const ZOOM_POINTS_PER_AXIS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    /// Lattice resolution of the coarse stage: each cell's budget is split
    /// into this many quanta.
    pub points_per_axis: usize,
    /// Refinement passes around the incumbent, each shrinking the lattice
    /// spacing tenfold.
    pub zoom_stages: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points_per_axis: 200, zoom_stages: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub powers: Vec<f64>,
    pub objective: f64,
    pub points_evaluated: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("grid spec: {0}")]
    BadSpec(String),
    #[error("grid would evaluate {points} points (limit {MAX_GRID_POINTS})")]
    GridTooLarge { points: u128 },
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

// All allocations of `m` quanta of size `spacing` over `dims` slots, each
// slot at least one quantum, slack allowed.
fn cell_allocations(spacing: f64, m: usize, dims: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; dims];
    fn rec(
        slot: usize,
        left: usize,
        spacing: f64,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<f64>>,
    ) {
        let dims = current.len();
        if slot == dims {
            out.push(current.iter().map(|&a| a as f64 * spacing).collect());
            return;
        }
        let reserve = dims - slot - 1;
        for a in 1..=(left - reserve) {
            current[slot] = a;
            rec(slot + 1, left - a, spacing, current, out);
        }
    }
    if dims == 0 {
        out.push(Vec::new());
    } else if m >= dims {
        rec(0, m, spacing, &mut current, &mut out);
    }
    out
}

/// Exhaustive maximization of the weighted log-SINR utility over the
/// per-cell budget simplices, followed by local lattice refinement.
///
/// The coarse stage enumerates every lattice allocation (strictly positive
/// on busy locations, total at most the budget, per cell) and keeps the
/// best; each zoom stage re-enumerates a box of one coarse cell around the
/// incumbent at ten times the resolution. The result is a feasible point,
/// so its objective never exceeds the true optimum.
pub fn grid_search(
    phy: &PhyParams,
    topology: &NetworkTopology,
    weights: &QueueWeights,
    spec: &GridSpec,
) -> Result<GridSolution, OracleError> {
    if spec.points_per_axis == 0 {
        return Err(OracleError::BadSpec("points_per_axis must be positive".into()));
    }
    let n = topology.num_locations();
    let cells = topology.num_cells();
    let active = weights.active();
    if active.is_empty() {
        return Ok(GridSolution { powers: vec![0.0; n], objective: 0.0, points_evaluated: 0 });
    }
    let mut per_cell: Vec<Vec<usize>> = vec![Vec::new(); cells];
    for &k in &active {
        per_cell[topology.cell_of(k)].push(k);
    }
    let m = spec.points_per_axis;
    let mut total: u128 = 1;
    for locs in &per_cell {
        if locs.len() > m {
            return Err(OracleError::BadSpec(format!(
                "points_per_axis {m} cannot place {} busy locations",
                locs.len()
            )));
        }
        total = total.saturating_mul(binomial(m as u128, locs.len() as u128));
    }
    if total > MAX_GRID_POINTS {
        return Err(OracleError::GridTooLarge { points: total });
    }
    let zoom_total = (ZOOM_POINTS_PER_AXIS as u128).saturating_pow(active.len() as u32);
    if zoom_total > MAX_GRID_POINTS {
        return Err(OracleError::GridTooLarge { points: zoom_total });
    }

    let mut evaluated = 0u64;
    let mut best_obj = f64::NEG_INFINITY;
    let mut best_p = vec![0.0; n];
    let mut p = vec![0.0; n];

    // Coarse stage: cross product of per-cell allocations.
    let allocations: Vec<Vec<Vec<f64>>> = per_cell
        .iter()
        .enumerate()
        .map(|(l, locs)| cell_allocations(topology.budget(l) / m as f64, m, locs.len()))
        .collect();
    fn cross(
        cell: usize,
        allocations: &[Vec<Vec<f64>>],
        per_cell: &[Vec<usize>],
        p: &mut Vec<f64>,
        eval: &mut dyn FnMut(&[f64]),
    ) {
        if cell == allocations.len() {
            eval(p);
            return;
        }
        for alloc in &allocations[cell] {
            for (slot, &k) in per_cell[cell].iter().enumerate() {
                p[k] = alloc[slot];
            }
            cross(cell + 1, allocations, per_cell, p, eval);
        }
    }
    {
        let mut eval = |cand: &[f64]| {
            let obj = reference_objective(phy, topology, weights, cand);
            evaluated += 1;
            if obj > best_obj {
                best_obj = obj;
                best_p.copy_from_slice(cand);
            }
        };
        cross(0, &allocations, &per_cell, &mut p, &mut eval);
    }

    // Zoom stages: per-dimension candidates around the incumbent, pruned to
    // the budget at the leaves. The incumbent is always a candidate, so a
    // stage can only improve.
    let mut spacing: Vec<f64> =
        (0..cells).map(|l| topology.budget(l) / m as f64).collect();
    for _ in 0..spec.zoom_stages {
        let candidates: Vec<Vec<f64>> = active
            .iter()
            .map(|&k| {
                let s = spacing[topology.cell_of(k)];
                let step = s / ((ZOOM_POINTS_PER_AXIS - 1) as f64 / 2.0);
                (0..ZOOM_POINTS_PER_AXIS)
                    .map(|j| best_p[k] + (j as f64 - (ZOOM_POINTS_PER_AXIS - 1) as f64 / 2.0) * step)
                    .filter(|&v| v > 0.0)
                    .collect()
            })
            .collect();
        let mut stage_best_obj = best_obj;
        let mut stage_best_p = best_p.clone();
        p.copy_from_slice(&best_p);
        fn walk(
            dim: usize,
            active: &[usize],
            candidates: &[Vec<f64>],
            topology: &NetworkTopology,
            p: &mut Vec<f64>,
            eval: &mut dyn FnMut(&[f64]),
        ) {
            if dim == active.len() {
                let mut sums = vec![0.0; topology.num_cells()];
                for (k, &pk) in p.iter().enumerate() {
                    sums[topology.cell_of(k)] += pk;
                }
                for (l, &total) in sums.iter().enumerate() {
                    if total > topology.budget(l) * (1.0 + 1e-12) {
                        return;
                    }
                }
                eval(p);
                return;
            }
            for &v in &candidates[dim] {
                p[active[dim]] = v;
                walk(dim + 1, active, candidates, topology, p, eval);
            }
        }
        {
            let mut eval = |cand: &[f64]| {
                let obj = reference_objective(phy, topology, weights, cand);
                evaluated += 1;
                if obj > stage_best_obj {
                    stage_best_obj = obj;
                    stage_best_p.copy_from_slice(cand);
                }
            };
            walk(0, &active, &candidates, topology, &mut p, &mut eval);
        }
        best_obj = stage_best_obj;
        best_p = stage_best_p;
        for s in spacing.iter_mut() {
            *s /= 10.0;
        }
    }
    Ok(GridSolution { powers: best_p, objective: best_obj, points_evaluated: evaluated })
}

/// Outcome of a finite-difference curvature probe; see [`hessian_psd_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct HessianCheck {
    pub min_eigenvalue: f64,
    /// Spectral norm of the probed Hessian.
    pub norm: f64,
    /// `min_eigenvalue >= -1e-6 * norm`.
    pub positive_semidefinite: bool,
}

/// Probes convexity of the negated utility in log-power coordinates.
///
/// In coordinates `y_k = ln p_k` over the busy locations, the negated
/// utility is convex, so its Hessian is positive semidefinite everywhere.
/// This builds the Hessian at `p` by central second differences and checks
/// the smallest eigenvalue against `-1e-6` times the spectral norm.
pub fn hessian_psd_check(
    phy: &PhyParams,
    topology: &NetworkTopology,
    weights: &QueueWeights,
    p: &[f64],
) -> HessianCheck {
    let active = weights.active();
    let dim = active.len();
    assert!(dim > 0, "curvature probe needs at least one busy location");
    let y0: Vec<f64> = active.iter().map(|&k| p[k].ln()).collect();
    let f = |y: &[f64]| -> f64 {
        let mut full = p.to_vec();
        for (slot, &k) in active.iter().enumerate() {
            full[k] = y[slot].exp();
        }
        -reference_objective(phy, topology, weights, &full)
    };
    let step: Vec<f64> = y0.iter().map(|&y| 1e-4 * y.abs().max(1.0)).collect();
    let f0 = f(&y0);
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v = if i == j {
                let mut hi = y0.clone();
                let mut lo = y0.clone();
                hi[i] += step[i];
                lo[i] -= step[i];
                (f(&hi) - 2.0 * f0 + f(&lo)) / (step[i] * step[i])
            } else {
                let mut pp = y0.clone();
                let mut pm = y0.clone();
                let mut mp = y0.clone();
                let mut mm = y0.clone();
                pp[i] += step[i];
                pp[j] += step[j];
                pm[i] += step[i];
                pm[j] -= step[j];
                mp[i] -= step[i];
                mp[j] += step[j];
                mm[i] -= step[i];
                mm[j] -= step[j];
                (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * step[i] * step[j])
            };
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let eigen = h.symmetric_eigen();
    let min_eigenvalue = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm = eigen.eigenvalues.iter().fold(0.0_f64, |acc, &e| acc.max(e.abs()));
    let positive_semidefinite = min_eigenvalue >= -1e-6 * norm;
    HessianCheck { min_eigenvalue, norm, positive_semidefinite }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_rel_err: f64,
    pub analytic: Vec<f64>,
    pub finite_difference: Vec<f64>,
}

/// Compares the closed-form gradient of the negated utility in log-power
/// coordinates, `p_k h_k(p) - X_k`, against central finite differences of
/// the independently evaluated objective.
pub fn gradient_check(
    phy: &PhyParams,
    topology: &NetworkTopology,
    weights: &QueueWeights,
    gains: &crate::netmodel::EffectiveGains,
    p: &[f64],
) -> GradientCheck {
    let active = weights.active();
    let h = crate::solver::h_function(weights, topology, gains, p)
        .expect("gradient probe inputs are valid");
    let analytic: Vec<f64> = active.iter().map(|&k| p[k] * h[k] - weights.get(k)).collect();
    let mut finite_difference = Vec::with_capacity(active.len());
    for &k in &active {
        let step = 1e-6;
        let y = p[k].ln();
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[k] = (y + step).exp();
        lo[k] = (y - step).exp();
        let fd = (-reference_objective(phy, topology, weights, &hi)
            + reference_objective(phy, topology, weights, &lo))
            / (2.0 * step);
        finite_difference.push(fd);
    }
    let max_rel_err = analytic
        .iter()
        .zip(&finite_difference)
        .map(|(&a, &f)| (a - f).abs() / a.abs().max(f.abs()).max(1.0))
        .fold(0.0, f64::max);
    GradientCheck { max_rel_err, analytic, finite_difference }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::netmodel::{effective_gains, rate, sinr, Location};
    use crate::solver::{objective, solve, SolverConfig};
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

    #[test]
    fn sinr_reference_matches_cached_path() {
        for seed in 0..20u64 {
            let (topo, eg) = instances::random_two_cell(seed);
            let phy = PhyParams::new(64, 2, 2.0).unwrap();
            let p = instances::random_powers(seed ^ 77, &topo);
            for k in 0..topo.num_locations() {
                let fresh = sinr_reference(&phy, &topo, &p, k);
                let cached = sinr(k, &p, &topo, &eg).unwrap();
                assert_relative_eq!(fresh, cached, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn reference_objective_matches_solver_objective() {
        let (topo, eg) = instances::random_two_cell(5);
        let phy = PhyParams::new(64, 2, 2.0).unwrap();
        let w = instances::random_weights(9, topo.num_locations(), 3).weights();
        let p = instances::random_powers(13, &topo);
        let a = reference_objective(&phy, &topo, &w, &p);
        let b = objective(&w, &topo, &eg, &p).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn grid_single_user_finds_full_budget() {
        let (phy, topo) = single_user();
        let w = crate::solver::QueueWeights::new(vec![1.0]).unwrap();
        let sol = grid_search(&phy, &topo, &w, &GridSpec::default()).unwrap();
        assert_relative_eq!(sol.powers[0], 10.0, epsilon = 1e-9);
        assert_relative_eq!(sol.objective, 80.0_f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn grid_matches_solver_on_mixed_binding_instance() {
        let phy = PhyParams::new(64, 4, 2.0).unwrap();
        let topo = NetworkTopology::new(
            &phy,
            vec![10.0, 10.0],
            vec![
                Location {
                    cell: 0,
                    pilot: 1,
                    gains: vec![0.7741820925074073, 0.4394395613123003],
                },
                Location {
                    cell: 0,
                    pilot: 2,
                    gains: vec![0.8587393219914711, 0.6976706610303045],
                },
                Location {
                    cell: 1,
                    pilot: 1,
                    gains: vec![0.09508317053976188, 0.9756467292851192],
                },
                Location {
                    cell: 1,
                    pilot: 2,
                    gains: vec![0.7613785622883626, 0.7862782409716769],
                },
            ],
        )
        .unwrap();
        let eg = effective_gains(&phy, &topo).unwrap();
        let w = crate::solver::QueueWeights::new(vec![1.0, 2.0, 1.0, 1.0]).unwrap();
        let spec = GridSpec { points_per_axis: 48, zoom_stages: 3 };
        let sol = grid_search(&phy, &topo, &w, &spec).unwrap();
        let report = solve(&w, &topo, &eg, &SolverConfig::default()).unwrap();
        assert!(report.objective >= sol.objective - 1e-4);
        assert_relative_eq!(report.objective, sol.objective, epsilon = 1e-5);
        // One cell's optimum is interior, which the slack coordinate in the
        // enumeration must find.
        let sums: Vec<f64> = (0..2)
            .map(|l| {
                (0..4)
                    .filter(|&k| topo.cell_of(k) == l)
                    .map(|k| sol.powers[k])
                    .sum()
            })
            .collect();
        assert!(sums[1] < 5.0, "cell 1 should sit well inside its budget, got {}", sums[1]);
    }

    #[test]
    fn grid_rejects_oversized_enumeration() {
        let (topo, _) = instances::random_two_cell(3);
        let phy = PhyParams::new(64, 2, 2.0).unwrap();
        let w = crate::solver::QueueWeights::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let spec = GridSpec { points_per_axis: 20_000, zoom_stages: 0 };
        assert!(matches!(
            grid_search(&phy, &topo, &w, &spec),
            Err(OracleError::GridTooLarge { .. })
        ));
    }

    #[test]
    fn grid_empty_weights_short_circuit() {
        let (topo, _) = instances::random_two_cell(3);
        let phy = PhyParams::new(64, 2, 2.0).unwrap();
        let w = crate::solver::QueueWeights::new(vec![0.0; 4]).unwrap();
        let sol = grid_search(&phy, &topo, &w, &GridSpec::default()).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.points_evaluated, 0);
    }

    #[test]
    fn hessian_single_user_closed_form() {
        // With one location, gain 1, noise 1: the negated utility in log
        // power is w * ln(1 + e^y) up to linear terms, whose curvature is
        // w * s / (1+s)^2 at s = e^y.
        let (phy, topo) = single_user();
        let w = crate::solver::QueueWeights::new(vec![3.0]).unwrap();
        let p = [2.0];
        let check = hessian_psd_check(&phy, &topo, &w, &p);
        let s = 2.0;
        assert_relative_eq!(check.min_eigenvalue, 3.0 * s / ((1.0 + s) * (1.0 + s)), max_relative = 1e-4);
        assert!(check.positive_semidefinite);
    }

    #[test]
    fn hessians_on_random_instances_are_psd() {
        let phy = PhyParams::new(64, 2, 2.0).unwrap();
        for seed in 0..20u64 {
            let (topo, _) = instances::random_two_cell(seed);
            let w = instances::random_weights(seed ^ 0x51, topo.num_locations(), 4).weights();
            if w.active().is_empty() {
                continue;
            }
            let p = instances::random_powers(seed ^ 0x52, &topo);
            let check = hessian_psd_check(&phy, &topo, &w, &p);
            assert!(
                check.positive_semidefinite,
                "seed {seed}: min eig {} vs norm {}",
                check.min_eigenvalue,
                check.norm
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let phy = PhyParams::new(64, 2, 2.0).unwrap();
        for seed in 0..20u64 {
            let (topo, eg) = instances::random_two_cell(seed);
            let w = instances::random_weights(seed ^ 0x61, topo.num_locations(), 4).weights();
            if w.active().is_empty() {
                continue;
            }
            let p = instances::random_powers(seed ^ 0x62, &topo);
            let check = gradient_check(&phy, &topo, &w, &eg, &p);
            assert!(check.max_rel_err < 1e-5, "seed {seed}: rel err {}", check.max_rel_err);
        }
    }

    #[test]
    fn rate_is_log1p_of_reference_sinr() {
        let (phy, topo) = single_user();
        let eg = effective_gains(&phy, &topo).unwrap();
        let g = sinr_reference(&phy, &topo, &[10.0], 0);
        assert_relative_eq!(rate(0, &[10.0], &topo, &eg).unwrap(), (1.0 + g).ln(), max_relative = 1e-12);
    }
}
