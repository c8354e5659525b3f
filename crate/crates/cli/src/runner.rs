//! Command dispatch: a validated configuration in, artifacts on disk out.
//!
//! Every artifact carries the seed and the configuration hash in its
//! metadata, so a result file alone identifies the run that produced it.
//! Reruns with the same configuration and seed are bit-identical except
//! for the `generated_at` stamp.

use std::path::PathBuf;

use serde::Serialize;

use mimoflow_core::distributed::{
    staleness_bound_check, ExchangeMode, SignalingLedger, StaleView,
    StalenessReport,
};
use mimoflow_core::flowsim::{
    drift_probe, drift_probe_stale, simulate, stability_sweep, stability_verdict,
    validate_trace, ArrivalConfig, EventKind, Policy, SimParams, SimTrace, SizeLaw,
    StabilityThresholds, SweepParams, Verdict,
};
use mimoflow_core::instances;
use mimoflow_core::netmodel::{
    effective_gains, rate, EffectiveGains, Location, NetworkTopology, PhyParams,
};
use mimoflow_core::oracle::{gradient_check, grid_search, hessian_psd_check, GridSpec};
use mimoflow_core::solver::{
    h_function, solve, KktResiduals, QueueState, SolverConfig,
};

use crate::artifacts::{config_sha256, csv_path, emit_plot_data, write_json, write_text, CsvDoc};
use crate::config::{load_config, validate, BuiltScenario, CommandKind, ExperimentConfig};
use crate::scenario::rate_bits_per_second;
use crate::CliError;

/// Command-line inputs: the configuration source plus optional overrides.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    /// Builtin name or JSON file path.
    pub config: String,
    /// Replaces the command stored in the configuration.
    pub command: Option<CommandKind>,
    /// Runs this single seed instead of the configured list.
    pub seed: Option<u64>,
    /// Replaces the configured output directory.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    built: &'a BuiltScenario,
    sha: String,
    out_dir: PathBuf,
}

impl RunContext<'_> {
    fn meta(&self, seed: u64) -> String {
        format!("seed={seed} config_sha256={}", self.sha)
    }
}

pub fn run(inv: &Invocation) -> Result<RunOutput, CliError> {
    let mut cfg = load_config(&inv.config)?;
    if let Some(cmd) = inv.command {
        cfg.command = cmd;
    }
    if let Some(seed) = inv.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &inv.out {
        cfg.out_dir = out.display().to_string();
    }
    let built = validate(&cfg)?;
    let ctx = RunContext {
        sha: config_sha256(&cfg),
        out_dir: PathBuf::from(&cfg.out_dir),
        cfg: &cfg,
        built: &built,
    };
    let mut artifacts = Vec::new();
    let cfg_path = csv_path(&ctx.out_dir, "config_used.json");
    write_json(&cfg_path, &cfg)?;
    artifacts.push(cfg_path);
    let more = match cfg.command {
        CommandKind::Solve => cmd_solve(&ctx)?,
        CommandKind::Simulate => cmd_simulate(&ctx)?,
        CommandKind::Sweep => cmd_sweep(&ctx)?,
        CommandKind::Verify => cmd_verify(&ctx)?,
    };
    artifacts.extend(more);
    Ok(RunOutput { out_dir: ctx.out_dir, artifacts })
}

fn runtime<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{what}: {e}"))
}

fn policy_label(p: &Policy) -> &'static str {
    match p {
        Policy::Centralized => "centralized",
        Policy::Distributed(d) => match d.mode {
            ExchangeMode::StaleQuantized => "distributed_stale",
            ExchangeMode::PerIteration => "distributed_periteration",
        },
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Largest rate any allocation can grant location `k`: the whole cell
/// budget pointed at it with zero interference.
fn rate_cap(topology: &NetworkTopology, gains: &EffectiveGains, k: usize) -> f64 {
    (topology.budget(topology.cell_of(k)) * gains.own(k)).ln_1p()
}

// ---------------------------------------------------------------- solve

#[derive(Serialize)]
struct SolveDoc {
    config_sha256: String,
    queues: Vec<u64>,
    objective: f64,
    outer_iterations: u64,
    inner_iterations: u64,
    duals: Vec<f64>,
    kkt: KktResiduals,
    powers: Vec<f64>,
    cell_power: Vec<f64>,
    sinr: Vec<f64>,
    rate_nats: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_bits_per_s: Option<Vec<f64>>,
}

fn cmd_solve(ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let sc = &ctx.cfg.scenario;
    let topo = &ctx.built.topology;
    let n = topo.num_locations();
    let queues = sc.queues.clone().unwrap_or_else(|| vec![1; n]);
    let state = QueueState(queues.clone());
    let report = solve(&state.weights(), topo, &ctx.built.gains, &sc.solver)
        .map_err(runtime("solver"))?;
    let powers = report.powers.as_slice().to_vec();
    let sinr = ctx.built.gains.sinr_all(topo, &powers);
    let rate_nats: Vec<f64> = sinr.iter().map(|&g| g.ln_1p()).collect();
    let rate_bits: Option<Vec<f64>> = sc
        .bandwidth_mhz
        .map(|b| rate_nats.iter().map(|&r| rate_bits_per_second(r, b)).collect());

    let doc = SolveDoc {
        config_sha256: ctx.sha.clone(),
        queues: queues.clone(),
        objective: report.objective,
        outer_iterations: report.outer_iterations,
        inner_iterations: report.inner_iterations,
        duals: report.duals.as_slice().to_vec(),
        kkt: report.kkt,
        cell_power: report.powers.cell_sums(topo),
        powers: powers.clone(),
        sinr: sinr.clone(),
        rate_nats: rate_nats.clone(),
        rate_bits_per_s: rate_bits.clone(),
    };
    let json_path = csv_path(&ctx.out_dir, "solve_report.json");
    write_json(&json_path, &doc)?;

    let mut header = vec![
        "location".to_string(),
        "cell".to_string(),
        "pilot".to_string(),
        "weight".to_string(),
        "power".to_string(),
        "sinr".to_string(),
        "rate_nats".to_string(),
    ];
    if rate_bits.is_some() {
        header.push("rate_bits_per_s".to_string());
    }
    let mut csv = CsvDoc::new(header);
    csv.comment(ctx.meta(ctx.cfg.seeds[0]));
    csv.comment(format!(
        "objective={} outer_iterations={} inner_iterations={}",
        fmt(report.objective),
        report.outer_iterations,
        report.inner_iterations
    ));
    for k in 0..n {
        let mut row = vec![
            k.to_string(),
            topo.cell_of(k).to_string(),
            topo.location(k).pilot.to_string(),
            queues[k].to_string(),
            fmt(powers[k]),
            fmt(sinr[k]),
            fmt(rate_nats[k]),
        ];
        if let Some(bits) = &rate_bits {
            row.push(fmt(bits[k]));
        }
        csv.row(row);
    }
    let csv_file = csv_path(&ctx.out_dir, "solve_report.csv");
    write_text(&csv_file, &csv.render(true))?;
    Ok(vec![json_path, csv_file])
}

// ------------------------------------------------------------- simulate

#[derive(Serialize)]
struct VerdictDoc {
    config_sha256: String,
    seed: u64,
    policy: Policy,
    total_lambda: f64,
    mean_total_queue: f64,
    growth_slope: f64,
    verdict: Verdict,
    total_arrivals: u64,
    total_departures: u64,
    ledger: SignalingLedger,
    incidents: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    staleness: Option<StalenessReport>,
}

fn cmd_simulate(ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let sc = &ctx.cfg.scenario;
    let topo = &ctx.built.topology;
    let gains = &ctx.built.gains;
    let arrivals = sc.arrivals.clone().expect("validated for simulate");
    let total_lambda = arrivals.total_lambda();
    let thresholds = sc
        .sweep
        .as_ref()
        .and_then(|s| s.thresholds)
        .unwrap_or_default();
    let mut artifacts = Vec::new();
    for &seed in &ctx.cfg.seeds {
        let params = SimParams {
            arrivals: arrivals.clone(),
            policy: sc.policy.clone(),
            horizon: sc.horizon,
            seed,
            solver: sc.solver,
            initial_queues: sc.queues.clone().map(QueueState),
        };
        let trace = simulate(topo, gains, &params).map_err(runtime("simulate"))?;
        validate_trace(&trace).map_err(|m| CliError::Runtime(format!("trace audit: {m}")))?;
        let verdict = stability_verdict(&trace, total_lambda, &thresholds);
        let staleness = staleness_for(&trace, &sc.policy, &arrivals, topo, gains);

        artifacts.push(write_trace_csv(ctx, seed, &trace)?);
        artifacts.push(write_power_csv(ctx, seed, &trace)?);
        let doc = VerdictDoc {
            config_sha256: ctx.sha.clone(),
            seed,
            policy: sc.policy.clone(),
            total_lambda,
            mean_total_queue: verdict.mean_total_queue,
            growth_slope: verdict.growth_slope,
            verdict: verdict.verdict,
            total_arrivals: trace.total_arrivals.iter().sum(),
            total_departures: trace.total_departures.iter().sum(),
            ledger: trace.ledger,
            incidents: trace.incidents,
            staleness,
        };
        let path = csv_path(&ctx.out_dir, &format!("stability_verdict_seed{seed}.json"));
        write_json(&path, &doc)?;
        artifacts.push(path);
    }
    Ok(artifacts)
}

fn staleness_for(
    trace: &SimTrace,
    policy: &Policy,
    arrivals: &ArrivalConfig,
    topo: &NetworkTopology,
    gains: &EffectiveGains,
) -> Option<StalenessReport> {
    let Policy::Distributed(d) = policy else { return None };
    if d.mode != ExchangeMode::StaleQuantized || trace.staleness.is_empty() {
        return None;
    }
    let lambda_max = arrivals.lambda.iter().cloned().fold(0.0, f64::max);
    let r_max = (0..topo.num_locations())
        .map(|k| rate_cap(topo, gains, k))
        .fold(0.0, f64::max);
    Some(staleness_bound_check(&trace.staleness, d, lambda_max, r_max))
}

fn write_trace_csv(ctx: &RunContext, seed: u64, trace: &SimTrace) -> Result<PathBuf, CliError> {
    let n = trace.initial_queues.len();
    let mut header = vec!["time".to_string(), "kind".to_string(), "location".to_string()];
    header.extend((0..n).map(|k| format!("q{k}")));
    let mut csv = CsvDoc::new(header);
    csv.comment(ctx.meta(seed));
    csv.comment(format!(
        "ledger_scalars={} ledger_events={} incidents={}",
        trace.ledger.scalars_exchanged, trace.ledger.exchange_events, trace.incidents
    ));
    for ev in &trace.events {
        let kind = match ev.kind {
            EventKind::Arrival => "arrival",
            EventKind::Departure => "departure",
            EventKind::Exchange => "exchange",
        };
        let mut row = vec![
            fmt(ev.time),
            kind.to_string(),
            ev.location.map_or(String::new(), |k| k.to_string()),
        ];
        row.extend(ev.queues.iter().map(|q| q.to_string()));
        csv.row(row);
    }
    let path = csv_path(&ctx.out_dir, &format!("sim_trace_seed{seed}.csv"));
    write_text(&path, &csv.render(true))?;
    Ok(path)
}

fn write_power_csv(ctx: &RunContext, seed: u64, trace: &SimTrace) -> Result<PathBuf, CliError> {
    let n = trace.initial_queues.len();
    let mut header = vec![
        "time".to_string(),
        "inner_iterations".to_string(),
        "outer_iterations".to_string(),
    ];
    header.extend((0..n).map(|k| format!("w{k}")));
    header.extend((0..n).map(|k| format!("p{k}")));
    header.extend((0..n).map(|k| format!("r{k}")));
    let mut csv = CsvDoc::new(header);
    csv.comment(ctx.meta(seed));
    for pc in &trace.power_changes {
        let mut row = vec![
            fmt(pc.time),
            pc.inner_iterations.to_string(),
            pc.outer_iterations.to_string(),
        ];
        row.extend(pc.weights.iter().map(|&v| fmt(v)));
        row.extend(pc.powers.iter().map(|&v| fmt(v)));
        row.extend(pc.rates.iter().map(|&v| fmt(v)));
        csv.row(row);
    }
    let path = csv_path(&ctx.out_dir, &format!("power_changes_seed{seed}.csv"));
    write_text(&path, &csv.render(true))?;
    Ok(path)
}

// ---------------------------------------------------------------- sweep

fn cmd_sweep(ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let sc = &ctx.cfg.scenario;
    let arrivals = sc.arrivals.as_ref().expect("validated for sweep");
    let section = sc.sweep.as_ref().expect("validated for sweep");
    let thresholds = section.thresholds.unwrap_or_default();
    let seeds_label = ctx
        .cfg
        .seeds
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",");

    let mut policies = vec![sc.policy.clone()];
    if let Some(p) = &sc.compare_policy {
        policies.push(p.clone());
    }
    let mut artifacts = Vec::new();
    let mut tables = Vec::new();
    for (i, policy) in policies.iter().enumerate() {
        let mut label = policy_label(policy).to_string();
        if tables.iter().any(|(l, _)| *l == label) {
            label = format!("{label}_{}", i + 1);
        }
        let params = SweepParams {
            base_lambda: arrivals.lambda.clone(),
            scale_grid: section.scale_grid.clone(),
            mean_flow_size: arrivals.mean_flow_size,
            size_law: arrivals.size_law,
            policy: policy.clone(),
            horizon: sc.horizon,
            seeds: ctx.cfg.seeds.clone(),
            thresholds,
            solver: sc.solver,
        };
        let table = stability_sweep(&ctx.built.topology, &ctx.built.gains, &params)
            .map_err(runtime("sweep"))?;

        let mut header = vec![
            "scale".to_string(),
            "verdict".to_string(),
            "mean_total_queue".to_string(),
        ];
        for &s in &ctx.cfg.seeds {
            header.push(format!("verdict_seed{s}"));
            header.push(format!("mean_seed{s}"));
            header.push(format!("slope_seed{s}"));
        }
        let mut csv = CsvDoc::new(header);
        csv.comment(format!("seeds={seeds_label} config_sha256={}", ctx.sha));
        csv.comment(format!("policy={label}"));
        for row in &table.rows {
            let mut cells = vec![
                fmt(row.scale),
                verdict_text(row.verdict).to_string(),
                fmt(row.mean_total_queue),
            ];
            for v in &row.per_seed {
                cells.push(verdict_text(v.verdict).to_string());
                cells.push(fmt(v.mean_total_queue));
                cells.push(fmt(v.growth_slope));
            }
            csv.row(cells);
        }
        let lo = table.largest_stable.map_or("none".to_string(), fmt);
        let hi = table.smallest_unstable.map_or("none".to_string(), fmt);
        csv.footer(format!("bracket: largest_stable={lo} smallest_unstable={hi}"));
        let path = csv_path(&ctx.out_dir, &format!("sweep_{label}.csv"));
        write_text(&path, &csv.render(true))?;
        artifacts.push(path);
        tables.push((label, table));
    }

    let mut plot = emit_plot_data(&tables)?;
    plot.comments
        .insert(0, format!("seeds={seeds_label} config_sha256={}", ctx.sha));
    let path = csv_path(&ctx.out_dir, "plot_boundary.csv");
    write_text(&path, &plot.render(true))?;
    artifacts.push(path);
    Ok(artifacts)
}

fn verdict_text(v: Verdict) -> &'static str {
    match v {
        Verdict::StableEvidence => "stable",
        Verdict::UnstableEvidence => "unstable",
        Verdict::Inconclusive => "inconclusive",
    }
}

// --------------------------------------------------------------- verify

#[derive(Serialize)]
struct CheckResult {
    name: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct VerifyDoc {
    config_sha256: String,
    passed: bool,
    checks: Vec<CheckResult>,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// Queue weights that are never all zero.
fn busy_weights(seed: u64, n: usize) -> QueueState {
    let q = instances::random_weights(seed, n, 4);
    if q.0.iter().all(|&v| v == 0) {
        QueueState(vec![1; n])
    } else {
        q
    }
}

fn cmd_verify(ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let checks = vec![
        check_grid_oracle(),
        check_interference_axioms(),
        check_concavity(),
        check_gradient(),
        check_drift(),
        check_stale_drift(),
        check_mm1(),
        check_configured_scenario(ctx),
    ];

    let passed = checks.iter().all(|c| c.passed);
    let doc = VerifyDoc { config_sha256: ctx.sha.clone(), passed, checks };
    let path = csv_path(&ctx.out_dir, "verify_report.json");
    write_json(&path, &doc)?;
    if !passed {
        let names: Vec<&str> = doc
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        return Err(CliError::VerifyFailed(names.join(", ")));
    }
    Ok(vec![path])
}

/// Dual ascent against exhaustive per-cell budget enumeration.
fn check_grid_oracle() -> CheckResult {
    let spec = GridSpec { points_per_axis: 48, zoom_stages: 3 };
    let phy = instances::instance_phy(2);
    let cfg = SolverConfig::default();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_kkt = 0.0_f64;
    for seed in 0..3u64 {
        let (topo, eg) = instances::random_two_cell(seed);
        let weights = busy_weights(seed ^ 0x5eed, topo.num_locations()).weights();
        let grid = match grid_search(&phy, &topo, &weights, &spec) {
            Ok(g) => g,
            Err(e) => return check("solver_matches_grid_oracle", false, e.to_string()),
        };
        let report = match solve(&weights, &topo, &eg, &cfg) {
            Ok(r) => r,
            Err(e) => return check("solver_matches_grid_oracle", false, e.to_string()),
        };
        worst_gap = worst_gap.max(grid.objective - report.objective);
        worst_kkt = worst_kkt.max(report.kkt.worst());
    }
    check(
        "solver_matches_grid_oracle",
        worst_gap <= 1e-4 && worst_kkt <= 1e-6,
        format!("worst objective gap {worst_gap:.3e}, worst KKT residual {worst_kkt:.3e}"),
    )
}

/// The best-response map must be positive, monotone increasing, and
/// scalable, which is what makes the inner fixed point unique.
fn check_interference_axioms() -> CheckResult {
    let mut failures = 0u32;
    let mut trials = 0u32;
    for seed in 0..200u64 {
        let (topo, eg) = instances::random_two_cell(seed);
        let n = topo.num_locations();
        let weights = busy_weights(seed ^ 0xabcd, n).weights();
        let beta = [0.4, 0.15];
        let (pa, pb, c) = instances::random_power_pair(seed ^ 0x1234, &topo);
        let t = |p: &[f64]| -> Vec<f64> {
            let h = h_function(&weights, &topo, &eg, p).expect("valid inputs");
            (0..n)
                .map(|k| {
                    if weights.get(k) > 0.0 {
                        weights.get(k) / (beta[topo.cell_of(k)] + h[k])
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let ta = t(&pa);
        let hi: Vec<f64> = pa.iter().zip(&pb).map(|(&a, &b)| a.max(b)).collect();
        let t_hi = t(&hi);
        let scaled: Vec<f64> = pa.iter().map(|&x| c * x).collect();
        let t_scaled = t(&scaled);
        for k in 0..n {
            if weights.get(k) == 0.0 {
                continue;
            }
            trials += 1;
            let positive = ta[k] > 0.0;
            let monotone_violated = t_hi[k] < ta[k] - 1e-12;
            let strictly_subhomogeneous = c * ta[k] > t_scaled[k];
            if !positive || monotone_violated || !strictly_subhomogeneous {
                failures += 1;
            }
        }
    }
    check(
        "interference_map_axioms",
        failures == 0,
        format!("{failures} violations in {trials} pointwise trials"),
    )
}

/// The negated utility must be convex in log powers; otherwise the whole
/// dual approach is unfounded.
fn check_concavity() -> CheckResult {
    let phy = instances::instance_phy(2);
    let mut worst = f64::INFINITY;
    for seed in 0..10u64 {
        let (topo, _) = instances::random_two_cell(seed);
        let weights = busy_weights(seed ^ 0x77, topo.num_locations()).weights();
        let p = instances::random_powers(seed ^ 0x99, &topo);
        let res = hessian_psd_check(&phy, &topo, &weights, &p);
        if !res.positive_semidefinite {
            return check(
                "log_power_concavity",
                false,
                format!("seed {seed}: min eigenvalue {:.3e}", res.min_eigenvalue),
            );
        }
        worst = worst.min(res.min_eigenvalue);
    }
    check(
        "log_power_concavity",
        true,
        format!("10 instances, smallest eigenvalue {worst:.3e}"),
    )
}

fn check_gradient() -> CheckResult {
    let phy = instances::instance_phy(2);
    let mut worst = 0.0_f64;
    for seed in 0..20u64 {
        let (topo, eg) = instances::random_two_cell(seed);
        let weights = busy_weights(seed ^ 0x31, topo.num_locations()).weights();
        let p = instances::random_powers(seed ^ 0x42, &topo);
        let res = gradient_check(&phy, &topo, &weights, &eg, &p);
        worst = worst.max(res.max_rel_err);
    }
    check(
        "stationarity_gradient",
        worst < 1e-5,
        format!("20 instances, worst relative error {worst:.3e}"),
    )
}

/// Feasible service targets certified by explicit powers, so the drift
/// functional must be nonpositive at the optimal allocation.
fn drift_recipe(
    seed: u64,
) -> (NetworkTopology, EffectiveGains, QueueState, Vec<f64>, Vec<f64>, f64) {
    let (topo, eg) = instances::random_two_cell(seed);
    let n = topo.num_locations();
    let x = busy_weights(seed ^ 0xd21f, n);
    let cert = instances::random_powers(seed ^ 0xcafe, &topo);
    let rates: Vec<f64> =
        (0..n).map(|k| rate(k, &cert, &topo, &eg).expect("valid powers")).collect();
    let eps = 0.5 * rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let mu: Vec<f64> = rates.iter().map(|&r| r - eps).collect();
    (topo, eg, x, cert, mu, eps)
}

fn check_drift() -> CheckResult {
    let cfg = SolverConfig::default();
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..20u64 {
        let (topo, eg, x, cert, mu, eps) = drift_recipe(seed);
        match drift_probe(&x, &mu, eps, &topo, &eg, &cert, &cfg) {
            Ok(v) => worst = worst.max(v),
            Err(e) => return check("drift_nonpositive", false, e.to_string()),
        }
    }
    check(
        "drift_nonpositive",
        worst <= 1e-9,
        format!("20 states, largest probe {worst:.3e}"),
    )
}

fn check_stale_drift() -> CheckResult {
    let cfg = SolverConfig::default();
    for seed in 0..5u64 {
        let (topo, eg, x0, cert, mu, eps) = drift_recipe(seed);
        let n = topo.num_locations();
        // Unit quantization reproduces integers exactly: the view equals
        // the state and the compensation collapses to zero.
        let view = StaleView::exchange(&x0, 1.0, 0.0);
        let zero = vec![0.0; n];
        match drift_probe_stale(&x0, &view, &mu, eps, &zero, &topo, &eg, &cert, &cfg) {
            Ok(rep) => {
                if !(rep.holds() && rep.c_realized == 0.0 && rep.probe_stale <= 1e-9) {
                    return check(
                        "stale_drift_bound",
                        false,
                        format!(
                            "degenerate view: probe_true {:.3e} probe_stale {:.3e}",
                            rep.probe_true, rep.probe_stale
                        ),
                    );
                }
            }
            Err(e) => return check("stale_drift_bound", false, e.to_string()),
        }
        // Coarse quantization plus arrivals after the exchange; the realized
        // queue gap bounds the substitution cost.
        let view = StaleView::exchange(&x0, 2.0, 0.0);
        let drifted = QueueState(
            x0.0.iter().enumerate().map(|(k, &q)| q + (k as u64 % 2)).collect(),
        );
        let bounds: Vec<f64> = drifted
            .0
            .iter()
            .zip(view.values())
            .map(|(&q, &v)| (q as f64 - v).abs())
            .collect();
        match drift_probe_stale(&drifted, &view, &mu, eps, &bounds, &topo, &eg, &cert, &cfg) {
            Ok(rep) => {
                if !rep.holds() {
                    return check(
                        "stale_drift_bound",
                        false,
                        format!(
                            "probe_true {:.3e} exceeds probe_stale {:.3e} + c {:.3e}",
                            rep.probe_true, rep.probe_stale, rep.c_realized
                        ),
                    );
                }
            }
            Err(e) => return check("stale_drift_bound", false, e.to_string()),
        }
    }
    check("stale_drift_bound", true, "5 degenerate and 5 drifted states hold".to_string())
}

/// One location, gain 1, noise 1: a single-server queue with a known
/// service rate, so classic load thresholds separate cleanly.
fn mm1_network() -> (NetworkTopology, EffectiveGains, f64) {
    let phy = PhyParams::new(100, 8, 1.0).expect("valid");
    let topo = NetworkTopology::new(
        &phy,
        vec![10.0],
        vec![Location { cell: 0, pilot: 1, gains: vec![1.0] }],
    )
    .expect("valid");
    let eg = effective_gains(&phy, &topo).expect("valid");
    let service = rate(0, &[10.0], &topo, &eg).expect("valid powers");
    (topo, eg, service)
}

fn check_mm1() -> CheckResult {
    let (topo, eg, service) = mm1_network();
    let run = |load: f64| -> Result<(Verdict, f64), CliError> {
        let lambda = load * service;
        let horizon = 3000.0 / service;
        let params = SimParams::new(
            ArrivalConfig {
                lambda: vec![lambda],
                mean_flow_size: 1.0,
                size_law: SizeLaw::Exponential,
            },
            Policy::Centralized,
            horizon,
            7,
        );
        let trace = simulate(&topo, &eg, &params).map_err(runtime("simulate"))?;
        validate_trace(&trace).map_err(CliError::Runtime)?;
        let v = stability_verdict(&trace, lambda, &StabilityThresholds::default());
        Ok((v.verdict, v.mean_total_queue))
    };
    let (low, low_mean) = match run(0.5) {
        Ok(v) => v,
        Err(e) => return check("mm1_load_thresholds", false, e.to_string()),
    };
    let (high, high_mean) = match run(1.5) {
        Ok(v) => v,
        Err(e) => return check("mm1_load_thresholds", false, e.to_string()),
    };
    // At load 0.5 the stationary mean queue is 1; the horizon holds roughly
    // 1500 arrivals, so the empirical mean lands in a wide band around it.
    let ok = low == Verdict::StableEvidence
        && (0.5..=1.6).contains(&low_mean)
        && high == Verdict::UnstableEvidence;
    check(
        "mm1_load_thresholds",
        ok,
        format!(
            "load 0.5: {:?} mean {low_mean:.3}; load 1.5: {:?} mean {high_mean:.1}",
            low, high
        ),
    )
}

/// The scenario from the loaded configuration must itself solve to tight
/// residuals with the configured solver.
fn check_configured_scenario(ctx: &RunContext) -> CheckResult {
    let sc = &ctx.cfg.scenario;
    let n = ctx.built.topology.num_locations();
    let queues = QueueState(sc.queues.clone().unwrap_or_else(|| vec![1; n]));
    match solve(&queues.weights(), &ctx.built.topology, &ctx.built.gains, &sc.solver) {
        Ok(report) => check(
            "configured_scenario_solves",
            report.kkt.worst() <= 1e-6,
            format!("worst KKT residual {:.3e}", report.kkt.worst()),
        ),
        Err(e) => check("configured_scenario_solves", false, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mimoflow_core::distributed::DistributedConfig;

    #[test]
    fn policy_labels_are_distinct() {
        let stale = Policy::Distributed(DistributedConfig {
            exchange_period: 10,
            quant_step: 2.0,
            mode: ExchangeMode::StaleQuantized,
        });
        let per = Policy::Distributed(DistributedConfig {
            exchange_period: 1,
            quant_step: 1e-6,
            mode: ExchangeMode::PerIteration,
        });
        assert_eq!(policy_label(&Policy::Centralized), "centralized");
        assert_eq!(policy_label(&stale), "distributed_stale");
        assert_eq!(policy_label(&per), "distributed_periteration");
    }

    #[test]
    fn mm1_service_rate_is_log_of_81() {
        // Budget 10 on gain 1 with 100 antennas and pilot energy 8: the
        // effective gain is 99 * 8 / (1 + 8) = 88, so SINR 80 at full power.
        let (_, _, service) = mm1_network();
        assert!((service - 81.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn drift_recipe_certifies_its_own_targets() {
        for seed in 0..5 {
            let (topo, eg, _, cert, mu, eps) = drift_recipe(seed);
            for (k, &floor) in mu.iter().enumerate() {
                let r = rate(k, &cert, &topo, &eg).unwrap();
                assert!(r >= floor + eps - 1e-12);
            }
        }
    }
}
