//! End-to-end command tests: configurations in, artifacts out, exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mimoflow_cli::config::{
    CommandKind, ExperimentConfig, LocationConfig, PhyConfig, ScenarioConfig, SweepSection,
};
use mimoflow_cli::runner::{run, Invocation};
use mimoflow_cli::CliError;
use mimoflow_core::distributed::{DistributedConfig, ExchangeMode};
use mimoflow_core::flowsim::{ArrivalConfig, Policy, SizeLaw};
use mimoflow_core::solver::SolverConfig;

/// One cell, one location, gain 1 over unit noise: effective gain 88, so
/// full budget 10 gives SINR 80 and service rate ln(81) per slot.
fn single_location_scenario(lambda: f64, horizon: f64) -> ScenarioConfig {
    ScenarioConfig {
        phy: PhyConfig { antennas: 100, pilot_len: 8, pilot_snr: 1.0 },
        budgets: vec![10.0],
        locations: vec![LocationConfig { cell: 0, pilot: 1, gains: vec![1.0] }],
        queues: None,
        arrivals: Some(ArrivalConfig {
            lambda: vec![lambda],
            mean_flow_size: 1.0,
            size_law: SizeLaw::Exponential,
        }),
        policy: Policy::Centralized,
        compare_policy: None,
        solver: SolverConfig::default(),
        horizon,
        sweep: None,
        bandwidth_mhz: None,
    }
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.display().to_string()
}

fn invoke(config: String, out: PathBuf) -> Invocation {
    Invocation { config, command: None, seed: None, out: Some(out) }
}

fn csv_lines_without_stamp(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("# generated_at="))
        .map(String::from)
        .collect()
}

#[test]
fn builtin_solve_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&Invocation {
        config: "paper-sec5".into(),
        command: Some(CommandKind::Solve),
        seed: None,
        out: Some(dir.path().to_path_buf()),
    })
    .unwrap();
    assert_eq!(out.artifacts.len(), 3);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solve_report.json")).unwrap())
            .unwrap();
    let kkt = &report["kkt"];
    for field in ["stationarity", "primal_feasibility", "dual_feasibility", "complementary_slackness"] {
        assert!(kkt[field].as_f64().unwrap() <= 1e-6, "{field}: {kkt}");
    }
    // Cells saturate their budgets and the mirrored locations match.
    for l in 0..2 {
        let s = report["cell_power"][l].as_f64().unwrap();
        assert!((s - 1e7).abs() / 1e7 <= 1e-5, "cell {l} spends {s}");
    }
    let p: Vec<f64> =
        (0..4).map(|k| report["powers"][k].as_f64().unwrap()).collect();
    assert!((p[0] - p[2]).abs() <= 1e-6 * p[0]);
    assert!((p[1] - p[3]).abs() <= 1e-6 * p[1]);
    assert!(report["rate_bits_per_s"][0].as_f64().unwrap() > 1e8);
    let csv = fs::read_to_string(dir.path().join("solve_report.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "location,cell,pilot,weight,power,sinr,rate_nats,rate_bits_per_s");
}

#[test]
fn simulate_writes_trace_power_changes_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        scenario: single_location_scenario(2.0, 300.0),
        command: CommandKind::Simulate,
        out_dir: "unused".into(),
        seeds: vec![3],
    };
    let config = write_config(dir.path(), &cfg);
    let out = run(&invoke(config, dir.path().join("art"))).unwrap();
    assert!(out.artifacts.iter().any(|p| p.ends_with("sim_trace_seed3.csv")));
    let trace = fs::read_to_string(dir.path().join("art/sim_trace_seed3.csv")).unwrap();
    assert!(trace.lines().filter(|l| !l.starts_with('#')).count() > 200);
    assert!(trace.lines().any(|l| l.contains(",arrival,")));
    assert!(trace.lines().any(|l| l.contains(",departure,")));
    let verdict: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("art/stability_verdict_seed3.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(verdict["seed"], 3);
    assert!(verdict["mean_total_queue"].as_f64().unwrap() > 0.0);
    assert!(verdict.get("staleness").is_none(), "centralized run has no staleness report");
    let pc = fs::read_to_string(dir.path().join("art/power_changes_seed3.csv")).unwrap();
    let header = pc.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "time,inner_iterations,outer_iterations,w0,p0,r0");
}

#[test]
fn stale_policy_emits_exchanges_and_staleness_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = single_location_scenario(2.0, 120.0);
    scenario.policy = Policy::Distributed(DistributedConfig {
        exchange_period: 4,
        quant_step: 1.0,
        mode: ExchangeMode::StaleQuantized,
    });
    let cfg = ExperimentConfig {
        scenario,
        command: CommandKind::Simulate,
        out_dir: "unused".into(),
        seeds: vec![5],
    };
    let config = write_config(dir.path(), &cfg);
    run(&invoke(config, dir.path().join("art"))).unwrap();
    let trace = fs::read_to_string(dir.path().join("art/sim_trace_seed5.csv")).unwrap();
    let exchanges = trace.lines().filter(|l| l.contains(",exchange,")).count();
    assert_eq!(exchanges, 30, "one exchange per period over the horizon");
    let verdict: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("art/stability_verdict_seed5.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(verdict["ledger"]["exchange_events"], 30);
    let staleness = &verdict["staleness"];
    assert!(staleness["samples"].as_u64().unwrap() > 0);
    assert_eq!(staleness["violations"], 0);
}

#[test]
fn rerun_with_same_seed_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        scenario: single_location_scenario(3.0, 200.0),
        command: CommandKind::Simulate,
        out_dir: "unused".into(),
        seeds: vec![11],
    };
    let config = write_config(dir.path(), &cfg);
    run(&invoke(config.clone(), dir.path().join("a"))).unwrap();
    run(&invoke(config, dir.path().join("b"))).unwrap();
    for name in ["sim_trace_seed11.csv", "power_changes_seed11.csv"] {
        let a = csv_lines_without_stamp(&dir.path().join("a").join(name));
        let b = csv_lines_without_stamp(&dir.path().join("b").join(name));
        assert_eq!(a, b, "{name} differs between reruns");
        assert!(a.len() > 3);
    }
    let a = fs::read_to_string(dir.path().join("a/stability_verdict_seed11.json")).unwrap();
    let b = fs::read_to_string(dir.path().join("b/stability_verdict_seed11.json")).unwrap();
    assert_eq!(a, b, "verdict differs between reruns");
    // The effective config records where its artifacts went; everything
    // else must match.
    let strip_out_dir = |p: PathBuf| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("\"out_dir\""))
            .map(String::from)
            .collect()
    };
    assert_eq!(
        strip_out_dir(dir.path().join("a/config_used.json")),
        strip_out_dir(dir.path().join("b/config_used.json")),
    );
}

#[test]
fn sweep_brackets_a_single_queue_boundary() {
    let dir = tempfile::tempdir().unwrap();
    // Base load 0.15 of the service rate; scale 8 pushes past saturation.
    let mut scenario = single_location_scenario(0.66, 600.0);
    scenario.compare_policy = Some(Policy::Distributed(DistributedConfig {
        exchange_period: 5,
        quant_step: 1.0,
        mode: ExchangeMode::StaleQuantized,
    }));
    scenario.sweep = Some(SweepSection { scale_grid: vec![1.0, 8.0], thresholds: None });
    let cfg = ExperimentConfig {
        scenario,
        command: CommandKind::Sweep,
        out_dir: "unused".into(),
        seeds: vec![1, 2],
    };
    let config = write_config(dir.path(), &cfg);
    let out = run(&invoke(config, dir.path().join("art"))).unwrap();
    assert!(out.artifacts.iter().any(|p| p.ends_with("plot_boundary.csv")));
    let plot = fs::read_to_string(dir.path().join("art/plot_boundary.csv")).unwrap();
    let rows: Vec<&str> = plot.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "scale,verdict_centralized,verdict_distributed_stale");
    assert_eq!(rows[1], "1,stable,stable");
    assert_eq!(rows[2], "8,unstable,unstable");
    assert!(plot.contains("bracket_centralized: largest_stable=1 smallest_unstable=8"));
    assert!(plot.contains("bracket_distributed_stale: largest_stable=1 smallest_unstable=8"));
    let sweep = fs::read_to_string(dir.path().join("art/sweep_centralized.csv")).unwrap();
    assert!(sweep.lines().any(|l| l.starts_with("# seeds=1,2 ")));
}

#[test]
fn verify_failure_exits_nonzero_and_still_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = single_location_scenario(1.0, 100.0);
    // One outer iteration cannot meet the budget tolerance, so the
    // configured-scenario check must fail.
    scenario.solver = SolverConfig { max_outer: 1, ..SolverConfig::default() };
    let cfg = ExperimentConfig {
        scenario,
        command: CommandKind::Verify,
        out_dir: "unused".into(),
        seeds: vec![1],
    };
    let config = write_config(dir.path(), &cfg);
    let err = run(&invoke(config, dir.path().join("art"))).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(err.to_string().contains("configured_scenario_solves"), "{err}");
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("art/verify_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn malformed_and_missing_configs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let err = run(&invoke(bad.display().to_string(), dir.path().join("art"))).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 2);

    let err = run(&invoke(
        dir.path().join("absent.json").display().to_string(),
        dir.path().join("art"),
    ))
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("paper-sec5"), "error should name the builtins: {err}");
}

#[test]
fn seed_override_replaces_the_configured_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        scenario: single_location_scenario(1.0, 50.0),
        command: CommandKind::Simulate,
        out_dir: "unused".into(),
        seeds: vec![1, 2, 3],
    };
    let config = write_config(dir.path(), &cfg);
    let out = run(&Invocation {
        config,
        command: None,
        seed: Some(9),
        out: Some(dir.path().join("art")),
    })
    .unwrap();
    assert!(out.artifacts.iter().any(|p| p.ends_with("sim_trace_seed9.csv")));
    assert!(!out.artifacts.iter().any(|p| p.to_string_lossy().contains("seed1")));
    let used: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("art/config_used.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(used["seeds"], serde_json::json!([9]));
}

#[test]
fn binary_reports_config_errors_on_stderr_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_mimoflow"))
        .args(["--config", "no-such-builtin", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("config"), "stderr: {stderr}");
}
