//! Scenario file parsing, round-trip stability, report schemas, and the
//! exit-code contract of the binary.

use scnet::scenarios;
use scnet_cli::config::ScenarioFile;
use scnet_cli::report;
use scnet_cli::run::{self, Overrides};
use std::path::{Path, PathBuf};
use std::process::Command;

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario_path(name: &str) -> PathBuf {
    scenario_dir().join(format!("{name}.toml"))
}

#[test]
fn bundled_files_match_programmatic_scenarios() {
    for sc in scenarios::all() {
        let path = scenario_path(sc.name);
        let file = ScenarioFile::load(&path).unwrap_or_else(|e| panic!("{}: {e}", sc.name));
        let model = file
            .build_model()
            .unwrap_or_else(|e| panic!("{}: {e}", sc.name));
        assert_eq!(
            model, sc.model,
            "{} differs from its file transcription",
            sc.name
        );
        assert_eq!(
            file.build_solver(),
            sc.solver,
            "{} solver settings differ",
            sc.name
        );
        assert!(model.validate().is_empty(), "{} must validate", sc.name);
    }
}

#[test]
fn serialization_roundtrip_preserves_the_model() {
    for sc in scenarios::all() {
        let path = scenario_path(sc.name);
        let file = ScenarioFile::load(&path).unwrap();
        let once = file.build_model().unwrap();
        let reparsed: ScenarioFile = toml::from_str(&file.to_toml())
            .unwrap_or_else(|e| panic!("{}: reparse failed: {e}", sc.name));
        let twice = reparsed.build_model().unwrap();
        assert_eq!(once, twice, "{} round-trip changed the model", sc.name);
        assert_eq!(file.build_solver(), reparsed.build_solver());
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let text = std::fs::read_to_string(scenario_path("example_1_1")).unwrap();
    let bad = text.replace("[solver]", "[solver]\nwarp_factor = 9\n");
    let err = toml::from_str::<ScenarioFile>(&bad).unwrap_err();
    assert!(err.to_string().contains("warp_factor"), "{err}");
}

#[test]
fn positive_slope_is_a_named_validation_failure() {
    let text = std::fs::read_to_string(scenario_path("example_1_1")).unwrap();
    let bad = text.replace(
        "[model.market_default]\nintercept = 300.0\nslope = -1.0",
        "[model.market_default]\nintercept = 300.0\nslope = -1.0\n\n[[model.market]]\nj = 1\nk = 1\nintercept = 300.0\nslope = 1.0",
    );
    let file: ScenarioFile = toml::from_str(&bad).unwrap();
    let model = file.build_model().unwrap();
    let violations = model.validate();
    assert_eq!(violations.len(), 1);
    assert!(
        violations[0].to_string().contains("markets[1][1]"),
        "{}",
        violations[0]
    );
}

#[test]
fn solver_section_parses_auto_step_and_random_init() {
    let text = std::fs::read_to_string(scenario_path("example_1_1")).unwrap();
    let tweaked = text.replace(
        "[solver]\nphi = 0.01\neps = 1e-4\nmax_iters = 2000000",
        "[solver]\nphi = \"auto\"\neps = 1e-4\nmax_iters = 2000000\ninitial = { random = { seed = 7, scale = 5.0 } }",
    );
    assert_ne!(text, tweaked, "replacement must hit the solver section");
    let file: ScenarioFile = toml::from_str(&tweaked).unwrap();
    let solver = file.build_solver();
    assert_eq!(solver.step, scnet::StepRule::Auto);
    assert_eq!(
        solver.initial,
        scnet::Initial::Random {
            seed: 7,
            scale: 5.0
        }
    );
}

#[test]
fn report_headers_are_pinned() {
    assert_eq!(
        report::EQUILIBRIUM_HEADER,
        "variable,i,n,j,m,s,t,k,g,value,value_2dp"
    );
    assert_eq!(report::PRICES_HEADER, "price,i,n,j,m,s,t,k,value,value_2dp");
    assert_eq!(report::WELFARE_HEADER, "metric,a,b,value,value_2dp");
    assert_eq!(report::TRACE_HEADER, "iteration,gap,residual");
    assert_eq!(
        report::SWEEP_HEADER,
        "target,value,status,owner_profit_total,producer_profit_total,supplier_profit_total,\
consumer_surplus_total,social_welfare,net_incentive,benefit_cost"
    );
    assert_eq!(report::COMPARE_HEADER, "metric,a,b,baseline,policy,delta");
}

#[test]
fn full_precision_cells_parse_back_exactly() {
    for v in [0.0, 1.5, -247.28349, 1.0e6, 3.0f64.sqrt() * 1e-7] {
        let cell = report::full(v);
        let back: f64 = cell.parse().unwrap();
        assert_eq!(back, v, "cell {cell}");
    }
}

#[test]
fn solve_writes_all_reports_with_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let ov = Overrides {
        out: Some(tmp.path().to_path_buf()),
        trace_every: Some(200),
        ..Default::default()
    };
    let solved = run::run_solve(&scenario_path("example_1_1"), &ov).unwrap();
    assert_eq!(solved.outcome.status, scnet::SolveStatus::Converged);
    for (file, header) in [
        ("equilibrium.csv", report::EQUILIBRIUM_HEADER),
        ("prices.csv", report::PRICES_HEADER),
        ("welfare.csv", report::WELFARE_HEADER),
        ("trace.csv", report::TRACE_HEADER),
    ] {
        let body = std::fs::read_to_string(tmp.path().join(file)).unwrap();
        assert!(body.starts_with(header), "{file} header");
        assert!(body.ends_with('\n'));
        assert!(!body.contains('\r'), "{file} must use LF endings");
    }
    let diag = std::fs::read_to_string(tmp.path().join("diagnostics.txt")).unwrap();
    assert!(diag.contains("monotonicity_class"));
    // 58 packed variables plus 4 derived demand rows.
    let eq = std::fs::read_to_string(tmp.path().join("equilibrium.csv")).unwrap();
    assert_eq!(eq.lines().count(), 1 + 58 + 4);
}

#[test]
fn binary_exit_codes_follow_the_contract() {
    let bin = env!("CARGO_BIN_EXE_scnet");
    let tmp = tempfile::tempdir().unwrap();

    // Converged solve: exit 0.
    let ok = Command::new(bin)
        .args(["solve"])
        .arg(scenario_path("example_1_1"))
        .args(["--out"])
        .arg(tmp.path().join("a"))
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&ok.stderr)
    );

    // Iteration cap too small: nonzero exit.
    let capped = Command::new(bin)
        .args(["solve"])
        .arg(scenario_path("example_1_1"))
        .args(["--out"])
        .arg(tmp.path().join("b"))
        .args(["--max-iters", "3"])
        .output()
        .unwrap();
    assert_eq!(capped.status.code(), Some(2));

    // Unreadable config: nonzero exit with a named path.
    let missing = Command::new(bin)
        .args(["solve", "definitely_missing.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("definitely_missing.toml"));

    // Validate: 0 on a valid file.
    let valid = Command::new(bin)
        .args(["validate"])
        .arg(scenario_path("example_1_1"))
        .output()
        .unwrap();
    assert!(valid.status.success());
    assert!(String::from_utf8_lossy(&valid.stdout).contains("valid"));

    // Diagnose prints the verdict.
    let diag = Command::new(bin)
        .args(["diagnose"])
        .arg(scenario_path("example_1_1"))
        .args(["--out"])
        .arg(tmp.path().join("c"))
        .output()
        .unwrap();
    assert!(diag.status.success());
    assert!(String::from_utf8_lossy(&diag.stdout).contains("lipschitz_estimate"));
}

#[test]
fn sweep_rows_keep_grid_order_and_jobs_do_not_change_output() {
    let tmp1 = tempfile::tempdir().unwrap();
    let tmp2 = tempfile::tempdir().unwrap();
    let path = scenario_path("example_1_1");
    let r1 = run::run_sweep(
        &path,
        "owner_policy[1].base_rate",
        "0,5,10",
        1,
        &Overrides {
            out: Some(tmp1.path().to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap();
    let r2 = run::run_sweep(
        &path,
        "owner_policy[1].base_rate",
        "0,5,10",
        3,
        &Overrides {
            out: Some(tmp2.path().to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(r1.all_converged && r2.all_converged);
    let a = std::fs::read(tmp1.path().join("sweep.csv")).unwrap();
    let b = std::fs::read(tmp2.path().join("sweep.csv")).unwrap();
    assert_eq!(a, b, "sweep output must not depend on --jobs");
    let values: Vec<f64> = r1.rows.iter().map(|r| r.value).collect();
    assert_eq!(values, vec![0.0, 5.0, 10.0]);
}

#[test]
fn compare_identical_configs_gives_zero_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let path = scenario_path("example_1_1");
    let c = run::run_compare(
        &path,
        &path,
        &Overrides {
            out: Some(tmp.path().to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(c.policy_welfare_vs_base.delta_social_welfare, Some(0.0));
    let body = std::fs::read_to_string(tmp.path().join("compare.csv")).unwrap();
    for line in body.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells[0] == "benefit_cost" {
            continue;
        }
        let delta: f64 = cells[5].parse().unwrap();
        assert_eq!(delta, 0.0, "line {line}");
    }
}
