//! Workflow drivers behind the CLI subcommands.

use crate::config::{ConfigError, ScenarioFile};
use crate::report;
use crate::sweep::{parse_grid, SweepError, Target};
use scnet::analysis::{retrieve_prices, welfare, PriceSet, WelfareReport, FLOW_EPS};
use scnet::assembly::{build_index_map, FEvaluator, IndexMap};
use scnet::diagnostics::{classify_bundle, jacobian_of, DiagnosticsError};
use scnet::model::{NetworkModel, Violation};
use scnet::solver::{
    initial_state, solve_with, spectral_norm_rows, SolveError, SolveOutcome, SolveStatus,
    SolverConfig, StepRule,
};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model validation failed:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("bad --phi value `{0}`: expected a number or `auto`")]
    BadPhi(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("  - {x}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Command-line overrides applied on top of the config's solver section.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub phi: Option<String>,
    pub eps: Option<f64>,
    pub max_iters: Option<usize>,
    pub trace_every: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut SolverConfig) -> Result<(), RunError> {
        if let Some(p) = &self.phi {
            cfg.step = if p == "auto" {
                StepRule::Auto
            } else {
                StepRule::Fixed(p.parse::<f64>().map_err(|_| RunError::BadPhi(p.clone()))?)
            };
        }
        if let Some(e) = self.eps {
            cfg.tolerance = e;
        }
        if let Some(m) = self.max_iters {
            cfg.max_iters = m;
        }
        if let Some(t) = self.trace_every {
            cfg.trace_every = t;
        }
        Ok(())
    }
}

/// Everything a solve produced, for reporting and tests.
pub struct Solved {
    pub model: NetworkModel,
    pub index: IndexMap,
    pub outcome: SolveOutcome,
    pub prices: PriceSet,
    pub welfare: WelfareReport,
}

/// Load a scenario, returning the parsed file and its validated model.
pub fn load_scenario(path: &Path) -> Result<(ScenarioFile, NetworkModel), RunError> {
    let file = ScenarioFile::load(path)?;
    let model = file.build_model()?;
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(RunError::Invalid(violations));
    }
    Ok((file, model))
}

fn solve_model(model: &NetworkModel, solver: &SolverConfig) -> Result<Solved, RunError> {
    let ev = FEvaluator::new(model).map_err(SolveError::Build)?;
    let outcome = solve_with(&ev, model, solver)?;
    let index = build_index_map(&model.topology);
    let prices = retrieve_prices(model, &index, &outcome.state, FLOW_EPS);
    let report = welfare(model, &index, &outcome.state, &prices, None);
    Ok(Solved {
        model: model.clone(),
        index,
        outcome,
        prices,
        welfare: report,
    })
}

fn out_dir(path: &Path, file: &ScenarioFile, ov: &Overrides) -> PathBuf {
    if let Some(o) = &ov.out {
        return o.clone();
    }
    if let Some(d) = &file.outputs.directory {
        return PathBuf::from(d);
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_default();
    PathBuf::from("out").join(stem)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|source| RunError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|source| RunError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn wants(file: &ScenarioFile, name: &str) -> bool {
    match &file.outputs.reports {
        None => true,
        Some(list) => list.iter().any(|r| r == name),
    }
}

/// `solve` driver: run one scenario and write its reports. Returns the
/// solve artifacts; the caller maps convergence onto the exit code.
pub fn run_solve(path: &Path, ov: &Overrides) -> Result<Solved, RunError> {
    let (file, model) = load_scenario(path)?;
    let mut solver = file.build_solver();
    ov.apply(&mut solver)?;
    let solved = solve_model(&model, &solver)?;
    let dir = out_dir(path, &file, ov);

    if wants(&file, "equilibrium") {
        let body = report::equilibrium_csv(&solved.model, &solved.index, &solved.outcome.state);
        write_file(&dir, "equilibrium.csv", &body)?;
    }
    if wants(&file, "prices") {
        write_file(
            &dir,
            "prices.csv",
            &report::prices_csv(&solved.model, &solved.prices),
        )?;
    }
    if wants(&file, "welfare") {
        write_file(
            &dir,
            "welfare.csv",
            &report::welfare_csv(&solved.model, &solved.welfare),
        )?;
    }
    if wants(&file, "diagnostics") {
        let ev = FEvaluator::new(&solved.model).map_err(SolveError::Build)?;
        let bundle = jacobian_of(&ev);
        let verdict = classify_bundle(&bundle)?;
        let l = spectral_norm_rows(&ev);
        let body = report::diagnostics_text(Some(&solved.outcome), ev.len(), l, 0.9 / l, &verdict);
        write_file(&dir, "diagnostics.txt", &body)?;
    }
    if solver.trace_every > 0 && wants(&file, "trace") {
        write_file(&dir, "trace.csv", &report::trace_csv(&solved.outcome.trace))?;
    }
    Ok(solved)
}

/// Result of one sweep, with per-point outcomes in grid order.
pub struct SweepResult {
    pub rows: Vec<report::SweepRow>,
    pub all_converged: bool,
    pub solved: Vec<Option<Solved>>,
}

/// `sweep` driver: solve the scenario once per grid value of the target.
/// Grid points run concurrently up to `jobs`; rows keep grid order and a
/// failed point is recorded in its row while the sweep continues.
pub fn run_sweep(
    path: &Path,
    target_text: &str,
    grid_text: &str,
    jobs: usize,
    ov: &Overrides,
) -> Result<SweepResult, RunError> {
    let (file, base_model) = load_scenario(path)?;
    let mut solver = file.build_solver();
    ov.apply(&mut solver)?;
    let target = Target::parse(target_text)?;
    let grid = parse_grid(grid_text)?;
    // Reject targets that do not resolve on this model before spawning work.
    {
        let mut probe = base_model.clone();
        let current = grid.first().copied().unwrap();
        target.apply(&mut probe, current)?;
    }

    let baseline = solve_model(&base_model, &solver)?;
    let base_sw = baseline.welfare.social_welfare;

    let jobs = jobs.max(1);
    let n = grid.len();
    let mut results: Vec<Option<Result<Solved, RunError>>> = Vec::with_capacity(n);
    results.resize_with(n, || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<Solved, RunError>>>> =
        (0..n).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let q = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if q >= n {
                    break;
                }
                let mut model = base_model.clone();
                let r = target
                    .apply(&mut model, grid[q])
                    .map_err(RunError::from)
                    .and_then(|_| solve_model(&model, &solver));
                *slots[q].lock().unwrap() = Some(r);
            });
        }
    });
    for (slot, cell) in slots.into_iter().zip(results.iter_mut()) {
        *cell = slot.into_inner().unwrap();
    }

    let mut rows = Vec::with_capacity(n);
    let mut solved = Vec::with_capacity(n);
    let mut all_converged = baseline.outcome.status == SolveStatus::Converged;
    for (q, cell) in results.into_iter().enumerate() {
        match cell.expect("sweep point computed") {
            Ok(s) => {
                let status = match s.outcome.status {
                    SolveStatus::Converged => "converged",
                    SolveStatus::MaxIters => "max_iters",
                    SolveStatus::Diverged => "diverged",
                };
                if s.outcome.status != SolveStatus::Converged {
                    all_converged = false;
                }
                let w = &s.welfare;
                let benefit_cost = if w.net_incentive != 0.0 {
                    Some((w.social_welfare - base_sw) / w.net_incentive)
                } else {
                    None
                };
                rows.push(report::SweepRow {
                    target: target_text.to_string(),
                    value: grid[q],
                    status: status.to_string(),
                    owner_total: w.owner_total,
                    producer_total: w.producer_total,
                    supplier_total: w.supplier_total,
                    consumer_total: w.consumer_total,
                    social_welfare: w.social_welfare,
                    net_incentive: w.net_incentive,
                    benefit_cost,
                });
                solved.push(Some(s));
            }
            Err(e) => {
                all_converged = false;
                rows.push(report::SweepRow {
                    target: target_text.to_string(),
                    value: grid[q],
                    status: format!("error: {e}").replace(',', ";").replace('\n', " "),
                    owner_total: f64::NAN,
                    producer_total: f64::NAN,
                    supplier_total: f64::NAN,
                    consumer_total: f64::NAN,
                    social_welfare: f64::NAN,
                    net_incentive: f64::NAN,
                    benefit_cost: None,
                });
                solved.push(None);
            }
        }
    }

    let dir = out_dir(path, &file, ov);
    write_file(&dir, "sweep.csv", &report::sweep_csv(&rows))?;
    Ok(SweepResult {
        rows,
        all_converged,
        solved,
    })
}

/// `compare` driver: solve a baseline and a policy scenario and write the
/// side-by-side delta report.
pub struct Compared {
    pub base: Solved,
    pub policy: Solved,
    pub policy_welfare_vs_base: WelfareReport,
}

pub fn run_compare(
    base_path: &Path,
    policy_path: &Path,
    ov: &Overrides,
) -> Result<Compared, RunError> {
    let (base_file, base_model) = load_scenario(base_path)?;
    let (_policy_file, policy_model) = load_scenario(policy_path)?;
    let mut base_solver = base_file.build_solver();
    ov.apply(&mut base_solver)?;
    let mut policy_solver = _policy_file.build_solver();
    ov.apply(&mut policy_solver)?;

    let base = solve_model(&base_model, &base_solver)?;
    let policy = solve_model(&policy_model, &policy_solver)?;
    let policy_welfare_vs_base = welfare(
        &policy.model,
        &policy.index,
        &policy.outcome.state,
        &policy.prices,
        Some(&base.welfare),
    );

    let dir = ov
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join("compare"));
    let body = report::compare_csv(
        &base.model,
        &base.welfare,
        &base.prices.p3,
        &policy_welfare_vs_base,
        &policy.prices.p3,
    );
    write_file(&dir, "compare.csv", &body)?;
    Ok(Compared {
        base,
        policy,
        policy_welfare_vs_base,
    })
}

/// `diagnose` driver: spectral diagnostics without running the solver.
pub struct Diagnosed {
    pub dim: usize,
    pub lipschitz: f64,
    pub suggested_step: f64,
    pub verdict: scnet::diagnostics::MonotonicityVerdict,
    pub text: String,
}

pub fn run_diagnose(path: &Path, ov: &Overrides) -> Result<Diagnosed, RunError> {
    let (file, model) = load_scenario(path)?;
    let ev = FEvaluator::new(&model).map_err(SolveError::Build)?;
    let bundle = jacobian_of(&ev);
    let verdict = classify_bundle(&bundle)?;
    let l = spectral_norm_rows(&ev);
    // Sample point only fixes the evaluation site; the Jacobian is constant.
    let _ = initial_state(&model, &ev, &scnet::solver::Initial::Ones);
    let text = report::diagnostics_text(None, ev.len(), l, 0.9 / l, &verdict);
    let dir = out_dir(path, &file, ov);
    write_file(&dir, "diagnostics.txt", &text)?;
    Ok(Diagnosed {
        dim: ev.len(),
        lipschitz: l,
        suggested_step: 0.9 / l,
        verdict,
        text,
    })
}

/// `validate` driver: list violations (empty = valid).
pub fn run_validate(path: &Path) -> Result<Vec<Violation>, RunError> {
    let file = ScenarioFile::load(path)?;
    let model = file.build_model()?;
    Ok(model.validate())
}
