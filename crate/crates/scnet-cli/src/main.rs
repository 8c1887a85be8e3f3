use clap::{Args, Parser, Subcommand};
use scnet::solver::SolveStatus;
use scnet_cli::run::{self, Overrides, RunError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Equilibria of four-tier resource supply networks: solve scenarios,
/// sweep parameters, compare policies, and diagnose the game Jacobian.
#[derive(Parser)]
#[command(name = "scnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// Output directory (default: the config's `outputs.directory`,
    /// falling back to `out/<scenario>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Step size: a number or `auto` (0.9 / Lipschitz estimate).
    #[arg(long)]
    phi: Option<String>,
    /// Convergence tolerance on the sup-norm iterate gap.
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Record a trace point every N iterations (0 disables).
    #[arg(long)]
    trace_every: Option<usize>,
}

impl CommonOpts {
    fn overrides(&self) -> Overrides {
        Overrides {
            phi: self.phi.clone(),
            eps: self.eps,
            max_iters: self.max_iters,
            trace_every: self.trace_every,
            out: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write equilibrium/prices/welfare reports.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Re-solve a scenario over a grid of one parameter.
    Sweep {
        config: PathBuf,
        /// Target path, e.g. `U[1]` or `producer_policy[1].base_rate`.
        #[arg(long)]
        target: String,
        /// Grid: `v1,v2,...` or `lo:hi:steps`.
        #[arg(long)]
        grid: String,
        /// Concurrent solves.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Solve a baseline and a policy scenario and write the delta report.
    Compare {
        base: PathBuf,
        policy: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Spectral diagnostics of the scenario's constant game Jacobian.
    Diagnose {
        config: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Check every instance invariant and list the violations.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Print to stdout, swallowing a closed downstream pipe instead of
/// panicking (e.g. `scnet solve ... | head`).
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIters => "max_iters",
        SolveStatus::Diverged => "diverged",
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, RunError> {
    match cli.command {
        Command::Solve { config, common } => {
            let solved = run::run_solve(&config, &common.overrides())?;
            emit!(
                "{}: {} after {} iterations (gap {:.3e}, residual {:.3e})",
                config.display(),
                status_name(solved.outcome.status),
                solved.outcome.iterations,
                solved.outcome.final_gap,
                solved.outcome.residual,
            );
            emit!(
                "social welfare {:.2}, net incentive {:.2}",
                solved.welfare.social_welfare,
                solved.welfare.net_incentive
            );
            Ok(if solved.outcome.status == SolveStatus::Converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Sweep {
            config,
            target,
            grid,
            jobs,
            common,
        } => {
            let result = run::run_sweep(&config, &target, &grid, jobs, &common.overrides())?;
            for row in &result.rows {
                emit!(
                    "{} = {:<10} {:<10} SW {:.2}",
                    row.target,
                    row.value,
                    row.status,
                    row.social_welfare
                );
            }
            Ok(if result.all_converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Compare {
            base,
            policy,
            common,
        } => {
            let c = run::run_compare(&base, &policy, &common.overrides())?;
            let w = &c.policy_welfare_vs_base;
            emit!(
                "baseline SW {:.2} -> policy SW {:.2} (delta {:.2})",
                c.base.welfare.social_welfare,
                w.social_welfare,
                w.delta_social_welfare.unwrap_or(0.0)
            );
            emit!("net incentive {:.2}", w.net_incentive);
            if let Some(bc) = w.benefit_cost {
                emit!("benefit-cost {bc:.2}");
            }
            let ok = c.base.outcome.status == SolveStatus::Converged
                && c.policy.outcome.status == SolveStatus::Converged;
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Diagnose { config, common } => {
            let d = run::run_diagnose(&config, &common.overrides())?;
            emit!("{}", d.text.trim_end());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let violations = run::run_validate(&config)?;
            if violations.is_empty() {
                emit!("valid");
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &violations {
                    emit!("violation: {v}");
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}
