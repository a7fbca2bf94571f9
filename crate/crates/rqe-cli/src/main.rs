//! `rqe` — solve, certify, and verify risk-averse quantal-response
//! equilibria from the command line.
//!
//! Exit codes: 0 success; 1 input error; 2 unconverged or guarantee-void
//! result; 3 certification failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rqe_core::markov_game::StepRule;
use rqe_core::Error;

use commands::Driver;
use manifest::{parse_override, RunManifest};

#[derive(Parser)]
#[command(
    name = "rqe",
    version,
    about = "Risk-averse quantal-response equilibrium solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Input JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Master seed; all randomness derives from it through named substreams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Config overrides as dotted key=value pairs
    /// (e.g. --override config.player1.epsilon=0.5).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl CommonArgs {
    fn manifest(&self, command: &'static str) -> Result<RunManifest, Error> {
        let overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<_, _>>()?;
        Ok(RunManifest {
            command,
            input: self.input.clone(),
            output: self.output.clone(),
            seed: self.seed,
            overrides,
        })
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Natural-residual tolerance for stage solves.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Iteration cap per stage solve.
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a bimatrix game's RQE.
    SolveNf {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write a per-iteration CSV trace (iter,residual,step,j1,j2).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Report the monotonicity certificate and discount threshold.
    Certify {
        #[command(flatten)]
        common: CommonArgs,
        /// Player 1 action count (required for bare config inputs).
        #[arg(long)]
        a1: Option<usize>,
        /// Player 2 action count (required for bare config inputs).
        #[arg(long)]
        a2: Option<usize>,
    },
    /// Probe the equilibrium Lipschitz bound under payoff perturbations.
    Lipschitz {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Number of seeded perturbations.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Entrywise perturbation magnitude.
        #[arg(long, default_value_t = 0.1)]
        scale: f64,
    },
    /// Solve a Markov game to its fixed-point Q tables and policy.
    SolveMg {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Fixed-point driver.
        #[arg(long, value_parser = ["vi", "qlearn"], default_value = "vi")]
        driver: String,
        /// Sup-norm stopping tolerance on successive Q tables (vi).
        #[arg(long, default_value_t = 1e-8)]
        q_tol: f64,
        /// Number of damped updates (qlearn).
        #[arg(long, default_value_t = 500)]
        steps: usize,
        /// Step-size rule: "harmonic", "constant:<a>", or "scaled:<a>:<b>".
        #[arg(long, default_value = "harmonic")]
        step_rule: String,
        /// Write a per-sweep CSV trace (iter,delta_q,ratio).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check a solved policy against random Markov deviations.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Result JSON produced by solve-mg (supplies the policy).
        #[arg(long)]
        result: PathBuf,
        /// Deviation policies sampled per player.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Fixed-policy evaluation tolerance.
        #[arg(long, default_value_t = 1e-9)]
        eval_tol: f64,
        /// Largest tolerated value improvement.
        #[arg(long, default_value_t = 1e-6)]
        gain_tol: f64,
    },
}

fn parse_step_rule(spec: &str) -> Result<StepRule, Error> {
    let rule = if spec == "harmonic" {
        StepRule::Harmonic
    } else if let Some(a) = spec.strip_prefix("constant:") {
        let a: f64 = a
            .parse()
            .map_err(|_| Error::Config(format!("bad constant step size '{a}'")))?;
        StepRule::Constant(a)
    } else if let Some(rest) = spec.strip_prefix("scaled:") {
        let (a, b) = rest
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad step rule '{spec}'")))?;
        StepRule::Scaled {
            a: a.parse()
                .map_err(|_| Error::Config(format!("bad step rule numerator '{a}'")))?,
            b: b.parse()
                .map_err(|_| Error::Config(format!("bad step rule offset '{b}'")))?,
        }
    } else {
        return Err(Error::Config(format!(
            "unknown step rule '{spec}' (expected harmonic, constant:<a>, or scaled:<a>:<b>)"
        )));
    };
    rule.validate()?;
    Ok(rule)
}

fn run() -> Result<i32, Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::SolveNf {
            common,
            solver,
            trace,
        } => commands::cmd_solve_nf(
            &common.manifest("solve-nf")?,
            solver.tol,
            solver.max_iters,
            trace.as_deref(),
        ),
        Command::Certify { common, a1, a2 } => {
            commands::cmd_certify(&common.manifest("certify")?, a1, a2)
        }
        Command::Lipschitz {
            common,
            solver,
            trials,
            scale,
        } => commands::cmd_lipschitz(
            &common.manifest("lipschitz")?,
            trials,
            scale,
            solver.tol,
            solver.max_iters,
        ),
        Command::SolveMg {
            common,
            solver,
            driver,
            q_tol,
            steps,
            step_rule,
            trace,
        } => {
            let driver = match driver.as_str() {
                "vi" => Driver::Vi,
                _ => Driver::QLearn {
                    steps,
                    rule: parse_step_rule(&step_rule)?,
                },
            };
            commands::cmd_solve_mg(
                &common.manifest("solve-mg")?,
                driver,
                q_tol,
                solver.tol,
                solver.max_iters,
                trace.as_deref(),
            )
        }
        Command::Verify {
            common,
            result,
            trials,
            eval_tol,
            gain_tol,
        } => commands::cmd_verify(
            &common.manifest("verify")?,
            &result,
            trials,
            eval_tol,
            gain_tol,
        ),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::StageSolve { .. } | Error::Contract(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
