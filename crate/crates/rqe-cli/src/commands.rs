//! The five subcommand implementations. Each returns the process exit code:
//! 0 success, 2 unconverged or guarantee-void, 3 certification failure;
//! input errors surface as `Err` and exit 1.

use std::path::Path;

use rqe_core::markov_game::{
    gamma_max, q_learning_iterate, value_iterate, verify_markov_rqe, MarkovGame, StepRule,
};
use rqe_core::normal_form::{certify_alpha, BimatrixGame, Player};
use rqe_core::rng::{seeded_rng, streams};
use rqe_core::schema::{
    from_json_str, to_json_string, CertificateOut, ConfigFile, MarkovGameFile, NormalFormFile,
    SolveMgOut, SolveNfOut, VerifyOut, ViolationOut,
};
use rqe_core::vi_solver::{lipschitz_probe, solve_rqe, InitStrategy, LipschitzProbe, SolverOptions};
use rqe_core::{Error, Result};

use rand::Rng;

use crate::manifest::{emit, from_value, CsvCell, CsvTable, RunManifest};

fn solver_options(tol: f64, max_iters: usize, seed: u64, record_trace: bool) -> SolverOptions {
    SolverOptions {
        tol,
        max_iters,
        seed,
        init: InitStrategy::Uniform,
        record_trace,
        ..SolverOptions::default()
    }
}

pub fn cmd_solve_nf(
    manifest: &RunManifest,
    tol: f64,
    max_iters: usize,
    trace: Option<&Path>,
) -> Result<i32> {
    manifest.validate()?;
    let file: NormalFormFile = from_value(manifest.load_value()?)?;
    let (game, cfg) = file.to_parts()?;
    let opts = solver_options(tol, max_iters, manifest.seed, trace.is_some());
    let report = solve_rqe(&game, &cfg, &opts)?;
    let out = SolveNfOut::build(&report, &game, &cfg)?;
    emit(manifest.output.as_deref(), &to_json_string(&out)?)?;

    if let Some(path) = trace {
        let mut csv = CsvTable::new("iter,residual,step,j1,j2");
        for row in &report.trace {
            csv.row(&[
                CsvCell::Int(row.iter),
                CsvCell::Float(row.residual),
                CsvCell::Float(row.step),
                CsvCell::Float(row.j1),
                CsvCell::Float(row.j2),
            ]);
        }
        emit(Some(path), &csv.finish())?;
    }
    Ok(if report.converged { 0 } else { 2 })
}

pub fn cmd_certify(manifest: &RunManifest, a1: Option<usize>, a2: Option<usize>) -> Result<i32> {
    manifest.validate()?;
    let value = manifest.load_value()?;

    // Accept either a full game file (action counts included) or a bare
    // config object plus --a1/--a2.
    let (dims, cfg) = if value.get("R1").is_some() {
        let file: NormalFormFile = from_value(value)?;
        let (game, cfg) = file.to_parts()?;
        (game.dims(), cfg)
    } else {
        let file: ConfigFile = from_value(value)?;
        let dims = match (a1, a2) {
            (Some(m), Some(n)) => (m, n),
            _ => {
                return Err(Error::Config(
                    "bare config input needs --a1 and --a2 action counts".into(),
                ))
            }
        };
        (dims, file.to_config()?)
    };

    let out = CertificateOut::build(dims, &cfg)?;
    emit(manifest.output.as_deref(), &to_json_string(&out)?)?;
    Ok(if out.certified && out.alpha > 0.0 { 0 } else { 3 })
}

pub fn cmd_lipschitz(
    manifest: &RunManifest,
    trials: usize,
    scale: f64,
    tol: f64,
    max_iters: usize,
) -> Result<i32> {
    manifest.validate()?;
    if trials == 0 {
        return Err(Error::Config("lipschitz needs at least one trial".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!(
            "perturbation scale must be positive, got {scale}"
        )));
    }
    let file: NormalFormFile = from_value(manifest.load_value()?)?;
    let (game, cfg) = file.to_parts()?;

    let cert = certify_alpha(game.dims(), &cfg)?;
    if !cert.certified {
        eprintln!("configuration has no certified monotonicity constant; bound is void");
        return Ok(2);
    }

    let opts = solver_options(tol, max_iters, manifest.seed, false);
    let mut rng = seeded_rng(manifest.seed, streams::PERTURB);
    let mut csv = CsvTable::new("payoff_diff,distance,bound,ratio");
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let jitter = |m: &rqe_core::Mat, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            m.to_rows()
                .into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|v| v + scale * (2.0 * rng.random::<f64>() - 1.0))
                        .collect()
                })
                .collect()
        };
        let perturbed = BimatrixGame::from_rows(
            jitter(game.payoff(Player::One), &mut rng),
            jitter(game.payoff(Player::Two), &mut rng),
        )?;
        match lipschitz_probe(&game, &perturbed, &cfg, &opts)? {
            LipschitzProbe::Ratio {
                payoff_diff,
                distance,
                bound,
                ratio,
            } => {
                worst = worst.max(ratio);
                csv.row(&[
                    CsvCell::Float(payoff_diff),
                    CsvCell::Float(distance),
                    CsvCell::Float(bound),
                    CsvCell::Float(ratio),
                ]);
            }
            LipschitzProbe::Degenerate { distance } => {
                csv.row(&[
                    CsvCell::Float(0.0),
                    CsvCell::Float(distance),
                    CsvCell::Empty,
                    CsvCell::Empty,
                ]);
            }
        }
    }
    emit(manifest.output.as_deref(), &csv.finish())?;
    Ok(if worst <= 1.0 { 0 } else { 2 })
}

/// Which fixed-point driver `solve-mg` runs.
#[derive(Debug, Clone, Copy)]
pub enum Driver {
    Vi,
    QLearn { steps: usize, rule: StepRule },
}

pub fn cmd_solve_mg(
    manifest: &RunManifest,
    driver: Driver,
    q_tol: f64,
    tol: f64,
    max_iters: usize,
    trace: Option<&Path>,
) -> Result<i32> {
    manifest.validate()?;
    let file: MarkovGameFile = from_value(manifest.load_value()?)?;
    let mg: MarkovGame = file.to_game()?;
    let opts = solver_options(tol, max_iters, manifest.seed, false);

    let threshold = gamma_max(mg.dims(), mg.cfg())?.value();
    let guaranteed = threshold.is_some_and(|t| mg.gamma() <= t);
    if !guaranteed {
        eprintln!(
            "uncertified regime: gamma = {} exceeds the certified threshold {:?}; results are best-effort",
            mg.gamma(),
            threshold
        );
    }

    let (q, diffs, converged, driver_name) = match driver {
        Driver::Vi => {
            let report = value_iterate(&mg, &opts, q_tol)?;
            (report.q, report.diffs, report.converged, "vi")
        }
        Driver::QLearn { steps, rule } => {
            let report = q_learning_iterate(&mg, &opts, steps, rule, None)?;
            (report.q, report.diffs, true, "qlearn")
        }
    };

    let out = SolveMgOut::build(driver_name, &q, &diffs, converged, &mg, &opts)?;
    emit(manifest.output.as_deref(), &to_json_string(&out)?)?;

    if let Some(path) = trace {
        let mut csv = CsvTable::new("iter,delta_q,ratio");
        for (k, &d) in diffs.iter().enumerate() {
            let ratio = if k > 0 && diffs[k - 1] > 0.0 {
                CsvCell::Float(d / diffs[k - 1])
            } else {
                CsvCell::Empty
            };
            csv.row(&[CsvCell::Int(k), CsvCell::Float(d), ratio]);
        }
        emit(Some(path), &csv.finish())?;
    }

    let ok = guaranteed && converged && out.flagged_states.is_empty();
    Ok(if ok { 0 } else { 2 })
}

pub fn cmd_verify(
    manifest: &RunManifest,
    result_path: &Path,
    trials: usize,
    eval_tol: f64,
    gain_tol: f64,
) -> Result<i32> {
    manifest.validate()?;
    let file: MarkovGameFile = from_value(manifest.load_value()?)?;
    let mg = file.to_game()?;

    let result_text = std::fs::read_to_string(result_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", result_path.display())))?;
    let result: SolveMgOut = from_json_str(&result_text)?;
    let policy = result.policy.to_policy()?;

    let report = verify_markov_rqe(&policy, &mg, trials, manifest.seed, eval_tol, gain_tol)?;
    let out = VerifyOut {
        verified: report.violations.is_empty(),
        max_gain: report.max_gain,
        gain_tol: report.gain_tol,
        trials: report.trials,
        violations: report
            .violations
            .iter()
            .map(|v| ViolationOut {
                player: v.player.index() + 1,
                trial: v.trial,
                state: v.state,
                gain: v.gain,
            })
            .collect(),
    };
    emit(manifest.output.as_deref(), &to_json_string(&out)?)?;
    Ok(if out.verified { 0 } else { 2 })
}
