//! End-to-end acceptance gate. Each test prints one `[PASS]`/`[FAIL]` line
//! (visible with `--nocapture`); run the whole file with
//! `cargo test --test acceptance`.

use rqe_core::markov_game::{
    bellman_t, gamma_max, policy_evaluate, policy_extract, q_learning_iterate, stage_game,
    value_iterate, verify_markov_rqe, MarkovGame, QPair, StepRule,
};
use rqe_core::normal_form::{
    certify_alpha, numeric_alpha_probe, objective_j, objective_j_stacked, operator_f_stacked,
    BimatrixGame, JointStrategy, Player, RQEConfig,
};
use rqe_core::regularizers::{
    d_grad_p_slice, d_grad_pi_slice, d_inner_argmax, d_value_slice, nu_grad_slice,
    nu_value_slice, EnvPenalty, PenaltyKind, QuantalRegularizer, RegKind, RiskPenalty,
};
use rqe_core::rng::{seeded_rng, streams};
use rqe_core::simplex::{sample_simplex, InteriorFloor};
use rqe_core::vi_solver::{
    lipschitz_probe, solve_rqe, verify_equilibrium, InitStrategy, LipschitzProbe, SolverOptions,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn criterion(n: usize, name: &str, body: impl FnOnce() -> Check) {
    match body() {
        Ok(()) => println!("[PASS] criterion {n}: {name}"),
        Err(msg) => {
            println!("[FAIL] criterion {n}: {name} — {msg}");
            panic!("criterion {n} ({name}) failed: {msg}");
        }
    }
}

fn entropy_cfg(eps: f64, c: f64) -> RQEConfig {
    RQEConfig::symmetric(
        QuantalRegularizer::new(RegKind::Entropy, eps).unwrap(),
        RiskPenalty::new(PenaltyKind::ScaledSqL2, c).unwrap(),
        InteriorFloor::new(1e-9).unwrap(),
    )
}

fn quadratic_cfg(eps: f64, c: f64) -> RQEConfig {
    RQEConfig::symmetric(
        QuantalRegularizer::new(RegKind::Quadratic, eps).unwrap(),
        RiskPenalty::new(PenaltyKind::ScaledSqL2, c).unwrap(),
        InteriorFloor::new(1e-9).unwrap(),
    )
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
                .collect()
        })
        .collect()
}

fn random_game(rng: &mut ChaCha8Rng, n1: usize, n2: usize) -> BimatrixGame {
    BimatrixGame::from_rows(
        random_matrix(rng, n1, n2, 1.0),
        random_matrix(rng, n2, n1, 1.0),
    )
    .unwrap()
}

/// The desk-scale 2-state 2×2 Markov game the contraction-side criteria run
/// on, at 90% of the certified discount threshold.
fn desk_markov_game() -> (MarkovGame, f64) {
    let cfg = entropy_cfg(2.0, 1.0);
    let g_max = gamma_max((2, 2), &cfg).unwrap().value().unwrap();
    let gamma = 0.9 * g_max;
    let mut rng = seeded_rng(0xD5C, streams::INSTANCE);
    let reward = |rng: &mut ChaCha8Rng| -> Vec<Vec<Vec<f64>>> {
        (0..2)
            .map(|_| {
                (0..2)
                    .map(|_| (0..2).map(|_| rng.random::<f64>()).collect())
                    .collect()
            })
            .collect()
    };
    let r1 = reward(&mut rng);
    let r2 = reward(&mut rng);
    let p = (0..2)
        .map(|_| {
            (0..2)
                .map(|_| {
                    (0..2)
                        .map(|_| sample_simplex(&mut rng, 2).unwrap().to_vec())
                        .collect()
                })
                .collect()
        })
        .collect();
    (
        MarkovGame::new(r1, r2, p, gamma, EnvPenalty::None, cfg).unwrap(),
        gamma,
    )
}

fn random_qpair(mg: &MarkovGame, rng: &mut ChaCha8Rng, scale: f64) -> QPair {
    let mut q = QPair::zeros(mg);
    let (a1, a2) = mg.dims();
    for i in Player::BOTH {
        for s in 0..mg.n_states() {
            for m in 0..a1 {
                for n in 0..a2 {
                    q.set(i, s, m, n, scale * rng.random::<f64>());
                }
            }
        }
    }
    q
}

#[test]
fn criterion_1_uniqueness_across_initializations() {
    criterion(1, "uniqueness across initializations", || {
        let cfg = entropy_cfg(2.0, 1.0);
        let mut rng = seeded_rng(101, streams::INSTANCE);
        for (n1, n2) in [(2, 2), (3, 3), (4, 2)] {
            for trial in 0..20 {
                let game = random_game(&mut rng, n1, n2);
                let uniform = SolverOptions {
                    init: InitStrategy::Uniform,
                    ..SolverOptions::default()
                };
                let random_init = SolverOptions {
                    init: InitStrategy::RandomInterior,
                    seed: 1000 + trial,
                    ..SolverOptions::default()
                };
                let a = solve_rqe(&game, &cfg, &uniform).map_err(|e| e.to_string())?;
                let b = solve_rqe(&game, &cfg, &random_init).map_err(|e| e.to_string())?;
                ensure!(a.converged && b.converged, "{n1}x{n2} trial {trial} did not converge");
                let dist = a.z_star.l2_distance(&b.z_star);
                ensure!(
                    dist <= 1e-6,
                    "{n1}x{n2} trial {trial}: initializations disagree by {dist:.3e}"
                );
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_2_lipschitz_bound_on_perturbed_games() {
    criterion(2, "equilibrium Lipschitz bound under payoff perturbation", || {
        let cfg = entropy_cfg(2.0, 1.0);
        let opts = SolverOptions {
            tol: 1e-10,
            ..SolverOptions::default()
        };
        let mut rng = seeded_rng(202, streams::INSTANCE);
        for trial in 0..100 {
            let base = random_game(&mut rng, 2, 2);
            let jitter = |m: &rqe_core::Mat, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
                m.to_rows()
                    .into_iter()
                    .map(|row| {
                        row.into_iter()
                            .map(|v| v + 0.1 * (2.0 * rng.random::<f64>() - 1.0))
                            .collect()
                    })
                    .collect()
            };
            let perturbed = BimatrixGame::from_rows(
                jitter(base.payoff(Player::One), &mut rng),
                jitter(base.payoff(Player::Two), &mut rng),
            )
            .map_err(|e| e.to_string())?;
            match lipschitz_probe(&base, &perturbed, &cfg, &opts).map_err(|e| e.to_string())? {
                LipschitzProbe::Ratio { ratio, .. } => {
                    ensure!(ratio <= 1.0, "trial {trial}: ratio {ratio} exceeds 1");
                }
                LipschitzProbe::Degenerate { distance } => {
                    ensure!(
                        distance <= 1e-8,
                        "trial {trial}: degenerate pair with distance {distance:.3e}"
                    );
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_3_monotonicity_certificate() {
    criterion(3, "monotonicity certificate vs numeric probes", || {
        let zero22 = BimatrixGame::zeros(2, 2).map_err(|e| e.to_string())?;

        // Quadratic regularizers give a constant Jacobian, so the sampled
        // probe must land on the certificate itself.
        for (eps, c) in [(2.0, 1.0), (0.4, 1.0), (1.0, 0.5)] {
            let cfg = quadratic_cfg(eps, c);
            let cert = certify_alpha((2, 2), &cfg).map_err(|e| e.to_string())?;
            let probe = numeric_alpha_probe(&zero22, &cfg, 20, 3).map_err(|e| e.to_string())?;
            ensure!(
                (probe - cert.alpha).abs() <= 1e-6,
                "eps={eps}, c={c}: probe {probe} vs certificate {}",
                cert.alpha
            );
        }

        // Entropy curvature only grows away from uniform: sampled curvature
        // must stay above the certificate.
        let cfg = entropy_cfg(2.0, 1.0);
        let cert = certify_alpha((2, 2), &cfg).map_err(|e| e.to_string())?;
        let probe = numeric_alpha_probe(&zero22, &cfg, 1000, 5).map_err(|e| e.to_string())?;
        ensure!(
            probe >= cert.alpha - 1e-8,
            "entropy probe {probe} fell below certificate {}",
            cert.alpha
        );

        // Definitional strong monotonicity on random strategy pairs.
        let mut rng = seeded_rng(303, streams::PROBE);
        let game = random_game(&mut rng, 2, 2);
        for pair in 0..1000 {
            let draw = |rng: &mut ChaCha8Rng| -> Result<Vec<f64>, String> {
                let mut z = Vec::with_capacity(8);
                for n in [2usize, 2, 2, 2] {
                    z.extend(sample_simplex(rng, n).map_err(|e| e.to_string())?.iter());
                }
                Ok(z)
            };
            let za = draw(&mut rng)?;
            let zb = draw(&mut rng)?;
            let fa = operator_f_stacked(&za, &game, &cfg).map_err(|e| e.to_string())?;
            let fb = operator_f_stacked(&zb, &game, &cfg).map_err(|e| e.to_string())?;
            let mut inner = 0.0;
            let mut dist2 = 0.0;
            for k in 0..za.len() {
                let dz = za[k] - zb[k];
                inner += dz * (fa[k] - fb[k]);
                dist2 += dz * dz;
            }
            ensure!(
                inner >= cert.alpha * dist2 - 1e-9,
                "pair {pair}: <dz, dF> = {inner:.6e} < alpha*|dz|^2 = {:.6e}",
                cert.alpha * dist2
            );
        }
        Ok(())
    });
}

#[test]
fn criterion_4_gradients_match_finite_differences() {
    criterion(4, "analytic gradients vs central differences", || {
        const H: f64 = 1e-6;
        const REL_TOL: f64 = 1e-5;
        let rel_err = |fd: &[f64], an: &[f64]| -> f64 {
            let num: f64 = fd
                .iter()
                .zip(an)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = an.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            num / den
        };
        let mut rng = seeded_rng(404, streams::PROBE);

        for point in 0..20 {
            let pi = sample_simplex(&mut rng, 3).map_err(|e| e.to_string())?.to_vec();
            let p = sample_simplex(&mut rng, 3).map_err(|e| e.to_string())?.to_vec();

            for kind in [RegKind::Entropy, RegKind::LogBarrier, RegKind::Quadratic] {
                let grad = nu_grad_slice(kind, &pi).map_err(|e| e.to_string())?;
                let mut fd = vec![0.0; 3];
                for k in 0..3 {
                    let mut hi = pi.clone();
                    let mut lo = pi.clone();
                    hi[k] += H;
                    lo[k] -= H;
                    fd[k] = (nu_value_slice(kind, &hi).map_err(|e| e.to_string())?
                        - nu_value_slice(kind, &lo).map_err(|e| e.to_string())?)
                        / (2.0 * H);
                }
                let err = rel_err(&fd, &grad);
                ensure!(err <= REL_TOL, "point {point}, {kind:?}: nu grad error {err:.3e}");
            }

            for pen_kind in [PenaltyKind::ScaledSqL2, PenaltyKind::ScaledKl] {
                let pen = RiskPenalty::new(pen_kind, 1.3).map_err(|e| e.to_string())?;
                for side in 0..2 {
                    let grad = if side == 0 {
                        d_grad_p_slice(&pen, &p, &pi).map_err(|e| e.to_string())?
                    } else {
                        d_grad_pi_slice(&pen, &p, &pi).map_err(|e| e.to_string())?
                    };
                    let mut fd = vec![0.0; 3];
                    for k in 0..3 {
                        let (mut p_hi, mut p_lo) = (p.clone(), p.clone());
                        let (mut pi_hi, mut pi_lo) = (pi.clone(), pi.clone());
                        if side == 0 {
                            p_hi[k] += H;
                            p_lo[k] -= H;
                        } else {
                            pi_hi[k] += H;
                            pi_lo[k] -= H;
                        }
                        fd[k] = (d_value_slice(&pen, &p_hi, &pi_hi).map_err(|e| e.to_string())?
                            - d_value_slice(&pen, &p_lo, &pi_lo).map_err(|e| e.to_string())?)
                            / (2.0 * H);
                    }
                    let err = rel_err(&fd, &grad);
                    ensure!(
                        err <= REL_TOL,
                        "point {point}, {pen_kind:?} side {side}: D grad error {err:.3e}"
                    );
                }
            }
        }

        // Operator blocks against differences of the stacked objectives.
        let mut rng = seeded_rng(405, streams::PROBE);
        for cfg in [entropy_cfg(2.0, 1.0), quadratic_cfg(1.5, 0.7)] {
            for point in 0..20 {
                let game = random_game(&mut rng, 2, 2);
                let mut z = Vec::with_capacity(8);
                for n in [2usize, 2, 2, 2] {
                    z.extend(sample_simplex(&mut rng, n).map_err(|e| e.to_string())?.iter());
                }
                let f = operator_f_stacked(&z, &game, &cfg).map_err(|e| e.to_string())?;
                // Block owners of the stacked coordinates: J_1 for pi1, J_2
                // for pi2, then the adversarial objectives -J_1 for p1 and
                // -J_2 for p2 (operator rows are gradients of each block
                // owner's own objective).
                for k in 0..8 {
                    let (owner, sign) = match k {
                        0 | 1 => (Player::One, 1.0),
                        2 | 3 => (Player::Two, 1.0),
                        4 | 5 => (Player::One, -1.0),
                        _ => (Player::Two, -1.0),
                    };
                    let mut hi = z.clone();
                    let mut lo = z.clone();
                    hi[k] += H;
                    lo[k] -= H;
                    let fd = sign
                        * (objective_j_stacked(owner, &hi, &game, &cfg).map_err(|e| e.to_string())?
                            - objective_j_stacked(owner, &lo, &game, &cfg)
                                .map_err(|e| e.to_string())?)
                        / (2.0 * H);
                    let err = (fd - f[k]).abs() / f[k].abs().max(1.0);
                    ensure!(
                        err <= REL_TOL,
                        "point {point}, coord {k}: operator entry error {err:.3e}"
                    );
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_5_inner_sup_closed_forms_beat_grid_search() {
    criterion(5, "closed-form inner maximizers vs grid search", || {
        const STEP: usize = 1000; // 1e-3 grid on the 2-simplex
        let mut rng = seeded_rng(505, streams::INSTANCE);
        for pen_kind in [PenaltyKind::ScaledSqL2, PenaltyKind::ScaledKl] {
            let pen = RiskPenalty::new(pen_kind, 0.8).map_err(|e| e.to_string())?;
            for inst in 0..100 {
                let a: Vec<f64> = (0..3).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
                let pi = sample_simplex(&mut rng, 3).map_err(|e| e.to_string())?;
                let objective = |p: &[f64]| -> Result<f64, String> {
                    let d = d_value_slice(&pen, p, &pi).map_err(|e| e.to_string())?;
                    Ok(-(a[0] * p[0] + a[1] * p[1] + a[2] * p[2]) - d)
                };

                let best = d_inner_argmax(&pen, &a, &pi).map_err(|e| e.to_string())?;
                let val = objective(&best)?;

                let mut grid_best = f64::NEG_INFINITY;
                for i in 0..=STEP {
                    for j in 0..=(STEP - i) {
                        let p = [
                            i as f64 / STEP as f64,
                            j as f64 / STEP as f64,
                            (STEP - i - j) as f64 / STEP as f64,
                        ];
                        let v = objective(&p)?;
                        if v > grid_best {
                            grid_best = v;
                        }
                    }
                }
                ensure!(
                    val >= grid_best - 1e-3,
                    "{pen_kind:?} instance {inst}: closed form {val:.6} vs grid {grid_best:.6}"
                );
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_6_bellman_contraction_factor() {
    criterion(6, "Bellman operator contracts at the certified rate", || {
        let (mg, gamma) = desk_markov_game();
        ensure!(
            (gamma - 0.0811568).abs() < 1e-6,
            "desk-scale discount drifted: {gamma}"
        );
        let kappa = rqe_core::markov_game::contraction_factor(gamma, mg.dims(), mg.cfg())
            .map_err(|e| e.to_string())?
            .ok_or("contraction factor should be certified")?;
        ensure!((kappa - 0.9).abs() <= 1e-12, "kappa {kappa} != 0.9");

        let opts = SolverOptions {
            tol: 1e-11,
            ..SolverOptions::default()
        };
        let mut rng = seeded_rng(606, streams::INSTANCE);
        for pair in 0..50 {
            let qa = random_qpair(&mg, &mut rng, 2.0);
            let qb = random_qpair(&mg, &mut rng, 2.0);
            let ta = bellman_t(&qa, &mg, &opts).map_err(|e| e.to_string())?;
            let tb = bellman_t(&qb, &mg, &opts).map_err(|e| e.to_string())?;
            let num = ta.linf_diff(&tb);
            let den = qa.linf_diff(&qb);
            ensure!(
                num / den <= kappa + 1e-7,
                "pair {pair}: ratio {} exceeds kappa {kappa}",
                num / den
            );
        }
        Ok(())
    });
}

#[test]
fn criterion_7_fixed_point_is_a_markov_rqe() {
    criterion(7, "fixed point passes stage and deviation checks", || {
        let (mg, _) = desk_markov_game();
        let opts = SolverOptions {
            tol: 1e-10,
            ..SolverOptions::default()
        };
        let report = value_iterate(&mg, &opts, 1e-9).map_err(|e| e.to_string())?;
        ensure!(report.converged, "value iteration did not converge");
        ensure!(report.guaranteed, "desk-scale run should be inside the certified regime");

        let tight = SolverOptions {
            tol: 1e-12,
            ..SolverOptions::default()
        };
        let tq = bellman_t(&report.q, &mg, &tight).map_err(|e| e.to_string())?;
        let fixed_gap = tq.linf_diff(&report.q);
        ensure!(fixed_gap <= 1e-8, "|TQ* - Q*| = {fixed_gap:.3e}");

        let extracted = policy_extract(&report.q, &mg, &opts).map_err(|e| e.to_string())?;
        ensure!(
            extracted.flagged.is_empty(),
            "stage solves flagged states {:?}",
            extracted.flagged
        );
        for s in 0..mg.n_states() {
            let game = stage_game(s, &report.q).map_err(|e| e.to_string())?;
            let z = JointStrategy::new(
                extracted.policy.pi(Player::One, s).clone(),
                extracted.policy.pi(Player::Two, s).clone(),
                extracted.beliefs1[s].clone(),
                extracted.beliefs2[s].clone(),
            )
            .map_err(|e| e.to_string())?;
            let check = verify_equilibrium(&z, &game, mg.cfg(), 1e-6).map_err(|e| e.to_string())?;
            ensure!(
                check.verified,
                "state {s}: stage equilibrium check failed with slack {:.3e}",
                check.worst_slack
            );

            // policy_evaluate must reproduce V_i = -RQE_i(Q*(s, .)).
            let eval = policy_evaluate(&extracted.policy, &mg, 1e-10).map_err(|e| e.to_string())?;
            for i in Player::BOTH {
                let target = -objective_j(i, &z, &game, mg.cfg()).map_err(|e| e.to_string())?;
                let got = match i {
                    Player::One => eval.v1[s],
                    Player::Two => eval.v2[s],
                };
                ensure!(
                    (got - target).abs() <= 1e-6,
                    "state {s}, player {:?}: evaluated {got} vs stage value {target}",
                    i
                );
            }
        }

        let verdict = verify_markov_rqe(&extracted.policy, &mg, 20, 707, 1e-10, 1e-6)
            .map_err(|e| e.to_string())?;
        ensure!(
            verdict.violations.is_empty(),
            "{} deviations beat the candidate; max gain {:.3e}",
            verdict.violations.len(),
            verdict.max_gain
        );
        Ok(())
    });
}

#[test]
fn criterion_8_q_learning_tracks_value_iteration() {
    criterion(8, "damped Q-learning tracks the fixed point", || {
        let (mg, _) = desk_markov_game();
        let opts = SolverOptions {
            tol: 1e-10,
            ..SolverOptions::default()
        };
        let vi = value_iterate(&mg, &opts, 1e-10).map_err(|e| e.to_string())?;
        ensure!(vi.converged, "value iteration did not converge");

        let harmonic = q_learning_iterate(&mg, &opts, 500, StepRule::Harmonic, Some(&vi.q))
            .map_err(|e| e.to_string())?;
        let final_dist = *harmonic
            .distances
            .as_ref()
            .and_then(|d| d.last())
            .ok_or("missing distance trace")?;
        ensure!(
            final_dist <= 1e-3,
            "harmonic rule after 500 steps still {final_dist:.3e} from Q*"
        );

        let undamped = q_learning_iterate(&mg, &opts, vi.sweeps, StepRule::Constant(1.0), None)
            .map_err(|e| e.to_string())?;
        let gap = undamped.q.linf_diff(&vi.q);
        ensure!(gap == 0.0, "unit-step iterate differs from value iteration by {gap:.3e}");
        Ok(())
    });
}

#[test]
fn criterion_9_trivial_closed_forms() {
    criterion(9, "zero games and undiscounted games have exact solutions", || {
        for n in [2usize, 3] {
            let cfg = entropy_cfg(2.0, 1.0);
            let game = BimatrixGame::zeros(n, n).map_err(|e| e.to_string())?;
            let report = solve_rqe(&game, &cfg, &SolverOptions::default()).map_err(|e| e.to_string())?;
            ensure!(report.converged, "{n}x{n} zero game did not converge");
            for i in Player::BOTH {
                let pi = match i {
                    Player::One => report.z_star.pi1(),
                    Player::Two => report.z_star.pi2(),
                };
                for &w in pi.iter() {
                    ensure!(
                        (w - 1.0 / n as f64).abs() <= 1e-9,
                        "{n}x{n}: strategy entry {w} is not uniform"
                    );
                }
                let value = objective_j(i, &report.z_star, &game, &cfg).map_err(|e| e.to_string())?;
                let expect = -2.0 * (n as f64).ln();
                ensure!(
                    (value - expect).abs() <= 1e-9,
                    "{n}x{n}: value {value} vs -eps*log|A| = {expect}"
                );
            }
        }

        // gamma = 0: the fixed point is the reward table, reached exactly
        // after a single sweep.
        let (mg0, _) = desk_markov_game();
        let cfg = *mg0.cfg();
        let r1 = (0..2)
            .map(|s| {
                (0..2)
                    .map(|m| (0..2).map(|n| mg0.reward(Player::One, s, m, n)).collect())
                    .collect()
            })
            .collect::<Vec<Vec<Vec<f64>>>>();
        let r2 = (0..2)
            .map(|s| {
                (0..2)
                    .map(|m| (0..2).map(|n| mg0.reward(Player::Two, s, m, n)).collect())
                    .collect()
            })
            .collect::<Vec<Vec<Vec<f64>>>>();
        let p = (0..2)
            .map(|s| {
                (0..2)
                    .map(|m| {
                        (0..2)
                            .map(|n| mg0.transition(s, m, n).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect::<Vec<Vec<Vec<Vec<f64>>>>>();
        let mg = MarkovGame::new(r1, r2, p, 0.0, EnvPenalty::None, cfg).map_err(|e| e.to_string())?;
        let report = value_iterate(&mg, &SolverOptions::default(), 1e-9).map_err(|e| e.to_string())?;
        ensure!(report.converged, "undiscounted run did not converge");
        let gap = report.q.linf_diff(&mg.rewards_as_q());
        ensure!(gap == 0.0, "Q* differs from rewards by {gap:.3e}");
        ensure!(
            report.diffs.len() >= 2 && report.diffs[1] == 0.0,
            "second sweep moved the table: diffs {:?}",
            report.diffs
        );
        Ok(())
    });
}
