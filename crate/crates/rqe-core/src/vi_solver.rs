//! Extragradient solver for the equilibrium variational inequality.
//!
//! The equilibrium is the solution `z*` of `(z − z*)ᵀ F(z*) ≥ 0` for all
//! feasible `z` over the product of δ-floored simplices. The solver runs the
//! extragradient iteration
//!
//! ```text
//! z_{k+½} = Proj(z_k − η F(z_k)),   z_{k+1} = Proj(z_k − η F(z_{k+½}))
//! ```
//!
//! with a backtracking ratio test on η, so no Lipschitz constant of `F` is
//! estimated a priori (under entropy or log-barrier regularizers none is
//! available near the boundary). Progress is measured by the unit-step
//! natural residual `‖z − Proj(z − F(z))‖₂`.

use crate::error::{Error, Result};
use crate::normal_form::{
    certify_alpha, objective_j, operator_f, operator_f_stacked, split_blocks, BimatrixGame,
    JointStrategy, MonotonicityCertificate, Player, RQEConfig,
};
use crate::rng::{seeded_rng, streams};
use crate::simplex::{project_interior, sample_simplex};

/// Acceptance constant of the ratio test `η‖F(w) − F(z)‖ ≤ ρ‖w − z‖`.
const RATIO_SAFETY: f64 = 0.9;
/// Step growth after an accepted iteration.
const STEP_GROWTH: f64 = 1.2;
/// Floor on the step size during backtracking within one iteration.
const MIN_STEP: f64 = 1e-14;
/// Stall detection: over this many iterations ...
const STALL_WINDOW: usize = 200;
/// ... the residual must shrink at least by this factor, else the step cap
/// is halved and iteration continues from the current point.
const STALL_FACTOR: f64 = 0.999;
/// Maximum number of stall-triggered halvings.
const MAX_RESTARTS: usize = 10;

/// How the solver picks its starting point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// All blocks uniform. Deterministic, feasible, symmetric.
    #[default]
    Uniform,
    /// Blocks drawn uniformly from their simplices using the option seed.
    RandomInterior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Natural-residual threshold.
    pub tol: f64,
    /// Initial (and maximal) step size.
    pub step0: f64,
    /// Step shrink factor during backtracking, in (0, 1).
    pub backtrack: f64,
    pub seed: u64,
    pub init: InitStrategy,
    /// Record a per-iteration trace (residual, step, objectives).
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 50_000,
            tol: 1e-8,
            step0: 1.0,
            backtrack: 0.5,
            seed: 0,
            init: InitStrategy::Uniform,
            record_trace: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return Err(Error::Config(format!("step0 must be positive, got {}", self.step0)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!(
                "backtrack must lie in (0, 1), got {}",
                self.backtrack
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of the optional iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub residual: f64,
    pub step: f64,
    pub j1: f64,
    pub j2: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub z_star: JointStrategy,
    /// Natural residual at `z_star`.
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
    /// Monotonicity constant used for guarantees (certified or probed).
    pub alpha_used: f64,
    pub alpha_certified: bool,
    /// Set when `alpha_used <= 0`: no convergence guarantee applies.
    pub monotonicity_warning: bool,
    pub trace: Vec<TraceRow>,
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn project_feasible(
    x: &[f64],
    dims: (usize, usize),
    cfg: &RQEConfig,
) -> Result<Vec<f64>> {
    let (b1, b2, b3, b4) = split_blocks(x, dims);
    let mut out = Vec::with_capacity(x.len());
    for block in [b1, b2, b3, b4] {
        out.extend_from_slice(project_interior(block, cfg.floor())?.weights());
    }
    Ok(out)
}

fn stepped(z: &[f64], eta: f64, f: &[f64]) -> Vec<f64> {
    z.iter().zip(f).map(|(zi, fi)| zi - eta * fi).collect()
}

/// Unit-step natural residual `‖z − Proj(z − F(z))‖₂` of a feasible point.
pub fn natural_residual(z: &JointStrategy, game: &BimatrixGame, cfg: &RQEConfig) -> Result<f64> {
    let stacked = z.to_stacked();
    let f = operator_f_stacked(&stacked, game, cfg)?;
    let proj = project_feasible(&stepped(&stacked, 1.0, &f), game.dims(), cfg)?;
    Ok(l2_diff(&stacked, &proj))
}

/// Solves for the RQE from the configured initialization.
pub fn solve_rqe(game: &BimatrixGame, cfg: &RQEConfig, opts: &SolverOptions) -> Result<SolveReport> {
    let cert = certify_alpha(game.dims(), cfg)?;
    let z0 = initial_point(game.dims(), cfg, opts)?;
    solve_with_certificate(game, cfg, opts, z0, cert)
}

/// Solves for the RQE starting from a caller-supplied warm start.
pub fn solve_rqe_warm(
    game: &BimatrixGame,
    cfg: &RQEConfig,
    opts: &SolverOptions,
    z0: &JointStrategy,
) -> Result<SolveReport> {
    if z0.dims() != game.dims() {
        return Err(Error::Dimension(format!(
            "warm start dims {:?} do not match game dims {:?}",
            z0.dims(),
            game.dims()
        )));
    }
    let cert = certify_alpha(game.dims(), cfg)?;
    solve_with_certificate(game, cfg, opts, z0.to_stacked(), cert)
}

fn initial_point(dims: (usize, usize), cfg: &RQEConfig, opts: &SolverOptions) -> Result<Vec<f64>> {
    let (n1, n2) = dims;
    match opts.init {
        InitStrategy::Uniform => Ok(JointStrategy::uniform(n1, n2)?.to_stacked()),
        InitStrategy::RandomInterior => {
            let mut rng = seeded_rng(opts.seed, streams::INIT);
            let mut z = Vec::with_capacity(2 * (n1 + n2));
            for n in [n1, n2, n2, n1] {
                let raw = sample_simplex(&mut rng, n)?;
                z.extend_from_slice(project_interior(raw.weights(), cfg.floor())?.weights());
            }
            Ok(z)
        }
    }
}

/// Core extragradient loop. The certificate is passed in so batched callers
/// (Bellman sweeps solve one stage game per state) compute it once; it
/// depends only on the configuration, never on payoffs.
pub(crate) fn solve_with_certificate(
    game: &BimatrixGame,
    cfg: &RQEConfig,
    opts: &SolverOptions,
    z0: Vec<f64>,
    cert: MonotonicityCertificate,
) -> Result<SolveReport> {
    opts.validate()?;
    let dims = game.dims();
    let mut z = project_feasible(&z0, dims, cfg)?;
    let mut eta = opts.step0;
    let mut eta_cap = opts.step0;
    let mut restarts = 0usize;
    let mut window_anchor = f64::INFINITY;
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iters = opts.max_iters;

    for k in 0..opts.max_iters {
        let fz = operator_f_stacked(&z, game, cfg)?;
        let unit_proj = project_feasible(&stepped(&z, 1.0, &fz), dims, cfg)?;
        residual = l2_diff(&z, &unit_proj);

        if opts.record_trace {
            let js = JointStrategy::from_stacked_projected(&z, dims);
            trace.push(TraceRow {
                iter: k,
                residual,
                step: eta,
                j1: objective_j(Player::One, &js, game, cfg)?,
                j2: objective_j(Player::Two, &js, game, cfg)?,
            });
        }

        if residual <= opts.tol {
            converged = true;
            iters = k;
            break;
        }

        if k % STALL_WINDOW == 0 {
            if residual > STALL_FACTOR * window_anchor && restarts < MAX_RESTARTS {
                eta_cap *= 0.5;
                eta = eta.min(eta_cap);
                restarts += 1;
            }
            window_anchor = residual;
        }

        loop {
            let mid = project_feasible(&stepped(&z, eta, &fz), dims, cfg)?;
            let f_mid = operator_f_stacked(&mid, game, cfg)?;
            let dz = l2_diff(&mid, &z);
            let df = l2_diff(&f_mid, &fz);
            if eta * df <= RATIO_SAFETY * dz || dz == 0.0 || eta <= MIN_STEP {
                z = project_feasible(&stepped(&z, eta, &f_mid), dims, cfg)?;
                break;
            }
            eta *= opts.backtrack;
        }
        eta = (eta * STEP_GROWTH).min(eta_cap);
    }

    if !converged {
        let fz = operator_f_stacked(&z, game, cfg)?;
        let unit_proj = project_feasible(&stepped(&z, 1.0, &fz), dims, cfg)?;
        residual = l2_diff(&z, &unit_proj);
        converged = residual <= opts.tol;
    }

    Ok(SolveReport {
        z_star: JointStrategy::from_stacked_projected(&z, dims),
        residual,
        iters,
        converged,
        alpha_used: cert.alpha,
        alpha_certified: cert.certified,
        monotonicity_warning: cert.alpha <= 0.0,
        trace,
    })
}

/// Result of checking the equilibrium inequality at a candidate point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumCheck {
    pub verified: bool,
    /// Most negative block slack (0 would be a perfect equilibrium).
    pub worst_slack: f64,
    /// Slack per block in stacked order (π1, π2, p1, p2).
    pub block_slacks: [f64; 4],
}

/// Verifies the variational inequality `(z − z*)ᵀ F(z*) ≥ 0` for all
/// feasible `z`. The expression is linear in `z` over a product of
/// simplices, so it suffices that within every block the cheapest vertex is
/// no better than the current mixture:
/// `min_a [F_b(z*)]_a ≥ [F_b(z*)]ᵀ z*_b − tol`.
pub fn verify_equilibrium(
    z: &JointStrategy,
    game: &BimatrixGame,
    cfg: &RQEConfig,
    tol: f64,
) -> Result<EquilibriumCheck> {
    let f = operator_f(z, game, cfg)?;
    let (fb1, fb2, fb3, fb4) = split_blocks(&f, game.dims());
    let blocks: [(&[f64], &[f64]); 4] = [
        (fb1, z.pi1().weights()),
        (fb2, z.pi2().weights()),
        (fb3, z.p1().weights()),
        (fb4, z.p2().weights()),
    ];
    let mut slacks = [0.0; 4];
    for (b, (fb, zb)) in blocks.iter().enumerate() {
        let min = fb.iter().cloned().fold(f64::INFINITY, f64::min);
        let dot: f64 = fb.iter().zip(*zb).map(|(x, y)| x * y).sum();
        slacks[b] = min - dot;
    }
    let worst = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(EquilibriumCheck {
        verified: worst >= -tol,
        worst_slack: worst,
        block_slacks: slacks,
    })
}

/// Outcome of one payoff-sensitivity probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LipschitzProbe {
    /// The two games have identical payoffs; the ratio is undefined. Carries
    /// the observed equilibrium distance, which should be solver noise.
    Degenerate { distance: f64 },
    Ratio {
        /// `‖R − R′‖_∞`, max absolute entry difference over both matrices.
        payoff_diff: f64,
        /// `‖z* − z†‖₂`.
        distance: f64,
        /// Theoretical bound `2(√|A1| + √|A2|)·payoff_diff / α`.
        bound: f64,
        /// `distance / bound`; at most 1 when the bound holds.
        ratio: f64,
    },
}

/// Solves both games and compares the equilibrium displacement against the
/// sensitivity bound `‖z* − z†‖₂ ≤ 2(√|A1| + √|A2|)·‖R − R′‖_∞ / α`.
/// Requires a certified configuration, since the bound consumes α.
pub fn lipschitz_probe(
    game_a: &BimatrixGame,
    game_b: &BimatrixGame,
    cfg: &RQEConfig,
    opts: &SolverOptions,
) -> Result<LipschitzProbe> {
    if game_a.dims() != game_b.dims() {
        return Err(Error::Dimension(format!(
            "games have different dims: {:?} vs {:?}",
            game_a.dims(),
            game_b.dims()
        )));
    }
    let cert = certify_alpha(game_a.dims(), cfg)?;
    if !cert.certified {
        return Err(Error::Config(
            "payoff sensitivity bound needs a certified monotonicity constant".into(),
        ));
    }
    let ra = solve_rqe(game_a, cfg, opts)?;
    let rb = solve_rqe(game_b, cfg, opts)?;
    for (name, rep) in [("first", &ra), ("second", &rb)] {
        if !rep.converged {
            return Err(Error::Contract(format!(
                "{name} game did not converge (residual {:.3e})",
                rep.residual
            )));
        }
    }
    let distance = ra.z_star.l2_distance(&rb.z_star);
    let payoff_diff = game_a.max_abs_diff(game_b)?;
    if payoff_diff == 0.0 {
        return Ok(LipschitzProbe::Degenerate { distance });
    }
    let (n1, n2) = game_a.dims();
    let bound = 2.0 * ((n1 as f64).sqrt() + (n2 as f64).sqrt()) * payoff_diff / cert.alpha;
    Ok(LipschitzProbe::Ratio {
        payoff_diff,
        distance,
        bound,
        ratio: distance / bound,
    })
}
