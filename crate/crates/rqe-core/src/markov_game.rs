//! Discounted infinite-horizon Markov games with risk-averse
//! quantal-response stage behavior.
//!
//! The Bellman operator treats each state's Q-values as a bimatrix stage
//! game, solves that stage game's RQE, and backs the resulting state values
//! up through the transition kernel (optionally through an entropic penalty
//! that hedges against the kernel itself):
//!
//! ```text
//! (TQ)_i(s,a) = r_i(s,a) + γ · inf_P̃ { E_P̃[v_i] + D_env(P̃, P(·|s,a)) }
//! v_i(s′)     = −RQE_i(Q(s′,·))
//! ```
//!
//! Below the threshold [`gamma_max`] the operator is a sup-norm contraction,
//! so value iteration and the damped Q-learning update both converge to the
//! unique fixed point, from which [`policy_extract`] reads off the
//! stationary Markov RQE.

use crate::error::{Error, Result};
use crate::normal_form::{
    certify_alpha, f_value, objective_j, BimatrixGame, JointStrategy, MonotonicityCertificate,
    Player, RQEConfig,
};
use crate::regularizers::{d_lipschitz_second, EnvPenalty, RegKind};
use crate::rng::{seeded_rng, streams};
use crate::simplex::{sample_simplex, SimplexVec};
use crate::vi_solver::{solve_with_certificate, InitStrategy, SolverOptions};

/// Cap on outer sweeps for the iterative drivers.
const MAX_SWEEPS: usize = 10_000;

/// A two-player discounted Markov game. Rewards live in `[0, 1]`; the
/// transition table maps every `(s, a1, a2)` to a distribution over states.
#[derive(Debug, Clone)]
pub struct MarkovGame {
    n_states: usize,
    a1: usize,
    a2: usize,
    r1: Vec<f64>,
    r2: Vec<f64>,
    p: Vec<SimplexVec>,
    gamma: f64,
    env: EnvPenalty,
    cfg: RQEConfig,
}

impl MarkovGame {
    pub fn new(
        r1: Vec<Vec<Vec<f64>>>,
        r2: Vec<Vec<Vec<f64>>>,
        p: Vec<Vec<Vec<Vec<f64>>>>,
        gamma: f64,
        env: EnvPenalty,
        cfg: RQEConfig,
    ) -> Result<Self> {
        let n_states = r1.len();
        if n_states == 0 {
            return Err(Error::Dimension("Markov game needs at least one state".into()));
        }
        let a1 = r1[0].len();
        let a2 = if a1 > 0 { r1[0][0].len() } else { 0 };
        if a1 == 0 || a2 == 0 {
            return Err(Error::Dimension("action counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!(
                "discount must satisfy 0 <= gamma < 1, got {gamma}"
            )));
        }
        env.validate()?;
        cfg.floor().check_dim(a1)?;
        cfg.floor().check_dim(a2)?;

        let flatten = |name: &str, table: &[Vec<Vec<f64>>]| -> Result<Vec<f64>> {
            if table.len() != n_states {
                return Err(Error::Dimension(format!(
                    "{name} covers {} states, expected {n_states}",
                    table.len()
                )));
            }
            let mut flat = Vec::with_capacity(n_states * a1 * a2);
            for (s, per_state) in table.iter().enumerate() {
                if per_state.len() != a1 {
                    return Err(Error::Dimension(format!(
                        "{name}[{s}] has {} rows, expected {a1}",
                        per_state.len()
                    )));
                }
                for (m, row) in per_state.iter().enumerate() {
                    if row.len() != a2 {
                        return Err(Error::Dimension(format!(
                            "{name}[{s}][{m}] has {} entries, expected {a2}",
                            row.len()
                        )));
                    }
                    for (n, &v) in row.iter().enumerate() {
                        if !(0.0..=1.0).contains(&v) {
                            return Err(Error::Domain(format!(
                                "{name}[{s}][{m}][{n}] = {v} outside [0, 1]"
                            )));
                        }
                        flat.push(v);
                    }
                }
            }
            Ok(flat)
        };
        let r1 = flatten("r1", &r1)?;
        let r2 = flatten("r2", &r2)?;

        if p.len() != n_states {
            return Err(Error::Dimension(format!(
                "P covers {} states, expected {n_states}",
                p.len()
            )));
        }
        let mut rows = Vec::with_capacity(n_states * a1 * a2);
        for (s, per_state) in p.into_iter().enumerate() {
            if per_state.len() != a1 {
                return Err(Error::Dimension(format!("P[{s}] has {} rows, expected {a1}", per_state.len())));
            }
            for (m, per_a1) in per_state.into_iter().enumerate() {
                if per_a1.len() != a2 {
                    return Err(Error::Dimension(format!(
                        "P[{s}][{m}] has {} entries, expected {a2}",
                        per_a1.len()
                    )));
                }
                for (n, dist) in per_a1.into_iter().enumerate() {
                    if dist.len() != n_states {
                        return Err(Error::Dimension(format!(
                            "P[{s}][{m}][{n}] targets {} states, expected {n_states}",
                            dist.len()
                        )));
                    }
                    rows.push(SimplexVec::new(dist).map_err(|e| {
                        Error::Domain(format!("P[{s}][{m}][{n}] is not a distribution: {e}"))
                    })?);
                }
            }
        }

        Ok(MarkovGame {
            n_states,
            a1,
            a2,
            r1,
            r2,
            p: rows,
            gamma,
            env,
            cfg,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Action counts `(|A1|, |A2|)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.a1, self.a2)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn env(&self) -> &EnvPenalty {
        &self.env
    }

    pub fn cfg(&self) -> &RQEConfig {
        &self.cfg
    }

    fn idx(&self, s: usize, m: usize, n: usize) -> usize {
        (s * self.a1 + m) * self.a2 + n
    }

    pub fn reward(&self, i: Player, s: usize, m: usize, n: usize) -> f64 {
        match i {
            Player::One => self.r1[self.idx(s, m, n)],
            Player::Two => self.r2[self.idx(s, m, n)],
        }
    }

    pub fn transition(&self, s: usize, m: usize, n: usize) -> &SimplexVec {
        &self.p[self.idx(s, m, n)]
    }

    /// The reward tables as a [`QPair`] (the γ = 0 fixed point).
    pub fn rewards_as_q(&self) -> QPair {
        QPair {
            n_states: self.n_states,
            a1: self.a1,
            a2: self.a2,
            q1: self.r1.clone(),
            q2: self.r2.clone(),
        }
    }
}

/// Q tables for both players, indexed `(s, a1, a2)` in each player's own
/// numbering of the joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct QPair {
    n_states: usize,
    a1: usize,
    a2: usize,
    q1: Vec<f64>,
    q2: Vec<f64>,
}

impl QPair {
    pub fn zeros(mg: &MarkovGame) -> Self {
        let len = mg.n_states * mg.a1 * mg.a2;
        QPair {
            n_states: mg.n_states,
            a1: mg.a1,
            a2: mg.a2,
            q1: vec![0.0; len],
            q2: vec![0.0; len],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Action counts `(|A1|, |A2|)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.a1, self.a2)
    }

    fn idx(&self, s: usize, m: usize, n: usize) -> usize {
        (s * self.a1 + m) * self.a2 + n
    }

    pub fn get(&self, i: Player, s: usize, m: usize, n: usize) -> f64 {
        let k = self.idx(s, m, n);
        match i {
            Player::One => self.q1[k],
            Player::Two => self.q2[k],
        }
    }

    pub fn set(&mut self, i: Player, s: usize, m: usize, n: usize, v: f64) {
        let k = self.idx(s, m, n);
        match i {
            Player::One => self.q1[k] = v,
            Player::Two => self.q2[k] = v,
        }
    }

    /// Sup-norm distance across both tables.
    pub fn linf_diff(&self, other: &QPair) -> f64 {
        assert_eq!(
            (self.n_states, self.a1, self.a2),
            (other.n_states, other.a1, other.a2),
            "QPair shapes differ"
        );
        let d1 = self
            .q1
            .iter()
            .zip(&other.q1)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let d2 = self
            .q2
            .iter()
            .zip(&other.q2)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        d1.max(d2)
    }

    pub fn max_abs(&self) -> f64 {
        self.q1
            .iter()
            .chain(&self.q2)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Nested `[S][A1][A2]` rows of one player's table, for serialization.
    pub fn to_table(&self, i: Player) -> Vec<Vec<Vec<f64>>> {
        let q = match i {
            Player::One => &self.q1,
            Player::Two => &self.q2,
        };
        (0..self.n_states)
            .map(|s| {
                (0..self.a1)
                    .map(|m| (0..self.a2).map(|n| q[self.idx(s, m, n)]).collect())
                    .collect()
            })
            .collect()
    }

    /// Builds a pair from nested `[S][A1][A2]` tables.
    pub fn from_tables(q1: Vec<Vec<Vec<f64>>>, q2: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_states = q1.len();
        if n_states == 0 || q1[0].is_empty() || q1[0][0].is_empty() {
            return Err(Error::Dimension("Q tables must be nonempty".into()));
        }
        let a1 = q1[0].len();
        let a2 = q1[0][0].len();
        let flatten = |t: Vec<Vec<Vec<f64>>>| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n_states * a1 * a2);
            if t.len() != n_states {
                return Err(Error::Dimension("Q tables have different state counts".into()));
            }
            for per_state in t {
                if per_state.len() != a1 {
                    return Err(Error::Dimension("ragged Q table".into()));
                }
                for row in per_state {
                    if row.len() != a2 {
                        return Err(Error::Dimension("ragged Q table".into()));
                    }
                    for v in row {
                        if !v.is_finite() {
                            return Err(Error::Domain(format!("non-finite Q entry {v}")));
                        }
                        out.push(v);
                    }
                }
            }
            Ok(out)
        };
        Ok(QPair {
            n_states,
            a1,
            a2,
            q1: flatten(q1)?,
            q2: flatten(q2)?,
        })
    }
}

/// The bimatrix stage game seen at state `s`: `R1[m][n] = Q1(s, a1=m,
/// a2=n)` and, in the owner-row convention, `R2[m][n] = Q2(s, a1=n, a2=m)`.
pub fn stage_game(s: usize, q: &QPair) -> Result<BimatrixGame> {
    if s >= q.n_states {
        return Err(Error::Dimension(format!(
            "state {s} out of range (n_states = {})",
            q.n_states
        )));
    }
    let r1 = (0..q.a1)
        .map(|m| (0..q.a2).map(|n| q.get(Player::One, s, m, n)).collect())
        .collect();
    let r2 = (0..q.a2)
        .map(|m| (0..q.a1).map(|n| q.get(Player::Two, s, n, m)).collect())
        .collect();
    BimatrixGame::from_rows(r1, r2)
}

/// The robust expectation `inf_P̃ { E_P̃[v] + D_env(P̃, Ps) }`: the plain
/// expectation under the hard kernel constraint, or the entropic closed form
/// `−(1/β)·log Σ Ps(s′)·exp(−β·v(s′))` under the KL-scaled penalty,
/// evaluated with a max shift so large `β·v` cannot overflow.
pub fn robust_backup(v: &[f64], ps: &SimplexVec, env: &EnvPenalty) -> Result<f64> {
    if v.len() != ps.len() {
        return Err(Error::Dimension(format!(
            "value vector covers {} states, kernel row covers {}",
            v.len(),
            ps.len()
        )));
    }
    match env {
        EnvPenalty::None => Ok(v.iter().zip(ps.iter()).map(|(a, b)| a * b).sum()),
        EnvPenalty::Entropic { beta } => {
            let shift = v
                .iter()
                .map(|&x| -beta * x)
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = v
                .iter()
                .zip(ps.iter())
                .map(|(&x, &w)| w * (-beta * x - shift).exp())
                .sum();
            Ok(-(shift + sum.ln()) / beta)
        }
    }
}

/// Per-state equilibrium values produced by one stage sweep.
struct StageValues {
    v1: Vec<f64>,
    v2: Vec<f64>,
}

/// Solves every state's stage game within one Bellman application, caching
/// each state's equilibrium as the warm start for the next sweep (adjacent
/// sweeps have nearby stage payoffs, hence nearby equilibria).
struct StageSweeper<'a> {
    mg: &'a MarkovGame,
    opts: SolverOptions,
    cert: MonotonicityCertificate,
    warm: Vec<Option<JointStrategy>>,
}

impl<'a> StageSweeper<'a> {
    fn new(mg: &'a MarkovGame, stage_opts: SolverOptions) -> Result<Self> {
        // The certificate depends only on the configuration, never on the
        // stage payoffs, so one computation serves every state and sweep.
        let cert = certify_alpha(mg.dims(), mg.cfg())?;
        Ok(StageSweeper {
            mg,
            opts: stage_opts,
            cert,
            warm: vec![None; mg.n_states()],
        })
    }

    fn stage_values(&mut self, q: &QPair) -> Result<StageValues> {
        let n = self.mg.n_states();
        let mut v1 = Vec::with_capacity(n);
        let mut v2 = Vec::with_capacity(n);
        for s in 0..n {
            let game = stage_game(s, q)?;
            let z0 = match &self.warm[s] {
                Some(z) => z.to_stacked(),
                None => {
                    let (n1, n2) = game.dims();
                    JointStrategy::uniform(n1, n2)?.to_stacked()
                }
            };
            let report = solve_with_certificate(&game, self.mg.cfg(), &self.opts, z0, self.cert)?;
            if !report.converged {
                return Err(Error::StageSolve {
                    state: s,
                    residual: report.residual,
                    iters: report.iters,
                });
            }
            v1.push(-objective_j(Player::One, &report.z_star, &game, self.mg.cfg())?);
            v2.push(-objective_j(Player::Two, &report.z_star, &game, self.mg.cfg())?);
            self.warm[s] = Some(report.z_star);
        }
        Ok(StageValues { v1, v2 })
    }

    fn apply(&mut self, q: &QPair) -> Result<QPair> {
        let mut out = q.clone();
        if self.mg.gamma() == 0.0 {
            out.q1.copy_from_slice(&self.mg.r1);
            out.q2.copy_from_slice(&self.mg.r2);
            return Ok(out);
        }
        let values = self.stage_values(q)?;
        let gamma = self.mg.gamma();
        for s in 0..self.mg.n_states() {
            for m in 0..self.mg.a1 {
                for n in 0..self.mg.a2 {
                    let ps = self.mg.transition(s, m, n);
                    let b1 = robust_backup(&values.v1, ps, self.mg.env())?;
                    let b2 = robust_backup(&values.v2, ps, self.mg.env())?;
                    out.set(
                        Player::One,
                        s,
                        m,
                        n,
                        self.mg.reward(Player::One, s, m, n) + gamma * b1,
                    );
                    out.set(
                        Player::Two,
                        s,
                        m,
                        n,
                        self.mg.reward(Player::Two, s, m, n) + gamma * b2,
                    );
                }
            }
        }
        Ok(out)
    }
}

/// One application of the Bellman operator with a fresh solver state.
pub fn bellman_t(q: &QPair, mg: &MarkovGame, opts: &SolverOptions) -> Result<QPair> {
    StageSweeper::new(mg, *opts)?.apply(q)
}

/// The discount threshold formula `α / (α + 2L(√|A1| + √|A2|))`.
pub fn gamma_threshold(alpha: f64, l: f64, dims: (usize, usize)) -> f64 {
    let (n1, n2) = dims;
    alpha / (alpha + 2.0 * l * ((n1 as f64).sqrt() + (n2 as f64).sqrt()))
}

/// A discount threshold that is only available for certified configurations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaBound {
    /// Discounts at or below this value make the Bellman operator a
    /// contraction.
    Certified(f64),
    /// No certified monotonicity or Lipschitz constant for this
    /// configuration.
    Uncertified,
}

impl GammaBound {
    pub fn value(self) -> Option<f64> {
        match self {
            GammaBound::Certified(v) => Some(v),
            GammaBound::Uncertified => None,
        }
    }
}

/// Largest certified penalty Lipschitz constant across both players, if any.
fn certified_l(dims: (usize, usize), cfg: &RQEConfig) -> Option<f64> {
    let (n1, n2) = dims;
    let mut l: f64 = 0.0;
    for (i, n) in [(Player::One, n2), (Player::Two, n1)] {
        l = l.max(d_lipschitz_second(cfg.pen(i), n).value()?);
    }
    Some(l)
}

/// Certified contraction threshold for the discount factor.
pub fn gamma_max(dims: (usize, usize), cfg: &RQEConfig) -> Result<GammaBound> {
    let Some(l) = certified_l(dims, cfg) else {
        return Ok(GammaBound::Uncertified);
    };
    let cert = certify_alpha(dims, cfg)?;
    if !cert.certified {
        return Ok(GammaBound::Uncertified);
    }
    Ok(GammaBound::Certified(gamma_threshold(cert.alpha, l, dims)))
}

/// Certified sup-norm contraction factor `γ(1 + 2L(√|A1| + √|A2|)/α)` of the
/// Bellman operator at discount `gamma`, when the constants exist.
pub fn contraction_factor(gamma: f64, dims: (usize, usize), cfg: &RQEConfig) -> Result<Option<f64>> {
    let Some(l) = certified_l(dims, cfg) else {
        return Ok(None);
    };
    let cert = certify_alpha(dims, cfg)?;
    if !cert.certified {
        return Ok(None);
    }
    let (n1, n2) = dims;
    Ok(Some(
        gamma * (1.0 + 2.0 * l * ((n1 as f64).sqrt() + (n2 as f64).sqrt()) / cert.alpha),
    ))
}

/// Crude upper bound on `‖Q*‖_∞`: rewards plus the largest regularizer and
/// penalty offsets, geometrically accumulated. Only a divergence alarm, not
/// a tight constraint; infinite (alarm disabled) when an offset is unbounded
/// for the configured kinds.
fn q_divergence_bound(mg: &MarkovGame) -> f64 {
    let (n1, n2) = mg.dims();
    let delta = mg.cfg().floor().delta();
    let mut offset: f64 = 0.0;
    for (i, n) in [(Player::One, n1), (Player::Two, n2)] {
        let reg = mg.cfg().reg(i);
        let span = match reg.kind() {
            RegKind::Entropy => (n as f64).ln(),
            RegKind::Quadratic => 0.5,
            RegKind::LogBarrier => {
                if delta > 0.0 {
                    n as f64 * (1.0 / delta).ln()
                } else {
                    f64::INFINITY
                }
            }
        };
        offset = offset.max(reg.eps() * span);
        let pen = mg.cfg().pen(i);
        let d_span = match pen.kind() {
            crate::regularizers::PenaltyKind::ScaledSqL2 => pen.scale(),
            crate::regularizers::PenaltyKind::ScaledKl => {
                if delta > 0.0 {
                    (1.0 / delta).ln() / pen.scale()
                } else {
                    f64::INFINITY
                }
            }
        };
        offset = offset.max(d_span);
    }
    (1.0 + offset) / (1.0 - mg.gamma())
}

/// Derives the per-state stage solver options from the outer tolerance, so
/// accumulated stage error stays an order of magnitude below the outer
/// stopping test.
fn stage_options(mg: &MarkovGame, opts: &SolverOptions, outer_tol: f64) -> SolverOptions {
    let stage_tol = if mg.gamma() > 0.0 {
        outer_tol / (10.0 * mg.gamma() * mg.n_states() as f64)
    } else {
        outer_tol
    };
    SolverOptions {
        tol: stage_tol,
        init: InitStrategy::Uniform,
        record_trace: false,
        ..*opts
    }
}

#[derive(Debug, Clone)]
pub struct ValueIterationReport {
    /// The final iterate `T Q_last` (the reported fixed-point approximation).
    pub q: QPair,
    /// Number of Bellman applications performed.
    pub sweeps: usize,
    pub converged: bool,
    /// `‖ΔQ‖_∞` of the last sweep.
    pub final_diff: f64,
    /// `‖ΔQ‖_∞` after each sweep.
    pub diffs: Vec<f64>,
    /// Empirical contraction ratios `diffs[k+1] / diffs[k]`.
    pub ratios: Vec<f64>,
    /// Certified discount threshold, when one exists.
    pub gamma_threshold: Option<f64>,
    /// True when `gamma <= gamma_threshold`: convergence is guaranteed.
    pub guaranteed: bool,
    /// Set when the iterate escaped the coarse magnitude bound.
    pub divergence_alarm: bool,
}

/// Iterates `Q ← TQ` from `Q = 0` until `‖TQ − Q‖_∞ ≤ q_tol`.
pub fn value_iterate(mg: &MarkovGame, opts: &SolverOptions, q_tol: f64) -> Result<ValueIterationReport> {
    let zeros = QPair::zeros(mg);
    value_iterate_from(mg, opts, q_tol, zeros)
}

/// Value iteration from a caller-chosen starting table.
pub fn value_iterate_from(
    mg: &MarkovGame,
    opts: &SolverOptions,
    q_tol: f64,
    q0: QPair,
) -> Result<ValueIterationReport> {
    if !(q_tol > 0.0 && q_tol.is_finite()) {
        return Err(Error::Config(format!("q_tol must be positive, got {q_tol}")));
    }
    let stage_opts = stage_options(mg, opts, q_tol);
    let mut sweeper = StageSweeper::new(mg, stage_opts)?;
    let threshold = gamma_max(mg.dims(), mg.cfg())?.value();
    let guaranteed = threshold.is_some_and(|t| mg.gamma() <= t);
    let alarm_bound = q_divergence_bound(mg);

    let mut q = q0;
    let mut diffs = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let next = sweeper.apply(&q)?;
        sweeps += 1;
        let diff = next.linf_diff(&q);
        diffs.push(diff);
        q = next;
        if diff <= q_tol {
            converged = true;
            break;
        }
    }
    let ratios = diffs
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect();
    Ok(ValueIterationReport {
        final_diff: diffs.last().copied().unwrap_or(0.0),
        divergence_alarm: q.max_abs() > alarm_bound,
        q,
        sweeps,
        converged,
        diffs,
        ratios,
        gamma_threshold: threshold,
        guaranteed,
    })
}

/// Step-size schedules for the damped Q-learning update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `α_t = 1/(1+t)`.
    Harmonic,
    /// `α_t = a/(b+t)` with `a > 0`, `b ≥ a` (so `α_0 ≤ 1`).
    Scaled { a: f64, b: f64 },
    /// `α_t ≡ a` for `a ∈ (0, 1]`. `a = 1` disables damping and reproduces
    /// value iteration exactly; constants violate square-summability and are
    /// meant for testing.
    Constant(f64),
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Harmonic => Ok(()),
            StepRule::Scaled { a, b } => {
                if a > 0.0 && a.is_finite() && b >= a && b.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "scaled step rule needs a > 0 and b >= a, got a = {a}, b = {b}"
                    )))
                }
            }
            StepRule::Constant(a) => {
                if a > 0.0 && a <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "constant step size must lie in (0, 1], got {a}"
                    )))
                }
            }
        }
    }

    pub fn alpha(&self, t: usize) -> f64 {
        match *self {
            StepRule::Harmonic => 1.0 / (1.0 + t as f64),
            StepRule::Scaled { a, b } => a / (b + t as f64),
            StepRule::Constant(a) => a,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QLearningReport {
    pub q: QPair,
    pub steps: usize,
    /// `‖Q_{t+1} − Q_t‖_∞` per step.
    pub diffs: Vec<f64>,
    /// `‖Q_t − reference‖_∞` after each step, when a reference was supplied.
    pub distances: Option<Vec<f64>>,
}

/// The damped iteration `Q_{t+1} = (1 − α_t) Q_t + α_t T Q_t` from `Q_0 = 0`
/// for a fixed number of exact Bellman applications. Stage solves reuse the
/// same warm-started sweeper as value iteration, with the stage tolerance
/// derived from `opts.tol`.
pub fn q_learning_iterate(
    mg: &MarkovGame,
    opts: &SolverOptions,
    steps: usize,
    rule: StepRule,
    reference: Option<&QPair>,
) -> Result<QLearningReport> {
    rule.validate()?;
    if steps == 0 {
        return Err(Error::Config("q-learning needs at least one step".into()));
    }
    let stage_opts = stage_options(mg, opts, opts.tol);
    let mut sweeper = StageSweeper::new(mg, stage_opts)?;
    let mut q = QPair::zeros(mg);
    let mut diffs = Vec::with_capacity(steps);
    let mut distances = reference.map(|_| Vec::with_capacity(steps));
    for t in 0..steps {
        let tq = sweeper.apply(&q)?;
        let alpha = rule.alpha(t);
        diffs.push(alpha * q.linf_diff(&tq));
        for (cur, new) in q.q1.iter_mut().zip(&tq.q1) {
            *cur = (1.0 - alpha) * *cur + alpha * new;
        }
        for (cur, new) in q.q2.iter_mut().zip(&tq.q2) {
            *cur = (1.0 - alpha) * *cur + alpha * new;
        }
        if let (Some(d), Some(r)) = (&mut distances, reference) {
            d.push(q.linf_diff(r));
        }
    }
    Ok(QLearningReport {
        q,
        steps,
        diffs,
        distances,
    })
}

/// Stationary Markov policies: one mixed strategy per state per player.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPolicy {
    pi1: Vec<SimplexVec>,
    pi2: Vec<SimplexVec>,
}

impl MarkovPolicy {
    pub fn new(pi1: Vec<SimplexVec>, pi2: Vec<SimplexVec>) -> Result<Self> {
        if pi1.len() != pi2.len() || pi1.is_empty() {
            return Err(Error::Dimension(
                "policies must cover the same nonempty state set".into(),
            ));
        }
        for rows in [&pi1, &pi2] {
            if rows.iter().any(|r| r.len() != rows[0].len()) {
                return Err(Error::Dimension("policy rows have inconsistent lengths".into()));
            }
        }
        Ok(MarkovPolicy { pi1, pi2 })
    }

    pub fn n_states(&self) -> usize {
        self.pi1.len()
    }

    pub fn pi(&self, i: Player, s: usize) -> &SimplexVec {
        match i {
            Player::One => &self.pi1[s],
            Player::Two => &self.pi2[s],
        }
    }

    pub fn rows(&self, i: Player) -> &[SimplexVec] {
        match i {
            Player::One => &self.pi1,
            Player::Two => &self.pi2,
        }
    }

    /// Replaces one player's rows, keeping the other fixed.
    pub fn with_player(&self, i: Player, rows: Vec<SimplexVec>) -> Result<Self> {
        match i {
            Player::One => MarkovPolicy::new(rows, self.pi2.clone()),
            Player::Two => MarkovPolicy::new(self.pi1.clone(), rows),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtractedPolicy {
    pub policy: MarkovPolicy,
    /// Player 1's adversarial belief about player 2, per state.
    pub beliefs1: Vec<SimplexVec>,
    /// Player 2's adversarial belief about player 1, per state.
    pub beliefs2: Vec<SimplexVec>,
    /// Stage solve residual per state.
    pub residuals: Vec<f64>,
    /// States whose stage solve missed the tolerance.
    pub flagged: Vec<usize>,
}

/// Reads the stationary Markov RQE off a (near-)fixed-point `Q`: each
/// state's policy is the unique equilibrium of its stage game.
pub fn policy_extract(q: &QPair, mg: &MarkovGame, opts: &SolverOptions) -> Result<ExtractedPolicy> {
    let cert = certify_alpha(mg.dims(), mg.cfg())?;
    let (n1, n2) = mg.dims();
    let mut pi1 = Vec::with_capacity(mg.n_states());
    let mut pi2 = Vec::with_capacity(mg.n_states());
    let mut beliefs1 = Vec::with_capacity(mg.n_states());
    let mut beliefs2 = Vec::with_capacity(mg.n_states());
    let mut residuals = Vec::with_capacity(mg.n_states());
    let mut flagged = Vec::new();
    for s in 0..mg.n_states() {
        let game = stage_game(s, q)?;
        let z0 = JointStrategy::uniform(n1, n2)?.to_stacked();
        let report = solve_with_certificate(&game, mg.cfg(), opts, z0, cert)?;
        if !report.converged {
            flagged.push(s);
        }
        residuals.push(report.residual);
        pi1.push(report.z_star.pi1().clone());
        pi2.push(report.z_star.pi2().clone());
        beliefs1.push(report.z_star.p1().clone());
        beliefs2.push(report.z_star.p2().clone());
    }
    Ok(ExtractedPolicy {
        policy: MarkovPolicy::new(pi1, pi2)?,
        beliefs1,
        beliefs2,
        residuals,
        flagged,
    })
}

#[derive(Debug, Clone)]
pub struct PolicyValue {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub q: QPair,
    pub sweeps: usize,
    pub converged: bool,
    /// Empirical contraction ratios of the fixed-policy operator.
    pub ratios: Vec<f64>,
}

/// Evaluates fixed stationary policies by iterating the fixed-policy
/// operator `(T^π Q)_i(s,a) = r_i + γ·backup(v_i, P(·|s,a))` with
/// `v_i(s′) = −f_i(π(s′); Q(s′,·))` until `‖ΔQ‖_∞ ≤ eval_tol`. A
/// γ-contraction for any policy, since `f` is 1-Lipschitz in the payoffs.
pub fn policy_evaluate(policy: &MarkovPolicy, mg: &MarkovGame, eval_tol: f64) -> Result<PolicyValue> {
    if !(eval_tol > 0.0 && eval_tol.is_finite()) {
        return Err(Error::Config(format!("eval_tol must be positive, got {eval_tol}")));
    }
    if policy.n_states() != mg.n_states() {
        return Err(Error::Dimension(format!(
            "policy covers {} states, game has {}",
            policy.n_states(),
            mg.n_states()
        )));
    }
    let values = |q: &QPair| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut v1 = Vec::with_capacity(mg.n_states());
        let mut v2 = Vec::with_capacity(mg.n_states());
        for s in 0..mg.n_states() {
            let game = stage_game(s, q)?;
            let pi1 = policy.pi(Player::One, s);
            let pi2 = policy.pi(Player::Two, s);
            v1.push(-f_value(Player::One, pi1, pi2, &game, mg.cfg())?);
            v2.push(-f_value(Player::Two, pi1, pi2, &game, mg.cfg())?);
        }
        Ok((v1, v2))
    };

    let mut q = QPair::zeros(mg);
    let mut diffs: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let mut next = q.clone();
        if mg.gamma() == 0.0 {
            next.q1.copy_from_slice(&mg.r1);
            next.q2.copy_from_slice(&mg.r2);
        } else {
            let (v1, v2) = values(&q)?;
            for s in 0..mg.n_states() {
                for m in 0..mg.a1 {
                    for n in 0..mg.a2 {
                        let ps = mg.transition(s, m, n);
                        next.set(
                            Player::One,
                            s,
                            m,
                            n,
                            mg.reward(Player::One, s, m, n)
                                + mg.gamma() * robust_backup(&v1, ps, mg.env())?,
                        );
                        next.set(
                            Player::Two,
                            s,
                            m,
                            n,
                            mg.reward(Player::Two, s, m, n)
                                + mg.gamma() * robust_backup(&v2, ps, mg.env())?,
                        );
                    }
                }
            }
        }
        sweeps += 1;
        let diff = next.linf_diff(&q);
        diffs.push(diff);
        q = next;
        if diff <= eval_tol {
            converged = true;
            break;
        }
    }
    let (v1, v2) = values(&q)?;
    let ratios = diffs
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect();
    Ok(PolicyValue {
        v1,
        v2,
        q,
        sweeps,
        converged,
        ratios,
    })
}

/// One deviation that improved on the candidate equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationGain {
    pub player: Player,
    pub trial: usize,
    pub state: usize,
    pub gain: f64,
}

#[derive(Debug, Clone)]
pub struct MarkovRqeReport {
    /// Largest value improvement any sampled deviation achieved at any
    /// state (positive means the candidate is not an equilibrium at that
    /// resolution).
    pub max_gain: f64,
    pub violations: Vec<DeviationGain>,
    pub trials: usize,
    pub gain_tol: f64,
}

/// Checks the stationary-equilibrium property empirically: samples random
/// deviating Markov policies for each player, holds the opponent at the
/// candidate, and reports every state where a deviation's value beats the
/// candidate's by more than `gain_tol`.
pub fn verify_markov_rqe(
    policy: &MarkovPolicy,
    mg: &MarkovGame,
    trials: usize,
    seed: u64,
    eval_tol: f64,
    gain_tol: f64,
) -> Result<MarkovRqeReport> {
    if trials == 0 {
        return Err(Error::Config("verification needs at least one trial".into()));
    }
    let base = policy_evaluate(policy, mg, eval_tol)?;
    let mut rng = seeded_rng(seed, streams::DEVIATION);
    let (n1, n2) = mg.dims();
    let mut max_gain = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for player in Player::BOTH {
        let own_actions = match player {
            Player::One => n1,
            Player::Two => n2,
        };
        let base_v = match player {
            Player::One => &base.v1,
            Player::Two => &base.v2,
        };
        for trial in 0..trials {
            let rows: Vec<SimplexVec> = (0..mg.n_states())
                .map(|_| sample_simplex(&mut rng, own_actions))
                .collect::<Result<_>>()?;
            let deviated = policy.with_player(player, rows)?;
            let dev = policy_evaluate(&deviated, mg, eval_tol)?;
            let dev_v = match player {
                Player::One => &dev.v1,
                Player::Two => &dev.v2,
            };
            for s in 0..mg.n_states() {
                let gain = dev_v[s] - base_v[s];
                max_gain = max_gain.max(gain);
                if gain > gain_tol {
                    violations.push(DeviationGain {
                        player,
                        trial,
                        state: s,
                        gain,
                    });
                }
            }
        }
    }
    Ok(MarkovRqeReport {
        max_gain,
        violations,
        trials,
        gain_tol,
    })
}
