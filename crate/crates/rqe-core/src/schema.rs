//! On-disk JSON formats and result records.
//!
//! Input files mirror the constructor arguments of [`BimatrixGame`] and
//! [`MarkovGame`]; output records are plain serde types so every emitted
//! result re-parses losslessly. [`to_json_string`] renders floats in
//! scientific notation with 17 significant digits, which round-trips every
//! finite `f64` bit-for-bit and keeps repeated runs byte-identical.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov_game::{gamma_max, policy_extract, stage_game, MarkovGame, MarkovPolicy, QPair};
use crate::normal_form::{
    certify_alpha, objective_j, BimatrixGame, JointStrategy, Player, RQEConfig,
};
use crate::regularizers::{
    EnvPenalty, PenaltyKind, QuantalRegularizer, RegKind, RiskPenalty,
};
use crate::simplex::{InteriorFloor, SimplexVec};
use crate::vi_solver::{SolveReport, SolverOptions};

/// Default interior floor for solver runs configured from files.
pub const DEFAULT_DELTA: f64 = 1e-9;

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_env() -> EnvPenalty {
    EnvPenalty::None
}

/// One player's behavioral parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerConfigFile {
    pub epsilon: f64,
    pub nu: RegKind,
    pub penalty: PenaltyKind,
    pub c: f64,
}

/// The `config` object shared by both game formats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub player1: PlayerConfigFile,
    pub player2: PlayerConfigFile,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl ConfigFile {
    pub fn to_config(&self) -> Result<RQEConfig> {
        let reg1 = QuantalRegularizer::new(self.player1.nu, self.player1.epsilon)?;
        let pen1 = RiskPenalty::new(self.player1.penalty, self.player1.c)?;
        let reg2 = QuantalRegularizer::new(self.player2.nu, self.player2.epsilon)?;
        let pen2 = RiskPenalty::new(self.player2.penalty, self.player2.c)?;
        let floor = InteriorFloor::new(self.delta)?;
        Ok(RQEConfig::new(reg1, pen1, reg2, pen2, floor))
    }

    pub fn from_config(cfg: &RQEConfig) -> Self {
        let side = |p: Player| PlayerConfigFile {
            epsilon: cfg.reg(p).eps(),
            nu: cfg.reg(p).kind(),
            penalty: cfg.pen(p).kind(),
            c: cfg.pen(p).scale(),
        };
        ConfigFile {
            player1: side(Player::One),
            player2: side(Player::Two),
            delta: cfg.floor().delta(),
        }
    }
}

/// A bimatrix game file: action counts, payoff matrices in the owner-row
/// convention, and the behavioral configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalFormFile {
    #[serde(rename = "A1")]
    pub a1: usize,
    #[serde(rename = "A2")]
    pub a2: usize,
    #[serde(rename = "R1")]
    pub r1: Vec<Vec<f64>>,
    #[serde(rename = "R2")]
    pub r2: Vec<Vec<f64>>,
    pub config: ConfigFile,
}

impl NormalFormFile {
    pub fn to_parts(&self) -> Result<(BimatrixGame, RQEConfig)> {
        check_matrix("R1", &self.r1, self.a1, self.a2)?;
        check_matrix("R2", &self.r2, self.a2, self.a1)?;
        let game = BimatrixGame::from_rows(self.r1.clone(), self.r2.clone())?;
        let cfg = self.config.to_config()?;
        cfg.floor().check_dim(self.a1)?;
        cfg.floor().check_dim(self.a2)?;
        Ok((game, cfg))
    }

    pub fn from_parts(game: &BimatrixGame, cfg: &RQEConfig) -> Self {
        let (a1, a2) = game.dims();
        NormalFormFile {
            a1,
            a2,
            r1: game.payoff(Player::One).to_rows(),
            r2: game.payoff(Player::Two).to_rows(),
            config: ConfigFile::from_config(cfg),
        }
    }
}

fn check_matrix(name: &str, rows: &[Vec<f64>], want_rows: usize, want_cols: usize) -> Result<()> {
    if rows.len() != want_rows {
        return Err(Error::Dimension(format!(
            "{name} has {} rows, declared action counts require {want_rows}",
            rows.len()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != want_cols {
            return Err(Error::Dimension(format!(
                "{name}[{i}] has {} entries, declared action counts require {want_cols}",
                row.len()
            )));
        }
    }
    Ok(())
}

/// A Markov game file: per-state reward tables `[S][A1][A2]`, a transition
/// table `[S][A1][A2][S]`, the discount, the kernel penalty, and the shared
/// behavioral configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovGameFile {
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "A1")]
    pub a1: usize,
    #[serde(rename = "A2")]
    pub a2: usize,
    pub gamma: f64,
    pub r1: Vec<Vec<Vec<f64>>>,
    pub r2: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default = "default_env")]
    pub env: EnvPenalty,
    pub config: ConfigFile,
}

impl MarkovGameFile {
    pub fn to_game(&self) -> Result<MarkovGame> {
        check_table("r1", &self.r1, self.s, self.a1, self.a2)?;
        check_table("r2", &self.r2, self.s, self.a1, self.a2)?;
        if self.p.len() != self.s {
            return Err(Error::Dimension(format!(
                "P covers {} states, declared S = {}",
                self.p.len(),
                self.s
            )));
        }
        let cfg = self.config.to_config()?;
        MarkovGame::new(
            self.r1.clone(),
            self.r2.clone(),
            self.p.clone(),
            self.gamma,
            self.env,
            cfg,
        )
    }
}

fn check_table(name: &str, t: &[Vec<Vec<f64>>], s: usize, a1: usize, a2: usize) -> Result<()> {
    if t.len() != s {
        return Err(Error::Dimension(format!(
            "{name} covers {} states, declared S = {s}",
            t.len()
        )));
    }
    for (i, per_state) in t.iter().enumerate() {
        check_matrix(&format!("{name}[{i}]"), per_state, a1, a2)?;
    }
    Ok(())
}

/// Serialized monotonicity certificate, with the discount threshold when the
/// configuration admits one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateOut {
    pub alpha: f64,
    pub method: String,
    pub certified: bool,
    pub gamma_max: Option<f64>,
}

impl CertificateOut {
    /// Certifies a configuration at the given action counts and attaches the
    /// discount threshold when one exists.
    pub fn build(dims: (usize, usize), cfg: &RQEConfig) -> Result<Self> {
        let cert = certify_alpha(dims, cfg)?;
        let threshold = gamma_max(dims, cfg)?;
        Ok(CertificateOut {
            alpha: cert.alpha,
            method: cert.method.as_str().to_string(),
            certified: cert.certified,
            gamma_max: threshold.value(),
        })
    }
}

/// Serialized stacked strategy profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOut {
    pub pi1: Vec<f64>,
    pub pi2: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

impl StrategyOut {
    pub fn from_joint(z: &JointStrategy) -> Self {
        StrategyOut {
            pi1: z.pi1().to_vec(),
            pi2: z.pi2().to_vec(),
            p1: z.p1().to_vec(),
            p2: z.p2().to_vec(),
        }
    }

    pub fn to_joint(&self) -> Result<JointStrategy> {
        JointStrategy::new(
            SimplexVec::new(self.pi1.clone())?,
            SimplexVec::new(self.pi2.clone())?,
            SimplexVec::new(self.p1.clone())?,
            SimplexVec::new(self.p2.clone())?,
        )
    }
}

/// Result record of a normal-form solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveNfOut {
    pub z_star: StrategyOut,
    pub rqe_values: [f64; 2],
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
    pub alpha_certificate: CertificateOut,
}

impl SolveNfOut {
    /// Assembles the record from a finished solve: equilibrium objectives for
    /// both players plus the configuration's certificate.
    pub fn build(report: &SolveReport, game: &BimatrixGame, cfg: &RQEConfig) -> Result<Self> {
        Ok(SolveNfOut {
            z_star: StrategyOut::from_joint(&report.z_star),
            rqe_values: [
                objective_j(Player::One, &report.z_star, game, cfg)?,
                objective_j(Player::Two, &report.z_star, game, cfg)?,
            ],
            residual: report.residual,
            iters: report.iters,
            converged: report.converged,
            alpha_certificate: CertificateOut::build(game.dims(), cfg)?,
        })
    }
}

/// Per-state mixed strategies for both players.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOut {
    pub pi1: Vec<Vec<f64>>,
    pub pi2: Vec<Vec<f64>>,
}

impl PolicyOut {
    pub fn from_policy(policy: &MarkovPolicy) -> Self {
        let rows = |p: Player| {
            policy
                .rows(p)
                .iter()
                .map(|r| r.to_vec())
                .collect::<Vec<_>>()
        };
        PolicyOut {
            pi1: rows(Player::One),
            pi2: rows(Player::Two),
        }
    }

    pub fn to_policy(&self) -> Result<MarkovPolicy> {
        let rows = |t: &[Vec<f64>]| -> Result<Vec<SimplexVec>> {
            t.iter().map(|r| SimplexVec::new(r.clone())).collect()
        };
        MarkovPolicy::new(rows(&self.pi1)?, rows(&self.pi2)?)
    }
}

/// Result record of a Markov-game solve (either driver).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveMgOut {
    /// Which driver produced the tables: `"vi"` or `"qlearn"`.
    pub driver: String,
    pub q1: Vec<Vec<Vec<f64>>>,
    pub q2: Vec<Vec<Vec<f64>>>,
    pub policy: PolicyOut,
    /// Adversarial beliefs about the opponent, per state.
    pub beliefs1: Vec<Vec<f64>>,
    pub beliefs2: Vec<Vec<f64>>,
    /// Equilibrium state values for both players.
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// Stage-solve residual per state at the final tables.
    pub stage_residuals: Vec<f64>,
    /// States whose extraction solve missed tolerance.
    pub flagged_states: Vec<usize>,
    /// Bellman applications (sweeps for vi, steps for qlearn).
    pub sweeps: usize,
    pub converged: bool,
    pub final_diff: f64,
    pub gamma: f64,
    pub gamma_max: Option<f64>,
    /// True when `gamma <= gamma_max`; false means the contraction guarantee
    /// is void and the tables are best-effort.
    pub guaranteed: bool,
    pub alpha_certificate: CertificateOut,
}

impl SolveMgOut {
    /// Assembles the record from final tables: extracts per-state policies,
    /// evaluates equilibrium state values, and checks the discount threshold.
    /// `diffs` are the per-application `‖ΔQ‖_∞` values of the driver.
    pub fn build(
        driver: &str,
        q: &QPair,
        diffs: &[f64],
        converged: bool,
        mg: &MarkovGame,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let extracted = policy_extract(q, mg, opts)?;
        let mut v1 = Vec::with_capacity(mg.n_states());
        let mut v2 = Vec::with_capacity(mg.n_states());
        for s in 0..mg.n_states() {
            let game = stage_game(s, q)?;
            let z = JointStrategy::new(
                extracted.policy.pi(Player::One, s).clone(),
                extracted.policy.pi(Player::Two, s).clone(),
                extracted.beliefs1[s].clone(),
                extracted.beliefs2[s].clone(),
            )?;
            v1.push(-objective_j(Player::One, &z, &game, mg.cfg())?);
            v2.push(-objective_j(Player::Two, &z, &game, mg.cfg())?);
        }
        let threshold = gamma_max(mg.dims(), mg.cfg())?.value();
        Ok(SolveMgOut {
            driver: driver.to_string(),
            q1: q.to_table(Player::One),
            q2: q.to_table(Player::Two),
            policy: PolicyOut::from_policy(&extracted.policy),
            beliefs1: extracted.beliefs1.iter().map(|b| b.to_vec()).collect(),
            beliefs2: extracted.beliefs2.iter().map(|b| b.to_vec()).collect(),
            v1,
            v2,
            stage_residuals: extracted.residuals,
            flagged_states: extracted.flagged,
            sweeps: diffs.len(),
            converged,
            final_diff: diffs.last().copied().unwrap_or(0.0),
            gamma: mg.gamma(),
            gamma_max: threshold,
            guaranteed: threshold.is_some_and(|t| mg.gamma() <= t),
            alpha_certificate: CertificateOut::build(mg.dims(), mg.cfg())?,
        })
    }

    pub fn q_pair(&self) -> Result<QPair> {
        QPair::from_tables(self.q1.clone(), self.q2.clone())
    }
}

/// One profitable deviation found during equilibrium verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationOut {
    /// 1-based player index.
    pub player: usize,
    pub trial: usize,
    pub state: usize,
    pub gain: f64,
}

/// Result record of an equilibrium verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOut {
    pub verified: bool,
    pub max_gain: f64,
    pub gain_tol: f64,
    pub trials: usize,
    pub violations: Vec<ViolationOut>,
}

/// Parses JSON with line/column diagnostics folded into the error message.
pub fn from_json_str<T: DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| {
        Error::Config(format!(
            "JSON parse error at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })
}

/// Pretty JSON with every float rendered as `{:.16e}` (17 significant
/// digits), enough to reconstruct the exact bits on re-parse and to make
/// repeated runs byte-identical.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter::new());
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Config(format!("JSON serialization failed: {e}")))?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::Config(format!("non-UTF8 JSON output: {e}")))
}

/// Pretty-printing formatter that pins float rendering to 17 significant
/// digits of scientific notation.
struct SciFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl SciFormatter {
    fn new() -> Self {
        SciFormatter {
            inner: serde_json::ser::PrettyFormatter::new(),
        }
    }
}

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W>(&mut self, writer: &mut W) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.begin_array(writer)
    }

    fn end_array<W>(&mut self, writer: &mut W) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W>(&mut self, writer: &mut W) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W>(&mut self, writer: &mut W) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.begin_object(writer)
    }

    fn end_object<W>(&mut self, writer: &mut W) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.begin_object_key(writer, first)
    }

    fn end_object_key<W>(&mut self, writer: &mut W) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.end_object_key(writer)
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W>(&mut self, writer: &mut W) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.end_object_value(writer)
    }
}
