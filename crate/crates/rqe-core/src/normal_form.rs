//! Bimatrix games with risk-aversion and bounded rationality.
//!
//! Player `i` announces a mixed strategy `π_i`, anticipates the worst-case
//! opponent play `p_i` within a penalty `D_i` of the announced `π_{-i}`, and
//! smooths its own choice with `ε_i ν_i`. Each player minimizes
//!
//! ```text
//! f_i(π_i, π_{-i}) = sup_p { −π_iᵀ R_i p − D_i(p, π_{-i}) } + ε_i ν_i(π_i)
//! ```
//!
//! Introducing one adversary per player turns the equilibrium conditions
//! into a variational inequality with operator [`operator_f`] over the joint
//! strategy `z = (π1, π2, p1, p2)`. When the symmetrized Jacobian of that
//! operator is uniformly positive definite the equilibrium is unique; the
//! payoff matrices cancel out of the symmetrization, so positivity reduces
//! to a curvature comparison between the regularizers and the penalties,
//! which [`certify_alpha`] evaluates in closed form.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::regularizers::{
    d_grad_p_slice, d_inner_argmax_slice, d_value_slice, nu_grad_slice, nu_modulus,
    nu_value_slice, PenaltyKind, QuantalRegularizer, RiskPenalty,
};
use crate::rng::{seeded_rng, streams};
use crate::simplex::{project_interior, sample_simplex, InteriorFloor, SimplexVec};

/// Interior floor applied to probe sample points, so finite differences of
/// boundary-singular regularizers stay well conditioned.
const PROBE_FLOOR: f64 = 1e-3;
/// Central-difference step for Jacobian probes.
const FD_STEP: f64 = 1e-6;
/// Default sample count and seed used when a certificate falls back to the
/// numeric probe.
const PROBE_SAMPLES_DEFAULT: usize = 16;
const PROBE_SEED_DEFAULT: u64 = 0xA11CE;

/// One of the two players.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::One, Player::Two];

    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }

    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

/// Payoff pair in row-player-owner convention: `R1` is `|A1| x |A2|` and
/// `R2` is `|A2| x |A1|`, so `R_i[m][n]` is the cost to player `i` of its own
/// action `m` against opponent action `n`, and both players use the same
/// formulas with roles swapped.
#[derive(Debug, Clone, PartialEq)]
pub struct BimatrixGame {
    r1: Mat,
    r2: Mat,
}

impl BimatrixGame {
    pub fn new(r1: Mat, r2: Mat) -> Result<Self> {
        if r1.rows() != r2.cols() || r1.cols() != r2.rows() {
            return Err(Error::Dimension(format!(
                "R1 is {}x{} so R2 must be {}x{}, got {}x{}",
                r1.rows(),
                r1.cols(),
                r1.cols(),
                r1.rows(),
                r2.rows(),
                r2.cols()
            )));
        }
        Ok(BimatrixGame { r1, r2 })
    }

    pub fn from_rows(r1: Vec<Vec<f64>>, r2: Vec<Vec<f64>>) -> Result<Self> {
        BimatrixGame::new(Mat::from_rows(r1)?, Mat::from_rows(r2)?)
    }

    pub fn zeros(n1: usize, n2: usize) -> Result<Self> {
        BimatrixGame::new(Mat::zeros(n1, n2)?, Mat::zeros(n2, n1)?)
    }

    /// Action counts `(|A1|, |A2|)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.r1.rows(), self.r1.cols())
    }

    pub fn payoff(&self, player: Player) -> &Mat {
        match player {
            Player::One => &self.r1,
            Player::Two => &self.r2,
        }
    }

    /// Largest absolute entry difference across both payoff matrices.
    pub fn max_abs_diff(&self, other: &BimatrixGame) -> Result<f64> {
        let d1 = self.r1.max_abs_diff(&other.r1)?;
        let d2 = self.r2.max_abs_diff(&other.r2)?;
        Ok(d1.max(d2))
    }
}

/// Per-player regularizers and penalties plus the shared interior floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RQEConfig {
    regs: [QuantalRegularizer; 2],
    pens: [RiskPenalty; 2],
    floor: InteriorFloor,
}

impl RQEConfig {
    pub fn new(
        reg1: QuantalRegularizer,
        pen1: RiskPenalty,
        reg2: QuantalRegularizer,
        pen2: RiskPenalty,
        floor: InteriorFloor,
    ) -> Self {
        RQEConfig {
            regs: [reg1, reg2],
            pens: [pen1, pen2],
            floor,
        }
    }

    /// Both players share the same regularizer and penalty.
    pub fn symmetric(reg: QuantalRegularizer, pen: RiskPenalty, floor: InteriorFloor) -> Self {
        RQEConfig::new(reg, pen, reg, pen, floor)
    }

    pub fn reg(&self, player: Player) -> &QuantalRegularizer {
        &self.regs[player.index()]
    }

    pub fn pen(&self, player: Player) -> &RiskPenalty {
        &self.pens[player.index()]
    }

    pub fn floor(&self) -> InteriorFloor {
        self.floor
    }
}

/// Strategies of the 4-player reformulation: the announced `π_i` plus each
/// player's adversarial belief `p_i` about the opponent (`p1` lives on A2,
/// `p2` on A1). Stacked order is `(π1, π2, p1, p2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointStrategy {
    pi1: SimplexVec,
    pi2: SimplexVec,
    p1: SimplexVec,
    p2: SimplexVec,
}

impl JointStrategy {
    pub fn new(pi1: SimplexVec, pi2: SimplexVec, p1: SimplexVec, p2: SimplexVec) -> Result<Self> {
        if p1.len() != pi2.len() || p2.len() != pi1.len() {
            return Err(Error::Dimension(format!(
                "belief dimensions (p1: {}, p2: {}) must mirror strategies (pi1: {}, pi2: {})",
                p1.len(),
                p2.len(),
                pi1.len(),
                pi2.len()
            )));
        }
        Ok(JointStrategy { pi1, pi2, p1, p2 })
    }

    pub fn uniform(n1: usize, n2: usize) -> Result<Self> {
        JointStrategy::new(
            SimplexVec::uniform(n1)?,
            SimplexVec::uniform(n2)?,
            SimplexVec::uniform(n2)?,
            SimplexVec::uniform(n1)?,
        )
    }

    /// Action counts `(|A1|, |A2|)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.pi1.len(), self.pi2.len())
    }

    pub fn pi1(&self) -> &SimplexVec {
        &self.pi1
    }

    pub fn pi2(&self) -> &SimplexVec {
        &self.pi2
    }

    pub fn p1(&self) -> &SimplexVec {
        &self.p1
    }

    pub fn p2(&self) -> &SimplexVec {
        &self.p2
    }

    pub fn pi(&self, player: Player) -> &SimplexVec {
        match player {
            Player::One => &self.pi1,
            Player::Two => &self.pi2,
        }
    }

    pub fn belief(&self, player: Player) -> &SimplexVec {
        match player {
            Player::One => &self.p1,
            Player::Two => &self.p2,
        }
    }

    pub fn to_stacked(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(2 * (self.pi1.len() + self.pi2.len()));
        z.extend_from_slice(self.pi1.weights());
        z.extend_from_slice(self.pi2.weights());
        z.extend_from_slice(self.p1.weights());
        z.extend_from_slice(self.p2.weights());
        z
    }

    /// Rebuilds a strategy from a stacked vector whose blocks are already
    /// projections onto their simplices.
    pub(crate) fn from_stacked_projected(z: &[f64], dims: (usize, usize)) -> Self {
        let (n1, n2) = dims;
        debug_assert_eq!(z.len(), 2 * (n1 + n2));
        let (b1, b2, b3, b4) = split_blocks(z, dims);
        JointStrategy {
            pi1: SimplexVec::from_projection(b1.to_vec()),
            pi2: SimplexVec::from_projection(b2.to_vec()),
            p1: SimplexVec::from_projection(b3.to_vec()),
            p2: SimplexVec::from_projection(b4.to_vec()),
        }
    }

    pub fn l2_distance(&self, other: &JointStrategy) -> f64 {
        let a = self.to_stacked();
        let b = other.to_stacked();
        assert_eq!(a.len(), b.len(), "joint strategies have different shapes");
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// A strong-monotonicity constant for the equilibrium operator. `analytic`
/// certificates come from the closed-form curvature reduction and certify
/// uniqueness when positive; `sampled` values are finite-difference
/// estimates, reported but never certified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityCertificate {
    pub alpha: f64,
    pub method: CertMethod,
    pub certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertMethod {
    Analytic,
    Sampled,
}

impl CertMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CertMethod::Analytic => "analytic",
            CertMethod::Sampled => "sampled",
        }
    }
}

pub(crate) fn split_blocks(z: &[f64], dims: (usize, usize)) -> (&[f64], &[f64], &[f64], &[f64]) {
    let (n1, n2) = dims;
    (
        &z[0..n1],
        &z[n1..n1 + n2],
        &z[n1 + n2..n1 + 2 * n2],
        &z[n1 + 2 * n2..2 * (n1 + n2)],
    )
}

fn check_dims(z: &JointStrategy, game: &BimatrixGame) -> Result<()> {
    if z.dims() != game.dims() {
        return Err(Error::Dimension(format!(
            "strategy dims {:?} do not match game dims {:?}",
            z.dims(),
            game.dims()
        )));
    }
    Ok(())
}

/// Raw-slice evaluation of `J_i` at a stacked point `[π1, π2, p1, p2]`.
/// The formula extends smoothly off the simplex, so central finite
/// differences of this function are the reference for the operator blocks.
pub fn objective_j_stacked(
    i: Player,
    z: &[f64],
    game: &BimatrixGame,
    cfg: &RQEConfig,
) -> Result<f64> {
    let (pi1, pi2, p1, p2) = split_blocks(z, game.dims());
    let (pi_own, belief, pi_opp) = match i {
        Player::One => (pi1, p1, pi2),
        Player::Two => (pi2, p2, pi1),
    };
    let rp = game.payoff(i).mul_vec(belief);
    let bilinear: f64 = pi_own.iter().zip(&rp).map(|(a, b)| a * b).sum();
    let penalty = d_value_slice(cfg.pen(i), belief, pi_opp)?;
    let nu = nu_value_slice(cfg.reg(i).kind(), pi_own)?;
    Ok(-bilinear - penalty + cfg.reg(i).eps() * nu)
}

/// Objective of player `i` in the 4-player reformulation:
/// `J_i = −π_iᵀ R_i p_i − D_i(p_i, π_{-i}) + ε_i ν_i(π_i)`.
pub fn objective_j(i: Player, z: &JointStrategy, game: &BimatrixGame, cfg: &RQEConfig) -> Result<f64> {
    check_dims(z, game)?;
    objective_j_stacked(i, &z.to_stacked(), game, cfg)
}

/// Objective of adversary `i`: the negation of [`objective_j`].
pub fn objective_jbar(
    i: Player,
    z: &JointStrategy,
    game: &BimatrixGame,
    cfg: &RQEConfig,
) -> Result<f64> {
    Ok(-objective_j(i, z, game, cfg)?)
}

/// Raw-slice evaluation of the stacked operator; see [`objective_j_stacked`].
pub fn operator_f_stacked(z: &[f64], game: &BimatrixGame, cfg: &RQEConfig) -> Result<Vec<f64>> {
    let dims = game.dims();
    let (n1, n2) = dims;
    if z.len() != 2 * (n1 + n2) {
        return Err(Error::Dimension(format!(
            "stacked strategy has length {}, expected {}",
            z.len(),
            2 * (n1 + n2)
        )));
    }
    let (pi1, pi2, p1, p2) = split_blocks(z, dims);
    let r1 = game.payoff(Player::One);
    let r2 = game.payoff(Player::Two);

    let mut out = Vec::with_capacity(z.len());

    let g1 = nu_grad_slice(cfg.reg(Player::One).kind(), pi1)?;
    let r1p1 = r1.mul_vec(p1);
    out.extend(
        r1p1.iter()
            .zip(&g1)
            .map(|(rp, g)| -rp + cfg.reg(Player::One).eps() * g),
    );

    let g2 = nu_grad_slice(cfg.reg(Player::Two).kind(), pi2)?;
    let r2p2 = r2.mul_vec(p2);
    out.extend(
        r2p2.iter()
            .zip(&g2)
            .map(|(rp, g)| -rp + cfg.reg(Player::Two).eps() * g),
    );

    let d1 = d_grad_p_slice(cfg.pen(Player::One), p1, pi2)?;
    let r1t = r1.tr_mul_vec(pi1);
    out.extend(r1t.iter().zip(&d1).map(|(r, d)| r + d));

    let d2 = d_grad_p_slice(cfg.pen(Player::Two), p2, pi1)?;
    let r2t = r2.tr_mul_vec(pi2);
    out.extend(r2t.iter().zip(&d2).map(|(r, d)| r + d));

    Ok(out)
}

/// The gradient operator of the 4-player game, stacked as
/// `[−R1 p1 + ε1∇ν1(π1); −R2 p2 + ε2∇ν2(π2); R1ᵀπ1 + ∇_p D1(p1, π2);
/// R2ᵀπ2 + ∇_p D2(p2, π1)]`, of total length `2(|A1| + |A2|)`.
pub fn operator_f(z: &JointStrategy, game: &BimatrixGame, cfg: &RQEConfig) -> Result<Vec<f64>> {
    check_dims(z, game)?;
    operator_f_stacked(&z.to_stacked(), game, cfg)
}

/// Player `i`'s primal objective with the adversary solved out:
/// `f_i = −π_iᵀR_i p* − D_i(p*, π_{-i}) + ε_i ν_i(π_i)` where
/// `p* = argmax_p { −(R_iᵀπ_i)ᵀp − D_i(p, π_{-i}) }` in closed form.
pub fn f_value(
    i: Player,
    pi1: &SimplexVec,
    pi2: &SimplexVec,
    game: &BimatrixGame,
    cfg: &RQEConfig,
) -> Result<f64> {
    let (n1, n2) = game.dims();
    if pi1.len() != n1 || pi2.len() != n2 {
        return Err(Error::Dimension(format!(
            "strategies ({}, {}) do not match game dims ({n1}, {n2})",
            pi1.len(),
            pi2.len()
        )));
    }
    let (pi_own, pi_opp) = match i {
        Player::One => (pi1, pi2),
        Player::Two => (pi2, pi1),
    };
    let a = game.payoff(i).tr_mul_vec(pi_own.weights());
    let p_star = d_inner_argmax_slice(cfg.pen(i), &a, pi_opp.weights())?;
    let bilinear: f64 = a.iter().zip(&p_star).map(|(x, y)| x * y).sum();
    let penalty = d_value_slice(cfg.pen(i), &p_star, pi_opp.weights())?;
    let nu = nu_value_slice(cfg.reg(i).kind(), pi_own.weights())?;
    Ok(-bilinear - penalty + cfg.reg(i).eps() * nu)
}

/// Default verification tolerance used by [`rqe_value`].
pub const DEFAULT_VERIFY_TOL: f64 = 1e-6;

/// The equilibrium value of player `i`: `J_i` evaluated at a verified
/// equilibrium `z*`. Fails with a contract violation if `z*` does not pass
/// [`crate::vi_solver::verify_equilibrium`] at tolerance `tol`.
pub fn rqe_value_checked(
    i: Player,
    z_star: &JointStrategy,
    game: &BimatrixGame,
    cfg: &RQEConfig,
    tol: f64,
) -> Result<f64> {
    let check = crate::vi_solver::verify_equilibrium(z_star, game, cfg, tol)?;
    if !check.verified {
        return Err(Error::Contract(format!(
            "strategy is not an equilibrium: worst block slack {:.3e} below -{tol:.3e}",
            check.worst_slack
        )));
    }
    objective_j(i, z_star, game, cfg)
}

/// [`rqe_value_checked`] at [`DEFAULT_VERIFY_TOL`].
pub fn rqe_value(
    i: Player,
    z_star: &JointStrategy,
    game: &BimatrixGame,
    cfg: &RQEConfig,
) -> Result<f64> {
    rqe_value_checked(i, z_star, game, cfg, DEFAULT_VERIFY_TOL)
}

fn lambda_min_2x2(a: f64, b: f64, d: f64) -> f64 {
    0.5 * (a + d) - (0.25 * (a - d) * (a - d) + b * b).sqrt()
}

/// Closed-form strong-monotonicity constant.
///
/// The payoff matrices cancel from the symmetrized Jacobian, which after a
/// block permutation is block-diagonal with one block per player: the block
/// for player `i` couples `π_i` with the opposing adversary's belief
/// `p_{-i}` through the Hessians of `D_{-i}`. For squared-L2 penalties those
/// Hessians are `c_{-i} I` and `−c_{-i} I`, and with regularizer modulus
/// `m_i` the block eigenvalues are bounded below by the 2x2 matrix
/// `[[ε_i m_i, −c_{-i}/2], [−c_{-i}/2, c_{-i}]]`. The certificate is the
/// smaller of the two block bounds.
///
/// KL penalties have no positive curvature bound near the boundary, so the
/// certificate falls back to a sampled estimate and is never certified.
pub fn certify_alpha(dims: (usize, usize), cfg: &RQEConfig) -> Result<MonotonicityCertificate> {
    let (n1, n2) = dims;
    if n1 == 0 || n2 == 0 {
        return Err(Error::Dimension("action counts must be positive".into()));
    }
    let analytic = Player::BOTH
        .iter()
        .all(|&p| cfg.pen(p).kind() == PenaltyKind::ScaledSqL2);
    if analytic {
        let mut alpha = f64::INFINITY;
        for i in Player::BOTH {
            let a = cfg.reg(i).eps() * nu_modulus(cfg.reg(i), cfg.floor());
            let c = cfg.pen(i.other()).scale();
            alpha = alpha.min(lambda_min_2x2(a, -0.5 * c, c));
        }
        Ok(MonotonicityCertificate {
            alpha,
            method: CertMethod::Analytic,
            certified: alpha > 0.0,
        })
    } else {
        let game = BimatrixGame::zeros(n1, n2)?;
        let alpha = numeric_alpha_probe(&game, cfg, PROBE_SAMPLES_DEFAULT, PROBE_SEED_DEFAULT)?;
        Ok(MonotonicityCertificate {
            alpha,
            method: CertMethod::Sampled,
            certified: false,
        })
    }
}

/// The simpler sufficient bound `min_i min(ε_i m_i − c_{-i}/2, c_{-i}/2)`
/// (diagonal dominance of the curvature blocks plus joint convexity of the
/// penalty). Weaker than [`certify_alpha`]; available for squared-L2
/// penalties only.
pub fn sufficient_alpha(cfg: &RQEConfig) -> Option<f64> {
    let analytic = Player::BOTH
        .iter()
        .all(|&p| cfg.pen(p).kind() == PenaltyKind::ScaledSqL2);
    if !analytic {
        return None;
    }
    let mut alpha = f64::INFINITY;
    for i in Player::BOTH {
        let m = cfg.reg(i).eps() * nu_modulus(cfg.reg(i), cfg.floor());
        let c = cfg.pen(i.other()).scale();
        alpha = alpha.min((m - 0.5 * c).min(0.5 * c));
    }
    Some(alpha)
}

fn fd_symmetrized_jacobian(
    z: &[f64],
    game: &BimatrixGame,
    cfg: &RQEConfig,
) -> Result<DMatrix<f64>> {
    let dim = z.len();
    let mut jac = DMatrix::zeros(dim, dim);
    let mut hi = z.to_vec();
    let mut lo = z.to_vec();
    for k in 0..dim {
        hi[k] = z[k] + FD_STEP;
        lo[k] = z[k] - FD_STEP;
        let f_hi = operator_f_stacked(&hi, game, cfg)?;
        let f_lo = operator_f_stacked(&lo, game, cfg)?;
        for r in 0..dim {
            jac[(r, k)] = (f_hi[r] - f_lo[r]) / (2.0 * FD_STEP);
        }
        hi[k] = z[k];
        lo[k] = z[k];
    }
    let sym = (&jac + jac.transpose()) * 0.5;
    Ok(sym)
}

fn lambda_min_sym(m: DMatrix<f64>) -> f64 {
    nalgebra::linalg::SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Estimates the strong-monotonicity constant by sampling interior points
/// and taking the smallest eigenvalue of the finite-difference symmetrized
/// Jacobian of the operator. An estimate, not a certificate. The payoff
/// terms are linear in `z` and cancel in the symmetrization, so the result
/// does not depend on the game's payoffs.
pub fn numeric_alpha_probe(
    game: &BimatrixGame,
    cfg: &RQEConfig,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Domain("probe needs at least one sample".into()));
    }
    let (n1, n2) = game.dims();
    let floor = InteriorFloor::new(cfg.floor().delta().max(PROBE_FLOOR))
        .expect("probe floor is a valid interior floor");
    floor.check_dim(n1.max(n2))?;
    let mut rng = seeded_rng(seed, streams::PROBE);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let mut z = Vec::with_capacity(2 * (n1 + n2));
        for n in [n1, n2, n2, n1] {
            let raw = sample_simplex(&mut rng, n)?;
            z.extend_from_slice(project_interior(raw.weights(), floor)?.weights());
        }
        let sym = fd_symmetrized_jacobian(&z, game, cfg)?;
        worst = worst.min(lambda_min_sym(sym));
    }
    Ok(worst)
}
