//! Choice regularizers and risk penalties.
//!
//! A [`QuantalRegularizer`] smooths a player's own strategy choice; a
//! [`RiskPenalty`] prices the distance between an imagined opponent play `p`
//! and the announced strategy `π`, which makes the inner adversary's problem
//! strongly concave and yields a closed-form maximizer. An [`EnvPenalty`]
//! plays the same role against the transition kernel of a Markov game.
//!
//! Values are returned unweighted; the weight ε multiplies ν exactly once,
//! in the objective assembly of `normal_form`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{project_simplex, InteriorFloor, SimplexVec};

/// Entries below this threshold are treated as exact zeros inside KL terms.
pub const KL_ZERO: f64 = 1e-300;

/// Regularizer families for the players' own strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    Entropy,
    LogBarrier,
    Quadratic,
}

/// Penalty families for belief deviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyKind {
    #[serde(rename = "scaled_sq_l2")]
    ScaledSqL2,
    #[serde(rename = "scaled_kl")]
    ScaledKl,
}

/// Penalty on imagined transition kernels in Markov games.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvPenalty {
    None,
    Entropic { beta: f64 },
}

impl EnvPenalty {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnvPenalty::None => Ok(()),
            EnvPenalty::Entropic { beta } => {
                if beta.is_finite() && *beta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "entropic environment penalty needs beta > 0, got {beta}"
                    )))
                }
            }
        }
    }
}

/// A regularizer kind with its positive weight ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantalRegularizer {
    kind: RegKind,
    eps: f64,
}

impl QuantalRegularizer {
    pub fn new(kind: RegKind, eps: f64) -> Result<Self> {
        if !eps.is_finite() || eps <= 0.0 {
            return Err(Error::Config(format!(
                "regularizer weight must be positive, got {eps}"
            )));
        }
        Ok(QuantalRegularizer { kind, eps })
    }

    pub fn kind(&self) -> RegKind {
        self.kind
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

/// A penalty kind with its positive scale `c`. For `scaled_sq_l2` the value
/// is `(c/2)‖p − π‖²`; for `scaled_kl` it is `(1/c)·KL(p ‖ π)`, so `c` acts
/// as the strong-convexity surrogate in both cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskPenalty {
    kind: PenaltyKind,
    scale: f64,
}

impl RiskPenalty {
    pub fn new(kind: PenaltyKind, scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::Config(format!(
                "penalty scale must be positive, got {scale}"
            )));
        }
        Ok(RiskPenalty { kind, scale })
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// A Lipschitz constant that is only available for some penalty kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LipschitzBound {
    Certified(f64),
    Uncertified,
}

impl LipschitzBound {
    pub fn value(self) -> Option<f64> {
        match self {
            LipschitzBound::Certified(v) => Some(v),
            LipschitzBound::Uncertified => None,
        }
    }
}

fn check_positive_entries(kind: RegKind, pi: &[f64]) -> Result<()> {
    if matches!(kind, RegKind::Entropy | RegKind::LogBarrier) {
        for (a, &w) in pi.iter().enumerate() {
            if w <= 0.0 {
                return Err(Error::Domain(format!(
                    "{kind:?} regularizer needs strictly positive entries, entry {a} is {w}"
                )));
            }
        }
    }
    Ok(())
}

/// Raw-slice evaluations skip the simplex wrapper so the smooth extensions
/// can be probed off the simplex, e.g. by finite-difference checks.
pub fn nu_value_slice(kind: RegKind, pi: &[f64]) -> Result<f64> {
    check_positive_entries(kind, pi)?;
    Ok(match kind {
        RegKind::Entropy => pi.iter().map(|&w| w * w.ln()).sum(),
        RegKind::LogBarrier => -pi.iter().map(|&w| w.ln()).sum::<f64>(),
        RegKind::Quadratic => 0.5 * pi.iter().map(|&w| w * w).sum::<f64>(),
    })
}

pub fn nu_grad_slice(kind: RegKind, pi: &[f64]) -> Result<Vec<f64>> {
    check_positive_entries(kind, pi)?;
    Ok(match kind {
        RegKind::Entropy => pi.iter().map(|&w| 1.0 + w.ln()).collect(),
        RegKind::LogBarrier => pi.iter().map(|&w| -1.0 / w).collect(),
        RegKind::Quadratic => pi.to_vec(),
    })
}

/// Regularizer value (unweighted by ε).
pub fn nu_value(reg: &QuantalRegularizer, pi: &SimplexVec) -> Result<f64> {
    nu_value_slice(reg.kind(), pi)
}

/// Regularizer gradient (unweighted by ε).
pub fn nu_grad(reg: &QuantalRegularizer, pi: &SimplexVec) -> Result<Vec<f64>> {
    nu_grad_slice(reg.kind(), pi)
}

/// Strong-convexity modulus of the regularizer on the simplex. Entropy and
/// the log barrier have Hessians `diag(1/π)` and `diag(1/π²)`, both at least
/// the identity when all entries lie in (0, 1]; the quadratic is exactly the
/// identity. Reported as 1 for every kind.
pub fn nu_modulus(_reg: &QuantalRegularizer, _floor: InteriorFloor) -> f64 {
    1.0
}

fn check_same_len(p: &[f64], pi: &[f64]) -> Result<()> {
    if p.len() != pi.len() {
        return Err(Error::Domain(format!(
            "penalty arguments have different lengths: {} vs {}",
            p.len(),
            pi.len()
        )));
    }
    Ok(())
}

pub fn d_value_slice(pen: &RiskPenalty, p: &[f64], pi: &[f64]) -> Result<f64> {
    check_same_len(p, pi)?;
    match pen.kind() {
        PenaltyKind::ScaledSqL2 => {
            let sq: f64 = p.iter().zip(pi).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(0.5 * pen.scale() * sq)
        }
        PenaltyKind::ScaledKl => {
            let mut acc = 0.0;
            for (&pa, &qa) in p.iter().zip(pi) {
                if pa <= KL_ZERO {
                    continue;
                }
                if qa <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                acc += pa * (pa / qa).ln();
            }
            Ok(acc / pen.scale())
        }
    }
}

/// Penalty value D(p, π). Returns `+inf` for a KL penalty when `p` puts mass
/// where `π` has none.
pub fn d_value(pen: &RiskPenalty, p: &SimplexVec, pi: &SimplexVec) -> Result<f64> {
    d_value_slice(pen, p, pi)
}

fn check_kl_interior(p: &[f64], pi: &[f64]) -> Result<()> {
    for (a, (&pa, &qa)) in p.iter().zip(pi).enumerate() {
        if pa <= 0.0 || qa <= 0.0 {
            return Err(Error::Domain(format!(
                "KL penalty gradient needs interior arguments, entry {a} is p={pa}, pi={qa}"
            )));
        }
    }
    Ok(())
}

pub fn d_grad_p_slice(pen: &RiskPenalty, p: &[f64], pi: &[f64]) -> Result<Vec<f64>> {
    check_same_len(p, pi)?;
    match pen.kind() {
        PenaltyKind::ScaledSqL2 => Ok(p
            .iter()
            .zip(pi)
            .map(|(a, b)| pen.scale() * (a - b))
            .collect()),
        PenaltyKind::ScaledKl => {
            check_kl_interior(p, pi)?;
            Ok(p.iter()
                .zip(pi)
                .map(|(a, b)| (1.0 + (a / b).ln()) / pen.scale())
                .collect())
        }
    }
}

pub fn d_grad_pi_slice(pen: &RiskPenalty, p: &[f64], pi: &[f64]) -> Result<Vec<f64>> {
    check_same_len(p, pi)?;
    match pen.kind() {
        PenaltyKind::ScaledSqL2 => Ok(p
            .iter()
            .zip(pi)
            .map(|(a, b)| pen.scale() * (b - a))
            .collect()),
        PenaltyKind::ScaledKl => {
            check_kl_interior(p, pi)?;
            Ok(p.iter()
                .zip(pi)
                .map(|(a, b)| -(a / b) / pen.scale())
                .collect())
        }
    }
}

/// Gradient of D(p, π) in its first argument.
pub fn d_grad_p(pen: &RiskPenalty, p: &SimplexVec, pi: &SimplexVec) -> Result<Vec<f64>> {
    d_grad_p_slice(pen, p, pi)
}

/// Gradient of D(p, π) in its second argument.
pub fn d_grad_pi(pen: &RiskPenalty, p: &SimplexVec, pi: &SimplexVec) -> Result<Vec<f64>> {
    d_grad_pi_slice(pen, p, pi)
}

/// Lipschitz constant of `π ↦ D(p, π)` in L2 over the simplex, the quantity
/// the discount-threshold argument consumes. The squared-L2 penalty has
/// gradient `c(π − p)`, bounded by `c` times the simplex diameter `√2`; the
/// KL penalty's gradient is unbounded near the boundary, so it carries no
/// certificate.
pub fn d_lipschitz_second(pen: &RiskPenalty, n: usize) -> LipschitzBound {
    debug_assert!(n >= 1);
    match pen.kind() {
        PenaltyKind::ScaledSqL2 => LipschitzBound::Certified(pen.scale() * std::f64::consts::SQRT_2),
        PenaltyKind::ScaledKl => LipschitzBound::Uncertified,
    }
}

pub(crate) fn d_inner_argmax_slice(pen: &RiskPenalty, a: &[f64], pi: &[f64]) -> Result<Vec<f64>> {
    check_same_len(a, pi)?;
    for (i, &v) in a.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Domain(format!("cost entry {i} is not finite: {v}")));
        }
    }
    match pen.kind() {
        PenaltyKind::ScaledSqL2 => {
            let c = pen.scale();
            let shifted: Vec<f64> = pi.iter().zip(a).map(|(w, ai)| w - ai / c).collect();
            Ok(project_simplex(&shifted)?.into_weights())
        }
        PenaltyKind::ScaledKl => {
            // p*_a ∝ π_a exp(−c a_a), computed with a max shift in log space.
            let c = pen.scale();
            let logits: Vec<f64> = pi
                .iter()
                .zip(a)
                .map(|(&w, &ai)| {
                    if w <= KL_ZERO {
                        f64::NEG_INFINITY
                    } else {
                        w.ln() - c * ai
                    }
                })
                .collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if top == f64::NEG_INFINITY {
                return Err(Error::Domain("tilt target has no support".into()));
            }
            let weights: Vec<f64> = logits.iter().map(|&l| (l - top).exp()).collect();
            Ok(SimplexVec::new(weights)?.into_weights())
        }
    }
}

/// The maximizer of the inner adversary's problem
/// `argmax_{p in simplex} { −aᵀp − D(p, π) }`, available in closed form:
/// completing the square for the squared-L2 penalty, an exponential tilt of
/// `π` for the KL penalty.
pub fn d_inner_argmax(pen: &RiskPenalty, a: &[f64], pi: &SimplexVec) -> Result<SimplexVec> {
    let weights = d_inner_argmax_slice(pen, a, pi)?;
    Ok(SimplexVec::new(weights).expect("argmax weights form a distribution"))
}
