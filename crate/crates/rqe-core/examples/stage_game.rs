//! The README walkthrough: certify a configuration, solve one stage game.

use rqe_core::normal_form::{certify_alpha, BimatrixGame, RQEConfig};
use rqe_core::regularizers::{PenaltyKind, QuantalRegularizer, RegKind, RiskPenalty};
use rqe_core::simplex::InteriorFloor;
use rqe_core::vi_solver::{solve_rqe, SolverOptions};
use rqe_core::Result;

fn main() -> Result<()> {
    let game = BimatrixGame::from_rows(
        vec![vec![0.9, -0.3], vec![-0.5, 0.7]],
        vec![vec![-0.2, 0.8], vec![0.6, -0.4]],
    )?;
    let reg = QuantalRegularizer::new(RegKind::Entropy, 2.0)?;
    let pen = RiskPenalty::new(PenaltyKind::ScaledSqL2, 1.0)?;
    let cfg = RQEConfig::new(reg, pen, reg, pen, InteriorFloor::new(1e-9)?);

    let cert = certify_alpha(game.dims(), &cfg)?;
    assert!(cert.certified);
    println!("alpha = {:.4} ({})", cert.alpha, cert.method.as_str());

    let report = solve_rqe(&game, &cfg, &SolverOptions::default())?;
    println!(
        "pi1 = {:?}\npi2 = {:?}\nresidual = {:.2e} after {} iterations",
        report.z_star.pi1(),
        report.z_star.pi2(),
        report.residual,
        report.iters
    );
    Ok(())
}
