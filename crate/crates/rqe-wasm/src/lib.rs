//! Browser bindings: string-in/string-out wrappers over the solver for the
//! static demo page in `www/`. Every function takes the same JSON documents
//! the CLI reads and returns the matching result record, or `{"error": ...}`
//! when the input or the solve is bad. The crate also builds as a plain rlib
//! so the wrappers stay testable on the host.

use wasm_bindgen::prelude::*;

use rqe_core::markov_game::value_iterate;
use rqe_core::schema::{
    from_json_str, to_json_string, CertificateOut, ConfigFile, MarkovGameFile, NormalFormFile,
    SolveMgOut, SolveNfOut,
};
use rqe_core::vi_solver::{solve_rqe, InitStrategy, SolverOptions};
use rqe_core::Result;

fn options(tol: f64, seed: u64) -> SolverOptions {
    SolverOptions {
        tol,
        seed,
        init: InitStrategy::Uniform,
        ..SolverOptions::default()
    }
}

fn render(result: Result<String>) -> String {
    result.unwrap_or_else(|e| serde_json::json!({ "error": e.to_string() }).to_string())
}

/// Solves a normal-form game document to the given residual tolerance.
#[wasm_bindgen]
pub fn solve_normal_form(game_json: &str, tol: f64, seed: u32) -> String {
    render((|| -> Result<String> {
        let file: NormalFormFile = from_json_str(game_json)?;
        let (game, cfg) = file.to_parts()?;
        let report = solve_rqe(&game, &cfg, &options(tol, seed.into()))?;
        to_json_string(&SolveNfOut::build(&report, &game, &cfg)?)
    })())
}

/// Certifies a configuration document (the `config` object of the game
/// formats) at the given action counts.
#[wasm_bindgen]
pub fn certify_config(config_json: &str, a1: u32, a2: u32) -> String {
    render((|| -> Result<String> {
        let file: ConfigFile = from_json_str(config_json)?;
        let cfg = file.to_config()?;
        to_json_string(&CertificateOut::build((a1 as usize, a2 as usize), &cfg)?)
    })())
}

/// Solves a Markov game document with value iteration. `q_tol` bounds the
/// sup-norm change of the final sweep and also serves as the stage tolerance
/// for policy extraction.
#[wasm_bindgen]
pub fn solve_markov(game_json: &str, q_tol: f64, seed: u32) -> String {
    render((|| -> Result<String> {
        let file: MarkovGameFile = from_json_str(game_json)?;
        let mg = file.to_game()?;
        let opts = options(q_tol, seed.into());
        let report = value_iterate(&mg, &opts, q_tol)?;
        let out = SolveMgOut::build("vi", &report.q, &report.diffs, report.converged, &mg, &opts)?;
        to_json_string(&out)
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"{
        "player1": {"epsilon": 2.0, "nu": "entropy", "penalty": "scaled_sq_l2", "c": 1.0},
        "player2": {"epsilon": 2.0, "nu": "entropy", "penalty": "scaled_sq_l2", "c": 1.0}
    }"#;

    fn game_json() -> String {
        format!(
            r#"{{"A1": 2, "A2": 2, "R1": [[0.0, 0.0], [0.0, 0.0]], "R2": [[0.0, 0.0], [0.0, 0.0]],
                "config": {CONFIG}}}"#
        )
    }

    #[test]
    fn solve_returns_parseable_record() {
        let text = solve_normal_form(&game_json(), 1e-8, 0);
        let out: SolveNfOut = from_json_str(&text).unwrap();
        assert!(out.converged);
        for &w in out.z_star.pi1.iter() {
            assert!((w - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn certify_reports_the_analytic_constant() {
        let text = certify_config(CONFIG, 2, 2);
        let out: CertificateOut = from_json_str(&text).unwrap();
        assert!(out.certified);
        assert!((out.alpha - 0.7928932188134524).abs() < 1e-12);
    }

    #[test]
    fn markov_solve_round_trips() {
        let mg = format!(
            r#"{{"S": 1, "A1": 2, "A2": 2, "gamma": 0.05,
                "r1": [[[0.2, 0.8], [0.5, 0.1]]],
                "r2": [[[0.7, 0.2], [0.3, 0.9]]],
                "P": [[[[1.0], [1.0]], [[1.0], [1.0]]]],
                "config": {CONFIG}}}"#
        );
        let text = solve_markov(&mg, 1e-9, 0);
        let out: SolveMgOut = from_json_str(&text).unwrap();
        assert!(out.converged && out.guaranteed);
        assert_eq!(out.v1.len(), 1);
    }

    #[test]
    fn bad_input_reports_an_error_object() {
        let text = solve_normal_form("{not json", 1e-8, 0);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value["error"].as_str().unwrap().contains("line 1"));
    }
}
