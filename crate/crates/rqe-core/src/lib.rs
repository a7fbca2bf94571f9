//! Risk-averse quantal-response equilibria (RQE) for two-player games.
//!
//! A solver for bimatrix games in which each player best-responds through a
//! quantal-response regularizer while hedging against an adversarially chosen
//! belief about the opponent, and for discounted Markov games whose stage
//! games are of that form. The equilibrium problem is posed as a variational
//! inequality over a product of simplices; when the configured regularizers
//! make the operator strongly monotone the solution is unique, extragradient
//! iteration converges linearly, and the induced Bellman operator is a
//! contraction below an explicit discount threshold.
//!
//! Module layout:
//! - [`simplex`]: simplex vectors, Euclidean projections, seeded sampling
//! - [`regularizers`]: choice regularizers and risk penalties with gradients
//! - [`normal_form`]: bimatrix games, the equilibrium operator, monotonicity
//!   certificates
//! - [`vi_solver`]: extragradient solver, equilibrium verification, payoff
//!   sensitivity probes
//! - [`markov_game`]: discounted Markov games, Bellman operator, value
//!   iteration and smoothed Q-learning drivers
//! - [`schema`]: serde types for the JSON interchange formats

pub mod error;
pub mod markov_game;
pub mod mat;
pub mod normal_form;
pub mod regularizers;
pub mod rng;
pub mod schema;
pub mod simplex;
pub mod vi_solver;

pub use error::{Error, Result};
pub use mat::Mat;
pub use simplex::{InteriorFloor, SimplexVec};
