//! Numerical laboratory for the problem of minimizing the expected rank of a
//! single sequentially selected observation, and for its relatives: the
//! secretary problem, memoryless threshold rules, cloud overrides, the
//! continuous-time Poisson embedding and the timed selection game.
//!
//! All randomness flows through [`rng::stream_rng`], so every Monte Carlo
//! result is reproducible from its seed regardless of thread count.

pub mod cloud_search;
pub mod error;
pub mod exact_dp;
mod fenwick;
pub mod minimize;
pub mod game;
pub mod memoryless;
pub mod namur;
pub mod poisson_ode;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
pub use game::{
    correlation_check, evaluate_policy, CorrelationEstimate, Decision, EvalReport, GameInstance,
    History, Loss, RankView, StrategyPolicy,
};

/// Upper value 3.869 of the full-information problem; a coarse ceiling for
/// every value computed here.
pub const CHOW_UPPER: f64 = 3.869;
/// Best value of the memoryless threshold family at large n.
pub const MEMORYLESS_U: f64 = 2.3318;
/// Proven bracket for the limiting memoryless value.
pub const MEMORYLESS_BRACKET: (f64, f64) = (2.29, 2.34);
/// Lower bound on the limiting full-history value (carried, not recomputed).
pub const LOWER_BOUND_L: f64 = 1.908;
