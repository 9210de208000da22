//! The timed selection game: arrivals at hidden times drawn from a basket of
//! distributions, a hidden count N ~ Uniform{1..M}, and only relative ranks
//! on display. The machine infers F and N online and plays threshold rules
//! in uniform time; a compatibility ledger infers a player's secret goal.

mod basket;
mod compat;
mod fit;
mod session;
mod strategy;

pub use basket::{BasketEntry, DistributionBasket, Family};
pub use compat::{
    CompatibilityLedger, DecisionTrace, Evidence, LedgerUpdate, ObjectiveHypothesis, DEFAULT_BETA,
};
pub use fit::{
    fit_distribution, fit_distribution_with, pit, squared_distance, FitNormalization, FitResult, FitTracker,
};
pub use session::{
    new_session, uniform_time, uniform_times, Arrival, Belief, BeliefSummary, HiddenInstance, MachineOutcome, Outcome, Session,
    SessionEvent, SessionRecord, SessionStatus, SessionView,
};
pub use strategy::{
    objective_grid, rule_decision, successes, training_games, Objective, Rule, TableBuild, TableSet,
    ThresholdTable, TrainingGame,
};
