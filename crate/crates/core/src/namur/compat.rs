//! The machine's belief about a player's secret objective.
//!
//! Two kinds of evidence, both multiplicative with factors in (0, 1]:
//! outcomes (was the final rank compatible with the hypothesis?) and
//! decisions (would a player pursuing the hypothesis have acted the same
//! way at each arrival?). Weights are renormalized after every game.

use serde::{Deserialize, Serialize};

use super::session::{Arrival, BeliefSummary};
use super::strategy::{objective_grid, rule_decision, Objective, TableSet};
use crate::error::{invalid, Result};
use crate::game::Decision;

pub const DEFAULT_BETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveHypothesis {
    #[serde(flatten)]
    pub objective: Objective,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evidence {
    Outcome,
    Decisions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerUpdate {
    pub game_id: String,
    pub evidence: Evidence,
    pub factors: Vec<f64>,
}

/// What the ledger needs to know about one finished game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub m: u32,
    pub arrivals: Vec<Arrival>,
    /// Machine's uniform time at each arrival.
    pub taus: Vec<f64>,
    pub decisions: Vec<Decision>,
    /// The final decision was forced and carries no evidence.
    pub forced: bool,
}

impl DecisionTrace {
    pub fn from_parts(m: u32, arrivals: &[Arrival], trace: &[BeliefSummary], decisions: &[Decision], forced: bool) -> Self {
        DecisionTrace {
            m,
            arrivals: arrivals.to_vec(),
            taus: trace.iter().map(|b| b.tau).collect(),
            decisions: decisions.to_vec(),
            forced,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityLedger {
    pub beta: f64,
    pub grid: Vec<Objective>,
    pub weights: Vec<f64>,
    pub updates: Vec<LedgerUpdate>,
}

impl Default for CompatibilityLedger {
    fn default() -> Self {
        CompatibilityLedger::new(objective_grid(), DEFAULT_BETA).expect("default grid is valid")
    }
}

impl CompatibilityLedger {
    pub fn new(grid: Vec<Objective>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1), got {beta}")));
        }
        if grid.is_empty() {
            return Err(invalid("the hypothesis grid is empty"));
        }
        for o in &grid {
            o.validate()?;
        }
        let w = 1.0 / grid.len() as f64;
        Ok(CompatibilityLedger { beta, weights: vec![w; grid.len()], grid, updates: Vec::new() })
    }

    pub fn hypotheses(&self) -> Vec<ObjectiveHypothesis> {
        self.grid.iter().zip(&self.weights).map(|(&objective, &weight)| ObjectiveHypothesis { objective, weight }).collect()
    }

    /// Most likely objective; ties go to the earlier grid entry.
    pub fn argmax(&self) -> Objective {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        self.grid[best]
    }

    fn apply(&mut self, game_id: &str, evidence: Evidence, factors: Vec<f64>) {
        let logs: Vec<f64> = self.weights.iter().zip(&factors).map(|(w, f)| w.ln() + f.ln()).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        self.weights = raw.iter().map(|r| r / total).collect();
        self.updates.push(LedgerUpdate { game_id: game_id.to_string(), evidence, factors });
    }

    /// Outcome evidence. TOP_PERCENT(q) keeps its weight when the final rank
    /// is within ⌈qN/100⌉ and is multiplied by β otherwise; EXACT_RANK(r₀)
    /// is multiplied by β^{|r − r₀|}.
    pub fn update_compatibility(&mut self, game_id: &str, final_rank: u32, n: u32) {
        let factors = self
            .grid
            .iter()
            .map(|o| match *o {
                Objective::TopPercent { .. } => {
                    if o.satisfied(final_rank, n) {
                        1.0
                    } else {
                        self.beta
                    }
                }
                Objective::ExactRank { rank } => self.beta.powi(rank.abs_diff(final_rank) as i32),
            })
            .collect();
        self.apply(game_id, Evidence::Outcome, factors);
    }

    /// Decision evidence: β per arrival where the hypothesis' rule would have
    /// decided differently from the player.
    pub fn update_from_decisions(&mut self, game_id: &str, trace: &DecisionTrace, tables: &TableSet) {
        let informative = trace.decisions.len() - usize::from(trace.forced && !trace.decisions.is_empty());
        let factors = self
            .grid
            .iter()
            .map(|&o| {
                let rule = tables.rule_for(o);
                let mismatches = (0..informative.min(trace.taus.len()))
                    .filter(|&i| {
                        let a = trace.arrivals[i];
                        rule_decision(rule, i + 1, a.rel_rank as usize, trace.taus[i], trace.m) != trace.decisions[i]
                    })
                    .count();
                self.beta.powi(mismatches as i32)
            })
            .collect();
        self.apply(game_id, Evidence::Decisions, factors);
    }
}
