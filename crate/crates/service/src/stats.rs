//! Human-versus-machine scoreboard and the compatibility ledger, both
//! driven by closed sessions in the order they were stored.

use robbins_core::namur::{
    objective_grid, CompatibilityLedger, DecisionTrace, Objective, ObjectiveHypothesis, Session, TableSet,
};
use robbins_core::Result;
use serde::{Deserialize, Serialize};

use crate::store::{Player, StoredSession};

/// Integer tallies, so a recount from the records matches exactly.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scoreboard {
    pub games: u64,
    pub human_rank_sum: u64,
    pub machine_rank_sum: u64,
    pub human_better: u64,
    pub machine_better: u64,
    pub ties: u64,
    /// Games played with a declared objective, secret or not.
    pub objective_games: u64,
    pub human_successes: u64,
    pub machine_successes: u64,
}

impl Scoreboard {
    pub fn human_mean(&self) -> Option<f64> {
        (self.games > 0).then(|| self.human_rank_sum as f64 / self.games as f64)
    }

    pub fn machine_mean(&self) -> Option<f64> {
        (self.games > 0).then(|| self.machine_rank_sum as f64 / self.games as f64)
    }

    fn add(&mut self, stored: &StoredSession) {
        let r = &stored.record;
        let (Some(out), Some(machine)) = (&r.outcome, &r.machine) else { return };
        self.games += 1;
        self.human_rank_sum += out.final_rank as u64;
        self.machine_rank_sum += machine.final_rank as u64;
        match out.final_rank.cmp(&machine.final_rank) {
            std::cmp::Ordering::Less => self.human_better += 1,
            std::cmp::Ordering::Greater => self.machine_better += 1,
            std::cmp::Ordering::Equal => self.ties += 1,
        }
        if let Some(o) = r.objective {
            self.objective_games += 1;
            self.human_successes += o.satisfied(out.final_rank, out.n) as u64;
            self.machine_successes += machine.success as u64;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub scoreboard: Scoreboard,
    pub ledger: CompatibilityLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreboardView {
    #[serde(flatten)]
    pub tallies: Scoreboard,
    pub human_mean_rank: Option<f64>,
    pub machine_mean_rank: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerView {
    pub beta: f64,
    pub hypotheses: Vec<ObjectiveHypothesis>,
    pub argmax: Objective,
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsView {
    pub scoreboard: ScoreboardView,
    pub ledger: LedgerView,
}

impl Stats {
    pub fn new(beta: f64) -> Result<Self> {
        Ok(Stats { scoreboard: Scoreboard::default(), ledger: CompatibilityLedger::new(objective_grid(), beta)? })
    }

    /// Recount from stored sessions.
    pub fn rebuild<'a>(beta: f64, stored: impl IntoIterator<Item = &'a StoredSession>, tables: &TableSet) -> Result<Self> {
        let mut s = Stats::new(beta)?;
        for st in stored {
            s.apply(st, tables);
        }
        Ok(s)
    }

    /// Attaches the machine's shadow play to a session that just closed and
    /// returns the document to store. The machine pursues the declared
    /// objective, or the ledger's best guess before this game counts.
    pub fn finish(&self, session: &mut Session, player: Player, tables: &TableSet) -> Result<StoredSession> {
        let objective = session.objective.unwrap_or_else(|| self.ledger.argmax());
        let shadow = session.machine_shadow(objective, tables)?;
        session.set_machine(shadow);
        Ok(StoredSession { player, record: session.record() })
    }

    /// Counts a stored session. Only human games enter the scoreboard and
    /// the ledger, which is about the human's objective.
    pub fn apply(&mut self, stored: &StoredSession, tables: &TableSet) {
        if stored.player != Player::Human {
            return;
        }
        let r = &stored.record;
        let Some(out) = &r.outcome else { return };
        self.scoreboard.add(stored);
        let trace = DecisionTrace::from_parts(r.m, &r.arrivals, &r.belief_trace, &r.decisions, out.forced);
        self.ledger.update_from_decisions(&r.id, &trace, tables);
        self.ledger.update_compatibility(&r.id, out.final_rank, out.n);
    }

    pub fn view(&self) -> StatsView {
        StatsView {
            scoreboard: ScoreboardView {
                tallies: self.scoreboard.clone(),
                human_mean_rank: self.scoreboard.human_mean(),
                machine_mean_rank: self.scoreboard.machine_mean(),
            },
            ledger: LedgerView {
                beta: self.ledger.beta,
                hypotheses: self.ledger.hypotheses(),
                argmax: self.ledger.argmax(),
                updates: self.ledger.updates.len(),
            },
        }
    }
}
