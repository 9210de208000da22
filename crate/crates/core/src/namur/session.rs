use rand::Rng;
use serde::{Deserialize, Serialize};

use super::basket::DistributionBasket;
use super::fit::{FitNormalization, FitTracker};
use super::strategy::{rule_decision, Objective, TableSet};
use crate::error::{invalid, Error, Result};
use crate::game::{Decision, GameInstance};
use crate::rng::stream_rng;

/// What the player sees of one arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub t: f64,
    pub rel_rank: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionStatus {
    Open,
    /// 1-based arrival index.
    Accepted { index: usize },
    /// Every arrival was passed; the last one was taken.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub final_rank: u32,
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "true_F")]
    pub true_f: usize,
    pub accepted_index: usize,
    pub forced: bool,
}

/// The hidden instance, disclosed only after close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenInstance {
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "true_F")]
    pub true_f: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub final_ranks: Vec<u32>,
    pub rel_ranks: Vec<u32>,
}

impl HiddenInstance {
    fn new(true_f: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let view = GameInstance::from_values(values.clone())?.rank_view();
        Ok(HiddenInstance {
            n: times.len() as u32,
            true_f,
            times,
            values,
            final_ranks: view.final_ranks.iter().map(|&r| r as u32).collect(),
            rel_ranks: view.relative_ranks.iter().map(|&r| r as u32).collect(),
        })
    }
}

/// Posterior over (basket entry, N) from the arrival times seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    /// joint[f][N − 1].
    pub joint: Vec<Vec<f64>>,
}

impl Belief {
    pub fn prior(k: usize, m: u32) -> Self {
        let w = 1.0 / (k as f64 * m as f64);
        Belief { joint: vec![vec![w; m as usize]; k] }
    }

    /// Exact posterior under the uniform prior: given F and N, the first j
    /// arrival times have density N!/(N − j)! ∏ g(T_i), and the rest fall
    /// after t with probability (1 − G(t))^{N − j}.
    pub fn update(basket: &DistributionBasket, m: u32, times: &[f64], t: f64) -> Option<Self> {
        let j = times.len();
        let m = m as usize;
        let mut logs = vec![vec![f64::NEG_INFINITY; m]; basket.len()];
        for (f, row) in logs.iter_mut().enumerate() {
            let dens: f64 = times.iter().map(|&s| basket.pdf(f, s).ln()).sum();
            let tail = (1.0 - basket.cdf(f, t)).ln();
            if j > m || !dens.is_finite() {
                continue;
            }
            let mut falling = (1..=j).map(|i| (i as f64).ln()).sum::<f64>();
            for n in j.max(1)..=m {
                if n > j {
                    falling += (n as f64).ln() - ((n - j) as f64).ln();
                }
                let extra = (n - j) as f64;
                row[n - 1] = falling + dens + if extra > 0.0 { extra * tail } else { 0.0 };
            }
        }
        let max = logs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        let mut joint: Vec<Vec<f64>> =
            logs.iter().map(|r| r.iter().map(|&l| (l - max).exp()).collect()).collect();
        let total: f64 = joint.iter().flatten().sum();
        joint.iter_mut().flatten().for_each(|w| *w /= total);
        Some(Belief { joint })
    }

    pub fn f_marginal(&self) -> Vec<f64> {
        self.joint.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn n_marginal(&self) -> Vec<f64> {
        let m = self.joint[0].len();
        (0..m).map(|n| self.joint.iter().map(|r| r[n]).sum()).collect()
    }

    /// Posterior median of N given entry `f`.
    pub fn n_median_given(&self, f: usize) -> u32 {
        let row = &self.joint[f];
        let total: f64 = row.iter().sum();
        let mut acc = 0.0;
        for (i, w) in row.iter().enumerate() {
            acc += w;
            if acc >= 0.5 * total {
                return i as u32 + 1;
            }
        }
        row.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub j: usize,
    pub t: f64,
    /// Basket entry closest to the data (conditional normalization).
    pub fitted: usize,
    /// τ_j = F̃_j(T_j) in uniform time.
    pub tau: f64,
    pub f_weights: Vec<f64>,
    pub n_median: u32,
    pub n_mean: f64,
}

/// The machine's shadow game on the same instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineOutcome {
    pub objective: Objective,
    pub decisions: Vec<Decision>,
    pub final_rank: u32,
    pub success: bool,
}

/// What a session reports when it moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SessionEvent {
    Arrival { index: usize, t: f64, rel_rank: u32 },
    Decision { index: usize, decision: Decision, forced: bool },
    Closed { final_rank: u32, forced: bool },
}

/// Fitted entry and uniform time τ = F̃(t) after `t` joins the tracker.
pub fn uniform_time(basket: &DistributionBasket, tracker: &mut FitTracker, t: f64) -> Result<(usize, f64)> {
    let fitted = if basket.len() == 1 {
        0
    } else {
        tracker.push(basket, t)?;
        tracker.best(basket, FitNormalization::Conditional)?
    };
    Ok((fitted, basket.cdf(fitted, t)))
}

/// [`uniform_time`] for every prefix of `times`.
pub fn uniform_times(basket: &DistributionBasket, times: &[f64]) -> Result<Vec<(usize, f64)>> {
    let mut tracker = FitTracker::new(basket);
    times.iter().map(|&t| uniform_time(basket, &mut tracker, t)).collect()
}

/// One live game: N ~ Uniform{1..M}, F drawn from the basket, arrivals at
/// the order statistics of N draws from F, values uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub m: u32,
    pub basket: DistributionBasket,
    pub seed: u64,
    pub objective: Option<Objective>,
    pub objective_secret: bool,
    hidden: HiddenInstance,
    revealed: Vec<Arrival>,
    decisions: Vec<Decision>,
    status: SessionStatus,
    forced: bool,
    belief: Belief,
    belief_trace: Vec<BeliefSummary>,
    tracker: FitTracker,
    machine: Option<MachineOutcome>,
}

pub fn new_session(m: u32, basket: &DistributionBasket, seed: u64) -> Result<Session> {
    if m == 0 {
        return Err(invalid("M must be at least 1"));
    }
    basket.validate()?;
    let mut rng = stream_rng(seed, 0);
    let n = rng.random_range(1..=m);
    let f = rng.random_range(0..basket.len());
    let mut times: Vec<f64> = (0..n).map(|_| basket.quantile(f, rng.random())).collect();
    times.sort_by(f64::total_cmp);
    let values = (0..n).map(|_| rng.random()).collect();
    Session::from_hidden(format!("{seed:016x}"), m, basket.clone(), seed, f, times, values)
}

impl Session {
    /// A session over an explicit instance; N is `times.len()`.
    pub fn from_hidden(
        id: String,
        m: u32,
        basket: DistributionBasket,
        seed: u64,
        true_f: usize,
        times: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        basket.validate()?;
        if times.is_empty() || times.len() != values.len() || times.len() as u64 > m as u64 {
            return Err(invalid("need 1 ≤ N ≤ M arrivals with one value each"));
        }
        if true_f >= basket.len() || times.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("bad basket index or unsorted times"));
        }
        let belief = Belief::prior(basket.len(), m);
        let tracker = FitTracker::new(&basket);
        Ok(Session {
            id,
            m,
            hidden: HiddenInstance::new(true_f, times, values)?,
            basket,
            seed,
            objective: None,
            objective_secret: false,
            revealed: Vec::new(),
            decisions: Vec::new(),
            status: SessionStatus::Open,
            forced: false,
            belief,
            belief_trace: Vec::new(),
            tracker,
            machine: None,
        })
    }

    pub fn with_objective(mut self, objective: Option<Objective>, secret: bool) -> Result<Self> {
        if let Some(o) = objective {
            o.validate()?;
        }
        self.objective = objective;
        self.objective_secret = secret;
        Ok(self)
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn is_open(&self) -> bool {
        self.status == SessionStatus::Open
    }

    pub fn revealed(&self) -> &[Arrival] {
        &self.revealed
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn belief_trace(&self) -> &[BeliefSummary] {
        &self.belief_trace
    }

    /// True when the newest arrival still awaits a decision.
    pub fn pending(&self) -> bool {
        self.is_open() && self.decisions.len() < self.revealed.len()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        let index = match self.status {
            SessionStatus::Open => return None,
            SessionStatus::Accepted { index } => index,
            SessionStatus::Exhausted => self.hidden.n as usize,
        };
        Some(Outcome {
            final_rank: self.hidden.final_ranks[index - 1],
            n: self.hidden.n,
            true_f: self.hidden.true_f,
            accepted_index: index,
            forced: self.forced,
        })
    }

    /// The hidden instance, available once the session is closed.
    pub fn hidden(&self) -> Option<&HiddenInstance> {
        (!self.is_open()).then_some(&self.hidden)
    }

    fn conflict_if_closed(&self) -> Result<()> {
        if self.is_open() {
            Ok(())
        } else {
            Err(Error::Conflict(format!("session {} is closed", self.id)))
        }
    }

    /// Reveals the next arrival. An undecided arrival is passed first. With
    /// nothing left to reveal the last arrival is taken and the session
    /// closes.
    pub fn advance(&mut self) -> Result<Vec<SessionEvent>> {
        self.conflict_if_closed()?;
        let mut events = Vec::new();
        if self.pending() {
            events.extend(self.decide(Decision::Pass)?);
            if !self.is_open() {
                return Ok(events);
            }
        }
        let j = self.revealed.len();
        if j == self.hidden.n as usize {
            self.status = SessionStatus::Exhausted;
            self.forced = true;
            let final_rank = self.hidden.final_ranks[j - 1];
            events.push(SessionEvent::Closed { final_rank, forced: true });
            return Ok(events);
        }
        let arrival = Arrival { t: self.hidden.times[j], rel_rank: self.hidden.rel_ranks[j] };
        self.revealed.push(arrival);
        let times: Vec<f64> = self.revealed.iter().map(|a| a.t).collect();
        if let Some(b) = Belief::update(&self.basket, self.m, &times, arrival.t) {
            self.belief = b;
        }
        let (fitted, tau) = uniform_time(&self.basket, &mut self.tracker, arrival.t)?;
        let n_marg = self.belief.n_marginal();
        self.belief_trace.push(BeliefSummary {
            j: j + 1,
            t: arrival.t,
            fitted,
            tau,
            f_weights: self.belief.f_marginal(),
            n_median: self.belief.n_median_given(fitted),
            n_mean: n_marg.iter().enumerate().map(|(i, w)| (i + 1) as f64 * w).sum(),
        });
        events.push(SessionEvent::Arrival { index: j + 1, t: arrival.t, rel_rank: arrival.rel_rank });
        Ok(events)
    }

    /// Decides on the newest arrival. Passing the M-th arrival is impossible
    /// since no more can come, so it is taken instead.
    pub fn decide(&mut self, decision: Decision) -> Result<Vec<SessionEvent>> {
        self.conflict_if_closed()?;
        if !self.pending() {
            return Err(Error::Conflict("no arrival awaits a decision".into()));
        }
        let j = self.revealed.len();
        let forced = decision == Decision::Pass && j as u64 == self.m as u64;
        let decision = if forced { Decision::Accept } else { decision };
        self.decisions.push(decision);
        let mut events = vec![SessionEvent::Decision { index: j, decision, forced }];
        if decision == Decision::Accept {
            self.status = SessionStatus::Accepted { index: j };
            self.forced = forced;
            events.push(SessionEvent::Closed { final_rank: self.hidden.final_ranks[j - 1], forced });
        }
        Ok(events)
    }

    /// The machine's choice on the newest arrival for `objective`, from
    /// revealed data only: plug-in F̃ by conditional fit, uniform time
    /// τ = F̃(T_j), and the table rule.
    pub fn machine_decide(&self, objective: Objective, tables: &TableSet) -> Result<Decision> {
        self.conflict_if_closed()?;
        let last = self.belief_trace.last().ok_or_else(|| Error::Conflict("nothing revealed yet".into()))?;
        let a = self.revealed[last.j - 1];
        Ok(rule_decision(tables.rule_for(objective), last.j, a.rel_rank as usize, last.tau, self.m))
    }

    /// Plays the machine on the whole hidden instance, revealing arrivals to
    /// it one at a time.
    pub fn machine_shadow(&self, objective: Objective, tables: &TableSet) -> Result<MachineOutcome> {
        let rule = tables.rule_for(objective);
        let h = &self.hidden;
        let taus = uniform_times(&self.basket, &h.times)?;
        let mut decisions = Vec::new();
        let mut taken = h.n as usize;
        for (i, &(_, tau)) in taus.iter().enumerate() {
            let d = rule_decision(rule, i + 1, h.rel_ranks[i] as usize, tau, self.m);
            decisions.push(d);
            if d == Decision::Accept {
                taken = i + 1;
                break;
            }
        }
        let final_rank = h.final_ranks[taken - 1];
        Ok(MachineOutcome { objective, decisions, final_rank, success: objective.satisfied(final_rank, h.n) })
    }

    pub fn set_machine(&mut self, outcome: MachineOutcome) {
        self.machine = Some(outcome);
    }

    pub fn machine(&self) -> Option<&MachineOutcome> {
        self.machine.as_ref()
    }

    /// Every event the session has emitted so far, rebuilt from its state.
    /// Event ids on the wire are positions in this list, so a reconnecting
    /// client can resume after a restart.
    pub fn event_log(&self) -> Vec<SessionEvent> {
        let mut log = Vec::with_capacity(2 * self.revealed.len() + 1);
        for (i, a) in self.revealed.iter().enumerate() {
            log.push(SessionEvent::Arrival { index: i + 1, t: a.t, rel_rank: a.rel_rank });
            if let Some(&decision) = self.decisions.get(i) {
                let forced = self.forced && self.status == SessionStatus::Accepted { index: i + 1 };
                log.push(SessionEvent::Decision { index: i + 1, decision, forced });
            }
        }
        if let Some(o) = self.outcome() {
            log.push(SessionEvent::Closed { final_rank: o.final_rank, forced: o.forced });
        }
        log
    }

    /// The player-facing state; nothing hidden appears before close.
    pub fn view(&self) -> SessionView {
        let open = self.is_open();
        SessionView {
            id: self.id.clone(),
            m: self.m,
            a: self.basket.a,
            b: self.basket.b,
            basket_names: self.basket.names(),
            objective: if open && self.objective_secret { None } else { self.objective },
            objective_secret: self.objective_secret,
            arrivals: self.revealed.clone(),
            decisions: self.decisions.clone(),
            pending: self.pending(),
            closed: !open,
            outcome: self.outcome(),
        }
    }

    pub fn record(&self) -> SessionRecord {
        SessionRecord {
            id: self.id.clone(),
            m: self.m,
            basket: self.basket.clone(),
            seed: self.seed,
            objective: self.objective,
            objective_secret: self.objective_secret,
            arrivals: self.revealed.clone(),
            decisions: self.decisions.clone(),
            status: self.status,
            outcome: self.outcome(),
            belief_trace: self.belief_trace.clone(),
            machine: self.machine.clone(),
            instance: self.hidden().cloned(),
        }
    }

    /// Rebuilds a session from its record by regenerating the instance from
    /// the seed and replaying every decision.
    pub fn replay(record: &SessionRecord) -> Result<Session> {
        let mut s = new_session(record.m, &record.basket, record.seed)?
            .with_objective(record.objective, record.objective_secret)?;
        s.id = record.id.clone();
        for &d in &record.decisions {
            s.advance()?;
            s.decide(d)?;
        }
        let undecided = record.status == SessionStatus::Open && record.arrivals.len() > record.decisions.len();
        if record.status == SessionStatus::Exhausted || undecided {
            s.advance()?;
        }
        if s.revealed != record.arrivals || s.status != record.status {
            return Err(invalid(format!("record {} does not match its seed", record.id)));
        }
        s.machine = record.machine.clone();
        Ok(s)
    }
}

/// Redacted player-facing state. It has no field that could carry a value,
/// N or the true F while the session is open: `outcome` is filled only at
/// close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    #[serde(rename = "M")]
    pub m: u32,
    pub a: f64,
    pub b: f64,
    pub basket_names: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<Objective>,
    pub objective_secret: bool,
    pub arrivals: Vec<Arrival>,
    pub decisions: Vec<Decision>,
    pub pending: bool,
    pub closed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
}

/// The persisted form of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    #[serde(rename = "M")]
    pub m: u32,
    pub basket: DistributionBasket,
    pub seed: u64,
    pub objective: Option<Objective>,
    pub objective_secret: bool,
    pub arrivals: Vec<Arrival>,
    pub decisions: Vec<Decision>,
    pub status: SessionStatus,
    pub outcome: Option<Outcome>,
    pub belief_trace: Vec<BeliefSummary>,
    #[serde(default)]
    pub machine: Option<MachineOutcome>,
    #[serde(default)]
    pub instance: Option<HiddenInstance>,
}
