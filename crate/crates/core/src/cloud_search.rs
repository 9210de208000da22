//! Cloud overrides of the memoryless c-family rule, and the randomized
//! winner's-rule search over their parameters.
//!
//! A pre-cloud is a cluster of earlier values just below the current one;
//! many of them suggest the current value is less exceptional than it looks,
//! so a below-threshold value may be passed. A post-cloud is a cluster just
//! above it; those values are already beaten, so an above-threshold value
//! within `accept_margin` may be accepted.

use std::ops::Bound;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::game::{evaluate_policy, Decision, GameInstance, History, Loss, StrategyPolicy};
use crate::rng::{derive_seed, stream_rng, StreamRng};
use crate::MEMORYLESS_U;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OverrideRule {
    /// Pass when the pre-cloud holds at least `theta_pre` values; accept
    /// when the post-cloud holds at least `theta_post`.
    Count,
    /// Compare the two clouds: pass when the pre-cloud outnumbers the
    /// post-cloud by `delta_threshold`, accept in the mirrored case.
    Difference { delta_threshold: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPolicy {
    pub base_c: f64,
    pub d_pc: f64,
    pub theta_pre: u32,
    pub p_pc: f64,
    pub theta_post: u32,
    pub accept_margin: f64,
    pub rule: OverrideRule,
    /// Reserved for randomized override rules; the built-in rules are
    /// deterministic and ignore it.
    #[serde(default)]
    pub rng: Option<u64>,
}

impl CloudPolicy {
    /// The plain c-family rule: every cloud parameter zero.
    pub fn baseline(base_c: f64) -> Self {
        CloudPolicy {
            base_c,
            d_pc: 0.0,
            theta_pre: 0,
            p_pc: 0.0,
            theta_post: 0,
            accept_margin: 0.0,
            rule: OverrideRule::Count,
            rng: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_c > 1.0 && self.base_c.is_finite()) {
            return Err(invalid(format!("base_c must exceed 1, got {}", self.base_c)));
        }
        for (name, v) in [("d_pc", self.d_pc), ("p_pc", self.p_pc), ("accept_margin", self.accept_margin)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be a finite nonnegative width, got {v}")));
            }
        }
        Ok(())
    }

    /// An empty pre-cloud window cannot dissuade; without it the zero
    /// threshold `theta_pre = 0` would veto every acceptance.
    fn pre_active(&self) -> bool {
        self.d_pc > 0.0
    }

    fn post_active(&self) -> bool {
        self.p_pc > 0.0 && self.accept_margin > 0.0
    }

    pub fn threshold(&self, k: usize, n: usize) -> f64 {
        self.base_c / ((n - k) as f64 + self.base_c)
    }

    /// Decision plus whether it overrode the baseline rule.
    pub fn decide_explained(&self, k: usize, x: f64, history: &History, n: usize) -> (Decision, bool) {
        if k >= n {
            return (Decision::Accept, false);
        }
        let phi = self.threshold(k, n);
        let base = if x <= phi { Decision::Accept } else { Decision::Pass };
        let pre = || {
            history.count_between(Bound::Included((x - self.d_pc).max(0.0)), Bound::Excluded(x)) as i64
        };
        let post = || {
            history.count_between(Bound::Excluded(x), Bound::Included((x + self.p_pc).min(1.0))) as i64
        };
        match base {
            Decision::Accept if self.pre_active() => {
                let dissuade = match self.rule {
                    OverrideRule::Count => pre() >= self.theta_pre as i64,
                    OverrideRule::Difference { delta_threshold } => {
                        let post = if self.p_pc > 0.0 { post() } else { 0 };
                        pre() - post >= delta_threshold
                    }
                };
                if dissuade {
                    return (Decision::Pass, true);
                }
            }
            Decision::Pass if self.post_active() && x <= phi + self.accept_margin => {
                let persuade = match self.rule {
                    OverrideRule::Count => post() >= self.theta_post as i64,
                    OverrideRule::Difference { delta_threshold } => {
                        let pre = if self.d_pc > 0.0 { pre() } else { 0 };
                        post() - pre >= delta_threshold
                    }
                };
                if persuade {
                    return (Decision::Accept, true);
                }
            }
            _ => {}
        }
        (base, false)
    }
}

impl StrategyPolicy for CloudPolicy {
    fn decide(&self, k: usize, x: f64, history: &History, n: usize) -> Decision {
        self.decide_explained(k, x, history, n).0
    }

    fn uses_history(&self) -> bool {
        self.pre_active() || self.post_active()
    }
}

/// `cloud_decide` as a free function.
pub fn cloud_decide(policy: &CloudPolicy, k: usize, x: f64, history: &History, n: usize) -> Decision {
    policy.decide(k, x, history, n)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayAudit {
    pub accepted: usize,
    pub rank: usize,
    pub pass_overrides: usize,
    pub accept_overrides: usize,
}

/// Plays a cloud policy on a full instance and counts its overrides.
pub fn play_audited(policy: &CloudPolicy, instance: &GameInstance) -> PlayAudit {
    let n = instance.n;
    let mut history = History::new(true);
    let mut audit = PlayAudit::default();
    for (i, &x) in instance.values.iter().enumerate() {
        let k = i + 1;
        let (d, overridden) = policy.decide_explained(k, x, &history, n);
        if overridden {
            match d {
                Decision::Pass => audit.pass_overrides += 1,
                Decision::Accept => audit.accept_overrides += 1,
            }
        }
        if d == Decision::Accept || k == n {
            audit.accepted = k;
            audit.rank = instance.loss_of(k).expect("index in range");
            return audit;
        }
        history.push(x);
    }
    unreachable!("acceptance is forced at k = n")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub mean: f64,
    pub se: f64,
}

pub fn evaluate_batch(policy: &CloudPolicy, n: usize, batch: u64, seed: u64) -> Result<BatchResult> {
    policy.validate()?;
    let rep = evaluate_policy(policy, n, batch, seed, Loss::Rank)?;
    Ok(BatchResult { mean: rep.mean_rank, se: rep.std_error })
}

/// Step sizes of the perturbation kernel. Widths move by a factor
/// exp(±width), `base_c - 1` by exp(±c), counts by ±count. Zero everywhere
/// means the search never moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationScales {
    pub width: f64,
    pub count: u32,
    pub c: f64,
}

impl PerturbationScales {
    pub fn zero() -> Self {
        PerturbationScales { width: 0.0, count: 0, c: 0.0 }
    }

    fn is_zero(&self) -> bool {
        self.width == 0.0 && self.count == 0 && self.c == 0.0
    }
}

impl Default for PerturbationScales {
    fn default() -> Self {
        PerturbationScales { width: 0.5, count: 1, c: 0.05 }
    }
}

/// What the winner's rule searches over.
pub trait SearchSpace: Sync {
    type Point: Clone + PartialEq + Serialize + std::fmt::Debug;

    /// Mean loss and its standard error over `batch` runs.
    fn evaluate(&self, point: &Self::Point, batch: u64, seed: u64) -> Result<BatchResult>;

    /// One candidate move changing a single parameter, or `None` when the
    /// draw is degenerate (the caller redraws).
    fn perturb(&self, point: &Self::Point, scales: &PerturbationScales, rng: &mut StreamRng) -> Option<Self::Point>;
}

/// Cloud policies at a fixed n.
#[derive(Debug, Clone, Copy)]
pub struct CloudSpace {
    pub n: usize,
}

/// Starting width for a parameter that is still zero, so multiplicative
/// steps can leave the origin.
const WIDTH_SEED: f64 = 0.002;

impl SearchSpace for CloudSpace {
    type Point = CloudPolicy;

    fn evaluate(&self, point: &CloudPolicy, batch: u64, seed: u64) -> Result<BatchResult> {
        evaluate_batch(point, self.n, batch, seed)
    }

    fn perturb(&self, p: &CloudPolicy, s: &PerturbationScales, rng: &mut StreamRng) -> Option<CloudPolicy> {
        let mut q = p.clone();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let widen = |w: f64| {
            if w == 0.0 {
                if sign > 0.0 {
                    WIDTH_SEED
                } else {
                    0.0
                }
            } else {
                (w * (sign * s.width).exp()).min(1.0)
            }
        };
        let step = |v: u32| {
            if sign > 0.0 {
                v.checked_add(s.count)
            } else {
                v.checked_sub(s.count)
            }
        };
        let params = if matches!(p.rule, OverrideRule::Difference { .. }) { 7 } else { 6 };
        match rng.random_range(0..params) {
            0 => q.base_c = 1.0 + (p.base_c - 1.0) * (sign * s.c).exp(),
            1 if s.width > 0.0 => q.d_pc = widen(p.d_pc),
            2 if s.width > 0.0 => q.p_pc = widen(p.p_pc),
            3 if s.width > 0.0 => q.accept_margin = widen(p.accept_margin),
            4 => q.theta_pre = step(p.theta_pre)?,
            5 => q.theta_post = step(p.theta_post)?,
            6 => {
                if let OverrideRule::Difference { delta_threshold } = p.rule {
                    q.rule = OverrideRule::Difference {
                        delta_threshold: delta_threshold + sign as i64 * s.count as i64,
                    };
                }
            }
            _ => return None,
        }
        (q != *p && q.validate().is_ok()).then_some(q)
    }
}

/// A synthetic environment with known answer: the point `dominant` has
/// mean `good`, every other point has mean `bad`, and each run adds normal
/// noise with standard deviation `noise`.
#[derive(Debug, Clone, Copy)]
pub struct RiggedSpace {
    pub points: usize,
    pub dominant: usize,
    pub good: f64,
    pub bad: f64,
    pub noise: f64,
}

impl SearchSpace for RiggedSpace {
    type Point = usize;

    fn evaluate(&self, point: &usize, batch: u64, seed: u64) -> Result<BatchResult> {
        let mean = if *point == self.dominant { self.good } else { self.bad };
        let se = self.noise / (batch as f64).sqrt();
        let mut rng = stream_rng(seed, 0);
        let noise = Normal::new(0.0, se).map_err(|e| invalid(e.to_string()))?;
        Ok(BatchResult { mean: mean + noise.sample(&mut rng), se })
    }

    fn perturb(&self, point: &usize, s: &PerturbationScales, rng: &mut StreamRng) -> Option<usize> {
        if s.is_zero() || self.points < 2 {
            return None;
        }
        let q = rng.random_range(0..self.points);
        (q != *point).then_some(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub batch: u64,
    pub rounds: usize,
    pub scales: PerturbationScales,
    pub seed: u64,
    /// Judge each round by a single run instead of a batch mean.
    #[serde(default)]
    pub single_run: bool,
    #[serde(default = "default_u")]
    pub baseline_u: f64,
}

fn default_u() -> f64 {
    MEMORYLESS_U
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Beat U, so the same policy runs again.
    Kept,
    /// Missed U and the coin said repeat.
    Repeated,
    /// Missed U and the coin said move.
    Perturbed,
    /// Missed U, the coin said move, but no move was possible.
    Stuck,
}

/// One line of the audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord<P> {
    pub round: usize,
    pub policy: P,
    pub mean: f64,
    pub se: f64,
    pub kept_or_perturbed: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState<P> {
    pub current: P,
    pub best: P,
    pub best_value: f64,
    pub history: Vec<AuditRecord<P>>,
    #[serde(rename = "baseline_U")]
    pub baseline_u: f64,
}

const REDRAWS: usize = 32;

/// The randomized winner's rule: a policy whose run beat U is used again;
/// otherwise a fair coin chooses between repeating it and changing one of
/// its parameters slightly.
pub fn winner_rule_search<S: SearchSpace>(
    space: &S,
    start: S::Point,
    config: &SearchConfig,
    mut on_round: impl FnMut(&AuditRecord<S::Point>),
) -> Result<SearchState<S::Point>> {
    if config.rounds == 0 {
        return Err(invalid("rounds must be at least 1"));
    }
    if config.batch == 0 {
        return Err(invalid("batch must be at least 1"));
    }
    let batch = if config.single_run { 1 } else { config.batch };
    let mut rng = stream_rng(derive_seed(config.seed, 0x5ea2c4), 0);
    let mut current = start;
    let mut best = current.clone();
    let mut best_value = f64::INFINITY;
    let mut history = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let r = space.evaluate(&current, batch, derive_seed(config.seed, round as u64))?;
        if r.mean < best_value {
            best_value = r.mean;
            best = current.clone();
        }
        let (action, next) = if r.mean < config.baseline_u {
            (Action::Kept, None)
        } else if rng.random::<bool>() {
            (Action::Repeated, None)
        } else {
            let moved = (0..REDRAWS).find_map(|_| space.perturb(&current, &config.scales, &mut rng));
            match moved {
                Some(p) => (Action::Perturbed, Some(p)),
                None => (Action::Stuck, None),
            }
        };
        let record = AuditRecord { round, policy: current.clone(), mean: r.mean, se: r.se, kept_or_perturbed: action };
        on_round(&record);
        history.push(record);
        if let Some(p) = next {
            current = p;
        }
    }
    Ok(SearchState { current, best, best_value, history, baseline_u: config.baseline_u })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packed(x: f64, offsets: &[f64]) -> History {
        let vals: Vec<f64> = offsets.iter().map(|o| x + o).collect();
        History::from_values(&vals)
    }

    #[test]
    fn baseline_accepts_below_threshold() {
        let p = CloudPolicy::baseline(2.0);
        let h = History::from_values(&[0.1, 0.2]);
        assert_eq!(cloud_decide(&p, 3, 0.01, &h, 100), Decision::Accept);
        assert_eq!(cloud_decide(&p, 3, 0.5, &h, 100), Decision::Pass);
        assert_eq!(cloud_decide(&p, 100, 0.99, &h, 100), Decision::Accept);
    }

    #[test]
    fn five_close_values_below_dissuade() {
        let n = 100;
        let mut p = CloudPolicy::baseline(2.0);
        p.d_pc = 0.01;
        p.theta_pre = 5;
        let x = 0.9 * p.threshold(10, n);
        let h = packed(x, &[-0.001, -0.002, -0.003, -0.004, -0.005, 0.3]);
        assert_eq!(cloud_decide(&p, 10, x, &h, n), Decision::Pass);
        let h4 = packed(x, &[-0.001, -0.002, -0.003, -0.004, 0.3]);
        assert_eq!(cloud_decide(&p, 10, x, &h4, n), Decision::Accept);
    }

    #[test]
    fn five_close_values_above_persuade() {
        let n = 100;
        let mut p = CloudPolicy::baseline(2.0);
        p.p_pc = 0.01;
        p.theta_post = 5;
        let phi = p.threshold(10, n);
        let x = phi + 0.002;
        p.accept_margin = 0.003;
        let h = packed(x, &[0.001, 0.002, 0.003, 0.004, 0.005]);
        assert_eq!(cloud_decide(&p, 10, x, &h, n), Decision::Accept);
        p.accept_margin = 0.001;
        assert_eq!(cloud_decide(&p, 10, x, &h, n), Decision::Pass);
    }

    #[test]
    fn difference_rule_compares_clouds() {
        let n = 100;
        let mut p = CloudPolicy::baseline(2.0);
        p.d_pc = 0.01;
        p.p_pc = 0.01;
        p.rule = OverrideRule::Difference { delta_threshold: 2 };
        let x = 0.5 * p.threshold(10, n);
        let h = packed(x, &[-0.001, -0.002, -0.003, 0.001]);
        assert_eq!(cloud_decide(&p, 10, x, &h, n), Decision::Pass);
        let h = packed(x, &[-0.001, -0.002, 0.001]);
        assert_eq!(cloud_decide(&p, 10, x, &h, n), Decision::Accept);
    }

    #[test]
    fn always_dissuaded_n2_waits_for_the_end() {
        let mut p = CloudPolicy::baseline(2.0);
        p.d_pc = 0.5;
        let r = evaluate_batch(&p, 2, 200_000, 3).unwrap();
        assert!((r.mean - 1.5).abs() < 4.0 * r.se, "{r:?}");
        let one = evaluate_batch(&p, 1, 100, 3).unwrap();
        assert_eq!((one.mean, one.se), (1.0, 0.0));
    }

    #[test]
    fn zero_scales_never_move() {
        let space = CloudSpace { n: 50 };
        let mut rng = stream_rng(1, 0);
        let p = CloudPolicy::baseline(2.0);
        for _ in 0..100 {
            assert!(space.perturb(&p, &PerturbationScales::zero(), &mut rng).is_none());
        }
    }

    #[test]
    fn perturbation_changes_one_parameter() {
        let space = CloudSpace { n: 50 };
        let mut rng = stream_rng(2, 0);
        let p = CloudPolicy::baseline(2.0);
        for _ in 0..200 {
            if let Some(q) = space.perturb(&p, &PerturbationScales::default(), &mut rng) {
                let changed = [
                    q.base_c != p.base_c,
                    q.d_pc != p.d_pc,
                    q.p_pc != p.p_pc,
                    q.accept_margin != p.accept_margin,
                    q.theta_pre != p.theta_pre,
                    q.theta_post != p.theta_post,
                ];
                assert_eq!(changed.iter().filter(|&&c| c).count(), 1);
                assert!(q.validate().is_ok());
            }
        }
    }
}
