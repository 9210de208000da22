//! Instances, ranks, the strategy contract and Monte Carlo evaluation.
//!
//! Observations are i.i.d. uniform on [0, 1]. Ties, which have probability
//! zero but can appear in hand-built inputs, are broken by index: an earlier
//! observation ranks below a later one with the same value.

use std::ops::Bound;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fenwick::Fenwick;
use crate::rng::{stream_rng, StreamRng, RNG_ALGORITHM};

/// One realized sequence of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameInstance {
    pub n: usize,
    pub values: Vec<f64>,
    pub arrival_times: Option<Vec<f64>>,
    pub seed: u64,
}

impl GameInstance {
    /// Draws `n` uniform values, and when `timed` the sorted arrival times of
    /// `n` uniforms on `[0, horizon]`. Values come first from the stream, so
    /// a lazily realized prefix (see [`evaluate_policy`]) matches this one.
    pub fn sample(n: usize, seed: u64, timed: bool, horizon: f64) -> Result<Self> {
        Self::sample_stream(n, seed, 0, timed, horizon)
    }

    pub fn sample_stream(n: usize, seed: u64, stream: u64, timed: bool, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if timed && !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon must be positive and finite"));
        }
        let mut rng = stream_rng(seed, stream);
        let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let arrival_times = timed.then(|| {
            let mut t: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * horizon).collect();
            t.sort_by(f64::total_cmp);
            t
        });
        Ok(GameInstance { n, values, arrival_times, seed })
    }

    /// Wraps explicit values. They must lie in [0, 1]; ties are allowed.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("an instance needs at least one value"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("value {v} outside [0, 1]")));
        }
        Ok(GameInstance { n: values.len(), values, arrival_times: None, seed: 0 })
    }

    // Negated comparisons so that NaN fails the check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn with_arrival_times(mut self, times: Vec<f64>) -> Result<Self> {
        if times.len() != self.n {
            return Err(invalid("need one arrival time per value"));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("arrival times must be strictly increasing"));
        }
        self.arrival_times = Some(times);
        Ok(self)
    }

    /// Final rank of observation `k` (1-based): the number of observations
    /// at or below it, ties going to the earlier index.
    pub fn loss_of(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.n {
            return Err(invalid(format!("index {k} outside 1..={}", self.n)));
        }
        let i = k - 1;
        let x = self.values[i];
        Ok(self
            .values
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v < x || (v == x && j <= i))
            .count())
    }

    pub fn rank_view(&self) -> RankView {
        let n = self.n;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        let mut final_ranks = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            final_ranks[i] = pos + 1;
        }
        // Relative rank of k = 1 + number of earlier indices with smaller final rank.
        let mut seen = Fenwick::new(n);
        let relative_ranks = (0..n)
            .map(|i| {
                let below = seen.prefix(final_ranks[i] - 1) as usize;
                seen.add(final_ranks[i] - 1, 1);
                below + 1
            })
            .collect();
        RankView { relative_ranks, final_ranks }
    }

    /// Plays `policy` on this instance. Returns the accepted index (1-based)
    /// and its final rank.
    pub fn play<P: StrategyPolicy + ?Sized>(&self, policy: &P) -> (usize, usize) {
        let mut history = History::new(policy.uses_history());
        for (i, &x) in self.values.iter().enumerate() {
            let k = i + 1;
            if k == self.n || policy.decide(k, x, &history, self.n) == Decision::Accept {
                return (k, self.loss_of(k).expect("index in range"));
            }
            history.push(x);
        }
        unreachable!("acceptance is forced at k = n")
    }
}

/// Relative and final ranks of an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankView {
    pub relative_ranks: Vec<usize>,
    pub final_ranks: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Accept,
    Pass,
}

/// The values seen before the current observation.
///
/// When built with `indexed = true` it also keeps the values in 1024 buckets
/// over [0, 1] so window counts cost a couple of bucket scans instead of a
/// pass over the whole history.
#[derive(Debug, Clone)]
pub struct History {
    values: Vec<f64>,
    index: Option<(Vec<Vec<f64>>, Fenwick<u32>)>,
}

const BUCKETS: usize = 1024;

fn bucket_of(x: f64) -> usize {
    ((x * BUCKETS as f64) as usize).min(BUCKETS - 1)
}

impl History {
    pub fn new(indexed: bool) -> Self {
        History {
            values: Vec::new(),
            index: indexed.then(|| (vec![Vec::new(); BUCKETS], Fenwick::new(BUCKETS))),
        }
    }

    pub fn from_values(values: &[f64]) -> Self {
        let mut h = History::new(true);
        for &v in values {
            h.push(v);
        }
        h
    }

    pub fn push(&mut self, x: f64) {
        self.values.push(x);
        if let Some((buckets, tree)) = &mut self.index {
            let b = bucket_of(x);
            buckets[b].push(x);
            tree.add(b, 1);
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of prior values inside the interval given by the two bounds.
    pub fn count_between(&self, lo: Bound<f64>, hi: Bound<f64>) -> usize {
        let inside = |v: f64| {
            let above = match lo {
                Bound::Included(a) => v >= a,
                Bound::Excluded(a) => v > a,
                Bound::Unbounded => true,
            };
            let below = match hi {
                Bound::Included(b) => v <= b,
                Bound::Excluded(b) => v < b,
                Bound::Unbounded => true,
            };
            above && below
        };
        let Some((buckets, tree)) = &self.index else {
            return self.values.iter().filter(|&&v| inside(v)).count();
        };
        let lo_b = match lo {
            Bound::Included(a) | Bound::Excluded(a) => bucket_of(a.max(0.0)),
            Bound::Unbounded => 0,
        };
        let hi_b = match hi {
            Bound::Included(b) | Bound::Excluded(b) => bucket_of(b.clamp(0.0, 1.0)),
            Bound::Unbounded => BUCKETS - 1,
        };
        if lo_b > hi_b {
            return 0;
        }
        let edge = |b: usize| buckets[b].iter().filter(|&&v| inside(v)).count();
        if lo_b == hi_b {
            return edge(lo_b);
        }
        let interior = (tree.prefix(hi_b) - tree.prefix(lo_b + 1)) as usize;
        edge(lo_b) + interior + edge(hi_b)
    }
}

/// A selection rule. `k` is 1-based and `history` holds the `k - 1` earlier
/// values. Acceptance at `k = n` is forced by the runners regardless of what
/// `decide` returns.
pub trait StrategyPolicy: Sync {
    fn decide(&self, k: usize, x: f64, history: &History, n: usize) -> Decision;

    /// Whether `decide` reads window counts from the history. Rules that
    /// ignore the history can skip the bucket index.
    fn uses_history(&self) -> bool {
        true
    }
}

impl<F> StrategyPolicy for F
where
    F: Fn(usize, f64, &History, usize) -> Decision + Sync,
{
    fn decide(&self, k: usize, x: f64, history: &History, n: usize) -> Decision {
        self(k, x, history, n)
    }
}

/// What an accepted observation costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Rank,
    /// `min(level, rank)`.
    Truncated(usize),
}

impl Loss {
    pub fn apply(self, rank: usize) -> usize {
        match self {
            Loss::Rank => rank,
            Loss::Truncated(j) => rank.min(j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_rank: f64,
    pub std_error: f64,
    pub replications: u64,
    pub seed: u64,
    pub rng: String,
}

/// Final rank from one lazily realized instance on stream `stream`.
///
/// Values are drawn until the policy stops; the number of later values below
/// the accepted one is then a single Binomial draw, which has exactly the law
/// of counting them one by one.
pub fn play_lazily<P: StrategyPolicy + ?Sized>(policy: &P, n: usize, seed: u64, stream: u64) -> usize {
    let mut rng: StreamRng = stream_rng(seed, stream);
    let mut history = History::new(policy.uses_history());
    for k in 1..=n {
        let x: f64 = rng.random();
        if k == n || policy.decide(k, x, &history, n) == Decision::Accept {
            let before = history.values().iter().filter(|&&v| v < x).count();
            let after = if k < n {
                Binomial::new((n - k) as u64, x).expect("valid binomial").sample(&mut rng) as usize
            } else {
                0
            };
            return 1 + before + after;
        }
        history.push(x);
    }
    unreachable!("acceptance is forced at k = n")
}

/// Monte Carlo estimate of the expected loss of `policy`.
///
/// Replication `r` uses stream `r` of `seed`. Losses are integers, so the
/// sums are exact and the report does not depend on how rayon splits work.
pub fn evaluate_policy<P: StrategyPolicy + ?Sized>(
    policy: &P,
    n: usize,
    replications: u64,
    seed: u64,
    loss: Loss,
) -> Result<EvalReport> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if replications == 0 {
        return Err(invalid("replications must be at least 1"));
    }
    if let Loss::Truncated(0) = loss {
        return Err(invalid("truncation level must be at least 1"));
    }
    let (sum, sum_sq) = (0..replications)
        .into_par_iter()
        .map(|r| {
            let l = loss.apply(play_lazily(policy, n, seed, r)) as u128;
            (l, l * l)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let m = replications as f64;
    let mean = sum as f64 / m;
    let std_error = if replications > 1 {
        // Integer numerator keeps the variance free of cancellation.
        let num = (replications as u128 * sum_sq - sum * sum) as f64;
        (num / (m * (m - 1.0)) / m).sqrt()
    } else {
        0.0
    };
    Ok(EvalReport { mean_rank: mean, std_error, replications, seed, rng: RNG_ALGORITHM.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub estimate: f64,
    /// Batch-means standard error over 100 equal batches.
    pub std_error: f64,
    pub replications: u64,
    /// The exact value sqrt((n - 1) / (n + 1)).
    pub theory: f64,
}

/// Sample correlation of the `k`-th value and its final rank.
///
/// Each replication realizes the full instance on its own stream, so the
/// estimate is the plain Pearson correlation over instances.
pub fn correlation_check(n: usize, replications: u64, k: usize, seed: u64) -> Result<CorrelationEstimate> {
    if n < 2 {
        return Err(invalid("correlation needs n >= 2"));
    }
    if k == 0 || k > n {
        return Err(invalid(format!("k = {k} outside 1..={n}")));
    }
    if replications < 2 {
        return Err(invalid("need at least 2 replications"));
    }
    const BATCHES: u64 = 100;
    let batches = BATCHES.min(replications);
    let moments: Vec<[f64; 5]> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let lo = b * replications / batches;
            let hi = (b + 1) * replications / batches;
            let mut m = [0.0; 5];
            for r in lo..hi {
                let mut rng = stream_rng(seed, r);
                let mut xk = 0.0;
                let mut vals = Vec::with_capacity(n);
                for j in 1..=n {
                    let v: f64 = rng.random();
                    if j == k {
                        xk = v;
                    }
                    vals.push(v);
                }
                let rank = vals.iter().enumerate().filter(|&(j, &v)| v < xk || (v == xk && j < k)).count() as f64;
                m[0] += xk;
                m[1] += rank;
                m[2] += xk * xk;
                m[3] += rank * rank;
                m[4] += xk * rank;
            }
            m
        })
        .collect();
    let pearson = |m: &[f64; 5], cnt: f64| {
        let (mx, my) = (m[0] / cnt, m[1] / cnt);
        let sxx = m[2] / cnt - mx * mx;
        let syy = m[3] / cnt - my * my;
        let sxy = m[4] / cnt - mx * my;
        sxy / (sxx * syy).sqrt()
    };
    let mut total = [0.0; 5];
    for m in &moments {
        for i in 0..5 {
            total[i] += m[i];
        }
    }
    let estimate = pearson(&total, replications as f64);
    let per_batch: Vec<f64> = moments
        .iter()
        .enumerate()
        .map(|(b, m)| {
            let b = b as u64;
            pearson(m, ((b + 1) * replications / batches - b * replications / batches) as f64)
        })
        .collect();
    let std_error = if batches > 1 {
        let mean = per_batch.iter().sum::<f64>() / batches as f64;
        let var = per_batch.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
        (var / batches as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(CorrelationEstimate {
        estimate,
        std_error,
        replications,
        theory: ((n as f64 - 1.0) / (n as f64 + 1.0)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_counts_values_at_or_below() {
        let g = GameInstance::from_values(vec![0.2, 0.7, 0.4]).unwrap();
        assert_eq!(g.loss_of(3).unwrap(), 2);
        assert_eq!(g.loss_of(1).unwrap(), 1);
        assert!(g.loss_of(0).is_err());
        assert!(g.loss_of(4).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        let g = GameInstance::from_values(vec![0.5, 0.5, 0.5, 0.0]).unwrap();
        let view = g.rank_view();
        assert_eq!(view.final_ranks, vec![2, 3, 4, 1]);
        assert_eq!(view.relative_ranks, vec![1, 2, 3, 1]);
        let ranks: Vec<usize> = (1..=4).map(|k| g.loss_of(k).unwrap()).collect();
        assert_eq!(ranks, view.final_ranks);
    }

    #[test]
    fn worked_example_relative_ranks() {
        let g = GameInstance::from_values(vec![0.395, 0.207, 0.674, 0.358]).unwrap();
        assert_eq!(g.rank_view().relative_ranks, vec![1, 1, 3, 2]);
    }

    #[test]
    fn zero_n_is_rejected() {
        assert!(GameInstance::sample(0, 1, false, 1.0).is_err());
        assert!(GameInstance::from_values(vec![]).is_err());
        assert!(GameInstance::from_values(vec![1.5]).is_err());
    }

    #[test]
    fn timed_instances_have_increasing_times() {
        let g = GameInstance::sample(50, 3, true, 7.0).unwrap();
        let t = g.arrival_times.unwrap();
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t.iter().all(|&s| (0.0..=7.0).contains(&s)));
    }

    #[test]
    fn window_counts_agree_with_scan() {
        let g = GameInstance::sample(3000, 11, false, 1.0).unwrap();
        let indexed = History::from_values(&g.values);
        let mut plain = History::new(false);
        for &v in &g.values {
            plain.push(v);
        }
        for &(a, b) in &[(0.1, 0.1003), (0.0, 1.0), (0.42, 0.9), (0.999, 1.2), (-0.3, 0.01)] {
            for (lo, hi) in [
                (Bound::Included(a), Bound::Excluded(b)),
                (Bound::Excluded(a), Bound::Included(b)),
            ] {
                assert_eq!(indexed.count_between(lo, hi), plain.count_between(lo, hi));
            }
        }
        let x = g.values[17];
        assert_eq!(indexed.count_between(Bound::Included(x), Bound::Included(x)), 1);
    }

    #[test]
    fn lazy_play_matches_full_instance() {
        let policy = |_k: usize, x: f64, _h: &History, _n: usize| {
            if x < 0.1 {
                Decision::Accept
            } else {
                Decision::Pass
            }
        };
        for r in 0..50 {
            let g = GameInstance::sample_stream(40, 9, r, false, 1.0).unwrap();
            let (k, _) = g.play(&policy);
            // The prefix up to acceptance is identical; only the tail count is resampled.
            let lazy_rank = play_lazily(&policy, 40, 9, r);
            let before = g.values[..k - 1].iter().filter(|&&v| v < g.values[k - 1]).count();
            assert!(lazy_rank > before);
        }
    }

    #[test]
    fn n_one_has_zero_error() {
        let rep = evaluate_policy(&|_: usize, _: f64, _: &History, _: usize| Decision::Pass, 1, 100, 5, Loss::Rank)
            .unwrap();
        assert_eq!(rep.mean_rank, 1.0);
        assert_eq!(rep.std_error, 0.0);
    }

    #[test]
    fn accept_first_has_mean_half_n_plus_one() {
        let rep = evaluate_policy(&|_: usize, _: f64, _: &History, _: usize| Decision::Accept, 2, 200_000, 1, Loss::Rank)
            .unwrap();
        assert!((rep.mean_rank - 1.5).abs() < 4.0 * rep.std_error, "{rep:?}");
    }

    #[test]
    fn correlation_rejects_small_n() {
        assert!(correlation_check(1, 100, 1, 0).is_err());
    }
}
