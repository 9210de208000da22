//! Exact solutions: the secretary rule, full-history optimal values for
//! n ≤ 4, and truncated-loss values.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::game::{Decision, History, Loss, StrategyPolicy};
use crate::quadrature::{integrate_min, integrate_min_linear, GaussLegendre};

/// Largest n for which the full-history value is computed. The continuation
/// value at step k is an integral over the whole (k-dimensional) cloud of
/// earlier values, so cost grows like (8P)^(n-2) with P panels per level.
pub const MAX_EXACT_N: usize = 4;
/// Truncation levels above this need state spaces that grow exponentially in
/// the level; only level 2 has a one-dimensional sufficient statistic.
pub const MAX_TRUNCATION_LEVEL: usize = 2;
pub const MAX_TRUNCATION_N: usize = 50;
/// Largest n for which secretary probabilities are also returned as exact
/// fractions (the denominators are lcm(1..n)).
pub const MAX_RATIONAL_SECRETARY_N: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecretaryRule {
    pub n: usize,
    /// First index at which a relative best is accepted.
    pub cutoff: usize,
    pub success_prob: f64,
}

/// Success probability of "accept the first relative best from index
/// `cutoff` on" as an exact fraction.
pub fn secretary_success_exact(n: usize, cutoff: usize) -> Result<Ratio<i128>> {
    if n == 0 || cutoff == 0 || cutoff > n {
        return Err(invalid(format!("need 1 <= cutoff <= n, got cutoff {cutoff}, n {n}")));
    }
    if n > MAX_RATIONAL_SECRETARY_N {
        return Err(Error::ResourceBound(format!(
            "exact fractions are limited to n <= {MAX_RATIONAL_SECRETARY_N}"
        )));
    }
    if cutoff == 1 {
        return Ok(Ratio::new(1, n as i128));
    }
    let sum = (cutoff..=n).fold(Ratio::from_integer(0i128), |acc, j| acc + Ratio::new(1, j as i128 - 1));
    Ok(Ratio::new(cutoff as i128 - 1, n as i128) * sum)
}

/// Same probability in floating point, for any n.
pub fn secretary_success(n: usize, cutoff: usize) -> Result<f64> {
    if n == 0 || cutoff == 0 || cutoff > n {
        return Err(invalid(format!("need 1 <= cutoff <= n, got cutoff {cutoff}, n {n}")));
    }
    if cutoff == 1 {
        return Ok(1.0 / n as f64);
    }
    // Sum the small terms first.
    let sum: f64 = (cutoff..=n).rev().map(|j| 1.0 / (j as f64 - 1.0)).sum();
    Ok((cutoff as f64 - 1.0) / n as f64 * sum)
}

/// The optimal best-choice rule by backward induction on the probability of
/// winning after passing the first k observations.
pub fn secretary_rule(n: usize) -> Result<SecretaryRule> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    // pass[k] = success probability when the first k observations are gone.
    let mut pass = vec![0.0; n + 1];
    for k in (0..n).rev() {
        let stop_next = (k + 1) as f64 / n as f64;
        let p_best = 1.0 / (k + 1) as f64;
        pass[k] = p_best * stop_next.max(pass[k + 1]) + (1.0 - p_best) * pass[k + 1];
    }
    let cutoff = (1..=n).find(|&r| r as f64 / n as f64 >= pass[r]).unwrap_or(n);
    Ok(SecretaryRule { n, cutoff, success_prob: secretary_success(n, cutoff)? })
}

/// The sum-form rule: cutoff = min{k : sum_{j=k}^{n} 1/j <= 1}. It starts
/// later than the optimal rule for small n (at n = 4 it gives 3, not 2).
pub fn secretary_rule_sum_form(n: usize) -> Result<SecretaryRule> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let mut tail = 0.0;
    let mut cutoff = n;
    for k in (1..=n).rev() {
        tail += 1.0 / k as f64;
        if tail <= 1.0 {
            cutoff = k;
        } else {
            break;
        }
    }
    Ok(SecretaryRule { n, cutoff, success_prob: secretary_success(n, cutoff)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactValue {
    pub n: usize,
    pub value: f64,
    pub method: Method,
    pub quadrature_error_bound: f64,
}

/// Backward induction for the full-history problem at small n.
///
/// The state after passing k observations is the set of their values. The
/// continuation value of a set T with |T| = k is
/// `C(T) = ∫ min(stop(k+1, T, x), C(T ∪ {x})) dx`, where stopping on x costs
/// the expected loss given how many earlier values lie below x and that the
/// n - k - 1 later ones are uniform.
#[derive(Debug, Clone)]
pub struct SmallNDp {
    n: usize,
    loss: Loss,
    panels: usize,
    rule: GaussLegendre,
}

impl SmallNDp {
    pub fn new(n: usize, loss: Loss, panels: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if n > MAX_EXACT_N {
            return Err(Error::ResourceBound(format!(
                "full-history values are computed for n <= {MAX_EXACT_N}; the state at step k \
                 is a k-dimensional cloud and the nested quadrature is out of reach beyond that"
            )));
        }
        if let Loss::Truncated(0) = loss {
            return Err(invalid("truncation level must be at least 1"));
        }
        Ok(SmallNDp { n, loss, panels: panels.max(1), rule: GaussLegendre::new(8) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Expected loss of stopping at index k on x with `below` earlier values
    /// under x.
    pub fn stop_loss(&self, k: usize, below: usize, x: f64) -> f64 {
        let rest = self.n - k;
        match self.loss {
            Loss::Rank => 1.0 + below as f64 + rest as f64 * x,
            Loss::Truncated(level) => {
                // E min(level, 1 + below + B), B ~ Binomial(rest, x).
                let mut choose = 1.0;
                let mut acc = 0.0;
                for b in 0..=rest {
                    let pmf = choose * x.powi(b as i32) * (1.0 - x).powi((rest - b) as i32);
                    acc += pmf * level.min(1 + below + b) as f64;
                    choose *= (rest - b) as f64 / (b + 1) as f64;
                }
                acc
            }
        }
    }

    /// Continuation value after passing the values in `seen` (sorted).
    pub fn continuation(&self, seen: &[f64]) -> f64 {
        let k = seen.len();
        debug_assert!(k >= 1 && k < self.n);
        if k == self.n - 1 {
            // The last observation is forced.
            return match self.loss {
                Loss::Rank => 1.0 + seen.iter().map(|t| 1.0 - t).sum::<f64>(),
                Loss::Truncated(level) => {
                    let mut acc = 0.0;
                    let mut lo = 0.0;
                    for (i, &t) in seen.iter().chain(std::iter::once(&1.0)).enumerate() {
                        acc += (t - lo) * level.min(1 + i) as f64;
                        lo = t;
                    }
                    acc
                }
            };
        }
        if k + 2 == self.n && self.loss == Loss::Rank {
            return self.penultimate_exact(seen);
        }
        let count_below = |x: f64| seen.iter().filter(|&&t| t < x).count();
        let mut next = Vec::with_capacity(k + 1);
        integrate_min(
            |x| self.stop_loss(k + 1, count_below(x), x),
            |x| {
                next.clear();
                next.extend_from_slice(seen);
                let pos = next.partition_point(|&t| t < x);
                next.insert(pos, x);
                self.continuation(&next)
            },
            0.0,
            1.0,
            seen,
            self.panels,
            &self.rule,
        )
    }

    /// Two observations left under rank loss: both branches are linear in x
    /// between the points of `seen`, so the integral of their minimum is exact.
    fn penultimate_exact(&self, seen: &[f64]) -> f64 {
        let base = 1.0 + seen.iter().map(|t| 1.0 - t).sum::<f64>();
        let mut acc = 0.0;
        let mut lo = 0.0;
        for (i, &hi) in seen.iter().chain(std::iter::once(&1.0)).enumerate() {
            // Stop: 1 + i + x. Go on: base + (1 - x).
            let c = 1.0 + i as f64;
            acc += integrate_min_linear(lo, hi, c + lo, c + hi, base + 1.0 - lo, base + 1.0 - hi);
            lo = hi;
        }
        acc
    }

    pub fn value(&self) -> f64 {
        if self.n == 1 {
            return 1.0;
        }
        let mut seen = [0.0];
        integrate_min(
            |x| self.stop_loss(1, 0, x),
            |x| {
                seen[0] = x;
                self.continuation(&seen)
            },
            0.0,
            1.0,
            &[],
            self.panels,
            &self.rule,
        )
    }

    /// Whether stopping on x at index k is optimal given the earlier values.
    pub fn should_accept(&self, k: usize, x: f64, earlier: &[f64]) -> bool {
        if k >= self.n {
            return true;
        }
        let below = earlier.iter().filter(|&&t| t < x).count();
        let mut seen: Vec<f64> = earlier.to_vec();
        seen.push(x);
        seen.sort_by(f64::total_cmp);
        self.stop_loss(k, below, x) <= self.continuation(&seen)
    }
}

impl StrategyPolicy for SmallNDp {
    fn decide(&self, k: usize, x: f64, history: &History, n: usize) -> Decision {
        assert_eq!(n, self.n, "policy was built for n = {}", self.n);
        if self.should_accept(k, x, history.values()) {
            Decision::Accept
        } else {
            Decision::Pass
        }
    }

    fn uses_history(&self) -> bool {
        false
    }
}

/// Runs the small-n DP with panels doubling from 4 until two successive
/// values differ by less than `tol`; that difference is the reported bound.
pub fn optimal_value_with(n: usize, loss: Loss, tol: f64) -> Result<ExactValue> {
    let mut dp = SmallNDp::new(n, loss, 4)?;
    if n == 1 {
        return Ok(ExactValue { n, value: 1.0, method: Method::ClosedForm, quadrature_error_bound: 0.0 });
    }
    let mut prev = dp.value();
    loop {
        let panels = dp.panels * 2;
        dp.panels = panels;
        let value = dp.value();
        let diff = (value - prev).abs();
        if diff < tol {
            return Ok(ExactValue { n, value, method: Method::Quadrature, quadrature_error_bound: diff });
        }
        if panels >= 512 {
            return Err(Error::Numerical(format!(
                "panel doubling stalled at {panels} panels with change {diff:.2e}"
            )));
        }
        prev = value;
    }
}

/// v_n for n ≤ 4 with tolerance 1e-4.
pub fn optimal_value(n: usize) -> Result<ExactValue> {
    optimal_value_with(n, Loss::Rank, 1e-4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub n: usize,
    pub level: usize,
    pub value: f64,
    pub method: Method,
    pub error_bound: f64,
}

/// Full-information best-choice table: `g[r](m)` is the best probability of
/// ending with the overall minimum when r observations remain and the
/// current minimum is m. Tabulated on a uniform grid over [0, 1].
#[derive(Debug, Clone)]
pub struct BestChoiceTable {
    n: usize,
    g: Vec<Vec<f64>>,
}

const BEST_CHOICE_GRID: usize = 1 << 14;

impl BestChoiceTable {
    pub fn new(n: usize) -> Self {
        let m = BEST_CHOICE_GRID;
        let h = 1.0 / m as f64;
        let mut g = vec![vec![0.0; m + 1]];
        for r in 1..=n {
            let prev = &g[r - 1];
            let f = |i: usize| {
                let x = i as f64 * h;
                (1.0 - x).powi(r as i32 - 1).max(prev[i])
            };
            let mut cur = vec![0.0; m + 1];
            let mut integral = 0.0;
            let mut f_lo = f(0);
            cur[0] = prev[0];
            for i in 1..=m {
                let f_hi = f(i);
                integral += 0.5 * h * (f_lo + f_hi);
                f_lo = f_hi;
                cur[i] = integral + (1.0 - i as f64 * h) * prev[i];
            }
            g.push(cur);
        }
        BestChoiceTable { n, g }
    }

    pub fn g(&self, remaining: usize, m: f64) -> f64 {
        let row = &self.g[remaining];
        let pos = m.clamp(0.0, 1.0) * BEST_CHOICE_GRID as f64;
        let i = (pos as usize).min(BEST_CHOICE_GRID - 1);
        let w = pos - i as f64;
        row[i] * (1.0 - w) + row[i + 1] * w
    }

    /// Probability of selecting the overall minimum under optimal play.
    pub fn success(&self) -> f64 {
        self.g(self.n, 1.0)
    }
}

/// Optimal play for loss min{2, rank}: accept a relative minimum x at index
/// k exactly when winning now, (1 - x)^(n-k), beats going on.
#[derive(Debug, Clone)]
pub struct TruncatedPolicy {
    table: BestChoiceTable,
}

impl TruncatedPolicy {
    pub fn new(n: usize) -> Self {
        TruncatedPolicy { table: BestChoiceTable::new(n) }
    }
}

impl StrategyPolicy for TruncatedPolicy {
    fn decide(&self, k: usize, x: f64, history: &History, n: usize) -> Decision {
        assert_eq!(n, self.table.n, "policy was built for n = {}", self.table.n);
        let is_min = history.values().iter().all(|&v| v > x);
        let r = n - k;
        if is_min && (1.0 - x).powi(r as i32) >= self.table.g(r, x) {
            Decision::Accept
        } else {
            Decision::Pass
        }
    }

    fn uses_history(&self) -> bool {
        false
    }
}

/// Optimal expected truncated loss min{j, L}.
///
/// Supported: j = 1 (trivially 1), j = 2 with n ≤ 50 through the one-step
/// best-choice table, and any j with n ≤ 4 through the full-history DP.
/// Everything else is refused rather than approximated.
pub fn truncated_value(n: usize, j: usize) -> Result<TruncationSpec> {
    if n == 0 || j == 0 || j > n {
        return Err(invalid(format!("need 1 <= level <= n, got level {j}, n {n}")));
    }
    if j == 1 {
        return Ok(TruncationSpec { n, level: j, value: 1.0, method: Method::ClosedForm, error_bound: 0.0 });
    }
    if j == 2 && n <= MAX_TRUNCATION_N {
        let table = BestChoiceTable::new(n);
        let value = 2.0 - table.success();
        // Trapezoid error on the grid; a generous multiple of h^2 per step.
        let h = 1.0 / BEST_CHOICE_GRID as f64;
        return Ok(TruncationSpec {
            n,
            level: j,
            value,
            method: Method::Quadrature,
            error_bound: n as f64 * n as f64 * h * h,
        });
    }
    if n <= MAX_EXACT_N {
        let v = optimal_value_with(n, if j >= n { Loss::Rank } else { Loss::Truncated(j) }, 1e-4)?;
        return Ok(TruncationSpec {
            n,
            level: j,
            value: v.value,
            method: v.method,
            error_bound: v.quadrature_error_bound,
        });
    }
    Err(Error::ResourceBound(format!(
        "truncated values are supported for level <= {MAX_TRUNCATION_LEVEL} with n <= {MAX_TRUNCATION_N}, \
         or n <= {MAX_EXACT_N}; storage grows exponentially in the level"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn secretary_small_cases() {
        let r = secretary_rule(1).unwrap();
        assert_eq!((r.cutoff, r.success_prob), (1, 1.0));
        let r = secretary_rule(4).unwrap();
        assert_eq!(r.cutoff, 2);
        assert_eq!(secretary_success_exact(4, 2).unwrap(), Ratio::new(11, 24));
        assert_eq!(secretary_rule_sum_form(4).unwrap().cutoff, 3);
    }

    #[test]
    fn secretary_fraction_agrees_with_float() {
        for n in 1..=20 {
            for c in 1..=n {
                let q = secretary_success_exact(n, c).unwrap();
                let f = *q.numer() as f64 / *q.denom() as f64;
                assert!((f - secretary_success(n, c).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_values() {
        assert_eq!(optimal_value(1).unwrap().value, 1.0);
        let v2 = optimal_value(2).unwrap();
        assert!((v2.value - 1.25).abs() < 1e-9, "{v2:?}");
        assert!(matches!(optimal_value(5), Err(Error::ResourceBound(_))));
        assert!(optimal_value(0).is_err());
    }

    #[test]
    fn n2_policy_is_the_half_threshold() {
        let dp = SmallNDp::new(2, Loss::Rank, 8).unwrap();
        assert!(dp.should_accept(1, 0.49, &[]));
        assert!(!dp.should_accept(1, 0.51, &[]));
    }

    #[test]
    fn truncated_stop_loss_caps_binomial() {
        let dp = SmallNDp::new(3, Loss::Truncated(2), 4).unwrap();
        // min(2, 1 + B), B ~ Bin(2, x): 1 + P(B >= 1).
        let x: f64 = 0.3;
        assert!((dp.stop_loss(1, 0, x) - (2.0 - (1.0 - x).powi(2))).abs() < 1e-14);
        assert!((dp.stop_loss(1, 1, x) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn truncation_guards() {
        assert_eq!(truncated_value(7, 1).unwrap().value, 1.0);
        assert!((truncated_value(2, 2).unwrap().value - 1.25).abs() < 1e-6);
        assert!(matches!(truncated_value(10, 3), Err(Error::ResourceBound(_))));
        assert!(matches!(truncated_value(60, 2), Err(Error::ResourceBound(_))));
        assert!(truncated_value(3, 4).is_err());
    }

    #[test]
    fn level_two_table_agrees_with_full_dp() {
        for n in [3, 4] {
            let table = truncated_value(n, 2).unwrap().value;
            let dp = optimal_value_with(n, Loss::Truncated(2), 1e-5).unwrap().value;
            assert!((table - dp).abs() < 1e-4, "n={n}: {table} vs {dp}");
        }
    }
}
