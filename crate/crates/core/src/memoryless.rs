//! Memoryless threshold rules: accept the first X_j ≤ φ_j.
//!
//! Given that observation ℓ was passed under such a rule, X_ℓ is uniform on
//! (φ_ℓ, 1]. So if the rule stops at j on x, the expected final rank is
//! `1 + Σ_{ℓ<j} (x − φ_ℓ)⁺/(1 − φ_ℓ) + (n − j)x`, and integrating over
//! x ∈ [0, φ_j] gives the expected rank in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fenwick::Fenwick;
use crate::game::{Decision, History, StrategyPolicy};
use crate::minimize::{golden_section, CompensatedSum};

/// Free optimization is cyclic coordinate descent, O(n² log n) per sweep.
pub const MAX_FREE_N: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    phi: Vec<f64>,
}

impl ThresholdVector {
    /// Entries must lie in (0, 1] and the last must be 1.
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.is_empty() {
            return Err(invalid("threshold vector must be nonempty"));
        }
        if let Some(p) = phi.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(invalid(format!("threshold {p} outside (0, 1]")));
        }
        if *phi.last().expect("nonempty") != 1.0 {
            return Err(invalid("the last threshold must be 1"));
        }
        Ok(ThresholdVector { phi })
    }

    pub fn n(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }
}

impl StrategyPolicy for ThresholdVector {
    fn decide(&self, k: usize, x: f64, _history: &History, _n: usize) -> Decision {
        if x <= self.phi[k - 1] {
            Decision::Accept
        } else {
            Decision::Pass
        }
    }

    fn uses_history(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CFamilySpec {
    pub c: f64,
    pub n: usize,
}

/// φ_j = c / (n − j + c), so φ_n = 1.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn phi_family(spec: CFamilySpec) -> Result<ThresholdVector> {
    if !(spec.c > 1.0) || !spec.c.is_finite() {
        return Err(invalid(format!("c must exceed 1, got {}", spec.c)));
    }
    if spec.n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let n = spec.n as f64;
    let phi = (1..=spec.n).map(|j| spec.c / (n - j as f64 + spec.c)).collect();
    ThresholdVector::new(phi)
}

/// Exact expected final rank of a memoryless rule under uniform values.
pub fn expected_rank_exact(tv: &ThresholdVector) -> f64 {
    let phi = tv.phi();
    let n = phi.len();
    // Order of thresholds so positive-part sums over earlier, smaller φ_ℓ are
    // prefix sums in a Fenwick tree: Σ w(φ_j − φ_ℓ)² = φ_j²A − 2φ_jB + C.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| phi[a].total_cmp(&phi[b]));
    let mut slot = vec![0; n];
    for (s, &i) in order.iter().enumerate() {
        slot[i] = s;
    }
    let mut sum_w = Fenwick::<f64>::new(n);
    let mut sum_wp = Fenwick::<f64>::new(n);
    let mut sum_wpp = Fenwick::<f64>::new(n);

    let mut total = CompensatedSum::default();
    let mut log_q = 0.0f64;
    for j in 0..n {
        let p = phi[j];
        let q = log_q.exp();
        // Strictly smaller earlier thresholds; equal ones contribute zero.
        let below = order.partition_point(|&i| phi[i] < p);
        let (a, b, c) = (sum_w.prefix(below), sum_wp.prefix(below), sum_wpp.prefix(below));
        let cloud = (p * p * a - 2.0 * p * b + c).max(0.0);
        let rest = (n - 1 - j) as f64;
        total.add(q * (p + 0.5 * rest * p * p + 0.5 * cloud));
        if p >= 1.0 {
            // Acceptance is certain here; later terms have zero probability.
            break;
        }
        let w = 1.0 / (1.0 - p);
        sum_w.add(slot[j], w);
        sum_wp.add(slot[j], w * p);
        sum_wpp.add(slot[j], w * p * p);
        log_q += (-p).ln_1p();
    }
    total.value()
}

/// Direct O(n²) evaluation, kept as a reference for the fast path.
pub fn expected_rank_direct(tv: &ThresholdVector) -> f64 {
    let phi = tv.phi();
    let n = phi.len();
    let mut total = 0.0;
    let mut q = 1.0;
    for j in 0..n {
        let p = phi[j];
        let cloud: f64 = phi[..j]
            .iter()
            .map(|&l| if p > l { (p - l).powi(2) / (1.0 - l) } else { 0.0 })
            .sum();
        total += q * (p + 0.5 * (n - 1 - j) as f64 * p * p + 0.5 * cloud);
        if p >= 1.0 {
            break;
        }
        q *= 1.0 - p;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct COptimum {
    pub n: usize,
    pub c_star: f64,
    pub value: f64,
    pub tolerance: f64,
    /// Set when golden section's answer was beaten by the grid check.
    pub diagnostic: Option<String>,
}

fn family_value(c: f64, n: usize) -> f64 {
    expected_rank_exact(&phi_family(CFamilySpec { c, n }).expect("c > 1"))
}

/// Best c of the family on `interval` by golden section, cross-checked by a
/// 41-point scan. If the scan finds a lower value the objective is not
/// unimodal on the interval; the search is then redone around the best
/// scan point and the diagnostic says so.
pub fn optimize_c(n: usize, interval: (f64, f64)) -> Result<COptimum> {
    let (lo, hi) = interval;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(lo > 1.0 && hi > lo && hi.is_finite()) {
        return Err(invalid(format!("search interval ({lo}, {hi}) must lie inside (1, inf)")));
    }
    let tol = 1e-4;
    let (mut c_star, mut value) = golden_section(|c| family_value(c, n), lo, hi, tol * 0.1);
    let mut diagnostic = None;
    const SCAN: usize = 41;
    let step = (hi - lo) / (SCAN - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..SCAN)
        .map(|i| {
            let c = lo + i as f64 * step;
            (c, family_value(c, n))
        })
        .collect();
    let (gi, &(gc, gv)) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("nonempty grid");
    if gv < value - 1e-12 {
        diagnostic = Some(format!(
            "bracket failure: golden section stopped at c = {c_star:.6} ({value:.8}) but the scan has \
             {gv:.8} at c = {gc:.6}; refined around the scan minimum"
        ));
        let a = if gi == 0 { lo } else { grid[gi - 1].0 };
        let b = if gi + 1 == SCAN { hi } else { grid[gi + 1].0 };
        let (c2, v2) = golden_section(|c| family_value(c, n), a, b, tol * 0.1);
        (c_star, value) = if v2 < gv { (c2, v2) } else { (gc, gv) };
    }
    Ok(COptimum { n, c_star, value, tolerance: tol, diagnostic })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeOptimum {
    pub phi: ThresholdVector,
    pub value: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub tolerance: f64,
}

/// Best memoryless rule with all thresholds free, by cyclic coordinate
/// descent started from the best c-family vector.
pub fn optimize_free(n: usize) -> Result<FreeOptimum> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if n > MAX_FREE_N {
        return Err(Error::ResourceBound(format!(
            "free optimization is limited to n <= {MAX_FREE_N} (coordinate descent budget)"
        )));
    }
    let tolerance = 1e-5;
    if n == 1 {
        return Ok(FreeOptimum {
            phi: ThresholdVector::new(vec![1.0])?,
            value: 1.0,
            sweeps: 0,
            converged: true,
            tolerance,
        });
    }
    let start = optimize_c(n, (1.0 + 1e-6, 10.0))?;
    let mut phi = phi_family(CFamilySpec { c: start.c_star, n })?.phi().to_vec();
    let eval = |phi: &[f64]| expected_rank_exact(&ThresholdVector { phi: phi.to_vec() });
    let mut value = eval(&phi);
    const MAX_SWEEPS: usize = 2000;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let before = value;
        let mut max_move = 0.0f64;
        for i in 0..n - 1 {
            let mut trial = phi.clone();
            let (best, v) = golden_section(
                |p| {
                    trial[i] = p;
                    eval(&trial)
                },
                1e-12,
                1.0,
                1e-11,
            );
            if v < value {
                max_move = max_move.max((best - phi[i]).abs());
                phi[i] = best;
                value = v;
            }
        }
        if before - value < 1e-13 && max_move < 1e-7 {
            converged = true;
            break;
        }
    }
    Ok(FreeOptimum { phi: ThresholdVector::new(phi)?, value, sweeps, converged, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_substitution() {
        let tv = phi_family(CFamilySpec { c: 2.0, n: 3 }).unwrap();
        let want = [0.5, 2.0 / 3.0, 1.0];
        for (a, b) in tv.phi().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(phi_family(CFamilySpec { c: 1.0, n: 3 }).is_err());
        let big = phi_family(CFamilySpec { c: 1.9469, n: 10_000 }).unwrap();
        // j = 1: c / (n - 1 + c).
        assert!((big.phi()[0] - 1.9469 / 10000.9469).abs() < 1e-15);
        assert_eq!(*big.phi().last().unwrap(), 1.0);
    }

    #[test]
    fn vector_validation() {
        assert!(ThresholdVector::new(vec![]).is_err());
        assert!(ThresholdVector::new(vec![0.5, 0.9]).is_err());
        assert!(ThresholdVector::new(vec![0.0, 1.0]).is_err());
        assert!(ThresholdVector::new(vec![0.5, 1.0]).is_ok());
    }

    #[test]
    fn closed_form_small_cases() {
        assert_eq!(expected_rank_exact(&ThresholdVector::new(vec![1.0]).unwrap()), 1.0);
        let v = expected_rank_exact(&ThresholdVector::new(vec![0.5, 1.0]).unwrap());
        assert!((v - 1.25).abs() < 1e-15);
    }

    #[test]
    fn early_certain_acceptance_short_circuits() {
        // φ_1 = 1 means the first value is always taken: mean rank (n+1)/2.
        let v = expected_rank_exact(&ThresholdVector::new(vec![1.0, 0.3, 1.0]).unwrap());
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn fast_and_direct_evaluations_agree() {
        let tv = ThresholdVector::new(vec![0.2, 0.05, 0.6, 0.4, 0.4, 0.9, 1.0]).unwrap();
        assert!((expected_rank_exact(&tv) - expected_rank_direct(&tv)).abs() < 1e-13);
    }

    #[test]
    fn free_n2_is_half_threshold() {
        let f = optimize_free(2).unwrap();
        assert!((f.phi.phi()[0] - 0.5).abs() < 1e-4);
        assert!((f.value - 1.25).abs() < 1e-9);
        assert!(f.converged);
    }

    #[test]
    fn single_observation_family() {
        let o = optimize_c(1, (1.1, 5.0)).unwrap();
        assert_eq!(o.value, 1.0);
        assert!(optimize_c(5, (0.5, 3.0)).is_err());
        assert!(matches!(optimize_free(21), Err(Error::ResourceBound(_))));
    }
}
