//! Continuous-time embedding: observations arrive as a rate-1 planar Poisson
//! process on [0, t] × [0, 1], at most one may be accepted, and not stopping
//! by the horizon costs a penalty Π(t).

mod htable;
mod ode;

pub use htable::{best_c_for_horizon, h_analytic, h_from_simulation, HGrid, HTable, MIN_CELL_REPLICATIONS};
pub use ode::{ode_solve, rk4_fixed, HModel, OdeProblem, OdeSolution};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::adaptive;
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonInstance {
    pub horizon: f64,
    /// (arrival time, value), sorted by time.
    pub points: Vec<(f64, f64)>,
}

/// N ~ Poisson(t) points with uniform times on [0, t] and uniform values.
pub fn sample_poisson(t: f64, seed: u64) -> Result<PoissonInstance> {
    sample_poisson_stream(t, seed, 0)
}

pub fn sample_poisson_stream(t: f64, seed: u64, stream: u64) -> Result<PoissonInstance> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {t}")));
    }
    let mut rng = stream_rng(seed, stream);
    let count = Poisson::new(t).map_err(|e| invalid(e.to_string()))?.sample(&mut rng) as usize;
    let mut points: Vec<(f64, f64)> = (0..count).map(|_| (rng.random::<f64>() * t, rng.random::<f64>())).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(PoissonInstance { horizon: t, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdForm {
    /// φ(s) = c / (t − s + c), the continuous analogue of c / (n − j + c).
    #[default]
    HorizonScaled,
    /// φ(s) = c / (1 − s + c), only meaningful for horizons up to 1.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousThreshold {
    pub c: f64,
    pub horizon: f64,
    #[serde(default)]
    pub form: ThresholdForm,
}

impl ContinuousThreshold {
    pub fn new(c: f64, horizon: f64) -> Result<Self> {
        Self::with_form(c, horizon, ThresholdForm::HorizonScaled)
    }

    pub fn with_form(c: f64, horizon: f64, form: ThresholdForm) -> Result<Self> {
        if !(c > 1.0 && c.is_finite()) {
            return Err(invalid(format!("c must exceed 1, got {c}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if form == ThresholdForm::AsPrinted && horizon > 1.0 {
            return Err(invalid("the printed threshold form needs horizon <= 1"));
        }
        Ok(ContinuousThreshold { c, horizon, form })
    }

    /// The constant a with φ(s) = c / (a − s).
    fn pole(&self) -> f64 {
        match self.form {
            ThresholdForm::HorizonScaled => self.horizon + self.c,
            ThresholdForm::AsPrinted => 1.0 + self.c,
        }
    }

    /// φ(s); equal to 1 after the horizon.
    pub fn phi(&self, s: f64) -> f64 {
        if s > self.horizon {
            1.0
        } else {
            (self.c / (self.pole() - s)).min(1.0)
        }
    }

    /// μ(s) = ∫₀ˢ φ(u) du = c ln(a / (a − s)).
    pub fn mu(&self, s: f64) -> f64 {
        let a = self.pole();
        self.c * (a / (a - s)).ln()
    }

    /// e^{−μ(s)} = ((a − s) / a)^c, the probability of no acceptance by s.
    pub fn survival(&self, s: f64) -> f64 {
        let a = self.pole();
        ((a - s) / a).powf(self.c)
    }
}

pub fn mu_of(ct: &ContinuousThreshold, s: f64) -> Result<f64> {
    if !(0.0..=ct.horizon).contains(&s) {
        return Err(invalid(format!("s = {s} outside [0, {}]", ct.horizon)));
    }
    Ok(ct.mu(s))
}

/// Cost of reaching the horizon without stopping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Penalty {
    #[default]
    /// (t + 1 − e^{−t}) / 2: the expected rank of a uniformly random pick
    /// among the N(t) arrivals, counting 0 when there are none.
    RandomPick,
    /// intercept + slope · t.
    Affine { intercept: f64, slope: f64 },
}

impl Penalty {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Penalty::RandomPick => 0.5 * (t - (-t).exp_m1()),
            Penalty::Affine { intercept, slope } => intercept + slope * t,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Penalty::RandomPick => 1.0,
            Penalty::Affine { slope, .. } => slope.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WFormula {
    /// Earlier passed points below the accepted value x are a thinned
    /// Poisson process of intensity (x − φ(u))⁺, giving the double integral
    /// ½∫∫ ((φ(s) − φ(u))⁺)² du e^{−μ(s)} ds.
    #[default]
    Thinned,
    /// The double integral with the extra 1 / (1 − φ(u)) factor, as in the
    /// discrete-time conditional law of passed values.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub formula: WFormula,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { formula: WFormula::Thinned, abs_tol: 1e-10, rel_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WValue {
    pub value: f64,
    pub error: f64,
}

/// W_τ(t) for threshold play, by nested adaptive quadrature.
pub fn value_w(ct: &ContinuousThreshold, penalty: &Penalty, spec: &QuadratureSpec) -> Result<WValue> {
    let t = ct.horizon;
    let inner_tol = spec.abs_tol * 0.1 / t.max(1.0);
    let mut inner_err = 0.0f64;
    let mut failure = None;
    let tail = adaptive(|s| 0.5 * ct.phi(s).powi(2) * (t - s) * ct.survival(s), 0.0, t, spec.abs_tol, spec.rel_tol)?;
    let cloud = adaptive(
        |s| {
            let ps = ct.phi(s);
            let inner = adaptive(
                |u| {
                    let pu = ct.phi(u);
                    let d = (ps - pu).max(0.0);
                    match spec.formula {
                        WFormula::Thinned => d * d,
                        // The numerator vanishes quadratically where φ(u) → 1.
                        WFormula::AsPrinted if pu < 1.0 => d * d / (1.0 - pu),
                        WFormula::AsPrinted => 0.0,
                    }
                },
                0.0,
                s,
                inner_tol,
                spec.rel_tol,
            );
            match inner {
                Ok(r) => {
                    inner_err = inner_err.max(r.error);
                    0.5 * r.value * ct.survival(s)
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        0.0,
        t,
        spec.abs_tol,
        spec.rel_tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let cloud = cloud.map_err(|e| Error::Numerical(format!("W double integral diverged: {e}")))?;
    let value = 1.0 + (penalty.at(t) - 1.0) * ct.survival(t) + tail.value + cloud.value;
    let error = tail.error + cloud.error + 0.5 * inner_err * t;
    Ok(WValue { value, error })
}

/// W_τ(t) with the inner integral of the thinned formula in closed form,
/// for the horizon-scaled family: ∫₀ˢ (φ(s) − φ(u))² du with φ = c/(a − u).
pub fn value_w_semi_closed(ct: &ContinuousThreshold, penalty: &Penalty) -> Result<f64> {
    let t = ct.horizon;
    let (a, c) = (ct.pole(), ct.c);
    let inner = |s: f64| {
        let ps = c / (a - s);
        ps * ps * s - 2.0 * ps * c * (a / (a - s)).ln() + c * c * (1.0 / (a - s) - 1.0 / a)
    };
    let r = adaptive(
        |s| {
            let ps = ct.phi(s);
            0.5 * ct.survival(s) * (ps * ps * (t - s) + inner(s).max(0.0))
        },
        0.0,
        t,
        1e-11,
        1e-11,
    )?;
    Ok(1.0 + (penalty.at(t) - 1.0) * ct.survival(t) + r.value)
}

/// First point accepted by threshold play, as an index into `points`.
pub fn first_acceptance(ct: &ContinuousThreshold, inst: &PoissonInstance) -> Option<usize> {
    inst.points.iter().position(|&(s, x)| x <= ct.phi(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub replications: u64,
}

fn mean_se(sum: f64, sum_sq: f64, m: u64) -> McEstimate {
    let mf = m as f64;
    let mean = sum / mf;
    let var = if m > 1 { ((sum_sq - sum * mean) / (mf - 1.0)).max(0.0) } else { 0.0 };
    McEstimate { mean, se: (var / mf).sqrt(), replications: m }
}

/// Monte Carlo loss of threshold play: the accepted point's rank among all
/// arrivals in [0, t], or Π(t) if nothing was accepted.
pub fn simulate_threshold_play(
    ct: &ContinuousThreshold,
    penalty: &Penalty,
    replications: u64,
    seed: u64,
) -> Result<McEstimate> {
    if replications == 0 {
        return Err(invalid("replications must be at least 1"));
    }
    let pi = penalty.at(ct.horizon);
    let (sum, sum_sq) = (0..replications)
        .into_par_iter()
        .map(|r| {
            let inst = sample_poisson_stream(ct.horizon, seed, r).expect("validated horizon");
            let loss = match first_acceptance(ct, &inst) {
                Some(i) => {
                    let x = inst.points[i].1;
                    (1 + inst.points.iter().filter(|p| p.1 < x).count()) as f64
                }
                None => pi,
            };
            (loss, loss * loss)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(mean_se(sum, sum_sq, replications))
}

/// Monte Carlo probability that threshold play has not accepted by `s`.
pub fn simulate_survival(ct: &ContinuousThreshold, s: f64, replications: u64, seed: u64) -> Result<McEstimate> {
    if replications == 0 {
        return Err(invalid("replications must be at least 1"));
    }
    let hits: u64 = (0..replications)
        .into_par_iter()
        .map(|r| {
            let inst = sample_poisson_stream(ct.horizon, seed, r).expect("validated horizon");
            match first_acceptance(ct, &inst) {
                Some(i) if inst.points[i].0 <= s => 0,
                _ => 1,
            }
        })
        .sum();
    Ok(mean_se(hits as f64, hits as f64, replications))
}
