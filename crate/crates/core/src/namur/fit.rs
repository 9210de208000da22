//! Online choice of the arrival-time distribution by integrated squared
//! distance to the empirical CDF.

use serde::{Deserialize, Serialize};

use super::basket::DistributionBasket;
use crate::error::{invalid, Error, Result};
use crate::quadrature::GaussLegendre;

/// How the empirical CDF on [a, T_j] is compared with a basket entry G.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitNormalization {
    /// Steps of 1/j against G itself; right when the sample is complete.
    #[default]
    Count,
    /// Steps of 1/j against G(u) / G(T_j), the law of the first j arrivals
    /// given that they all fell before T_j. Used mid-session, where the
    /// number still to come is unknown.
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub index: usize,
    /// Integrated squared distance per basket entry.
    pub distances: Vec<f64>,
}

/// ∫_a^{T_j} (G(u) − F_emp(u))² du over the step partition, with T_j the
/// last arrival. `times` must be sorted.
pub fn squared_distance(times: &[f64], basket: &DistributionBasket, entry: usize, norm: FitNormalization) -> f64 {
    thread_local! {
        static RULE: GaussLegendre = GaussLegendre::new(6);
    }
    let j = times.len();
    let last = times[j - 1];
    let scale = match norm {
        FitNormalization::Count => 1.0,
        FitNormalization::Conditional => {
            let g = basket.cdf(entry, last);
            if g <= 0.0 {
                return f64::INFINITY;
            }
            1.0 / g
        }
    };
    RULE.with(|rule| {
        let mut acc = 0.0;
        let mut lo = basket.a;
        for (k, &t) in times.iter().enumerate() {
            if t > lo {
                let level = k as f64 / j as f64;
                acc += rule.integrate(|u| (scale * basket.cdf(entry, u) - level).powi(2), lo, t);
            }
            lo = lo.max(t);
        }
        acc
    })
}

/// Eq.-style fit with full-sample normalization: the basket index whose CDF
/// is closest to the empirical CDF of `arrivals`; ties go to the lowest index.
pub fn fit_distribution(arrivals: &[f64], basket: &DistributionBasket) -> Result<usize> {
    Ok(fit_distribution_with(arrivals, basket, FitNormalization::Count)?.index)
}

pub fn fit_distribution_with(
    arrivals: &[f64],
    basket: &DistributionBasket,
    norm: FitNormalization,
) -> Result<FitResult> {
    basket.validate()?;
    if arrivals.is_empty() {
        return Err(Error::UndefinedFit("no arrivals to fit".into()));
    }
    if let Some(t) = arrivals.iter().find(|t| !(basket.a..=basket.b).contains(*t)) {
        return Err(invalid(format!("arrival {t} outside [{}, {}]", basket.a, basket.b)));
    }
    let mut times = arrivals.to_vec();
    if !times.is_sorted() {
        times.sort_by(f64::total_cmp);
    }
    let distances: Vec<f64> = (0..basket.len()).map(|i| squared_distance(&times, basket, i, norm)).collect();
    let mut index = 0;
    for (i, &d) in distances.iter().enumerate() {
        if d < distances[index] {
            index = i;
        }
    }
    Ok(FitResult { index, distances })
}

/// Incremental form of [`squared_distance`] for a growing sample. With
/// F_emp = k/j on the k-th piece and scale s on G, the distance is
/// s²ΣA_k − (2s/j)Σk·B_k + Σk²Δ_k / j², where A_k = ∫G², B_k = ∫G and Δ_k
/// is the piece length; the three sums only ever gain terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTracker {
    last: f64,
    count: usize,
    /// Per entry: (ΣA_k, Σk·B_k, Σk²Δ_k).
    sums: Vec<(f64, f64, f64)>,
}

impl FitTracker {
    pub fn new(basket: &DistributionBasket) -> Self {
        FitTracker { last: basket.a, count: 0, sums: vec![(0.0, 0.0, 0.0); basket.len()] }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Adds the next arrival; times must come in nondecreasing order.
    pub fn push(&mut self, basket: &DistributionBasket, t: f64) -> Result<()> {
        if !(basket.a..=basket.b).contains(&t) || t < self.last {
            return Err(invalid(format!("arrival {t} out of order or outside [{}, {}]", basket.a, basket.b)));
        }
        thread_local! {
            static RULE: GaussLegendre = GaussLegendre::new(6);
        }
        let k = self.count as f64;
        let (lo, width) = (self.last, t - self.last);
        if width > 0.0 {
            RULE.with(|rule| {
                for (i, sum) in self.sums.iter_mut().enumerate() {
                    let a = rule.integrate(|u| basket.cdf(i, u).powi(2), lo, t);
                    let b = rule.integrate(|u| basket.cdf(i, u), lo, t);
                    sum.0 += a;
                    sum.1 += k * b;
                    sum.2 += k * k * width;
                }
            });
        }
        self.last = t;
        self.count += 1;
        Ok(())
    }

    pub fn distance(&self, basket: &DistributionBasket, entry: usize, norm: FitNormalization) -> f64 {
        let j = self.count as f64;
        let s = match norm {
            FitNormalization::Count => 1.0,
            FitNormalization::Conditional => {
                let g = basket.cdf(entry, self.last);
                if g <= 0.0 {
                    return f64::INFINITY;
                }
                1.0 / g
            }
        };
        let (a, kb, k2d) = self.sums[entry];
        (s * s * a - 2.0 * s * kb / j + k2d / (j * j)).max(0.0)
    }

    /// Closest entry, ties to the lowest index.
    pub fn best(&self, basket: &DistributionBasket, norm: FitNormalization) -> Result<usize> {
        if self.count == 0 {
            return Err(Error::UndefinedFit("no arrivals to fit".into()));
        }
        let mut index = 0;
        let mut best = f64::INFINITY;
        for i in 0..basket.len() {
            let d = self.distance(basket, i, norm);
            if d < best {
                best = d;
                index = i;
            }
        }
        Ok(index)
    }
}

/// Probability-integral transform of arrival times through basket entry `i`.
pub fn pit(basket: &DistributionBasket, i: usize, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| basket.cdf(i, t)).collect()
}
