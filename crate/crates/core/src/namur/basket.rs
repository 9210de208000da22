use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A parametric CDF on the unit interval; the basket maps it onto [a, b].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Uniform,
    /// v^k.
    Power { k: f64 },
    /// 1 − (1 − v^α)^β.
    Kumaraswamy { alpha: f64, beta: f64 },
    /// (1 − e^{−λv}) / (1 − e^{−λ}); λ may be negative.
    TruncExp { rate: f64 },
}

impl Family {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Uniform => true,
            Family::Power { k } => k > 0.0 && k.is_finite(),
            Family::Kumaraswamy { alpha, beta } => alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(),
            Family::TruncExp { rate } => rate != 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("bad family parameters {self:?}")))
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        match *self {
            Family::Uniform => v,
            Family::Power { k } => v.powf(k),
            Family::Kumaraswamy { alpha, beta } => 1.0 - (1.0 - v.powf(alpha)).powf(beta),
            Family::TruncExp { rate } => (-rate * v).exp_m1() / (-rate).exp_m1(),
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        if !(0.0..=1.0).contains(&v) {
            return 0.0;
        }
        match *self {
            Family::Uniform => 1.0,
            Family::Power { k } => k * v.powf(k - 1.0),
            Family::Kumaraswamy { alpha, beta } => {
                alpha * beta * v.powf(alpha - 1.0) * (1.0 - v.powf(alpha)).powf(beta - 1.0)
            }
            Family::TruncExp { rate } => -rate * (-rate * v).exp() / (-rate).exp_m1(),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            Family::Uniform => p,
            Family::Power { k } => p.powf(1.0 / k),
            Family::Kumaraswamy { alpha, beta } => (1.0 - (1.0 - p).powf(1.0 / beta)).powf(1.0 / alpha),
            Family::TruncExp { rate } => (p * (-rate).exp_m1()).ln_1p() / -rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasketEntry {
    pub name: String,
    #[serde(flatten)]
    pub family: Family,
}

/// The finite set of arrival-time distributions a session may draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionBasket {
    pub a: f64,
    pub b: f64,
    pub entries: Vec<BasketEntry>,
}

impl Default for DistributionBasket {
    fn default() -> Self {
        let entry = |name: &str, family| BasketEntry { name: name.into(), family };
        DistributionBasket {
            a: 0.0,
            b: 1.0,
            entries: vec![
                entry("uniform", Family::Uniform),
                entry("ramp", Family::Power { k: 2.0 }),
                entry("early", Family::Kumaraswamy { alpha: 1.0, beta: 2.0 }),
                entry("late-exp", Family::TruncExp { rate: -2.0 }),
            ],
        }
    }
}

impl DistributionBasket {
    pub fn uniform() -> Self {
        DistributionBasket {
            a: 0.0,
            b: 1.0,
            entries: vec![BasketEntry { name: "uniform".into(), family: Family::Uniform }],
        }
    }

    pub fn new(a: f64, b: f64, entries: Vec<BasketEntry>) -> Result<Self> {
        let basket = DistributionBasket { a, b, entries };
        basket.validate()?;
        Ok(basket)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a < self.b && self.a.is_finite() && self.b.is_finite()) {
            return Err(invalid(format!("need finite bounds a < b, got [{}, {}]", self.a, self.b)));
        }
        if self.entries.is_empty() {
            return Err(invalid("the basket is empty"));
        }
        for e in &self.entries {
            e.family.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    fn unit(&self, u: f64) -> f64 {
        (u - self.a) / (self.b - self.a)
    }

    /// G_i(u) for u anywhere on the real line.
    pub fn cdf(&self, i: usize, u: f64) -> f64 {
        self.entries[i].family.cdf(self.unit(u))
    }

    pub fn pdf(&self, i: usize, u: f64) -> f64 {
        self.entries[i].family.pdf(self.unit(u)) / (self.b - self.a)
    }

    pub fn quantile(&self, i: usize, p: f64) -> f64 {
        self.a + (self.b - self.a) * self.entries[i].family.quantile(p)
    }

    /// Parses a basket definition file (JSON).
    pub fn from_json(text: &str) -> Result<Self> {
        let b: DistributionBasket = serde_json::from_str(text).map_err(|e| invalid(format!("bad basket: {e}")))?;
        b.validate()?;
        Ok(b)
    }
}
