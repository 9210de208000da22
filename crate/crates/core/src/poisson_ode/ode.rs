//! The initial-value problem w′ + w = ∫₀¹ min{1 + xt, w + h(t, x)} dx,
//! w(0) = 0, integrated with the Dormand–Prince 5(4) pair.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::htable::HTable;
use super::Penalty;
use crate::error::{invalid, Error, Result};
use crate::quadrature::{adaptive, bracketed_root, integrate_min_linear};

/// The conditional value gap h(t, x).
#[derive(Clone)]
pub enum HModel {
    Zero,
    Constant(f64),
    Table(HTable),
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for HModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HModel::Zero => write!(f, "Zero"),
            HModel::Constant(k) => write!(f, "Constant({k})"),
            HModel::Table(t) => write!(f, "Table({}x{})", t.grid_t.len(), t.grid_x.len()),
            HModel::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl HModel {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            HModel::Zero => 0.0,
            HModel::Constant(k) => *k,
            HModel::Table(tab) => tab.eval(t, x),
            HModel::Custom(f) => f(t, x),
        }
    }

    /// Upper bound of h where known.
    pub fn sup(&self) -> Option<f64> {
        match self {
            HModel::Zero => Some(0.0),
            HModel::Constant(k) => Some(*k),
            HModel::Table(tab) => tab.values.iter().flatten().copied().reduce(f64::max),
            HModel::Custom(_) => None,
        }
    }

    /// Times where h has kinks in t; the integrator lands on them.
    fn breakpoints(&self) -> &[f64] {
        match self {
            HModel::Table(tab) => &tab.grid_t,
            _ => &[],
        }
    }

    /// ∫₀¹ min{1 + xt, w + h(t, x)} dx.
    pub fn min_integral(&self, t: f64, w: f64) -> Result<f64> {
        match self {
            HModel::Zero => Ok(min_with_constant(t, w)),
            HModel::Constant(k) => Ok(min_with_constant(t, w + k)),
            HModel::Table(tab) => {
                let row = tab.row_at(t);
                let mut acc = 0.0;
                for (i, xs) in tab.grid_x.windows(2).enumerate() {
                    let (x0, x1) = (xs[0], xs[1]);
                    acc += integrate_min_linear(x0, x1, 1.0 + x0 * t, 1.0 + x1 * t, w + row[i], w + row[i + 1]);
                }
                Ok(acc)
            }
            HModel::Custom(h) => {
                let d = |x: f64| 1.0 + x * t - w - h(t, x);
                const PROBES: usize = 32;
                let mut cuts = vec![0.0];
                let mut prev = d(0.0);
                for i in 1..=PROBES {
                    let x = i as f64 / PROBES as f64;
                    let cur = d(x);
                    if !cur.is_finite() || !prev.is_finite() {
                        return Err(invalid(format!("h({t}, {x}) is not finite")));
                    }
                    if (prev < 0.0) != (cur < 0.0) {
                        cuts.push(bracketed_root(d, x - 1.0 / PROBES as f64, x, 1e-14));
                    }
                    cuts.push(x);
                    prev = cur;
                }
                let mut acc = 0.0;
                for c in cuts.windows(2) {
                    if c[1] > c[0] {
                        let r = adaptive(|x| (1.0 + x * t).min(w + h(t, x)), c[0], c[1], 1e-12, 1e-12)?;
                        acc += r.value;
                    }
                }
                Ok(acc)
            }
        }
    }

    pub fn rhs(&self, t: f64, w: f64) -> Result<f64> {
        Ok(self.min_integral(t, w)? - w)
    }
}

/// ∫₀¹ min{1 + xt, g} dx with the kink at x* = (g − 1)/t.
fn min_with_constant(t: f64, g: f64) -> f64 {
    if t <= 0.0 {
        return g.min(1.0);
    }
    let xs = ((g - 1.0) / t).clamp(0.0, 1.0);
    xs + 0.5 * t * xs * xs + (1.0 - xs) * g
}

#[derive(Debug, Clone)]
pub struct OdeProblem {
    pub h_model: HModel,
    pub penalty: Penalty,
    pub t_max: f64,
    pub initial_step: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl OdeProblem {
    pub fn new(h_model: HModel, t_max: f64) -> Self {
        OdeProblem { h_model, penalty: Penalty::default(), t_max, initial_step: 1e-3, rtol: 1e-8, atol: 1e-10 }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSolution {
    /// Accepted (t, w(t)) pairs, starting at (0, 0).
    pub trajectory: Vec<(f64, f64)>,
    /// Mean of w over the last 10% of [0, t_max].
    pub limit: f64,
    /// Sum of accepted local error estimates plus the tolerance floor at the
    /// limit.
    pub error_estimate: f64,
    pub steps: usize,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates the problem from w(0) = Π(0) = 0 to `t_max`.
pub fn ode_solve(problem: &OdeProblem) -> Result<OdeSolution> {
    let t_max = problem.t_max;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(invalid(format!("t_max must be positive, got {t_max}")));
    }
    if !(problem.rtol > 0.0 && problem.atol > 0.0 && problem.initial_step > 0.0) {
        return Err(invalid("tolerances and the initial step must be positive"));
    }
    let w0 = problem.penalty.at(0.0);
    if w0 != 0.0 {
        return Err(invalid(format!("the penalty must vanish at 0, got {w0}")));
    }
    let model = &problem.h_model;
    if let HModel::Table(tab) = model {
        tab.validate()?;
        if let Some(&(i, j)) = tab.unusable_cells().first() {
            return Err(invalid(format!(
                "h-table cell (t = {}, x = {}) has too few replications",
                tab.grid_t[i], tab.grid_x[j]
            )));
        }
    }
    let tail_start = 0.9 * t_max;
    let mut stops: Vec<f64> = model.breakpoints().iter().copied().filter(|&s| s > 0.0 && s < t_max).collect();
    stops.push(tail_start);
    stops.push(t_max);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let (mut t, mut w) = (0.0, w0);
    let mut f = model.rhs(t, w)?;
    let mut h = problem.initial_step.min(t_max);
    let mut trajectory = vec![(t, w)];
    let mut slopes = vec![f];
    let (mut steps, mut rejected) = (0, 0);
    let mut local_err = 0.0;
    let mut next_stop = 0;

    while t < t_max {
        while stops[next_stop] <= t {
            next_stop += 1;
        }
        let to_stop = stops[next_stop] - t;
        let hit = h >= to_stop;
        let step = if hit { to_stop } else { h };

        let mut k = [0.0; 7];
        k[0] = f;
        for i in 1..7 {
            let wi = w + step * (0..i).map(|j| A[i][j] * k[j]).sum::<f64>();
            k[i] = model.rhs(t + C[i] * step, wi)?;
        }
        let w_new = w + step * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
        let err = step * (0..7).map(|j| E[j] * k[j]).sum::<f64>();
        let scale = problem.atol + problem.rtol * w.abs().max(w_new.abs());
        let ratio = err.abs() / scale;
        if !w_new.is_finite() {
            return Err(Error::Numerical(format!("non-finite state at t = {t}")));
        }
        if ratio <= 1.0 {
            t = if hit { stops[next_stop] } else { t + step };
            w = w_new;
            f = k[6];
            local_err += err.abs();
            trajectory.push((t, w));
            slopes.push(f);
            steps += 1;
            let grow = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
            // Keep the regular step size when a stop merely clipped this one.
            h = if hit { h.max(step * grow) } else { step * grow };
        } else {
            rejected += 1;
            h = step * (0.9 * ratio.powf(-0.2)).clamp(0.2, 1.0);
        }
        if h < 1e-12 * (1.0 + t) {
            return Err(Error::Numerical(format!(
                "step size underflow at t = {t}: the problem looks stiff for an explicit pair"
            )));
        }
    }

    // Hermite quadrature of w over [0.9 t_max, t_max].
    let mut tail = 0.0;
    for i in 1..trajectory.len() {
        let (t0, w0) = trajectory[i - 1];
        let (t1, w1) = trajectory[i];
        if t0 >= tail_start - 1e-12 * t_max {
            let dt = t1 - t0;
            tail += 0.5 * dt * (w0 + w1) + dt * dt / 12.0 * (slopes[i - 1] - slopes[i]);
        }
    }
    let limit = tail / (t_max - tail_start);
    let error_estimate = local_err + problem.atol + problem.rtol * limit.abs();
    Ok(OdeSolution { trajectory, limit, error_estimate, steps, rejected })
}

/// Classical fixed-step RK4, used as an independent reference.
pub fn rk4_fixed(model: &HModel, t_max: f64, steps: usize) -> Result<Vec<(f64, f64)>> {
    let h = t_max / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let (mut t, mut w) = (0.0, 0.0);
    out.push((t, w));
    for _ in 0..steps {
        let k1 = model.rhs(t, w)?;
        let k2 = model.rhs(t + 0.5 * h, w + 0.5 * h * k1)?;
        let k3 = model.rhs(t + 0.5 * h, w + 0.5 * h * k2)?;
        let k4 = model.rhs(t + h, w + h * k3)?;
        w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        out.push((t, w));
    }
    Ok(out)
}
