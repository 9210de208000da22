//! Simulated conditional value gap h(t, x) on a (t, x) grid.
//!
//! A phantom value x sits at time 0: it cannot be accepted but adds one to
//! the rank of any accepted value above it. Under threshold play the gap is
//! therefore P(stopped by t and X_τ > x); the penalty for not stopping is a
//! function of t alone and cancels.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{value_w_semi_closed, ContinuousThreshold, Penalty};
use crate::error::{invalid, Result};
use crate::minimize::golden_section;
use crate::rng::{derive_seed, stream_rng};

/// Cells need this many replications to be usable.
pub const MIN_CELL_REPLICATIONS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HGrid {
    pub grid_t: Vec<f64>,
    pub grid_x: Vec<f64>,
}

impl Default for HGrid {
    fn default() -> Self {
        let mut grid_t = vec![0.0, 0.5, 1.0];
        let mut t = 2.0;
        while t < 1000.0 {
            grid_t.push(t);
            t *= 2.0;
        }
        grid_t.push(1000.0);
        // The accepted value is O(c / t) at long horizons, so x is
        // geometric down to 1e-4; a uniform grid smears h(t, 0) ≈ 1 across
        // the first cell and inflates ∫h dx by orders of magnitude.
        let mut grid_x = vec![0.0];
        grid_x.extend((0..=40).map(|i| 10f64.powf(-4.0 + i as f64 / 10.0)));
        *grid_x.last_mut().unwrap() = 1.0;
        HGrid { grid_t, grid_x }
    }
}

impl HGrid {
    pub fn validate(&self) -> Result<()> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite());
        if self.grid_t.is_empty() || !increasing(&self.grid_t) || self.grid_t[0] < 0.0 {
            return Err(invalid("grid_t must be finite, nonnegative and strictly increasing"));
        }
        if self.grid_x.len() < 2 || !increasing(&self.grid_x) {
            return Err(invalid("grid_x must be finite and strictly increasing"));
        }
        if self.grid_x[0] != 0.0 || *self.grid_x.last().unwrap() != 1.0 {
            return Err(invalid("grid_x must run from 0 to 1"));
        }
        Ok(())
    }
}

/// Bilinear table of h(t, x). Past the last time row the last row is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HTable {
    pub grid_t: Vec<f64>,
    pub grid_x: Vec<f64>,
    /// values[i][j] = h(grid_t[i], grid_x[j]).
    pub values: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    /// Replications behind each cell; absent for hand-made tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<Vec<Vec<u64>>>,
}

impl HTable {
    pub fn validate(&self) -> Result<()> {
        HGrid { grid_t: self.grid_t.clone(), grid_x: self.grid_x.clone() }.validate()?;
        let shape_ok = |m: &Vec<Vec<f64>>| {
            m.len() == self.grid_t.len() && m.iter().all(|r| r.len() == self.grid_x.len() && r.iter().all(|v| v.is_finite()))
        };
        if !shape_ok(&self.values) || !shape_ok(&self.std_errors) {
            return Err(invalid("table values and std_errors must be finite and match the grid"));
        }
        if let Some(reps) = &self.replications {
            if reps.len() != self.grid_t.len() || reps.iter().any(|r| r.len() != self.grid_x.len()) {
                return Err(invalid("replication counts must match the grid"));
            }
        }
        Ok(())
    }

    /// (row, column) of cells with too few replications.
    pub fn unusable_cells(&self) -> Vec<(usize, usize)> {
        let Some(reps) = &self.replications else { return Vec::new() };
        let mut out = Vec::new();
        for (i, row) in reps.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if r < MIN_CELL_REPLICATIONS {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// h(t, ·) on grid_x, linear in t between rows.
    pub fn row_at(&self, t: f64) -> Vec<f64> {
        let g = &self.grid_t;
        if t <= g[0] {
            return self.values[0].clone();
        }
        if t >= g[g.len() - 1] {
            return self.values[g.len() - 1].clone();
        }
        let i = g.partition_point(|&s| s <= t) - 1;
        let w = (t - g[i]) / (g[i + 1] - g[i]);
        self.values[i].iter().zip(&self.values[i + 1]).map(|(a, b)| a + w * (b - a)).collect()
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let row = self.row_at(t);
        let gx = &self.grid_x;
        let x = x.clamp(0.0, 1.0);
        let j = (gx.partition_point(|&s| s <= x).max(1) - 1).min(gx.len() - 2);
        let w = (x - gx[j]) / (gx[j + 1] - gx[j]);
        row[j] + w * (row[j + 1] - row[j])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: HTable = serde_json::from_str(text).map_err(|e| invalid(format!("bad h-table JSON: {e}")))?;
        t.validate()?;
        Ok(t)
    }
}

/// The c minimizing W_τ(t) for the horizon-scaled family.
pub fn best_c_for_horizon(t: f64, penalty: &Penalty) -> Result<f64> {
    ContinuousThreshold::new(2.0, t)?;
    let f = |c: f64| {
        ContinuousThreshold::new(c, t).and_then(|ct| value_w_semi_closed(&ct, penalty)).unwrap_or(f64::INFINITY)
    };
    Ok(golden_section(f, 1.0 + 1e-6, 8.0, 1e-6).0)
}

/// Estimates h on `grid` by simulating best-c threshold play at each time
/// row, with one shared sample path across the x column.
pub fn h_from_simulation(grid: &HGrid, replications: u64, seed: u64) -> Result<HTable> {
    grid.validate()?;
    let nx = grid.grid_x.len();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = grid
        .grid_t
        .par_iter()
        .enumerate()
        .map(|(i, &t)| -> Result<(Vec<f64>, Vec<f64>)> {
            if t == 0.0 || replications == 0 {
                return Ok((vec![0.0; nx], vec![0.0; nx]));
            }
            let ct = ContinuousThreshold::new(best_c_for_horizon(t, &Penalty::default())?, t)?;
            let row_seed = derive_seed(seed, i as u64);
            let counts = (0..replications)
                .into_par_iter()
                .map(|r| {
                    let mut hits = vec![0u64; nx];
                    if let Some(x) = play_once(&ct, row_seed, r) {
                        for (h, &gx) in hits.iter_mut().zip(&grid.grid_x) {
                            *h += u64::from(x > gx);
                        }
                    }
                    hits
                })
                .reduce(|| vec![0u64; nx], |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                });
            let m = replications as f64;
            let values: Vec<f64> = counts.iter().map(|&k| k as f64 / m).collect();
            let ses = values.iter().map(|&p| (p * (1.0 - p) / m).sqrt()).collect();
            Ok((values, ses))
        })
        .collect::<Result<_>>()?;
    // The t = 0 row is exact.
    let reps = grid
        .grid_t
        .iter()
        .map(|&t| vec![if t == 0.0 { replications.max(MIN_CELL_REPLICATIONS) } else { replications }; nx])
        .collect();
    let (values, std_errors) = rows.into_iter().unzip();
    Ok(HTable {
        grid_t: grid.grid_t.clone(),
        grid_x: grid.grid_x.clone(),
        values,
        std_errors,
        replications: Some(reps),
    })
}

/// One threshold-play path with exponential inter-arrival gaps; returns the
/// accepted value, if any.
fn play_once(ct: &ContinuousThreshold, seed: u64, stream: u64) -> Option<f64> {
    let mut rng = stream_rng(seed, stream);
    let mut s = 0.0;
    loop {
        s -= (1.0 - rng.random::<f64>()).ln();
        if s > ct.horizon {
            return None;
        }
        let x: f64 = rng.random();
        if x <= ct.phi(s) {
            return Some(x);
        }
    }
}

/// h(t, x) = ∫₀ᵗ e^{−μ(s)} (φ(s) − x)⁺ ds for threshold play.
pub fn h_analytic(ct: &ContinuousThreshold, x: f64) -> Result<f64> {
    let r = crate::quadrature::adaptive(
        |s| ct.survival(s) * (ct.phi(s) - x).max(0.0),
        0.0,
        ct.horizon,
        1e-11,
        1e-11,
    )?;
    Ok(r.value)
}
