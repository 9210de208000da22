//! Numerical integration: Gauss–Legendre rules, adaptive Gauss–Kronrod, and
//! exact or kink-aware integration of `min(f, g)`.

use crate::error::{Error, Result};

/// Nodes and weights of the `order`-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss–Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Newton iteration from the Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=order {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                let p = if order == 1 { x } else { p1 };
                let pm1 = if order == 1 { 1.0 } else { p0 };
                dp = n * (x * p - pm1) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order == 1 {
            nodes[0] = 0.0;
            weights[0] = 2.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive 7/15-point Gauss–Kronrod integration.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    const MAX_INTERVALS: usize = 2000;
    let (v, e) = kronrod15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let (mut total, mut err) = (v, e);
    while err > abs_tol.max(rel_tol * total.abs()) {
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Numerical(format!(
                "adaptive quadrature did not converge on [{a}, {b}]: error {err:.3e}"
            )));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("nonempty");
        let (lo, hi, v0, e0) = parts.swap_remove(worst);
        let m = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(&mut f, lo, m);
        let (v2, e2) = kronrod15(&mut f, m, hi);
        total += v1 + v2 - v0;
        err += e1 + e2 - e0;
        parts.push((lo, m, v1, e1));
        parts.push((m, hi, v2, e2));
        if !total.is_finite() {
            return Err(Error::Numerical("integrand produced a non-finite value".into()));
        }
    }
    // Re-sum to shed the drift of the running updates.
    let value = parts.iter().map(|p| p.2).sum();
    let error = parts.iter().map(|p| p.3).sum();
    Ok(Integral { value, error })
}

/// Exact integral over [x0, x1] of `min(f, g)` where both are linear, given
/// their endpoint values.
pub fn integrate_min_linear(x0: f64, x1: f64, f0: f64, f1: f64, g0: f64, g1: f64) -> f64 {
    let len = x1 - x0;
    if len <= 0.0 {
        return 0.0;
    }
    let d0 = f0 - g0;
    let d1 = f1 - g1;
    if d0 <= 0.0 && d1 <= 0.0 {
        0.5 * len * (f0 + f1)
    } else if d0 >= 0.0 && d1 >= 0.0 {
        0.5 * len * (g0 + g1)
    } else {
        let s = d0 / (d0 - d1);
        let xm = x0 + s * len;
        let ym = f0 + s * (f1 - f0);
        let (left, right) = if d0 < 0.0 { (f0, g1) } else { (g0, f1) };
        0.5 * (xm - x0) * (left + ym) + 0.5 * (x1 - xm) * (ym + right)
    }
}

/// Root of `d` on [a, b] given opposite signs at the ends (Illinois variant of
/// regula falsi).
pub fn bracketed_root<D: FnMut(f64) -> f64>(mut d: D, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = d(a);
    let mut fb = d(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut side = 0i8;
    for _ in 0..100 {
        let c = (a * fb - b * fa) / (fb - fa);
        if (b - a).abs() < tol {
            return c;
        }
        let fc = d(c);
        if fc == 0.0 {
            return c;
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

/// Integral of `min(f, g)` over [a, b] with both functions smooth between the
/// supplied breakpoints. Crossings are located on a uniform panel grid and
/// each smooth piece gets a Gauss–Legendre rule.
pub fn integrate_min<F, G>(
    mut f: F,
    mut g: G,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    panels: usize,
    rule: &GaussLegendre,
) -> f64
where
    F: FnMut(f64) -> f64,
    G: FnMut(f64) -> f64,
{
    let mut cuts: Vec<f64> = Vec::with_capacity(panels + breakpoints.len() + 1);
    for i in 0..=panels {
        cuts.push(a + (b - a) * i as f64 / panels as f64);
    }
    cuts.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // Evaluate just inside the piece so jumps at breakpoints stay outside.
        let eps = 1e-12 * (hi - lo).max(1e-300);
        let dlo = f(lo + eps) - g(lo + eps);
        let dhi = f(hi - eps) - g(hi - eps);
        if (dlo > 0.0) != (dhi > 0.0) && dlo != 0.0 && dhi != 0.0 {
            let root = bracketed_root(|x| f(x) - g(x), lo + eps, hi - eps, 1e-14 * (1.0 + hi.abs()));
            total += min_piece(&mut f, &mut g, lo, root, rule) + min_piece(&mut f, &mut g, root, hi, rule);
        } else {
            total += min_piece(&mut f, &mut g, lo, hi, rule);
        }
    }
    total
}

fn min_piece<F, G>(f: &mut F, g: &mut G, x0: f64, x1: f64, rule: &GaussLegendre) -> f64
where
    F: FnMut(f64) -> f64,
    G: FnMut(f64) -> f64,
{
    let mid = 0.5 * (x0 + x1);
    if f(mid) <= g(mid) {
        rule.integrate(f, x0, x1)
    } else {
        rule.integrate(g, x0, x1)
    }
}
