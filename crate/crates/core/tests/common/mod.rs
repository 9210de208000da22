//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num_rational::Ratio;
use rand::Rng;
use robbins_core::namur::{new_session, rule_decision, DistributionBasket, Objective, Session, TableSet};
use robbins_core::rng::stream_rng;
use robbins_core::Decision;

/// Full-history value for n = 3 on the midpoint grid {(i + 1/2)/m}, by
/// exhaustive backward induction. Ties are split at half weight so the
/// discrete loss is an unbiased stand-in for the continuous one.
pub fn grid_oracle_v3(m: usize) -> f64 {
    let u = |i: usize| (i as f64 + 0.5) / m as f64;
    let mut total = 0.0;
    for a in 0..m {
        let mut c1 = 0.0;
        for b in 0..m {
            // Forced third pick: rank of x3 among {a, b, x3}.
            let mut c2 = 0.0;
            for c in 0..m {
                let mut r = 1.0;
                for &p in &[a, b] {
                    r += if p < c { 1.0 } else if p == c { 0.5 } else { 0.0 };
                }
                c2 += r;
            }
            c2 /= m as f64;
            let tie = if a < b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            let stop2 = 1.0 + tie + u(b);
            c1 += stop2.min(c2);
        }
        c1 /= m as f64;
        total += (1.0 + 2.0 * u(a)).min(c1);
    }
    total / m as f64
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Fraction of orderings in which "first relative best from `cutoff` on"
/// picks the overall best (rank 0 here).
pub fn brute_force_success(n: usize, cutoff: usize) -> Ratio<i128> {
    let perms = permutations(n);
    let wins = perms
        .iter()
        .filter(|p| {
            let mut best = usize::MAX;
            for (i, &r) in p.iter().enumerate() {
                let record = r < best;
                best = best.min(r);
                if record && i + 1 >= cutoff {
                    return r == 0;
                }
            }
            false
        })
        .count();
    Ratio::new(wins as i128, perms.len() as i128)
}

/// A scripted player pursuing `goal` through the same online inference the
/// machine uses, erring on 2% of its decisions.
pub fn scripted_game(goal: Objective, m: u32, seed: u64, tables: &TableSet) -> Session {
    let mut s = new_session(m, &DistributionBasket::default(), seed).unwrap();
    let rule = tables.rule_for(goal);
    let mut rng = stream_rng(seed, 1);
    while s.is_open() {
        s.advance().unwrap();
        if !s.pending() {
            break;
        }
        let j = s.revealed().len();
        let a = s.revealed()[j - 1];
        let tau = s.belief_trace()[j - 1].tau;
        let mut d = rule_decision(rule, j, a.rel_rank as usize, tau, m);
        if rng.random::<f64>() < 0.02 {
            d = if d == Decision::Accept { Decision::Pass } else { Decision::Accept };
        }
        s.decide(d).unwrap();
    }
    s
}
