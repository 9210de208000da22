mod common;

use common::{brute_force_success, grid_oracle_v3};
use robbins_core::exact_dp::{
    optimal_value, secretary_rule, secretary_success, secretary_success_exact, truncated_value, SmallNDp,
    TruncatedPolicy,
};
use robbins_core::{evaluate_policy, Loss};

#[test]
fn v3_matches_grid_oracle() {
    let oracle = grid_oracle_v3(300);
    let v3 = optimal_value(3).unwrap();
    println!("v3 = {} (bound {:.2e}), grid oracle {oracle}", v3.value, v3.quadrature_error_bound);
    assert!((v3.value - oracle).abs() < 1e-3);
}

#[test]
fn v4_is_bounded_and_increasing() {
    let t = std::time::Instant::now();
    let v3 = optimal_value(3).unwrap();
    let v4 = optimal_value(4).unwrap();
    println!("v4 = {} (bound {:.2e}) in {:?}", v4.value, v4.quadrature_error_bound, t.elapsed());
    assert!(v4.quadrature_error_bound <= 1e-3);
    assert!(v3.value <= v4.value && v4.value <= 3.869);
}

#[test]
fn secretary_formula_matches_permutation_count() {
    for n in 1..=7 {
        for cutoff in 1..=n {
            assert_eq!(secretary_success_exact(n, cutoff).unwrap(), brute_force_success(n, cutoff), "n={n} cutoff={cutoff}");
        }
        let rule = secretary_rule(n).unwrap();
        let best = (1..=n).map(|c| brute_force_success(n, c)).max().unwrap();
        assert_eq!(secretary_success_exact(n, rule.cutoff).unwrap(), best);
    }
}

#[test]
fn secretary_optimum_is_strict_in_cutoff() {
    // n = 2 is a tie between cutoffs 1 and 2, so strictness starts at 3.
    for n in 3..=200 {
        let r = secretary_rule(n).unwrap();
        let p = r.success_prob;
        if r.cutoff > 1 {
            assert!(secretary_success(n, r.cutoff - 1).unwrap() < p);
        }
        if r.cutoff < n {
            assert!(secretary_success(n, r.cutoff + 1).unwrap() < p);
        }
    }
}

#[test]
fn secretary_approaches_one_over_e() {
    let r = secretary_rule(10_000).unwrap();
    assert!((r.success_prob - (-1.0f64).exp()).abs() < 1e-3, "{r:?}");
}

#[test]
fn truncated_n10_matches_monte_carlo_of_its_policy() {
    let spec = truncated_value(10, 2).unwrap();
    let rep = evaluate_policy(&TruncatedPolicy::new(10), 10, 400_000, 21, Loss::Truncated(2)).unwrap();
    assert!((spec.value - rep.mean_rank).abs() < 3.0 * rep.std_error, "{spec:?} vs {rep:?}");
}

#[test]
fn truncation_orders_values() {
    for n in 2..=4 {
        let v = optimal_value(n).unwrap().value;
        let mut prev = 0.0;
        for j in 1..=n {
            let t = truncated_value(n, j).unwrap().value;
            assert!(t >= prev - 1e-9 && t <= v + 1e-6, "n={n} j={j}: {t} (v {v})");
            prev = t;
        }
    }
}

#[test]
fn small_n_policy_realizes_its_value() {
    let dp = SmallNDp::new(3, Loss::Rank, 8).unwrap();
    let v = optimal_value(3).unwrap().value;
    let rep = evaluate_policy(&dp, 3, 100_000, 4, Loss::Rank).unwrap();
    assert!((rep.mean_rank - v).abs() < 4.0 * rep.std_error, "{v} vs {rep:?}");
}
