mod common;

use rand::Rng;
use rayon::prelude::*;
use common::scripted_game;
use robbins_core::namur::*;
use robbins_core::rng::stream_rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn uniform_vs_ramp() -> DistributionBasket {
    DistributionBasket::new(
        0.0,
        1.0,
        vec![
            BasketEntry { name: "uniform".into(), family: Family::Uniform },
            BasketEntry { name: "ramp".into(), family: Family::Power { k: 2.0 } },
        ],
    )
    .unwrap()
}

fn sample(basket: &DistributionBasket, entry: usize, n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    let mut v: Vec<f64> = (0..n).map(|_| basket.quantile(entry, rng.random())).collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn fit_picks_the_ramp() {
    let basket = uniform_vs_ramp();
    let hits = (0..1000u64)
        .into_par_iter()
        .filter(|&trial| fit_distribution(&sample(&basket, 1, 1000, 21, trial), &basket).unwrap() == 1)
        .count();
    assert!(hits >= 990, "ramp chosen in {hits} of 1000 trials");
}

#[test]
fn singleton_basket_always_fits() {
    let b = DistributionBasket::uniform();
    for s in 0..20 {
        assert_eq!(fit_distribution(&sample(&uniform_vs_ramp(), 1, 30, 2, s), &b).unwrap(), 0);
    }
}

#[test]
fn transformed_arrivals_are_uniform() {
    // One-sample Kolmogorov–Smirnov at the 1% level.
    let basket = DistributionBasket { a: 2.0, b: 7.0, ..DistributionBasket::default() };
    for entry in 0..basket.len() {
        let n = 2000;
        let u = pit(&basket, entry, &sample(&basket, entry, n, 8, entry as u64));
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
            .fold(0.0, f64::max);
        assert!(d < 1.628 / (n as f64).sqrt(), "entry {entry}: D = {d}");
    }
}

#[test]
fn hidden_n_is_uniform() {
    let m = 100;
    let mut counts = vec![0u32; m];
    for seed in 0..10_000 {
        let s = new_session(m as u32, &DistributionBasket::uniform(), seed).unwrap();
        let mut s = s;
        while s.is_open() {
            s.advance().unwrap();
        }
        counts[s.outcome().unwrap().n as usize - 1] += 1;
    }
    let expected = 10_000.0 / m as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new((m - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(chi2 < critical, "χ² = {chi2}, critical {critical}");
}

#[test]
fn fixed_seed_fixes_the_instance() {
    let b = DistributionBasket::default();
    let mut a = new_session(80, &b, 4).unwrap();
    let mut c = new_session(80, &b, 4).unwrap();
    while a.is_open() {
        a.advance().unwrap();
        c.advance().unwrap();
    }
    assert_eq!(a.record(), c.record());
}

#[test]
fn one_over_e_law() {
    let n = 1000;
    let basket = DistributionBasket::uniform();
    let tables = TableSet::shipped();
    let obj = Objective::ExactRank { rank: 1 };
    let wins = (0..100_000u64)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = stream_rng(1234, r);
            let mut times: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            times.sort_by(f64::total_cmp);
            let values = (0..n).map(|_| rng.random()).collect();
            let s = Session::from_hidden(r.to_string(), n as u32, basket.clone(), r, 0, times.clone(), values).unwrap();
            let out = s.machine_shadow(obj, tables).unwrap();
            let k = out.decisions.len();
            if k < n {
                assert!(times[k - 1] >= (-1.0f64).exp());
            }
            out.success
        })
        .count();
    let rate = wins as f64 / 1e5;
    assert!((rate - (-1.0f64).exp()).abs() < 0.01, "success rate {rate}");
}

#[test]
fn easier_objective_succeeds_more() {
    let basket = DistributionBasket::default();
    let tables = TableSet::shipped();
    let (mut top, mut best) = (0, 0);
    for seed in 0..2000 {
        let s = new_session(200, &basket, seed).unwrap();
        top += s.machine_shadow(Objective::TopPercent { q: 50 }, tables).unwrap().success as u32;
        best += s.machine_shadow(Objective::ExactRank { rank: 1 }, tables).unwrap().success as u32;
    }
    assert!(top > best, "TOP_PERCENT(50) {top} vs EXACT_RANK(1) {best}");
}

#[test]
fn secret_objective_is_identified() {
    let tables = TableSet::shipped();
    let goal = Objective::TopPercent { q: 20 };
    let adjacent = [Objective::TopPercent { q: 15 }, goal, Objective::TopPercent { q: 25 }];
    let ok = (0..100u64)
        .into_par_iter()
        .filter(|&trial| {
            let mut ledger = CompatibilityLedger::default();
            for g in 0..50 {
                let s = scripted_game(goal, 100, trial * 1000 + g, tables);
                let out = s.outcome().unwrap();
                let trace = DecisionTrace::from_parts(s.m, s.revealed(), s.belief_trace(), s.decisions(), out.forced);
                ledger.update_from_decisions(&s.id, &trace, tables);
                ledger.update_compatibility(&s.id, out.final_rank, out.n);
                assert!((ledger.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            adjacent.contains(&ledger.argmax())
        })
        .count();
    assert!(ok >= 80, "identified in {ok} of 100 trials");
}

#[test]
fn replay_reproduces_machine_decisions() {
    let tables = TableSet::shipped();
    for seed in 0..20 {
        let mut s = new_session(60, &DistributionBasket::default(), seed).unwrap();
        while s.is_open() {
            s.advance().unwrap();
            if s.pending() {
                let d = s.machine_decide(Objective::TopPercent { q: 30 }, tables).unwrap();
                s.decide(d).unwrap();
            }
        }
        let shadow = s.machine_shadow(Objective::TopPercent { q: 30 }, tables).unwrap();
        // Live machine play and the shadow replay make the same calls.
        assert_eq!(&shadow.decisions[..], s.decisions());
        s.set_machine(shadow);
        let rec: SessionRecord = serde_json::from_str(&serde_json::to_string(&s.record()).unwrap()).unwrap();
        let again = Session::replay(&rec).unwrap();
        assert_eq!(again.decisions(), s.decisions());
        assert_eq!(again.machine_shadow(Objective::TopPercent { q: 30 }, tables).unwrap(), *s.machine().unwrap());
    }
}
