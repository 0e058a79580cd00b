mod common;

use std::collections::BTreeMap;

use click_ope::click_models::simulate_log;
use click_ope::estimators::{estimate, estimate_ip, estimate_list};
use click_ope::optimize::{best_ip_marginals, best_list_policy};
use click_ope::policies::{estimate_policy, Policy};
use click_ope::{Clip, EstimatorConfig, EstimatorFamily, LoggedDataset, RewardWeights};
use rand::Rng;

fn clip(m: f64) -> Clip {
    Clip::new(m).unwrap()
}

fn configs(m: Clip, theta: &RewardWeights, k: usize) -> Vec<EstimatorConfig> {
    let p: Vec<f64> = (1..=k).map(|i| 1.0 / i as f64).collect();
    EstimatorFamily::ALL
        .iter()
        .map(|&f| EstimatorConfig::for_family(f, m, theta.clone(), &p).unwrap())
        .collect()
}

fn small_log(seed: u64, n: usize) -> (LoggedDataset, Policy) {
    let mut r = common::rng(seed);
    let world = common::pbm_world(&mut r, 4, &[1.0, 0.6], 2).with_seed(seed);
    let pi = common::full_policy(&mut r, world.catalog());
    (simulate_log(&world, &pi, n, 1).unwrap(), pi)
}

/// Plain-loop list estimator, written from the definition.
fn list_oracle(ds: &LoggedDataset, h: &Policy, pihat: &Policy, m: f64, theta: &[f64]) -> f64 {
    let mut total = 0.0;
    for rec in ds.records() {
        let num = h.list_prob(&rec.list, rec.context).unwrap();
        let den = pihat.list_prob(&rec.list, rec.context).unwrap();
        let w = if den > 0.0 { (num / den).min(m) } else if num > 0.0 { m } else { 0.0 };
        let reward: f64 = rec.clicks.flags().iter().zip(theta).filter(|(c, _)| **c).map(|(_, t)| t).sum();
        if reward > 0.0 {
            total += w * reward;
        }
    }
    total / ds.len() as f64
}

/// Plain-loop item-position estimator.
fn ip_oracle(ds: &LoggedDataset, h: &Policy, pihat: &Policy, m: f64, theta: &[f64]) -> f64 {
    let mut total = 0.0;
    for rec in ds.records() {
        let hm = h.marginals(rec.context).unwrap();
        let pm = pihat.marginals(rec.context).unwrap();
        for (k, (&a, &c)) in rec.list.items().iter().zip(rec.clicks.flags()).enumerate() {
            if !c {
                continue;
            }
            let (num, den) = (hm.get(a, k + 1), pm.get(a, k + 1));
            let w = if den > 0.0 { (num / den).min(m) } else if num > 0.0 { m } else { 0.0 };
            total += theta[k] * w;
        }
    }
    total / ds.len() as f64
}

#[test]
fn list_and_ip_match_plain_loop_oracles() {
    let mut r = common::rng(1);
    for seed in 0..20 {
        let (ds, pi) = small_log(seed, 500);
        let h = common::random_policy(&mut r, ds.catalog(), 2);
        let pihat = if seed % 2 == 0 { pi } else { estimate_policy(&ds, 0.0).unwrap() };
        let theta = RewardWeights::dcg(2).unwrap();
        for m in [0.0, 0.7, 3.0, f64::INFINITY] {
            let c = if m.is_infinite() { Clip::INFINITE } else { clip(m) };
            let got = estimate_list(&ds, &h, &pihat, &EstimatorConfig::list(c, theta.clone())).unwrap().value;
            let want = list_oracle(&ds, &h, &pihat, m, theta.as_slice());
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "list {got} vs {want}");
            let got = estimate_ip(&ds, &h, &pihat, &EstimatorConfig::ip(c, theta.clone())).unwrap().value;
            let want = ip_oracle(&ds, &h, &pihat, m, theta.as_slice());
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "ip {got} vs {want}");
        }
    }
}

#[test]
fn self_evaluation_returns_the_average_reward() {
    for seed in 0..5 {
        let (ds, _) = small_log(100 + seed, 3000);
        let pihat = estimate_policy(&ds, 0.0).unwrap();
        let theta = RewardWeights::new(vec![1.0, 0.3]).unwrap();
        let avg = ds
            .records()
            .iter()
            .map(|r| r.clicks.flags().iter().zip(theta.as_slice()).filter(|(c, _)| **c).map(|(_, t)| t).sum::<f64>())
            .sum::<f64>()
            / ds.len() as f64;
        for config in configs(clip(1.0), &theta, 2) {
            let v = estimate(&ds, &pihat, &pihat, &config).unwrap().value;
            assert!((v - avg).abs() < 1e-12, "{:?}: {v} vs {avg}", config.family());
        }
    }
}

#[test]
fn estimates_are_non_decreasing_in_the_clip() {
    let mut r = common::rng(2);
    let (ds, pi) = small_log(7, 800);
    let theta = RewardWeights::ones(2).unwrap();
    for _ in 0..20 {
        let h = common::random_policy(&mut r, ds.catalog(), 1);
        let mut grid: Vec<f64> = (0..8).map(|_| r.gen_range(0.0..6.0)).collect();
        grid.sort_by(f64::total_cmp);
        for family in 0..5 {
            let mut last = f64::NEG_INFINITY;
            for &m in &grid {
                let v = estimate(&ds, &h, &pi, &configs(clip(m), &theta, 2)[family]).unwrap().value;
                assert!(v >= last - 1e-15);
                last = v;
            }
        }
    }
}

#[test]
fn no_random_policy_beats_the_optimizers() {
    let mut r = common::rng(3);
    let (ds, pi) = small_log(9, 300);
    let ds = ds.filter(|rec| rec.context == 0);
    let pihat = Policy::new(BTreeMap::from([(0, pi.distribution(0).unwrap().clone())])).unwrap();
    let theta = RewardWeights::dcg(2).unwrap();
    for m in [0.5, 1.0, 2.5] {
        let lcfg = EstimatorConfig::list(clip(m), theta.clone());
        let icfg = EstimatorConfig::ip(clip(m), theta.clone());
        let best_list = best_list_policy(&ds, &pihat, &lcfg).unwrap().objective;
        let best_ip = best_ip_marginals(&ds, &pihat, &icfg).unwrap().objective;
        for _ in 0..1000 {
            let h = common::random_policy(&mut r, ds.catalog(), 1);
            let h = Policy::new(BTreeMap::from([(0, h.distribution(0).unwrap().clone())])).unwrap();
            assert!(estimate_list(&ds, &h, &pihat, &lcfg).unwrap().value <= best_list + 1e-12);
            assert!(estimate_ip(&ds, &h, &pihat, &icfg).unwrap().value <= best_ip + 1e-12);
        }
    }
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let mut r = common::rng(4);
    let (ds, pi) = small_log(11, 20_000);
    let h = common::random_policy(&mut r, ds.catalog(), 3);
    let theta = RewardWeights::dcg(2).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            configs(clip(2.0), &theta, 2)
                .iter()
                .map(|c| estimate(&ds, &h, &pi, c).unwrap().value.to_bits())
                .collect::<Vec<_>>()
        })
    };
    assert_eq!(run(1), run(4));
}
