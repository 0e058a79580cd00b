//! Random instance builders shared by the integration tests.
#![allow(dead_code)]

use click_ope::click_models::{ClickModelSpec, SyntheticWorld};
use click_ope::policies::{ListDistribution, Policy};
use click_ope::{Catalog, ContextId, RankedList};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn all_lists(catalog: &Catalog) -> Vec<RankedList> {
    catalog.all_lists(1_000_000).unwrap()
}

/// Random distribution over a random subset of `lists` holding at least
/// `min_support` lists (all of them when `min_support >= lists.len()`).
pub fn random_distribution(rng: &mut impl Rng, lists: &[RankedList], min_support: usize) -> ListDistribution {
    let mut chosen: Vec<RankedList> = lists.to_vec();
    chosen.shuffle(rng);
    let keep = if min_support >= lists.len() {
        lists.len()
    } else {
        rng.gen_range(min_support.max(1)..=lists.len())
    };
    chosen.truncate(keep);
    ListDistribution::from_weights(chosen.into_iter().map(|l| {
        let w: f64 = rng.gen_range(0.05..1.0);
        (l, w * w)
    }))
    .unwrap()
}

pub fn random_policy(rng: &mut impl Rng, catalog: &Catalog, min_support: usize) -> Policy {
    let lists = all_lists(catalog);
    Policy::new(
        catalog
            .contexts()
            .iter()
            .map(|&x| (x, random_distribution(rng, &lists, min_support)))
            .collect(),
    )
    .unwrap()
}

/// Policy with full support in every context.
pub fn full_policy(rng: &mut impl Rng, catalog: &Catalog) -> Policy {
    random_policy(rng, catalog, usize::MAX)
}

fn probs(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn ip_world(rng: &mut impl Rng, items: usize, k: usize, contexts: usize) -> SyntheticWorld {
    let cat = Catalog::dense(items, k, contexts).unwrap();
    let m = (0..contexts)
        .map(|_| (0..items).map(|_| probs(rng, k, 0.02, 0.9)).collect())
        .collect();
    SyntheticWorld::uniform_contexts(ClickModelSpec::ip(cat, m).unwrap(), rng.gen()).unwrap()
}

/// Position-based world with the same examination curve in every context.
pub fn pbm_world(rng: &mut impl Rng, items: usize, examination: &[f64], contexts: usize) -> SyntheticWorld {
    let cat = Catalog::dense(items, examination.len(), contexts).unwrap();
    let attraction = (0..contexts).map(|_| probs(rng, items, 0.05, 0.95)).collect();
    let exam = vec![examination.to_vec(); contexts];
    SyntheticWorld::uniform_contexts(ClickModelSpec::pbm(cat, attraction, exam).unwrap(), rng.gen()).unwrap()
}

pub fn dctr_world(rng: &mut impl Rng, items: usize, k: usize, contexts: usize) -> SyntheticWorld {
    let cat = Catalog::dense(items, k, contexts).unwrap();
    let rates = (0..contexts).map(|_| probs(rng, items, 0.05, 0.95)).collect();
    SyntheticWorld::uniform_contexts(ClickModelSpec::dctr(cat, rates).unwrap(), rng.gen()).unwrap()
}

/// Decreasing examination probabilities starting at 1.
pub fn random_examination(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for _ in 1..k {
        let last = *p.last().unwrap();
        p.push(last * rng.gen_range(0.3..0.95));
    }
    p
}

pub fn contexts(policy: &Policy) -> Vec<ContextId> {
    policy.contexts().collect()
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
