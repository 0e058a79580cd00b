use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sample_indexed, true_value, ClickModelSpec};
use crate::error::{Error, Result};
use crate::parallel;
use crate::policies::{ListDistribution, Policy};
use crate::sum::sum;
use crate::types::{Catalog, LoggedDataset, LoggedRecord, RankedList, RewardWeights};

/// Records generated per RNG stream.
const SHARD: usize = 4096;

/// A click model together with the context distribution and a seed.
///
/// An optional drift target makes the click model move linearly from the base
/// model on day 1 to the target on the last day.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    model: ClickModelSpec,
    drift_target: Option<ClickModelSpec>,
    context_distribution: Vec<f64>,
    seed: u64,
}

impl SyntheticWorld {
    pub fn new(model: ClickModelSpec, context_distribution: Vec<f64>, seed: u64) -> Result<Self> {
        let n = model.catalog().num_contexts();
        if context_distribution.len() != n {
            return Err(Error::Dimension(format!(
                "context distribution has {} entries, catalog {n} contexts",
                context_distribution.len()
            )));
        }
        if context_distribution.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain("context probabilities must be non-negative".into()));
        }
        let total = sum(&context_distribution);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("context distribution sums to {total}, not 1")));
        }
        Ok(Self {
            model,
            drift_target: None,
            context_distribution,
            seed,
        })
    }

    /// All contexts equally likely.
    pub fn uniform_contexts(model: ClickModelSpec, seed: u64) -> Result<Self> {
        let n = model.catalog().num_contexts();
        let mut dist = vec![1.0 / n as f64; n];
        // Absorb rounding so the distribution sums to one exactly.
        let rest = 1.0 - sum(&dist[1..]);
        dist[0] = rest;
        Self::new(model, dist, seed)
    }

    /// Lets the click model drift towards `target` over the days of a log.
    pub fn with_drift(mut self, target: ClickModelSpec) -> Result<Self> {
        self.model.interpolate(&target, 0.0)?;
        self.drift_target = Some(target);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn model(&self) -> &ClickModelSpec {
        &self.model
    }

    pub fn drift_target(&self) -> Option<&ClickModelSpec> {
        self.drift_target.as_ref()
    }

    pub fn catalog(&self) -> &Catalog {
        self.model.catalog()
    }

    pub fn context_distribution(&self) -> &[f64] {
        &self.context_distribution
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Click model in force on `day` (1-based) of a `day_count`-day log.
    pub fn model_for_day(&self, day: u32, day_count: u32) -> Result<ClickModelSpec> {
        match &self.drift_target {
            None => Ok(self.model.clone()),
            Some(target) => {
                let t = if day_count <= 1 {
                    0.0
                } else {
                    (day.clamp(1, day_count) - 1) as f64 / (day_count - 1) as f64
                };
                self.model.interpolate(target, t)
            }
        }
    }

    /// Exact value of `policy` under the base model.
    pub fn true_value(&self, policy: &Policy, theta: &RewardWeights) -> Result<f64> {
        true_value(&self.model, policy, theta, &self.context_distribution)
    }

    /// Exact value of `policy` under the model in force on `day`.
    pub fn true_value_on_day(
        &self,
        policy: &Policy,
        theta: &RewardWeights,
        day: u32,
        day_count: u32,
    ) -> Result<f64> {
        true_value(
            &self.model_for_day(day, day_count)?,
            policy,
            theta,
            &self.context_distribution,
        )
    }
}

/// Per-context list samplers with lists pre-resolved to catalog indices.
struct ListSampler {
    lists: Vec<(RankedList, Vec<usize>)>,
    index: WeightedIndex<f64>,
}

impl ListSampler {
    fn new(dist: &ListDistribution, catalog: &Catalog) -> Result<Self> {
        let lists = dist
            .entries()
            .iter()
            .map(|(l, _)| {
                if l.len() != catalog.list_length() {
                    return Err(Error::Dimension(format!(
                        "logging policy list {l} does not have {} positions",
                        catalog.list_length()
                    )));
                }
                let idx = l
                    .items()
                    .iter()
                    .map(|a| {
                        catalog
                            .item_index(*a)
                            .ok_or_else(|| Error::Domain(format!("item {a} is not in the catalog")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((l.clone(), idx))
            })
            .collect::<Result<Vec<_>>>()?;
        let index = WeightedIndex::new(dist.entries().iter().map(|(_, p)| *p))
            .map_err(|e| Error::Domain(format!("logging policy: {e}")))?;
        Ok(Self { lists, index })
    }
}

fn samplers(world: &SyntheticWorld, policy: &Policy) -> Result<Vec<Option<ListSampler>>> {
    let catalog = world.catalog();
    catalog
        .contexts()
        .iter()
        .zip(&world.context_distribution)
        .map(|(&x, &px)| {
            if px == 0.0 {
                Ok(None)
            } else {
                ListSampler::new(policy.distribution(x)?, catalog).map(Some)
            }
        })
        .collect()
}

fn shard_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `n` impressions of `logging_policy` in `world`.
///
/// Days are drawn uniformly from `1..=day_count`; with a drifting world the
/// clicks of each record follow the model of its day. The draws are split
/// into fixed-size shards with independent RNG streams derived from the
/// world's seed, so the log is identical for any number of worker threads.
pub fn simulate_log(
    world: &SyntheticWorld,
    logging_policy: &Policy,
    n: usize,
    day_count: u32,
) -> Result<LoggedDataset> {
    if n == 0 {
        return Err(Error::Capacity("cannot simulate a log of 0 records".into()));
    }
    if day_count == 0 {
        return Err(Error::Domain("day_count must be at least 1".into()));
    }
    let catalog = world.model.shared_catalog();
    let samplers = samplers(world, logging_policy)?;
    let contexts = WeightedIndex::new(&world.context_distribution)
        .map_err(|e| Error::Domain(format!("context distribution: {e}")))?;
    let models = (1..=day_count)
        .map(|d| world.model_for_day(d, day_count))
        .collect::<Result<Vec<_>>>()?;
    let shards = n.div_ceil(SHARD);
    let parts = parallel::map_indices(shards, |s| {
        let mut rng = shard_rng(world.seed, s as u64);
        let len = SHARD.min(n - s * SHARD);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let xi = contexts.sample(&mut rng);
            let sampler = samplers[xi].as_ref().expect("context with positive probability");
            let (list, items) = &sampler.lists[sampler.index.sample(&mut rng)];
            let day = rng.gen_range(1..=day_count);
            let clicks = sample_indexed(&models[day as usize - 1], xi, items, &mut rng);
            out.push(LoggedRecord {
                query: 0,
                context: catalog.contexts()[xi],
                day,
                list: list.clone(),
                clicks,
            });
        }
        out
    });
    Ok(LoggedDataset::new_unchecked(
        catalog,
        parts.into_iter().flatten().collect(),
    ))
}

/// Simulates `n_per_day` impressions on each of `day_count` days while both
/// the logging policy and (if the world drifts) the click model move linearly
/// between two endpoints: day 1 uses `start_policy`, the last day
/// `end_policy`, and day `d` the mixture with weight `(d - 1) / (D - 1)` on
/// the end policy.
pub fn simulate_drifting_log(
    world: &SyntheticWorld,
    start_policy: &Policy,
    end_policy: &Policy,
    n_per_day: usize,
    day_count: u32,
) -> Result<LoggedDataset> {
    if n_per_day == 0 || day_count == 0 {
        return Err(Error::Capacity("cannot simulate an empty log".into()));
    }
    let catalog: Arc<Catalog> = world.model.shared_catalog();
    let contexts = WeightedIndex::new(&world.context_distribution)
        .map_err(|e| Error::Domain(format!("context distribution: {e}")))?;
    let shards_per_day = n_per_day.div_ceil(SHARD);
    let mut records = Vec::with_capacity(n_per_day * day_count as usize);
    for day in 1..=day_count {
        let t = if day_count == 1 {
            0.0
        } else {
            (day - 1) as f64 / (day_count - 1) as f64
        };
        let policy = end_policy.mix(start_policy, t)?;
        let samplers = samplers(world, &policy)?;
        let model = world.model_for_day(day, day_count)?;
        let parts = parallel::map_indices(shards_per_day, |s| {
            let stream = ((day as u64) << 32) | s as u64;
            let mut rng = shard_rng(world.seed, stream);
            let len = SHARD.min(n_per_day - s * SHARD);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let xi = contexts.sample(&mut rng);
                let sampler = samplers[xi].as_ref().expect("context with positive probability");
                let (list, items) = &sampler.lists[sampler.index.sample(&mut rng)];
                let clicks = sample_indexed(&model, xi, items, &mut rng);
                out.push(LoggedRecord {
                    query: 0,
                    context: catalog.contexts()[xi],
                    day,
                    list: list.clone(),
                    clicks,
                });
            }
            out
        });
        records.extend(parts.into_iter().flatten());
    }
    Ok(LoggedDataset::new_unchecked(catalog, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::estimate_policy;

    fn world() -> SyntheticWorld {
        let c = Arc::new(Catalog::dense(3, 2, 1).unwrap());
        let m = ClickModelSpec::pbm(c, vec![vec![0.9, 0.6, 0.3]], vec![vec![1.0, 0.5]]).unwrap();
        SyntheticWorld::new(m, vec![1.0], 11).unwrap()
    }

    #[test]
    fn rejects_bad_context_distribution() {
        let w = world();
        assert!(SyntheticWorld::new(w.model().clone(), vec![0.9], 1).is_err());
        assert!(SyntheticWorld::new(w.model().clone(), vec![0.5, 0.5], 1).is_err());
    }

    #[test]
    fn empty_log_is_a_capacity_error() {
        let w = world();
        let p = Policy::deterministic(0, RankedList::new(vec![0, 1])).unwrap();
        assert!(matches!(simulate_log(&w, &p, 0, 1), Err(Error::Capacity(_))));
    }

    #[test]
    fn deterministic_world_repeats_records() {
        let c = Arc::new(Catalog::dense(3, 2, 1).unwrap());
        let m = ClickModelSpec::ip(c, vec![vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]]).unwrap();
        let w = SyntheticWorld::new(m, vec![1.0], 3).unwrap();
        let p = Policy::deterministic(0, RankedList::new(vec![0, 1])).unwrap();
        let log = simulate_log(&w, &p, 500, 4).unwrap();
        assert_eq!(log.len(), 500);
        for r in log.records() {
            assert_eq!(r.list.items(), &[0, 1]);
            assert_eq!(r.clicks.flags(), &[true, true]);
            assert!((1..=4).contains(&r.day));
        }
    }

    #[test]
    fn uniform_policy_frequencies_concentrate() {
        let w = world();
        let lists = w.catalog().all_lists(10).unwrap();
        let p = Policy::uniform(0, lists.clone()).unwrap();
        let log = simulate_log(&w, &p, 60_000, 3).unwrap();
        for l in &lists {
            let c = log.records().iter().filter(|r| &r.list == l).count();
            assert!((c as i64 - 10_000).abs() <= 400, "list {l}: {c}");
        }
        let est = estimate_policy(&log, 0.0).unwrap();
        for l in &lists {
            assert!((est.list_prob(l, 0).unwrap() - 1.0 / 6.0).abs() < 0.007);
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let w = world();
        let p = Policy::uniform(0, w.catalog().all_lists(10).unwrap()).unwrap();
        let a = simulate_log(&w, &p, 10_000, 5).unwrap();
        let b = simulate_log(&w, &p, 10_000, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_log(&w.clone().with_seed(12), &p, 10_000, 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn monte_carlo_value_converges_to_true_value() {
        let w = world();
        let theta = RewardWeights::ones(2).unwrap();
        let p = Policy::uniform(0, w.catalog().all_lists(10).unwrap()).unwrap();
        let n = 200_000;
        let log = simulate_log(&w, &p, n, 1).unwrap();
        let rewards: Vec<f64> = log.records().iter().map(|r| r.clicks.count() as f64).collect();
        let mean = sum(&rewards) / n as f64;
        let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let v = w.true_value(&p, &theta).unwrap();
        assert!((mean - v).abs() <= 3.0 * (var / n as f64).sqrt(), "{mean} vs {v}");
    }

    #[test]
    fn drift_interpolates_between_endpoints() {
        let w = world();
        let c = w.model().shared_catalog();
        let end = ClickModelSpec::pbm(c, vec![vec![0.3, 0.6, 0.9]], vec![vec![1.0, 0.5]]).unwrap();
        let w = w.with_drift(end.clone()).unwrap();
        assert_eq!(&w.model_for_day(1, 5).unwrap(), w.model());
        assert_eq!(w.model_for_day(5, 5).unwrap(), end);
        let mid = w.model_for_day(3, 5).unwrap();
        assert!((mid.click_prob(0, 1, 0).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn drifting_log_moves_between_policies() {
        let w = world();
        let a = Policy::deterministic(0, RankedList::new(vec![0, 1])).unwrap();
        let b = Policy::deterministic(0, RankedList::new(vec![2, 1])).unwrap();
        let log = simulate_drifting_log(&w, &a, &b, 1000, 3).unwrap();
        assert_eq!(log.len(), 3000);
        let first: Vec<_> = log.records().iter().filter(|r| r.day == 1).collect();
        let last: Vec<_> = log.records().iter().filter(|r| r.day == 3).collect();
        assert!(first.iter().all(|r| r.list.items() == [0, 1]));
        assert!(last.iter().all(|r| r.list.items() == [2, 1]));
        let mid = log.records().iter().filter(|r| r.day == 2 && r.list.items() == [0, 1]).count();
        assert!((mid as i64 - 500).abs() < 100);
    }
}
