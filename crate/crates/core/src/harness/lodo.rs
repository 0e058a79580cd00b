//! Leave-one-day-out evaluation.
//!
//! For query `q` and day `d`, the records of day `d` form the evaluation set
//! and all other days of `q` the production set. The logging policy is
//! estimated from production list frequencies, the target policy from
//! evaluation list frequencies, and the estimator runs on the production set.
//! Its output is compared with the evaluation set's own weighted click rate,
//! or with the exact value of the target policy in a synthetic world.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::report::{EvaluationReport, SweepRow, SweepTable};
use crate::click_models::SyntheticWorld;
use crate::error::{Error, Result};
use crate::estimators::estimate;
use crate::parallel;
use crate::policies::{estimate_policy_from_records, Policy};
use crate::sum::CompensatedSum;
use crate::types::{
    weighted_clicks, Catalog, Clip, ContextId, EstimatorConfig, EstimatorFamily, LoggedDataset, LoggedRecord,
    QueryId, RewardWeights,
};

/// Records bucketed by query and day.
#[derive(Debug, Clone)]
pub struct DaySlicedLog {
    catalog: Arc<Catalog>,
    day_count: u32,
    keep_contexts: bool,
    buckets: BTreeMap<(QueryId, u32), Vec<LoggedRecord>>,
}

impl DaySlicedLog {
    /// `day_count` defaults to the largest day in the log. Unless
    /// `keep_contexts` is set, every record's context is replaced by 0 so that
    /// each query is a single evaluation unit.
    pub fn new(dataset: &LoggedDataset, day_count: Option<u32>, keep_contexts: bool) -> Result<Self> {
        let max_day = dataset.records().iter().map(|r| r.day).max().ok_or(Error::EmptyDataset)?;
        let day_count = day_count.unwrap_or(max_day);
        if day_count < 2 {
            return Err(Error::Domain("leave-one-day-out needs at least two days".into()));
        }
        if max_day > day_count {
            return Err(Error::Domain(format!("log has day {max_day} but only {day_count} days were declared")));
        }
        let catalog = if keep_contexts {
            dataset.shared_catalog()
        } else {
            let c = dataset.catalog();
            Arc::new(Catalog::new(c.items().to_vec(), c.list_length(), vec![0])?)
        };
        let mut buckets: BTreeMap<(QueryId, u32), Vec<LoggedRecord>> = BTreeMap::new();
        for r in dataset.records() {
            let mut r = r.clone();
            if !keep_contexts {
                r.context = 0;
            }
            buckets.entry((r.query, r.day)).or_default().push(r);
        }
        Ok(Self {
            catalog,
            day_count,
            keep_contexts,
            buckets,
        })
    }

    pub fn day_count(&self) -> u32 {
        self.day_count
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn queries(&self) -> Vec<QueryId> {
        self.buckets.keys().map(|(q, _)| *q).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn records(&self, query: QueryId, day: u32) -> &[LoggedRecord] {
        self.buckets.get(&(query, day)).map_or(&[], Vec::as_slice)
    }

    /// Days on which `query` has records.
    pub fn days_with_records(&self, query: QueryId) -> Vec<u32> {
        self.buckets.range((query, 0)..=(query, u32::MAX)).map(|((_, d), _)| *d).collect()
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }
}

/// Where the value an estimate is compared against comes from.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// Weighted click average of the evaluation set.
    Empirical,
    /// Exact value of the evaluation-set policy in the generating world, on
    /// the evaluation day.
    Synthetic(&'a SyntheticWorld),
}

/// One production/evaluation split, ready to evaluate any estimator.
#[derive(Debug, Clone)]
pub struct Split {
    pub query: QueryId,
    pub day: u32,
    pub reference: f64,
    pub evaluation_records: usize,
    production: LoggedDataset,
    pihat: Policy,
    target: Policy,
}

impl Split {
    pub fn production(&self) -> &LoggedDataset {
        &self.production
    }

    pub fn logging_policy(&self) -> &Policy {
        &self.pihat
    }

    pub fn target_policy(&self) -> &Policy {
        &self.target
    }
}

/// Estimate against reference for one (query, day).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayResult {
    pub query: QueryId,
    pub day: u32,
    pub estimate: f64,
    pub reference: f64,
    pub clipped_fraction: f64,
    pub production_records: usize,
    pub evaluation_records: usize,
}

impl DayResult {
    pub fn error(&self) -> f64 {
        self.estimate - self.reference
    }
}

/// Builds every split of the given queries. Days without evaluation or
/// production records are returned in the second vector.
pub fn prepare_splits(
    log: &DaySlicedLog,
    queries: &[QueryId],
    theta: &RewardWeights,
    reference: Reference<'_>,
) -> Result<(Vec<Split>, Vec<(QueryId, u32)>)> {
    if theta.len() != log.catalog.list_length() {
        return Err(Error::Dimension(format!(
            "reward weights have {} entries but lists have {} positions",
            theta.len(),
            log.catalog.list_length()
        )));
    }
    let tasks: Vec<(QueryId, u32)> = queries
        .iter()
        .flat_map(|&q| (1..=log.day_count).map(move |d| (q, d)))
        .collect();
    let built = parallel::try_map_slice(&tasks, |&(q, d)| build_split(log, q, d, theta, reference))?;
    let mut splits = Vec::new();
    let mut skipped = Vec::new();
    for (task, s) in tasks.into_iter().zip(built) {
        match s {
            Some(s) => splits.push(s),
            None => skipped.push(task),
        }
    }
    Ok((splits, skipped))
}

fn build_split(
    log: &DaySlicedLog,
    query: QueryId,
    day: u32,
    theta: &RewardWeights,
    reference: Reference<'_>,
) -> Result<Option<Split>> {
    let evaluation = log.records(query, day);
    let production: Vec<LoggedRecord> = (1..=log.day_count)
        .filter(|&d| d != day)
        .flat_map(|d| log.records(query, d).iter().cloned())
        .collect();
    if evaluation.is_empty() || production.is_empty() {
        return Ok(None);
    }
    let pihat = estimate_policy_from_records(&production, 0.0)?;
    let target = estimate_policy_from_records(evaluation, 0.0)?;
    let reference = match reference {
        Reference::Empirical => {
            let s: CompensatedSum = evaluation.iter().map(|r| weighted_clicks(&r.clicks, theta.as_slice())).collect();
            s.value() / evaluation.len() as f64
        }
        Reference::Synthetic(world) => {
            let policy = if log.keep_contexts {
                target.clone()
            } else {
                let contexts: Vec<ContextId> = world.catalog().contexts().to_vec();
                Policy::shared(&contexts, target.distribution(0)?)
            };
            world.true_value_on_day(&policy, theta, day, log.day_count)?
        }
    };
    Ok(Some(Split {
        query,
        day,
        reference,
        evaluation_records: evaluation.len(),
        production: LoggedDataset::new_unchecked(Arc::clone(&log.catalog), production),
        pihat,
        target,
    }))
}

/// Runs one estimator on every split, in split order.
pub fn evaluate_splits(splits: &[Split], config: &EstimatorConfig) -> Result<Vec<DayResult>> {
    parallel::try_map_slice(splits, |s| {
        let r = estimate(&s.production, &s.target, &s.pihat, config)?;
        Ok(DayResult {
            query: s.query,
            day: s.day,
            estimate: r.value,
            reference: s.reference,
            clipped_fraction: r.clipped_fraction,
            production_records: s.production.len(),
            evaluation_records: s.evaluation_records,
        })
    })
}

/// Per-day estimates for one query. Needs records on at least two days.
pub fn leave_one_day_out(
    log: &DaySlicedLog,
    query: QueryId,
    config: &EstimatorConfig,
    reference: Reference<'_>,
) -> Result<Vec<DayResult>> {
    if log.days_with_records(query).len() < 2 {
        return Err(Error::Domain(format!("query {query} has records on fewer than two days")));
    }
    let (splits, _) = prepare_splits(log, &[query], config.theta(), reference)?;
    evaluate_splits(&splits, config)
}

/// Leave-one-day-out report over `queries` (all queries when empty).
pub fn evaluate(
    log: &DaySlicedLog,
    queries: &[QueryId],
    config: &EstimatorConfig,
    reference: Reference<'_>,
) -> Result<EvaluationReport> {
    let all;
    let queries = if queries.is_empty() {
        all = log.queries();
        &all[..]
    } else {
        queries
    };
    let (splits, skipped) = prepare_splits(log, queries, config.theta(), reference)?;
    let rows = evaluate_splits(&splits, config)?;
    EvaluationReport::new(config.clone(), rows, skipped)
}

/// Default examination probabilities `p(k) = 1 / k`.
pub fn inverse_rank(k: usize) -> Vec<f64> {
    (1..=k).map(|i| 1.0 / i as f64).collect()
}

/// Aggregate RMSE for every (family, M) pair of the grid. The splits are
/// built once and shared by all estimators.
pub fn m_sweep(
    log: &DaySlicedLog,
    queries: &[QueryId],
    families: &[EstimatorFamily],
    grid: &[Clip],
    theta: &RewardWeights,
    examination: Option<&[f64]>,
    reference: Reference<'_>,
) -> Result<SweepTable> {
    if grid.is_empty() || families.is_empty() {
        return Err(Error::Config("the sweep needs at least one family and one clipping value".into()));
    }
    let all;
    let queries = if queries.is_empty() {
        all = log.queries();
        &all[..]
    } else {
        queries
    };
    let (splits, skipped) = prepare_splits(log, queries, theta, reference)?;
    let default_p = inverse_rank(theta.len());
    let p = examination.unwrap_or(&default_p);
    let mut rows = Vec::with_capacity(families.len() * grid.len());
    for &family in families {
        for &clip in grid {
            let config = EstimatorConfig::for_family(family, clip, theta.clone(), p)?;
            let results = evaluate_splits(&splits, &config)?;
            let report = EvaluationReport::new(config, results, skipped.clone())?;
            rows.push(SweepRow {
                family,
                clip,
                rmse: report.aggregate_rmse,
                clipped_fraction: report.mean_clipped_fraction(),
                days: report.rows.len(),
            });
        }
    }
    Ok(SweepTable { rows })
}
