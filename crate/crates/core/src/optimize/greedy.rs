//! Best policy under the list estimator.
//!
//! Per context the LP `max sum_A r_A c_A` subject to `c_A pihat_A <= h_A`,
//! `c_A <= M` and `sum_A h_A = 1` is a fractional knapsack: list `A` buys
//! value `r_A / pihat_A` per unit of probability, up to `M pihat_A` units.

use std::collections::BTreeMap;

use super::{check_config, group_by_context, waterfill, OptimizationResult};
use crate::error::{Error, Result};
use crate::parallel;
use crate::policies::{ListDistribution, Policy};
use crate::sum::CompensatedSum;
use crate::types::{
    weighted_clicks, ContextId, EstimatorConfig, EstimatorFamily, LoggedDataset, LoggedRecord,
    RankedList,
};

/// Maximizes the clipped list estimator over all stochastic policies.
///
/// Ties in `r_A / pihat(A|x)` are broken by lexicographic list order.
pub fn best_list_policy(
    dataset: &LoggedDataset,
    pihat: &Policy,
    config: &EstimatorConfig,
) -> Result<OptimizationResult<Policy>> {
    let m = check_config(dataset, config, EstimatorFamily::List)?.value();
    let theta = config.theta().as_slice();
    let groups = group_by_context(dataset);
    let solved = parallel::try_map_slice(&groups, |(x, records)| {
        solve_context(*x, records, pihat, theta, m)
    })?;
    let mut contexts = BTreeMap::new();
    let mut total = CompensatedSum::new();
    for ((x, _), (dist, value)) in groups.iter().zip(solved) {
        total.add(value);
        contexts.insert(*x, dist);
    }
    Ok(OptimizationResult {
        policy: Policy::new(contexts)?,
        objective: total.value() / dataset.len() as f64,
        certificate: None,
    })
}

fn solve_context(
    x: ContextId,
    records: &[&LoggedRecord],
    pihat: &Policy,
    theta: &[f64],
    m: f64,
) -> Result<(ListDistribution, f64)> {
    let dist = pihat.distribution(x)?;
    let mut scores: BTreeMap<&RankedList, f64> = BTreeMap::new();
    for r in records {
        *scores.entry(&r.list).or_insert(0.0) += weighted_clicks(&r.clicks, theta);
    }
    // Candidate lists: logged ones first (lexicographic), then the rest of
    // pihat's support, which only ever receives residual mass.
    let mut lists: Vec<RankedList> = scores.keys().map(|l| (*l).clone()).collect();
    let logged = lists.len();
    lists.extend(
        dist.entries()
            .iter()
            .filter(|(l, _)| !scores.contains_key(l))
            .map(|(l, _)| l.clone()),
    );
    let p: Vec<f64> = lists.iter().map(|l| dist.prob(l)).collect();
    if let Some(i) = (0..logged).find(|&i| p[i] <= 0.0) {
        return Err(Error::Domain(format!(
            "logged list {} has zero probability under the logging policy in context {x}",
            lists[i]
        )));
    }
    let r: Vec<f64> = lists[..logged].iter().map(|l| scores[l]).collect();

    let mut order: Vec<usize> = (0..logged).collect();
    order.sort_by(|&i, &j| {
        (r[j] / p[j])
            .partial_cmp(&(r[i] / p[i]))
            .expect("finite scores")
            .then_with(|| lists[i].cmp(&lists[j]))
    });
    let mut h = vec![0.0; lists.len()];
    let mut budget = 1.0;
    for &i in &order {
        if budget <= 0.0 {
            break;
        }
        let take = (m * p[i]).min(budget);
        h[i] = take;
        budget -= take;
    }
    if budget > 0.0 {
        let mut room: Vec<f64> = (0..lists.len()).map(|i| m * p[i] - h[i]).collect();
        budget = waterfill(budget, &p, &mut room, &mut h);
        if budget > 0.0 {
            let uniform: Vec<f64> = (0..lists.len()).map(|i| if i < logged { 1.0 } else { 0.0 }).collect();
            let mut unlimited = vec![f64::INFINITY; lists.len()];
            waterfill(budget, &uniform, &mut unlimited, &mut h);
        }
    }
    let out = ListDistribution::from_weights(lists.iter().cloned().zip(h))?;
    let mut value = CompensatedSum::new();
    for i in 0..logged {
        if r[i] != 0.0 {
            value.add(r[i] * (out.prob(&lists[i]) / p[i]).min(m));
        }
    }
    Ok((out, value.value()))
}
