//! Dense primal simplex and the IP-estimator optimizer built on it.

use std::collections::{BTreeMap, BTreeSet};

use super::{check_config, group_by_context, waterfill, OptimizationResult};
use crate::error::{Error, Result};
use crate::parallel;
use crate::policies::{MarginalMatrix, Policy};
use crate::sum::CompensatedSum;
use crate::types::{ContextId, EstimatorConfig, EstimatorFamily, ItemId, LoggedDataset, LoggedRecord};

const PIVOT_EPS: f64 = 1e-10;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

/// Maximizes `c . x` subject to `a x <= b` and `x >= 0`, where `b >= 0` so
/// that the origin is feasible. Bland's rule prevents cycling.
pub fn solve_lp(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::Dimension("inconsistent LP dimensions".into()));
    }
    if b.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("LP right-hand side must be non-negative".into()));
    }
    let width = n + m + 1;
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        t[i * width..i * width + n].copy_from_slice(&a[i]);
        t[i * width + n + i] = 1.0;
        t[i * width + width - 1] = b[i];
    }
    // Objective row holds reduced costs of the minimization of -c.
    for j in 0..n {
        t[m * width + j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let mut pivots = 0;
    loop {
        let obj = &t[m * width..(m + 1) * width];
        let Some(enter) = (0..n + m).find(|&j| obj[j] < -PIVOT_EPS) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let coef = t[i * width + enter];
            if coef > PIVOT_EPS {
                let ratio = t[i * width + width - 1] / coef;
                leave = match leave {
                    Some((li, lr)) if ratio > lr || (ratio == lr && basis[i] > basis[li]) => Some((li, lr)),
                    _ => Some((i, ratio)),
                };
            }
        }
        let Some((row, _)) = leave else {
            return Err(Error::Domain("LP is unbounded".into()));
        };
        pivot(&mut t, width, m, row, enter);
        basis[row] = enter;
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(Error::Domain(format!("simplex did not finish in {MAX_PIVOTS} pivots")));
        }
    }

    let mut x = vec![0.0; n];
    for (i, &v) in basis.iter().enumerate() {
        if v < n {
            x[v] = t[i * width + width - 1].max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution { x, objective, pivots })
}

fn pivot(t: &mut [f64], width: usize, m: usize, row: usize, col: usize) {
    let p = t[row * width + col];
    for v in &mut t[row * width..(row + 1) * width] {
        *v /= p;
    }
    let pivot_row: Vec<f64> = t[row * width..(row + 1) * width].to_vec();
    for i in 0..=m {
        if i == row {
            continue;
        }
        let f = t[i * width + col];
        if f != 0.0 {
            for (v, pr) in t[i * width..(i + 1) * width].iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            t[i * width + col] = 0.0;
        }
    }
}

/// Maximizes the clipped IP estimator over item-position marginals with
/// unit columns and rows of mass at most one.
///
/// Only pairs with a positive click score get LP variables (`h` and the
/// auxiliary clipped ratio `c`); the columns are relaxed to `<= 1` so the
/// origin is feasible and are completed afterwards by the residual rule,
/// which never lowers the objective.
pub fn best_ip_marginals(
    dataset: &LoggedDataset,
    pihat: &Policy,
    config: &EstimatorConfig,
) -> Result<OptimizationResult<BTreeMap<ContextId, MarginalMatrix>>> {
    let m = check_config(dataset, config, EstimatorFamily::Ip)?.value();
    let theta = config.theta().as_slice();
    let k = dataset.list_length();
    let groups = group_by_context(dataset);
    let solved = parallel::try_map_slice(&groups, |(x, records)| {
        solve_context(*x, records, pihat, theta, m, k)
    })?;
    let mut out = BTreeMap::new();
    let mut total = CompensatedSum::new();
    for ((x, _), (marginals, value)) in groups.iter().zip(solved) {
        total.add(value);
        out.insert(*x, marginals);
    }
    Ok(OptimizationResult {
        policy: out,
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
    k: usize,
) -> Result<(MarginalMatrix, f64)> {
    let pm = pihat.marginals(x)?;
    if pm.list_length() != k {
        return Err(Error::Dimension("logging policy has a different list length".into()));
    }
    let mut observed: BTreeSet<ItemId> = BTreeSet::new();
    let mut scores: BTreeMap<(ItemId, usize), f64> = BTreeMap::new();
    for r in records {
        for (pos, (&a, &clicked)) in r.list.items().iter().zip(r.clicks.flags()).enumerate() {
            observed.insert(a);
            let s = scores.entry((a, pos)).or_insert(0.0);
            if clicked {
                *s += theta[pos];
            }
        }
    }
    if let Some(&(a, pos)) = scores.keys().find(|&&(a, pos)| pm.get(a, pos + 1) <= 0.0) {
        return Err(Error::Domain(format!(
            "item {a} was logged at position {} but has zero logging probability there in context {x}",
            pos + 1
        )));
    }
    let pairs: Vec<((ItemId, usize), f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();

    // Variables: h_j for j < p, then c_j.
    let p = pairs.len();
    let mut c = vec![0.0; 2 * p];
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (j, ((item, pos), s)) in pairs.iter().enumerate() {
        c[p + j] = *s;
        let mut row = vec![0.0; 2 * p];
        row[p + j] = pm.get(*item, pos + 1);
        row[j] = -1.0;
        a.push(row);
        b.push(0.0);
        let mut row = vec![0.0; 2 * p];
        row[p + j] = 1.0;
        a.push(row);
        b.push(m);
    }
    for col in 0..k {
        let row: Vec<f64> = (0..2 * p)
            .map(|j| if j < p && pairs[j].0 .1 == col { 1.0 } else { 0.0 })
            .collect();
        a.push(row);
        b.push(1.0);
    }
    for &item in &observed {
        if pairs.iter().filter(|((i, _), _)| *i == item).count() > 1 {
            let row: Vec<f64> = (0..2 * p)
                .map(|j| if j < p && pairs[j].0 .0 == item { 1.0 } else { 0.0 })
                .collect();
            a.push(row);
            b.push(1.0);
        }
    }
    let lp = if p == 0 {
        None
    } else {
        Some(solve_lp(&c, &a, &b)?)
    };

    // Dense matrix over observed items and the logging policy's items.
    let items: Vec<ItemId> = observed.iter().copied().chain(pm.items()).collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<ItemId, usize> = items.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut h = vec![vec![0.0; k]; items.len()];
    if let Some(lp) = &lp {
        for (j, ((item, pos), _)) in pairs.iter().enumerate() {
            h[index[item]][*pos] = lp.x[j].clamp(0.0, 1.0);
        }
    }
    complete_columns(&mut h, &items, &observed, pm, m)?;

    let mut value = CompensatedSum::new();
    for ((item, pos), s) in &pairs {
        value.add(s * (h[index[item]][*pos] / pm.get(*item, pos + 1)).min(m));
    }
    let marginals = MarginalMatrix::from_rows(k, items.iter().copied().zip(h), 1e-9)?;
    Ok((marginals, value.value()))
}

/// Fills each column up to one: first in proportion to `pihat` while every
/// ratio stays within `m`, then uniformly over the observed items.
fn complete_columns(
    h: &mut [Vec<f64>],
    items: &[ItemId],
    observed: &BTreeSet<ItemId>,
    pm: &MarginalMatrix,
    m: f64,
) -> Result<()> {
    let k = pm.list_length();
    let n = items.len();
    let mut slack: Vec<f64> = h.iter().map(|r| (1.0 - r.iter().sum::<f64>()).max(0.0)).collect();
    for col in 0..k {
        let deficit = 1.0 - h.iter().map(|r| r[col]).sum::<f64>();
        if deficit <= 0.0 {
            continue;
        }
        let mut add = vec![0.0; n];
        let weights: Vec<f64> = items.iter().map(|&a| pm.get(a, col + 1)).collect();
        let mut room: Vec<f64> = (0..n)
            .map(|i| (m * weights[i] - h[i][col]).max(0.0).min(slack[i]))
            .collect();
        let mut left = waterfill(deficit, &weights, &mut room, &mut add);
        for (s, a) in slack.iter_mut().zip(&add) {
            *s -= a;
        }
        for pass in [true, false] {
            if left <= 0.0 {
                break;
            }
            let weights: Vec<f64> = items
                .iter()
                .map(|a| if !pass || observed.contains(a) { 1.0 } else { 0.0 })
                .collect();
            let mut room = slack.clone();
            let mut more = vec![0.0; n];
            left = waterfill(left, &weights, &mut room, &mut more);
            for i in 0..n {
                slack[i] -= more[i];
                add[i] += more[i];
            }
        }
        if left > 1e-12 {
            return Err(Error::Domain(format!(
                "cannot fill position {} with the available items",
                col + 1
            )));
        }
        for i in 0..n {
            h[i][col] += add[i];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::estimate_ip;
    use crate::optimize::best_list_policy;
    use crate::types::{Catalog, ClickVector, Clip, RankedList, RewardWeights};

    #[test]
    fn lp_textbook_instance() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18.
        let sol = solve_lp(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
        )
        .unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn lp_degenerate_instance_terminates() {
        // Beale's cycling example (converted to max).
        let sol = solve_lp(
            &[0.75, -150.0, 0.02, -6.0],
            &[
                vec![0.25, -60.0, -0.04, 9.0],
                vec![0.5, -90.0, -0.02, 3.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            &[0.0, 0.0, 1.0],
        )
        .unwrap();
        assert!((sol.objective - 0.05).abs() < 1e-12);
    }

    fn l(items: &[u64]) -> RankedList {
        RankedList::new(items.to_vec())
    }

    fn rec(list: &[u64], clicks: &[u8]) -> LoggedRecord {
        LoggedRecord {
            query: 0,
            context: 0,
            day: 1,
            list: l(list),
            clicks: ClickVector::from_bits(clicks).unwrap(),
        }
    }

    #[test]
    fn two_item_example() {
        // Score 2 on (1, position 1) and zero elsewhere; pihat marginals 0.5.
        let c = Catalog::new(vec![1, 2], 2, vec![0]).unwrap();
        let s = LoggedDataset::new(
            c,
            vec![rec(&[1, 2], &[1, 0]), rec(&[1, 2], &[1, 0]), rec(&[2, 1], &[0, 0])],
        )
        .unwrap();
        let pihat = Policy::uniform(0, [l(&[1, 2]), l(&[2, 1])]).unwrap();
        let cfg = EstimatorConfig::ip(Clip::new(1.5).unwrap(), RewardWeights::ones(2).unwrap());
        let res = best_ip_marginals(&s, &pihat, &cfg).unwrap();
        let h = &res.policy[&0];
        assert!((h.get(1, 1) - 0.75).abs() < 1e-12);
        assert!((h.column_sum(1) - 1.0).abs() < 1e-12);
        assert!((h.column_sum(2) - 1.0).abs() < 1e-12);
        h.check(1e-12).unwrap();
        // Summed objective 2 * 1.5 = 3 over |S| = 3 records.
        assert!((res.objective - 1.0).abs() < 1e-12);
        let again = estimate_ip(&s, &res.policy, &pihat, &cfg).unwrap().value;
        assert!((again - res.objective).abs() < 1e-12);
    }

    #[test]
    fn single_position_matches_list_optimizer() {
        let c = Catalog::new(vec![1, 2, 3], 1, vec![0]).unwrap();
        let s = LoggedDataset::new(
            c,
            vec![rec(&[1], &[1]), rec(&[2], &[1]), rec(&[2], &[0]), rec(&[3], &[1])],
        )
        .unwrap();
        let pihat = Policy::from_weights([(0, l(&[1]), 0.2), (0, l(&[2]), 0.5), (0, l(&[3]), 0.3)]).unwrap();
        for m in [0.5, 1.0, 1.7, 3.0, 10.0] {
            let clip = Clip::new(m).unwrap();
            let theta = RewardWeights::ones(1).unwrap();
            let ip = best_ip_marginals(&s, &pihat, &EstimatorConfig::ip(clip, theta.clone())).unwrap();
            let list = best_list_policy(&s, &pihat, &EstimatorConfig::list(clip, theta)).unwrap();
            assert!((ip.objective - list.objective).abs() < 1e-12, "M = {m}");
        }
    }
}
