//! Decomposition of item-position marginals into a mixture of ranked lists.
//!
//! The `n x K` marginal matrix is padded to a doubly stochastic `n x n`
//! matrix by `n - K` sink columns holding each row's deficit (filled in
//! northwest-corner order, which keeps the padding sparse). Permutations are
//! then peeled off one at a time: a maximum-weight perfect matching on the
//! positive entries, scaled by its smallest matched entry.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::policies::{ListDistribution, MarginalMatrix, Policy};
use crate::types::{ContextId, ItemId, RankedList};

/// Mixture of lists whose marginals reproduce `m` within `tolerance`.
pub fn birkhoff_decompose(m: &MarginalMatrix, tolerance: f64) -> Result<ListDistribution> {
    if !(tolerance > 0.0) {
        return Err(Error::Domain(format!("tolerance {tolerance} must be positive")));
    }
    m.check(tolerance)?;
    let k = m.list_length();
    let items: Vec<ItemId> = m.items().collect();
    let n = items.len();
    if n < k {
        return Err(Error::Domain(format!("{n} items cannot fill {k} positions")));
    }
    let zero = tolerance * 1e-3;

    let mut w = vec![vec![0.0; n]; n];
    for (i, (_, row)) in m.rows().enumerate() {
        for (j, v) in row.iter().enumerate() {
            w[i][j] = if *v > zero { *v } else { 0.0 };
        }
    }
    // Northwest-corner fill of the row deficits into unit sink columns.
    let mut col = k;
    let mut col_room = 1.0;
    for i in 0..n {
        let mut deficit = (1.0 - w[i][..k].iter().sum::<f64>()).max(0.0);
        while deficit > zero && col < n {
            let put = deficit.min(col_room);
            w[i][col] += put;
            deficit -= put;
            col_room -= put;
            if col_room <= zero {
                col += 1;
                col_room = 1.0;
            }
        }
    }

    let mut lists = Vec::new();
    let mut remaining = 1.0;
    let mut iterations = 0;
    while remaining > zero && iterations <= n * n {
        iterations += 1;
        let assignment = max_weight_matching(&w, zero);
        let lambda = assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| w[i][j])
            .fold(f64::INFINITY, f64::min);
        if !(lambda > zero) {
            break;
        }
        let mut list = vec![0; k];
        for (i, &j) in assignment.iter().enumerate() {
            if j < k {
                list[j] = items[i];
            }
            w[i][j] -= lambda;
            if w[i][j] <= zero {
                w[i][j] = 0.0;
            }
        }
        lists.push((RankedList::new(list), lambda));
        remaining -= lambda;
    }
    if lists.is_empty() {
        return Err(Error::Decomposition {
            residual: 1.0,
            iterations,
        });
    }
    let dist = ListDistribution::from_weights(lists)?;
    let residual = dist.marginals().max_abs_diff(m);
    if residual > tolerance {
        return Err(Error::Decomposition { residual, iterations });
    }
    Ok(dist)
}

/// Decomposes every context's marginals into an executable policy.
pub fn decode_marginals(marginals: &BTreeMap<ContextId, MarginalMatrix>, tolerance: f64) -> Result<Policy> {
    let contexts = marginals
        .iter()
        .map(|(x, m)| Ok((*x, birkhoff_decompose(m, tolerance)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Policy::new(contexts)
}

/// Perfect matching (row -> column) maximizing the total weight, avoiding
/// entries at or below `zero` whenever possible.
fn max_weight_matching(w: &[Vec<f64>], zero: f64) -> Vec<usize> {
    // Hungarian algorithm with potentials on the cost -w; forbidden cells
    // cost more than any full matching of allowed cells.
    let n = w.len();
    let forbidden = 2.0 * n as f64 + 1.0;
    let cost = |i: usize, j: usize| if w[i][j] > zero { -w[i][j] } else { forbidden };
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}
