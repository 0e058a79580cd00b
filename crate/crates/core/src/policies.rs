//! Tabular stochastic ranking policies, their estimation from logs, and the
//! item-position marginals used in estimator denominators.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;
use crate::types::{ContextId, ItemId, LoggedDataset, LoggedRecord, RankedList};

/// Probability that each item is shown at each position, for one context.
///
/// Items missing from the matrix are never shown. Positions are 1-based in
/// [`MarginalMatrix::get`] and 0-based in the row slices.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalMatrix {
    list_length: usize,
    rows: BTreeMap<ItemId, Vec<f64>>,
}

impl MarginalMatrix {
    pub fn new(list_length: usize) -> Self {
        Self {
            list_length,
            rows: BTreeMap::new(),
        }
    }

    /// Builds a matrix from explicit rows and checks the column/row-sum
    /// invariants to within `tolerance`.
    pub fn from_rows(
        list_length: usize,
        rows: impl IntoIterator<Item = (ItemId, Vec<f64>)>,
        tolerance: f64,
    ) -> Result<Self> {
        let mut m = Self::new(list_length);
        for (item, row) in rows {
            if row.len() != list_length {
                return Err(Error::Dimension(format!(
                    "row of item {item} has {} entries, expected {list_length}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite() || *v < -tolerance) {
                return Err(Error::Domain(format!("row of item {item} has a negative entry")));
            }
            if m.rows.insert(item, row).is_some() {
                return Err(Error::Domain(format!("item {item} appears twice")));
            }
        }
        m.check(tolerance)?;
        Ok(m)
    }

    pub(crate) fn add(&mut self, item: ItemId, position0: usize, mass: f64) {
        let k = self.list_length;
        self.rows.entry(item).or_insert_with(|| vec![0.0; k])[position0] += mass;
    }

    pub fn list_length(&self) -> usize {
        self.list_length
    }

    /// Probability of `item` at 1-based `position`.
    pub fn get(&self, item: ItemId, position: usize) -> f64 {
        match (self.rows.get(&item), position.checked_sub(1)) {
            (Some(row), Some(k)) if k < self.list_length => row[k],
            _ => 0.0,
        }
    }

    pub fn row(&self, item: ItemId) -> Option<&[f64]> {
        self.rows.get(&item).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (ItemId, &[f64])> {
        self.rows.iter().map(|(a, r)| (*a, r.as_slice()))
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.rows.keys().copied()
    }

    pub fn num_items(&self) -> usize {
        self.rows.len()
    }

    /// Sum of column `position` (1-based).
    pub fn column_sum(&self, position: usize) -> f64 {
        self.rows.values().map(|r| r[position - 1]).sum()
    }

    pub fn row_sum(&self, item: ItemId) -> f64 {
        self.rows.get(&item).map_or(0.0, |r| r.iter().sum())
    }

    /// Columns sum to one and rows to at most one, within `tolerance`.
    pub fn check(&self, tolerance: f64) -> Result<()> {
        for k in 1..=self.list_length {
            let s = self.column_sum(k);
            if (s - 1.0).abs() > tolerance {
                return Err(Error::Domain(format!("column {k} sums to {s}, not 1")));
            }
        }
        for (&a, row) in &self.rows {
            let s: f64 = row.iter().sum();
            if s > 1.0 + tolerance {
                return Err(Error::Domain(format!("row of item {a} sums to {s} > 1")));
            }
        }
        Ok(())
    }

    /// `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &MarginalMatrix, alpha: f64) -> Result<MarginalMatrix> {
        if self.list_length != other.list_length {
            return Err(Error::Dimension("marginals of different list lengths".into()));
        }
        let mut out = MarginalMatrix::new(self.list_length);
        for (a, row) in self.rows() {
            for (k, v) in row.iter().enumerate() {
                out.add(a, k, alpha * v);
            }
        }
        for (a, row) in other.rows() {
            for (k, v) in row.iter().enumerate() {
                out.add(a, k, (1.0 - alpha) * v);
            }
        }
        Ok(out)
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &MarginalMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for a in self.items().chain(other.items()) {
            for k in 1..=self.list_length.max(other.list_length) {
                worst = worst.max((self.get(a, k) - other.get(a, k)).abs());
            }
        }
        worst
    }
}

/// `sum_k weights[k] * m(item, k)`; zero for an item the matrix never shows.
pub fn examination_inner_product(marginals: &MarginalMatrix, item: ItemId, weights: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), marginals.list_length());
    marginals
        .row(item)
        .map_or(0.0, |row| row.iter().zip(weights).map(|(m, w)| m * w).sum())
}

/// A distribution over ranked lists for a single context.
#[derive(Debug, Clone, PartialEq)]
pub struct ListDistribution {
    entries: Vec<(RankedList, f64)>,
    index: HashMap<RankedList, usize>,
    marginals: MarginalMatrix,
}

impl ListDistribution {
    /// Normalizes non-negative weights into probabilities. Duplicate lists are
    /// merged and zero-weight lists dropped from the support.
    pub fn from_weights(weights: impl IntoIterator<Item = (RankedList, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<RankedList, f64> = BTreeMap::new();
        let mut list_length = None;
        for (list, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Domain(format!("list {list} has weight {w}")));
            }
            if !list.is_permutation() || list.is_empty() {
                return Err(Error::Domain(format!("list {list} is not a K-permutation")));
            }
            match list_length {
                None => list_length = Some(list.len()),
                Some(k) if k != list.len() => {
                    return Err(Error::Dimension(format!(
                        "list {list} has {} positions, expected {k}",
                        list.len()
                    )))
                }
                _ => {}
            }
            *merged.entry(list).or_insert(0.0) += w;
        }
        let total = merged.values().copied().collect::<CompensatedSum>().value();
        if !(total > 0.0) {
            return Err(Error::Domain("distribution has no positive mass".into()));
        }
        let entries: Vec<(RankedList, f64)> = merged
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(l, w)| (l, w / total))
            .collect();
        Ok(Self::from_normalized(entries))
    }

    /// Single list with probability one.
    pub fn point_mass(list: RankedList) -> Result<Self> {
        Self::from_weights([(list, 1.0)])
    }

    fn from_normalized(entries: Vec<(RankedList, f64)>) -> Self {
        let k = entries[0].0.len();
        let mut marginals = MarginalMatrix::new(k);
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (list, p)) in entries.iter().enumerate() {
            index.insert(list.clone(), i);
            for (pos, &a) in list.items().iter().enumerate() {
                marginals.add(a, pos, *p);
            }
        }
        Self {
            entries,
            index,
            marginals,
        }
    }

    pub fn prob(&self, list: &RankedList) -> f64 {
        self.index.get(list).map_or(0.0, |&i| self.entries[i].1)
    }

    /// Support in lexicographic list order.
    pub fn entries(&self) -> &[(RankedList, f64)] {
        &self.entries
    }

    pub fn marginals(&self) -> &MarginalMatrix {
        &self.marginals
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn list_length(&self) -> usize {
        self.marginals.list_length()
    }

    /// `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &ListDistribution, alpha: f64) -> Result<ListDistribution> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("mixing weight {alpha} outside [0, 1]")));
        }
        Self::from_weights(
            self.entries
                .iter()
                .map(|(l, p)| (l.clone(), alpha * p))
                .chain(other.entries.iter().map(|(l, p)| (l.clone(), (1.0 - alpha) * p))),
        )
    }

    /// Total variation distance.
    pub fn total_variation(&self, other: &ListDistribution) -> f64 {
        let mut s = CompensatedSum::new();
        for (l, p) in &self.entries {
            s.add((p - other.prob(l)).abs());
        }
        for (l, q) in &other.entries {
            if !self.index.contains_key(l) {
                s.add(*q);
            }
        }
        0.5 * s.value()
    }
}

/// A conditional distribution over ranked lists given the context.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    contexts: BTreeMap<ContextId, ListDistribution>,
}

impl Policy {
    pub fn new(contexts: BTreeMap<ContextId, ListDistribution>) -> Result<Self> {
        let mut lengths = contexts.values().map(ListDistribution::list_length);
        if let Some(k) = lengths.next() {
            if lengths.any(|l| l != k) {
                return Err(Error::Dimension("contexts use different list lengths".into()));
            }
        }
        Ok(Self { contexts })
    }

    /// Groups `(context, list, weight)` triples and normalizes per context.
    pub fn from_weights(
        entries: impl IntoIterator<Item = (ContextId, RankedList, f64)>,
    ) -> Result<Self> {
        let mut grouped: BTreeMap<ContextId, Vec<(RankedList, f64)>> = BTreeMap::new();
        for (x, l, w) in entries {
            grouped.entry(x).or_default().push((l, w));
        }
        let contexts = grouped
            .into_iter()
            .map(|(x, ws)| Ok((x, ListDistribution::from_weights(ws)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::new(contexts)
    }

    /// The same distribution in every listed context.
    pub fn shared(contexts: &[ContextId], dist: &ListDistribution) -> Self {
        Self {
            contexts: contexts.iter().map(|&x| (x, dist.clone())).collect(),
        }
    }

    pub fn deterministic(context: ContextId, list: RankedList) -> Result<Self> {
        Self::new(BTreeMap::from([(context, ListDistribution::point_mass(list)?)]))
    }

    pub fn uniform(context: ContextId, lists: impl IntoIterator<Item = RankedList>) -> Result<Self> {
        Self::from_weights(lists.into_iter().map(|l| (context, l, 1.0)))
    }

    pub fn distribution(&self, context: ContextId) -> Result<&ListDistribution> {
        self.contexts.get(&context).ok_or(Error::UnseenContext(context))
    }

    pub fn list_prob(&self, list: &RankedList, context: ContextId) -> Result<f64> {
        Ok(self.distribution(context)?.prob(list))
    }

    pub fn marginals(&self, context: ContextId) -> Result<&MarginalMatrix> {
        Ok(self.distribution(context)?.marginals())
    }

    pub fn contexts(&self) -> impl Iterator<Item = ContextId> + '_ {
        self.contexts.keys().copied()
    }

    pub fn distributions(&self) -> impl Iterator<Item = (ContextId, &ListDistribution)> {
        self.contexts.iter().map(|(x, d)| (*x, d))
    }

    pub fn has_context(&self, context: ContextId) -> bool {
        self.contexts.contains_key(&context)
    }

    pub fn list_length(&self) -> Option<usize> {
        self.contexts.values().next().map(ListDistribution::list_length)
    }

    /// Total number of (context, list) pairs with positive probability.
    pub fn support_size(&self) -> usize {
        self.contexts.values().map(ListDistribution::support_size).sum()
    }

    /// Context-wise `alpha * self + (1 - alpha) * other`; both policies must
    /// cover the same contexts.
    pub fn mix(&self, other: &Policy, alpha: f64) -> Result<Policy> {
        let mut contexts = BTreeMap::new();
        for (x, d) in &self.contexts {
            let o = other.distribution(*x)?;
            contexts.insert(*x, d.mix(o, alpha)?);
        }
        if let Some(x) = other.contexts().find(|x| !self.has_context(*x)) {
            return Err(Error::UnseenContext(x));
        }
        Policy::new(contexts)
    }

    /// Serializes to `context<TAB>item_1,...,item_K<TAB>probability` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (x, d) in &self.contexts {
            for (l, p) in d.entries() {
                let _ = writeln!(out, "{x}\t{l}\t{p}");
            }
        }
        out
    }

    /// Parses the text format; probabilities are renormalized per context.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let x: ContextId = fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, line_no, format!("bad context `{}`", fields[0])))?;
            let list = parse_list(fields[1])
                .map_err(|m| Error::parse(origin, line_no, m))?;
            let p: f64 = fields[2].trim().parse().map_err(|_| {
                Error::parse(origin, line_no, format!("bad probability `{}`", fields[2]))
            })?;
            entries.push((x, list, p));
        }
        if entries.is_empty() {
            return Err(Error::Format(format!("{} contains no policy entries", origin.display())));
        }
        Self::from_weights(entries)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn parse_list(field: &str) -> std::result::Result<RankedList, String> {
    field
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<ItemId>()
                .map_err(|_| format!("bad item id `{s}`"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(RankedList::new)
}

/// Empirical list frequencies per context with optional additive smoothing
/// over the lists observed in that context.
pub fn estimate_policy(dataset: &LoggedDataset, smoothing: f64) -> Result<Policy> {
    estimate_policy_from_records(dataset.records(), smoothing)
}

/// [`estimate_policy`] over any collection of records.
pub fn estimate_policy_from_records<'a>(
    records: impl IntoIterator<Item = &'a LoggedRecord>,
    smoothing: f64,
) -> Result<Policy> {
    if !(smoothing >= 0.0) || !smoothing.is_finite() {
        return Err(Error::Domain(format!("smoothing must be finite and >= 0, got {smoothing}")));
    }
    let mut counts: BTreeMap<ContextId, HashMap<&RankedList, u64>> = BTreeMap::new();
    for r in records {
        *counts.entry(r.context).or_default().entry(&r.list).or_insert(0) += 1;
    }
    if counts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Policy::from_weights(counts.into_iter().flat_map(|(x, lists)| {
        lists
            .into_iter()
            .map(move |(l, c)| (x, l.clone(), c as f64 + smoothing))
    }))
}

/// `policy(list | context)`; zero outside the support.
pub fn list_prob(policy: &Policy, list: &RankedList, context: ContextId) -> Result<f64> {
    policy.list_prob(list, context)
}

/// Item-position marginals of `policy` in `context`.
pub fn item_position_marginal(policy: &Policy, context: ContextId) -> Result<&MarginalMatrix> {
    policy.marginals(context)
}
