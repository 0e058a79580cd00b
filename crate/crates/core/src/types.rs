//! Domain types shared by every module, the list reward, and record validation.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ItemId = u64;
pub type ContextId = u64;
pub type QueryId = u64;

/// The items, list length, and contexts a dataset or world is defined over.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    items: Vec<ItemId>,
    list_length: usize,
    contexts: Vec<ContextId>,
    item_index: HashMap<ItemId, usize>,
    context_index: HashMap<ContextId, usize>,
}

impl Catalog {
    pub fn new(items: Vec<ItemId>, list_length: usize, contexts: Vec<ContextId>) -> Result<Self> {
        if list_length == 0 {
            return Err(Error::Domain("list length K must be at least 1".into()));
        }
        if items.len() < list_length {
            return Err(Error::Domain(format!(
                "catalog has {} items but lists have {} positions",
                items.len(),
                list_length
            )));
        }
        let item_index = index_of(&items, "item")?;
        let context_index = index_of(&contexts, "context")?;
        Ok(Self {
            items,
            list_length,
            contexts,
            item_index,
            context_index,
        })
    }

    /// Items `0..num_items` and contexts `0..num_contexts`.
    pub fn dense(num_items: usize, list_length: usize, num_contexts: usize) -> Result<Self> {
        Self::new(
            (0..num_items as ItemId).collect(),
            list_length,
            (0..num_contexts as ContextId).collect(),
        )
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn contexts(&self) -> &[ContextId] {
        &self.contexts
    }

    pub fn list_length(&self) -> usize {
        self.list_length
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn item_index(&self, item: ItemId) -> Option<usize> {
        self.item_index.get(&item).copied()
    }

    pub fn context_index(&self, context: ContextId) -> Option<usize> {
        self.context_index.get(&context).copied()
    }

    /// Same items and contexts with a shorter list length.
    pub fn with_list_length(&self, list_length: usize) -> Result<Self> {
        Self::new(self.items.clone(), list_length, self.contexts.clone())
    }

    /// Every K-permutation of the catalog items, in lexicographic order of
    /// item indices. Fails when there are more than `cap` of them.
    pub fn all_lists(&self, cap: usize) -> Result<Vec<RankedList>> {
        let n = self.items.len();
        let k = self.list_length;
        let count = (0..k).try_fold(1usize, |acc, i| acc.checked_mul(n - i));
        match count {
            Some(c) if c <= cap => {}
            _ => {
                return Err(Error::Capacity(format!(
                    "{n} items admit more than {cap} lists of length {k}"
                )))
            }
        }
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(k);
        let mut used = vec![false; n];
        permutations(&self.items, k, &mut used, &mut current, &mut out);
        Ok(out)
    }
}

fn permutations(
    items: &[ItemId],
    k: usize,
    used: &mut [bool],
    current: &mut Vec<ItemId>,
    out: &mut Vec<RankedList>,
) {
    if current.len() == k {
        out.push(RankedList::new(current.clone()));
        return;
    }
    for i in 0..items.len() {
        if !used[i] {
            used[i] = true;
            current.push(items[i]);
            permutations(items, k, used, current, out);
            current.pop();
            used[i] = false;
        }
    }
}

fn index_of(ids: &[u64], what: &str) -> Result<HashMap<u64, usize>> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, &id) in ids.iter().enumerate() {
        if index.insert(id, i).is_some() {
            return Err(Error::Domain(format!("duplicate {what} identifier {id}")));
        }
    }
    Ok(index)
}

/// An ordered list of items; position `k` (1-based) holds `items()[k - 1]`.
///
/// Construction does not validate; use [`validate_record`] or
/// [`RankedList::is_permutation`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RankedList(Vec<ItemId>);

impl RankedList {
    pub fn new(items: Vec<ItemId>) -> Self {
        Self(items)
    }

    pub fn items(&self) -> &[ItemId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Item at 1-based `position`.
    pub fn at(&self, position: usize) -> Option<ItemId> {
        position.checked_sub(1).and_then(|i| self.0.get(i).copied())
    }

    /// True when no item repeats.
    pub fn is_permutation(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.0.len());
        self.0.iter().all(|a| seen.insert(*a))
    }

    /// First `k` positions.
    pub fn truncated(&self, k: usize) -> Self {
        Self(self.0[..k.min(self.0.len())].to_vec())
    }
}

impl From<Vec<ItemId>> for RankedList {
    fn from(items: Vec<ItemId>) -> Self {
        Self(items)
    }
}

impl fmt::Display for RankedList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Per-position click indicators of one impression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClickVector(Vec<bool>);

impl ClickVector {
    pub fn new(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    /// Builds from 0/1 integers.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Domain(format!("click flag must be 0 or 1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![false; k])
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&c| c).count()
    }

    pub fn truncated(&self, k: usize) -> Self {
        Self(self.0[..k.min(self.0.len())].to_vec())
    }
}

impl fmt::Display for ClickVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(if *c { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// One logged impression: the context, the list shown and its clicks.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedRecord {
    /// Evaluation unit (a search query); 0 when the log has a single unit.
    pub query: QueryId,
    pub context: ContextId,
    pub day: u32,
    pub list: RankedList,
    pub clicks: ClickVector,
}

/// A validated collection of records over a shared catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedDataset {
    catalog: Arc<Catalog>,
    records: Vec<LoggedRecord>,
}

impl LoggedDataset {
    /// Validates every record against the catalog.
    pub fn new(catalog: impl Into<Arc<Catalog>>, records: Vec<LoggedRecord>) -> Result<Self> {
        let catalog = catalog.into();
        for (i, r) in records.iter().enumerate() {
            if let Validity::Invalid(v) = validate_record(r, &catalog) {
                return Err(Error::Format(format!("record {i}: {v}")));
            }
        }
        Ok(Self { catalog, records })
    }

    pub(crate) fn new_unchecked(catalog: Arc<Catalog>, records: Vec<LoggedRecord>) -> Self {
        Self { catalog, records }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn shared_catalog(&self) -> Arc<Catalog> {
        Arc::clone(&self.catalog)
    }

    pub fn records(&self) -> &[LoggedRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LoggedRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn list_length(&self) -> usize {
        self.catalog.list_length()
    }

    /// Records for which `keep` holds, over the same catalog.
    pub fn filter<F: FnMut(&LoggedRecord) -> bool>(&self, mut keep: F) -> Self {
        Self {
            catalog: Arc::clone(&self.catalog),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Restricts every record to its first `k` positions.
    pub fn truncate_positions(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.list_length() {
            return Err(Error::Domain(format!(
                "cannot keep {k} positions of lists with {} positions",
                self.list_length()
            )));
        }
        if k == self.list_length() {
            return Ok(self.clone());
        }
        let catalog = Arc::new(self.catalog.with_list_length(k)?);
        let records = self
            .records
            .iter()
            .map(|r| LoggedRecord {
                query: r.query,
                context: r.context,
                day: r.day,
                list: r.list.truncated(k),
                clicks: r.clicks.truncated(k),
            })
            .collect();
        Ok(Self { catalog, records })
    }
}

/// Non-negative position weights of the list reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardWeights(Vec<f64>);

impl RewardWeights {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Domain("reward weights must have at least one entry".into()));
        }
        if theta.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Domain("reward weights must be finite and non-negative".into()));
        }
        if theta.iter().all(|t| *t == 0.0) {
            return Err(Error::Domain("at least one reward weight must be positive".into()));
        }
        Ok(Self(theta))
    }

    /// Unit weights: the reward counts clicks.
    pub fn ones(k: usize) -> Result<Self> {
        Self::new(vec![1.0; k])
    }

    /// Discounted cumulative gain weights.
    pub fn dcg(k: usize) -> Result<Self> {
        dcg_weights(k)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Upper bound of the reward of any list.
    pub fn total(&self) -> f64 {
        crate::sum::sum(&self.0)
    }
}

/// `theta_k = 1 / log2(1 + k)` for positions `k = 1..=K`.
pub fn dcg_weights(k: usize) -> Result<RewardWeights> {
    if k == 0 {
        return Err(Error::Domain("DCG weights need K >= 1".into()));
    }
    RewardWeights::new((1..=k).map(|k| 1.0 / ((1 + k) as f64).log2()).collect())
}

/// Weighted click reward of one impression.
pub fn reward(list: &RankedList, clicks: &ClickVector, theta: &RewardWeights) -> Result<f64> {
    if list.len() != clicks.len() || clicks.len() != theta.len() {
        return Err(Error::Dimension(format!(
            "list has {} positions, clicks {}, weights {}",
            list.len(),
            clicks.len(),
            theta.len()
        )));
    }
    Ok(weighted_clicks(clicks, theta.as_slice()))
}

#[inline]
pub(crate) fn weighted_clicks(clicks: &ClickVector, theta: &[f64]) -> f64 {
    clicks
        .flags()
        .iter()
        .zip(theta)
        .filter(|(c, _)| **c)
        .map(|(_, t)| *t)
        .sum()
}

/// Importance-weight cap. Infinity disables clipping; zero is accepted as the
/// degenerate end of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Clip(f64);

impl Clip {
    pub const INFINITE: Clip = Clip(f64::INFINITY);

    pub fn new(m: f64) -> Result<Self> {
        if m.is_nan() || m < 0.0 {
            return Err(Error::Domain(format!("clipping constant must be >= 0, got {m}")));
        }
        Ok(Self(m))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    #[inline]
    pub fn apply(self, ratio: f64) -> f64 {
        ratio.min(self.0)
    }
}

impl fmt::Display for Clip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Clip {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Clip::INFINITE);
        }
        let m: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("invalid clipping constant `{s}`")))?;
        Clip::new(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorFamily {
    List,
    Item,
    Ip,
    Pbm,
    Rctr,
}

impl EstimatorFamily {
    pub const ALL: [EstimatorFamily; 5] = [
        EstimatorFamily::List,
        EstimatorFamily::Item,
        EstimatorFamily::Ip,
        EstimatorFamily::Pbm,
        EstimatorFamily::Rctr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorFamily::List => "list",
            EstimatorFamily::Item => "item",
            EstimatorFamily::Ip => "ip",
            EstimatorFamily::Pbm => "pbm",
            EstimatorFamily::Rctr => "rctr",
        }
    }
}

impl fmt::Display for EstimatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

/// Which estimator to run and with which parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    family: EstimatorFamily,
    clip: Clip,
    theta: RewardWeights,
    examination: Option<Vec<f64>>,
}

impl EstimatorConfig {
    /// `examination` must be given exactly when `family` is PBM, with one
    /// probability in (0, 1] per position.
    pub fn new(
        family: EstimatorFamily,
        clip: Clip,
        theta: RewardWeights,
        examination: Option<Vec<f64>>,
    ) -> Result<Self> {
        match (family, &examination) {
            (EstimatorFamily::Pbm, None) => {
                return Err(Error::Config("the PBM estimator needs an examination vector".into()))
            }
            (EstimatorFamily::Pbm, Some(p)) => {
                if p.len() != theta.len() {
                    return Err(Error::Dimension(format!(
                        "examination vector has {} entries, reward weights {}",
                        p.len(),
                        theta.len()
                    )));
                }
                if p.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                    return Err(Error::Domain(
                        "examination probabilities must lie in (0, 1]".into(),
                    ));
                }
            }
            (_, Some(_)) => {
                return Err(Error::Config(format!(
                    "an examination vector only applies to the PBM estimator, not {family}"
                )))
            }
            (_, None) => {}
        }
        Ok(Self {
            family,
            clip,
            theta,
            examination,
        })
    }

    pub fn list(clip: Clip, theta: RewardWeights) -> Self {
        Self::new(EstimatorFamily::List, clip, theta, None).expect("valid list config")
    }

    pub fn ip(clip: Clip, theta: RewardWeights) -> Self {
        Self::new(EstimatorFamily::Ip, clip, theta, None).expect("valid IP config")
    }

    pub fn item(clip: Clip, theta: RewardWeights) -> Self {
        Self::new(EstimatorFamily::Item, clip, theta, None).expect("valid item config")
    }

    pub fn rctr(theta: RewardWeights) -> Self {
        Self::new(EstimatorFamily::Rctr, Clip::INFINITE, theta, None).expect("valid RCTR config")
    }

    pub fn pbm(clip: Clip, theta: RewardWeights, examination: Vec<f64>) -> Result<Self> {
        Self::new(EstimatorFamily::Pbm, clip, theta, Some(examination))
    }

    /// Config of another family sharing clip and weights; PBM uses `examination`.
    pub fn for_family(
        family: EstimatorFamily,
        clip: Clip,
        theta: RewardWeights,
        examination: &[f64],
    ) -> Result<Self> {
        let p = (family == EstimatorFamily::Pbm).then(|| examination.to_vec());
        Self::new(family, clip, theta, p)
    }

    pub fn with_clip(&self, clip: Clip) -> Self {
        Self {
            clip,
            ..self.clone()
        }
    }

    pub fn family(&self) -> EstimatorFamily {
        self.family
    }

    pub fn clip(&self) -> Clip {
        self.clip
    }

    pub fn theta(&self) -> &RewardWeights {
        &self.theta
    }

    pub fn examination(&self) -> Option<&[f64]> {
        self.examination.as_deref()
    }

    pub fn list_length(&self) -> usize {
        self.theta.len()
    }
}

/// Outcome of [`validate_record`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid(Violation),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

/// The first constraint a record breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    WrongLength { expected: usize, found: usize },
    ClickLength { expected: usize, found: usize },
    DuplicateItem(ItemId),
    UnknownItem(ItemId),
    UnknownContext(ContextId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongLength { expected, found } => {
                write!(f, "wrong length: list has {found} items, expected {expected}")
            }
            Violation::ClickLength { expected, found } => {
                write!(f, "wrong length: {found} click flags, expected {expected}")
            }
            Violation::DuplicateItem(a) => write!(f, "duplicate item {a}"),
            Violation::UnknownItem(a) => write!(f, "unknown item {a}"),
            Violation::UnknownContext(x) => write!(f, "unknown context {x}"),
        }
    }
}

/// Accepts a record iff its list is a K-permutation of catalog items, its
/// click vector has K flags, and its context belongs to the catalog.
pub fn validate_record(record: &LoggedRecord, catalog: &Catalog) -> Validity {
    let k = catalog.list_length();
    if record.list.len() != k {
        return Validity::Invalid(Violation::WrongLength {
            expected: k,
            found: record.list.len(),
        });
    }
    if record.clicks.len() != k {
        return Validity::Invalid(Violation::ClickLength {
            expected: k,
            found: record.clicks.len(),
        });
    }
    let mut seen = HashSet::with_capacity(k);
    for &a in record.list.items() {
        if !seen.insert(a) {
            return Validity::Invalid(Violation::DuplicateItem(a));
        }
        if catalog.item_index(a).is_none() {
            return Validity::Invalid(Violation::UnknownItem(a));
        }
    }
    if catalog.context_index(record.context).is_none() {
        return Validity::Invalid(Violation::UnknownContext(record.context));
    }
    Validity::Valid
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(list: Vec<ItemId>, clicks: &[u8]) -> LoggedRecord {
        LoggedRecord {
            query: 0,
            context: 0,
            day: 1,
            list: RankedList::new(list),
            clicks: ClickVector::from_bits(clicks).unwrap(),
        }
    }

    #[test]
    fn reward_examples() {
        let l2 = RankedList::new(vec![1, 2]);
        let ones = RewardWeights::ones(2).unwrap();
        let c = ClickVector::from_bits(&[1, 0]).unwrap();
        assert_eq!(reward(&l2, &c, &ones).unwrap(), 1.0);

        let dcg = RewardWeights::new(vec![1.0, 1.0 / 3f64.log2()]).unwrap();
        let both = ClickVector::from_bits(&[1, 1]).unwrap();
        approx::assert_abs_diff_eq!(reward(&l2, &both, &dcg).unwrap(), 1.6309297535714575, epsilon = 1e-12);

        let l3 = RankedList::new(vec![1, 2, 3]);
        let none = ClickVector::zeros(3);
        assert_eq!(reward(&l3, &none, &dcg_weights(3).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn reward_rejects_length_mismatch() {
        let l = RankedList::new(vec![1, 2, 3]);
        let c = ClickVector::zeros(2);
        assert!(matches!(
            reward(&l, &c, &RewardWeights::ones(3).unwrap()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn dcg_examples() {
        assert_eq!(dcg_weights(1).unwrap().as_slice(), &[1.0]);
        let w3 = dcg_weights(3).unwrap();
        assert_eq!(w3.as_slice()[0], 1.0);
        approx::assert_abs_diff_eq!(w3.as_slice()[1], 0.6309297535714575, epsilon = 1e-15);
        assert_eq!(w3.as_slice()[2], 0.5);
        let w2 = dcg_weights(2).unwrap();
        approx::assert_abs_diff_eq!(w2.as_slice()[1], 1.0 / 3f64.ln() * 2f64.ln(), epsilon = 1e-15);
        assert!(matches!(dcg_weights(0), Err(Error::Domain(_))));
    }

    #[test]
    fn validate_record_examples() {
        let catalog = Catalog::new(vec![1, 2, 3], 2, vec![0]).unwrap();
        assert_eq!(validate_record(&record(vec![1, 2], &[0, 1]), &catalog), Validity::Valid);
        assert_eq!(
            validate_record(&record(vec![1, 1], &[0, 0]), &catalog),
            Validity::Invalid(Violation::DuplicateItem(1))
        );
        assert_eq!(
            validate_record(&record(vec![1, 2, 3], &[0, 0, 0]), &catalog),
            Validity::Invalid(Violation::WrongLength { expected: 2, found: 3 })
        );
        assert_eq!(
            validate_record(&record(vec![1, 9], &[0, 0]), &catalog),
            Validity::Invalid(Violation::UnknownItem(9))
        );
        let mut r = record(vec![1, 2], &[0, 0]);
        r.context = 4;
        assert_eq!(
            validate_record(&r, &catalog),
            Validity::Invalid(Violation::UnknownContext(4))
        );
    }

    #[test]
    fn catalog_invariants() {
        assert!(Catalog::new(vec![1, 2], 0, vec![0]).is_err());
        assert!(Catalog::new(vec![1], 2, vec![0]).is_err());
        assert!(Catalog::new(vec![1, 1, 2], 2, vec![0]).is_err());
        assert!(Catalog::new(vec![1, 2], 2, vec![0, 0]).is_err());
    }

    #[test]
    fn all_lists_counts_k_permutations() {
        let c = Catalog::dense(4, 2, 1).unwrap();
        let lists = c.all_lists(100).unwrap();
        assert_eq!(lists.len(), 12);
        assert!(lists.iter().all(RankedList::is_permutation));
        assert!(matches!(c.all_lists(11), Err(Error::Capacity(_))));
    }

    #[test]
    fn estimator_config_requires_examination_exactly_for_pbm() {
        let theta = RewardWeights::ones(2).unwrap();
        assert!(EstimatorConfig::new(EstimatorFamily::Pbm, Clip::INFINITE, theta.clone(), None).is_err());
        assert!(EstimatorConfig::new(
            EstimatorFamily::Ip,
            Clip::INFINITE,
            theta.clone(),
            Some(vec![1.0, 0.5])
        )
        .is_err());
        assert!(EstimatorConfig::pbm(Clip::INFINITE, theta.clone(), vec![1.0]).is_err());
        assert!(EstimatorConfig::pbm(Clip::INFINITE, theta.clone(), vec![1.0, 0.0]).is_err());
        assert!(EstimatorConfig::pbm(Clip::INFINITE, theta, vec![1.0, 0.5]).is_ok());
    }

    #[test]
    fn clip_parsing() {
        assert!("inf".parse::<Clip>().unwrap().is_infinite());
        assert_eq!("2.5".parse::<Clip>().unwrap().value(), 2.5);
        assert!("-1".parse::<Clip>().is_err());
        assert!("abc".parse::<Clip>().is_err());
    }

    proptest! {
        #[test]
        fn reward_is_linear_and_bounded(
            bits in proptest::collection::vec(0u8..2, 4),
            t1 in proptest::collection::vec(0.0f64..3.0, 4),
            t2 in proptest::collection::vec(0.0f64..3.0, 4),
            alpha in 0.0f64..2.0,
            beta in 0.0f64..2.0,
        ) {
            let list = RankedList::new(vec![1, 2, 3, 4]);
            let clicks = ClickVector::from_bits(&bits).unwrap();
            let mut t1 = t1; t1[0] += 0.1;
            let mut t2 = t2; t2[0] += 0.1;
            let w1 = RewardWeights::new(t1.clone()).unwrap();
            let w2 = RewardWeights::new(t2.clone()).unwrap();
            let mixed: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| alpha * a + beta * b).collect();
            let r1 = reward(&list, &clicks, &w1).unwrap();
            let r2 = reward(&list, &clicks, &w2).unwrap();
            let total = mixed.iter().map(|v| v * 1.0).sum::<f64>();
            if mixed.iter().any(|v| *v > 0.0) {
                let rm = reward(&list, &clicks, &RewardWeights::new(mixed).unwrap()).unwrap();
                prop_assert!((rm - (alpha * r1 + beta * r2)).abs() < 1e-9);
                prop_assert!(rm >= 0.0 && rm <= total + 1e-12);
            }
            prop_assert!(r1 >= 0.0 && r1 <= w1.total() + 1e-12);
            let ones = RewardWeights::ones(4).unwrap();
            prop_assert_eq!(reward(&list, &clicks, &ones).unwrap(), clicks.count() as f64);
        }
    }
}
