//! The five clipped importance-sampling estimators of a policy's value.
//!
//! Every estimator is one pass over the logged records. Records are processed
//! in fixed-size chunks (in parallel with the `parallel` feature) and chunk
//! partial sums are combined in chunk order with compensated summation, so
//! the result does not depend on the number of worker threads.
//!
//! Ratio conventions, applied to every importance weight `num / den`:
//! a zero denominator with a positive numerator counts as an infinite ratio
//! and is clipped to `M` (and reported in
//! [`EstimateResult::zero_denominator_count`]); `0 / 0` is a zero weight.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::parallel::{self, RECORD_CHUNK};
use crate::policies::{examination_inner_product, MarginalMatrix, Policy};
use crate::sum::CompensatedSum;
use crate::types::{
    weighted_clicks, Clip, ContextId, EstimatorConfig, EstimatorFamily, LoggedDataset,
    LoggedRecord,
};

/// Estimated value plus diagnostics about the importance weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateResult {
    pub value: f64,
    pub records_used: usize,
    /// Number of importance weights computed (one per record for the list
    /// estimator, one per record and position for the structured ones).
    pub weights_computed: usize,
    /// Fraction of weights whose ratio exceeded `M`.
    pub clipped_fraction: f64,
    /// Fraction of weights equal to zero.
    pub zero_weight_fraction: f64,
    /// Weights with a zero denominator and a positive numerator.
    pub zero_denominator_count: usize,
}

/// Anything that yields item-position marginals per context.
pub trait MarginalSource: Sync {
    fn marginals_for(&self, context: ContextId) -> Result<&MarginalMatrix>;
}

impl MarginalSource for Policy {
    fn marginals_for(&self, context: ContextId) -> Result<&MarginalMatrix> {
        self.marginals(context)
    }
}

impl MarginalSource for BTreeMap<ContextId, MarginalMatrix> {
    fn marginals_for(&self, context: ContextId) -> Result<&MarginalMatrix> {
        self.get(&context).ok_or(Error::UnseenContext(context))
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Partial {
    sum: CompensatedSum,
    weights: usize,
    clipped: usize,
    zero: usize,
    zero_den: usize,
}

impl Partial {
    #[inline]
    fn weight(&mut self, num: f64, den: f64, clip: Clip) -> f64 {
        self.weights += 1;
        let w = if den > 0.0 {
            let ratio = num / den;
            if ratio > clip.value() {
                self.clipped += 1;
            }
            clip.apply(ratio)
        } else if num > 0.0 {
            self.zero_den += 1;
            self.clipped += 1;
            clip.value()
        } else {
            0.0
        };
        if w == 0.0 {
            self.zero += 1;
        }
        w
    }

    #[inline]
    fn add(&mut self, reward: f64, weight: f64) {
        // Skipping zero rewards keeps 0 * inf out of the sum.
        if reward != 0.0 {
            self.sum.add(reward * weight);
        }
    }

    fn merge(&mut self, other: &Partial) {
        self.sum.merge(&other.sum);
        self.weights += other.weights;
        self.clipped += other.clipped;
        self.zero += other.zero;
        self.zero_den += other.zero_den;
    }

    fn finish(self, n: usize) -> EstimateResult {
        let frac = |c: usize| {
            if self.weights == 0 {
                0.0
            } else {
                c as f64 / self.weights as f64
            }
        };
        EstimateResult {
            value: self.sum.value() / n as f64,
            records_used: n,
            weights_computed: self.weights,
            clipped_fraction: frac(self.clipped),
            zero_weight_fraction: frac(self.zero),
            zero_denominator_count: self.zero_den,
        }
    }
}

fn run<F>(records: &[LoggedRecord], per_record: F) -> Result<EstimateResult>
where
    F: Fn(&LoggedRecord, &mut Partial) -> Result<()> + Sync + Send,
{
    if records.is_empty() {
        return Err(Error::Capacity("cannot estimate from an empty dataset".into()));
    }
    let parts = parallel::map_chunks(records, RECORD_CHUNK, |_, chunk| {
        let mut p = Partial::default();
        for r in chunk {
            per_record(r, &mut p)?;
        }
        Ok::<_, Error>(p)
    });
    let mut total = Partial::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total.finish(records.len()))
}

fn check(dataset: &LoggedDataset, config: &EstimatorConfig, family: EstimatorFamily) -> Result<()> {
    if config.family() != family {
        return Err(Error::Config(format!(
            "configuration is for the {} estimator, not {family}",
            config.family()
        )));
    }
    if config.list_length() != dataset.list_length() {
        return Err(Error::Dimension(format!(
            "reward weights have {} entries but lists have {} positions",
            config.list_length(),
            dataset.list_length()
        )));
    }
    Ok(())
}

fn check_marginals(m: &MarginalMatrix, k: usize) -> Result<()> {
    if m.list_length() != k {
        return Err(Error::Dimension(format!(
            "policy lists have {} positions, dataset {k}",
            m.list_length()
        )));
    }
    Ok(())
}

/// Runs the estimator selected by `config.family()`.
pub fn estimate(
    dataset: &LoggedDataset,
    h: &Policy,
    pihat: &Policy,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    match config.family() {
        EstimatorFamily::List => estimate_list(dataset, h, pihat, config),
        EstimatorFamily::Ip => estimate_ip(dataset, h, pihat, config),
        EstimatorFamily::Pbm => estimate_pbm(dataset, h, pihat, config),
        EstimatorFamily::Item => estimate_item(dataset, h, pihat, config),
        EstimatorFamily::Rctr => estimate_rctr(dataset, config),
    }
}

/// Importance sampling on whole lists:
/// `1/|S| sum f(A, w) min{h(A|x) / pihat(A|x), M}`.
pub fn estimate_list(
    dataset: &LoggedDataset,
    h: &Policy,
    pihat: &Policy,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    check(dataset, config, EstimatorFamily::List)?;
    let theta = config.theta().as_slice();
    let clip = config.clip();
    run(dataset.records(), |r, acc| {
        let num = h.list_prob(&r.list, r.context)?;
        let den = pihat.list_prob(&r.list, r.context)?;
        let w = acc.weight(num, den, clip);
        acc.add(weighted_clicks(&r.clicks, theta), w);
        Ok(())
    })
}

/// Importance sampling on item-position pairs:
/// `1/|S| sum_k theta_k w(a_k, k) min{h(a_k, k|x) / pihat(a_k, k|x), M}`.
pub fn estimate_ip(
    dataset: &LoggedDataset,
    h: &impl MarginalSource,
    pihat: &Policy,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    check(dataset, config, EstimatorFamily::Ip)?;
    let theta = config.theta().as_slice();
    let clip = config.clip();
    let k = dataset.list_length();
    run(dataset.records(), |r, acc| {
        let hm = h.marginals_for(r.context)?;
        let pm = pihat.marginals(r.context)?;
        check_marginals(hm, k)?;
        for (pos, (&a, &clicked)) in r.list.items().iter().zip(r.clicks.flags()).enumerate() {
            let w = acc.weight(hm.get(a, pos + 1), pm.get(a, pos + 1), clip);
            if clicked {
                acc.add(theta[pos], w);
            }
        }
        Ok(())
    })
}

/// Average weighted clicks of the log; ignores the target policy entirely.
pub fn estimate_rctr(dataset: &LoggedDataset, config: &EstimatorConfig) -> Result<EstimateResult> {
    check(dataset, config, EstimatorFamily::Rctr)?;
    let theta = config.theta().as_slice();
    run(dataset.records(), |r, acc| {
        acc.add(weighted_clicks(&r.clicks, theta), 1.0);
        Ok(())
    })
}

/// Position-based estimator: item weights are ratios of examination-weighted
/// marginals `<theta * p, h(a, .|x)> / <theta * p, pihat(a, .|x)>`.
pub fn estimate_pbm(
    dataset: &LoggedDataset,
    h: &impl MarginalSource,
    pihat: &Policy,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    check(dataset, config, EstimatorFamily::Pbm)?;
    let p = config
        .examination()
        .ok_or_else(|| Error::Config("the PBM estimator needs an examination vector".into()))?;
    examination_weighted(dataset, h, pihat, config, p)
}

/// Item estimator: the PBM estimator with every position examined.
pub fn estimate_item(
    dataset: &LoggedDataset,
    h: &impl MarginalSource,
    pihat: &Policy,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    check(dataset, config, EstimatorFamily::Item)?;
    let ones = vec![1.0; config.list_length()];
    examination_weighted(dataset, h, pihat, config, &ones)
}

fn examination_weighted(
    dataset: &LoggedDataset,
    h: &impl MarginalSource,
    pihat: &Policy,
    config: &EstimatorConfig,
    examination: &[f64],
) -> Result<EstimateResult> {
    let theta = config.theta().as_slice();
    let weights: Vec<f64> = theta.iter().zip(examination).map(|(t, p)| t * p).collect();
    let clip = config.clip();
    let k = dataset.list_length();
    run(dataset.records(), |r, acc| {
        let hm = h.marginals_for(r.context)?;
        let pm = pihat.marginals(r.context)?;
        check_marginals(hm, k)?;
        for (pos, (&a, &clicked)) in r.list.items().iter().zip(r.clicks.flags()).enumerate() {
            let num = examination_inner_product(hm, a, &weights);
            let den = examination_inner_product(pm, a, &weights);
            let w = acc.weight(num, den, clip);
            if clicked {
                acc.add(theta[pos], w);
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Catalog, ClickVector, RankedList, RewardWeights};

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

    /// S = {(x, (1,2), (1,0)), (x, (2,1), (0,1))}.
    fn two_records() -> LoggedDataset {
        let c = Catalog::new(vec![1, 2], 2, vec![0]).unwrap();
        LoggedDataset::new(c, vec![rec(&[1, 2], &[1, 0]), rec(&[2, 1], &[0, 1])]).unwrap()
    }

    fn uniform_pihat() -> Policy {
        Policy::uniform(0, [l(&[1, 2]), l(&[2, 1])]).unwrap()
    }

    fn point_h() -> Policy {
        Policy::deterministic(0, l(&[1, 2])).unwrap()
    }

    fn m(v: f64) -> Clip {
        Clip::new(v).unwrap()
    }

    fn ones() -> RewardWeights {
        RewardWeights::ones(2).unwrap()
    }

    #[test]
    fn list_hand_example() {
        let r = estimate_list(&two_records(), &point_h(), &uniform_pihat(), &EstimatorConfig::list(m(10.0), ones()))
            .unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.records_used, 2);
        assert_eq!(r.zero_weight_fraction, 0.5);
    }

    #[test]
    fn ip_hand_example() {
        let r = estimate_ip(&two_records(), &point_h(), &uniform_pihat(), &EstimatorConfig::ip(m(10.0), ones()))
            .unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.weights_computed, 4);
    }

    #[test]
    fn rctr_hand_examples() {
        let s = two_records();
        assert_eq!(estimate_rctr(&s, &EstimatorConfig::rctr(ones())).unwrap().value, 1.0);
        let dcg = RewardWeights::dcg(2).unwrap();
        let v = estimate_rctr(&s, &EstimatorConfig::rctr(dcg)).unwrap().value;
        assert!((v - (1.0 + 1.0 / 3f64.log2()) / 2.0).abs() < 1e-15);
        assert!((v - 0.8155).abs() < 1e-4);
    }

    #[test]
    fn pbm_hand_example() {
        // Item 1 has h marginals (1, 0) and pihat marginals (.5, .5):
        // weight <(1,.5),(1,0)> / <(1,.5),(.5,.5)> = 1 / 0.75 = 4/3.
        // Both clicks are on item 1 and theta = 1, so the value is (4/3 + 4/3) / 2.
        let cfg = EstimatorConfig::pbm(m(10.0), ones(), vec![1.0, 0.5]).unwrap();
        let r = estimate_pbm(&two_records(), &point_h(), &uniform_pihat(), &cfg).unwrap();
        assert!((r.value - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn item_hand_example_and_pbm_equivalence() {
        let s = two_records();
        let item = estimate_item(&s, &point_h(), &uniform_pihat(), &EstimatorConfig::item(m(10.0), ones())).unwrap();
        assert_eq!(item.value, 1.0);
        let pbm = EstimatorConfig::pbm(m(10.0), ones(), vec![1.0, 1.0]).unwrap();
        let via_pbm = estimate_pbm(&s, &point_h(), &uniform_pihat(), &pbm).unwrap();
        assert_eq!(item.value.to_bits(), via_pbm.value.to_bits());
    }

    #[test]
    fn single_examined_position_uses_first_column_only() {
        let s = two_records();
        let cfg = EstimatorConfig::pbm(m(10.0), ones(), vec![1.0, 1e-300]).unwrap();
        let r = estimate_pbm(&s, &point_h(), &uniform_pihat(), &cfg).unwrap();
        // Weight of item 1 is approximately h(1,1)/pihat(1,1) = 2.
        assert!((r.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn self_evaluation_returns_average_clicks() {
        let s = two_records();
        let p = uniform_pihat();
        for family in EstimatorFamily::ALL {
            let cfg = EstimatorConfig::for_family(family, m(1.0), ones(), &[1.0, 0.5]).unwrap();
            assert_eq!(estimate(&s, &p, &p, &cfg).unwrap().value, 1.0, "{family}");
        }
    }

    #[test]
    fn vanishing_clip_gives_zero() {
        let s = two_records();
        for family in [EstimatorFamily::List, EstimatorFamily::Ip, EstimatorFamily::Item, EstimatorFamily::Pbm] {
            let cfg = EstimatorConfig::for_family(family, m(0.0), ones(), &[1.0, 0.5]).unwrap();
            assert_eq!(estimate(&s, &point_h(), &uniform_pihat(), &cfg).unwrap().value, 0.0);
            let cfg = cfg.with_clip(m(1e-9));
            assert!(estimate(&s, &point_h(), &uniform_pihat(), &cfg).unwrap().value < 1e-8);
        }
    }

    #[test]
    fn zero_denominator_conventions() {
        let s = two_records();
        // pihat never shows (2,1), so the second record has weight h/0.
        let pihat = Policy::deterministic(0, l(&[1, 2])).unwrap();
        let h = uniform_pihat();
        let r = estimate_list(&s, &h, &pihat, &EstimatorConfig::list(m(3.0), ones())).unwrap();
        assert_eq!(r.zero_denominator_count, 1);
        assert_eq!(r.value, (0.5 + 3.0) / 2.0);
        // 0/0: h and pihat both put no mass on (2,1).
        let r = estimate_list(&s, &pihat, &pihat, &EstimatorConfig::list(m(3.0), ones())).unwrap();
        assert_eq!(r.zero_denominator_count, 0);
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn errors() {
        let s = two_records();
        let other = Policy::deterministic(5, l(&[1, 2])).unwrap();
        assert!(matches!(
            estimate_list(&s, &other, &uniform_pihat(), &EstimatorConfig::list(m(1.0), ones())),
            Err(Error::UnseenContext(0))
        ));
        assert!(matches!(
            estimate_list(&s, &point_h(), &uniform_pihat(), &EstimatorConfig::ip(m(1.0), ones())),
            Err(Error::Config(_))
        ));
        let empty = s.filter(|_| false);
        assert!(matches!(
            estimate_rctr(&empty, &EstimatorConfig::rctr(ones())),
            Err(Error::Capacity(_))
        ));
        let wrong_k = EstimatorConfig::rctr(RewardWeights::ones(3).unwrap());
        assert!(matches!(estimate_rctr(&s, &wrong_k), Err(Error::Dimension(_))));
    }
}
