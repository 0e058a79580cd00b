//! Terms of the lower bound on the value of an optimized policy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::click_models::SyntheticWorld;
use crate::error::{Error, Result};
use crate::policies::{ListDistribution, Policy};
use crate::types::{Clip, RankedList, RewardWeights};

/// Confidence-dependent part of the bound, plus the logging-policy error
/// terms when they are computable (synthetic worlds only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCertificate {
    pub delta: f64,
    pub hoeffding_term: f64,
    /// `(M E_x[F(x | optimized)], M E_x[F(x | best in class)])`.
    pub f_terms: Option<(f64, f64)>,
}

impl BoundCertificate {
    pub fn with_f_terms(mut self, optimized: f64, best_in_class: f64) -> Self {
        self.f_terms = Some((optimized, best_in_class));
        self
    }

    /// Total amount subtracted from the best in-class value.
    pub fn slack(&self) -> f64 {
        self.hoeffding_term + self.f_terms.map_or(0.0, |(a, b)| a + b)
    }

    /// `key<TAB>value` lines.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "delta\t{:.6}", self.delta);
        let _ = writeln!(s, "hoeffding_term\t{:.6}", self.hoeffding_term);
        if let Some((a, b)) = self.f_terms {
            let _ = writeln!(s, "f_term_optimized\t{a:.6}");
            let _ = writeln!(s, "f_term_best_in_class\t{b:.6}");
        }
        let _ = writeln!(s, "slack\t{:.6}", self.slack());
        s
    }
}

/// `2 (sum_k theta_k) sqrt(ln(4 / delta) / (2 n))`.
pub fn hoeffding_term(theta: &RewardWeights, delta: f64, n: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta = {delta} is not in (0, 1)")));
    }
    if n == 0 {
        return Err(Error::Domain("the bound needs at least one record".into()));
    }
    Ok(2.0 * theta.total() * ((4.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

pub fn certify(theta: &RewardWeights, delta: f64, n: usize) -> Result<BoundCertificate> {
    Ok(BoundCertificate {
        delta,
        hoeffding_term: hoeffding_term(theta, delta, n)?,
        f_terms: None,
    })
}

/// Best policy among those whose list ratios `h(A|x) / pi(A|x)` stay within
/// `M`, under the world's true click probabilities. `None` when the class is
/// empty (`M < 1`).
///
/// Per context this is a fractional knapsack on `f(A, w)` with capacities
/// `M pi(A|x)`; ties are broken by lexicographic list order.
pub fn best_list_policy_in_class(
    world: &SyntheticWorld,
    pi: &Policy,
    theta: &RewardWeights,
    clip: Clip,
) -> Result<Option<Policy>> {
    let m = clip.value();
    if m < 1.0 {
        return Ok(None);
    }
    let model = world.model();
    let catalog = model.catalog();
    let mut contexts = BTreeMap::new();
    for (x, dist) in pi.distributions() {
        let Some(xi) = catalog.context_index(x) else {
            return Err(Error::UnseenContext(x));
        };
        let mut scored: Vec<(&RankedList, f64, f64)> = Vec::with_capacity(dist.support_size());
        for (list, p) in dist.entries() {
            let mut f = 0.0;
            for (k, &a) in list.items().iter().enumerate() {
                let ai = catalog
                    .item_index(a)
                    .ok_or_else(|| Error::Domain(format!("item {a} is not in the world's catalog")))?;
                f += theta.as_slice()[k] * model.prob_at(xi, ai, k);
            }
            scored.push((list, f, *p));
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then_with(|| a.0.cmp(b.0)));
        let mut budget = 1.0;
        let mut weights = Vec::new();
        for (list, _, p) in scored {
            if budget <= 0.0 {
                break;
            }
            let take = (m * p).min(budget);
            weights.push((list.clone(), take));
            budget -= take;
        }
        contexts.insert(x, ListDistribution::from_weights(weights)?);
    }
    Ok(Some(Policy::new(contexts)?))
}
