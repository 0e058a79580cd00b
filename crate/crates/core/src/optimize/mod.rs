//! Policy optimization under the list and IP estimators.
//!
//! Both optimizers solve one independent problem per logged context and only
//! put objective weight on lists (or item-position pairs) that appear in the
//! log. Mass the objective does not pin down is placed by a fixed residual
//! rule: proportionally to the logging policy while no ratio exceeds `M`,
//! then uniformly. Any such placement attains the same objective.

mod birkhoff;
mod bound;
mod greedy;
mod simplex;

use std::collections::BTreeMap;

pub use birkhoff::{birkhoff_decompose, decode_marginals};
pub use bound::{best_list_policy_in_class, certify, hoeffding_term, BoundCertificate};
pub use greedy::best_list_policy;
pub use simplex::{best_ip_marginals, solve_lp, LpSolution};

use crate::error::{Error, Result};
use crate::types::{Clip, ContextId, EstimatorConfig, EstimatorFamily, LoggedDataset, LoggedRecord};

/// Optimized policy (a [`crate::policies::Policy`] for the list optimizer,
/// per-context marginals for the IP optimizer) with its estimated value.
#[derive(Debug, Clone)]
pub struct OptimizationResult<P> {
    pub policy: P,
    /// Value of the optimizing estimator at `policy`.
    pub objective: f64,
    pub certificate: Option<BoundCertificate>,
}

impl<P> OptimizationResult<P> {
    pub fn with_certificate(mut self, certificate: BoundCertificate) -> Self {
        self.certificate = Some(certificate);
        self
    }
}

fn check_config(dataset: &LoggedDataset, config: &EstimatorConfig, family: EstimatorFamily) -> Result<Clip> {
    if config.family() != family {
        return Err(Error::Config(format!(
            "the {family} optimizer needs a {family} configuration, got {}",
            config.family()
        )));
    }
    let clip = config.clip();
    if clip.is_infinite() {
        return Err(Error::Domain("policy optimization needs a finite clipping constant".into()));
    }
    if config.list_length() != dataset.list_length() {
        return Err(Error::Dimension(format!(
            "reward weights have {} entries but lists have {} positions",
            config.list_length(),
            dataset.list_length()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Capacity("cannot optimize on an empty dataset".into()));
    }
    Ok(clip)
}

fn group_by_context(dataset: &LoggedDataset) -> Vec<(ContextId, Vec<&LoggedRecord>)> {
    let mut groups: BTreeMap<ContextId, Vec<&LoggedRecord>> = BTreeMap::new();
    for r in dataset.records() {
        groups.entry(r.context).or_default().push(r);
    }
    groups.into_iter().collect()
}

/// Distributes `mass` over the slots in proportion to `weights`, never
/// adding more than `room[i]` to slot `i`. Placed mass is added to `out` and
/// removed from `room`; the unplaced remainder is returned.
pub(crate) fn waterfill(mut mass: f64, weights: &[f64], room: &mut [f64], out: &mut [f64]) -> f64 {
    const EPS: f64 = 1e-15;
    loop {
        if mass <= EPS {
            return mass.max(0.0);
        }
        let active: Vec<usize> = (0..weights.len())
            .filter(|&i| weights[i] > 0.0 && room[i] > EPS)
            .collect();
        if active.is_empty() {
            return mass;
        }
        let total: f64 = active.iter().map(|&i| weights[i]).sum();
        let mut placed = 0.0;
        let mut saturated = false;
        for &i in &active {
            let want = mass * weights[i] / total;
            let give = if want >= room[i] {
                saturated = true;
                room[i]
            } else {
                want
            };
            out[i] += give;
            room[i] -= give;
            placed += give;
        }
        mass -= placed;
        if !saturated {
            return mass.max(0.0);
        }
    }
}
