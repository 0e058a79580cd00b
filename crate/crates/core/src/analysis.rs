//! Exact expectations of the estimators in synthetic worlds, and the bias
//! terms that bound them.
//!
//! All expectations are per record: by linearity of the sample mean,
//! `E_S[V_hat]` does not depend on the number of logged records.
//!
//! Ratio conventions match the estimators: `min{num / den, M}` is `M` when
//! `den = 0 < num` and `0` when both vanish. In the bias indicators
//! `1{h / pi <= M}`, `0 / 0` counts as ratio zero and `h > 0 = pi` as an
//! infinite ratio, even for infinite `M`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::click_models::{ClickModelSpec, SyntheticWorld};
use crate::error::{Error, Result};
use crate::policies::{examination_inner_product, MarginalMatrix, Policy};
use crate::sum::CompensatedSum;
use crate::types::{Clip, ContextId, EstimatorConfig, EstimatorFamily, ItemId, RankedList, RewardWeights};

/// Default cap on enumerated (context, list) terms.
pub const DEFAULT_SUPPORT_CAP: usize = 100_000;

/// Which estimator's bias terms to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasLevel {
    List,
    Ip,
}

/// Ratio family defining a class of policies whose weights are never clipped.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassLevel {
    List,
    Ip,
    /// Items weighted by `theta * examination`.
    Pbm { examination: Vec<f64>, theta: RewardWeights },
    Item { theta: RewardWeights },
}

/// Expected estimate, true value and the terms bounding their gap:
/// `G - M F <= expected_estimate <= true_value + M F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasDiagnostics {
    pub expected_estimate: f64,
    pub true_value: f64,
    pub f_term: f64,
    pub g_term: f64,
    pub clip: Clip,
}

impl BiasDiagnostics {
    fn m_f(&self) -> f64 {
        if self.f_term == 0.0 {
            0.0
        } else {
            self.clip.value() * self.f_term
        }
    }

    pub fn lower_bound(&self) -> f64 {
        self.g_term - self.m_f()
    }

    pub fn upper_bound(&self) -> f64 {
        self.true_value + self.m_f()
    }

    /// Whether the sandwich holds up to `slack`.
    pub fn holds(&self, slack: f64) -> bool {
        self.lower_bound() <= self.expected_estimate + slack
            && self.expected_estimate <= self.upper_bound() + slack
    }

    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "clip\t{}", self.clip);
        let _ = writeln!(s, "expected_estimate\t{:.6}", self.expected_estimate);
        let _ = writeln!(s, "true_value\t{:.6}", self.true_value);
        let _ = writeln!(s, "bias\t{:.6}", self.expected_estimate - self.true_value);
        let _ = writeln!(s, "f_term\t{:.6}", self.f_term);
        let _ = writeln!(s, "g_term\t{:.6}", self.g_term);
        let _ = writeln!(s, "lower_bound\t{:.6}", self.lower_bound());
        let _ = writeln!(s, "upper_bound\t{:.6}", self.upper_bound());
        s
    }
}

/// Verdict of [`check_unclipped_class`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVerdict {
    pub member: bool,
    pub worst_ratio: f64,
    /// Context and entry (list, item-position pair or item) of the worst ratio.
    pub worst_context: Option<ContextId>,
    pub worst_entry: String,
}

#[inline]
fn clipped_ratio(num: f64, den: f64, m: f64) -> f64 {
    if den > 0.0 {
        (num / den).min(m)
    } else if num > 0.0 {
        m
    } else {
        0.0
    }
}

#[inline]
fn unclipped(h: f64, pi: f64, m: f64) -> bool {
    if pi > 0.0 {
        h / pi <= m
    } else {
        h <= 0.0
    }
}

#[inline]
fn ratio(h: f64, pi: f64) -> f64 {
    if pi > 0.0 {
        h / pi
    } else if h > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Contexts with positive probability, as (index, id, probability).
fn live_contexts(world: &SyntheticWorld) -> impl Iterator<Item = (usize, ContextId, f64)> + '_ {
    world
        .catalog()
        .contexts()
        .iter()
        .zip(world.context_distribution())
        .enumerate()
        .filter(|(_, (_, p))| **p > 0.0)
        .map(|(i, (x, p))| (i, *x, *p))
}

fn item_index(model: &ClickModelSpec, a: ItemId) -> Result<usize> {
    model
        .catalog()
        .item_index(a)
        .ok_or_else(|| Error::Domain(format!("item {a} is not in the world's catalog")))
}

/// `f(A, w_bar(.|x)) = sum_k theta_k w_bar(a_k, k | x)`.
fn list_reward(model: &ClickModelSpec, xi: usize, list: &RankedList, theta: &[f64]) -> Result<f64> {
    let mut f = 0.0;
    for (k, &a) in list.items().iter().enumerate() {
        f += theta[k] * model.prob_at(xi, item_index(model, a)?, k);
    }
    Ok(f)
}

fn check_theta(world: &SyntheticWorld, theta: &RewardWeights) -> Result<()> {
    if theta.len() != world.catalog().list_length() {
        return Err(Error::Dimension(format!(
            "reward weights have {} entries, the world shows {} positions",
            theta.len(),
            world.catalog().list_length()
        )));
    }
    Ok(())
}

fn check_support(world: &SyntheticWorld, policies: &[&Policy], cap: usize) -> Result<()> {
    let mut terms = 0usize;
    for (_, x, _) in live_contexts(world) {
        for p in policies {
            terms += p.distribution(x)?.support_size();
        }
    }
    if terms > cap {
        return Err(Error::Capacity(format!(
            "enumeration needs {terms} terms, more than the cap of {cap}"
        )));
    }
    Ok(())
}

/// `E_S[V_hat]` for whichever estimator `config` selects.
pub fn exact_expected_estimate(
    world: &SyntheticWorld,
    pi: &Policy,
    pihat: &Policy,
    h: &Policy,
    config: &EstimatorConfig,
) -> Result<f64> {
    match config.family() {
        EstimatorFamily::List => exact_expected_estimate_list(world, pi, pihat, h, config),
        EstimatorFamily::Ip => exact_expected_estimate_ip(world, pi, pihat, h, config),
        EstimatorFamily::Pbm => exact_expected_estimate_pbm(world, pi, pihat, h, config),
        EstimatorFamily::Item => exact_expected_estimate_item(world, pi, pihat, h, config),
        // The click average estimates the logging policy's own value.
        EstimatorFamily::Rctr => world.true_value(pi, config.theta()),
    }
}

/// `sum_x P(x) sum_A pi(A|x) f(A, w_bar) min{h(A|x) / pihat(A|x), M}`.
pub fn exact_expected_estimate_list(
    world: &SyntheticWorld,
    pi: &Policy,
    pihat: &Policy,
    h: &Policy,
    config: &EstimatorConfig,
) -> Result<f64> {
    exact_expected_estimate_list_capped(world, pi, pihat, h, config, DEFAULT_SUPPORT_CAP)
}

/// [`exact_expected_estimate_list`] with an explicit enumeration cap.
pub fn exact_expected_estimate_list_capped(
    world: &SyntheticWorld,
    pi: &Policy,
    pihat: &Policy,
    h: &Policy,
    config: &EstimatorConfig,
    cap: usize,
) -> Result<f64> {
    check_theta(world, config.theta())?;
    check_support(world, &[pi], cap)?;
    let model = world.model();
    let theta = config.theta().as_slice();
    let m = config.clip().value();
    let mut total = CompensatedSum::new();
    for (xi, x, px) in live_contexts(world) {
        let (hd, pd) = (h.distribution(x)?, pihat.distribution(x)?);
        let mut s = CompensatedSum::new();
        for (list, p) in pi.distribution(x)?.entries() {
            let f = list_reward(model, xi, list, theta)?;
            if f != 0.0 {
                s.add(p * f * clipped_ratio(hd.prob(list), pd.prob(list), m));
            }
        }
        total.add(px * s.value());
    }
    Ok(total.value())
}

/// `sum_x P(x) sum_{a,k} pi(a,k|x) theta_k w_bar(a,k|x) min{h(a,k|x) / pihat(a,k|x), M}`.
pub fn exact_expected_estimate_ip(
    world: &SyntheticWorld,
    pi: &Policy,
    pihat: &Policy,
    h: &Policy,
    config: &EstimatorConfig,
) -> Result<f64> {
    let m = config.clip().value();
    item_level_expectation(world, pi, config.theta(), |x, a, k| {
        Ok(clipped_ratio(h.marginals(x)?.get(a, k + 1), pihat.marginals(x)?.get(a, k + 1), m))
    })
}

/// PBM form: item weights `min{<theta p, h(a,.)> / <theta p, pihat(a,.)>, M}`.
pub fn exact_expected_estimate_pbm(
    world: &SyntheticWorld,
    pi: &Policy,
    pihat: &Policy,
    h: &Policy,
    config: &EstimatorConfig,
) -> Result<f64> {
    let p = config
        .examination()
        .ok_or_else(|| Error::Config("the PBM estimator needs an examination vector".into()))?;
    examination_expectation(world, pi, pihat, h, config, p)
}

/// The PBM form with every position examined.
pub fn exact_expected_estimate_item(
    world: &SyntheticWorld,
    pi: &Policy,
    pihat: &Policy,
    h: &Policy,
    config: &EstimatorConfig,
) -> Result<f64> {
    let ones = vec![1.0; config.list_length()];
    examination_expectation(world, pi, pihat, h, config, &ones)
}

fn examination_expectation(
    world: &SyntheticWorld,
    pi: &Policy,
    pihat: &Policy,
    h: &Policy,
    config: &EstimatorConfig,
    examination: &[f64],
) -> Result<f64> {
    let theta = config.theta().as_slice();
    let weights: Vec<f64> = theta.iter().zip(examination).map(|(t, p)| t * p).collect();
    let m = config.clip().value();
    item_level_expectation(world, pi, config.theta(), |x, a, _| {
        Ok(clipped_ratio(
            examination_inner_product(h.marginals(x)?, a, &weights),
            examination_inner_product(pihat.marginals(x)?, a, &weights),
            m,
        ))
    })
}

/// `sum_x P(x) sum_{a,k} pi(a,k|x) theta_k w_bar(a,k|x) weight(x, a, k)`.
fn item_level_expectation<W>(world: &SyntheticWorld, pi: &Policy, theta: &RewardWeights, weight: W) -> Result<f64>
where
    W: Fn(ContextId, ItemId, usize) -> Result<f64>,
{
    check_theta(world, theta)?;
    let model = world.model();
    let mut total = CompensatedSum::new();
    for (xi, x, px) in live_contexts(world) {
        let mut s = CompensatedSum::new();
        for (a, row) in pi.marginals(x)?.rows() {
            let ai = item_index(model, a)?;
            for (k, p) in row.iter().enumerate() {
                let r = p * theta.as_slice()[k] * model.prob_at(xi, ai, k);
                if r != 0.0 {
                    s.add(r * weight(x, a, k)?);
                }
            }
        }
        total.add(px * s.value());
    }
    Ok(total.value())
}

/// `(E_x[F(x|h)], E_x[G(x|h)])` at the list or item-position level.
///
/// `F` sums `reward * |pihat - pi|` and `G` sums `reward * h` over the
/// lists (or pairs) whose ratio `h / pi` does not exceed `M`.
pub fn bias_terms(
    world: &SyntheticWorld,
    pi: &Policy,
    pihat: &Policy,
    h: &Policy,
    clip: Clip,
    theta: &RewardWeights,
    level: BiasLevel,
) -> Result<(f64, f64)> {
    check_theta(world, theta)?;
    let model = world.model();
    let th = theta.as_slice();
    let m = clip.value();
    if level == BiasLevel::List {
        check_support(world, &[pi, pihat, h], DEFAULT_SUPPORT_CAP)?;
    }
    let mut f_total = CompensatedSum::new();
    let mut g_total = CompensatedSum::new();
    for (xi, x, px) in live_contexts(world) {
        let (f, g) = match level {
            BiasLevel::List => {
                let (hd, pd, qd) = (h.distribution(x)?, pi.distribution(x)?, pihat.distribution(x)?);
                let lists: BTreeSet<&RankedList> = hd
                    .entries()
                    .iter()
                    .chain(pd.entries())
                    .chain(qd.entries())
                    .map(|(l, _)| l)
                    .collect();
                let (mut f, mut g) = (CompensatedSum::new(), CompensatedSum::new());
                for list in lists {
                    let (hv, pv, qv) = (hd.prob(list), pd.prob(list), qd.prob(list));
                    if unclipped(hv, pv, m) {
                        let r = list_reward(model, xi, list, th)?;
                        f.add(r * (qv - pv).abs());
                        g.add(r * hv);
                    }
                }
                (f.value(), g.value())
            }
            BiasLevel::Ip => {
                let (hm, pm, qm) = (h.marginals(x)?, pi.marginals(x)?, pihat.marginals(x)?);
                let items: BTreeSet<ItemId> = hm.items().chain(pm.items()).chain(qm.items()).collect();
                let (mut f, mut g) = (CompensatedSum::new(), CompensatedSum::new());
                for a in items {
                    let ai = item_index(model, a)?;
                    for k in 0..th.len() {
                        let (hv, pv, qv) = (hm.get(a, k + 1), pm.get(a, k + 1), qm.get(a, k + 1));
                        if unclipped(hv, pv, m) {
                            let r = th[k] * model.prob_at(xi, ai, k);
                            f.add(r * (qv - pv).abs());
                            g.add(r * hv);
                        }
                    }
                }
                (f.value(), g.value())
            }
        };
        f_total.add(px * f);
        g_total.add(px * g);
    }
    Ok((f_total.value(), g_total.value()))
}

/// Expected estimate, true value and bias terms in one record.
pub fn bias_diagnostics(
    world: &SyntheticWorld,
    pi: &Policy,
    pihat: &Policy,
    h: &Policy,
    config: &EstimatorConfig,
    level: BiasLevel,
) -> Result<BiasDiagnostics> {
    let family = match level {
        BiasLevel::List => EstimatorFamily::List,
        BiasLevel::Ip => EstimatorFamily::Ip,
    };
    if config.family() != family {
        return Err(Error::Config(format!("{family} bias terms need a {family} configuration")));
    }
    let expected_estimate = exact_expected_estimate(world, pi, pihat, h, config)?;
    let (f_term, g_term) = bias_terms(world, pi, pihat, h, config.clip(), config.theta(), level)?;
    Ok(BiasDiagnostics {
        expected_estimate,
        true_value: world.true_value(h, config.theta())?,
        f_term,
        g_term,
        clip: config.clip(),
    })
}

/// Relative slack on `M` absorbing rounding in marginal sums.
const CLASS_RTOL: f64 = 1e-12;

/// Whether every ratio of `h` to `pi` at the given level is at most `M`
/// (so `h` is never clipped when `pihat = pi`), with the largest ratio.
pub fn check_unclipped_class(h: &Policy, pi: &Policy, clip: Clip, level: &ClassLevel) -> Result<ClassVerdict> {
    let mut worst = ClassVerdict {
        member: true,
        worst_ratio: 0.0,
        worst_context: None,
        worst_entry: String::new(),
    };
    let mut consider = |x: ContextId, r: f64, entry: &dyn Fn() -> String| {
        if r > worst.worst_ratio || worst.worst_context.is_none() {
            worst.worst_ratio = r;
            worst.worst_context = Some(x);
            worst.worst_entry = entry();
        }
    };
    let empty = MarginalMatrix::new(h.list_length().unwrap_or(0));
    for (x, hd) in h.distributions() {
        let pd = pi.distribution(x).ok();
        match level {
            ClassLevel::List => {
                for (list, hv) in hd.entries() {
                    let r = ratio(*hv, pd.map_or(0.0, |d| d.prob(list)));
                    consider(x, r, &|| list.to_string());
                }
            }
            ClassLevel::Ip => {
                let pm = pd.map_or(&empty, |d| d.marginals());
                for (a, row) in hd.marginals().rows() {
                    for (k, hv) in row.iter().enumerate() {
                        let r = ratio(*hv, pm.get(a, k + 1));
                        consider(x, r, &|| format!("item {a} at position {}", k + 1));
                    }
                }
            }
            ClassLevel::Pbm { .. } | ClassLevel::Item { .. } => {
                let weights: Vec<f64> = match level {
                    ClassLevel::Pbm { examination, theta } => {
                        theta.as_slice().iter().zip(examination).map(|(t, p)| t * p).collect()
                    }
                    ClassLevel::Item { theta } => theta.as_slice().to_vec(),
                    _ => unreachable!(),
                };
                if weights.len() != hd.list_length() {
                    return Err(Error::Dimension("class weights do not match the list length".into()));
                }
                let pm = pd.map_or(&empty, |d| d.marginals());
                for a in hd.marginals().items() {
                    let num = examination_inner_product(hd.marginals(), a, &weights);
                    let den = if pm.list_length() == weights.len() {
                        examination_inner_product(pm, a, &weights)
                    } else {
                        0.0
                    };
                    consider(x, ratio(num, den), &|| format!("item {a}"));
                }
            }
        }
    }
    worst.member = worst.worst_ratio <= clip.value() * (1.0 + CLASS_RTOL);
    Ok(worst)
}
