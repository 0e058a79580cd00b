//! Ground-truth click models, click simulation and exact policy values.
//!
//! A [`ClickModelSpec`] fixes the mean click probability `w(a, k | x)` of every
//! item `a` at every position `k` in every context `x`. Five families are
//! supported, each constraining how the mean may vary:
//!
//! * RCM: one rate per context,
//! * RCTR: a rate per position,
//! * DCTR: a rate per item,
//! * PBM: attraction per item times examination per position,
//! * IP: a free item-by-position matrix.
//!
//! Simulated clicks are independent Bernoulli draws with these means. Any
//! joint distribution with the same means leads to the same estimator
//! expectations and policy values, so independence is only a simulator
//! convention.

mod config;
mod world;

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::policies::Policy;
use crate::sum::CompensatedSum;
use crate::types::{Catalog, ClickVector, ContextId, ItemId, RankedList, RewardWeights};

pub use config::{parse_world_config, read_world_config};
pub use world::{simulate_drifting_log, simulate_log, SyntheticWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClickModelFamily {
    Rcm,
    Rctr,
    Dctr,
    Pbm,
    Ip,
}

impl ClickModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ClickModelFamily::Rcm => "rcm",
            ClickModelFamily::Rctr => "rctr",
            ClickModelFamily::Dctr => "dctr",
            ClickModelFamily::Pbm => "pbm",
            ClickModelFamily::Ip => "ip",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Params {
    /// `[context]`
    Rcm { rate: Vec<f64> },
    /// `[context][position]`
    Rctr { position_rate: Vec<Vec<f64>> },
    /// `[context][item]`
    Dctr { item_rate: Vec<Vec<f64>> },
    /// `[context][item]` and `[context][position]`
    Pbm {
        attraction: Vec<Vec<f64>>,
        examination: Vec<Vec<f64>>,
    },
    /// `[context][item * K + position]`
    Ip { matrix: Vec<Vec<f64>> },
}

/// Mean click probabilities of a click model over a fixed catalog.
///
/// Parameters are indexed by the catalog's dense item/context order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickModelSpec {
    catalog: Arc<Catalog>,
    params: Params,
}

fn check_probs(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::Domain(format!("{what} value {v} is not a probability"))),
        None => Ok(()),
    }
}

fn check_table(what: &str, table: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if table.len() != rows {
        return Err(Error::Dimension(format!(
            "{what} has {} context rows, expected {rows}",
            table.len()
        )));
    }
    for row in table {
        if row.len() != cols {
            return Err(Error::Dimension(format!(
                "{what} row has {} entries, expected {cols}",
                row.len()
            )));
        }
        check_probs(what, row)?;
    }
    Ok(())
}

impl ClickModelSpec {
    /// Random click model: one rate `c(x)` per context.
    pub fn rcm(catalog: impl Into<Arc<Catalog>>, rate: Vec<f64>) -> Result<Self> {
        let catalog = catalog.into();
        if rate.len() != catalog.num_contexts() {
            return Err(Error::Dimension("RCM needs one rate per context".into()));
        }
        check_probs("rate", &rate)?;
        Ok(Self {
            catalog,
            params: Params::Rcm { rate },
        })
    }

    /// Rank-based model: `r(k | x)` per context and position.
    pub fn rctr(catalog: impl Into<Arc<Catalog>>, position_rate: Vec<Vec<f64>>) -> Result<Self> {
        let catalog = catalog.into();
        check_table(
            "position_rate",
            &position_rate,
            catalog.num_contexts(),
            catalog.list_length(),
        )?;
        Ok(Self {
            catalog,
            params: Params::Rctr { position_rate },
        })
    }

    /// Document-based model: `q(a | x)` per context and item.
    pub fn dctr(catalog: impl Into<Arc<Catalog>>, item_rate: Vec<Vec<f64>>) -> Result<Self> {
        let catalog = catalog.into();
        check_table("item_rate", &item_rate, catalog.num_contexts(), catalog.num_items())?;
        Ok(Self {
            catalog,
            params: Params::Dctr { item_rate },
        })
    }

    /// Position-based model: attraction `mu(a | x)` times examination `p(k | x)`.
    pub fn pbm(
        catalog: impl Into<Arc<Catalog>>,
        attraction: Vec<Vec<f64>>,
        examination: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let catalog = catalog.into();
        check_table("attraction", &attraction, catalog.num_contexts(), catalog.num_items())?;
        check_table(
            "examination",
            &examination,
            catalog.num_contexts(),
            catalog.list_length(),
        )?;
        Ok(Self {
            catalog,
            params: Params::Pbm {
                attraction,
                examination,
            },
        })
    }

    /// Item-position model: `matrix[x][a][k]` is the click probability of
    /// item index `a` at position index `k` in context index `x`.
    pub fn ip(catalog: impl Into<Arc<Catalog>>, matrix: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let catalog = catalog.into();
        let (n, k) = (catalog.num_items(), catalog.list_length());
        if matrix.len() != catalog.num_contexts() {
            return Err(Error::Dimension("IP matrix needs one block per context".into()));
        }
        let mut flat = Vec::with_capacity(matrix.len());
        for block in matrix {
            check_table("click_prob", &block, n, k)?;
            flat.push(block.into_iter().flatten().collect());
        }
        Ok(Self {
            catalog,
            params: Params::Ip { matrix: flat },
        })
    }

    pub fn family(&self) -> ClickModelFamily {
        match self.params {
            Params::Rcm { .. } => ClickModelFamily::Rcm,
            Params::Rctr { .. } => ClickModelFamily::Rctr,
            Params::Dctr { .. } => ClickModelFamily::Dctr,
            Params::Pbm { .. } => ClickModelFamily::Pbm,
            Params::Ip { .. } => ClickModelFamily::Ip,
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn shared_catalog(&self) -> Arc<Catalog> {
        Arc::clone(&self.catalog)
    }

    /// Mean click probability by dense indices (`position0` is 0-based).
    #[inline]
    pub(crate) fn prob_at(&self, context: usize, item: usize, position0: usize) -> f64 {
        match &self.params {
            Params::Rcm { rate } => rate[context],
            Params::Rctr { position_rate } => position_rate[context][position0],
            Params::Dctr { item_rate } => item_rate[context][item],
            Params::Pbm {
                attraction,
                examination,
            } => attraction[context][item] * examination[context][position0],
            Params::Ip { matrix } => {
                matrix[context][item * self.catalog.list_length() + position0]
            }
        }
    }

    pub(crate) fn context_index(&self, context: ContextId) -> Result<usize> {
        self.catalog
            .context_index(context)
            .ok_or_else(|| Error::Domain(format!("context {context} is not in the catalog")))
    }

    pub(crate) fn item_index(&self, item: ItemId) -> Result<usize> {
        self.catalog
            .item_index(item)
            .ok_or_else(|| Error::Domain(format!("item {item} is not in the catalog")))
    }

    /// Mean click probability of `item` at 1-based `position` in `context`.
    pub fn click_prob(&self, item: ItemId, position: usize, context: ContextId) -> Result<f64> {
        let x = self.context_index(context)?;
        let a = self.item_index(item)?;
        if position == 0 || position > self.catalog.list_length() {
            return Err(Error::Domain(format!(
                "position {position} outside 1..={}",
                self.catalog.list_length()
            )));
        }
        Ok(self.prob_at(x, a, position - 1))
    }

    /// Expected reward `sum_k theta_k w(a_k, k | x)` of a list.
    pub fn expected_reward(
        &self,
        list: &RankedList,
        context: ContextId,
        theta: &RewardWeights,
    ) -> Result<f64> {
        if list.len() != theta.len() || list.len() != self.catalog.list_length() {
            return Err(Error::Dimension("list length does not match the model".into()));
        }
        let x = self.context_index(context)?;
        let mut s = 0.0;
        for (k, &a) in list.items().iter().enumerate() {
            s += theta.as_slice()[k] * self.prob_at(x, self.item_index(a)?, k);
        }
        Ok(s)
    }

    /// The same means expressed as a full item-position matrix.
    pub fn to_ip(&self) -> ClickModelSpec {
        let (n, k) = (self.catalog.num_items(), self.catalog.list_length());
        let matrix = (0..self.catalog.num_contexts())
            .map(|x| {
                (0..n)
                    .flat_map(|a| (0..k).map(move |p| (a, p)))
                    .map(|(a, p)| self.prob_at(x, a, p))
                    .collect()
            })
            .collect();
        ClickModelSpec {
            catalog: Arc::clone(&self.catalog),
            params: Params::Ip { matrix },
        }
    }

    /// Parameter-wise `(1 - t) * self + t * other`. Both models must share
    /// the family and the catalog; the result stays in the family.
    pub fn interpolate(&self, other: &ClickModelSpec, t: f64) -> Result<ClickModelSpec> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("interpolation weight {t} outside [0, 1]")));
        }
        if self.catalog != other.catalog {
            return Err(Error::Config("drift endpoints use different catalogs".into()));
        }
        let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(u, v)| (1.0 - t) * u + t * v).collect()
        };
        let lerp2 = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            a.iter().zip(b).map(|(u, v)| lerp(u, v)).collect()
        };
        let params = match (&self.params, &other.params) {
            (Params::Rcm { rate: a }, Params::Rcm { rate: b }) => Params::Rcm { rate: lerp(a, b) },
            (Params::Rctr { position_rate: a }, Params::Rctr { position_rate: b }) => {
                Params::Rctr {
                    position_rate: lerp2(a, b),
                }
            }
            (Params::Dctr { item_rate: a }, Params::Dctr { item_rate: b }) => Params::Dctr {
                item_rate: lerp2(a, b),
            },
            (
                Params::Pbm {
                    attraction: a1,
                    examination: e1,
                },
                Params::Pbm {
                    attraction: a2,
                    examination: e2,
                },
            ) => Params::Pbm {
                attraction: lerp2(a1, a2),
                examination: lerp2(e1, e2),
            },
            (Params::Ip { matrix: a }, Params::Ip { matrix: b }) => Params::Ip {
                matrix: lerp2(a, b),
            },
            _ => {
                return Err(Error::Config(format!(
                    "cannot interpolate a {} model with a {} model",
                    self.family().name(),
                    other.family().name()
                )))
            }
        };
        Ok(ClickModelSpec {
            catalog: Arc::clone(&self.catalog),
            params,
        })
    }
}

/// Mean click probability of `item` at 1-based `position` in `context`.
pub fn click_prob(
    model: &ClickModelSpec,
    item: ItemId,
    position: usize,
    context: ContextId,
) -> Result<f64> {
    model.click_prob(item, position, context)
}

/// Draws independent Bernoulli clicks for the displayed positions.
pub fn sample_clicks<R: Rng + ?Sized>(
    model: &ClickModelSpec,
    list: &RankedList,
    context: ContextId,
    rng: &mut R,
) -> Result<ClickVector> {
    if list.len() != model.catalog.list_length() {
        return Err(Error::Dimension("list length does not match the model".into()));
    }
    let x = model.context_index(context)?;
    let items = list
        .items()
        .iter()
        .map(|&a| model.item_index(a))
        .collect::<Result<Vec<_>>>()?;
    Ok(sample_indexed(model, x, &items, rng))
}

#[inline]
pub(crate) fn sample_indexed<R: Rng + ?Sized>(
    model: &ClickModelSpec,
    context: usize,
    items: &[usize],
    rng: &mut R,
) -> ClickVector {
    ClickVector::new(
        items
            .iter()
            .enumerate()
            .map(|(k, &a)| rng.gen::<f64>() < model.prob_at(context, a, k))
            .collect(),
    )
}

/// Exact value `E_x[ E_{A ~ policy} [ sum_k theta_k w(a_k, k | x) ] ]`.
///
/// Computed from the policy's item-position marginals, so the cost is linear
/// in the marginal entries rather than in the number of lists. Contexts with
/// zero probability need not be covered by the policy.
pub fn true_value(
    model: &ClickModelSpec,
    policy: &Policy,
    theta: &RewardWeights,
    context_distribution: &[f64],
) -> Result<f64> {
    let catalog = model.catalog();
    if context_distribution.len() != catalog.num_contexts() {
        return Err(Error::Dimension(format!(
            "context distribution has {} entries, catalog {} contexts",
            context_distribution.len(),
            catalog.num_contexts()
        )));
    }
    if theta.len() != catalog.list_length() {
        return Err(Error::Dimension("reward weights do not match the list length".into()));
    }
    let mut total = CompensatedSum::new();
    for (xi, (&x, &px)) in catalog.contexts().iter().zip(context_distribution).enumerate() {
        if px == 0.0 {
            continue;
        }
        total.add(px * context_value(model, policy, theta, xi, x)?);
    }
    Ok(total.value())
}

pub(crate) fn context_value(
    model: &ClickModelSpec,
    policy: &Policy,
    theta: &RewardWeights,
    context_index: usize,
    context: ContextId,
) -> Result<f64> {
    let m = policy.marginals(context)?;
    if m.list_length() != theta.len() {
        return Err(Error::Dimension("policy list length does not match the model".into()));
    }
    let mut s = CompensatedSum::new();
    for (a, row) in m.rows() {
        let ai = model.item_index(a)?;
        for (k, h) in row.iter().enumerate() {
            if *h != 0.0 {
                s.add(theta.as_slice()[k] * model.prob_at(context_index, ai, k) * h);
            }
        }
    }
    Ok(s.value())
}
