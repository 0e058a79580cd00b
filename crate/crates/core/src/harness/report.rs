//! RMSE aggregation and the tab-separated report formats.
//!
//! Reports print every real number with six decimals, so identical inputs
//! give byte-identical files on every platform.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::lodo::DayResult;
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;
use crate::types::{Clip, EstimatorConfig, EstimatorFamily, QueryId};

/// `sqrt(mean((estimate - reference)^2))` over the usable days.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    rmse_multi_query(&[pairs])
}

/// Pooled RMSE over queries: squared errors of every (query, day) pair are
/// averaged together, so queries weigh by their number of usable days.
pub fn rmse_multi_query<P: AsRef<[(f64, f64)]>>(per_query: &[P]) -> Result<f64> {
    let mut sum = CompensatedSum::new();
    let mut count = 0usize;
    for q in per_query {
        for (est, reference) in q.as_ref() {
            let e = est - reference;
            sum.add(e * e);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedRmse);
    }
    Ok((sum.value() / count as f64).sqrt())
}

/// Leave-one-day-out results of one estimator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub config: EstimatorConfig,
    /// Ordered by (query, day).
    pub rows: Vec<DayResult>,
    /// (query, RMSE, usable days).
    pub per_query: Vec<(QueryId, f64, usize)>,
    pub aggregate_rmse: f64,
    /// (query, day) pairs without evaluation or production records.
    pub skipped: Vec<(QueryId, u32)>,
}

impl EvaluationReport {
    pub fn new(config: EstimatorConfig, mut rows: Vec<DayResult>, mut skipped: Vec<(QueryId, u32)>) -> Result<Self> {
        rows.sort_by_key(|r| (r.query, r.day));
        skipped.sort_unstable();
        let mut grouped: BTreeMap<QueryId, Vec<(f64, f64)>> = BTreeMap::new();
        for r in &rows {
            grouped.entry(r.query).or_default().push((r.estimate, r.reference));
        }
        let per_query = grouped
            .iter()
            .map(|(q, pairs)| Ok((*q, rmse(pairs)?, pairs.len())))
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<&Vec<(f64, f64)>> = grouped.values().collect();
        let aggregate_rmse = rmse_multi_query(&pairs)?;
        Ok(Self {
            config,
            rows,
            per_query,
            aggregate_rmse,
            skipped,
        })
    }

    pub fn mean_clipped_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let s: CompensatedSum = self.rows.iter().map(|r| r.clipped_fraction).collect();
        s.value() / self.rows.len() as f64
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "# estimator\t{}", c.family());
        let _ = writeln!(s, "# clip\t{}", c.clip());
        let _ = writeln!(s, "# theta\t{}", join(c.theta().as_slice()));
        if let Some(p) = c.examination() {
            let _ = writeln!(s, "# examination\t{}", join(p));
        }
        let _ = writeln!(s, "query\tday\testimate\treference\terror\tclipped_fraction\tproduction_records\tevaluation_records");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
                r.query,
                r.day,
                r.estimate,
                r.reference,
                r.error(),
                r.clipped_fraction,
                r.production_records,
                r.evaluation_records
            );
        }
        for (q, v, days) in &self.per_query {
            let _ = writeln!(s, "# rmse\tquery {q}\t{v:.6}\t{days} days");
        }
        let _ = writeln!(s, "# aggregate_rmse\t{:.6}", self.aggregate_rmse);
        let _ = writeln!(s, "# mean_clipped_fraction\t{:.6}", self.mean_clipped_fraction());
        if !self.skipped.is_empty() {
            let days: Vec<String> = self.skipped.iter().map(|(q, d)| format!("{q}:{d}")).collect();
            let _ = writeln!(s, "# skipped\t{}", days.join(","));
        }
        s
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub family: EstimatorFamily,
    pub clip: Clip,
    pub rmse: f64,
    pub clipped_fraction: f64,
    pub days: usize,
}

/// One row per (family, M), ready for plotting RMSE against M.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn get(&self, family: EstimatorFamily, clip: Clip) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.family == family && r.clip == clip)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("family\tM\trmse\tclipped_fraction\tdays\n");
        for r in &self.rows {
            let m = if r.clip.is_infinite() {
                "inf".to_string()
            } else {
                format!("{:.6}", r.clip.value())
            };
            let _ = writeln!(s, "{}\t{m}\t{:.6}\t{:.6}\t{}", r.family, r.rmse, r.clipped_fraction, r.days);
        }
        s
    }
}
