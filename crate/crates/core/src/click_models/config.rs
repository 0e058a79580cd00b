//! Plain-text key/value world configuration.
//!
//! ```text
//! # one `key = value` per line; `#` starts a comment
//! family = pbm                 # rcm | rctr | dctr | pbm | ip
//! items = 1,2,3                # or `num_items = 3` for items 0..3
//! positions = 2
//! contexts = 0                 # optional, defaults to a single context 0
//! context_distribution = 1     # optional, defaults to uniform
//! seed = 42                    # optional, defaults to 0
//! attraction.0 = 0.9,0.6,0.3   # one entry per item
//! examination.0 = 1,0.5        # one entry per position
//! ```
//!
//! Per-context parameters are keyed `<name>.<context>`; `<name>.*` applies to
//! every context without an explicit entry. The parameter names are
//!
//! * rcm: `rate` (one value),
//! * rctr: `position_rate` (K values),
//! * dctr: `item_rate` (one per item),
//! * pbm: `attraction` (one per item) and `examination` (K values),
//! * ip: `click_prob.<context>.<item>` (K values per item; `*` allowed for
//!   the context).
//!
//! Any parameter key prefixed with `drift.` describes the end point of a
//! linear drift over the days of a simulated log; parameters not overridden
//! keep their base value.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{ClickModelSpec, SyntheticWorld};
use crate::error::{Error, Result};
use crate::types::{Catalog, ContextId, ItemId};

struct Entry {
    line: usize,
    value: String,
}

pub fn read_world_config(path: impl AsRef<Path>) -> Result<SyntheticWorld> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_world_config(&text, path)
}

pub fn parse_world_config(text: &str, origin: &Path) -> Result<SyntheticWorld> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected `key = value`"))?;
        let key = key.trim().to_string();
        if entries.contains_key(&key) {
            return Err(Error::parse(origin, i + 1, format!("duplicate key `{key}`")));
        }
        entries.insert(
            key,
            Entry {
                line: i + 1,
                value: value.trim().to_string(),
            },
        );
    }
    Parser { origin, entries }.world()
}

struct Parser<'a> {
    origin: &'a Path,
    entries: BTreeMap<String, Entry>,
}

impl Parser<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        Error::parse(self.origin, line, format!("{key}: {}", message.into()))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::parse(self.origin, 0, format!("missing key `{key}`")))
    }

    fn numbers<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.require(key)?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<T>()
                    .map_err(|_| self.err(key, format!("cannot parse `{}`", s.trim())))
            })
            .collect()
    }

    /// Looks up `<prefix><name>.<context>` falling back to `<prefix><name>.*`.
    fn per_context(&self, prefix: &str, name: &str, context: ContextId) -> Option<String> {
        let exact = format!("{prefix}{name}.{context}");
        if self.entries.contains_key(&exact) {
            return Some(exact);
        }
        let any = format!("{prefix}{name}.*");
        self.entries.contains_key(&any).then_some(any)
    }

    fn vector(
        &self,
        prefix: &str,
        name: &str,
        context: ContextId,
        len: usize,
        base: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        match self.per_context(prefix, name, context) {
            Some(key) => {
                let v: Vec<f64> = self.numbers(&key)?;
                if v.len() != len {
                    return Err(self.err(&key, format!("expected {len} values, found {}", v.len())));
                }
                Ok(v)
            }
            None => base.map(<[f64]>::to_vec).ok_or_else(|| {
                Error::parse(
                    self.origin,
                    0,
                    format!("missing key `{prefix}{name}.{context}`"),
                )
            }),
        }
    }

    fn catalog(&self) -> Result<Catalog> {
        let items: Vec<ItemId> = match (self.get("items"), self.get("num_items")) {
            (Some(_), None) => self.numbers("items")?,
            (None, Some(_)) => {
                let n: usize = self.numbers::<usize>("num_items")?[0];
                (0..n as ItemId).collect()
            }
            _ => {
                return Err(Error::parse(
                    self.origin,
                    0,
                    "exactly one of `items` and `num_items` is required",
                ))
            }
        };
        let k: usize = self.numbers::<usize>("positions")?[0];
        let contexts: Vec<ContextId> = match self.get("contexts") {
            Some(_) => self.numbers("contexts")?,
            None => vec![0],
        };
        Catalog::new(items, k, contexts)
    }

    fn model(&self, catalog: &Arc<Catalog>, prefix: &str, base: Option<&Params>) -> Result<Params> {
        let family = self.require("family")?.to_ascii_lowercase();
        let (n, k) = (catalog.num_items(), catalog.list_length());
        let ctx = catalog.contexts();
        let pick = |name: &str, len: usize, base: Option<&Vec<Vec<f64>>>| -> Result<Vec<Vec<f64>>> {
            ctx.iter()
                .enumerate()
                .map(|(xi, &x)| self.vector(prefix, name, x, len, base.map(|b| b[xi].as_slice())))
                .collect()
        };
        let params = match (family.as_str(), base) {
            ("rcm", b) => {
                let b = b.map(|p| p.tables[0].iter().map(|r| vec![r[0]]).collect::<Vec<_>>());
                let rate = pick("rate", 1, b.as_ref())?;
                Params::new(&family, vec![rate])
            }
            ("rctr", b) => Params::new(&family, vec![pick("position_rate", k, b.map(|p| &p.tables[0]))?]),
            ("dctr", b) => Params::new(&family, vec![pick("item_rate", n, b.map(|p| &p.tables[0]))?]),
            ("pbm", b) => Params::new(
                &family,
                vec![
                    pick("attraction", n, b.map(|p| &p.tables[0]))?,
                    pick("examination", k, b.map(|p| &p.tables[1]))?,
                ],
            ),
            ("ip", b) => {
                // One table row per (context, item), K entries each.
                let mut rows = Vec::with_capacity(ctx.len() * n);
                for (xi, &x) in ctx.iter().enumerate() {
                    for (ai, &a) in catalog.items().iter().enumerate() {
                        let exact = format!("{prefix}click_prob.{x}.{a}");
                        let any = format!("{prefix}click_prob.*.{a}");
                        let key = if self.entries.contains_key(&exact) {
                            Some(exact)
                        } else if self.entries.contains_key(&any) {
                            Some(any)
                        } else {
                            None
                        };
                        let row = match (key, b) {
                            (Some(key), _) => {
                                let v: Vec<f64> = self.numbers(&key)?;
                                if v.len() != k {
                                    return Err(self.err(&key, format!("expected {k} values")));
                                }
                                v
                            }
                            (None, Some(b)) => b.tables[0][xi * n + ai].clone(),
                            (None, None) => {
                                return Err(Error::parse(
                                    self.origin,
                                    0,
                                    format!("missing key `{prefix}click_prob.{x}.{a}`"),
                                ))
                            }
                        };
                        rows.push(row);
                    }
                }
                Params::new(&family, vec![rows])
            }
            (other, _) => return Err(self.err("family", format!("unknown click model `{other}`"))),
        };
        Ok(params)
    }

    fn world(self) -> Result<SyntheticWorld> {
        let catalog = Arc::new(self.catalog()?);
        self.check_keys(&catalog)?;
        let base = self.model(&catalog, "", None)?;
        let model = base.build(&catalog)?;
        let contexts = catalog.num_contexts();
        let seed = match self.get("seed") {
            Some(_) => self.numbers::<u64>("seed")?[0],
            None => 0,
        };
        let mut world = match self.get("context_distribution") {
            Some(_) => {
                let d: Vec<f64> = self.numbers("context_distribution")?;
                SyntheticWorld::new(model, d, seed)
            }
            None if contexts > 0 => SyntheticWorld::uniform_contexts(model, seed),
            None => Err(Error::Config("world has no contexts".into())),
        }?;
        if self.entries.keys().any(|k| k.starts_with("drift.")) {
            let target = self.model(&catalog, "drift.", Some(&base))?.build(&catalog)?;
            world = world.with_drift(target)?;
        }
        Ok(world)
    }

    fn check_keys(&self, catalog: &Catalog) -> Result<()> {
        const SCALARS: [&str; 7] = [
            "family",
            "items",
            "num_items",
            "positions",
            "contexts",
            "context_distribution",
            "seed",
        ];
        const PARAMS: [&str; 6] = [
            "rate",
            "position_rate",
            "item_rate",
            "attraction",
            "examination",
            "click_prob",
        ];
        for key in self.entries.keys() {
            if SCALARS.contains(&key.as_str()) {
                continue;
            }
            let stem = key.strip_prefix("drift.").unwrap_or(key);
            let mut parts = stem.split('.');
            let name = parts.next().unwrap_or("");
            let context = parts.next();
            let known_name = PARAMS.contains(&name);
            let known_context = match context {
                Some("*") => true,
                Some(c) => c
                    .parse::<ContextId>()
                    .ok()
                    .is_some_and(|c| catalog.context_index(c).is_some()),
                None => false,
            };
            if !known_name || !known_context {
                return Err(self.err(key, "unknown key"));
            }
        }
        Ok(())
    }
}

/// Family tag plus parameter tables in catalog order.
struct Params {
    family: String,
    tables: Vec<Vec<Vec<f64>>>,
}

impl Params {
    fn new(family: &str, tables: Vec<Vec<Vec<f64>>>) -> Self {
        Self {
            family: family.to_string(),
            tables,
        }
    }

    fn build(&self, catalog: &Arc<Catalog>) -> Result<ClickModelSpec> {
        let c = Arc::clone(catalog);
        match self.family.as_str() {
            "rcm" => ClickModelSpec::rcm(c, self.tables[0].iter().map(|r| r[0]).collect()),
            "rctr" => ClickModelSpec::rctr(c, self.tables[0].clone()),
            "dctr" => ClickModelSpec::dctr(c, self.tables[0].clone()),
            "pbm" => ClickModelSpec::pbm(c, self.tables[0].clone(), self.tables[1].clone()),
            "ip" => {
                let n = catalog.num_items();
                let blocks = self.tables[0].chunks(n).map(<[Vec<f64>]>::to_vec).collect();
                ClickModelSpec::ip(c, blocks)
            }
            other => Err(Error::Config(format!("unknown click model `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::click_models::ClickModelFamily;

    fn parse(text: &str) -> Result<SyntheticWorld> {
        parse_world_config(text, Path::new("world.cfg"))
    }

    #[test]
    fn parses_pbm_world() {
        let w = parse(
            "family = pbm\nitems = 1,2,3\npositions = 2\nseed = 9 # comment\n\
             attraction.0 = 0.9,0.6,0.3\nexamination.0 = 1,0.5\n",
        )
        .unwrap();
        assert_eq!(w.model().family(), ClickModelFamily::Pbm);
        assert_eq!(w.seed(), 9);
        assert_eq!(w.context_distribution(), &[1.0]);
        assert!((w.model().click_prob(2, 2, 0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn wildcard_contexts_and_distribution() {
        let w = parse(
            "family = dctr\nnum_items = 3\npositions = 2\ncontexts = 4,7\n\
             context_distribution = 0.25,0.75\nitem_rate.* = 0.1,0.2,0.3\nitem_rate.7 = 0.5,0.5,0.5\n",
        )
        .unwrap();
        assert_eq!(w.model().click_prob(1, 1, 4).unwrap(), 0.2);
        assert_eq!(w.model().click_prob(1, 1, 7).unwrap(), 0.5);
        assert_eq!(w.context_distribution(), &[0.25, 0.75]);
    }

    #[test]
    fn ip_and_rcm_and_rctr_worlds() {
        let ip = parse(
            "family = ip\nitems = 5,6\npositions = 2\nclick_prob.0.5 = 0.1,0.2\nclick_prob.*.6 = 0.3,0.4\n",
        )
        .unwrap();
        assert_eq!(ip.model().click_prob(6, 2, 0).unwrap(), 0.4);
        let rcm = parse("family = rcm\nnum_items = 2\npositions = 1\nrate.0 = 0.25\n").unwrap();
        assert_eq!(rcm.model().click_prob(1, 1, 0).unwrap(), 0.25);
        let rctr = parse("family = rctr\nnum_items = 2\npositions = 2\nposition_rate.* = 0.5,0.1\n").unwrap();
        assert_eq!(rctr.model().click_prob(0, 2, 0).unwrap(), 0.1);
    }

    #[test]
    fn drift_overrides_selected_parameters() {
        let w = parse(
            "family = pbm\nnum_items = 2\npositions = 2\nattraction.0 = 0.8,0.2\n\
             examination.0 = 1,0.5\ndrift.attraction.0 = 0.2,0.8\n",
        )
        .unwrap();
        let end = w.model_for_day(3, 3).unwrap();
        assert_eq!(end.click_prob(0, 1, 0).unwrap(), 0.2);
        assert_eq!(end.click_prob(1, 2, 0).unwrap(), 0.4);
    }

    #[test]
    fn reports_errors_with_location() {
        let missing = parse("family = pbm\nnum_items = 2\npositions = 2\nattraction.0 = 0.8,0.2\n");
        assert!(matches!(missing, Err(Error::Parse { .. })));
        let bad = parse("family = dctr\nnum_items = 2\npositions = 2\nitem_rate.0 = 0.8,x\n").unwrap_err();
        assert!(matches!(bad, Error::Parse { line: 4, .. }), "{bad}");
        let unknown = parse("family = dctr\nnum_items = 2\npositions = 2\nitem_rate.0 = 0.8,0.1\nspeed = 3\n");
        assert!(matches!(unknown, Err(Error::Parse { line: 5, .. })));
        let length = parse("family = dctr\nnum_items = 2\npositions = 2\nitem_rate.0 = 0.8\n");
        assert!(length.is_err());
        let prob = parse("family = dctr\nnum_items = 2\npositions = 2\nitem_rate.0 = 0.8,1.2\n");
        assert!(matches!(prob, Err(Error::Domain(_))));
        assert!(parse("family = cascade\nnum_items = 2\npositions = 2\n").is_err());
        assert!(parse("no equals sign\n").is_err());
    }
}
