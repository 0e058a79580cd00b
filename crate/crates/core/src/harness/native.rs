//! The native log format: one record per line,
//! `day<TAB>query<TAB>context<TAB>item_1,...,item_K<TAB>click_1,...,click_K`.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::policies::parse_list;
use crate::types::{Catalog, ClickVector, LoggedDataset, LoggedRecord};

pub fn parse_native(path: impl AsRef<Path>) -> Result<LoggedDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_native_str(&text, path)
}

/// Parses native-format text; `origin` only labels error messages.
pub fn parse_native_str(text: &str, origin: &Path) -> Result<LoggedDataset> {
    let mut records = Vec::new();
    let mut list_length = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::parse(origin, line_no, msg);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let day: u32 = fields[0].trim().parse().map_err(|_| err(format!("bad day `{}`", fields[0])))?;
        if day == 0 {
            return Err(err("days are numbered from 1".into()));
        }
        let query = fields[1].trim().parse().map_err(|_| err(format!("bad query id `{}`", fields[1])))?;
        let context = fields[2]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad context id `{}`", fields[2])))?;
        let list = parse_list(fields[3]).map_err(err)?;
        if !list.is_permutation() {
            return Err(err(format!("list {list} repeats an item")));
        }
        let clicks = fields[4]
            .split(',')
            .map(|c| match c.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(err(format!("bad click flag `{other}`"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        if clicks.len() != list.len() {
            return Err(err(format!(
                "{} click flags for {} items",
                clicks.len(),
                list.len()
            )));
        }
        match list_length {
            None => list_length = Some(list.len()),
            Some(k) if k != list.len() => {
                return Err(Error::Format(format!(
                    "{}:{line_no}: list has {} items but earlier lines have {k}",
                    origin.display(),
                    list.len()
                )))
            }
            _ => {}
        }
        records.push(LoggedRecord {
            query,
            context,
            day,
            list,
            clicks: ClickVector::new(clicks),
        });
    }
    let Some(k) = list_length else {
        return Err(Error::EmptyDataset);
    };
    let items: BTreeSet<_> = records.iter().flat_map(|r| r.list.items().iter().copied()).collect();
    let contexts: BTreeSet<_> = records.iter().map(|r| r.context).collect();
    let catalog = Catalog::new(items.into_iter().collect(), k, contexts.into_iter().collect())?;
    LoggedDataset::new(catalog, records)
}

pub fn to_native_string(dataset: &LoggedDataset) -> String {
    let mut s = String::with_capacity(dataset.len() * 32);
    for r in dataset.records() {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.day, r.query, r.context, r.list, r.clicks);
    }
    s
}

pub fn write_native(dataset: &LoggedDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_native_string(dataset)).map_err(|e| Error::io(path, e))
}
