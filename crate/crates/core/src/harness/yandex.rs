//! Reader for session logs in the layout of the Yandex relevance-prediction
//! challenge. Tab-separated lines, grouped by session:
//!
//! ```text
//! SessionID  M  Day  UserID                                   (metadata)
//! SessionID  TimePassed  Q|T  SERPID  QueryID  terms  URL,Domain ...  (query)
//! SessionID  TimePassed  C  SERPID  URLID                      (click)
//! ```
//!
//! Every query action becomes one record holding the first `K` shown URLs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Catalog, ClickVector, ItemId, LoggedDataset, LoggedRecord, QueryId, RankedList};

/// Counts gathered while reading a session log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct YandexStats {
    pub sessions: usize,
    /// Sessions dropped for missing metadata, malformed lines, or a result
    /// page with fewer than `K` distinct URLs.
    pub sessions_skipped: usize,
    pub records: usize,
    pub clicks_kept: usize,
    /// Clicks on URLs shown below position `K`.
    pub clicks_outside_prefix: usize,
    /// Clicks naming a result page or URL the session never showed.
    pub unmatched_clicks: usize,
}

struct Serp {
    id: u64,
    query: QueryId,
    urls: Vec<ItemId>,
    clicks: Vec<bool>,
}

#[derive(Default)]
struct Session {
    id: Option<u64>,
    day: Option<u32>,
    serps: Vec<Serp>,
    broken: bool,
    outside: usize,
    unmatched: usize,
}

pub fn parse_yandex(path: impl AsRef<Path>, k: usize) -> Result<(LoggedDataset, YandexStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_yandex_reader(BufReader::new(file), k, path)
}

/// [`parse_yandex`] over any reader; `origin` only labels errors.
pub fn parse_yandex_reader(reader: impl BufRead, k: usize, origin: &Path) -> Result<(LoggedDataset, YandexStats)> {
    if k == 0 {
        return Err(Error::Domain("must keep at least one position".into()));
    }
    let mut stats = YandexStats::default();
    let mut records = Vec::new();
    let mut session = Session::default();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let Ok(sid) = fields[0].parse::<u64>() else {
            session.broken = true;
            continue;
        };
        if session.id != Some(sid) {
            flush(&mut session, k, &mut records, &mut stats);
            session.id = Some(sid);
        }
        if !read_action(&mut session, &fields, k) {
            session.broken = true;
        }
    }
    flush(&mut session, k, &mut records, &mut stats);
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let items: BTreeSet<ItemId> = records.iter().flat_map(|r: &LoggedRecord| r.list.items().iter().copied()).collect();
    let catalog = Catalog::new(items.into_iter().collect(), k, vec![0])?;
    Ok((LoggedDataset::new(catalog, records)?, stats))
}

/// Applies one line to the session; false when the line is malformed.
fn read_action(session: &mut Session, fields: &[&str], k: usize) -> bool {
    if fields.get(1) == Some(&"M") {
        if fields.len() < 3 {
            return false;
        }
        return match fields[2].parse::<u32>() {
            Ok(day) if day > 0 => {
                session.day = Some(day);
                true
            }
            _ => false,
        };
    }
    match fields.get(2) {
        Some(&"Q") | Some(&"T") => {
            if fields.len() < 6 {
                return false;
            }
            let (Ok(serp), Ok(query)) = (fields[3].parse::<u64>(), fields[4].parse::<QueryId>()) else {
                return false;
            };
            let mut urls = Vec::with_capacity(fields.len() - 6);
            for f in &fields[6..] {
                match f.split(',').next().and_then(|u| u.parse::<ItemId>().ok()) {
                    Some(u) => urls.push(u),
                    None => return false,
                }
            }
            let prefix: BTreeSet<_> = urls.iter().take(k).collect();
            if urls.len() < k || prefix.len() < k {
                return false;
            }
            session.serps.push(Serp {
                id: serp,
                query,
                urls,
                clicks: vec![false; k],
            });
            true
        }
        Some(&"C") => {
            if fields.len() < 5 {
                return false;
            }
            let (Ok(serp), Ok(url)) = (fields[3].parse::<u64>(), fields[4].parse::<ItemId>()) else {
                return false;
            };
            // The most recent page with this id, which is the one clicked.
            let pos = session
                .serps
                .iter_mut()
                .rev()
                .find(|s| s.id == serp)
                .and_then(|s| s.urls.iter().position(|&u| u == url).map(|p| (s, p)));
            match pos {
                Some((s, p)) if p < k => s.clicks[p] = true,
                Some(_) => session.outside += 1,
                None => session.unmatched += 1,
            }
            true
        }
        _ => false,
    }
}

fn flush(session: &mut Session, k: usize, records: &mut Vec<LoggedRecord>, stats: &mut YandexStats) {
    let s = std::mem::take(session);
    if s.id.is_none() && s.serps.is_empty() && !s.broken {
        return;
    }
    stats.sessions += 1;
    let Some(day) = s.day.filter(|_| !s.broken) else {
        stats.sessions_skipped += 1;
        return;
    };
    stats.clicks_outside_prefix += s.outside;
    stats.unmatched_clicks += s.unmatched;
    for serp in s.serps {
        stats.records += 1;
        stats.clicks_kept += serp.clicks.iter().filter(|&&c| c).count();
        records.push(LoggedRecord {
            query: serp.query,
            context: 0,
            day,
            list: RankedList::new(serp.urls[..k].to_vec()),
            clicks: ClickVector::new(serp.clicks),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn serp_line(session: u64, serp: u64, query: u64, urls: std::ops::RangeInclusive<u64>) -> String {
        let mut s = format!("{session}\t0\tQ\t{serp}\t{query}\t5,6");
        for u in urls {
            s.push_str(&format!("\t{u},{}", u + 1000));
        }
        s
    }

    fn parse(text: &str, k: usize) -> Result<(LoggedDataset, YandexStats)> {
        parse_yandex_reader(text.as_bytes(), k, Path::new("log"))
    }

    #[test]
    fn click_on_first_url() {
        let text = format!("1\tM\t4\t99\n{}\n1\t10\tC\t0\t11\n", serp_line(1, 0, 3, 11..=20));
        let (d, stats) = parse(&text, 3).unwrap();
        assert_eq!(d.len(), 1);
        let r = &d.records()[0];
        assert_eq!((r.day, r.query), (4, 3));
        assert_eq!(r.list.items(), &[11, 12, 13]);
        assert_eq!(r.clicks.flags(), &[true, false, false]);
        assert_eq!(stats.clicks_kept, 1);
    }

    #[test]
    fn click_below_prefix_is_dropped() {
        let text = format!("1\tM\t4\t99\n{}\n1\t10\tC\t0\t15\n", serp_line(1, 0, 3, 11..=20));
        let (d, stats) = parse(&text, 3).unwrap();
        assert_eq!(d.records()[0].clicks.flags(), &[false, false, false]);
        assert_eq!(stats.clicks_outside_prefix, 1);
    }

    #[test]
    fn unmatched_and_truncated() {
        let text = format!(
            "1\tM\t4\t99\n{}\n1\t10\tC\t0\t77\n1\t11\tC\t9\t11\n2\tM\t5\t98\n{}\n3\tM\t5\t97\n3\t0\tQ\n",
            serp_line(1, 0, 3, 11..=20),
            serp_line(2, 0, 3, 11..=12),
        );
        let (d, stats) = parse(&text, 3).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(stats.unmatched_clicks, 2);
        assert_eq!(stats.sessions, 3);
        assert_eq!(stats.sessions_skipped, 2);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(parse("", 3), Err(Error::EmptyDataset)));
    }
}
