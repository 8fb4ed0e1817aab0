use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::record::PlacementRecord;
use super::stable_hash;
use crate::error::{Error, Result};

pub const TRAIN_FRACTION: f64 = 0.90;
pub const VAL_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::data(format!("unknown split `{other}`"))),
        }
    }
}

/// Sticker-level split assignment. Each sticker lives in exactly one split.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitManifest {
    assignments: BTreeMap<String, Split>,
}

impl SplitManifest {
    pub fn get(&self, sticker_id: &str) -> Option<Split> {
        self.assignments.get(sticker_id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn stickers(&self, split: Split) -> BTreeSet<&str> {
        self.assignments
            .iter()
            .filter(|(_, &s)| s == split)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Split)> {
        self.assignments.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Records whose sticker is assigned to `split`.
    pub fn filter<'a>(&self, records: &'a [PlacementRecord], split: Split) -> Vec<&'a PlacementRecord> {
        records
            .iter()
            .filter(|r| self.get(&r.sticker_id) == Some(split))
            .collect()
    }

    /// Two-column text: `sticker_id<TAB>split`, sorted by sticker id.
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        for (id, split) in &self.assignments {
            writeln!(w, "{id}\t{split}")?;
        }
        Ok(())
    }

    pub fn read(r: impl BufRead) -> Result<Self> {
        let mut assignments = BTreeMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, split) = line
                .split_once('\t')
                .ok_or_else(|| Error::data(format!("split line {}: expected two tab-separated columns", i + 1)))?;
            let split: Split = split.trim().parse()?;
            if assignments.insert(id.to_string(), split).is_some() {
                return Err(Error::data(format!("split line {}: sticker {id} listed twice", i + 1)));
            }
        }
        Ok(SplitManifest { assignments })
    }
}

/// Assigns whole stickers to train/val/test at 90/5/5.
///
/// Stickers are ordered by a seeded hash of their id and cut at exact
/// quantiles, so the result depends only on the set of ids and the seed.
pub fn split_by_sticker(records: &[PlacementRecord], seed: u64) -> Result<SplitManifest> {
    let ids: BTreeSet<&str> = records.iter().map(|r| r.sticker_id.as_str()).collect();
    let n = ids.len();
    if n < 3 {
        return Err(Error::input(format!(
            "need at least 3 distinct stickers to fill three splits, found {n}"
        )));
    }
    let mut order: Vec<(u64, &str)> = ids.into_iter().map(|id| (stable_hash(seed, id), id)).collect();
    order.sort_unstable();

    let n_val = ((n as f64 * VAL_FRACTION).round() as usize).max(1);
    let n_test = ((n as f64 * (1.0 - TRAIN_FRACTION - VAL_FRACTION)).round() as usize).max(1);
    let n_train = n - n_val - n_test;

    let assignments = order
        .into_iter()
        .enumerate()
        .map(|(i, (_, id))| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (id.to_string(), split)
        })
        .collect();
    Ok(SplitManifest { assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::record::StyleLabel;

    fn records(stickers: usize, per: usize) -> Vec<PlacementRecord> {
        (0..stickers * per)
            .map(|i| PlacementRecord {
                record_id: format!("r{i}"),
                sticker_id: format!("s{:05}", i % stickers),
                host_ref: String::new(),
                sticker_ref: String::new(),
                x: 0.0,
                y: 0.0,
                w: 0.5,
                h: 0.5,
                opacity: 1.0,
                rotation_deg: 0.0,
                mask_ref: None,
                style_label: StyleLabel::Sticker,
            })
            .collect()
    }

    #[test]
    fn thousand_stickers() {
        let m = split_by_sticker(&records(1000, 2), 7).unwrap();
        let train = m.stickers(Split::Train).len();
        assert!((880..=920).contains(&train), "{train}");
        assert_eq!(m.stickers(Split::Val).len(), 50);
        assert_eq!(m.stickers(Split::Test).len(), 50);
        assert_eq!(m, split_by_sticker(&records(1000, 2), 7).unwrap());
        assert_ne!(m, split_by_sticker(&records(1000, 2), 8).unwrap());
    }

    #[test]
    fn small_sets() {
        assert!(split_by_sticker(&records(2, 5), 0).is_err());
        let m = split_by_sticker(&records(20, 1), 0).unwrap();
        assert_eq!(m.stickers(Split::Train).len(), 18);
        let m = split_by_sticker(&records(3, 1), 0).unwrap();
        assert_eq!(m.stickers(Split::Val).len(), 1);
        assert_eq!(m.stickers(Split::Test).len(), 1);
    }

    #[test]
    fn tsv_round_trip() {
        let m = split_by_sticker(&records(40, 1), 1).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).lines().all(|l| l.split('\t').count() == 2));
        assert_eq!(SplitManifest::read(buf.as_slice()).unwrap(), m);
        assert!(SplitManifest::read(&b"a\ttrain\na\ttest\n"[..]).is_err());
        assert!(SplitManifest::read(&b"a\tholdout\n"[..]).is_err());
    }
}
