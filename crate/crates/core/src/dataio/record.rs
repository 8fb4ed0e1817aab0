use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

use super::stable_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleLabel {
    Filter,
    Sticker,
    Unknown,
}

/// One composition action: which sticker went onto which host, where, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub record_id: String,
    pub sticker_id: String,
    pub host_ref: String,
    pub sticker_ref: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub opacity: f64,
    /// Stored for completeness; never applied.
    pub rotation_deg: f64,
    pub mask_ref: Option<String>,
    pub style_label: StyleLabel,
}

impl PlacementRecord {
    pub fn validate(&self) -> Result<()> {
        self.bbox()?;
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::data(format!(
                "record {}: opacity {} outside [0, 1]",
                self.record_id, self.opacity
            )));
        }
        if !self.rotation_deg.is_finite() {
            return Err(Error::data(format!("record {}: non-finite rotation", self.record_id)));
        }
        Ok(())
    }

    pub fn bbox(&self) -> Result<BBox> {
        BBox::new(self.x, self.y, self.w, self.h)
            .map_err(|e| Error::data(format!("record {}: {e}", self.record_id)))
    }

    /// Box area over host area.
    pub fn coverage(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_filter(&self) -> bool {
        self.style_label == StyleLabel::Filter
    }

    /// Filter-style records carry no placement supervision.
    pub fn usable_for_placement(&self) -> bool {
        self.style_label != StyleLabel::Filter
    }

    pub fn use_mask(&self) -> bool {
        self.mask_ref.is_some()
    }

    pub fn reduced_opacity(&self) -> bool {
        self.opacity < 1.0
    }
}

/// Writes one JSON object per line.
pub fn write_records(records: &[PlacementRecord], w: &mut impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses line-delimited records, skipping blank lines. Errors name the line.
pub fn read_records(r: impl BufRead) -> Result<Vec<PlacementRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PlacementRecord =
            serde_json::from_str(&line).map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

/// Stickers that cover more than half the host in at least half of their uses.
pub fn label_filter_candidates(usages: &BTreeMap<String, Vec<f64>>) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for (sticker, coverages) in usages {
        if coverages.is_empty() {
            return Err(Error::input(format!("sticker {sticker} has no recorded usages")));
        }
        let large = coverages.iter().filter(|&&c| c > 0.5).count();
        if 2 * large >= coverages.len() {
            out.insert(sticker.clone());
        }
    }
    Ok(out)
}

/// Groups per-record coverage by sticker.
pub fn coverage_by_sticker(records: &[PlacementRecord]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        out.entry(r.sticker_id.clone()).or_default().push(r.coverage());
    }
    out
}

/// Keeps at most `cap` records per sticker, chosen uniformly without
/// replacement. Surviving records keep their original order.
pub fn sample_cap(records: &[PlacementRecord], cap: usize, seed: u64) -> Vec<PlacementRecord> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.sticker_id.as_str()).or_default().push(i);
    }
    let mut keep = vec![false; records.len()];
    for (sticker, idx) in groups {
        if idx.len() <= cap {
            idx.iter().for_each(|&i| keep[i] = true);
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, sticker));
            for k in sample(&mut rng, idx.len(), cap) {
                keep[idx[k]] = true;
            }
        }
    }
    records
        .iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then(|| r.clone()))
        .collect()
}
