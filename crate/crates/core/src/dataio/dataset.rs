use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use image::{GrayImage, RgbaImage};

use super::record::{read_records, write_records, PlacementRecord};
use crate::error::{Error, Result};
use crate::raster::{load_gray, load_rgba, luminance_contrast_mask, save_sticker, Sticker};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SPLITS_FILE: &str = "splits.tsv";

/// Path of the host foreground mask that sits next to a host image:
/// `images/host_000001.png` → `images/host_000001_fg.png`.
pub fn fg_mask_ref(host_ref: &str) -> String {
    match host_ref.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_fg.{ext}"),
        None => format!("{host_ref}_fg"),
    }
}

/// Records plus the decoded rasters they reference, keyed by their refs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<PlacementRecord>,
    hosts: BTreeMap<String, RgbaImage>,
    fg_masks: BTreeMap<String, GrayImage>,
    stickers: BTreeMap<String, Sticker>,
}

impl Dataset {
    pub fn from_parts(
        records: Vec<PlacementRecord>,
        hosts: BTreeMap<String, RgbaImage>,
        fg_masks: BTreeMap<String, GrayImage>,
        stickers: BTreeMap<String, Sticker>,
    ) -> Result<Self> {
        for r in &records {
            r.validate()?;
            if !hosts.contains_key(&r.host_ref) {
                return Err(Error::data(format!("record {}: missing host {}", r.record_id, r.host_ref)));
            }
            if !stickers.contains_key(&r.sticker_ref) {
                return Err(Error::data(format!("record {}: missing sticker {}", r.record_id, r.sticker_ref)));
            }
            let mask = fg_masks
                .get(&r.host_ref)
                .ok_or_else(|| Error::data(format!("record {}: missing foreground mask", r.record_id)))?;
            if mask.dimensions() != hosts[&r.host_ref].dimensions() {
                return Err(Error::data(format!("record {}: mask and host sizes differ", r.record_id)));
            }
        }
        Ok(Dataset {
            records,
            hosts,
            fg_masks,
            stickers,
        })
    }

    pub fn host(&self, r: &PlacementRecord) -> Result<&RgbaImage> {
        self.hosts
            .get(&r.host_ref)
            .ok_or_else(|| Error::data(format!("unknown host {}", r.host_ref)))
    }

    pub fn fg_mask(&self, r: &PlacementRecord) -> Result<&GrayImage> {
        self.fg_masks
            .get(&r.host_ref)
            .ok_or_else(|| Error::data(format!("no foreground mask for {}", r.host_ref)))
    }

    pub fn sticker(&self, r: &PlacementRecord) -> Result<&Sticker> {
        self.stickers
            .get(&r.sticker_ref)
            .ok_or_else(|| Error::data(format!("unknown sticker {}", r.sticker_ref)))
    }

    /// Writes `records.jsonl` and every referenced image under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let write_image = |rel: &str, save: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            save(&path)
        };
        for (rel, img) in &self.hosts {
            write_image(rel, &|p| Ok(img.save(p)?))?;
        }
        for (host_rel, mask) in &self.fg_masks {
            write_image(&fg_mask_ref(host_rel), &|p| Ok(mask.save(p)?))?;
        }
        for (rel, st) in &self.stickers {
            write_image(rel, &|p| save_sticker(st, p))?;
        }
        let mut w = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
        write_records(&self.records, &mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Loads `records.jsonl` and the images it references. Hosts without a
    /// stored foreground mask get a luminance-contrast estimate.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RECORDS_FILE);
        let file = File::open(&path).map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
        let records = read_records(BufReader::new(file))?;
        let mut hosts = BTreeMap::new();
        let mut fg_masks = BTreeMap::new();
        let mut stickers = BTreeMap::new();
        for r in &records {
            if !hosts.contains_key(&r.host_ref) {
                let (img, _) = load_rgba(&dir.join(&r.host_ref))?;
                let mask_path = dir.join(fg_mask_ref(&r.host_ref));
                let mask = if mask_path.exists() {
                    load_gray(&mask_path)?
                } else {
                    luminance_contrast_mask(&img)
                };
                fg_masks.insert(r.host_ref.clone(), mask);
                hosts.insert(r.host_ref.clone(), img);
            }
            if !stickers.contains_key(&r.sticker_ref) {
                let (img, has_alpha) = load_rgba(&dir.join(&r.sticker_ref))?;
                stickers.insert(r.sticker_ref.clone(), Sticker::new(img, has_alpha)?);
            }
        }
        Dataset::from_parts(records, hosts, fg_masks, stickers)
    }

    /// Subset with only the given records (images are shared by clone).
    pub fn subset<'a>(&self, records: impl IntoIterator<Item = &'a PlacementRecord>) -> Dataset {
        Dataset {
            records: records.into_iter().cloned().collect(),
            hosts: self.hosts.clone(),
            fg_masks: self.fg_masks.clone(),
            stickers: self.stickers.clone(),
        }
    }
}
