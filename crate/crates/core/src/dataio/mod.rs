//! Dataset records, sticker-level splits, the filter-candidate heuristic and
//! the synthetic scene generator.

mod dataset;
mod record;
mod split;
mod synth;

pub use dataset::{fg_mask_ref, Dataset, RECORDS_FILE, SPLITS_FILE};
pub use record::{
    coverage_by_sticker, label_filter_candidates, read_records, sample_cap, write_records, PlacementRecord,
    StyleLabel,
};
pub use split::{split_by_sticker, Split, SplitManifest, TRAIN_FRACTION, VAL_FRACTION};
pub use synth::{mask_centroid, sticker_id, synth_generate, synth_generate_with, SynthConfig};

/// Seeded 64-bit hash that is stable across platforms and toolchains
/// (FNV-1a followed by a SplitMix64 finalizer).
pub fn stable_hash(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(key.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}
