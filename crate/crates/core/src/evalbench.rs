//! Placement baselines and DIoU evaluation.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{stable_hash, Dataset, PlacementRecord};
use crate::error::{Error, Result};
use crate::geometry::{diou, BBox};

/// Normalized box with `w·h = area` whose pixel aspect on the host is `aspect`.
fn box_with_aspect(host_dims: (u32, u32), aspect: f64, area: f64, cx: f64, cy: f64) -> BBox {
    let (hw, hh) = (host_dims.0 as f64, host_dims.1 as f64);
    let r = aspect * hh / hw;
    let w = (area * r).sqrt();
    let h = (area / r).sqrt();
    BBox {
        x: cx - w / 2.0,
        y: cy - h / 2.0,
        w,
        h,
    }
}

fn check_dims(name: &str, dims: (u32, u32)) -> Result<()> {
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Error::input(format!("{name} dimensions must be positive, got {dims:?}")));
    }
    Ok(())
}

/// Centered box covering a ninth of the host at the sticker's aspect.
pub fn baseline_center(host_dims: (u32, u32), sticker_dims: (u32, u32)) -> Result<BBox> {
    check_dims("host", host_dims)?;
    check_dims("sticker", sticker_dims)?;
    let aspect = sticker_dims.0 as f64 / sticker_dims.1 as f64;
    Ok(box_with_aspect(host_dims, aspect, 1.0 / 9.0, 0.5, 0.5))
}

/// Random box: aspect is the sticker's times U[0.5, 2], area U[1/25, 1],
/// center uniform over the host.
pub fn baseline_random(host_dims: (u32, u32), sticker_dims: (u32, u32), seed: u64) -> Result<BBox> {
    check_dims("host", host_dims)?;
    check_dims("sticker", sticker_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let multiplier = rng.random_range(0.5..=2.0);
    let area = rng.random_range(1.0 / 25.0..=1.0);
    let cx = rng.random_range(0.0..=1.0);
    let cy = rng.random_range(0.0..=1.0);
    let aspect = sticker_dims.0 as f64 / sticker_dims.1 as f64 * multiplier;
    Ok(box_with_aspect(host_dims, aspect, area, cx, cy))
}

/// What a placement method sees for one test record.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase {
    pub record_id: String,
    pub host_dims: (u32, u32),
    pub sticker_dims: (u32, u32),
    pub gt: BBox,
}

/// Sticker-style records of `records` as evaluation cases.
pub fn eval_cases(dataset: &Dataset, records: &[&PlacementRecord]) -> Result<Vec<EvalCase>> {
    records
        .iter()
        .filter(|r| r.usable_for_placement())
        .map(|r| {
            Ok(EvalCase {
                record_id: r.record_id.clone(),
                host_dims: dataset.host(r)?.dimensions(),
                sticker_dims: dataset.sticker(r)?.image.dimensions(),
                gt: r.bbox()?,
            })
        })
        .collect()
}

/// A named placement function.
pub struct Method<'a> {
    pub name: String,
    pub place: Box<dyn Fn(&EvalCase) -> Result<BBox> + 'a>,
}

impl<'a> Method<'a> {
    pub fn new(name: impl Into<String>, place: impl Fn(&EvalCase) -> Result<BBox> + 'a) -> Self {
        Method {
            name: name.into(),
            place: Box::new(place),
        }
    }

    pub fn center() -> Self {
        Method::new("center", |c| baseline_center(c.host_dims, c.sticker_dims))
    }

    /// Random baseline seeded per record, so scores do not depend on order.
    pub fn random(seed: u64) -> Self {
        Method::new("random", move |c| {
            baseline_random(c.host_dims, c.sticker_dims, stable_hash(seed, &c.record_id))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub record_id: String,
    pub diou: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub mean_diou: f64,
    pub median_diou: f64,
    pub count: usize,
    pub failures: usize,
    pub scores: Vec<RecordScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub methods: Vec<MethodReport>,
}

/// Score assigned when a method fails on a record.
pub const FAILURE_SCORE: f64 = -1.0;

/// Hex digest identifying the configuration an evaluation ran under.
pub fn fingerprint(config_text: &str) -> String {
    format!("{:016x}", stable_hash(0, config_text))
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// DIoU of every method on every case. Failures and non-finite boxes score
/// [`FAILURE_SCORE`] with a note.
pub fn evaluate(methods: &[Method<'_>], cases: &[EvalCase], fingerprint: &str) -> Result<EvalReport> {
    if cases.is_empty() {
        return Err(Error::input("evaluation needs a non-empty test set"));
    }
    let mut reports = Vec::with_capacity(methods.len());
    for m in methods {
        let scores: Vec<RecordScore> = cases
            .iter()
            .map(|c| {
                let (diou, note) = match (m.place)(c) {
                    Ok(b) if b.as_array().iter().all(|v| v.is_finite()) => (diou(&b, &c.gt), None),
                    Ok(b) => (FAILURE_SCORE, Some(format!("non-finite box {b:?}"))),
                    Err(e) => (FAILURE_SCORE, Some(e.to_string())),
                };
                RecordScore {
                    record_id: c.record_id.clone(),
                    diou,
                    note,
                }
            })
            .collect();
        let values: Vec<f64> = scores.iter().map(|s| s.diou).collect();
        reports.push(MethodReport {
            method: m.name.clone(),
            mean_diou: compensated_sum(values.iter().copied()) / values.len() as f64,
            median_diou: median(&values),
            count: values.len(),
            failures: scores.iter().filter(|s| s.note.is_some()).count(),
            scores,
        });
    }
    Ok(EvalReport {
        fingerprint: fingerprint.to_string(),
        methods: reports,
    })
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<12} {:>10} {:>10} {:>7} {:>8}\n", "method", "mean_diou", "median", "count", "failed");
        for m in &self.methods {
            out.push_str(&format!(
                "{:<12} {:>10.4} {:>10.4} {:>7} {:>8}\n",
                m.method, m.mean_diou, m.median_diou, m.count, m.failures
            ));
        }
        out
    }

    /// One summary line per method followed by one line per scored record.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for m in &self.methods {
            let line = serde_json::json!({
                "kind": "summary",
                "fingerprint": self.fingerprint,
                "method": m.method,
                "mean_diou": m.mean_diou,
                "median_diou": m.median_diou,
                "count": m.count,
                "failures": m.failures,
            });
            writeln!(w, "{line}")?;
        }
        for m in &self.methods {
            for s in &m.scores {
                let line = serde_json::json!({
                    "kind": "record",
                    "method": m.method,
                    "record_id": s.record_id,
                    "diou": s.diou,
                    "note": s.note,
                });
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}
