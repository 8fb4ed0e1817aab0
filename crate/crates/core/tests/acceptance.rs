//! Acceptance criteria A1–A8. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use image::{Rgba, RgbaImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sticker_core::classifier::{train_classifier, type_accuracy, ClassifierConfig};
use sticker_core::compositor::{alpha_over, composite_filter, composite_sticker};
use sticker_core::dataio::*;
use sticker_core::evalbench::{eval_cases, evaluate, fingerprint, Method};
use sticker_core::geometry::*;
use sticker_core::nncore::{read_weights, write_weights};
use sticker_core::placement::*;

const DATA_SEED: u64 = 5;
const SCENES: usize = 2000;
const TRAIN_SEEDS: [u64; 3] = [1, 2, 3];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn a1_geometry() -> Outcome {
    let b = |x, y, w, h| BBox::new(x, y, w, h).unwrap();
    let cases = [
        (b(0.0, 0.0, 1.0, 1.0), b(0.0, 0.0, 1.0, 1.0), 1.0),
        (b(0.0, 0.0, 1.0, 1.0), b(2.0, 0.0, 1.0, 1.0), -0.4),
        (b(0.25, 0.25, 0.5, 0.5), b(0.0, 0.0, 1.0, 1.0), 0.25),
    ];
    for (p, q, want) in cases {
        let got = diou(&p, &q);
        ensure((got - want).abs() <= 1e-12, || format!("diou({p:?}, {q:?}) = {got}, want {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (p, q) = common::separated_pair(&mut rng, 1e-3);
        let (_, g) = diou_grad(&p, &q);
        for k in 0..4 {
            let bump = |d: f64| {
                let mut a = p.as_array();
                a[k] += d;
                diou(&BBox { x: a[0], y: a[1], w: a[2], h: a[3] }, &q)
            };
            let fd = (bump(1e-5) - bump(-1e-5)) / 2e-5;
            worst = worst.max(common::rel_err(g[k], fd));
        }
    }
    ensure(worst < 1e-3, || format!("worst gradient relative error {worst:e}"))?;
    Ok(format!("hand values exact; worst gradient rel. error {worst:.1e} over 100 pairs"))
}

fn a2_loss() -> Outcome {
    let grid = AnchorGrid::new(&[(1, 2)]).unwrap();
    let gt = BBox::new(0.0, 0.0, 0.5, 1.0).unwrap();
    let inner = BBox::new(0.125, 0.25, 0.25, 0.5).unwrap();
    ensure((diou(&inner, &gt) - 0.25).abs() < 1e-12, || "positive box does not score DIoU 0.25".into())?;
    let raw = RawOutput {
        logits: vec![0.0, 0.0],
        targets: vec![encode_target(&grid.anchors()[0], &inner), RegressionTarget::default()],
    };
    let total = placement_loss(&raw, &grid, &gt, 3.0, RegressionLoss::Diou).total;
    ensure((total - 2.943147).abs() <= 1e-6, || format!("loss {total}, want 2.943147"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let raw = RawOutput {
            logits: vec![rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)],
            targets: vec![RegressionTarget::from_array([rng.random(), rng.random(), -1.0, -0.5]); 2],
        };
        let bce = |z: f64, y: f64| {
            let p = 1.0 / (1.0 + (-z).exp());
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        };
        let want = (bce(raw.logits[0], 1.0) + bce(raw.logits[1], 0.0)) / 2.0;
        let got = placement_loss(&raw, &grid, &gt, 0.0, RegressionLoss::Diou).total;
        ensure((got - want).abs() <= 1e-12, || format!("lambda=0 loss {got} vs mean BCE {want}"))?;
    }
    Ok(format!("hand example {total:.6}; lambda=0 equals mean BCE"))
}

struct Run {
    dataset: Dataset,
    manifest: SplitManifest,
}

impl Run {
    fn new() -> Self {
        let dataset = synth_generate(SCENES, DATA_SEED).expect("generate");
        let manifest = split_by_sticker(&dataset.records, DATA_SEED).expect("split");
        Run { dataset, manifest }
    }

    fn records(&self, split: Split, placement_only: bool) -> Vec<&PlacementRecord> {
        self.manifest
            .filter(&self.dataset.records, split)
            .into_iter()
            .filter(|r| !placement_only || r.usable_for_placement())
            .collect()
    }

    fn train(&self, seed: u64, kind: RegressionLoss) -> (PlacementNet, f64) {
        let cfg = PlacementConfig {
            seed,
            regression: kind,
            ..PlacementConfig::default()
        };
        let (net, _) = train_placement(
            &self.dataset,
            &self.records(Split::Train, true),
            &self.records(Split::Val, true),
            &cfg,
        )
        .expect("train");
        let test = prepare_samples(&net, &self.dataset, &self.records(Split::Test, true)).expect("samples");
        let score = mean_diou(&net, &test).expect("score");
        (net, score)
    }
}

fn a3_end_to_end(run: &Run, net: &PlacementNet) -> Outcome {
    let epochs = net.config().epochs;
    ensure(epochs <= 20, || format!("{epochs} epochs exceeds the budget"))?;
    let test = run.records(Split::Test, true);
    let cases = eval_cases(&run.dataset, &test).map_err(|e| e.to_string())?;
    let by_id: std::collections::BTreeMap<&str, &PlacementRecord> = test.iter().map(|r| (r.record_id.as_str(), *r)).collect();
    let model = Method::new("model", |c| {
        let r = by_id[c.record_id.as_str()];
        let host = net.prepare_host(run.dataset.host(r)?, run.dataset.fg_mask(r)?)?;
        let sticker = net.prepare_sticker(run.dataset.sticker(r)?)?;
        Ok(net.predict(&host, &sticker)?.bbox)
    });
    let methods = [model, Method::center(), Method::random(DATA_SEED)];
    let report = evaluate(&methods, &cases, &fingerprint(&format!("{:?}", net.config()))).map_err(|e| e.to_string())?;
    let m = report.method("model").unwrap().mean_diou;
    let c = report.method("center").unwrap().mean_diou;
    let r = report.method("random").unwrap().mean_diou;
    let summary = format!("{epochs} epochs, {} test scenes: model {m:.4}, center {c:.4}, random {r:.4}", cases.len());
    ensure(m >= 0.30, || format!("model DIoU below 0.30; {summary}"))?;
    ensure(m - c >= 0.15, || format!("margin over center below 0.15; {summary}"))?;
    ensure(m - r >= 0.30, || format!("margin over random below 0.30; {summary}"))?;
    ensure(c > r, || format!("center does not beat random; {summary}"))?;

    // Boxes land on the target: predicted center within 0.1 of the mask centroid.
    let mut near = 0;
    for rec in &test {
        let host = net.prepare_host(run.dataset.host(rec).unwrap(), run.dataset.fg_mask(rec).unwrap()).unwrap();
        let sticker = net.prepare_sticker(run.dataset.sticker(rec).unwrap()).unwrap();
        let (px, py) = net.predict(&host, &sticker).unwrap().bbox.center();
        let (mx, my) = mask_centroid(run.dataset.fg_mask(rec).unwrap()).unwrap();
        if ((px - mx).powi(2) + (py - my).powi(2)).sqrt() <= 0.1 {
            near += 1;
        }
    }
    let frac = near as f64 / test.len() as f64;
    ensure(frac >= 0.8, || format!("only {frac:.3} of centers within 0.1 of the target; {summary}"))?;
    Ok(format!("{summary}; {:.1}% centers on target", 100.0 * frac))
}

fn a4_classifier(run: &Run) -> Outcome {
    let (model, _) = train_classifier(
        &run.dataset,
        &run.records(Split::Train, false),
        &run.records(Split::Val, false),
        &ClassifierConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let test = run.records(Split::Test, false);
    let acc = type_accuracy(&model, &run.dataset, &test).map_err(|e| e.to_string())?;
    ensure(acc >= 0.95, || format!("held-out accuracy {acc:.4}"))?;
    Ok(format!("held-out accuracy {acc:.4} on {} records", test.len()))
}

fn a5_ablation(run: &Run, first: Option<f64>) -> Outcome {
    let diou_scores: Vec<f64> = TRAIN_SEEDS
        .iter()
        .enumerate()
        .map(|(i, &s)| match (i, first) {
            (0, Some(v)) => v,
            _ => run.train(s, RegressionLoss::Diou).1,
        })
        .collect();
    let iou_scores: Vec<f64> = TRAIN_SEEDS.iter().map(|&s| run.train(s, RegressionLoss::Iou).1).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (d, i) = (mean(&diou_scores), mean(&iou_scores));
    let per_seed: Vec<String> = TRAIN_SEEDS
        .iter()
        .zip(diou_scores.iter().zip(&iou_scores))
        .map(|(s, (a, b))| format!("seed {s}: {a:.4}/{b:.4}"))
        .collect();
    let summary = format!("mean test DIoU over 3 seeds: DIoU loss {d:.4} vs IoU loss {i:.4} ({})", per_seed.join(", "));
    let every_seed = diou_scores.iter().zip(&iou_scores).all(|(a, b)| a > b);
    ensure(d > i && every_seed, || summary.clone())?;
    Ok(summary)
}

fn a6_compositing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for case in 0..50 {
        let host = common::random_rgba(&mut rng, 16, 16, case % 2 == 0);
        let (sw, sh) = (rng.random_range(1..24), rng.random_range(1..24));
        let sticker = common::random_rgba(&mut rng, sw, sh, case % 3 == 0);
        let b = BBox::new(
            rng.random_range(-0.2..0.8),
            rng.random_range(-0.2..0.8),
            rng.random_range(0.05..0.9),
            rng.random_range(0.05..0.9),
        )
        .unwrap();
        let opacity = rng.random_range(0.0..=1.0);
        let got = composite_sticker(&host, &sticker, &b, opacity).unwrap().image;
        ensure(got == common::ref_sticker(&host, &sticker, &b, opacity), || format!("sticker path differs in case {case}"))?;

        let mask = common::random_gray(&mut rng, 16, 16);
        let (use_mask, transparency) = (case % 2 == 1, case % 4 < 2);
        let got = composite_filter(&host, &sticker, use_mask, transparency, Some(&mask), 0.6).unwrap();
        let want = common::ref_filter(&host, &sticker, use_mask.then_some(&mask), if transparency { 0.6 } else { 1.0 });
        ensure(got == want, || format!("filter path differs in case {case}"))?;

        for _ in 0..16 {
            let (fg, bg): ([u8; 4], [u8; 4]) = (rng.random(), rng.random());
            let a = rng.random_range(0.0..=1.0);
            ensure(alpha_over(Rgba(fg), Rgba(bg), a).0 == common::ref_over(fg, bg, a), || format!("alpha_over differs for {fg:?} {bg:?} {a}"))?;
            ensure(alpha_over(Rgba(fg), Rgba(bg), 0.0).0 == bg, || "alpha 0 is not the identity".into())?;
            let over = alpha_over(Rgba(fg), Rgba(bg), 1.0).0;
            ensure(over[..3] == fg[..3] && over[3] == 255, || "alpha 1 does not overwrite".into())?;
        }
    }
    let host = common::random_rgba(&mut rng, 16, 16, true);
    let full = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let clear = RgbaImage::from_pixel(4, 4, Rgba([50, 60, 70, 0]));
    ensure(composite_sticker(&host, &clear, &full, 1.0).unwrap().image == host, || "transparent sticker changed the host".into())?;
    Ok("50 random 16x16 cases bit-exact on both paths; alpha 0/1 exact".into())
}

fn a7_integrity(run: &Run, nets: &[&PlacementNet]) -> Outcome {
    for seed in 0..10 {
        let m = split_by_sticker(&run.dataset.records, seed).map_err(|e| e.to_string())?;
        let sets: Vec<BTreeSet<&str>> = [Split::Train, Split::Val, Split::Test].iter().map(|&s| m.stickers(s)).collect();
        ensure(sets[0].is_disjoint(&sets[1]) && sets[0].is_disjoint(&sets[2]) && sets[1].is_disjoint(&sets[2]), || {
            format!("split seed {seed} shares a sticker across splits")
        })?;
    }
    let template = run.dataset.records[0].clone();
    let mut many = Vec::new();
    for (k, n) in [50usize, 1000, 301, 300].into_iter().enumerate() {
        for i in 0..n {
            let mut r = template.clone();
            r.record_id = format!("r{k}_{i}");
            r.sticker_id = format!("s{k}");
            many.push(r);
        }
    }
    let kept = sample_cap(&many, 300, 1);
    for (k, n) in [50usize, 1000, 301, 300].into_iter().enumerate() {
        let got = kept.iter().filter(|r| r.sticker_id == format!("s{k}")).count();
        ensure(got == n.min(300), || format!("sticker with {n} records kept {got}"))?;
    }
    for net in nets {
        let mut buf = Vec::new();
        write_weights(net.params(), &mut buf).map_err(|e| e.to_string())?;
        let back = read_weights(&mut buf.as_slice()).map_err(|e| e.to_string())?;
        let mut again = Vec::new();
        write_weights(&back, &mut again).map_err(|e| e.to_string())?;
        ensure(buf == again, || "weight bytes differ after a round trip".into())?;
        for (a, b) in net.params().iter().zip(back.iter()) {
            let same = a.value().iter().zip(b.value()).all(|(x, y)| x.to_bits() == y.to_bits());
            ensure(same && a.name() == b.name() && a.shape() == b.shape(), || format!("{} did not round-trip", a.name()))?;
        }
    }
    Ok("10 split seeds disjoint; cap holds at 300; trained weights round-trip bit-exactly".into())
}

fn a8_anchors() -> Outcome {
    let full = build_anchor_grid(&[(32, 32), (16, 16)]).map_err(|e| e.to_string())?.len();
    let desk = build_anchor_grid(&[(8, 8), (4, 4)]).map_err(|e| e.to_string())?.len();
    ensure(full == 1280 && desk == 80, || format!("got {full} and {desk}"))?;
    let net = PlacementNet::new(PlacementConfig::default()).map_err(|e| e.to_string())?;
    ensure(net.grid().len() == 80, || "desk network grid is not 80 anchors".into())?;
    Ok(format!("[(32,32),(16,16)] -> {full}; [(8,8),(4,4)] -> {desk}"))
}

fn report(id: &str, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("{id} {title}: PASS ({detail}) [{secs:.1}s]"),
        Err(detail) => println!("{id} {title}: FAIL ({detail}) [{secs:.1}s]"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= report("A1", "geometry oracle", a1_geometry);
    ok &= report("A2", "loss oracle", a2_loss);

    let run = Run::new();
    let mut trained = None;
    ok &= report("A3", "end-to-end training", || {
        let (net, score) = run.train(TRAIN_SEEDS[0], RegressionLoss::Diou);
        let outcome = a3_end_to_end(&run, &net);
        trained = Some((net, score));
        outcome
    });
    ok &= report("A4", "type classifier", || a4_classifier(&run));
    ok &= report("A5", "regression loss ablation", || a5_ablation(&run, trained.as_ref().map(|t| t.1)));
    ok &= report("A6", "compositing", a6_compositing);
    let nets: Vec<&PlacementNet> = trained.iter().map(|t| &t.0).collect();
    ok &= report("A7", "data integrity", || a7_integrity(&run, &nets));
    ok &= report("A8", "anchor arithmetic", a8_anchors);

    if ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
