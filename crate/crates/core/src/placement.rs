//! Sticker-style placement predictor.
//!
//! Host (RGBA + foreground mask) and sticker (RGBA) go through separate
//! backbones. At every cell of each host tap map the local feature is joined
//! with the host's global vector and the sticker's context vector, then two
//! per-scale heads predict a placement confidence and a regression target.
//! The highest-confidence anchor wins.

use std::collections::BTreeMap;
use std::path::Path;

use image::{GrayImage, RgbaImage};
use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::StickerInput;
use crate::dataio::{stable_hash, Dataset, PlacementRecord};
use crate::error::{Error, Result};
use crate::geometry::{
    assign_positives, decode_placement, decode_with_jacobian, diou, diou_grad, iou_grad, AnchorGrid, BBox,
    RegressionTarget,
};
use crate::nncore::{
    bce_with_logit, load_weights, relu2, relu_backward_inplace, save_weights, sigmoid, Backbone, BackboneCache,
    BackboneSpec, Linear, ModelParams, Sgd, Tensor4,
};
use crate::raster::{resize_bilinear, resize_gray_bilinear, rgba_planes};

/// Host image stacked with its foreground mask: `(1, 5, S, S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HostInput {
    pub planes: Tensor4,
}

impl HostInput {
    /// Resizes host and mask to `size`×`size` and stacks them.
    pub fn new(host: &RgbaImage, fg_mask: &GrayImage, size: u32) -> Result<Self> {
        if host.dimensions() != fg_mask.dimensions() {
            return Err(Error::input(format!(
                "foreground mask is {:?} but host is {:?}",
                fg_mask.dimensions(),
                host.dimensions()
            )));
        }
        let host = if host.dimensions() == (size, size) {
            host.clone()
        } else {
            resize_bilinear(host, size, size)
        };
        let mask = if fg_mask.dimensions() == (size, size) {
            fg_mask.clone()
        } else {
            resize_gray_bilinear(fg_mask, size, size)
        };
        let rgba = rgba_planes(&host);
        let n = size as usize;
        let mut planes = Tensor4::zeros((1, 5, n, n));
        planes.slice_mut(s![0, ..4, .., ..]).assign(&rgba);
        for (x, y, p) in mask.enumerate_pixels() {
            planes[[0, 4, y as usize, x as usize]] = p[0] as f64 / 255.0;
        }
        Ok(HostInput { planes })
    }
}

/// Which overlap term drives box regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionLoss {
    /// `1 − DIoU`.
    Diou,
    /// `1 − IoU`, the ablation.
    Iou,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    pub input_size: u32,
    pub anchor_scales: Vec<(usize, usize)>,
    pub host_backbone: BackboneSpec,
    pub sticker_backbone: BackboneSpec,
    pub head_hidden: usize,
    pub lambda: f64,
    pub regression: RegressionLoss,
    pub sgd: Sgd,
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate falls linearly from `sgd.lr` to this fraction of it by the last step.
    pub final_lr_fraction: f64,
    /// Return the epoch with the best validation mean DIoU instead of the last.
    pub keep_best: bool,
    pub seed: u64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig {
            input_size: 64,
            anchor_scales: vec![(8, 8), (4, 4)],
            host_backbone: BackboneSpec::desk(5),
            sticker_backbone: BackboneSpec::desk(4),
            head_hidden: 64,
            lambda: 3.0,
            regression: RegressionLoss::Diou,
            sgd: Sgd {
                lr: 0.02,
                momentum: 0.9,
                clip_norm: Some(5.0),
            },
            epochs: 3,
            batch_size: 8,
            final_lr_fraction: 0.05,
            keep_best: true,
            seed: 23,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.host_backbone.input_channels != 5 || self.sticker_backbone.input_channels != 4 {
            return Err(Error::input("host backbone takes 5 channels and sticker backbone 4"));
        }
        let taps = self.host_backbone.tap_resolutions(self.input_size as usize);
        if taps != self.anchor_scales {
            return Err(Error::input(format!(
                "host taps {taps:?} do not match anchor scales {:?} at input size {}",
                self.anchor_scales, self.input_size
            )));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::input("final_lr_fraction must lie in [0, 1]"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::input("lambda must be non-negative"));
        }
        Ok(())
    }
}

/// Raw head outputs: one logit and one regression target per anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct RawOutput {
    pub logits: Vec<f64>,
    pub targets: Vec<RegressionTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementOutput {
    pub confidences: Vec<f64>,
    pub targets: Vec<RegressionTarget>,
    pub chosen: usize,
    pub bbox: BBox,
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl PlacementOutput {
    pub fn from_raw(raw: &RawOutput, grid: &AnchorGrid) -> Self {
        let confidences: Vec<f64> = raw.logits.iter().map(|&z| sigmoid(z)).collect();
        // Argmax on logits: sigmoid saturates and would create false ties.
        let chosen = argmax(&raw.logits);
        let bbox = decode_placement(&grid.anchors()[chosen], &raw.targets[chosen]);
        PlacementOutput {
            confidences,
            targets: raw.targets.clone(),
            chosen,
            bbox,
        }
    }
}

/// Anchor labels for `gt`: every anchor whose center lies inside it, or the
/// single anchor nearest its center when none does.
pub fn positive_labels(grid: &AnchorGrid, gt: &BBox) -> Vec<bool> {
    let mut labels = assign_positives(grid, gt);
    if !labels.iter().any(|&p| p) {
        let (cx, cy) = gt.center();
        let dist = |i: usize| {
            let a = &grid.anchors()[i];
            (a.center_x - cx).powi(2) + (a.center_y - cy).powi(2)
        };
        let nearest = (1..grid.len()).fold(0, |best, i| if dist(i) < dist(best) { i } else { best });
        labels[nearest] = true;
    }
    labels
}

/// Loss value, its parts, and gradients with respect to the raw outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub classification: f64,
    pub regression: f64,
    pub positives: usize,
    pub dlogits: Vec<f64>,
    pub dtargets: Vec<[f64; 4]>,
}

/// Mean BCE over all anchors plus `lambda` times the mean
/// `1 − overlap(decoded box, gt)` over positive anchors.
pub fn placement_loss(raw: &RawOutput, grid: &AnchorGrid, gt: &BBox, lambda: f64, kind: RegressionLoss) -> LossBreakdown {
    let n = grid.len();
    let labels = positive_labels(grid, gt);
    let positives = labels.iter().filter(|&&p| p).count();

    let mut classification = 0.0;
    let mut dlogits = vec![0.0; n];
    for i in 0..n {
        let (l, g) = bce_with_logit(raw.logits[i], if labels[i] { 1.0 } else { 0.0 });
        classification += l;
        dlogits[i] = g / n as f64;
    }
    classification /= n as f64;

    let mut regression = 0.0;
    let mut dtargets = vec![[0.0; 4]; n];
    let scale = lambda / positives as f64;
    for i in (0..n).filter(|&i| labels[i]) {
        let (b, jac) = decode_with_jacobian(&grid.anchors()[i], &raw.targets[i]);
        let (overlap, g) = match kind {
            RegressionLoss::Diou => diou_grad(&b, gt),
            RegressionLoss::Iou => iou_grad(&b, gt),
        };
        regression += 1.0 - overlap;
        // d(1 − overlap)/dt through x = cx − w/2, y = cy − h/2.
        let [dxd, dxs, dyd, dys, dws, dhs] = jac;
        dtargets[i] = [
            -scale * g[0] * dxd,
            -scale * g[1] * dyd,
            -scale * (g[0] * dxs + g[2] * dws),
            -scale * (g[1] * dys + g[3] * dhs),
        ];
    }
    regression /= positives as f64;

    LossBreakdown {
        total: classification + lambda * regression,
        classification,
        regression,
        positives,
        dlogits,
        dtargets,
    }
}

#[derive(Debug, Clone)]
struct ScaleHeads {
    conf1: Linear,
    conf2: Linear,
    reg1: Linear,
    reg2: Linear,
}

#[derive(Debug, Clone)]
struct ScaleCache {
    fused: Array2<f64>,
    conf_h: Array2<f64>,
    reg_h: Array2<f64>,
}

#[derive(Debug, Clone)]
struct PlacementCache {
    host: BackboneCache,
    sticker: BackboneCache,
    scales: Vec<ScaleCache>,
}

#[derive(Debug, Clone)]
pub struct PlacementNet {
    config: PlacementConfig,
    grid: AnchorGrid,
    params: ModelParams,
    host_backbone: Backbone,
    sticker_backbone: Backbone,
    heads: Vec<ScaleHeads>,
    cache: Option<PlacementCache>,
}

impl PlacementNet {
    pub fn new(config: PlacementConfig) -> Result<Self> {
        config.validate()?;
        let grid = AnchorGrid::new(&config.anchor_scales)?;
        let mut params = ModelParams::new(config.seed);
        let host_backbone = Backbone::new(&mut params, "place.host", config.host_backbone.clone())?;
        let sticker_backbone = Backbone::new(&mut params, "place.sticker", config.sticker_backbone.clone())?;
        let context = config.host_backbone.global_channels() + config.sticker_backbone.global_channels() + 1;
        let mut heads = Vec::new();
        for (k, ch) in config.host_backbone.tap_channels().into_iter().enumerate() {
            let fused = ch + context;
            let hid = config.head_hidden;
            heads.push(ScaleHeads {
                conf1: Linear::new(&mut params, &format!("place.head{k}.conf1"), fused, hid)?,
                conf2: Linear::with_gain(&mut params, &format!("place.head{k}.conf2"), hid, 1, 0.1)?,
                reg1: Linear::new(&mut params, &format!("place.head{k}.reg1"), fused, hid)?,
                reg2: Linear::with_gain(&mut params, &format!("place.head{k}.reg2"), hid, 4, 0.1)?,
            });
        }
        Ok(PlacementNet {
            config,
            grid,
            params,
            host_backbone,
            sticker_backbone,
            heads,
            cache: None,
        })
    }

    pub fn config(&self) -> &PlacementConfig {
        &self.config
    }

    pub fn grid(&self) -> &AnchorGrid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn prepare_host(&self, host: &RgbaImage, fg_mask: &GrayImage) -> Result<HostInput> {
        HostInput::new(host, fg_mask, self.config.input_size)
    }

    pub fn prepare_sticker(&self, sticker: &crate::raster::Sticker) -> Result<StickerInput> {
        StickerInput::resized(sticker, self.config.input_size)
    }

    fn check_inputs(&self, host: &HostInput, sticker: &StickerInput) -> Result<()> {
        let n = self.config.input_size as usize;
        if host.planes.dim() != (1, 5, n, n) {
            return Err(Error::input(format!("host input must be 1×5×{n}×{n}, got {:?}", host.planes.dim())));
        }
        sticker.validate(n)
    }

    /// Per-scale fused feature matrices `(anchors_at_scale, features)`.
    fn fuse(&self, taps: &[Tensor4], host_global: &Array2<f64>, sticker_global: &Array2<f64>, log_aspect: f64) -> Vec<Array2<f64>> {
        taps.iter()
            .map(|tap| {
                let (_, c, h, w) = tap.dim();
                let hg = host_global.ncols();
                let sg = sticker_global.ncols();
                let mut fused = Array2::<f64>::zeros((h * w, c + hg + sg + 1));
                let local = tap
                    .index_axis(Axis(0), 0)
                    .to_shape((c, h * w))
                    .expect("contiguous tap")
                    .t()
                    .to_owned();
                fused.slice_mut(s![.., ..c]).assign(&local);
                fused.slice_mut(s![.., c..c + hg]).assign(&host_global.broadcast((h * w, hg)).unwrap());
                fused
                    .slice_mut(s![.., c + hg..c + hg + sg])
                    .assign(&sticker_global.broadcast((h * w, sg)).unwrap());
                fused.column_mut(c + hg + sg).fill(log_aspect);
                fused
            })
            .collect()
    }

    fn heads_forward(&self, fused: &[Array2<f64>]) -> Result<(RawOutput, Vec<ScaleCache>)> {
        let mut logits = Vec::with_capacity(self.grid.len());
        let mut targets = Vec::with_capacity(self.grid.len());
        let mut caches = Vec::with_capacity(fused.len());
        for (f, head) in fused.iter().zip(&self.heads) {
            let conf_h = relu2(&head.conf1.forward(&self.params, f)?);
            let z = head.conf2.forward(&self.params, &conf_h)?;
            let reg_h = relu2(&head.reg1.forward(&self.params, f)?);
            let t = head.reg2.forward(&self.params, &reg_h)?;
            logits.extend(z.column(0).iter().copied());
            targets.extend(t.outer_iter().map(|r| RegressionTarget::from_array([r[0], r[1], r[2], r[3]])));
            caches.push(ScaleCache {
                fused: f.clone(),
                conf_h,
                reg_h,
            });
        }
        Ok((RawOutput { logits, targets }, caches))
    }

    /// Raw per-anchor outputs without recording intermediates.
    pub fn forward_raw(&self, host: &HostInput, sticker: &StickerInput) -> Result<RawOutput> {
        self.check_inputs(host, sticker)?;
        let h = self.host_backbone.infer(&self.params, &host.planes)?;
        let st = self.sticker_backbone.infer(&self.params, &sticker.rgba)?;
        let fused = self.fuse(&h.taps, &h.global, &st.global, sticker.log_aspect);
        Ok(self.heads_forward(&fused)?.0)
    }

    pub fn predict(&self, host: &HostInput, sticker: &StickerInput) -> Result<PlacementOutput> {
        Ok(PlacementOutput::from_raw(&self.forward_raw(host, sticker)?, &self.grid))
    }

    /// Per-sample loss at the current weights, without touching gradients.
    pub fn loss(&self, host: &HostInput, sticker: &StickerInput, gt: &BBox) -> Result<LossBreakdown> {
        let raw = self.forward_raw(host, sticker)?;
        Ok(placement_loss(&raw, &self.grid, gt, self.config.lambda, self.config.regression))
    }

    pub fn forward_train(&mut self, host: &HostInput, sticker: &StickerInput) -> Result<RawOutput> {
        self.check_inputs(host, sticker)?;
        let (h, hcache) = self.host_backbone.forward(&self.params, &host.planes)?;
        let (st, scache) = self.sticker_backbone.forward(&self.params, &sticker.rgba)?;
        let fused = self.fuse(&h.taps, &h.global, &st.global, sticker.log_aspect);
        let (raw, scales) = self.heads_forward(&fused)?;
        self.cache = Some(PlacementCache {
            host: hcache,
            sticker: scache,
            scales,
        });
        Ok(raw)
    }

    /// Back-propagates output gradients through the last recorded forward pass.
    pub fn backward(&mut self, dlogits: &[f64], dtargets: &[[f64; 4]]) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("placement backward called without a recorded forward pass".into()))?;
        if dlogits.len() != self.grid.len() || dtargets.len() != self.grid.len() {
            return Err(Error::input("output gradient length does not match the anchor count"));
        }
        let hg = self.config.host_backbone.global_channels();
        let sg = self.config.sticker_backbone.global_channels();
        let mut host_global = Array2::<f64>::zeros((1, hg));
        let mut sticker_global = Array2::<f64>::zeros((1, sg));
        let mut tap_grads = Vec::with_capacity(self.heads.len());
        for (k, (sc, head)) in cache.scales.iter().zip(&self.heads).enumerate() {
            let (rows, cols) = self.grid.scales()[k];
            let a = rows * cols;
            let off = self.grid.scale_offset(k);
            let dz = Array2::from_shape_vec((a, 1), dlogits[off..off + a].to_vec()).expect("shape");
            let dt = Array2::from_shape_vec((a, 4), dtargets[off..off + a].iter().flatten().copied().collect())
                .expect("shape");

            let mut dch = head.conf2.backward(&mut self.params, &sc.conf_h, &dz);
            relu_backward_inplace(&mut dch, &sc.conf_h);
            let mut dfused = head.conf1.backward(&mut self.params, &sc.fused, &dch);
            let mut drh = head.reg2.backward(&mut self.params, &sc.reg_h, &dt);
            relu_backward_inplace(&mut drh, &sc.reg_h);
            dfused += &head.reg1.backward(&mut self.params, &sc.fused, &drh);

            let c = sc.fused.ncols() - hg - sg - 1;
            let dlocal = dfused.slice(s![.., ..c]).t().to_owned();
            let tap = dlocal
                .into_shape_with_order((1, c, rows, cols))
                .map_err(|e| Error::State(e.to_string()))?;
            tap_grads.push(tap);
            host_global += &dfused.slice(s![.., c..c + hg]).sum_axis(Axis(0));
            sticker_global += &dfused.slice(s![.., c + hg..c + hg + sg]).sum_axis(Axis(0));
        }
        self.host_backbone
            .backward(&mut self.params, &cache.host, &tap_grads, &host_global)?;
        let sticker_taps: Vec<Tensor4> = self
            .config
            .sticker_backbone
            .tap_resolutions(self.config.input_size as usize)
            .iter()
            .zip(self.config.sticker_backbone.tap_channels())
            .map(|(&(h, w), ch)| Tensor4::zeros((1, ch, h, w)))
            .collect();
        self.sticker_backbone
            .backward(&mut self.params, &cache.sticker, &sticker_taps, &sticker_global)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_weights(&self.params, path)
    }

    pub fn load(path: &Path, config: PlacementConfig) -> Result<Self> {
        let mut net = PlacementNet::new(config)?;
        net.params.copy_values_from(&load_weights(path)?)?;
        Ok(net)
    }
}

/// One preprocessed training example.
#[derive(Debug, Clone)]
pub struct PlacementSample {
    pub record_id: String,
    pub host: HostInput,
    pub sticker: StickerInput,
    pub gt: BBox,
}

/// Preprocesses sticker-style records. Filter-style records are refused.
pub fn prepare_samples(net: &PlacementNet, dataset: &Dataset, records: &[&PlacementRecord]) -> Result<Vec<PlacementSample>> {
    let mut stickers: BTreeMap<&str, StickerInput> = BTreeMap::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if !r.usable_for_placement() {
            return Err(Error::input(format!("record {} is filter-style; it has no placement target", r.record_id)));
        }
        if !stickers.contains_key(r.sticker_ref.as_str()) {
            stickers.insert(&r.sticker_ref, net.prepare_sticker(dataset.sticker(r)?)?);
        }
        out.push(PlacementSample {
            record_id: r.record_id.clone(),
            host: net.prepare_host(dataset.host(r)?, dataset.fg_mask(r)?)?,
            sticker: stickers[r.sticker_ref.as_str()].clone(),
            gt: r.bbox()?,
        });
    }
    Ok(out)
}

/// Mean loss over a batch at the current weights.
pub fn batch_loss(net: &PlacementNet, batch: &[&PlacementSample]) -> Result<f64> {
    let mut sum = 0.0;
    for s in batch {
        sum += net.loss(&s.host, &s.sticker, &s.gt)?.total;
    }
    Ok(sum / batch.len() as f64)
}

/// Mean DIoU of the chosen box against ground truth.
pub fn mean_diou(net: &PlacementNet, samples: &[PlacementSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::input("cannot score an empty sample set"));
    }
    let mut sum = 0.0;
    for s in samples {
        sum += diou(&net.predict(&s.host, &s.sticker)?.bbox, &s.gt);
    }
    Ok(sum / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_mean_diou: f64,
    pub val_mean_diou: Option<f64>,
}

/// Mini-batch SGD over a fixed sample set with a seeded per-epoch shuffle.
pub struct PlacementTrainer {
    pub net: PlacementNet,
    sgd: Sgd,
    steps: usize,
}

impl PlacementTrainer {
    pub fn new(net: PlacementNet) -> Self {
        let sgd = net.config.sgd;
        PlacementTrainer { net, sgd, steps: 0 }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.sgd.lr = lr;
    }

    /// Shuffled sample order for `epoch`.
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(self.net.config.seed, &format!("place-epoch{epoch}")));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// One update on `batch`. Returns the mean loss before the update and
    /// the mean DIoU of the chosen boxes.
    pub fn step(&mut self, batch: &[&PlacementSample]) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Err(Error::input("empty batch"));
        }
        let inv = 1.0 / batch.len() as f64;
        let (mut loss, mut quality) = (0.0, 0.0);
        for s in batch {
            let raw = self.net.forward_train(&s.host, &s.sticker)?;
            let lb = placement_loss(&raw, &self.net.grid, &s.gt, self.net.config.lambda, self.net.config.regression);
            let dl: Vec<f64> = lb.dlogits.iter().map(|g| g * inv).collect();
            let dt: Vec<[f64; 4]> = lb.dtargets.iter().map(|g| g.map(|v| v * inv)).collect();
            self.net.backward(&dl, &dt)?;
            loss += lb.total;
            quality += diou(&PlacementOutput::from_raw(&raw, &self.net.grid).bbox, &s.gt);
        }
        self.sgd.step(&mut self.net.params)?;
        self.steps += 1;
        Ok((loss * inv, quality * inv))
    }
}

/// Learning rate for `step` of `total` under linear decay.
pub fn decayed_lr(config: &PlacementConfig, step: usize, total: usize) -> f64 {
    let t = if total > 1 { step as f64 / (total - 1) as f64 } else { 0.0 };
    config.sgd.lr * (1.0 - t * (1.0 - config.final_lr_fraction))
}

/// Trains on sticker-style `train` records, tracking validation mean DIoU.
pub fn train_placement(
    dataset: &Dataset,
    train: &[&PlacementRecord],
    val: &[&PlacementRecord],
    config: &PlacementConfig,
) -> Result<(PlacementNet, Vec<PlacementEpoch>)> {
    train_placement_from(PlacementNet::new(config.clone())?, dataset, train, val)
}

/// Like [`train_placement`] but continues from an existing network.
pub fn train_placement_from(
    net: PlacementNet,
    dataset: &Dataset,
    train: &[&PlacementRecord],
    val: &[&PlacementRecord],
) -> Result<(PlacementNet, Vec<PlacementEpoch>)> {
    let train_samples = prepare_samples(&net, dataset, train)?;
    let val_samples = prepare_samples(&net, dataset, val)?;
    train_placement_samples(net, &train_samples, &val_samples)
}

pub fn train_placement_samples(
    net: PlacementNet,
    train: &[PlacementSample],
    val: &[PlacementSample],
) -> Result<(PlacementNet, Vec<PlacementEpoch>)> {
    if train.is_empty() {
        return Err(Error::input("placement training needs at least one sticker-style record"));
    }
    let config = net.config.clone();
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::input("batch size and epochs must be positive"));
    }
    let mut trainer = PlacementTrainer::new(net);
    let total_steps = config.epochs * train.len().div_ceil(config.batch_size);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, ModelParams)> = None;
    for epoch in 0..config.epochs {
        let order = trainer.epoch_order(epoch, train.len());
        let (mut loss, mut quality) = (0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PlacementSample> = chunk.iter().map(|&i| &train[i]).collect();
            trainer.set_lr(decayed_lr(&config, trainer.steps(), total_steps));
            let (l, q) = trainer.step(&batch)?;
            loss += l * batch.len() as f64;
            quality += q * batch.len() as f64;
        }
        let val_mean_diou = if val.is_empty() {
            None
        } else {
            Some(mean_diou(&trainer.net, val)?)
        };
        if config.keep_best {
            if let Some(v) = val_mean_diou {
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, trainer.net.params.clone()));
                }
            }
        }
        history.push(PlacementEpoch {
            epoch,
            train_loss: loss / train.len() as f64,
            train_mean_diou: quality / train.len() as f64,
            val_mean_diou,
        });
    }
    let mut net = trainer.net;
    if let Some((_, params)) = best {
        net.params = params;
    }
    Ok((net, history))
}
