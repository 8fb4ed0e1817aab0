//! Sticker type classifier: backbone feature ⊕ `has_alpha` ⊕ aspect feature
//! → three-layer MLP → `is_filter`, `use_mask`, `transparency`.

use std::path::Path;

use image::RgbaImage;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{stable_hash, Dataset, PlacementRecord};
use crate::error::{Error, Result};
use crate::geometry::aspect_ratio_feature;
use crate::nncore::{
    bce_with_logit, load_weights, relu2, relu_backward_inplace, save_weights, sigmoid, Backbone, BackboneCache,
    BackboneSpec, Linear, ModelParams, Sgd, Tensor4,
};
use crate::raster::{crop, resize_bilinear, rgba_planes, Sticker};

/// Where to cut the square crop out of the resized sticker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropMode {
    Center,
    /// Top-left offset of the crop.
    At(u32, u32),
}

/// Network-ready sticker: 4-channel planes, alpha flag and shape features.
#[derive(Debug, Clone, PartialEq)]
pub struct StickerInput {
    /// `(1, 4, S, S)` in `[0, 1]`.
    pub rgba: Tensor4,
    pub has_alpha: bool,
    /// `(1 − min/max)²` of the original pixel dimensions.
    pub aspect_feature: f64,
    /// `ln(width / height)` of the original pixel dimensions.
    pub log_aspect: f64,
}

impl StickerInput {
    fn from_image(img: &RgbaImage, sticker: &Sticker) -> Result<Self> {
        let (w, h) = sticker.dims();
        let planes = rgba_planes(img);
        let (c, hh, ww) = planes.dim();
        let rgba = planes
            .into_shape_with_order((1, c, hh, ww))
            .map_err(|e| Error::input(e.to_string()))?;
        Ok(StickerInput {
            rgba,
            has_alpha: sticker.has_alpha,
            aspect_feature: aspect_ratio_feature(w as f64, h as f64)?,
            log_aspect: (w as f64 / h as f64).ln(),
        })
    }

    /// Stretches the sticker to `size`×`size`.
    pub fn resized(sticker: &Sticker, size: u32) -> Result<Self> {
        Self::from_image(&resize_bilinear(&sticker.image, size, size), sticker)
    }

    /// Stretches to `resize`×`resize`, then crops `size`×`size`.
    pub fn cropped(sticker: &Sticker, resize: u32, size: u32, mode: CropMode) -> Result<Self> {
        let big = resize_bilinear(&sticker.image, resize, resize);
        Self::crop_from(&big, sticker, size, mode)
    }

    fn crop_from(big: &RgbaImage, sticker: &Sticker, size: u32, mode: CropMode) -> Result<Self> {
        let resize = big.width();
        if size > resize {
            return Err(Error::input(format!("crop {size} larger than resized sticker {resize}")));
        }
        let (x0, y0) = match mode {
            CropMode::Center => ((resize - size) / 2, (resize - size) / 2),
            CropMode::At(x, y) => (x.min(resize - size), y.min(resize - size)),
        };
        Self::from_image(&crop(big, x0, y0, size), sticker)
    }

    pub fn validate(&self, size: usize) -> Result<()> {
        let (n, c, h, w) = self.rgba.dim();
        if c != 4 {
            return Err(Error::input(format!("sticker input must have 4 channels, got {c}")));
        }
        if n != 1 || h != size || w != size {
            return Err(Error::input(format!("sticker input must be 1×4×{size}×{size}, got {:?}", self.rgba.dim())));
        }
        Ok(())
    }
}

/// Thresholded classifier output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeDecision {
    pub p_filter: f64,
    pub p_mask: f64,
    pub p_transparency: f64,
    pub is_filter: bool,
    pub use_mask: bool,
    pub transparency: bool,
}

impl TypeDecision {
    pub fn from_probabilities(p: [f64; 3], thresholds: [f64; 3]) -> Self {
        TypeDecision {
            p_filter: p[0],
            p_mask: p[1],
            p_transparency: p[2],
            is_filter: p[0] >= thresholds[0],
            use_mask: p[1] >= thresholds[1],
            transparency: p[2] >= thresholds[2],
        }
    }
}

/// Supervision for one sticker. Mask and transparency labels only exist for
/// filter-style rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeLabels {
    pub is_filter: bool,
    pub use_mask: Option<bool>,
    pub transparency: Option<bool>,
}

impl TypeLabels {
    pub fn from_record(r: &PlacementRecord) -> Self {
        if r.is_filter() {
            TypeLabels {
                is_filter: true,
                use_mask: Some(r.use_mask()),
                transparency: Some(r.reduced_opacity()),
            }
        } else {
            TypeLabels {
                is_filter: false,
                use_mask: None,
                transparency: None,
            }
        }
    }
}

/// Sum of the defined BCE terms and its gradient with respect to the logits.
pub fn classifier_loss(logits: [f64; 3], labels: &TypeLabels) -> (f64, [f64; 3]) {
    let targets = [
        Some(labels.is_filter),
        labels.use_mask,
        labels.transparency,
    ];
    let mut loss = 0.0;
    let mut grad = [0.0; 3];
    for k in 0..3 {
        if let Some(y) = targets[k] {
            let (l, g) = bce_with_logit(logits[k], if y { 1.0 } else { 0.0 });
            loss += l;
            grad[k] = g;
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_size: u32,
    /// Side length before cropping; random crop in training, center crop at inference.
    pub resize: u32,
    pub backbone: BackboneSpec,
    pub hidden: usize,
    pub thresholds: [f64; 3],
    pub sgd: Sgd,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            input_size: 64,
            resize: 80,
            backbone: BackboneSpec::desk(4),
            hidden: 32,
            thresholds: [0.5; 3],
            sgd: Sgd {
                lr: 0.02,
                momentum: 0.9,
                clip_norm: Some(5.0),
            },
            epochs: 3,
            batch_size: 8,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone)]
struct ClassifierCache {
    backbone: BackboneCache,
    mlp_in: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct TypeClassifier {
    config: ClassifierConfig,
    params: ModelParams,
    backbone: Backbone,
    fc1: Linear,
    fc2: Linear,
    fc3: Linear,
    cache: Option<ClassifierCache>,
}

impl TypeClassifier {
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        if config.backbone.input_channels != 4 {
            return Err(Error::input("classifier backbone must take 4 channels"));
        }
        if config.resize < config.input_size {
            return Err(Error::input("classifier resize must be at least the input size"));
        }
        let mut params = ModelParams::new(config.seed);
        let backbone = Backbone::new(&mut params, "cls.backbone", config.backbone.clone())?;
        let feat = config.backbone.global_channels() + 2;
        let fc1 = Linear::new(&mut params, "cls.fc1", feat, config.hidden)?;
        let fc2 = Linear::new(&mut params, "cls.fc2", config.hidden, config.hidden)?;
        let fc3 = Linear::with_gain(&mut params, "cls.fc3", config.hidden, 3, 0.1)?;
        Ok(TypeClassifier {
            config,
            params,
            backbone,
            fc1,
            fc2,
            fc3,
            cache: None,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    /// Inference-time preprocessing (center crop).
    pub fn prepare(&self, sticker: &Sticker) -> Result<StickerInput> {
        StickerInput::cropped(sticker, self.config.resize, self.config.input_size, CropMode::Center)
    }

    fn mlp_input_from(&self, global: &Array2<f64>, input: &StickerInput) -> Array2<f64> {
        let c = global.ncols();
        let mut x = Array2::<f64>::zeros((1, c + 2));
        x.slice_mut(ndarray::s![.., ..c]).assign(global);
        x[[0, c]] = if input.has_alpha { 1.0 } else { 0.0 };
        x[[0, c + 1]] = input.aspect_feature;
        x
    }

    /// The joint feature vector fed to the MLP.
    pub fn mlp_input(&self, input: &StickerInput) -> Result<Array2<f64>> {
        input.validate(self.config.input_size as usize)?;
        let out = self.backbone.infer(&self.params, &input.rgba)?;
        Ok(self.mlp_input_from(&out.global, input))
    }

    fn head(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        let h1 = relu2(&self.fc1.forward(&self.params, x)?);
        let h2 = relu2(&self.fc2.forward(&self.params, &h1)?);
        let z = self.fc3.forward(&self.params, &h2)?;
        Ok((h1, h2, z))
    }

    pub fn logits(&self, input: &StickerInput) -> Result<[f64; 3]> {
        let x = self.mlp_input(input)?;
        let (_, _, z) = self.head(&x)?;
        Ok([z[[0, 0]], z[[0, 1]], z[[0, 2]]])
    }

    pub fn probabilities(&self, input: &StickerInput) -> Result<[f64; 3]> {
        Ok(self.logits(input)?.map(sigmoid))
    }

    pub fn classify(&self, input: &StickerInput, thresholds: [f64; 3]) -> Result<TypeDecision> {
        Ok(TypeDecision::from_probabilities(self.probabilities(input)?, thresholds))
    }

    /// Forward pass that records what [`TypeClassifier::backward`] needs.
    pub fn forward_train(&mut self, input: &StickerInput) -> Result<[f64; 3]> {
        input.validate(self.config.input_size as usize)?;
        let (out, bcache) = self.backbone.forward(&self.params, &input.rgba)?;
        let x = self.mlp_input_from(&out.global, input);
        let (h1, h2, z) = self.head(&x)?;
        self.cache = Some(ClassifierCache {
            backbone: bcache,
            mlp_in: x,
            h1,
            h2,
        });
        Ok([z[[0, 0]], z[[0, 1]], z[[0, 2]]])
    }

    /// Accumulates parameter gradients for `dL/dlogits` of the last
    /// [`TypeClassifier::forward_train`]; consumes the recorded pass.
    pub fn backward(&mut self, dlogits: [f64; 3]) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("classifier backward called without a recorded forward pass".into()))?;
        let dz = Array2::from_shape_vec((1, 3), dlogits.to_vec()).expect("1x3");
        let mut dh2 = self.fc3.backward(&mut self.params, &cache.h2, &dz);
        relu_backward_inplace(&mut dh2, &cache.h2);
        let mut dh1 = self.fc2.backward(&mut self.params, &cache.h1, &dh2);
        relu_backward_inplace(&mut dh1, &cache.h1);
        let dx = self.fc1.backward(&mut self.params, &cache.mlp_in, &dh1);
        let c = self.config.backbone.global_channels();
        let dglobal = dx.slice(ndarray::s![.., ..c]).to_owned();
        let taps: Vec<Tensor4> = self
            .config
            .backbone
            .tap_resolutions(self.config.input_size as usize)
            .iter()
            .zip(self.config.backbone.tap_channels())
            .map(|(&(h, w), ch)| Tensor4::zeros((1, ch, h, w)))
            .collect();
        self.backbone.backward(&mut self.params, &cache.backbone, &taps, &dglobal)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_weights(&self.params, path)
    }

    /// Rebuilds the architecture from `config` and fills it from a weight file.
    pub fn load(path: &Path, config: ClassifierConfig) -> Result<Self> {
        let mut model = TypeClassifier::new(config)?;
        model.params.copy_values_from(&load_weights(path)?)?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

/// Fraction of records whose predicted style matches the label.
pub fn type_accuracy(model: &TypeClassifier, dataset: &Dataset, records: &[&PlacementRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::input("cannot measure accuracy on zero records"));
    }
    let mut correct = 0usize;
    for r in records {
        let input = model.prepare(dataset.sticker(r)?)?;
        let d = model.classify(&input, model.config.thresholds)?;
        if d.is_filter == r.is_filter() {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len() as f64)
}

/// Trains the classifier on `train`, reporting held-out accuracy on `val`
/// when given.
pub fn train_classifier(
    dataset: &Dataset,
    train: &[&PlacementRecord],
    val: &[&PlacementRecord],
    config: &ClassifierConfig,
) -> Result<(TypeClassifier, Vec<ClassifierEpoch>)> {
    train_classifier_from(TypeClassifier::new(config.clone())?, dataset, train, val)
}

/// Like [`train_classifier`] but continues from an existing model.
pub fn train_classifier_from(
    mut model: TypeClassifier,
    dataset: &Dataset,
    train: &[&PlacementRecord],
    val: &[&PlacementRecord],
) -> Result<(TypeClassifier, Vec<ClassifierEpoch>)> {
    let config = model.config.clone();
    let filters = train.iter().filter(|r| r.is_filter()).count();
    if filters == 0 || filters == train.len() {
        return Err(Error::input(format!(
            "classifier training needs both styles; got {filters} filter-style of {} records",
            train.len()
        )));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::input("batch size and epochs must be positive"));
    }
    let mut resized = std::collections::BTreeMap::new();
    for r in train {
        if !resized.contains_key(&r.sticker_ref) {
            let st = dataset.sticker(r)?;
            resized.insert(r.sticker_ref.clone(), resize_bilinear(&st.image, config.resize, config.resize));
        }
    }

    let span = config.resize - config.input_size;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(config.seed, &format!("cls-epoch{epoch}")));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let r = train[i];
                let mode = CropMode::At(rng.random_range(0..=span), rng.random_range(0..=span));
                let input = StickerInput::crop_from(&resized[&r.sticker_ref], dataset.sticker(r)?, config.input_size, mode)?;
                let logits = model.forward_train(&input)?;
                let labels = TypeLabels::from_record(r);
                let (loss, grad) = classifier_loss(logits, &labels);
                model.backward(grad.map(|g| g * inv))?;
                loss_sum += loss;
                if (sigmoid(logits[0]) >= config.thresholds[0]) == labels.is_filter {
                    correct += 1;
                }
            }
            config.sgd.step(&mut model.params)?;
        }
        let val_accuracy = if val.is_empty() {
            None
        } else {
            Some(type_accuracy(&model, dataset, val)?)
        };
        history.push(ClassifierEpoch {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy,
        });
    }
    Ok((model, history))
}
