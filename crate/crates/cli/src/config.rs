use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sticker_core::classifier::ClassifierConfig;
use sticker_core::nncore::{BackboneSpec, Sgd};
use sticker_core::placement::{PlacementConfig, RegressionLoss};

pub const CONFIG_FILE: &str = "config.toml";

/// Every tunable of a run. Missing keys take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n: usize,
    pub input_size: u32,
    pub anchor_scales: Vec<[usize; 2]>,
    pub lambda: f64,
    pub regression: RegressionLoss,
    pub thresholds: [f64; 3],
    pub filter_opacity: f64,
    pub lr: f64,
    pub momentum: f64,
    /// Gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub batch_size: usize,
    pub final_lr_fraction: f64,
    pub classifier_epochs: usize,
    pub placement_epochs: usize,
    pub classifier_seed: u64,
    pub placement_seed: u64,
    pub head_hidden: usize,
    pub classifier_hidden: usize,
    pub classifier_resize: u32,
    pub data_dir: Option<String>,
    pub weights_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PlacementConfig::default();
        let c = ClassifierConfig::default();
        RunConfig {
            seed: 7,
            n: 2000,
            input_size: p.input_size,
            anchor_scales: p.anchor_scales.iter().map(|&(r, c)| [r, c]).collect(),
            lambda: p.lambda,
            regression: p.regression,
            thresholds: c.thresholds,
            filter_opacity: 0.6,
            lr: p.sgd.lr,
            momentum: p.sgd.momentum,
            clip_norm: p.sgd.clip_norm.unwrap_or(0.0),
            batch_size: p.batch_size,
            final_lr_fraction: p.final_lr_fraction,
            classifier_epochs: c.epochs,
            placement_epochs: p.epochs,
            classifier_seed: c.seed,
            placement_seed: p.seed,
            head_hidden: p.head_hidden,
            classifier_hidden: c.hidden,
            classifier_resize: c.resize,
            data_dir: None,
            weights_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    /// Applies `key=value` overrides. Values use TOML syntax; anything that
    /// does not parse as a TOML value is taken as a bare string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, String> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("echo parses");
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| format!("override `{item}` is not key=value"))?;
            let (key, raw) = (key.trim(), raw.trim());
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| format!("bad override: {e}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the effective configuration into `dir`.
    pub fn echo(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), self.to_toml())
    }

    fn sgd(&self) -> Sgd {
        Sgd {
            lr: self.lr,
            momentum: self.momentum,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
        }
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            input_size: self.input_size,
            resize: self.classifier_resize,
            backbone: BackboneSpec::desk(4),
            hidden: self.classifier_hidden,
            thresholds: self.thresholds,
            sgd: self.sgd(),
            epochs: self.classifier_epochs,
            batch_size: self.batch_size,
            seed: self.classifier_seed,
        }
    }

    pub fn placement(&self) -> PlacementConfig {
        PlacementConfig {
            input_size: self.input_size,
            anchor_scales: self.anchor_scales.iter().map(|&[r, c]| (r, c)).collect(),
            host_backbone: BackboneSpec::desk(5),
            sticker_backbone: BackboneSpec::desk(4),
            head_hidden: self.head_hidden,
            lambda: self.lambda,
            regression: self.regression,
            sgd: self.sgd(),
            epochs: self.placement_epochs,
            batch_size: self.batch_size,
            final_lr_fraction: self.final_lr_fraction,
            keep_best: true,
            seed: self.placement_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_match_core() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.placement(), PlacementConfig::default());
        assert_eq!(c.classifier(), ClassifierConfig::default());
    }

    #[test]
    fn partial_files_fill_defaults_and_typos_fail() {
        let c: RunConfig = toml::from_str("lambda = 1.5\nregression = \"iou\"\n").unwrap();
        assert_eq!(c.lambda, 1.5);
        assert_eq!(c.regression, RegressionLoss::Iou);
        assert_eq!(c.n, RunConfig::default().n);
        assert!(toml::from_str::<RunConfig>("lamda = 1.0").is_err());
    }

    #[test]
    fn overrides_are_typed_and_checked() {
        let c = RunConfig::default();
        let o = c
            .with_overrides(&["lambda=0.5".into(), "regression=iou".into(), "anchor_scales=[[4,4],[2,2]]".into(), "data_dir=runs/d".into()])
            .unwrap();
        assert_eq!(o.lambda, 0.5);
        assert_eq!(o.regression, RegressionLoss::Iou);
        assert_eq!(o.anchor_scales, vec![[4, 4], [2, 2]]);
        assert_eq!(o.data_dir.as_deref(), Some("runs/d"));
        assert!(c.with_overrides(&["lamda=0.5".into()]).is_err());
        assert!(c.with_overrides(&["lambda".into()]).is_err());
        assert!(c.with_overrides(&["n=many".into()]).is_err());
    }
}
