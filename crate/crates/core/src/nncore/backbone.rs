use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::layers::{global_avg_pool, global_avg_pool_backward, relu4, relu_backward_inplace, Conv2d, ConvCache};
use super::params::ModelParams;
use super::Tensor4;
use crate::error::{Error, Result};

/// Shape of a compact strided convnet.
///
/// Stage `i` is one 3×3 convolution with stride `strides[i]` to `widths[i]`
/// channels followed by `extra_convs[i]` stride-1 3×3 convolutions, each with
/// ReLU. `taps` lists the stages whose outputs are exposed as feature maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub input_channels: usize,
    pub widths: Vec<usize>,
    pub strides: Vec<usize>,
    pub extra_convs: Vec<usize>,
    pub taps: Vec<usize>,
}

impl BackboneSpec {
    /// Four stride-2 stages, taps on the last two (8×8 and 4×4 for a 64×64 input).
    pub fn desk(input_channels: usize) -> Self {
        BackboneSpec {
            input_channels,
            widths: vec![8, 16, 32, 32],
            strides: vec![2, 2, 2, 2],
            extra_convs: vec![0, 1, 1, 1],
            taps: vec![2, 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.widths.len();
        if n == 0 || self.strides.len() != n || self.extra_convs.len() != n {
            return Err(Error::input("backbone widths, strides and extra_convs must be equal-length and non-empty"));
        }
        if self.input_channels == 0 || self.widths.contains(&0) || self.strides.contains(&0) {
            return Err(Error::input("backbone channel counts and strides must be positive"));
        }
        if self.taps.is_empty() || self.taps.iter().any(|&t| t >= n) || self.taps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("backbone taps must be strictly increasing stage indices"));
        }
        Ok(())
    }

    /// Spatial size of each tap for a square `input`×`input` image.
    pub fn tap_resolutions(&self, input: usize) -> Vec<(usize, usize)> {
        let mut size = input;
        let mut out = Vec::new();
        for (stage, &s) in self.strides.iter().enumerate() {
            size = (size + 2 - 3) / s + 1;
            if self.taps.contains(&stage) {
                out.push((size, size));
            }
        }
        out
    }

    pub fn tap_channels(&self) -> Vec<usize> {
        self.taps.iter().map(|&t| self.widths[t]).collect()
    }

    pub fn global_channels(&self) -> usize {
        *self.widths.last().expect("validated")
    }
}

#[derive(Debug, Clone)]
pub struct Backbone {
    spec: BackboneSpec,
    stages: Vec<Vec<Conv2d>>,
}

#[derive(Debug, Clone)]
pub struct BackboneOutput {
    /// One feature map per tap, post-activation.
    pub taps: Vec<Tensor4>,
    /// Spatial mean of the deepest feature map, `(N, C_last)`.
    pub global: Array2<f64>,
}

/// Intermediate values recorded by [`Backbone::forward`].
#[derive(Debug, Clone)]
pub struct BackboneCache {
    convs: Vec<Vec<(ConvCache, Tensor4)>>,
}

impl Backbone {
    pub fn new(params: &mut ModelParams, prefix: &str, spec: BackboneSpec) -> Result<Self> {
        spec.validate()?;
        let mut stages = Vec::with_capacity(spec.widths.len());
        let mut in_c = spec.input_channels;
        for (i, &width) in spec.widths.iter().enumerate() {
            let mut convs = vec![Conv2d::new(params, &format!("{prefix}.s{i}.c0"), in_c, width, 3, spec.strides[i], 1)?];
            for j in 0..spec.extra_convs[i] {
                convs.push(Conv2d::new(params, &format!("{prefix}.s{i}.c{}", j + 1), width, width, 3, 1, 1)?);
            }
            stages.push(convs);
            in_c = width;
        }
        Ok(Backbone { spec, stages })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn forward(&self, params: &ModelParams, x: &Tensor4) -> Result<(BackboneOutput, BackboneCache)> {
        if x.dim().1 != self.spec.input_channels {
            return Err(Error::input(format!(
                "backbone expects {} channels, got {}",
                self.spec.input_channels,
                x.dim().1
            )));
        }
        let mut taps = Vec::with_capacity(self.spec.taps.len());
        let mut caches = Vec::with_capacity(self.stages.len());
        let mut act = x.clone();
        for (i, stage) in self.stages.iter().enumerate() {
            let mut stage_cache = Vec::with_capacity(stage.len());
            for conv in stage {
                let (pre, cache) = conv.forward(params, &act)?;
                act = relu4(&pre);
                stage_cache.push((cache, act.clone()));
            }
            if self.spec.taps.contains(&i) {
                taps.push(act.clone());
            }
            caches.push(stage_cache);
        }
        let global = global_avg_pool(&act);
        Ok((BackboneOutput { taps, global }, BackboneCache { convs: caches }))
    }

    /// Forward pass without keeping intermediates.
    pub fn infer(&self, params: &ModelParams, x: &Tensor4) -> Result<BackboneOutput> {
        Ok(self.forward(params, x)?.0)
    }

    /// Back-propagates tap and global gradients, accumulating parameter
    /// gradients. Returns the input gradient.
    pub fn backward(
        &self,
        params: &mut ModelParams,
        cache: &BackboneCache,
        tap_grads: &[Tensor4],
        global_grad: &Array2<f64>,
    ) -> Result<Tensor4> {
        if tap_grads.len() != self.spec.taps.len() || cache.convs.len() != self.stages.len() {
            return Err(Error::State("backbone cache or tap gradients do not match this network".into()));
        }
        let last = self.stages.len() - 1;
        let mut grad: Option<Tensor4> = None;
        for i in (0..self.stages.len()).rev() {
            let out = &cache.convs[i].last().expect("stage has a conv").1;
            let mut g = grad.take().unwrap_or_else(|| Tensor4::zeros(out.dim()));
            if let Some(t) = self.spec.taps.iter().position(|&s| s == i) {
                g += &tap_grads[t];
            }
            if i == last {
                global_avg_pool_backward(global_grad, &mut g);
            }
            for (conv, (conv_cache, y)) in self.stages[i].iter().zip(&cache.convs[i]).rev() {
                relu_backward_inplace(&mut g, y);
                g = conv.backward(params, conv_cache, &g);
            }
            grad = Some(g);
        }
        Ok(grad.expect("at least one stage"))
    }
}
