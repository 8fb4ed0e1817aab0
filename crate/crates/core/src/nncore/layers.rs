//! Differentiable layers with hand-written backward passes.
//!
//! Every layer reads its weights from a [`ModelParams`] on forward and
//! accumulates (adds) into the gradient buffers on backward.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4, ArrayView2, ArrayViewMut2, Axis};

use super::params::{Init, ModelParams, ParamId};
use super::Tensor4;
use crate::error::{Error, Result};

/// 2D convolution with square kernels, zero padding and a per-channel bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Unfolded input columns, one `(C_in·k·k) × (H_out·W_out)` matrix per batch item.
#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Vec<Array2<f64>>,
    in_shape: [usize; 4],
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ModelParams,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(Error::input(format!("conv `{name}` has a zero-sized hyperparameter")));
        }
        let fan_in = in_channels * kernel * kernel;
        let weight = params.register(
            &format!("{name}.weight"),
            &[out_channels, in_channels, kernel, kernel],
            Init::FanInUniform { fan_in, gain: 1.0 },
        )?;
        let bias = params.register(&format!("{name}.bias"), &[out_channels], Init::Zeros)?;
        Ok(Conv2d {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let span = |n: usize| -> Result<usize> {
            let padded = n + 2 * self.padding;
            if padded < self.kernel {
                return Err(Error::input(format!("input extent {n} smaller than kernel {}", self.kernel)));
            }
            Ok((padded - self.kernel) / self.stride + 1)
        };
        Ok((span(h)?, span(w)?))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn im2col(&self, x: &Tensor4, n: usize, ho: usize, wo: usize) -> Array2<f64> {
        let (h, w) = (x.dim().2, x.dim().3);
        let k = self.kernel;
        let mut cols = Array2::<f64>::zeros((self.patch_len(), ho * wo));
        let xs = x.index_axis(Axis(0), n);
        for c in 0..self.in_channels {
            let plane = xs.index_axis(Axis(0), c);
            for ky in 0..k {
                for kx in 0..k {
                    let mut row = cols.row_mut((c * k + ky) * k + kx);
                    let row = row.as_slice_mut().expect("standard layout");
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = plane.row(iy as usize);
                        let dst = &mut row[oy * wo..(oy + 1) * wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f64>, dx: &mut Tensor4, n: usize, ho: usize, wo: usize) {
        let (h, w) = (dx.dim().2, dx.dim().3);
        let k = self.kernel;
        let mut xs = dx.index_axis_mut(Axis(0), n);
        for c in 0..self.in_channels {
            let mut plane = xs.index_axis_mut(Axis(0), c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = dcols.row((c * k + ky) * k + kx);
                    let row = row.as_slice().expect("standard layout");
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let mut dst = plane.row_mut(iy as usize);
                        for (ox, &g) in row[oy * wo..(oy + 1) * wo].iter().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, params: &ModelParams, x: &Tensor4) -> Result<(Tensor4, ConvCache)> {
        let (nb, c, h, w) = x.dim();
        if c != self.in_channels {
            return Err(Error::input(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let (ho, wo) = self.output_size(h, w)?;
        let wmat = ArrayView2::from_shape((self.out_channels, self.patch_len()), params.value(self.weight))
            .expect("weight shape");
        let bias = params.value(self.bias);
        let mut out = Array4::<f64>::zeros((nb, self.out_channels, ho, wo));
        let mut cols_all = Vec::with_capacity(nb);
        for n in 0..nb {
            let cols = self.im2col(x, n, ho, wo);
            let mut o = out.index_axis_mut(Axis(0), n);
            for (oc, mut plane) in o.outer_iter_mut().enumerate() {
                plane.fill(bias[oc]);
            }
            let mut omat = o
                .into_shape_with_order((self.out_channels, ho * wo))
                .expect("contiguous output");
            general_mat_mul(1.0, &wmat, &cols, 1.0, &mut omat);
            cols_all.push(cols);
        }
        Ok((
            out,
            ConvCache {
                cols: cols_all,
                in_shape: [nb, c, h, w],
            },
        ))
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&self, params: &mut ModelParams, cache: &ConvCache, dy: &Tensor4) -> Tensor4 {
        let [nb, c, h, w] = cache.in_shape;
        let (_, _, ho, wo) = dy.dim();
        let mut dx = Array4::<f64>::zeros((nb, c, h, w));
        let wmat = ArrayView2::from_shape((self.out_channels, self.patch_len()), params.value(self.weight))
            .expect("weight shape")
            .to_owned();
        let mut dw = Array2::<f64>::zeros((self.out_channels, self.patch_len()));
        let mut db = vec![0.0; self.out_channels];
        let mut dcols = Array2::<f64>::zeros((self.patch_len(), ho * wo));
        for n in 0..nb {
            let dyn_ = dy.index_axis(Axis(0), n);
            let dmat = dyn_
                .to_shape((self.out_channels, ho * wo))
                .expect("gradient shape");
            general_mat_mul(1.0, &dmat, &cache.cols[n].t(), 1.0, &mut dw);
            for (oc, row) in dmat.outer_iter().enumerate() {
                db[oc] += row.sum();
            }
            general_mat_mul(1.0, &wmat.t(), &dmat, 0.0, &mut dcols);
            self.col2im(&dcols, &mut dx, n, ho, wo);
        }
        for (g, d) in params.grad_mut(self.weight).iter_mut().zip(dw.iter()) {
            *g += d;
        }
        for (g, d) in params.grad_mut(self.bias).iter_mut().zip(&db) {
            *g += d;
        }
        dx
    }
}

/// Fully connected layer `y = x·Wᵀ + b` over rows of `x`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(params: &mut ModelParams, name: &str, in_features: usize, out_features: usize) -> Result<Self> {
        Self::with_gain(params, name, in_features, out_features, 1.0)
    }

    /// Like [`Linear::new`] with the init range scaled by `gain`; output
    /// heads use a small gain so initial predictions start near neutral.
    pub fn with_gain(
        params: &mut ModelParams,
        name: &str,
        in_features: usize,
        out_features: usize,
        gain: f64,
    ) -> Result<Self> {
        let weight = params.register(
            &format!("{name}.weight"),
            &[out_features, in_features],
            Init::FanInUniform {
                fan_in: in_features,
                gain,
            },
        )?;
        let bias = params.register(&format!("{name}.bias"), &[out_features], Init::Zeros)?;
        Ok(Linear {
            weight,
            bias,
            in_features,
            out_features,
        })
    }

    fn weight_view<'a>(&self, params: &'a ModelParams) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.out_features, self.in_features), params.value(self.weight))
            .expect("weight shape")
    }

    pub fn forward(&self, params: &ModelParams, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_features {
            return Err(Error::input(format!(
                "linear layer expects {} features, got {}",
                self.in_features,
                x.ncols()
            )));
        }
        let bias = params.value(self.bias);
        let mut y = Array2::<f64>::zeros((x.nrows(), self.out_features));
        for mut row in y.outer_iter_mut() {
            row.as_slice_mut().unwrap().copy_from_slice(bias);
        }
        general_mat_mul(1.0, x, &self.weight_view(params).t(), 1.0, &mut y);
        Ok(y)
    }

    /// Accumulates weight/bias gradients given the layer input `x`; returns `dL/dx`.
    pub fn backward(&self, params: &mut ModelParams, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        let mut dx = Array2::<f64>::zeros((x.nrows(), self.in_features));
        general_mat_mul(1.0, dy, &self.weight_view(params), 0.0, &mut dx);
        {
            let grad = params.grad_mut(self.weight);
            let mut dw = ArrayViewMut2::from_shape((self.out_features, self.in_features), grad)
                .expect("weight shape");
            general_mat_mul(1.0, &dy.t(), x, 1.0, &mut dw);
        }
        let db = dy.sum_axis(Axis(0));
        for (g, d) in params.grad_mut(self.bias).iter_mut().zip(db.iter()) {
            *g += d;
        }
        dx
    }
}

pub fn relu4(x: &Tensor4) -> Tensor4 {
    x.mapv(|v| v.max(0.0))
}

pub fn relu2(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Masks `dy` in place by the ReLU output `y`.
pub fn relu_backward_inplace<D: ndarray::Dimension>(
    dy: &mut ndarray::Array<f64, D>,
    y: &ndarray::Array<f64, D>,
) {
    dy.zip_mut_with(y, |g, &v| {
        if v <= 0.0 {
            *g = 0.0
        }
    });
}

/// Spatial mean per channel: `(N, C, H, W) → (N, C)`.
pub fn global_avg_pool(x: &Tensor4) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let inv = 1.0 / (h * w) as f64;
    let mut out = Array2::<f64>::zeros((n, c));
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = x.index_axis(Axis(0), i).index_axis(Axis(0), j).sum() * inv;
    }
    out
}

/// Adds the gradient of [`global_avg_pool`] into `dx`.
pub fn global_avg_pool_backward(dy: &Array2<f64>, dx: &mut Tensor4) {
    let (_, _, h, w) = dx.dim();
    let inv = 1.0 / (h * w) as f64;
    for ((i, j), &g) in dy.indexed_iter() {
        dx.index_axis_mut(Axis(0), i)
            .index_axis_mut(Axis(0), j)
            .mapv_inplace(|v| v + g * inv);
    }
}
