//! Minimal differentiable network substrate: convolutions, dense layers,
//! pooling, losses, SGD and weight persistence.
//!
//! Weights are stored as f64 restricted to values exactly representable in
//! f32, so they survive the 32-bit weight file unchanged. All arithmetic runs
//! in f64.

mod backbone;
mod layers;
mod loss;
mod optim;
mod params;
mod weights;

pub use backbone::{Backbone, BackboneCache, BackboneOutput, BackboneSpec};
pub use layers::{
    global_avg_pool, global_avg_pool_backward, relu2, relu4, relu_backward_inplace, Conv2d, ConvCache, Linear,
};
pub use loss::{bce, bce_with_logit, sigmoid, PROB_EPS};
pub use optim::{sgd_step, Sgd};
pub use params::{Init, ModelParams, Param, ParamId};
pub use weights::{load_weights, read_weights, save_weights, write_weights, MAGIC, VERSION};

/// Activations in `(batch, channels, height, width)` order.
pub type Tensor4 = ndarray::Array4<f64>;
