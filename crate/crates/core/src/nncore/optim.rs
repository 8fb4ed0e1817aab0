use serde::{Deserialize, Serialize};

use super::params::{round_f32, ModelParams};
use crate::error::{Error, Result};

/// Stochastic gradient descent with classic momentum:
/// `v ← μ·v + g`, `w ← w − lr·v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    /// Rescale the whole gradient when its L2 norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for Sgd {
    fn default() -> Self {
        Sgd {
            lr: 0.01,
            momentum: 0.9,
            clip_norm: Some(5.0),
        }
    }
}

impl Sgd {
    /// Applies one update and zeroes every gradient. Refuses to touch any
    /// weight if some gradient is non-finite.
    pub fn step(&self, params: &mut ModelParams) -> Result<()> {
        for p in params.iter() {
            if let Some(i) = p.grad().iter().position(|g| !g.is_finite()) {
                return Err(Error::Numeric {
                    param: p.name().to_string(),
                    detail: format!("gradient[{i}] = {}", p.grad()[i]),
                });
            }
        }
        let scale = match self.clip_norm {
            Some(max) => {
                let norm = params.grad_norm();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        for p in params.params_mut() {
            let (_, value, grad, velocity) = p.split_mut();
            for ((w, g), v) in value.iter_mut().zip(grad.iter_mut()).zip(velocity.iter_mut()) {
                *v = self.momentum * *v + scale * *g;
                *w = round_f32(*w - self.lr * *v);
                *g = 0.0;
            }
        }
        Ok(())
    }
}

pub fn sgd_step(params: &mut ModelParams, lr: f64, momentum: f64) -> Result<()> {
    Sgd {
        lr,
        momentum,
        clip_norm: None,
    }
    .step(params)
}
