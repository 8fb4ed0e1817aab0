use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};

/// Handle to one parameter array inside a [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Initialization rule for a freshly registered parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform in `±gain·sqrt(6 / fan_in)`.
    FanInUniform { fan_in: usize, gain: f64 },
}

#[derive(Debug, Clone)]
pub struct Param {
    name: String,
    shape: Vec<usize>,
    // Always exactly representable as f32 so weight files round-trip bit for bit.
    value: Vec<f64>,
    grad: Vec<f64>,
    velocity: Vec<f64>,
}

impl Param {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// All learnable weights of one network, each paired with a gradient buffer
/// and a momentum buffer.
#[derive(Debug, Clone)]
pub struct ModelParams {
    seed: u64,
    rng: ChaCha8Rng,
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

pub(crate) fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl ModelParams {
    pub fn new(seed: u64) -> Self {
        ModelParams {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers a new parameter, drawing its initial values from the
    /// model's seeded generator. Names must be unique.
    pub fn register(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::input(format!("duplicate parameter name `{name}`")));
        }
        let len: usize = shape.iter().product();
        let value: Vec<f64> = match init {
            Init::Zeros => vec![0.0; len],
            Init::Constant(c) => vec![round_f32(c); len],
            Init::FanInUniform { fan_in, gain } => {
                let bound = gain * (6.0 / fan_in.max(1) as f64).sqrt();
                (0..len)
                    .map(|_| round_f32(self.rng.random_range(-bound..=bound)))
                    .collect()
            }
        };
        let id = ParamId(self.params.len());
        self.by_name.insert(name.to_string(), id.0);
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            value,
            grad: vec![0.0; len],
            velocity: vec![0.0; len],
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].grad
    }

    /// Sets one weight, rounding it to the nearest f32. Returns the stored value.
    pub fn set(&mut self, id: ParamId, index: usize, v: f64) -> f64 {
        let r = round_f32(v);
        self.params[id.0].value[index] = r;
        r
    }

    /// Replaces a whole weight array (rounded to f32).
    pub fn set_values(&mut self, id: ParamId, values: &[f32]) -> Result<()> {
        let p = &mut self.params[id.0];
        if values.len() != p.value.len() {
            return Err(Error::input(format!(
                "parameter `{}` expects {} values, got {}",
                p.name,
                p.value.len(),
                values.len()
            )));
        }
        for (dst, &src) in p.value.iter_mut().zip(values) {
            *dst = src as f64;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn reset_momentum(&mut self) {
        for p in &mut self.params {
            p.velocity.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Multiplies every gradient by `factor`.
    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Copies weights from `other`, which must have the same names and shapes.
    pub fn copy_values_from(&mut self, other: &ModelParams) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::data(format!(
                "parameter count mismatch: expected {}, found {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(Error::data(format!(
                    "parameter mismatch: expected `{}` {:?}, found `{}` {:?}",
                    dst.name, dst.shape, src.name, src.shape
                )));
            }
            dst.value.copy_from_slice(&src.value);
        }
        Ok(())
    }

    /// Applies one update in place. Used by the optimizer only.
    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub(crate) fn from_loaded(entries: Vec<(String, Vec<usize>, Vec<f32>)>) -> Result<Self> {
        let mut out = ModelParams::new(0);
        for (name, shape, values) in entries {
            let id = out.register(&name, &shape, Init::Zeros)?;
            out.set_values(id, &values)?;
        }
        Ok(out)
    }
}

impl Param {
    pub(crate) fn split_mut(&mut self) -> (&str, &mut [f64], &mut [f64], &mut [f64]) {
        (&self.name, &mut self.value, &mut self.grad, &mut self.velocity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut p = ModelParams::new(1);
        p.register("a", &[2, 3], Init::Zeros).unwrap();
        assert!(p.register("a", &[1], Init::Zeros).is_err());
        assert_eq!(p.scalar_count(), 6);
    }

    #[test]
    fn init_is_seeded_and_on_the_f32_lattice() {
        let mk = || {
            let mut p = ModelParams::new(42);
            let id = p.register("w", &[64], Init::FanInUniform { fan_in: 9, gain: 1.0 }).unwrap();
            p.value(id).to_vec()
        };
        let a = mk();
        assert_eq!(a, mk());
        let bound = (6.0f64 / 9.0).sqrt();
        assert!(a.iter().all(|&v| v.abs() <= bound + 1e-6 && v == round_f32(v)));
    }
}
