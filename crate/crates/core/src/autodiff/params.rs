use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AutodiffError;

/// One trainable array with its gradient buffer and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl ParamArray {
    pub fn new(shape: Vec<usize>, value: Vec<f64>) -> Result<Self, AutodiffError> {
        let n: usize = shape.iter().product();
        if n != value.len() {
            return Err(AutodiffError::Shape(format!("parameter shape {shape:?} vs {} values", value.len())));
        }
        Ok(ParamArray { shape, value, grad: vec![0.0; n], m: vec![0.0; n], v: vec![0.0; n] })
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Named parameter arrays, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    arrays: BTreeMap<String, ParamArray>,
    /// Number of optimizer steps taken.
    pub step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, value: Vec<f64>) -> Result<(), AutodiffError> {
        self.arrays.insert(name.to_string(), ParamArray::new(shape, value)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamArray> {
        self.arrays.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamArray> {
        self.arrays.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamArray)> {
        self.arrays.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ParamArray)> {
        self.arrays.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.arrays.keys()
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.arrays.values().map(ParamArray::numel).sum()
    }

    /// Clears gradients; values and moments are untouched.
    pub fn zero_grad(&mut self) {
        for p in self.arrays.values_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds `grads` (keyed by parameter name) into the gradient buffers.
    pub fn accumulate(&mut self, grads: &BTreeMap<String, Vec<f64>>) -> Result<(), AutodiffError> {
        for (name, g) in grads {
            let p = self.arrays.get_mut(name).ok_or_else(|| AutodiffError::UnknownParameter(name.clone()))?;
            if p.grad.len() != g.len() {
                return Err(AutodiffError::Shape(format!("gradient for {name}: {} vs {}", g.len(), p.grad.len())));
            }
            p.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        Ok(())
    }

    /// One bias-corrected Adam update using the accumulated gradients.
    pub fn adam_step(&mut self, cfg: &AdamConfig, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for p in self.arrays.values_mut() {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
                p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
                let mh = p.m[i] / c1;
                let vh = p.v[i] / c2;
                p.value[i] -= lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
    }

    /// Flat copy of all values in name order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.arrays.values().flat_map(|p| p.value.iter().copied()).collect()
    }
}
