//! Adam with cosine learning-rate decay, over named parameter tensors.

use std::collections::BTreeMap;

use super::{Result, Tensor};

/// A named, ordered set of parameter tensors. Ordering is lexicographic by
/// name so that every traversal (updates, serialization, hashing) is
/// deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn set(&mut self, name: &str, value: Tensor) {
        self.entries.insert(name.to_string(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn merge(&mut self, other: ParamSet) {
        self.entries.extend(other.entries);
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }
}

/// Cosine decay from `lr_max` to `lr_min` over `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr_max: f64, lr_min: f64) -> f64 {
    if total_steps <= 1 {
        return lr_max;
    }
    let frac = (step.min(total_steps - 1)) as f64 / (total_steps - 1) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: usize,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update over all parameters that have a gradient entry.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (name, grad) in grads {
            let Some(current) = params.get(name) else { continue };
            let n = current.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let mut next = current.data().to_vec();
            for i in 0..n {
                let g = grad.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                next[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
            let shape = current.shape().to_vec();
            params.set(name, Tensor::new(shape, next)?);
        }
        Ok(())
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert!((cosine_lr(0, 100, 2e-4, 2e-5) - 2e-4).abs() < 1e-12);
        assert!((cosine_lr(99, 100, 2e-4, 2e-5) - 2e-5).abs() < 1e-12);
        let mid = cosine_lr(50, 101, 2e-4, 2e-5);
        assert!((mid - (2e-5 + 0.5 * (2e-4 - 2e-5))).abs() < 1e-9);
    }

    #[test]
    fn adam_descends_quadratic() {
        // minimize (x - 3)^2 from x = 0
        let mut params = ParamSet::new();
        params.insert("x", Tensor::scalar(0.0).unwrap());
        let mut opt = Adam::new();
        for _ in 0..2000 {
            let x = params.get("x").unwrap().item().unwrap();
            let mut grads = BTreeMap::new();
            grads.insert("x".to_string(), Tensor::scalar(2.0 * (x - 3.0)).unwrap());
            opt.step(&mut params, &grads, 0.05).unwrap();
        }
        let x = params.get("x").unwrap().item().unwrap();
        assert!((x - 3.0).abs() < 1e-3, "converged to {x}");
    }
}
