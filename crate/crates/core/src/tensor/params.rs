use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use super::array::{Float, Tensor};
use super::tape::Tape;
use crate::error::{Error, Result};

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// A named parameter or buffer with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param {
    name: String,
    value: Arc<Tensor>,
    grad: Tensor,
    trainable: bool,
}

impl Param {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub(crate) fn value_arc(&self) -> Arc<Tensor> {
        self.value.clone()
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        Arc::make_mut(&mut self.value)
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut Tensor {
        &mut self.grad
    }

    /// Value (copy-on-write) and gradient, borrowed together.
    pub fn value_and_grad(&mut self) -> (&mut Tensor, &Tensor) {
        (Arc::make_mut(&mut self.value), &self.grad)
    }

    /// Buffers (batchnorm running statistics) are not trainable.
    pub fn trainable(&self) -> bool {
        self.trainable
    }
}

/// Flat, ordered collection of the parameters of one model.
#[derive(Debug)]
pub struct ParamStore {
    id: u64,
    params: Vec<Param>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        ParamStore {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: self.params.clone(),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
        }
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> usize {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param {
            name: name.into(),
            value: Arc::new(value),
            grad,
            trainable,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, index: usize) -> &Param {
        &self.params[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Param {
        &mut self.params[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn set_value(&mut self, index: usize, value: Tensor) -> Result<()> {
        let p = &mut self.params[index];
        if p.value.shape() != value.shape() {
            return Err(Error::dim(format!(
                "parameter {} has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = Arc::new(value);
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds the gradients computed on `tape` into the accumulated gradients.
    pub fn accumulate_grads(&mut self, tape: &Tape) {
        for (idx, node) in tape.bound_params(self) {
            if !self.params[idx].trainable {
                continue;
            }
            if let Some(g) = tape.grad_of(node) {
                self.params[idx].grad.add_assign(&g);
            }
        }
    }

    /// Copies all values from a store with an identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::dim("parameter stores differ in length"));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.value.shape() != src.value.shape() {
                return Err(Error::dim(format!("shape mismatch for {}", dst.name)));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }

    /// Concatenated values of every trainable parameter.
    pub fn flat_values(&self) -> Vec<Float> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }
}

/// Kaiming-uniform initialisation: U(-b, b) with b = sqrt(6 / fan_in).
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound) as Float)
}

/// Bias initialisation U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn bias_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound) as Float)
}
