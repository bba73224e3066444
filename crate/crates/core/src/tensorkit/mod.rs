//! Small differentiable toolkit: parameter storage, dense and gated
//! recurrent primitives with hand-written backward passes, losses, momentum
//! SGD and a finite-difference checker.
//!
//! Everything is `f64` and single-threaded per call. Parameters live in a
//! [`ParamStore`] and are addressed by [`ParamId`]; gradients are collected
//! into a [`Grads`] with the same layout.

mod check;
mod gru;
mod ops;
mod optim;

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use check::{grad_check, grad_check_store, relative_error};
pub use gru::{BiGru, BiGruCache, GruCache, GruCell};
pub use ops::{
    affine, affine_backward, log_softmax, sigmoid, sigmoid_bce, softmax, softmax_xent, Affine,
};
pub use optim::{OptimState, Sgd};
pub(crate) use ops::{matvec_add, outer_add};

use crate::rng::seeded;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: Vec<usize>, got: Vec<usize> },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },
    #[error("mask values must be 0 or 1")]
    Mask,
    #[error("duplicate parameter name {0}")]
    Duplicate(String),
    #[error("unknown parameter {0}")]
    Unknown(String),
    #[error("tensor rank {0} exceeds 3")]
    Rank(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor, TensorError> {
        if shape.len() > 3 {
            return Err(TensorError::Rank(shape.len()));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::Shape {
                expected: shape.to_vec(),
                got: vec![data.len()],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite("tensor"));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)) with fan_out = shape[0] and
    /// fan_in = the product of the remaining dims.
    Glorot,
    Zeros,
    Constant(f64),
}

pub const INIT_SCHEME: &str = "glorot-uniform/zero-bias";

/// Named parameter tensors with a seeded initializer.
#[derive(Clone, Debug)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.tensors == other.tensors && self.seed == other.seed
    }
}

impl ParamStore {
    pub fn new(seed: u64) -> ParamStore {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            seed,
            rng: seeded(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId, TensorError> {
        if self.names.iter().any(|n| n == name) {
            return Err(TensorError::Duplicate(name.to_string()));
        }
        if shape.len() > 3 {
            return Err(TensorError::Rank(shape.len()));
        }
        let mut t = Tensor::zeros(shape);
        match init {
            Init::Zeros => {}
            Init::Constant(v) => t.fill(v),
            Init::Glorot => {
                let fan_out = shape.first().copied().unwrap_or(1);
                let fan_in: usize = shape.iter().skip(1).product::<usize>().max(1);
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in &mut t.data {
                    *v = self.rng.gen_range(-s..=s);
                }
            }
        }
        self.names.push(name.to_string());
        self.tensors.push(t);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Zero gradients laid out like this store.
    pub fn zero_grads(&self) -> Grads {
        Grads {
            tensors: self.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
        }
    }

    pub(crate) fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            seed: self.seed,
            scheme: INIT_SCHEME.to_string(),
            params: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(n, t)| (n.clone(), t.clone()))
                .collect(),
        }
    }

    /// Overwrite every parameter from a checkpoint. Names and shapes must
    /// match exactly.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<(), TensorError> {
        if ckpt.params.len() != self.tensors.len() {
            let missing = self
                .names
                .iter()
                .find(|n| !ckpt.params.contains_key(*n))
                .or_else(|| ckpt.params.keys().find(|k| !self.names.contains(k)));
            return Err(TensorError::Unknown(
                missing.cloned().unwrap_or_else(|| "<count>".into()),
            ));
        }
        for (name, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            let src = ckpt
                .params
                .get(name)
                .ok_or_else(|| TensorError::Unknown(name.clone()))?;
            if src.shape != t.shape || src.data.len() != t.data.len() {
                return Err(TensorError::Shape {
                    expected: t.shape.clone(),
                    got: src.shape.clone(),
                });
            }
            if !src.is_finite() {
                return Err(TensorError::NonFinite("checkpoint"));
            }
            t.data.copy_from_slice(&src.data);
        }
        self.seed = ckpt.seed;
        Ok(())
    }
}

/// Flat checkpoint: `{"seed":..,"scheme":..,"params":{name:{"shape":[..],"data":[..]}}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub scheme: String,
    pub params: BTreeMap<String, Tensor>,
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    tensors: Vec<Tensor>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn data_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.tensors[id.0].data
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn zero(&mut self, id: ParamId) {
        self.tensors[id.0].fill(0.0);
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| &t.data)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so the global norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub(crate) fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }
}
