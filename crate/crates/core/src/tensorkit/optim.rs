use super::{Grads, ParamStore, TensorError};

/// Momentum SGD: `v ← μ v + g`, `p ← p − η v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
}

impl Default for Sgd {
    fn default() -> Self {
        Sgd {
            lr: 0.01,
            momentum: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub velocity: Grads,
}

impl OptimState {
    pub fn new(store: &ParamStore) -> OptimState {
        OptimState {
            velocity: store.zero_grads(),
        }
    }
}

impl Sgd {
    pub fn step(
        &self,
        store: &mut ParamStore,
        grads: &Grads,
        state: &mut OptimState,
    ) -> Result<(), TensorError> {
        let params = store.tensors();
        let (g, v) = (grads.tensors(), state.velocity.tensors());
        if g.len() != params.len() || v.len() != params.len() {
            return Err(TensorError::Shape {
                expected: vec![params.len()],
                got: vec![g.len(), v.len()],
            });
        }
        for ((p, g), v) in params.iter().zip(g).zip(v) {
            if p.shape != g.shape || p.shape != v.shape {
                return Err(TensorError::Shape {
                    expected: p.shape.clone(),
                    got: g.shape.clone(),
                });
            }
        }
        if !grads.is_finite() {
            return Err(TensorError::NonFinite("gradient"));
        }
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let vel = state.velocity.data_mut(id);
            for (vi, gi) in vel.iter_mut().zip(&grads.get(id).data) {
                *vi = self.momentum * *vi + gi;
            }
            let vel = &state.velocity.get(id).data;
            for (p, vi) in store.get_mut(id).data.iter_mut().zip(vel) {
                *p -= self.lr * vi;
            }
        }
        Ok(())
    }
}
