use super::{Grads, Init, ParamId, ParamStore, Tensor, TensorError};

/// `out += W x` for a row-major `[out, in]` matrix.
#[inline]
pub(crate) fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dx += Wᵀ dy`.
#[inline]
pub(crate) fn matvec_t_add(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let n = dx.len();
    for (&g, row) in dy.iter().zip(w.chunks_exact(n)) {
        if g == 0.0 {
            continue;
        }
        for (d, a) in dx.iter_mut().zip(row) {
            *d += g * a;
        }
    }
}

/// `dW += dy xᵀ`.
#[inline]
pub(crate) fn outer_add(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let n = x.len();
    for (&g, row) in dy.iter().zip(dw.chunks_exact_mut(n)) {
        if g == 0.0 {
            continue;
        }
        for (d, a) in row.iter_mut().zip(x) {
            *d += g * a;
        }
    }
}

fn expect_shape(t: &Tensor, shape: &[usize]) -> Result<(), TensorError> {
    if t.shape == shape {
        Ok(())
    } else {
        Err(TensorError::Shape {
            expected: shape.to_vec(),
            got: t.shape.clone(),
        })
    }
}

/// `y = W x + b` with `W` of shape `[out, in]`.
pub fn affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Result<Vec<f64>, TensorError> {
    let out = b.len();
    expect_shape(w, &[out, x.len()])?;
    let mut y = b.data.clone();
    matvec_add(&w.data, x, &mut y);
    Ok(y)
}

/// Gradients of [`affine`]: `(∂L/∂x, ∂L/∂W, ∂L/∂b)` given `∂L/∂y`.
pub fn affine_backward(
    w: &Tensor,
    x: &[f64],
    dy: &[f64],
) -> Result<(Vec<f64>, Tensor, Vec<f64>), TensorError> {
    expect_shape(w, &[dy.len(), x.len()])?;
    let mut dx = vec![0.0; x.len()];
    matvec_t_add(&w.data, dy, &mut dx);
    let mut dw = Tensor::zeros(&w.shape);
    outer_add(&mut dw.data, dy, x);
    Ok((dx, dw, dy.to_vec()))
}

/// A dense layer whose weights live in a [`ParamStore`].
#[derive(Clone, Copy, Debug)]
pub struct Affine {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<Affine, TensorError> {
        Ok(Affine {
            w: store.add(&format!("{name}.w"), &[out_dim, in_dim], Init::Glorot)?,
            b: store.add(&format!("{name}.b"), &[out_dim], Init::Zeros)?,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut y = store.get(self.b).data.clone();
        matvec_add(&store.get(self.w).data, x, &mut y);
        y
    }

    /// Accumulate parameter gradients and, if requested, `∂L/∂x` into `dx`.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &[f64],
        dy: &[f64],
        grads: &mut Grads,
        dx: Option<&mut [f64]>,
    ) {
        outer_add(grads.data_mut(self.w), dy, x);
        for (d, g) in grads.data_mut(self.b).iter_mut().zip(dy) {
            *d += g;
        }
        if let Some(dx) = dx {
            matvec_t_add(&store.get(self.w).data, dy, dx);
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

/// `-log softmax(logits)[target]` and its gradient `softmax - onehot`.
pub fn softmax_xent(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>), TensorError> {
    if logits.len() < 2 || target >= logits.len() {
        return Err(TensorError::Index {
            index: target,
            len: logits.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite("softmax_xent logits"));
    }
    let loss = -log_softmax(logits)[target];
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Mean binary cross-entropy of `sigmoid(logits)` against a 0/1 mask.
pub fn sigmoid_bce(logits: &[f64], mask: &[f64]) -> Result<(f64, Vec<f64>), TensorError> {
    if logits.len() != mask.len() {
        return Err(TensorError::Shape {
            expected: vec![logits.len()],
            got: vec![mask.len()],
        });
    }
    if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(TensorError::Mask);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite("sigmoid_bce logits"));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&l, &m) in logits.iter().zip(mask) {
        loss += l.max(0.0) - l * m + (-l.abs()).exp().ln_1p();
        grad.push((sigmoid(l) - m) / n);
    }
    Ok((loss / n, grad))
}
