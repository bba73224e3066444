use super::ops::{matvec_add, matvec_t_add, outer_add, sigmoid};
use super::{Grads, Init, ParamId, ParamStore, TensorError};

/// Gated recurrent cell:
///
/// ```text
/// z  = σ(Wz x + Uz h + bz)
/// r  = σ(Wr x + Ur h + br)
/// ĥ  = tanh(Wh x + Uh (r ⊙ h) + bh)
/// h' = (1 − z) ⊙ h + z ⊙ ĥ
/// ```
///
/// `wx` stacks the input weights as rows `[z; r; h]`, `uzr` stacks `[Uz; Ur]`.
#[derive(Clone, Copy, Debug)]
pub struct GruCell {
    pub wx: ParamId,
    pub uzr: ParamId,
    pub uh: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    rh: Vec<f64>,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Result<GruCell, TensorError> {
        Ok(GruCell {
            wx: store.add(&format!("{name}.wx"), &[3 * hidden, in_dim], Init::Glorot)?,
            uzr: store.add(&format!("{name}.uzr"), &[2 * hidden, hidden], Init::Glorot)?,
            uh: store.add(&format!("{name}.uh"), &[hidden, hidden], Init::Glorot)?,
            b: store.add(&format!("{name}.b"), &[3 * hidden], Init::Zeros)?,
            in_dim,
            hidden,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruCache) {
        let n = self.hidden;
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(h_prev.len(), n);
        let mut pre = store.get(self.b).data.clone();
        matvec_add(&store.get(self.wx).data, x, &mut pre);
        matvec_add(&store.get(self.uzr).data, h_prev, &mut pre[..2 * n]);
        let z: Vec<f64> = pre[..n].iter().map(|&v| sigmoid(v)).collect();
        let r: Vec<f64> = pre[n..2 * n].iter().map(|&v| sigmoid(v)).collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut cand_pre = pre[2 * n..].to_vec();
        matvec_add(&store.get(self.uh).data, &rh, &mut cand_pre);
        let cand: Vec<f64> = cand_pre.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..n)
            .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * cand[i])
            .collect();
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            cand,
            rh,
        };
        (h, cache)
    }

    /// Backpropagate `∂L/∂h'`; accumulates parameter gradients and `∂L/∂x`
    /// into `dx`, returns `∂L/∂h_prev`.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &GruCache,
        dh: &[f64],
        grads: &mut Grads,
        dx: &mut [f64],
    ) -> Vec<f64> {
        let n = self.hidden;
        let mut dpre = vec![0.0; 3 * n];
        let mut dh_prev = vec![0.0; n];
        for i in 0..n {
            let (z, c, hp) = (cache.z[i], cache.cand[i], cache.h_prev[i]);
            dpre[i] = dh[i] * (c - hp) * z * (1.0 - z);
            dpre[2 * n + i] = dh[i] * z * (1.0 - c * c);
            dh_prev[i] = dh[i] * (1.0 - z);
        }
        // candidate path through Uh (r ⊙ h)
        let mut drh = vec![0.0; n];
        matvec_t_add(&store.get(self.uh).data, &dpre[2 * n..], &mut drh);
        outer_add(grads.data_mut(self.uh), &dpre[2 * n..], &cache.rh);
        for i in 0..n {
            let r = cache.r[i];
            dpre[n + i] = drh[i] * cache.h_prev[i] * r * (1.0 - r);
            dh_prev[i] += drh[i] * r;
        }
        outer_add(grads.data_mut(self.uzr), &dpre[..2 * n], &cache.h_prev);
        matvec_t_add(&store.get(self.uzr).data, &dpre[..2 * n], &mut dh_prev);
        outer_add(grads.data_mut(self.wx), &dpre, &cache.x);
        matvec_t_add(&store.get(self.wx).data, &dpre, dx);
        for (g, d) in grads.data_mut(self.b).iter_mut().zip(&dpre) {
            *g += d;
        }
        dh_prev
    }
}

/// Two gated cells run over a sequence in opposite directions; slot `j`
/// gets `concat(forward_j, backward_j)`. Both directions start from zero.
#[derive(Clone, Copy, Debug)]
pub struct BiGru {
    pub fwd: GruCell,
    pub bwd: GruCell,
}

#[derive(Clone, Debug)]
pub struct BiGruCache {
    fwd: Vec<GruCache>,
    bwd: Vec<GruCache>,
}

impl BiGru {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Result<BiGru, TensorError> {
        Ok(BiGru {
            fwd: GruCell::new(store, &format!("{name}.fwd"), in_dim, hidden)?,
            bwd: GruCell::new(store, &format!("{name}.bwd"), in_dim, hidden)?,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    pub fn forward(&self, store: &ParamStore, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, BiGruCache) {
        let k = xs.len();
        let mut h = vec![0.0; self.fwd.hidden];
        let mut fwd_h = Vec::with_capacity(k);
        let mut fwd_c = Vec::with_capacity(k);
        for x in xs {
            let (next, c) = self.fwd.forward(store, x, &h);
            fwd_h.push(next.clone());
            fwd_c.push(c);
            h = next;
        }
        let mut h = vec![0.0; self.bwd.hidden];
        let mut bwd_h = vec![Vec::new(); k];
        let mut bwd_c = Vec::with_capacity(k);
        for j in (0..k).rev() {
            let (next, c) = self.bwd.forward(store, &xs[j], &h);
            bwd_h[j] = next.clone();
            bwd_c.push(c);
            h = next;
        }
        bwd_c.reverse();
        let g = fwd_h
            .into_iter()
            .zip(bwd_h)
            .map(|(mut a, b)| {
                a.extend(b);
                a
            })
            .collect();
        (
            g,
            BiGruCache {
                fwd: fwd_c,
                bwd: bwd_c,
            },
        )
    }

    /// Given `∂L/∂g_j` for every slot, accumulate parameter gradients and
    /// return `∂L/∂x_j`.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &BiGruCache,
        dg: &[Vec<f64>],
        grads: &mut Grads,
    ) -> Vec<Vec<f64>> {
        let k = dg.len();
        let hf = self.fwd.hidden;
        let mut dxs = vec![vec![0.0; self.fwd.in_dim]; k];
        let mut carry = vec![0.0; hf];
        for j in (0..k).rev() {
            let dh: Vec<f64> = dg[j][..hf].iter().zip(&carry).map(|(a, b)| a + b).collect();
            carry = self.fwd.backward(store, &cache.fwd[j], &dh, grads, &mut dxs[j]);
        }
        let mut carry = vec![0.0; self.bwd.hidden];
        for j in 0..k {
            let dh: Vec<f64> = dg[j][hf..].iter().zip(&carry).map(|(a, b)| a + b).collect();
            carry = self.bwd.backward(store, &cache.bwd[j], &dh, grads, &mut dxs[j]);
        }
        dxs
    }
}
