use rand::seq::index::sample;

use super::{Grads, ParamStore};
use crate::rng::seeded;

/// `|a - n| / max(|a|, |n|)`, with the denominator floored at 1e-6 so that
/// near-zero gradients are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compare an analytic gradient with central differences
/// `(f(p+ε) - f(p-ε)) / 2ε`. Checks every coordinate, or only `coords` when
/// given, and returns the largest relative error.
pub fn grad_check<F>(f: F, point: &[f64], eps: f64, coords: Option<&[usize]>) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(point);
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let mut p = point.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = p[i];
        p[i] = orig + eps;
        let up = f(&p).0;
        p[i] = orig - eps;
        let down = f(&p).0;
        p[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// [`grad_check`] over the parameters of a store. At most `per_param`
/// coordinates of each tensor are sampled (seeded).
pub fn grad_check_store<F>(store: &ParamStore, f: F, eps: f64, per_param: usize, seed: u64) -> f64
where
    F: Fn(&ParamStore) -> (f64, Grads),
{
    let (_, analytic) = f(store);
    let mut rng = seeded(seed);
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for id in store.ids() {
        let n = store.get(id).len();
        let picks: Vec<usize> = if n <= per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, per_param).into_vec()
        };
        for i in picks {
            let orig = store.get(id).data[i];
            probe.get_mut(id).data[i] = orig + eps;
            let up = f(&probe).0;
            probe.get_mut(id).data[i] = orig - eps;
            let down = f(&probe).0;
            probe.get_mut(id).data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.get(id).data[i], numeric));
        }
    }
    worst
}
