//! Central finite-difference gradient verification.

use crate::params::{Gradients, ParamStore};

/// Max over coordinates of `|analytic − fd| / max(1, |analytic|)`, where `fd`
/// is the central difference `(f(x+h) − f(x−h)) / 2h`.
pub fn finite_diff_check(f: impl Fn(&[f64]) -> f64, analytic: &[f64], point: &[f64], h: f64) -> f64 {
    assert_eq!(analytic.len(), point.len(), "gradient and point lengths differ");
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((analytic[i] - fd).abs() / analytic[i].abs().max(1.0));
    }
    worst
}

/// Per-tensor report from [`check_params`].
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub coords: usize,
}

/// Perturbs every scalar of every tensor in `store` and compares `loss`'s
/// finite differences against `analytic`. Tensors without a gradient entry are
/// treated as having zero gradient.
pub fn check_params(
    store: &ParamStore,
    analytic: &Gradients,
    loss: impl Fn(&ParamStore) -> f64,
    h: f64,
) -> Vec<ParamCheck> {
    let mut work = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids() {
        let n = store.get(id).len();
        let grad: Vec<f64> = analytic.get(id).map_or_else(|| vec![0.0; n], |t| t.data().to_vec());
        let mut worst: f64 = 0.0;
        for (i, &g) in grad.iter().enumerate() {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let up = loss(&work);
            work.get_mut(id).data_mut()[i] = orig - h;
            let down = loss(&work);
            work.get_mut(id).data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((g - fd).abs() / g.abs().max(1.0));
        }
        out.push(ParamCheck {
            name: store.name(id).to_string(),
            max_rel_error: worst,
            coords: n,
        });
    }
    out
}
