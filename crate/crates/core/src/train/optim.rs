use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::nn::Module;
use crate::tensor::{Real, Tensor};

/// Single non-restarting cosine anneal from `lr0` at `t = 0` to 0 at `t = total`.
pub fn cosine_lr(lr0: f64, t: u64, total: u64) -> f64 {
    let frac = (t.min(total) as f64) / (total.max(1) as f64);
    lr0 * (1.0 + (PI * frac).cos()) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; moments are keyed by parameter name.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub hyper: AdamHyper,
    pub step: u64,
    pub moments: BTreeMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(hyper: AdamHyper) -> Self {
        Self {
            hyper,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Applies one update to every parameter of `m` whose name passes `filter`.
    /// `prefix` namespaces the moment keys when several modules share an optimizer.
    pub fn update<M: Module<T> + ?Sized>(&mut self, m: &mut M, prefix: &str, lr: f64, filter: &dyn Fn(&str) -> bool) {
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let t = self.step.max(1) as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (ob1, ob2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let step_size = T::lit(lr / c1);
        let inv_c2 = T::lit(1.0 / c2);
        let eps = T::lit(eps);
        let moments = &mut self.moments;
        m.visit_params_mut(prefix, &mut |name, p| {
            if !filter(name) {
                return;
            }
            let (mt, vt) = moments
                .entry(name.to_string())
                .or_insert_with(|| (Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())));
            for (((w, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(mt.data_mut())
                .zip(vt.data_mut())
            {
                *m = b1 * *m + ob1 * g;
                *v = b2 * *v + ob2 * g * g;
                *w -= step_size * *m / ((*v * inv_c2).sqrt() + eps);
            }
        });
    }

    /// Advances the step counter; call once per iteration before `update`.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }
}

/// Global L2 norm of all gradients.
pub fn grad_norm<T: Real, M: Module<T> + ?Sized>(m: &M) -> f64 {
    let mut s = 0.0;
    m.visit_params("", &mut |_, p| {
        s += p.grad.data().iter().map(|g| g.to_f64_lossy().powi(2)).sum::<f64>()
    });
    s.sqrt()
}

pub fn scale_grads<T: Real, M: Module<T> + ?Sized>(m: &mut M, factor: f64) {
    let f = T::lit(factor);
    m.visit_params_mut("", &mut |_, p| p.grad.data_mut().iter_mut().for_each(|g| *g *= f));
}
