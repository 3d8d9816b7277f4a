use std::collections::BTreeMap;

use ndarray::Zip;

use crate::param::Param;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Adam with per-name first/second moment state. Updates are applied in the
/// caller's parameter order, which is fixed by model construction, so a run
/// is bit-reproducible.
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self { cfg, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Param], grads: &BTreeMap<String, Tensor>) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for p in params.iter_mut() {
            let Some(g) = grads.get(&p.name) else { continue };
            let m = self
                .m
                .entry(p.name.clone())
                .or_insert_with(|| ndarray::ArrayD::zeros(g.raw_dim()).into_shared());
            let v = self
                .v
                .entry(p.name.clone())
                .or_insert_with(|| ndarray::ArrayD::zeros(g.raw_dim()).into_shared());
            let mut new_m = m.to_owned();
            let mut new_v = v.to_owned();
            Zip::from(&mut new_m).and(&g.view()).for_each(|m, g| *m = b1 * *m + (1.0 - b1) * g);
            Zip::from(&mut new_v)
                .and(&g.view())
                .for_each(|v, g| *v = b2 * *v + (1.0 - b2) * g * g);
            let mut value = p.value.to_owned();
            let (lr, eps) = (self.cfg.lr, self.cfg.eps);
            Zip::from(&mut value).and(&new_m).and(&new_v).for_each(|p, m, v| {
                let mh = m / bc1;
                let vh = v / bc2;
                *p -= lr * mh / (vh.sqrt() + eps);
            });
            *m = new_m.into_shared();
            *v = new_v.into_shared();
            p.value = value.into_shared();
        }
    }
}
