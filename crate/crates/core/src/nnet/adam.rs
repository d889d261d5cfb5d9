use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Gradients;
use super::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub peak_lr: f64,
    pub warmup: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    /// Full-size schedule; small runs override `peak_lr`/`warmup`.
    fn default() -> Self {
        Self {
            peak_lr: 7e-4,
            warmup: 4000,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

impl AdamConfig {
    /// Inverse-square-root schedule with linear warmup; peaks at `warmup`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let s = step.max(1) as f64;
        let w = self.warmup.max(1) as f64;
        self.peak_lr * (s / w).min((w / s).sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamStore) -> Self {
        let zeros = |p: &ParamStore| {
            p.iter()
                .map(|(_, _, t)| Matrix::zeros(t.rows(), t.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            cfg,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &Matrix {
        &self.m[i]
    }

    /// One bias-corrected update. Unreached parameters count as zero
    /// gradient. A non-finite gradient aborts before anything changes.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        for (id, g) in grads.iter() {
            if g.shape() != params.get(id).shape() {
                return Err(Error::Shape(format!(
                    "gradient for {} is {:?}, parameter is {:?}",
                    params.name(id),
                    g.shape(),
                    params.get(id).shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let lr = self.cfg.lr_at(self.step);
        let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.eps);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for id in params.ids().collect::<Vec<_>>() {
            let i = id.0;
            let g = grads.get(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = params.get_mut(id);
            for k in 0..p.len() {
                let gk = g.map_or(0.0, |g| g.data()[k]);
                let mk = b1 * m.data()[k] + (1.0 - b1) * gk;
                let vk = b2 * v.data()[k] + (1.0 - b2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let update = lr * (mk / c1) / ((vk / c2).sqrt() + eps);
                p.data_mut()[k] -= update;
            }
        }
        Ok(())
    }
}
