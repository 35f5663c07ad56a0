use super::params::{GradSet, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW moments and step counter for one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &ParamStore, config: AdamWConfig) -> Result<Self> {
        if !(config.lr > 0.0) || config.weight_decay < 0.0 || config.eps <= 0.0 {
            return Err(Error::Param(format!("invalid AdamW config {config:?}")));
        }
        for b in [config.beta1, config.beta2] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Param(format!("beta {b} outside (0, 1)")));
            }
        }
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Ok(Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.v[i]
    }

    /// One bias-corrected Adam update with decoupled weight decay:
    /// `p ← p − lr·(m̂/(√v̂+ε) + wd·p)`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradSet) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::shape("adamw_step", &[params.len()], &[grads.len()]));
        }
        for (id, g) in params.ids().zip(grads.buffers()) {
            if g.len() != params.get(id).len() || self.m[id.index()].len() != g.len() {
                return Err(Error::shape("adamw_step", params.get(id).shape(), &[g.len()]));
            }
        }
        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (id, g) in params.ids().zip(grads.buffers()) {
            let i = id.index();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = params.get_mut(id).data_mut();
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= lr * (mhat / (vhat.sqrt() + eps) + weight_decay * p[k]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn store(vals: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::vector(vals.to_vec()).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut p = store(&[1.0, -2.0]);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = OptimizerState::new(&p, cfg).unwrap();
        let g = GradSet::zeros(&p);
        st.step(&mut p, &g).unwrap();
        assert_eq!(p.by_path("w").unwrap().data(), &[1.0, -2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(&[0.5]);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = OptimizerState::new(&p, cfg).unwrap();
        let mut g = GradSet::zeros(&p);
        g.get_mut(p.id("w").unwrap())[0] = 1.0;
        st.step(&mut p, &g).unwrap();
        let delta = p.by_path("w").unwrap().data()[0] - 0.5;
        assert!((delta + 0.1).abs() < 1e-8, "{delta}");
    }

    #[test]
    fn decay_only_path() {
        let mut p = store(&[2.0]);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.01,
            ..Default::default()
        };
        let mut st = OptimizerState::new(&p, cfg).unwrap();
        let g = GradSet::zeros(&p);
        st.step(&mut p, &g).unwrap();
        assert_eq!(p.by_path("w").unwrap().data()[0], 2.0 * (1.0 - 0.1 * 0.01));
    }

    #[test]
    fn rejects_mismatched_grads() {
        let mut p = store(&[1.0]);
        let other = store(&[1.0, 2.0]);
        let mut st = OptimizerState::new(&p, AdamWConfig::default()).unwrap();
        assert!(st.step(&mut p, &GradSet::zeros(&other)).is_err());
    }
}
