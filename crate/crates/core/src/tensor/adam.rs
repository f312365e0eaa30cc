use serde::{Deserialize, Serialize};

use super::{Element, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment estimates are kept in `f64`.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates `params` in place from `grads` (same order and shapes each call).
    pub fn step<T: Element>(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::invalid(format!(
                "adam got {} params and {} grads",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::invalid("adam parameter count changed between steps"));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.dims() != g.dims() {
                return Err(Error::shape("adam", p.dims(), g.dims()));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let gi = gi.as_f64();
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let update = lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
                *w = T::from_f64(w.as_f64() - update);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_lr() {
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(cfg);
        let grads = [-2.0, 0.5, 3e-3, 0.0];
        let mut p = vec![Tensor::<f64>::from_f64_slice(&[4], &[1.0; 4]).unwrap()];
        let g = vec![Tensor::<f64>::from_f64_slice(&[4], &grads).unwrap()];
        opt.step(&mut p, &g).unwrap();
        for (w, gi) in p[0].data().iter().zip(grads) {
            let expected = 1.0 - cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((w - expected).abs() < 1e-12, "{w} vs {expected}");
        }
    }

    #[test]
    fn minimizes_quadratic() {
        let mut opt = Adam::new(AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        });
        let mut p = vec![Tensor::<f32>::from_f64_slice(&[2], &[3.0, -4.0]).unwrap()];
        for _ in 0..2000 {
            let g = vec![Tensor::new(vec![2], p[0].data().iter().map(|w| 2.0 * w).collect()).unwrap()];
            opt.step(&mut p, &g).unwrap();
        }
        assert!(p[0].data().iter().all(|w| w.abs() < 1e-2));
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut opt = Adam::new(AdamConfig::default());
        let mut p = vec![Tensor::<f32>::zeros(&[2])];
        let g = vec![Tensor::<f32>::zeros(&[3])];
        assert!(opt.step(&mut p, &g).is_err());
    }
}
