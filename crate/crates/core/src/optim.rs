//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-2 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamConfig,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamConfig) -> Self {
        AdamW { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One update over `(parameter, gradient)` slices. The slice list must
    /// keep the same order and shapes across calls.
    ///
    /// `p <- p * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)`
    pub fn step(&mut self, params: Vec<(&mut [f64], &[f64])>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.step += 1;
        let AdamConfig { learning_rate: lr, beta1, beta2, eps, weight_decay } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step);
        let bc2 = 1.0 - beta2.powi(self.step);
        let decay = 1.0 - lr * weight_decay;
        for ((param, grad), (m, v)) in params.into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = AdamW::new(AdamConfig { learning_rate: 0.1, weight_decay: 0.0, ..Default::default() });
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![3.0, -0.01, 0.0];
        opt.step(vec![(&mut p[..], &g[..])]);
        // m_hat = g, v_hat = g^2 on the first step
        assert!((p[0] - 0.9).abs() < 1e-8);
        assert!((p[1] + 1.9).abs() < 1e-6);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn decay_is_decoupled_from_gradient() {
        let mut opt = AdamW::new(AdamConfig { learning_rate: 0.1, weight_decay: 0.5, ..Default::default() });
        let mut p = vec![2.0];
        let g = vec![0.0];
        opt.step(vec![(&mut p[..], &g[..])]);
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = AdamW::new(AdamConfig { learning_rate: 0.05, weight_decay: 0.0, ..Default::default() });
        let mut x = vec![3.0, -4.0];
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * (v - 1.0)).collect();
            opt.step(vec![(&mut x[..], &g[..])]);
        }
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-3), "{x:?}");
    }
}
