//! Adam with bias correction and a stepped exponential learning-rate decay.

use super::model::ParamRef;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiply the learning rate by `decay_factor` every `decay_every` steps.
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr0: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_factor: 0.99,
            decay_every: 150,
        }
    }
}

impl AdamConfig {
    /// Learning rate at a 0-based step index:
    /// `lr0 * factor^(step / every)`, so steps 0..149 run at `lr0` and step
    /// 150 at `lr0 * 0.99`.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr0 * self.decay_factor.powi((step / self.decay_every) as i32)
    }
}

/// Moment buffers are allocated lazily on the first step, keyed by parameter
/// order, which must stay stable across steps.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: usize,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// One update from the gradients in `params`. `step` is the 0-based
    /// iteration index used for the learning-rate schedule.
    pub fn step(&mut self, params: &mut [ParamRef<'_, T>], step: usize) {
        if self.m.is_empty() {
            for p in params.iter() {
                self.m.push(Tensor::zeros(p.value.shape()));
                self.v.push(Tensor::zeros(p.value.shape()));
            }
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed size");
        self.t += 1;
        let lr = self.cfg.lr_at(step);
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let eps = self.cfg.eps;
        for (idx, p) in params.iter_mut().enumerate() {
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            for (i, (theta, g)) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data().iter().map(|g| g.into_f64()))
                .enumerate()
            {
                let mf = m[i].into_f64() * b1 + (1.0 - b1) * g;
                let vf = v[i].into_f64() * b2 + (1.0 - b2) * g * g;
                m[i] = T::from_f64(mf);
                v[i] = T::from_f64(vf);
                let update = lr * (mf / bc1) / ((vf / bc2).sqrt() + eps);
                *theta = T::from_f64(theta.into_f64() - update);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{FusedModel, NetworkConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lr_schedule_matches_stated_decay() {
        let cfg = AdamConfig::default();
        assert_eq!(cfg.lr_at(0), 0.002);
        assert_eq!(cfg.lr_at(149), 0.002);
        assert!((cfg.lr_at(150) - 0.002 * 0.99).abs() < 1e-15);
        assert!((cfg.lr_at(450) - 0.002 * 0.99f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net_cfg = NetworkConfig {
            aux_channels: [2, 2, 2],
            primary_channels: [2, 2, 2],
        };
        let mut model = FusedModel::<f32>::new(&net_cfg, &mut rng);
        let mut before = Vec::new();
        model.visit_params(&mut |p| before.push(p.value.clone()));
        let mut adam = Adam::new(AdamConfig {
            lr0: 0.0,
            ..AdamConfig::default()
        });
        for p in model.params_mut().iter_mut() {
            p.grad.fill(1.0);
        }
        adam.step(&mut model.params_mut(), 0);
        let mut after = Vec::new();
        model.visit_params(&mut |p| after.push(p.value.clone()));
        assert_eq!(before, after);
    }

    /// Single-parameter quadratic `(x - 3)^2`: the optimizer should land
    /// within 1e-3 of the closed-form minimum in 500 steps.
    #[test]
    fn quadratic_toy_problem_converges() {
        let mut x = Tensor::<f64>::from_vec(&[1], vec![0.0]);
        let mut g = Tensor::<f64>::zeros(&[1]);
        let mut adam = Adam::new(AdamConfig {
            lr0: 0.05,
            ..AdamConfig::default()
        });
        for step in 0..500 {
            g.data_mut()[0] = 2.0 * (x.data()[0] - 3.0);
            let mut params = vec![ParamRef {
                name: "x".into(),
                value: &mut x,
                grad: &mut g,
            }];
            adam.step(&mut params, step);
        }
        let x = x.data()[0];
        assert!(
            (x - 3.0).abs() < 1e-3,
            "did not converge to the closed-form minimum: x = {x}"
        );
    }
}
