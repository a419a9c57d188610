use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with decoupled weight decay.
///
/// The decay is applied directly to the parameters before the Adam delta,
/// so it never enters the moment estimates.
#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamConfig {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: first/second moment accumulators per parameter tensor
/// plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, param_sizes: &[usize]) -> Result<Self> {
        if cfg.learning_rate <= 0.0 {
            return Err(Error::contract("AdamState::new", "learning rate must be > 0"));
        }
        let moments = param_sizes
            .iter()
            .map(|&n| (vec![0.0; n], vec![0.0; n]))
            .collect();
        Ok(AdamState {
            cfg,
            step: 0,
            moments,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the whole parameter group. `params` and `grads`
    /// must match the sizes given at construction, in the same order.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.moments.len() || grads.len() != self.moments.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "expected {} tensors, got {} params / {} grads",
                    self.moments.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        self.step += 1;
        let t = self.step as f64;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.moments.iter_mut())
        {
            if p.numel() != m.len() || g.numel() != m.len() {
                return Err(Error::shape(
                    "adam_step",
                    format!("tensor of {} values vs state of {}", p.numel(), m.len()),
                ));
            }
            let pd = p.data_mut();
            let gd = g.data();
            for i in 0..pd.len() {
                // Decoupled decay first, then the Adam delta.
                pd[i] -= c.learning_rate * c.weight_decay * pd[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gd[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gd[i] * gd[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                pd[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_state(lr: f64, wd: f64) -> AdamState {
        AdamState::new(AdamConfig::new(lr, wd), &[1]).unwrap()
    }

    #[test]
    fn zero_grad_zero_decay_leaves_params_unchanged() {
        let mut st = scalar_state(3e-4, 0.0);
        let mut p = Tensor::scalar(1.5).unwrap();
        let g = Tensor::scalar(0.0).unwrap();
        st.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p.data()[0], 1.5);
    }

    #[test]
    fn single_step_on_square_moves_toward_zero_by_lr() {
        // f(x) = x^2, grad at x=1 is 2. After bias correction the first
        // Adam delta is lr * g / (|g| + eps) ~= lr.
        let mut st = scalar_state(0.1, 0.0);
        let mut p = Tensor::scalar(1.0).unwrap();
        let g = Tensor::scalar(2.0).unwrap();
        st.step(&mut [&mut p], &[&g]).unwrap();
        let x = p.data()[0];
        assert!(x < 1.0, "must move toward zero");
        assert!((1.0 - x - 0.1).abs() < 1e-6, "step size ~= lr, got {}", 1.0 - x);
    }

    #[test]
    fn weight_decay_only_applies_linear_shrink() {
        let mut st = scalar_state(3e-4, 1e-6);
        let mut p = Tensor::scalar(1.0).unwrap();
        let g = Tensor::scalar(0.0).unwrap();
        st.step(&mut [&mut p], &[&g]).unwrap();
        let expected = 1.0 - 3e-4 * 1e-6;
        assert!((p.data()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut st = scalar_state(0.1, 0.0);
        let mut p = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let g = Tensor::vector(vec![1.0, 2.0]).unwrap();
        assert!(st.step(&mut [&mut p], &[&g]).is_err());
    }

    #[test]
    fn step_counter_increases() {
        let mut st = scalar_state(0.1, 0.0);
        let mut p = Tensor::scalar(1.0).unwrap();
        let g = Tensor::scalar(1.0).unwrap();
        st.step(&mut [&mut p], &[&g]).unwrap();
        st.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(st.step_count(), 2);
    }
}
