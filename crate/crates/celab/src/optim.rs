//! Adaptive-moment gradient descent over lists of parameter tensors.

use crate::autodiff::Tensor;

/// Adam with the usual defaults (β1 0.9, β2 0.999, ε 1e-8).
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, params: &[Tensor]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.step_scaled(params, grads, 1.0);
    }

    /// One update with the learning rate multiplied by `scale` for this
    /// step only (used by the small-gradient escape rule).
    pub fn step_scaled(&mut self, params: &mut [Tensor], grads: &[Tensor], scale: f64) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.rows, g.rows);
            assert_eq!(p.cols, g.cols);
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= scale * self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_descends_a_quadratic() {
        // minimize (x-3)^2
        let mut params = vec![Tensor::scalar(0.0)];
        let mut opt = Adam::new(0.1, &params);
        for _ in 0..500 {
            let g = 2.0 * (params[0].data[0] - 3.0);
            let grads = vec![Tensor::scalar(g)];
            opt.step(&mut params, &grads);
        }
        assert!((params[0].data[0] - 3.0).abs() < 1e-3);
    }
}
