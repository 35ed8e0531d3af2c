use crate::autodiff::params::Parameters;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter first/second moment buffers plus the shared step counter.
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &Parameters, config: AdamConfig) -> Self {
        let m = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        let v = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState { m, v, step: 0, config }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over all parameters.
    pub fn step(&mut self, params: &mut Parameters, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::LengthMismatch(grads.len(), params.len()));
        }
        self.step += 1;
        let t = self.step as f64;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powf(t);
        let bc2 = 1.0 - beta2.powf(t);
        for (i, p) in params.tensors_mut().enumerate() {
            let g = &grads[i];
            if g.shape() != p.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "adam: grad {:?} vs param {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let pd = p.data_mut();
            for j in 0..pd.len() {
                let gj = g.data()[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                pd[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> Parameters {
        let mut p = Parameters::new();
        p.push("p", Tensor::scalar(v));
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = single(1.5);
        let mut state = AdamState::new(&params, AdamConfig::with_lr(0.1));
        state.step(&mut params, &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(params.get("p").unwrap().item(), 1.5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // p=0, g=1, lr=0.1: mhat=1, vhat=1, update = lr * 1/(1+eps) ~ lr
        let mut params = single(0.0);
        let mut state = AdamState::new(&params, AdamConfig::with_lr(0.1));
        state.step(&mut params, &[Tensor::scalar(1.0)]).unwrap();
        let p = params.get("p").unwrap().item();
        assert!((p - (-0.1)).abs() < 1e-8, "p = {p}");
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        let mut params = single(1.0);
        let mut state = AdamState::new(&params, AdamConfig::with_lr(0.05));
        for _ in 0..200 {
            let p = params.get("p").unwrap().item();
            let g = 2.0 * p; // d/dp p^2
            state.step(&mut params, &[Tensor::scalar(g)]).unwrap();
        }
        assert!(params.get("p").unwrap().item().abs() < 1e-2);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut params = single(0.0);
        let mut state = AdamState::new(&params, AdamConfig::with_lr(0.1));
        let bad = Tensor::row(vec![1.0, 2.0]);
        assert!(matches!(
            state.step(&mut params, &[bad]),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
