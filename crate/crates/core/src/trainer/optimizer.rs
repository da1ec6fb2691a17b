use crate::error::{Result, TribeError};
use crate::tribenet::Real;

/// AdamW with decoupled weight decay. Bias-corrected moments; the decay is
/// applied as `p -= lr · wd · p` before the Adam update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Real> AdamW<T> {
    pub fn new(num_params: usize, weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TribeError::Shape(format!(
                "optimizer for {} parameters got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let c = |x: f64| T::from_f64(x).unwrap();
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let one = T::one();
        let bc1 = c(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = c(1.0 - self.beta2.powi(self.t as i32));
        let lr_t = c(lr);
        let decay = c(1.0 - lr * self.weight_decay);
        let eps = c(self.eps);
        for i in 0..params.len() {
            let g = grads[i];
            params[i] *= decay;
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr_t * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
