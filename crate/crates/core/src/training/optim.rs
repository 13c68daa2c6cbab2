use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for LambConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
            weight_decay: 0.1,
        }
    }
}

/// Upper clamp of the weight norm in the trust ratio.
pub const TRUST_CLAMP: f64 = 10.0;

/// LAMB: bias-corrected Adam direction plus decoupled weight decay, scaled
/// per tensor by `min(‖w‖, 10) / ‖u‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lamb {
    pub config: LambConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Lamb {
    pub fn new(config: LambConfig, shapes: &[&[usize]]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn moments(&self, i: usize) -> (&Tensor, &Tensor) {
        (&self.m[i], &self.v[i])
    }

    /// Updates `params` in place. Nothing is modified if any gradient is
    /// non-finite or mis-shaped.
    pub fn update(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        names: &[String],
    ) -> Result<(), TrainError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TrainError::Contract(format!(
                "optimizer holds {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let name = |i: usize| names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(TrainError::Contract(format!(
                    "gradient of {} has shape {:?}, parameter {:?}",
                    name(i),
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                return Err(TrainError::Optimizer(format!(
                    "non-finite gradient for parameter {}",
                    name(i)
                )));
            }
        }
        let c = self.config;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let mut u = vec![0.0; p.len()];
            for (i, ui) in u.iter_mut().enumerate() {
                let gi = g.data()[i];
                let mi = c.beta1 * m.data()[i] + (1.0 - c.beta1) * gi;
                let vi = c.beta2 * v.data()[i] + (1.0 - c.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let r = (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
                *ui = r + c.weight_decay * p.data()[i];
            }
            let w_norm = p.norm();
            let u_norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ratio = if w_norm == 0.0 || u_norm == 0.0 {
                1.0
            } else {
                w_norm.clamp(0.0, TRUST_CLAMP) / u_norm
            };
            let step = c.lr * ratio;
            for (w, ui) in p.data_mut().iter_mut().zip(&u) {
                *w -= step * ui;
            }
        }
        Ok(())
    }
}

/// `slow ← slow + α(fast − slow)` for every tensor.
pub fn ema_update(
    slow: &mut [&mut Tensor],
    fast: &[&Tensor],
    alpha: f64,
) -> Result<(), TrainError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(TrainError::Config(format!(
            "EMA rate {alpha} outside (0, 1]"
        )));
    }
    if slow.len() != fast.len() {
        return Err(TrainError::Contract(
            "slow and fast weights differ in length".into(),
        ));
    }
    for (s, f) in slow.iter_mut().zip(fast) {
        if s.shape() != f.shape() {
            return Err(TrainError::Contract(format!(
                "EMA shape {:?} vs {:?}",
                s.shape(),
                f.shape()
            )));
        }
        if alpha == 1.0 {
            s.data_mut().copy_from_slice(f.data());
            continue;
        }
        for (x, y) in s.data_mut().iter_mut().zip(f.data()) {
            *x += alpha * (y - *x);
        }
    }
    Ok(())
}
