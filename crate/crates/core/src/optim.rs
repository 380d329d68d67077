//! AdamW with decoupled weight decay.
//!
//! The update order follows the common reference implementation: decay the
//! parameter, update both moments, then take a bias-corrected step.

use crate::encoder::checkpoint::{self, ByteReader, CheckpointError};
use crate::encoder::ModelParams;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.98, eps: 1e-6, weight_decay: 0.01 }
    }
}

impl AdamW {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(format!("learning rate {} must be finite and non-negative", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(format!("{name} = {b} outside (0, 1)"));
            }
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err("eps must be positive and weight_decay non-negative".into());
        }
        Ok(())
    }

    /// One update of `p` in place. `step` is the 1-based count including
    /// this update.
    pub fn update<T: Real>(&self, p: &mut [T], g: &[T], m: &mut [T], v: &mut [T], step: u64) {
        debug_assert!(p.len() == g.len() && p.len() == m.len() && p.len() == v.len());
        let lr = T::of(self.lr);
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let one = T::one();
        let decay = one - lr * T::of(self.weight_decay);
        let t = step.min(i32::MAX as u64) as i32;
        let bc1 = one - b1.powi(t);
        let bc2_sqrt = (one - b2.powi(t)).sqrt();
        let step_size = lr / bc1;
        let eps = T::of(self.eps);
        for i in 0..p.len() {
            p[i] *= decay;
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let denom = v[i].sqrt() / bc2_sqrt + eps;
            p[i] -= step_size * (m[i] / denom);
        }
    }
}

/// Optimizer state for the dense parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAdamW<T> {
    pub hyper: AdamW,
    m: ModelParams<T>,
    v: ModelParams<T>,
    step: u64,
}

impl<T: Real> DenseAdamW<T> {
    pub fn new(hyper: AdamW, params: &ModelParams<T>) -> Self {
        Self { hyper, m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        self.step += 1;
        let mut ms = self.m.tensors_mut();
        let mut vs = self.v.tensors_mut();
        let gs = grads.tensors();
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(&gs).zip(&mut ms).zip(&mut vs) {
            self.hyper.update(p.data, g.data, m.data, v.data, self.step);
        }
    }

    /// Step count followed by both moment tensors in checkpoint layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.step.to_le_bytes().to_vec();
        for part in [checkpoint::to_bytes(&self.m), checkpoint::to_bytes(&self.v)] {
            out.extend_from_slice(&(part.len() as u64).to_le_bytes());
            out.extend_from_slice(&part);
        }
        out
    }

    pub fn from_bytes(hyper: AdamW, buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = ByteReader::new(buf);
        let step = r.u64().ok_or(CheckpointError::Truncated)?;
        let mut part = || -> Result<ModelParams<T>, CheckpointError> {
            let len = r.u64().ok_or(CheckpointError::Truncated)? as usize;
            checkpoint::from_bytes(r.take(len).ok_or(CheckpointError::Truncated)?)
        };
        let m = part()?;
        let v = part()?;
        if !m.same_shape(&v) {
            return Err(CheckpointError::VersionMismatch("moment shapes differ".into()));
        }
        Ok(Self { hyper, m, v, step })
    }

    pub fn matches(&self, params: &ModelParams<T>) -> bool {
        self.m.config == params.config
    }
}
