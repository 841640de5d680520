//! Adam optimizer over the block parameter container.

use crate::error::{CoreError, Result};
use crate::math;
use crate::params::ParamBlocks;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First/second moment accumulators plus the step counter.
pub struct AdamState {
    m: ParamBlocks,
    v: ParamBlocks,
    t: u64,
}

impl AdamState {
    pub fn new(template: &ParamBlocks) -> AdamState {
        AdamState {
            m: template.zeros_like(),
            v: template.zeros_like(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, params: &mut ParamBlocks, grads: &ParamBlocks, lr: f64) -> Result<()> {
        if !grads.is_finite() {
            return Err(CoreError::NonFinite("gradients passed to optimizer".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - math::exp(self.t as f64 * math::ln(BETA1));
        let bc2 = 1.0 - math::exp(self.t as f64 * math::ln(BETA2));
        let mut m_blocks = self.m.blocks_mut();
        let mut v_blocks = self.v.blocks_mut();
        let mut p_blocks = params.blocks_mut();
        for (((_, g), (_, m)), ((_, v), (_, p))) in grads
            .blocks()
            .into_iter()
            .zip(m_blocks.iter_mut())
            .zip(v_blocks.iter_mut().zip(p_blocks.iter_mut()))
        {
            for i in 0..g.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (math::sqrt(v_hat) + EPS);
            }
        }
        if !params.is_finite() {
            return Err(CoreError::NonFinite("parameters after optimizer step".into()));
        }
        Ok(())
    }
}
