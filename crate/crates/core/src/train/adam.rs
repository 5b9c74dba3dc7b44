use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::model::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moments for one parameter. `t` counts the updates this parameter has
/// received, which differs from the global step under alternating updates.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub slots: Vec<Moments>,
    pub step: u64,
}

impl Adam {
    pub fn new(params: &ParamSet) -> Self {
        Self::with_config(params, AdamConfig::default())
    }

    pub fn with_config(params: &ParamSet, config: AdamConfig) -> Self {
        let slots = params
            .iter()
            .map(|p| {
                let (r, c) = p.value.dims();
                Moments {
                    m: Tensor::zeros(r, c),
                    v: Tensor::zeros(r, c),
                    t: 0,
                }
            })
            .collect();
        Adam { config, slots, step: 0 }
    }

    /// One bias-corrected update. `grads[i]` is `None` for parameters that
    /// sit out this step; their moments are left alone. Nothing is written
    /// if any supplied gradient is non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Tensor>], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.slots.len() != params.len() {
            return Err(Error::Contract(format!(
                "{} gradients and {} moment slots for {} parameters",
                grads.len(),
                self.slots.len(),
                params.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if let Some(g) = g {
                if !g.same_shape(&p.value) {
                    return Err(Error::dim("adam_step", p.value.shape(), g.shape()));
                }
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of {}", p.name)));
                }
            }
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let Some(g) = g else { continue };
            slot.t += 1;
            let c1 = 1.0 - beta1.powi(slot.t as i32);
            let c2 = 1.0 - beta2.powi(slot.t as i32);
            let (m, v) = (slot.m.data_mut(), slot.v.data_mut());
            for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Rescales the supplied gradients so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Option<Tensor>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}
