//! Adam and step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::Tensor;
use crate::error::{Error, Result};

/// Moment estimates for every parameter of a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &ParamSet, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, p)| Tensor::zeros(p.value.shape()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }
}

/// One bias-corrected Adam update of every trainable parameter.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if state.m.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "optimizer state tracks {} parameters, set has {}",
            state.m.len(),
            params.len()
        )));
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        if !p.trainable {
            continue;
        }
        let grads = p.grad.data();
        for (((theta, g), m), v) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(grads)
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `base_lr · gamma^⌊step / interval⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub interval: u64,
    pub gamma: f64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, interval: u64, gamma: f64) -> Result<Self> {
        if !(base_lr > 0.0) || interval == 0 || !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!(
                "invalid schedule: base_lr={base_lr}, interval={interval}, gamma={gamma}"
            )));
        }
        Ok(LrSchedule {
            base_lr,
            interval,
            gamma,
        })
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        step_decay(self, step)
    }
}

pub fn step_decay(schedule: &LrSchedule, step: u64) -> f64 {
    let k = step / schedule.interval;
    schedule.base_lr * schedule.gamma.powi(k as i32)
}
