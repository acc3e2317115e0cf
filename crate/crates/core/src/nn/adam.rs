use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: ParamSet,
    second: ParamSet,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new(params: &ParamSet, config: AdamConfig) -> Result<Self> {
        let mut first = ParamSet::new();
        let mut second = ParamSet::new();
        for (name, p) in params.iter() {
            first.insert(name, Tensor::zeros(p.shape())?)?;
            second.insert(name, Tensor::zeros(p.shape())?)?;
        }
        Ok(Self {
            config,
            step: 0,
            first,
            second,
        })
    }

    pub fn from_parts(config: AdamConfig, step: u64, first: ParamSet, second: ParamSet) -> Result<Self> {
        first.check_aligned(&second)?;
        Ok(Self {
            config,
            step,
            first,
            second,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &ParamSet {
        &self.first
    }

    pub fn second_moments(&self) -> &ParamSet {
        &self.second
    }

    /// Names of the parameters this optimizer updates.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.first.names()
    }

    /// Applies one update. `grads` must cover exactly the tracked names.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        self.first.check_aligned(params)?;
        self.first.check_aligned(grads).map_err(|e| match e {
            Error::Contract(msg) => Error::contract(format!("gradient set mismatch: {msg}")),
            other => other,
        })?;
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        let moments = self.first.iter_mut().zip(self.second.iter_mut());
        for (((_, m), (_, v)), ((_, p), (_, g))) in moments.zip(params.iter_mut().zip(grads.iter())) {
            let md = m.data_mut();
            let vd = v.data_mut();
            for (i, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                md[i] = beta1 * md[i] + (1.0 - beta1) * gv;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gv * gv;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
