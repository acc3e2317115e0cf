use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine ramp of the key-encoder momentum from `m0` at step 0 to 1 at step `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumSchedule {
    pub m0: f64,
    pub total_steps: u64,
}

impl MomentumSchedule {
    pub fn new(m0: f64, total_steps: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&m0) {
            return Err(Error::config(format!("base momentum {m0} outside [0, 1)")));
        }
        Ok(Self { m0, total_steps })
    }

    pub fn at(&self, t: u64) -> Result<f64> {
        momentum_at(self, t)
    }
}

/// `m(t) = 1 − (1 − m0)·(cos(πt/T) + 1)/2`; the endpoints are returned exactly.
pub fn momentum_at(schedule: &MomentumSchedule, t: u64) -> Result<f64> {
    let big_t = schedule.total_steps;
    if t > big_t {
        return Err(Error::contract(format!("step {t} beyond schedule length {big_t}")));
    }
    if t == 0 {
        return Ok(schedule.m0);
    }
    if t == big_t {
        return Ok(1.0);
    }
    let phase = PI * t as f64 / big_t as f64;
    Ok(1.0 - (1.0 - schedule.m0) * (phase.cos() + 1.0) / 2.0)
}
