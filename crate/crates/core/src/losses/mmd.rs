use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Inverse multiquadric `C / (C + ‖x−y‖²)`.
    Imq,
    /// Gaussian `exp(−‖x−y‖² / (2σ²))`.
    Rbf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// `C` for IMQ, `σ²` for RBF.
    pub scale: f64,
}

impl KernelSpec {
    /// IMQ with `C = 2·d`.
    pub fn imq_for_dim(d: usize) -> Self {
        Self {
            kind: KernelKind::Imq,
            scale: 2.0 * d as f64,
        }
    }

    pub fn rbf(sigma2: f64) -> Self {
        Self {
            kind: KernelKind::Rbf,
            scale: sigma2,
        }
    }

    fn apply(&self, tape: &mut Tape, sq_dists: Var) -> Var {
        match self.kind {
            KernelKind::Imq => {
                let shifted = tape.add_scalar(sq_dists, self.scale);
                let r = tape.recip(shifted);
                tape.scale(r, self.scale)
            }
            KernelKind::Rbf => {
                let s = tape.scale(sq_dists, -1.0 / (2.0 * self.scale));
                tape.exp(s)
            }
        }
    }
}

/// Biased (V-statistic) squared MMD between two sample sets.
pub fn mmd(tape: &mut Tape, x: Var, y: Var, kernel: &KernelSpec) -> Result<Var> {
    if !(kernel.scale > 0.0) {
        return Err(Error::contract(format!(
            "kernel scale must be positive, got {}",
            kernel.scale
        )));
    }
    let (tx, ty) = (tape.value(x), tape.value(y));
    if tx.rank() != 2 || ty.rank() != 2 {
        return Err(Error::contract("mmd needs non-empty sample matrices"));
    }
    let dxx = tape.sq_dists(x, x)?;
    let dyy = tape.sq_dists(y, y)?;
    let dxy = tape.sq_dists(x, y)?;
    let kxx = kernel.apply(tape, dxx);
    let kyy = kernel.apply(tape, dyy);
    let kxy = kernel.apply(tape, dxy);
    let mxx = tape.mean(kxx);
    let myy = tape.mean(kyy);
    let mxy = tape.mean(kxy);
    let within = tape.add(mxx, myy)?;
    let cross = tape.scale(mxy, 2.0);
    tape.sub(within, cross)
}

pub fn mmd_value(x: &Tensor, y: &Tensor, kernel: &KernelSpec) -> Result<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let m = mmd(&mut tape, xv, yv, kernel)?;
    tape.value(m).item()
}
