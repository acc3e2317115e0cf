//! Latent distribution matching objectives and the reconstruction loss.
//!
//! Every loss is built on a [`Tape`] so it can be differentiated; the `*_value`
//! helpers evaluate the same code path on constants.

mod contrastive;
mod mmd;
mod sinkhorn;
mod swd;

pub use contrastive::{
    combined_loss, l_neg_mc, l_neg_mc_value, moco_contrastive, moco_contrastive_value,
    ContrastiveParams, LossParts,
};
pub use mmd::{mmd, mmd_value, KernelKind, KernelSpec};
pub use sinkhorn::{default_epsilon, sinkhorn_divergence, sinkhorn_divergence_value, SINKHORN_DEFAULT_ITERS};
pub use swd::{random_directions, sliced_wasserstein, swd_loss};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Rows fed to the contrastive losses must have unit norm within this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-6;

pub(crate) fn check_unit_rows(t: &Tensor, what: &str) -> Result<()> {
    if t.rank() != 2 {
        return Err(Error::shape(format!("{what}: expected a matrix, got {:?}", t.shape())));
    }
    for i in 0..t.rows() {
        let n = t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((n - 1.0).abs() <= UNIT_NORM_TOL) {
            return Err(Error::contract(format!(
                "{what}: row {i} has norm {n}, expected unit norm"
            )));
        }
    }
    Ok(())
}

/// `(1/B)·Σ_i ‖x_i − x̂_i‖²`: squared error summed over features, averaged over the batch.
pub fn mse_reconstruction(tape: &mut Tape, x: Var, x_rec: Var) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    if shape != tape.value(x_rec).shape() || shape.len() != 2 {
        return Err(Error::shape(format!(
            "reconstruction shape {:?} does not match input {:?}",
            tape.value(x_rec).shape(),
            shape
        )));
    }
    let diff = tape.sub(x_rec, x)?;
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / shape[0] as f64))
}

pub fn mse_reconstruction_value(x: &Tensor, x_rec: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(x.clone());
    let b = tape.constant(x_rec.clone());
    let l = mse_reconstruction(&mut tape, a, b)?;
    tape.value(l).item()
}
