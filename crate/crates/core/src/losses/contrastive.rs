use serde::{Deserialize, Serialize};

use super::{check_unit_rows, mse_reconstruction};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Hyper-parameters of the contrastive regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveParams {
    /// Logit temperature.
    pub tau: f64,
    /// Weight of the contrastive term.
    pub lambda: f64,
    /// Number of negative keys held in the queue.
    pub queue_size: usize,
}

impl ContrastiveParams {
    pub fn validate(&self, batch_size: usize) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.queue_size < batch_size {
            return Err(Error::config(format!(
                "queue size {} is smaller than batch size {batch_size}",
                self.queue_size
            )));
        }
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::contract(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// Monte-Carlo negative term `(1/B)·Σ_i log (1/K)·Σ_j exp(z_iᵀp_j/τ)`.
///
/// Differentiable with respect to both `z` and `pool` (either may be a constant).
pub fn l_neg_mc(tape: &mut Tape, z: Var, pool: Var, tau: f64) -> Result<Var> {
    check_tau(tau)?;
    check_unit_rows(tape.value(z), "l_neg_mc queries")?;
    check_unit_rows(tape.value(pool), "l_neg_mc pool")?;
    let k = tape.value(pool).rows();
    let zn = tape.l2_normalize(z)?;
    let pn = tape.l2_normalize(pool)?;
    let pt = tape.transpose(pn)?;
    let dots = tape.matmul(zn, pt)?;
    let logits = tape.scale(dots, 1.0 / tau);
    let lse = tape.logsumexp_rows(logits)?;
    let mean = tape.mean(lse);
    Ok(tape.add_scalar(mean, -(k as f64).ln()))
}

pub fn l_neg_mc_value(z: &Tensor, pool: &Tensor, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let pv = tape.constant(pool.clone());
    let l = l_neg_mc(&mut tape, zv, pv, tau)?;
    tape.value(l).item()
}

/// Softmax cross-entropy over logits `[z_qᵀz_k, z_qᵀQ]/τ` with the positive at index 0.
///
/// `keys` and `queue` enter as constants, so gradients flow only through `z_q`.
pub fn moco_contrastive(
    tape: &mut Tape,
    z_q: Var,
    keys: &Tensor,
    queue: &Tensor,
    tau: f64,
) -> Result<Var> {
    check_tau(tau)?;
    let zq_val = tape.value(z_q);
    if queue.rank() != 2 || queue.rows() < 1 {
        return Err(Error::contract("queue must hold at least one key"));
    }
    if keys.shape() != zq_val.shape() {
        return Err(Error::shape(format!(
            "keys {:?} do not match queries {:?}",
            keys.shape(),
            zq_val.shape()
        )));
    }
    if queue.cols() != zq_val.cols() {
        return Err(Error::shape(format!(
            "queue width {} does not match latent width {}",
            queue.cols(),
            zq_val.cols()
        )));
    }
    check_unit_rows(zq_val, "queries")?;
    check_unit_rows(keys, "keys")?;
    check_unit_rows(queue, "queue")?;

    let b = zq_val.rows();
    let zq = tape.l2_normalize(z_q)?;
    let zk = tape.constant(keys.clone());
    let zk = tape.l2_normalize(zk)?;
    let q = tape.constant(queue.clone());
    let q = tape.l2_normalize(q)?;

    let prod = tape.mul(zq, zk)?;
    let l_pos = tape.row_sum(prod)?;
    let l_pos = tape.reshape(l_pos, vec![b, 1])?;
    let qt = tape.transpose(q)?;
    let l_neg = tape.matmul(zq, qt)?;
    let logits = tape.concat_cols(l_pos, l_neg)?;
    let logits = tape.scale(logits, 1.0 / tau);
    let lse = tape.logsumexp_rows(logits)?;
    let mean_lse = tape.mean(lse);
    let mean_pos = tape.mean(l_pos);
    let pos_term = tape.scale(mean_pos, 1.0 / tau);
    tape.sub(mean_lse, pos_term)
}

pub fn moco_contrastive_value(z_q: &Tensor, keys: &Tensor, queue: &Tensor, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let zv = tape.constant(z_q.clone());
    let l = moco_contrastive(&mut tape, zv, keys, queue, tau)?;
    tape.value(l).item()
}

/// Nodes of the regularized autoencoder objective.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub reconstruction: Var,
    pub contrastive: Var,
}

/// `L = L_rec + λ·L_con` with the contrastive term from [`moco_contrastive`].
pub fn combined_loss(
    tape: &mut Tape,
    x: Var,
    x_rec: Var,
    z_q: Var,
    keys: &Tensor,
    queue: &Tensor,
    params: &ContrastiveParams,
) -> Result<LossParts> {
    let reconstruction = mse_reconstruction(tape, x, x_rec)?;
    let contrastive = moco_contrastive(tape, z_q, keys, queue, params.tau)?;
    let weighted = tape.scale(contrastive, params.lambda);
    let total = tape.add(reconstruction, weighted)?;
    Ok(LossParts {
        total,
        reconstruction,
        contrastive,
    })
}
