//! Debiased entropic optimal transport between uniform point clouds.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

pub const SINKHORN_DEFAULT_ITERS: usize = 50;

/// `0.1 ×` the mean pairwise squared distance between the two clouds.
pub fn default_epsilon(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols() {
        return Err(Error::shape("epsilon needs two sample matrices of equal width"));
    }
    let mut total = 0.0;
    for i in 0..x.rows() {
        for j in 0..y.rows() {
            total += x
                .row(i)
                .iter()
                .zip(y.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    let mean = total / (x.rows() * y.rows()) as f64;
    Ok(0.1 * mean)
}

/// Entropic OT cost from `n_iter` log-domain Sinkhorn iterations on the
/// squared-Euclidean cost, returned as the dual value `⟨a, f⟩ + ⟨b, g⟩`.
///
/// The potentials are updated simultaneously and averaged with their previous
/// values, so swapping `x` and `y` swaps `f` and `g` exactly.
fn entropic_ot(tape: &mut Tape, x: Var, y: Var, eps: f64, n_iter: usize) -> Result<Var> {
    let a = tape.value(x).rows();
    let b = tape.value(y).rows();
    let cost = tape.sq_dists(x, y)?;
    let cost_t = tape.sq_dists(y, x)?;
    let neg_cost = tape.scale(cost, -1.0 / eps);
    let neg_cost_t = tape.scale(cost_t, -1.0 / eps);
    let log_a = -(a as f64).ln();
    let log_b = -(b as f64).ln();

    let mut f = tape.constant(Tensor::zeros(&[a])?);
    let mut g = tape.constant(Tensor::zeros(&[b])?);
    for _ in 0..n_iter {
        // f_i = −ε·log Σ_j b_j·exp((g_j − C_ij)/ε)
        let g_scaled = tape.scale(g, 1.0 / eps);
        let m = tape.add_row(neg_cost, g_scaled)?;
        let lse = tape.logsumexp_rows(m)?;
        let shifted = tape.add_scalar(lse, log_b);
        let f_new = tape.scale(shifted, -eps);

        let f_scaled = tape.scale(f, 1.0 / eps);
        let m = tape.add_row(neg_cost_t, f_scaled)?;
        let lse = tape.logsumexp_rows(m)?;
        let shifted = tape.add_scalar(lse, log_a);
        let g_new = tape.scale(shifted, -eps);

        let fs = tape.add(f, f_new)?;
        f = tape.scale(fs, 0.5);
        let gs = tape.add(g, g_new)?;
        g = tape.scale(gs, 0.5);
    }
    let mf = tape.mean(f);
    let mg = tape.mean(g);
    tape.add(mf, mg)
}

/// `S(x,y) = OT_ε(x,y) − ½·OT_ε(x,x) − ½·OT_ε(y,y)`, differentiated through the
/// unrolled iterations.
pub fn sinkhorn_divergence(tape: &mut Tape, x: Var, y: Var, eps: f64, n_iter: usize) -> Result<Var> {
    if !(eps > 0.0) {
        return Err(Error::contract(format!("epsilon must be positive, got {eps}")));
    }
    if n_iter == 0 {
        return Err(Error::contract("Sinkhorn needs at least one iteration"));
    }
    let (tx, ty) = (tape.value(x), tape.value(y));
    if tx.rank() != 2 || ty.rank() != 2 || tx.cols() != ty.cols() {
        return Err(Error::shape("Sinkhorn needs two sample matrices of equal width"));
    }
    let xy = entropic_ot(tape, x, y, eps, n_iter)?;
    let xx = entropic_ot(tape, x, x, eps, n_iter)?;
    let yy = entropic_ot(tape, y, y, eps, n_iter)?;
    let self_terms = tape.add(xx, yy)?;
    let half = tape.scale(self_terms, 0.5);
    tape.sub(xy, half)
}

pub fn sinkhorn_divergence_value(x: &Tensor, y: &Tensor, eps: f64, n_iter: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let s = sinkhorn_divergence(&mut tape, xv, yv, eps, n_iter)?;
    tape.value(s).item()
}
