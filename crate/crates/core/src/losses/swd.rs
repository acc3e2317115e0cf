use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{gemm, Tape, Tensor, Var};

/// `n` random unit directions in `R^d`, stored as the columns of a `[d×n]` matrix.
pub fn random_directions(d: usize, n: usize, rng: &mut Rng) -> Result<Tensor> {
    if d == 0 || n == 0 {
        return Err(Error::contract("need at least one dimension and one projection"));
    }
    let mut cols = Vec::with_capacity(n);
    while cols.len() < n {
        let v: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            cols.push(v.into_iter().map(|x| x / norm).collect::<Vec<_>>());
        }
    }
    Tensor::from_rows(&cols)?.transpose()
}

fn check_pair(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.rank() != 2 || y.rank() != 2 {
        return Err(Error::shape("sliced Wasserstein needs sample matrices"));
    }
    if x.rows() != y.rows() {
        return Err(Error::contract(format!(
            "sliced Wasserstein needs equal sample counts, got {} and {}",
            x.rows(),
            y.rows()
        )));
    }
    if x.cols() != y.cols() {
        return Err(Error::shape(format!(
            "feature dimensions {} and {} differ",
            x.cols(),
            y.cols()
        )));
    }
    Ok(())
}

/// Squared sliced-W₂ estimate with sorted 1-d matching, differentiable in both inputs.
pub fn swd_loss(tape: &mut Tape, x: Var, y: Var, n_proj: usize, rng: &mut Rng) -> Result<Var> {
    check_pair(tape.value(x), tape.value(y))?;
    let dirs = random_directions(tape.value(x).cols(), n_proj, rng)?;
    let theta = tape.constant(dirs);
    let px = tape.matmul(x, theta)?;
    let py = tape.matmul(y, theta)?;
    let sx = tape.sort_cols(px)?;
    let sy = tape.sort_cols(py)?;
    let diff = tape.sub(sx, sy)?;
    let sq = tape.square(diff);
    Ok(tape.mean(sq))
}

/// Value-only form of [`swd_loss`] for fixed directions.
pub fn sliced_wasserstein(x: &Tensor, y: &Tensor, directions: &Tensor) -> Result<f64> {
    check_pair(x, y)?;
    if directions.rank() != 2 || directions.shape()[0] != x.cols() {
        return Err(Error::shape("directions do not match the feature dimension"));
    }
    let (d, p) = (directions.shape()[0], directions.cols());
    let n = x.rows();
    let px = gemm(n, d, p, x.data(), directions.data());
    let py = gemm(n, d, p, y.data(), directions.data());
    let mut total = 0.0;
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for j in 0..p {
        for i in 0..n {
            a[i] = px[i * p + j];
            b[i] = py[i * p + j];
        }
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        total += a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    }
    Ok(total / (n * p) as f64)
}
