//! Evaluation-only measures: sliced Wasserstein between sample sets, latent
//! singular-value isotropy, and the kernel entropy estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{l_neg_mc_value, random_directions, sliced_wasserstein};
use crate::rng::Rng;
use crate::tensor::{gemm, Tensor};

/// Projection count used by [`swd_metric`] unless overridden.
pub const SWD_METRIC_PROJECTIONS: usize = 256;

/// Off-diagonal Frobenius norm (relative to the matrix norm) at which Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Squared sliced-W₂ between equally sized sample sets, without gradients.
pub fn swd_metric(a: &Tensor, b: &Tensor, n_proj: usize, rng: &mut Rng) -> Result<f64> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::shape("swd_metric needs sample matrices"));
    }
    let dirs = random_directions(a.cols(), n_proj, rng)?;
    sliced_wasserstein(a, b, &dirs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `σᵢ / σ₁`.
    pub normalized: Vec<f64>,
    /// Population standard deviation of `σᵢ / mean(σ)`.
    pub dispersion: f64,
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &Tensor) -> Result<Vec<f64>> {
    if a.rank() != 2 || a.rows() != a.cols() {
        return Err(Error::shape(format!("expected a square matrix, got {:?}", a.shape())));
    }
    let n = a.rows();
    let mut m = a.data().to_vec();
    for i in 0..n {
        for j in 0..i {
            if (m[i * n + j] - m[j * n + i]).abs() > 1e-9 * (1.0 + m[i * n + j].abs()) {
                return Err(Error::contract("matrix is not symmetric"));
            }
        }
    }
    let total = a.frobenius_norm();
    let off = |m: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&m) <= JACOBI_TOL * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Ok((0..n).map(|i| m[i * n + i]).collect())
}

/// Singular values of the uncentered `N × d` latent matrix, from the eigenvalues
/// of its `d × d` Gram matrix.
pub fn svd_spectrum(latents: &Tensor) -> Result<IsotropyReport> {
    if latents.rank() != 2 {
        return Err(Error::shape("svd_spectrum needs a matrix"));
    }
    let (n, d) = (latents.rows(), latents.cols());
    if n < d {
        return Err(Error::contract(format!("need at least {d} rows, got {n}")));
    }
    let xt = latents.transpose()?;
    let gram = Tensor::matrix(d, d, gemm(d, n, d, xt.data(), latents.data()))?;
    // symmetrize away rounding differences between the two triangles
    let g = gram.data();
    let sym: Vec<f64> = (0..d * d)
        .map(|k| 0.5 * (g[k] + g[(k % d) * d + k / d]))
        .collect();
    let mut eig = symmetric_eigenvalues(&Tensor::matrix(d, d, sym)?)?;
    eig.sort_by(|a, b| b.total_cmp(a));
    let sv: Vec<f64> = eig.iter().map(|&e| e.max(0.0).sqrt()).collect();
    let top = sv[0];
    if !(top > 0.0) {
        return Err(Error::Degenerate("latent matrix is zero".into()));
    }
    let mean = sv.iter().sum::<f64>() / d as f64;
    let ratios: Vec<f64> = sv.iter().map(|s| s / mean).collect();
    let rmean = ratios.iter().sum::<f64>() / d as f64;
    let dispersion = (ratios.iter().map(|r| (r - rmean).powi(2)).sum::<f64>() / d as f64).sqrt();
    Ok(IsotropyReport {
        normalized: sv.iter().map(|s| s / top).collect(),
        singular_values: sv,
        dispersion,
    })
}

/// Kernel entropy estimate `−L_neg^MC(z, z, τ)`; larger means more spread out.
pub fn entropy_estimate(z: &Tensor, tau: f64) -> Result<f64> {
    Ok(-l_neg_mc_value(z, z, tau)?)
}
