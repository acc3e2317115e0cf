//! Uniform hypersphere prior, sampling through a decoder, and latent interpolation.

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::rng::Rng;
use crate::tensor::{Tensor, NORM_EPS};

/// Draws `count` i.i.d. points from the uniform distribution on the unit sphere in `R^d`.
///
/// Each row is a standard Gaussian vector divided by its norm; a vector with
/// norm at most [`NORM_EPS`] is redrawn.
pub fn sample_prior(d: usize, count: usize, rng: &mut Rng) -> Result<Tensor> {
    if d == 0 || count == 0 {
        return Err(Error::contract("prior samples need d ≥ 1 and count ≥ 1"));
    }
    let mut data = Vec::with_capacity(d * count);
    let mut row = vec![0.0; d];
    for _ in 0..count {
        loop {
            row.iter_mut().for_each(|v| *v = rng.gaussian());
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > NORM_EPS {
                data.extend(row.iter().map(|v| v / norm));
                break;
            }
        }
    }
    Tensor::matrix(count, d, data)
}

/// A seeded source of prior samples of fixed dimension.
#[derive(Clone, Debug)]
pub struct SphereSampler {
    dim: usize,
    rng: Rng,
}

impl SphereSampler {
    pub fn new(dim: usize, rng: Rng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("sphere dimension must be positive"));
        }
        Ok(Self { dim, rng })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&mut self, count: usize) -> Result<Tensor> {
        sample_prior(self.dim, count, &mut self.rng)
    }
}

/// Decodes `count` prior samples.
pub fn generate(decoder: &Mlp, count: usize, rng: &mut Rng) -> Result<Tensor> {
    let z = sample_prior(decoder.spec().input_dim(), count, rng)?;
    decoder.forward(&z)
}

/// Decodes normalized convex combinations `α·z + (1−α)·z′` of the codes of `x`
/// and `x_prime` (each a single input row).
///
/// At `α = 1` and `α = 0` the codes are decoded unchanged, so the endpoints equal
/// the reconstructions of the inputs.
pub fn interpolate(
    encoder: &Mlp,
    decoder: &Mlp,
    x: &Tensor,
    x_prime: &Tensor,
    alphas: &[f64],
) -> Result<Vec<Tensor>> {
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::contract(format!("interpolation weight {a} outside [0, 1]")));
    }
    let as_row = |t: &Tensor| -> Result<Tensor> {
        match t.rank() {
            1 => t.reshaped(vec![1, t.len()]),
            2 if t.rows() == 1 => Ok(t.clone()),
            _ => Err(Error::shape(format!("expected a single input row, got {:?}", t.shape()))),
        }
    };
    let z = encoder.forward(&as_row(x)?)?;
    let z_prime = encoder.forward(&as_row(x_prime)?)?;
    let d = z.cols();

    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let code = if alpha == 1.0 {
            z.clone()
        } else if alpha == 0.0 {
            z_prime.clone()
        } else {
            let mixed: Vec<f64> = z
                .data()
                .iter()
                .zip(z_prime.data())
                .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                .collect();
            let norm = mixed.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > NORM_EPS) {
                return Err(Error::Degenerate(format!(
                    "interpolated code at α={alpha} has norm {norm}"
                )));
            }
            Tensor::matrix(1, d, mixed.into_iter().map(|v| v / norm).collect())?
        };
        out.push(decoder.forward(&code)?);
    }
    Ok(out)
}
