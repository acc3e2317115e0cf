use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{ContrastiveParams, KernelKind, KernelSpec};
use crate::nn::{Activation, MlpSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Train,
    SynthMatch,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Train => "train",
            Experiment::SynthMatch => "synth-match",
        })
    }
}

/// Latent matching term added to the reconstruction loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Momentum-contrast loss against a key encoder and queue.
    Contrastive,
    /// MMD between the batch codes and fresh prior samples.
    Mmd,
    /// Sliced Wasserstein between the batch codes and fresh prior samples.
    Swd,
    /// Sinkhorn divergence between the batch codes and fresh prior samples.
    Sinkhorn,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::Contrastive,
        Objective::Mmd,
        Objective::Swd,
        Objective::Sinkhorn,
    ];
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Contrastive => "contrastive",
            Objective::Mmd => "mmd",
            Objective::Swd => "swd",
            Objective::Sinkhorn => "sinkhorn",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.to_string() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown method {s:?} (expected contrastive, mmd, swd or sinkhorn)"
                ))
            })
    }
}

/// Everything that determines a training run. Serialized as a flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub experiment: Experiment,
    /// Defaults to `{experiment}-{objective}-seed{seed}`.
    pub run_id: Option<String>,
    /// `"mnist"` or `"synth"`.
    pub dataset: String,
    /// Directory holding the IDX files when `dataset` is `"mnist"`.
    pub data_dir: String,
    pub synth_samples: usize,
    pub synth_dim: usize,
    pub objective: Objective,
    /// Include the reconstruction term (and a decoder).
    pub reconstruction: bool,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
    pub lambda: f64,
    pub tau: f64,
    pub queue_size: usize,
    pub m0: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiply the learning rate by `lr_decay_factor` every this many epochs.
    pub lr_decay_every: Option<usize>,
    pub lr_decay_factor: f64,
    pub seed: u64,
    /// Diagnostics every this many epochs (0: final epoch only); epoch 0 and the
    /// final epoch are always evaluated.
    pub eval_every: usize,
    pub eval_samples: usize,
    pub eval_projections: usize,
    /// Projections per step for the sliced-Wasserstein objective.
    pub loss_projections: usize,
    pub sinkhorn_iters: usize,
    pub mmd_kernel: KernelKind,
    /// Kernel scale; `None` means `2·latent_dim` (IMQ only).
    pub mmd_scale: Option<f64>,
    /// Write a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::mnist()
    }
}

impl TrainConfig {
    /// MLP autoencoder on MNIST: 3 hidden layers of 128 in the encoder, 2 in the
    /// decoder, 6-d latent, λ=5, K=10000, τ=0.99, 25 epochs.
    pub fn mnist() -> Self {
        Self {
            experiment: Experiment::Train,
            run_id: None,
            dataset: "mnist".into(),
            data_dir: "data/mnist-5k".into(),
            synth_samples: 1000,
            synth_dim: 100,
            objective: Objective::Contrastive,
            reconstruction: true,
            encoder_hidden: vec![128, 128, 128],
            decoder_hidden: vec![128, 128],
            latent_dim: 6,
            activation: Activation::Relu,
            lambda: 5.0,
            tau: 0.99,
            queue_size: 10_000,
            m0: 0.99,
            epochs: 25,
            batch_size: 64,
            lr: 1e-3,
            lr_decay_every: None,
            lr_decay_factor: 0.5,
            seed: 0,
            eval_every: 5,
            eval_samples: 1000,
            eval_projections: 256,
            loss_projections: 64,
            sinkhorn_iters: 50,
            mmd_kernel: KernelKind::Imq,
            mmd_scale: None,
            checkpoint_every: 5,
        }
    }

    /// Matching-only race on 1000 × 100 Gaussian data: 2-layer MLP to a 128-d
    /// latent, 80 epochs, τ=0.05, K=1000.
    pub fn synth_match() -> Self {
        Self {
            experiment: Experiment::SynthMatch,
            dataset: "synth".into(),
            reconstruction: false,
            encoder_hidden: vec![128],
            decoder_hidden: vec![],
            latent_dim: 128,
            lambda: 1.0,
            tau: 0.05,
            queue_size: 1000,
            epochs: 80,
            eval_every: 1,
            checkpoint_every: 0,
            ..Self::mnist()
        }
    }

    pub fn defaults_for(experiment: Experiment) -> Self {
        match experiment {
            Experiment::Train => Self::mnist(),
            Experiment::SynthMatch => Self::synth_match(),
        }
    }

    pub fn run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("{}-{}-seed{}", self.experiment, self.objective, self.seed))
    }

    pub fn encoder_spec(&self, input_dim: usize) -> MlpSpec {
        let mut dims = vec![input_dim];
        dims.extend(&self.encoder_hidden);
        dims.push(self.latent_dim);
        MlpSpec {
            layer_dims: dims,
            activation: self.activation,
            normalize_output: true,
        }
    }

    pub fn decoder_spec(&self, input_dim: usize) -> Option<MlpSpec> {
        self.reconstruction.then(|| {
            let mut dims = vec![self.latent_dim];
            dims.extend(&self.decoder_hidden);
            dims.push(input_dim);
            MlpSpec {
                layer_dims: dims,
                activation: self.activation,
                normalize_output: false,
            }
        })
    }

    pub fn contrastive_params(&self) -> ContrastiveParams {
        ContrastiveParams {
            tau: self.tau,
            lambda: self.lambda,
            queue_size: self.queue_size,
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        match (self.mmd_kernel, self.mmd_scale) {
            (kind, Some(scale)) => KernelSpec { kind, scale },
            (KernelKind::Imq, None) => KernelSpec::imq_for_dim(self.latent_dim),
            (KernelKind::Rbf, None) => KernelSpec::rbf(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.latent_dim == 0 {
            return fail("latent_dim must be positive".into());
        }
        if self.encoder_hidden.iter().chain(&self.decoder_hidden).any(|&h| h == 0) {
            return fail("hidden widths must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return fail(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if self.lr_decay_every == Some(0) {
            return fail("lr_decay_every must be positive when set".into());
        }
        if !(self.lr_decay_factor > 0.0) {
            return fail(format!("lr_decay_factor must be positive, got {}", self.lr_decay_factor));
        }
        if !(0.0..1.0).contains(&self.m0) {
            return fail(format!("m0 must be in [0, 1), got {}", self.m0));
        }
        if self.eval_samples == 0 || self.eval_projections == 0 || self.loss_projections == 0 {
            return fail("evaluation and projection counts must be positive".into());
        }
        if self.sinkhorn_iters == 0 {
            return fail("sinkhorn_iters must be positive".into());
        }
        if let Some(s) = self.mmd_scale {
            if !(s > 0.0) {
                return fail(format!("mmd_scale must be positive, got {s}"));
            }
        }
        match self.dataset.as_str() {
            "mnist" | "synth" => {}
            other => return fail(format!("unknown dataset {other:?} (expected mnist or synth)")),
        }
        if self.dataset == "synth" && (self.synth_samples == 0 || self.synth_dim == 0) {
            return fail("synthetic dataset sizes must be positive".into());
        }
        if self.objective == Objective::Contrastive {
            self.contrastive_params().validate(self.batch_size)?;
        } else if !(self.lambda >= 0.0) {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        Ok(())
    }
}
