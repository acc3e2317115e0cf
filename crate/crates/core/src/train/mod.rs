//! The training loop: query and key encoders, key queue, cosine momentum, and
//! epoch orchestration with periodic diagnostics and checkpoints.

mod config;
mod queue;
mod schedule;

pub use config::{Experiment, Objective, TrainConfig};
pub use queue::KeyQueue;
pub use schedule::{momentum_at, MomentumSchedule};

use std::time::Instant;

use crate::data::{batch_indices, load_mnist_dir, synth_dataset, Dataset};
use crate::diagnostics::{entropy_estimate, svd_spectrum, swd_metric};
use crate::error::{Error, Result};
use crate::losses::{
    default_epsilon, mmd, moco_contrastive, mse_reconstruction, sinkhorn_divergence, swd_loss,
};
use crate::metrics::MetricRecord;
use crate::nn::{ema_update, AdamConfig, AdamState, BoundParams, Checkpoint, Mlp, ParamSet};
use crate::prior::{generate, sample_prior};
use crate::rng::{stream, Rng};
use crate::tensor::{Tape, Tensor, Var};

const ENC_Q: &str = "enc_q.";
const ENC_K: &str = "enc_k.";
const DEC: &str = "dec.";

/// Networks, optimizer and queue of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct MocaState {
    pub enc_q: Mlp,
    /// Momentum copy of `enc_q`; only present for the contrastive objective.
    pub enc_k: Option<Mlp>,
    pub dec: Option<Mlp>,
    pub queue: Option<KeyQueue>,
    /// Tracks `enc_q.*` and `dec.*` only.
    pub adam: AdamState,
    pub schedule: MomentumSchedule,
    /// Optimizer steps taken.
    pub step: u64,
    /// Completed epochs.
    pub epoch: u64,
}

/// Scalar results of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub loss_total: f64,
    pub loss_rec: Option<f64>,
    pub loss_con: f64,
    pub momentum: Option<f64>,
}

struct LossGraph {
    tape: Tape,
    total: Var,
    rec: Option<Var>,
    matching: Var,
    bound_q: BoundParams,
    bound_d: Option<BoundParams>,
    keys: Option<Tensor>,
}

impl MocaState {
    /// Fresh networks for inputs of width `input_dim`; the key encoder starts as a
    /// copy of the query encoder.
    pub fn init(config: &TrainConfig, input_dim: usize, steps_per_epoch: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::stream(config.seed, &[stream::INIT]);
        let enc_q = Mlp::new(config.encoder_spec(input_dim), &mut rng)?;
        let dec = config
            .decoder_spec(input_dim)
            .map(|spec| Mlp::new(spec, &mut rng))
            .transpose()?;
        let contrastive = config.objective == Objective::Contrastive;
        let enc_k = contrastive.then(|| enc_q.clone());
        let queue = if contrastive {
            let mut qrng = Rng::stream(config.seed, &[stream::QUEUE]);
            Some(KeyQueue::init(config.queue_size, config.latent_dim, &mut qrng)?)
        } else {
            None
        };
        let mut state = Self {
            enc_q,
            enc_k,
            dec,
            queue,
            adam: AdamState::new(&ParamSet::new(), AdamConfig::default())?,
            schedule: MomentumSchedule::new(
                config.m0,
                (config.epochs * steps_per_epoch) as u64,
            )?,
            step: 0,
            epoch: 0,
        };
        state.adam = AdamState::new(
            &state.trainable(),
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
        )?;
        Ok(state)
    }

    /// Query-encoder and decoder parameters under their `enc_q.`/`dec.` prefixes.
    pub fn trainable(&self) -> ParamSet {
        let mut p = self.enc_q.params().prefixed(ENC_Q);
        if let Some(dec) = &self.dec {
            p.extend(dec.params().prefixed(DEC)).expect("disjoint prefixes");
        }
        p
    }

    fn set_trainable(&mut self, params: &ParamSet) -> Result<()> {
        self.enc_q = Mlp::from_params(self.enc_q.spec().clone(), params.strip_prefix(ENC_Q))?;
        if let Some(dec) = &mut self.dec {
            *dec = Mlp::from_params(dec.spec().clone(), params.strip_prefix(DEC))?;
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.enc_q.spec().output_dim()
    }

    /// Encodes `x` with the query encoder.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.enc_q.forward(x)
    }

    fn build_loss(&self, config: &TrainConfig, x: &Tensor, rng: &mut Rng) -> Result<LossGraph> {
        let mut tape = Tape::new();
        let bound_q = self.enc_q.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let zq = self.enc_q.forward_on(&mut tape, &bound_q, xv)?;
        if !tape.value(zq).is_finite() {
            return Err(Error::NonFinite(format!(
                "latent codes at step {} (epoch {})",
                self.step,
                self.epoch + 1
            )));
        }

        let (rec, bound_d) = match &self.dec {
            Some(dec) => {
                let bd = dec.bind(&mut tape);
                let x_rec = dec.forward_on(&mut tape, &bd, zq)?;
                (Some(mse_reconstruction(&mut tape, xv, x_rec)?), Some(bd))
            }
            None => (None, None),
        };

        let b = x.rows();
        let d = self.latent_dim();
        let (matching, keys) = match config.objective {
            Objective::Contrastive => {
                let (enc_k, queue) = self
                    .enc_k
                    .as_ref()
                    .zip(self.queue.as_ref())
                    .ok_or_else(|| Error::contract("contrastive step without key encoder and queue"))?;
                // keys come from a separate tape, so no gradient can reach them
                let zk = enc_k.forward(x)?;
                let l = moco_contrastive(&mut tape, zq, &zk, queue.keys(), config.tau)?;
                (l, Some(zk))
            }
            Objective::Mmd => {
                let prior = tape.constant(sample_prior(d, b, rng)?);
                (mmd(&mut tape, zq, prior, &config.kernel())?, None)
            }
            Objective::Swd => {
                let prior = tape.constant(sample_prior(d, b, rng)?);
                (swd_loss(&mut tape, zq, prior, config.loss_projections, rng)?, None)
            }
            Objective::Sinkhorn => {
                let p = sample_prior(d, b, rng)?;
                let eps = default_epsilon(tape.value(zq), &p)?;
                let prior = tape.constant(p);
                let l = sinkhorn_divergence(&mut tape, zq, prior, eps, config.sinkhorn_iters)?;
                (l, None)
            }
        };
        let weighted = tape.scale(matching, config.lambda);
        let total = match rec {
            Some(r) => tape.add(r, weighted)?,
            None => weighted,
        };
        Ok(LossGraph {
            tape,
            total,
            rec,
            matching,
            bound_q,
            bound_d,
            keys,
        })
    }

    fn read_losses(&self, g: &LossGraph) -> Result<StepOutput> {
        let scalar = |v: Var| g.tape.value(v).item();
        let out = StepOutput {
            loss_total: scalar(g.total)?,
            loss_rec: g.rec.map(scalar).transpose()?,
            loss_con: scalar(g.matching)?,
            momentum: None,
        };
        if !out.loss_total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at step {} (epoch {}): total {}, reconstruction {:?}, matching {}",
                self.step,
                self.epoch + 1,
                out.loss_total,
                out.loss_rec,
                out.loss_con
            )));
        }
        Ok(out)
    }

    /// Loss values on `x` without changing any state.
    pub fn evaluate_losses(&self, config: &TrainConfig, x: &Tensor, rng: &mut Rng) -> Result<StepOutput> {
        let g = self.build_loss(config, x, rng)?;
        self.read_losses(&g)
    }
}

/// One optimization step on the minibatch `x`: Adam on the query encoder and
/// decoder, then the momentum update of the key encoder and the queue update.
///
/// `rng` supplies prior samples and projections for the baseline objectives.
/// A non-finite loss is reported before any state changes.
pub fn moca_step(
    state: &mut MocaState,
    config: &TrainConfig,
    x: &Tensor,
    rng: &mut Rng,
) -> Result<StepOutput> {
    if state.step >= state.schedule.total_steps {
        return Err(Error::contract(format!(
            "step {} beyond the scheduled {} steps",
            state.step, state.schedule.total_steps
        )));
    }
    let g = state.build_loss(config, x, rng)?;
    let mut out = state.read_losses(&g)?;
    let grads = g.tape.backward(g.total)?;

    let mut grad_set = g.bound_q.gradients(&grads)?.prefixed(ENC_Q);
    if let Some(bd) = &g.bound_d {
        grad_set.extend(bd.gradients(&grads)?.prefixed(DEC))?;
    }
    let mut params = state.trainable();
    state.adam.step(&mut params, &grad_set)?;
    state.set_trainable(&params)?;

    if let (Some(enc_k), Some(queue), Some(keys)) = (&mut state.enc_k, &mut state.queue, &g.keys) {
        let m = state.schedule.at(state.step)?;
        ema_update(enc_k.params_mut(), state.enc_q.params(), m)?;
        queue.enqueue(keys)?;
        out.momentum = Some(m);
    }
    state.step += 1;
    Ok(out)
}

/// Diagnostics computed at evaluation epochs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub swd_to_prior: Option<f64>,
    pub swd_samples_vs_test: Option<f64>,
    pub entropy_est: Option<f64>,
    pub svd_dispersion: Option<f64>,
}

/// Evaluates the latent diagnostics on (a prefix of) the held-out set, or of the
/// training set when there is none, and decoded prior samples against held-out data.
pub fn evaluate(
    state: &MocaState,
    config: &TrainConfig,
    train: &Dataset,
    test: Option<&Dataset>,
    epoch: u64,
) -> Result<Diagnostics> {
    let mut rng = Rng::stream(config.seed, &[stream::EVAL, epoch]);
    let source = test.unwrap_or(train).head(config.eval_samples)?;
    let z = state.encode(&source.features)?;
    let n = z.rows();
    let d = z.cols();
    let prior = sample_prior(d, n, &mut rng)?;
    let swd_to_prior = swd_metric(&z, &prior, config.eval_projections, &mut rng)?;
    let entropy_est = entropy_estimate(&z, config.tau)?;
    let svd_dispersion = if n >= d {
        Some(svd_spectrum(&z)?.dispersion)
    } else {
        None
    };
    let swd_samples_vs_test = match (&state.dec, test) {
        (Some(dec), Some(_)) => {
            let samples = generate(dec, n, &mut rng)?;
            Some(swd_metric(&samples, &source.features, config.eval_projections, &mut rng)?)
        }
        _ => None,
    };
    Ok(Diagnostics {
        swd_to_prior: Some(swd_to_prior),
        swd_samples_vs_test,
        entropy_est: Some(entropy_est),
        svd_dispersion,
    })
}

/// Drives a run epoch by epoch; every epoch's randomness is derived from
/// `(seed, purpose, epoch)`, so a run resumed from an epoch checkpoint continues
/// exactly as the uninterrupted run would.
pub struct Trainer<'a> {
    config: TrainConfig,
    train: &'a Dataset,
    test: Option<&'a Dataset>,
    state: MocaState,
    trace: Vec<MetricRecord>,
    epoch_seconds: Vec<f64>,
}

fn steps_per_epoch(config: &TrainConfig, train: &Dataset) -> Result<usize> {
    if config.batch_size > train.len() {
        return Err(Error::config(format!(
            "batch size {} exceeds the {} training samples",
            config.batch_size,
            train.len()
        )));
    }
    Ok(train.len() / config.batch_size)
}

fn check_test(train: &Dataset, test: Option<&Dataset>) -> Result<()> {
    if let Some(t) = test {
        if t.dim() != train.dim() {
            return Err(Error::shape(format!(
                "held-out width {} differs from training width {}",
                t.dim(),
                train.dim()
            )));
        }
    }
    Ok(())
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, train: &'a Dataset, test: Option<&'a Dataset>) -> Result<Self> {
        config.validate()?;
        check_test(train, test)?;
        let spe = steps_per_epoch(&config, train)?;
        let state = MocaState::init(&config, train.dim(), spe)?;
        Ok(Self {
            config,
            train,
            test,
            state,
            trace: Vec::new(),
            epoch_seconds: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &MocaState {
        &self.state
    }

    pub fn trace(&self) -> &[MetricRecord] {
        &self.trace
    }

    pub fn epoch_seconds(&self) -> &[f64] {
        &self.epoch_seconds
    }

    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.config.epochs as u64
    }

    fn is_eval_epoch(&self, epoch: u64) -> bool {
        epoch == 0
            || epoch == self.config.epochs as u64
            || (self.config.eval_every > 0 && epoch % self.config.eval_every as u64 == 0)
    }

    fn record(&self, epoch: u64, means: StepOutput, diag: Diagnostics) -> MetricRecord {
        MetricRecord {
            run_id: self.config.run_id(),
            epoch,
            step: self.state.step,
            wall_seconds: None,
            loss_total: means.loss_total,
            loss_rec: means.loss_rec,
            loss_con: means.loss_con,
            momentum_m: means.momentum,
            swd_to_prior: diag.swd_to_prior,
            swd_samples_vs_test: diag.swd_samples_vs_test,
            entropy_est: diag.entropy_est,
            svd_dispersion: diag.svd_dispersion,
        }
    }

    /// Epoch-0 row: mean losses over the epoch-0 batches and full diagnostics, with
    /// no parameter updates.
    pub fn initial_record(&self) -> Result<MetricRecord> {
        let mut rng = Rng::stream(self.config.seed, &[stream::PRIOR, 0]);
        let order = batch_indices(self.train.len(), self.config.batch_size, self.config.seed, 0)?;
        let mut acc = Accumulator::default();
        for idx in &order {
            let x = self.train.features.select_rows(idx)?;
            acc.add(&self.state.evaluate_losses(&self.config, &x, &mut rng)?);
        }
        let mut means = acc.mean();
        if self.state.enc_k.is_some() {
            means.momentum = Some(self.state.schedule.at(0)?);
        }
        let diag = evaluate(&self.state, &self.config, self.train, self.test, 0)?;
        Ok(self.record(0, means, diag))
    }

    /// Computes [`Trainer::initial_record`] and makes it the first trace row.
    pub fn record_initial(&mut self) -> Result<MetricRecord> {
        if self.state.epoch != 0 || !self.trace.is_empty() {
            return Err(Error::contract("the epoch-0 row must be recorded before training"));
        }
        let rec = self.initial_record()?;
        self.trace.push(rec.clone());
        Ok(rec)
    }

    /// Trains one epoch and appends its metric row to the trace.
    pub fn run_epoch(&mut self) -> Result<MetricRecord> {
        if self.is_done() {
            return Err(Error::contract("all configured epochs already ran"));
        }
        let started = Instant::now();
        let epoch = self.state.epoch + 1;
        let seed = self.config.seed;
        if let Some(every) = self.config.lr_decay_every {
            let drops = ((epoch - 1) / every as u64) as i32;
            self.state.adam.config.lr = self.config.lr * self.config.lr_decay_factor.powi(drops);
        }
        let mut rng = Rng::stream(seed, &[stream::PRIOR, epoch]);
        let order = batch_indices(self.train.len(), self.config.batch_size, seed, epoch)?;
        let mut acc = Accumulator::default();
        for idx in &order {
            let x = self.train.features.select_rows(idx)?;
            acc.add(&moca_step(&mut self.state, &self.config, &x, &mut rng)?);
        }
        self.state.epoch = epoch;
        let diag = if self.is_eval_epoch(epoch) {
            evaluate(&self.state, &self.config, self.train, self.test, epoch)?
        } else {
            Diagnostics::default()
        };
        let rec = self.record(epoch, acc.mean(), diag);
        self.trace.push(rec.clone());
        self.epoch_seconds.push(started.elapsed().as_secs_f64());
        Ok(rec)
    }

    /// Snapshot of the whole run: config, trace, networks, optimizer and queue.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        let config = serde_json::to_vec(&self.config).map_err(|e| Error::config(e.to_string()))?;
        ck.push_bytes("meta.config", &config)?;
        let trace = serde_json::to_vec(&self.trace).map_err(|e| Error::config(e.to_string()))?;
        ck.push_bytes("meta.trace", &trace)?;
        let s = &self.state;
        ck.push("state.step", Tensor::scalar(s.step as f64))?;
        ck.push("state.epoch", Tensor::scalar(s.epoch as f64))?;
        ck.push("state.total_steps", Tensor::scalar(s.schedule.total_steps as f64))?;
        for (name, t) in s.enc_q.params().iter() {
            ck.push(format!("{ENC_Q}{name}"), t.clone())?;
        }
        if let Some(k) = &s.enc_k {
            for (name, t) in k.params().iter() {
                ck.push(format!("{ENC_K}{name}"), t.clone())?;
            }
        }
        if let Some(d) = &s.dec {
            for (name, t) in d.params().iter() {
                ck.push(format!("{DEC}{name}"), t.clone())?;
            }
        }
        ck.push("adam.t", Tensor::scalar(s.adam.step_count() as f64))?;
        ck.push("adam.lr", Tensor::scalar(s.adam.config.lr))?;
        for (name, t) in s.adam.first_moments().iter() {
            ck.push(format!("adam.m.{name}"), t.clone())?;
        }
        for (name, t) in s.adam.second_moments().iter() {
            ck.push(format!("adam.v.{name}"), t.clone())?;
        }
        if let Some(q) = &s.queue {
            ck.push("queue.keys", q.keys().clone())?;
            ck.push("queue.cursor", Tensor::scalar(q.cursor() as f64))?;
        }
        Ok(ck)
    }

    /// Continues a run from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ck: &Checkpoint, train: &'a Dataset, test: Option<&'a Dataset>) -> Result<Self> {
        let config = config_from_checkpoint(ck)?;
        check_test(train, test)?;
        let spe = steps_per_epoch(&config, train)?;
        let state = state_from_checkpoint(ck, &config)?;
        if state.enc_q.spec().input_dim() != train.dim() {
            return Err(Error::shape(format!(
                "checkpoint expects inputs of width {}, dataset has {}",
                state.enc_q.spec().input_dim(),
                train.dim()
            )));
        }
        if state.schedule.total_steps != (config.epochs * spe) as u64 {
            return Err(Error::contract(
                "checkpoint schedule length does not match this dataset",
            ));
        }
        let trace: Vec<MetricRecord> = serde_json::from_slice(&ck.get_bytes("meta.trace")?)
            .map_err(|e| Error::format(0, format!("bad trace in checkpoint: {e}")))?;
        Ok(Self {
            config,
            train,
            test,
            state,
            trace,
            epoch_seconds: Vec::new(),
        })
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            state: self.state,
            trace: self.trace,
        }
    }
}

pub fn config_from_checkpoint(ck: &Checkpoint) -> Result<TrainConfig> {
    serde_json::from_slice(&ck.get_bytes("meta.config")?)
        .map_err(|e| Error::format(0, format!("bad config in checkpoint: {e}")))
}

fn scalar_u64(ck: &Checkpoint, name: &str) -> Result<u64> {
    let v = ck.require(name)?.item()?;
    if !(v >= 0.0 && v.fract() == 0.0) {
        return Err(Error::format(0, format!("{name} is not a count: {v}")));
    }
    Ok(v as u64)
}

fn params_with_prefix(ck: &Checkpoint, prefix: &str) -> Result<ParamSet> {
    let mut p = ParamSet::new();
    for (name, t) in ck.entries() {
        if let Some(rest) = name.strip_prefix(prefix) {
            p.insert(rest, t.clone())?;
        }
    }
    Ok(p)
}

/// Rebuilds the run state stored in a checkpoint.
pub fn state_from_checkpoint(ck: &Checkpoint, config: &TrainConfig) -> Result<MocaState> {
    let q_params = params_with_prefix(ck, ENC_Q)?;
    let input_dim = q_params
        .get("layer_0.weight")
        .ok_or_else(|| Error::format(0, "checkpoint has no query encoder"))?
        .rows();
    let enc_q = Mlp::from_params(config.encoder_spec(input_dim), q_params)?;
    let k_params = params_with_prefix(ck, ENC_K)?;
    let enc_k = (!k_params.is_empty())
        .then(|| Mlp::from_params(config.encoder_spec(input_dim), k_params))
        .transpose()?;
    let dec = config
        .decoder_spec(input_dim)
        .map(|spec| Mlp::from_params(spec, params_with_prefix(ck, DEC)?))
        .transpose()?;
    let queue = match ck.get("queue.keys") {
        Some(keys) => Some(KeyQueue::from_parts(
            keys.clone(),
            scalar_u64(ck, "queue.cursor")? as usize,
        )?),
        None => None,
    };
    let adam = AdamState::from_parts(
        AdamConfig {
            lr: ck.require("adam.lr")?.item()?,
            ..AdamConfig::default()
        },
        scalar_u64(ck, "adam.t")?,
        params_with_prefix(ck, "adam.m.")?,
        params_with_prefix(ck, "adam.v.")?,
    )?;
    let state = MocaState {
        enc_q,
        enc_k,
        dec,
        queue,
        adam,
        schedule: MomentumSchedule::new(config.m0, scalar_u64(ck, "state.total_steps")?)?,
        step: scalar_u64(ck, "state.step")?,
        epoch: scalar_u64(ck, "state.epoch")?,
    };
    state.adam.first_moments().check_aligned(&state.trainable())?;
    Ok(state)
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    total: f64,
    rec: Option<f64>,
    con: f64,
    momentum: Option<f64>,
}

impl Accumulator {
    fn add(&mut self, s: &StepOutput) {
        self.n += 1;
        self.total += s.loss_total;
        self.con += s.loss_con;
        if let Some(r) = s.loss_rec {
            *self.rec.get_or_insert(0.0) += r;
        }
        if s.momentum.is_some() {
            self.momentum = s.momentum;
        }
    }

    fn mean(&self) -> StepOutput {
        let n = self.n.max(1) as f64;
        StepOutput {
            loss_total: self.total / n,
            loss_rec: self.rec.map(|r| r / n),
            loss_con: self.con / n,
            momentum: self.momentum,
        }
    }
}

/// Training and held-out sets named by the config. The synthetic dataset is
/// drawn from the run seed and has no held-out split.
pub fn load_datasets(config: &TrainConfig) -> Result<(Dataset, Option<Dataset>)> {
    match config.dataset.as_str() {
        "mnist" => Ok((
            load_mnist_dir(&config.data_dir, "train")?,
            Some(load_mnist_dir(&config.data_dir, "test")?),
        )),
        "synth" => Ok((synth_dataset(config.synth_samples, config.synth_dim, config.seed)?, None)),
        other => Err(Error::config(format!("unknown dataset {other:?}"))),
    }
}

/// Final state and per-epoch rows of a run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: MocaState,
    pub trace: Vec<MetricRecord>,
}

/// Runs every configured epoch. A zero-epoch config returns the initial state
/// and an empty trace.
pub fn train(config: &TrainConfig, train: &Dataset, test: Option<&Dataset>) -> Result<TrainOutcome> {
    let mut t = Trainer::new(config.clone(), train, test)?;
    while !t.is_done() {
        t.run_epoch()?;
    }
    Ok(t.into_outcome())
}
