//! The `moca` command-line tool: training runs, sweeps, sampling and standalone
//! diagnostics. Every command writes plain files (CSV traces, JSON sidecars, raw
//! arrays and checkpoints) under an output root.

mod files;

pub use files::{load_matrix, read_array, sha256_file, sidecar_path, write_array, ArraySidecar};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::diagnostics::{entropy_estimate, svd_spectrum, swd_metric, SWD_METRIC_PROJECTIONS};
use crate::error::{Error, Result};
use crate::metrics::{write_csv, MetricRecord};
use crate::nn::Checkpoint;
use crate::prior::{generate, interpolate};
use crate::rng::{derive_seed, stream, Rng};
use crate::train::{
    config_from_checkpoint, load_datasets, state_from_checkpoint, Experiment, Objective,
    TrainConfig, Trainer,
};

/// Environment variable naming the default output root (`runs` when unset).
pub const OUT_DIR_ENV: &str = "MOCA_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "moca", version, about = "Momentum contrastive autoencoders and latent matching baselines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train only a latent matching objective on synthetic data and trace the distance to the prior.
    SynthMatch {
        #[arg(long, value_parser = parse_objective)]
        method: Objective,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train an autoencoder with periodic diagnostics and checkpoints.
    Train {
        /// Continue a run from one of its checkpoints; the stored config is used.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Decode fresh prior samples with a trained decoder.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode points along the spherical path between two encoded inputs.
    Interpolate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        idx_a: usize,
        #[arg(long)]
        idx_b: usize,
        /// Number of points including both endpoints.
        #[arg(long, default_value_t = 8)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        /// Overrides the data directory stored in the checkpoint.
        #[arg(long)]
        data_dir: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train once per value of one hyperparameter and summarize the final diagnostics.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Sliced Wasserstein distance between two sample files.
    EvalSwd {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = SWD_METRIC_PROJECTIONS)]
        n_proj: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rows taken from the head of each file (default: the smaller row count).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Singular-value spectrum of a sample matrix, or of its codes under a checkpoint's encoder.
    DiagSvd {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also report the entropy estimate at this temperature.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Inspect configuration files.
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigCommand {
    /// Print every config key with its default value as JSON.
    PrintDefaults {
        #[arg(long, value_parser = parse_experiment, default_value = "train")]
        experiment: Experiment,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    Lambda,
    Tau,
    M0,
    #[value(name = "K", alias = "k")]
    QueueSize,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::Tau => "tau",
            SweepAxis::M0 => "m0",
            SweepAxis::QueueSize => "K",
        }
    }

    fn apply(self, config: &mut TrainConfig, value: f64) -> Result<()> {
        match self {
            SweepAxis::Lambda => config.lambda = value,
            SweepAxis::Tau => config.tau = value,
            SweepAxis::M0 => config.m0 = value,
            SweepAxis::QueueSize => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::config(format!("K must be a positive integer, got {value}")));
                }
                config.queue_size = value as usize;
            }
        }
        Ok(())
    }
}

/// Flags shared by the commands that train.
#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// JSON config file; keys it omits keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub queue_size: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub m0: Option<f64>,
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long)]
    pub data_dir: Option<String>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Any config key as `key=<json>`; may be repeated.
    #[arg(long = "set", value_name = "KEY=JSON")]
    pub set: Vec<String>,
    /// Output root (default: $MOCA_OUT_DIR, else `runs`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Map<String, Value>> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("seed", self.seed.map(Value::from));
        put("epochs", self.epochs.map(Value::from));
        put("batch_size", self.batch_size.map(Value::from));
        put("lr", self.lr.map(Value::from));
        put("lambda", self.lambda.map(Value::from));
        put("tau", self.tau.map(Value::from));
        put("queue_size", self.queue_size.map(Value::from));
        put("m0", self.m0.map(Value::from));
        put("run_id", self.run_id.clone().map(Value::from));
        put("data_dir", self.data_dir.clone().map(Value::from));
        put("eval_every", self.eval_every.map(Value::from));
        for kv in &self.set {
            let (k, raw) = kv
                .split_once('=')
                .ok_or_else(|| Error::config(format!("--set expects key=value, got {kv:?}")))?;
            let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            m.insert(k.trim().to_string(), v);
        }
        Ok(m)
    }

    fn has_overrides(&self) -> bool {
        self.config.is_some() || !self.overrides().map(|m| m.is_empty()).unwrap_or(false)
    }

    /// Defaults for `experiment`, then the config file, then the flags.
    pub fn resolve(&self, experiment: Experiment) -> Result<TrainConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                match serde_json::from_str(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(Error::config(format!("{} is not a JSON object", path.display()))),
                    Err(e) => return Err(Error::config(format!("{}: {e}", path.display()))),
                }
            }
            None => Map::new(),
        };
        let experiment = match file.get("experiment") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::config(format!("experiment: {e}")))?,
            None => experiment,
        };
        let mut merged = match serde_json::to_value(TrainConfig::defaults_for(experiment)) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("configs serialize as objects"),
        };
        merged.extend(file);
        merged.extend(self.overrides()?);
        let config: TrainConfig = serde_json::from_value(Value::Object(merged))
            .map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn out_root(&self) -> PathBuf {
        out_root(self.out.as_deref())
    }
}

fn out_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn parse_objective(s: &str) -> std::result::Result<Objective, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_experiment(s: &str) -> std::result::Result<Experiment, String> {
    serde_json::from_value(Value::String(s.into()))
        .map_err(|_| format!("unknown experiment {s:?} (expected train or synth-match)"))
}

/// Process exit status for an error: 2 configuration or usage, 3 data or file
/// format, 4 numerical failure.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Contract(_) => 2,
        Error::Shape(_) | Error::Format { .. } | Error::UnsupportedVersion(_) | Error::Io(_) => 3,
        Error::NonFinite(_) | Error::Degenerate(_) => 4,
    }
}

/// Entry point of the `moca` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthMatch { method, run } => {
            let mut config = run.resolve(Experiment::SynthMatch)?;
            config.objective = method;
            config.validate()?;
            train_run(&config, &run.out_root(), None).map(drop)
        }
        Command::Train { resume: Some(path), run } => {
            if run.has_overrides() {
                return Err(Error::config("--resume uses the stored config; only --out may be given"));
            }
            let ck = Checkpoint::load(&path)?;
            let config = config_from_checkpoint(&ck)?;
            train_run(&config, &run.out_root(), Some(&ck)).map(drop)
        }
        Command::Train { resume: None, run } => {
            let config = run.resolve(Experiment::Train)?;
            train_run(&config, &run.out_root(), None).map(drop)
        }
        Command::Sample { checkpoint, count, seed, out } => cmd_sample(&checkpoint, count, seed, &out),
        Command::Interpolate { checkpoint, idx_a, idx_b, steps, split, data_dir, out } => {
            cmd_interpolate(&checkpoint, idx_a, idx_b, steps, split, data_dir, &out)
        }
        Command::Sweep { axis, values, run } => {
            let base = run.resolve(Experiment::Train)?;
            cmd_sweep(&base, axis, &values, &run.out_root()).map(drop)
        }
        Command::EvalSwd { a, b, n_proj, seed, count } => {
            let report = cmd_eval_swd(&a, &b, n_proj, seed, count)?;
            print_json(&report)
        }
        Command::DiagSvd { input, checkpoint, tau } => {
            let report = cmd_diag_svd(&input, checkpoint.as_deref(), tau)?;
            print_json(&report)
        }
        Command::Config { command: ConfigCommand::PrintDefaults { experiment } } => {
            print_json(&TrainConfig::defaults_for(experiment))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::config(e.to_string()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", to_json(value)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Run metadata written as `run.json`; timings live here and never in the CSV.
#[derive(Debug, Serialize)]
struct RunInfo<'a> {
    run_id: String,
    status: &'a str,
    error: Option<String>,
    started_unix: f64,
    finished_unix: Option<f64>,
    total_seconds: Option<f64>,
    epoch_seconds: &'a [f64],
    checkpoints: &'a [String],
    config: &'a TrainConfig,
}

/// Paths produced by one training run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub metrics: PathBuf,
    pub final_checkpoint: PathBuf,
    pub trace: Vec<MetricRecord>,
}

fn write_metrics(path: &Path, trace: &[MetricRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(&mut buf, trace)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Trains (or resumes) one run into `<root>/<run_id>/`: `metrics.csv`, `run.json`,
/// periodic `checkpoints/epoch-NNNN.moca` and `final.moca`. A numerical failure
/// (non-finite loss or collapsed codes) stops the run, saves `abort.moca` and
/// returns the error.
pub fn train_run(config: &TrainConfig, root: &Path, resume: Option<&Checkpoint>) -> Result<RunOutput> {
    let (train, test) = load_datasets(config)?;
    let mut trainer = match resume {
        Some(ck) => Trainer::resume(ck, &train, test.as_ref())?,
        None => Trainer::new(config.clone(), &train, test.as_ref())?,
    };
    let run_id = config.run_id();
    let dir = root.join(&run_id);
    let ck_dir = dir.join("checkpoints");
    fs::create_dir_all(&ck_dir)?;
    let metrics = dir.join("metrics.csv");
    let started_unix = unix_now();
    let started = Instant::now();
    let mut checkpoints = Vec::new();

    let write_info = |trainer: &Trainer, status: &str, error: Option<String>, checkpoints: &[String]| {
        let done = status != "running";
        let info = RunInfo {
            run_id: run_id.clone(),
            status,
            error,
            started_unix,
            finished_unix: done.then(unix_now),
            total_seconds: done.then(|| started.elapsed().as_secs_f64()),
            epoch_seconds: trainer.epoch_seconds(),
            checkpoints,
            config,
        };
        fs::write(dir.join("run.json"), to_json(&info)? + "\n")?;
        Ok::<(), Error>(())
    };

    let outcome = (|| -> Result<()> {
        write_info(&trainer, "running", None, &checkpoints)?;
        if resume.is_none() {
            let r = trainer.record_initial()?;
            eprintln!("{run_id}: epoch 0 loss {:.6}", r.loss_total);
            write_metrics(&metrics, trainer.trace())?;
        }
        while !trainer.is_done() {
            let r = trainer.run_epoch()?;
            eprintln!(
                "{run_id}: epoch {}/{} loss {:.6} ({:.1}s)",
                r.epoch,
                config.epochs,
                r.loss_total,
                trainer.epoch_seconds().last().copied().unwrap_or(0.0)
            );
            write_metrics(&metrics, trainer.trace())?;
            let every = config.checkpoint_every as u64;
            if every > 0 && r.epoch % every == 0 && !trainer.is_done() {
                let p = ck_dir.join(format!("epoch-{:04}.moca", r.epoch));
                trainer.checkpoint()?.save(&p)?;
                checkpoints.push(p.display().to_string());
            }
        }
        Ok(())
    })();

    let final_checkpoint = dir.join("final.moca");
    match outcome {
        Ok(()) => {
            write_metrics(&metrics, trainer.trace())?;
            trainer.checkpoint()?.save(&final_checkpoint)?;
            checkpoints.push(final_checkpoint.display().to_string());
            write_info(&trainer, "completed", None, &checkpoints)?;
            Ok(RunOutput {
                dir,
                metrics,
                final_checkpoint,
                trace: trainer.trace().to_vec(),
            })
        }
        Err(e) => {
            write_metrics(&metrics, trainer.trace())?;
            if matches!(e, Error::NonFinite(_) | Error::Degenerate(_)) {
                let p = dir.join("abort.moca");
                trainer.checkpoint()?.save(&p)?;
                checkpoints.push(p.display().to_string());
            }
            write_info(&trainer, "aborted", Some(e.to_string()), &checkpoints)?;
            Err(e)
        }
    }
}

fn load_run(checkpoint: &Path) -> Result<(TrainConfig, crate::train::MocaState, String)> {
    let ck = Checkpoint::load(checkpoint)?;
    let config = config_from_checkpoint(&ck)?;
    let state = state_from_checkpoint(&ck, &config)?;
    Ok((config, state, sha256_file(checkpoint)?))
}

pub fn cmd_sample(checkpoint: &Path, count: usize, seed: u64, out: &Path) -> Result<()> {
    let (_, state, hash) = load_run(checkpoint)?;
    let dec = state
        .dec
        .as_ref()
        .ok_or_else(|| Error::config("checkpoint has no decoder to sample from"))?;
    let width = dec.spec().output_dim();
    let samples = if count == 0 {
        None
    } else {
        Some(generate(dec, count, &mut Rng::new(seed))?)
    };
    let meta = ArraySidecar {
        kind: "sample".into(),
        shape: [0, width],
        dtype: String::new(),
        seed: Some(seed),
        checkpoint_sha256: Some(hash),
        alphas: None,
    };
    write_array(out, &samples.iter().collect::<Vec<_>>(), width, meta)
}

/// Weights from 1 down to 0: the first row decodes input `a`, the last input `b`.
pub fn interpolation_alphas(steps: usize) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::config(format!("steps must be at least 2, got {steps}")));
    }
    let last = (steps - 1) as f64;
    Ok((0..steps).map(|i| 1.0 - i as f64 / last).collect())
}

pub fn cmd_interpolate(
    checkpoint: &Path,
    idx_a: usize,
    idx_b: usize,
    steps: usize,
    split: Split,
    data_dir: Option<String>,
    out: &Path,
) -> Result<()> {
    let alphas = interpolation_alphas(steps)?;
    let (mut config, state, hash) = load_run(checkpoint)?;
    let dec = state
        .dec
        .as_ref()
        .ok_or_else(|| Error::config("checkpoint has no decoder to interpolate with"))?;
    if let Some(d) = data_dir {
        config.data_dir = d;
    }
    let (train, test) = load_datasets(&config)?;
    let ds = match (split, test) {
        (Split::Test, Some(t)) => t,
        (Split::Test, None) => return Err(Error::config("this dataset has no test split")),
        (Split::Train, _) => train,
    };
    for idx in [idx_a, idx_b] {
        if idx >= ds.len() {
            return Err(Error::config(format!("index {idx} out of range for {} rows", ds.len())));
        }
    }
    let x = ds.features.select_rows(&[idx_a])?;
    let x_prime = ds.features.select_rows(&[idx_b])?;
    let rows = interpolate(&state.enc_q, dec, &x, &x_prime, &alphas)?;
    let meta = ArraySidecar {
        kind: "interpolation".into(),
        shape: [0, ds.dim()],
        dtype: String::new(),
        seed: None,
        checkpoint_sha256: Some(hash),
        alphas: Some(alphas),
    };
    write_array(out, &rows.iter().collect::<Vec<_>>(), ds.dim(), meta)
}

/// Columns of a sweep's `summary.csv`; diagnostics are the last recorded values.
pub const SUMMARY_COLUMNS: [&str; 12] = [
    "run_id",
    "axis",
    "value",
    "seed",
    "epochs",
    "loss_total",
    "loss_rec",
    "loss_con",
    "swd_to_prior",
    "swd_samples_vs_test",
    "entropy_est",
    "svd_dispersion",
];

fn last_value(trace: &[MetricRecord], f: impl Fn(&MetricRecord) -> Option<f64>) -> String {
    trace
        .iter()
        .rev()
        .find_map(f)
        .map(|v| v.to_string())
        .unwrap_or_default()
}

/// Trains one run per value, each with seed `derive_seed(seed, [SWEEP, i])`, into
/// `<root>/<run_id>-sweep-<axis>/` and writes `summary.csv` there.
pub fn cmd_sweep(base: &TrainConfig, axis: SweepAxis, values: &[f64], root: &Path) -> Result<PathBuf> {
    let configs = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = base.clone();
            axis.apply(&mut c, v)?;
            c.seed = derive_seed(base.seed, &[stream::SWEEP, i as u64]);
            c.run_id = Some(format!("{}-{}{}", base.run_id(), axis.name(), v));
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = root.join(format!("{}-sweep-{}", base.run_id(), axis.name()));
    fs::create_dir_all(&dir)?;
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Io(e.into()))?;
    w.write_record(SUMMARY_COLUMNS).map_err(|e| Error::Io(e.into()))?;
    for (c, v) in configs.iter().zip(values) {
        let out = train_run(c, &dir, None)?;
        let t = &out.trace;
        let row = [
            c.run_id(),
            axis.name().to_string(),
            v.to_string(),
            c.seed.to_string(),
            c.epochs.to_string(),
            last_value(t, |r| Some(r.loss_total)),
            last_value(t, |r| r.loss_rec),
            last_value(t, |r| Some(r.loss_con)),
            last_value(t, |r| r.swd_to_prior),
            last_value(t, |r| r.swd_samples_vs_test),
            last_value(t, |r| r.entropy_est),
            last_value(t, |r| r.svd_dispersion),
        ];
        w.write_record(&row).map_err(|e| Error::Io(e.into()))?;
        w.flush()?;
    }
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SwdReport {
    pub swd: f64,
    pub n_proj: usize,
    pub seed: u64,
    pub rows: usize,
    pub dim: usize,
}

pub fn cmd_eval_swd(a: &Path, b: &Path, n_proj: usize, seed: u64, count: Option<usize>) -> Result<SwdReport> {
    let a = load_matrix(a)?;
    let b = load_matrix(b)?;
    let n = count.unwrap_or(a.rows().min(b.rows()));
    if n == 0 || n > a.rows() || n > b.rows() {
        return Err(Error::config(format!(
            "count {n} must be in 1..={}",
            a.rows().min(b.rows())
        )));
    }
    let head: Vec<usize> = (0..n).collect();
    let (a, b) = (a.select_rows(&head)?, b.select_rows(&head)?);
    let mut rng = Rng::stream(seed, &[stream::PROJECTION]);
    Ok(SwdReport {
        swd: swd_metric(&a, &b, n_proj, &mut rng)?,
        n_proj,
        seed,
        rows: n,
        dim: a.cols(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SvdReport {
    pub rows: usize,
    pub dim: usize,
    pub singular_values: Vec<f64>,
    pub normalized: Vec<f64>,
    pub dispersion: f64,
    pub entropy_est: Option<f64>,
}

pub fn cmd_diag_svd(input: &Path, checkpoint: Option<&Path>, tau: Option<f64>) -> Result<SvdReport> {
    let mut z = load_matrix(input)?;
    if let Some(ck) = checkpoint {
        let (_, state, _) = load_run(ck)?;
        z = state.encode(&z)?;
    }
    let report = svd_spectrum(&z)?;
    let entropy_est = tau.map(|t| entropy_estimate(&z, t)).transpose()?;
    Ok(SvdReport {
        rows: z.rows(),
        dim: z.cols(),
        singular_values: report.singular_values,
        normalized: report.normalized,
        dispersion: report.dispersion,
        entropy_est,
    })
}
