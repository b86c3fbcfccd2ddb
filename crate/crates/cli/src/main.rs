//! `gcl`: train, score and evaluate generative cooperative anomaly detectors
//! on pre-extracted video features.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gcl_core::GclError;
use toml::{Table, Value};

use crate::commands::Failure;

#[derive(Parser)]
#[command(name = "gcl", version, about = "Generative cooperative learning for video anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train and run cooperative epochs; writes checkpoints and a metrics log.
    Train(RunArgs),
    /// Score a labeled set with a checkpoint and report frame-level AUC.
    Eval(RunArgs),
    /// Score a set with a checkpoint and export per-frame scores.
    Score(RunArgs),
    /// Generate a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Print a manifest summary and, when features are present, feature statistics.
    Inspect(InspectArgs),
}

/// Flags shared by train, eval and score. Each mirrors a config key.
#[derive(Args, Debug, Default)]
#[command(allow_negative_numbers = true, args_override_self = true)]
struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature directory (gclf) or file (csv). For eval and score this is the set to score.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    manifest: Option<String>,
    #[arg(long)]
    test_features: Option<String>,
    #[arg(long)]
    test_manifest: Option<String>,
    /// gclf or csv.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    /// Multiplies every feature value on load.
    #[arg(long)]
    feature_scale: Option<f64>,
    /// pooled or per_video_mean.
    #[arg(long)]
    pooling: Option<String>,
    /// 0 is silent, 1 prints one line per epoch.
    #[arg(long)]
    verbosity: Option<u8>,

    /// gcl_b, gcl_pt, gcl_occ or gcl_ws.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    ws_fraction: Option<f64>,
    /// ones, random_normal, gaussian or none.
    #[arg(long = "nl", alias = "nl-mode")]
    nl_mode: Option<String>,
    #[arg(long)]
    gaussian_sigma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    rms_smoothing: Option<f64>,
    #[arg(long)]
    rms_eps: Option<f64>,
    #[arg(long = "kg", alias = "k-g")]
    k_g: Option<f64>,
    #[arg(long = "kd", alias = "k-d")]
    k_d: Option<f64>,
    #[arg(long = "dth", alias = "d-th")]
    d_th: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    soft_labels: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    self_labels: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    squared_norm: Option<bool>,
    /// Comma-separated generator widths, input and output included.
    #[arg(long, value_delimiter = ',')]
    gen_dims: Option<Vec<usize>>,
    /// Comma-separated discriminator widths, input and output included.
    #[arg(long, value_delimiter = ',')]
    disc_dims: Option<Vec<usize>>,
}

#[derive(Args, Debug, Default)]
#[command(allow_negative_numbers = true, args_override_self = true)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<String>,
    /// gclf or csv.
    #[arg(long)]
    format: Option<String>,
    /// Size of a held-out split; when nonzero the output has train/ and test/.
    #[arg(long)]
    test_videos: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_videos: Option<usize>,
    #[arg(long)]
    segments_per_video: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    anomaly_video_fraction: Option<f64>,
    #[arg(long)]
    anomaly_segment_fraction: Option<f64>,
    #[arg(long)]
    latent_rank: Option<usize>,
    #[arg(long)]
    mixing_scale: Option<f64>,
    #[arg(long)]
    smoothness: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    offset: Option<f64>,
    #[arg(long)]
    anomaly_rank: Option<usize>,
    #[arg(long)]
    anomaly_types: Option<usize>,
    #[arg(long)]
    anomaly_shift: Option<f64>,
    #[arg(long)]
    anomaly_manifold_share: Option<f64>,
    #[arg(long)]
    anomaly_spread: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    require_anomalies: Option<bool>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true, args_override_self = true)]
struct InspectArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "gclf")]
    format: String,
    /// Threshold for the reported temporal-difference retention rate.
    #[arg(long = "dth", alias = "d-th", default_value_t = 0.7)]
    d_th: f64,
    #[arg(long, default_value_t = 1.0)]
    feature_scale: f64,
}

/// Collects the flags that were given into a table keyed like the config file.
#[derive(Default)]
struct Overrides(Table);

impl Overrides {
    fn put<T: Into<Value>>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.to_string(), v.into());
        }
        self
    }

    fn int<T: TryInto<i64>>(&mut self, key: &str, value: Option<T>) -> anyhow::Result<&mut Self> {
        if let Some(v) = value {
            let v = v
                .try_into()
                .map_err(|_| commands::fail("usage", format!("--{} is out of range", key.replace('_', "-"))))?;
            self.0.insert(key.to_string(), Value::Integer(v));
        }
        Ok(self)
    }

    fn dims(&mut self, key: &str, value: Option<Vec<usize>>) -> anyhow::Result<&mut Self> {
        if let Some(v) = value {
            let items = v
                .into_iter()
                .map(|x| i64::try_from(x).map(Value::Integer))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| commands::fail("usage", format!("--{} is out of range", key.replace('_', "-"))))?;
            self.0.insert(key.to_string(), Value::Array(items));
        }
        Ok(self)
    }
}

impl RunArgs {
    /// `data_keys` names the keys `--features`/`--manifest` map to.
    fn overrides(self, data_keys: (&str, &str)) -> anyhow::Result<Table> {
        let mut o = Overrides::default();
        o.put(data_keys.0, self.features)
            .put(data_keys.1, self.manifest)
            .put("test_features", self.test_features)
            .put("test_manifest", self.test_manifest)
            .put("format", self.format)
            .put("out", self.out)
            .put("checkpoint", self.checkpoint)
            .put("feature_scale", self.feature_scale)
            .put("pooling", self.pooling)
            .put("mode", self.mode)
            .put("ws_fraction", self.ws_fraction)
            .put("nl_mode", self.nl_mode)
            .put("gaussian_sigma", self.gaussian_sigma)
            .put("lr", self.lr)
            .put("momentum", self.momentum)
            .put("rms_smoothing", self.rms_smoothing)
            .put("rms_eps", self.rms_eps)
            .put("k_g", self.k_g)
            .put("k_d", self.k_d)
            .put("d_th", self.d_th)
            .put("soft_labels", self.soft_labels)
            .put("self_labels", self.self_labels)
            .put("squared_norm", self.squared_norm);
        o.int("verbosity", self.verbosity)?
            .int("epochs", self.epochs)?
            .int("pretrain_epochs", self.pretrain_epochs)?
            .int("batch_size", self.batch_size)?
            .int("seed", self.seed)?
            .dims("gen_dims", self.gen_dims)?
            .dims("disc_dims", self.disc_dims)?;
        Ok(o.0)
    }
}

impl SynthArgs {
    fn overrides(self) -> anyhow::Result<Table> {
        let mut o = Overrides::default();
        o.put("out", self.out)
            .put("format", self.format)
            .put("anomaly_video_fraction", self.anomaly_video_fraction)
            .put("anomaly_segment_fraction", self.anomaly_segment_fraction)
            .put("mixing_scale", self.mixing_scale)
            .put("smoothness", self.smoothness)
            .put("noise_std", self.noise_std)
            .put("offset", self.offset)
            .put("anomaly_shift", self.anomaly_shift)
            .put("anomaly_manifold_share", self.anomaly_manifold_share)
            .put("anomaly_spread", self.anomaly_spread)
            .put("require_anomalies", self.require_anomalies);
        o.int("test_videos", self.test_videos)?
            .int("seed", self.seed)?
            .int("n_videos", self.n_videos)?
            .int("segments_per_video", self.segments_per_video)?
            .int("d", self.d)?
            .int("p", self.p)?
            .int("latent_rank", self.latent_rank)?
            .int("anomaly_rank", self.anomaly_rank)?
            .int("anomaly_types", self.anomaly_types)?;
        Ok(o.0)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(args) => {
            let file = args.config.clone();
            let cfg = commands::resolve(file.as_deref(), args.overrides(("features", "manifest"))?)?;
            commands::train(&cfg)
        }
        Command::Eval(args) => {
            let file = args.config.clone();
            let cfg = commands::resolve(file.as_deref(), args.overrides(("test_features", "test_manifest"))?)?;
            commands::eval(&cfg)
        }
        Command::Score(args) => {
            let file = args.config.clone();
            let cfg = commands::resolve(file.as_deref(), args.overrides(("test_features", "test_manifest"))?)?;
            commands::score(&cfg)
        }
        Command::Synth(args) => {
            let file = args.config.clone();
            commands::synth(file.as_deref(), args.overrides()?)
        }
        Command::Inspect(args) => commands::inspect(
            args.features.as_deref(),
            args.manifest.as_deref(),
            &args.format,
            args.d_th,
            args.feature_scale,
        ),
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.kind;
        }
        if let Some(e) = cause.downcast_ref::<GclError>() {
            return match e {
                GclError::Config(_) => "config",
                GclError::Io { .. } => "io",
                GclError::Format { .. } | GclError::Json(_) | GclError::Csv(_) => "format",
                GclError::MissingGroundTruth(_) => "ground_truth",
                GclError::AucUndefined { .. } => "auc",
                GclError::EmptyDataset | GclError::FilterEmpty { .. } => "data",
                _ => "internal",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "error"
}

/// The error chain on one line, skipping causes their parent already quotes.
fn one_line(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if text.is_empty() {
            text = msg;
        } else if !text.ends_with(&msg) {
            text = format!("{text}: {msg}");
        }
    }
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", error_kind(&e), one_line(&e));
            ExitCode::FAILURE
        }
    }
}
