//! Command-line interface: argument definitions and dispatch.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mcif_core::eval::DetectorKind;

use crate::config::RunConfig;
use crate::pipeline::{self, RunCtx};

#[derive(Debug, Parser)]
#[command(
    name = "mcif",
    about = "Latent-space anomaly detection for transient light curves: \
             classifier encoder + per-class isolation forests",
    version
)]
pub struct Cli {
    /// JSON run configuration; flags override individual fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic 17-class dataset CSV plus manifest.
    Simulate(SimulateArgs),
    /// Train the classifier; writes encoder.json, split.json, audit.json.
    Train(TrainArgs),
    /// Project objects into the latent space; writes latents.csv.
    Encode(EncodeArgs),
    /// Fit one isolation forest per class on training latents.
    Fit(FitArgs),
    /// Score latents (minimum per-class anomaly score), unsorted.
    Score(ScoreArgs),
    /// Score and sort descending; writes ranked.csv.
    Rank(ScoreArgs),
    /// Evaluation protocols (representative population or one-class-out).
    Eval(EvalArgs),
    /// Single weighted isolation forest over all training latents.
    Baseline(BaselineArgs),
    /// Day-by-day anomaly scores on truncated light curves.
    Realtime(RealtimeArgs),
    /// Train encoders across latent sizes and tabulate AUROC.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Population scale relative to the full survey totals.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Light-curve CSV (sequence path).
    #[arg(long, conflicts_with = "features")]
    pub data: Option<PathBuf>,
    /// Feature-table CSV (feature path, with standardization).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Latent (penultimate) width.
    #[arg(long)]
    pub latent: Option<usize>,
    /// Recurrent units per layer.
    #[arg(long)]
    pub units: Option<usize>,
    /// Sequence capacity (max timesteps).
    #[arg(long)]
    pub nt: Option<usize>,
    /// Comma-separated anomalous class names (quarantined to test).
    #[arg(long, value_delimiter = ',')]
    pub anomalous: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Light-curve CSV (sequence models).
    #[arg(long, conflicts_with = "features")]
    pub data: Option<PathBuf>,
    /// Feature-table CSV (feature models); requires --standardizer.
    #[arg(long, requires = "standardizer")]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub standardizer: Option<PathBuf>,
    #[arg(long)]
    pub nt: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub latents: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Estimators per class forest.
    #[arg(long)]
    pub estimators: Option<usize>,
    /// Subsample size per tree.
    #[arg(long)]
    pub psi: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub mcif: PathBuf,
    #[arg(long)]
    pub latents: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Which objects to include: all, train, validation, or test.
    #[arg(long, default_value = "all")]
    pub subset: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Representative-population protocol (downsampled anomaly rate).
    #[arg(long, conflicts_with = "one_class_out")]
    pub representative: bool,
    /// One-class-out comparison over a feature table.
    #[arg(long = "one-class-out")]
    pub one_class_out: bool,

    #[arg(long, required_if_eq("representative", "true"))]
    pub mcif: Option<PathBuf>,
    #[arg(long)]
    pub latents: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Common-to-anomalous population ratio.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub resamples: Option<usize>,
    /// Follow-up budget as a fraction of the ranked list.
    #[arg(long)]
    pub top_fraction: Option<f64>,

    /// Feature table for one-class-out.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// JSON map of category name to class list.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// classifier+iforest | classifier+mcif | mcif-raw | iforest-raw
    #[arg(long)]
    pub detector: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub latents: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Compare against a fitted MCIF model on the test subset.
    #[arg(long)]
    pub mcif: Option<PathBuf>,
    /// Total estimators for the single forest.
    #[arg(long)]
    pub estimators: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RealtimeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub mcif: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Cap per group (common/anomalous).
    #[arg(long)]
    pub sample: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Latent sizes to test.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 25, 50, 70, 100])]
    pub dims: Vec<usize>,
    /// Independent seeds per size.
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// Load config, apply flag overrides, and run the requested stage.
/// Returns the process exit code.
pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configure worker pool")?;
    }

    // Per-subcommand overrides feed the digest, which stamps artifacts.
    match &cli.command {
        Command::Simulate(args) => {
            if let Some(scale) = args.scale {
                config.population.scale = scale;
            }
        }
        Command::Train(args) => {
            if let Some(epochs) = args.epochs {
                config.network.epochs = epochs;
            }
            if let Some(latent) = args.latent {
                config.network.latent_dim = latent;
            }
            if let Some(units) = args.units {
                config.network.recurrent_units = units;
            }
            if let Some(nt) = args.nt {
                config.dataset.n_t = nt;
            }
            if let Some(anomalous) = &args.anomalous {
                config.dataset.anomalous_classes = Some(anomalous.clone());
            }
        }
        Command::Encode(args) => {
            if let Some(nt) = args.nt {
                config.dataset.n_t = nt;
            }
        }
        Command::Fit(args) => {
            if let Some(estimators) = args.estimators {
                config.forest.n_estimators = estimators;
            }
            if let Some(psi) = args.psi {
                config.forest.psi = psi;
            }
        }
        Command::Eval(args) => {
            if let Some(ratio) = args.ratio {
                config.population.ratio = ratio;
            }
            if let Some(resamples) = args.resamples {
                config.population.n_resamples = resamples;
            }
            if let Some(top) = args.top_fraction {
                config.population.top_fraction = top;
            }
            if let Some(epochs) = args.epochs {
                config.network.epochs = epochs;
            }
        }
        Command::Baseline(args) => {
            if let Some(estimators) = args.estimators {
                config.forest.baseline_estimators = estimators;
            }
        }
        Command::Realtime(args) => {
            if let Some(sample) = args.sample {
                config.realtime.sample_per_group = sample;
            }
        }
        Command::Sweep(args) => {
            if let Some(epochs) = args.epochs {
                config.network.epochs = epochs;
            }
        }
        _ => {}
    }

    let ctx = RunCtx::new(config, cli.out.clone())?;
    match cli.command {
        Command::Simulate(_) => pipeline::simulate(&ctx, ctx.config.population.scale),
        Command::Train(args) => match (&args.data, &args.features) {
            (Some(data), None) => pipeline::train_sequences(&ctx, data),
            (None, Some(features)) => pipeline::train_features(&ctx, features),
            _ => bail!("train needs exactly one of --data or --features"),
        },
        Command::Encode(args) => match (&args.data, &args.features) {
            (Some(data), None) => pipeline::encode_sequences(&ctx, &args.model, data),
            (None, Some(features)) => pipeline::encode_features(
                &ctx,
                &args.model,
                args.standardizer.as_ref().expect("clap enforces"),
                features,
            ),
            _ => bail!("encode needs exactly one of --data or --features"),
        },
        Command::Fit(args) => pipeline::fit(&ctx, &args.latents, &args.split),
        Command::Score(args) => pipeline::score(
            &ctx,
            &args.mcif,
            &args.latents,
            args.split.as_deref(),
            &args.subset,
        ),
        Command::Rank(args) => pipeline::rank(
            &ctx,
            &args.mcif,
            &args.latents,
            args.split.as_deref(),
            &args.subset,
        ),
        Command::Eval(args) => {
            if args.representative {
                pipeline::eval_representative(
                    &ctx,
                    args.mcif.as_deref().context("--mcif required")?,
                    args.latents.as_deref().context("--latents required")?,
                    args.split.as_deref().context("--split required")?,
                )
            } else if args.one_class_out {
                let detector = args
                    .detector
                    .as_deref()
                    .and_then(DetectorKind::parse)
                    .context(
                        "--detector must be one of classifier+iforest, classifier+mcif, \
                         mcif-raw, iforest-raw",
                    )?;
                pipeline::eval_one_class_out(
                    &ctx,
                    args.features.as_deref().context("--features required")?,
                    args.categories.as_deref().context("--categories required")?,
                    detector,
                )
            } else {
                bail!("eval needs --representative or --one-class-out");
            }
        }
        Command::Baseline(args) => {
            pipeline::baseline(&ctx, &args.latents, &args.split, args.mcif.as_deref())
        }
        Command::Realtime(args) => pipeline::run_realtime(
            &ctx,
            &args.model,
            &args.mcif,
            &args.data,
            args.split.as_deref(),
        ),
        Command::Sweep(args) => pipeline::sweep(&ctx, &args.data, &args.dims, args.seeds),
    }
}

fn stage_name(command: &Command) -> &'static str {
    match command {
        Command::Simulate(_) => "simulate",
        Command::Train(_) => "train",
        Command::Encode(_) => "encode",
        Command::Fit(_) => "fit",
        Command::Score(_) => "score",
        Command::Rank(_) => "rank",
        Command::Eval(_) => "eval",
        Command::Baseline(_) => "baseline",
        Command::Realtime(_) => "realtime",
        Command::Sweep(_) => "sweep",
    }
}

/// Entry point used by the binary: returns the exit code.
pub fn main_with(cli: Cli) -> i32 {
    let stage = stage_name(&cli.command);
    match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: stage {stage} failed: {err:#}");
            1
        }
    }
}
