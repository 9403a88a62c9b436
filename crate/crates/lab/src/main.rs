use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bowlnet::checkpoint::Checkpoint;
use bowlnet::config::ExperimentConfig;
use bowlnet::dataset::{generate, Dataset, Split};
use bowlnet::evaluate::{evaluate, Method};
use bowlnet::report::{build_table, metrics_to_csv, read_metrics};
use bowlnet::train::{fit, render_log, AnyTask, TrainSettings};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bowlnet", version, about = "Learn to extrapolate a ball rolling in a bowl from rendered frames")]
struct Cli {
    /// Run every parallel section on one thread with fixed reduction order.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, render and write a dataset with train/val/test splits.
    Generate {
        /// Preset name (desk, full, smoke) or JSON file.
        #[arg(long, default_value = "desk")]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and keep the best-validation checkpoint.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// physnet, physnet++, probnet, probnet++, interpnet, state-mlp, state-mlp++.
        #[arg(long)]
        variant: String,
        /// Overrides the training hyperparameters stored with the dataset.
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Training horizon T (defaults to the configured train_horizon).
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint or a baseline on the test split.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, conflicts_with = "variant")]
        checkpoint: Option<PathBuf>,
        /// Baseline instead of a checkpoint: linear, quadratic, oracle.
        #[arg(long)]
        variant: Option<String>,
        /// Prediction horizon (defaults to the configured eval_horizon).
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine metrics files into a method-by-case table.
    Report {
        /// metrics.csv files written by `evaluate`.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run_train(
    dataset: &Path,
    variant: &str,
    config: Option<&str>,
    seed: Option<u64>,
    horizon: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut data = Dataset::load(dataset)?;
    if let Some(spec) = config {
        let c = ExperimentConfig::load(spec)?;
        let d = &mut data.manifest.config;
        d.batch_size = c.batch_size;
        d.learning_rate = c.learning_rate;
        d.lr_factor = c.lr_factor;
        d.lr_patience = c.lr_patience;
        d.stop_patience = c.stop_patience;
        d.max_epochs = c.max_epochs;
        d.augment = c.augment;
        d.network = c.network;
        d.state_mlp_hidden = c.state_mlp_hidden;
        d.state_mlp_learning_rate = c.state_mlp_learning_rate;
        d.validate()?;
    }
    let config = data.config().clone();
    let horizon = horizon.unwrap_or(config.train_horizon);
    let task = AnyTask::new(&data, variant, horizon)?;
    let mut settings = TrainSettings::from_config(&config, task.learning_rate(&config));
    if let Some(s) = seed {
        settings.seed = s;
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let log_path = out.join("training_log.csv");
    let outcome = fit(task.as_task(), &settings, "training_log.csv", &mut |r| {
        eprintln!(
            "epoch {:>4}  train {:>12}  val L2 {:>10.4}  lr {:.1e}{}",
            r.epoch,
            r.train_loss.map_or("-".into(), |l| format!("{l:.4}")),
            r.val_l2,
            r.learning_rate,
            if r.lr_dropped { "  (lr dropped)" } else { "" }
        )
    })?;
    write(&log_path, render_log(&outcome.log))?;
    outcome.best.save(&out.join("checkpoint.bin"))?;
    outcome.last.save(&out.join("last.bin"))?;
    if let Some(e) = outcome.failure {
        bail!("{e}; best checkpoint (epoch {}) kept in {}", outcome.best.epoch, out.display());
    }
    eprintln!("best epoch {} written to {}", outcome.best.epoch, out.join("checkpoint.bin").display());
    Ok(())
}

fn run_evaluate(
    dataset: &Path,
    checkpoint: Option<&Path>,
    variant: Option<&str>,
    horizon: Option<usize>,
    out: &Path,
) -> Result<()> {
    let data = Dataset::load(dataset)?;
    let config = data.config();
    let method = match (checkpoint, variant) {
        (Some(path), _) => Method::Model { checkpoint: Checkpoint::load(path)?, source: path.display().to_string() },
        (None, Some(name)) => Method::baseline(name)
            .with_context(|| format!("unknown baseline {name:?}; pass --checkpoint for trained models"))?,
        (None, None) => bail!("pass --checkpoint or --variant"),
    };
    let horizon = horizon.unwrap_or(config.eval_horizon);
    let eval = evaluate(&data, Split::Test, &method, horizon)?;
    let mut horizons = vec![config.train_horizon, horizon];
    horizons.retain(|&h| h <= horizon);
    horizons.dedup();
    let records = horizons.iter().map(|&h| eval.metrics(h)).collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("metrics.csv"), metrics_to_csv(&records))?;
    write(&out.join("curves.csv"), eval.curves_csv()?)?;
    print!("{}", build_table(&records)?.to_text());
    Ok(())
}

fn run_report(metrics: &[PathBuf], out: &Path) -> Result<()> {
    let mut records = Vec::new();
    for path in metrics {
        records.extend(read_metrics(path)?);
    }
    let table = build_table(&records)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("report.csv"), table.to_csv())?;
    write(&out.join("report.txt"), table.to_text())?;
    print!("{}", table.to_text());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.deterministic {
        rayon::ThreadPoolBuilder::new().num_threads(1).build_global().context("configuring thread pool")?;
    }
    match cli.command {
        Command::Generate { config, seed, out } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let manifest = generate(&config, &out)?;
            eprintln!(
                "wrote {} train / {} val / {} test sequences to {}",
                manifest.train.len(),
                manifest.val.len(),
                manifest.test.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train { dataset, variant, config, seed, horizon, out } => {
            run_train(&dataset, &variant, config.as_deref(), seed, horizon, &out)
        }
        Command::Evaluate { dataset, checkpoint, variant, horizon, out } => {
            run_evaluate(&dataset, checkpoint.as_deref(), variant.as_deref(), horizon, &out)
        }
        Command::Report { metrics, out } => run_report(&metrics, &out),
    }
}
