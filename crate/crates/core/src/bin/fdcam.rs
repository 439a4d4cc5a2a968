use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fdcam::cli::{self, Metric};
use fdcam::config::{ConfigOverrides, MethodName, RunConfig};
use fdcam::shapes::ShapesDatasetSpec;
use fdcam::train::TrainConfig;
use fdcam::{CombineScheme, ScoreMode};

#[derive(Parser)]
#[command(name = "fdcam", version, about = "Explain CNN predictions with combined gradient and channel-switching CAMs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `tiny:<seed>` or a checkpoint path.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    layer: Option<String>,
    #[arg(long, global = true)]
    method: Option<MethodName>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    bias: Option<f64>,
    #[arg(long, global = true)]
    scheme: Option<CombineScheme>,
    #[arg(long = "score-mode", global = true)]
    score_mode: Option<ScoreMode>,
    #[arg(long, global = true)]
    step: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Saliency PNG, JSON sidecar and overlay for one image.
    Explain {
        image: PathBuf,
        #[arg(long)]
        class: Option<usize>,
    },
    /// Channel similarity groups as JSON plus contact sheets.
    Groups {
        image: PathBuf,
        /// Comma-separated channel indices (default: all).
        #[arg(long, value_delimiter = ',')]
        channels: Vec<usize>,
    },
    /// Deletion/insertion AUC or pointing-game accuracy over a dataset.
    Evaluate {
        dataset: PathBuf,
        #[arg(long, default_value = "faithfulness")]
        metric: Metric,
    },
    /// Generate the synthetic shapes dataset.
    MakeShapes {
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
    /// Train the tiny CNN on generated shapes; fails below 95% val accuracy.
    TrainTiny {
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
    },
}

fn run(cli: Cli) -> fdcam::Result<()> {
    let c = cli.common;
    let flags = ConfigOverrides {
        model: c.model,
        layer: c.layer,
        score_mode: c.score_mode,
        method: c.method,
        theta: c.theta,
        bias: c.bias,
        scheme: c.scheme,
        step: c.step,
        out: c.out,
        seed: c.seed,
    };
    let cfg = RunConfig::resolve(c.config.as_deref(), &flags)?;
    match cli.command {
        Command::Explain { image, class } => {
            let o = cli::explain(&cfg, &image, class)?;
            println!("{}\n{}\n{}", o.saliency_png.display(), o.sidecar.display(), o.overlay.display());
        }
        Command::Groups { image, channels } => {
            let o = cli::groups(&cfg, &image, &channels)?;
            println!("{}", o.json.display());
        }
        Command::Evaluate { dataset, metric } => {
            let o = cli::evaluate(&cfg, &dataset, metric)?;
            match &o.report {
                cli::EvaluationReport::Faithfulness(r) => println!(
                    "insertion {:.4}  deletion {:.4}  overall {:.4}  ({} images)",
                    r.mean_insertion_auc,
                    r.mean_deletion_auc,
                    r.overall,
                    r.images.len()
                ),
                cli::EvaluationReport::Pointing(r) => {
                    println!("pointing accuracy {:.4} ({} hits / {} misses)", r.accuracy, r.tally.hits, r.tally.misses)
                }
            }
            println!("{}", o.json.display());
        }
        Command::MakeShapes { per_class, size } => {
            let spec = ShapesDatasetSpec { image_size: size, samples_per_class: per_class, seed: cfg.seed, ..Default::default() };
            println!("{}", cli::make_shapes(&spec, &cfg.out)?.display());
        }
        Command::TrainTiny { per_class, epochs } => {
            let spec = ShapesDatasetSpec { samples_per_class: per_class, seed: cfg.seed, ..Default::default() };
            let train = TrainConfig { seed: cfg.seed, epochs, ..Default::default() };
            let o = cli::train_tiny(&spec, &train, &cfg.out)?;
            println!("val accuracy {:.4}\n{}", o.report.val_accuracy, o.checkpoint.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fdcam: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
