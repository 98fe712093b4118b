use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clickstorm::harness::{self, RunConfig};
use clickstorm::metrics::CorrelationAxis;
use clickstorm::Error;
use log::{error, info, warn};

/// Robustness evaluation for click-based interactive segmentation.
#[derive(Parser)]
#[command(name = "clickstorm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run baseline and adversarial trajectories over a dataset.
    Evaluate(RunArgs),
    /// Exhaustive first-click IoU/BIoU heatmaps for one image.
    Bruteforce {
        #[command(flatten)]
        run: RunArgs,
        /// Image id from the manifest.
        #[arg(long)]
        image: String,
        /// Grid stride in pixels; picked from the image size if omitted.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Per-image spread of recorded user clicks.
    Spread {
        #[command(flatten)]
        run: RunArgs,
        /// CSV with columns image_id,x,y,polarity.
        clicks_csv: PathBuf,
    },
    /// Spearman correlation matrices over report CSVs.
    Correlate {
        #[arg(long, value_enum, default_value = "cross-metric")]
        axis: Axis,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Write a seeded synthetic dataset.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synthetic")]
        name: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    CrossMetric,
    CrossDataset,
}

/// Config file plus per-field overrides.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    segmenter: Option<String>,
    /// Clicks per trajectory.
    #[arg(long)]
    clicks: Option<usize>,
    /// Optimizer iterations per click.
    #[arg(long)]
    iters: Option<usize>,
    /// Worker threads (falls back to CLICKSTORM_WORKERS, then 1).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.dataset {
            cfg.dataset = v;
        }
        if let Some(v) = self.segmenter {
            cfg.segmenter = v;
        }
        if let Some(v) = self.clicks {
            cfg.attack.clicks = v;
        }
        if let Some(v) = self.iters {
            cfg.attack.iterations = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.out {
            cfg.out = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const PARTIAL: u8 = 1;

fn run(command: Command) -> Result<u8, Error> {
    match command {
        Command::Evaluate(args) => {
            let cfg = args.resolve()?;
            let out = harness::evaluate(&cfg)?;
            for (id, msg) in &out.failures {
                warn!("{id}: {msg}");
            }
            if let Some(report) = &out.report {
                for (metric, row) in &report.summary {
                    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
                    println!(
                        "{} base {} min {} max {} d {}",
                        metric.as_str(),
                        fmt(row.base),
                        fmt(row.min),
                        fmt(row.max),
                        fmt(row.d)
                    );
                }
            }
            println!(
                "{} images evaluated, {} failed; results in {}",
                out.report.as_ref().map_or(0, |r| r.images.len()),
                out.failures.len(),
                out.out.display()
            );
            Ok(if out.failures.is_empty() { 0 } else { PARTIAL })
        }
        Command::Bruteforce { run, image, stride } => {
            let cfg = run.resolve()?;
            let out = harness::bruteforce(&cfg, &image, stride)?;
            for f in &out.files {
                println!("{}", f.display());
            }
            let failed = out.grid.failures.len();
            if failed > 0 {
                warn!("{failed} grid cells failed");
            }
            Ok(if failed == 0 { 0 } else { PARTIAL })
        }
        Command::Spread { run, clicks_csv } => {
            let cfg = run.resolve()?;
            let rows = harness::spread(&cfg, &clicks_csv)?;
            for r in &rows {
                println!(
                    "{} clicks {} iou spread {:.4} biou spread {:.4}",
                    r.image_id, r.clicks, r.iou_spread, r.biou_spread
                );
            }
            Ok(0)
        }
        Command::Correlate { axis, out, reports } => {
            let axis = match axis {
                Axis::CrossMetric => CorrelationAxis::CrossMetric,
                Axis::CrossDataset => CorrelationAxis::CrossDataset,
            };
            let matrices = harness::correlate(&reports, axis, &out)?;
            info!("wrote {} matrices to {}", matrices.len(), out.display());
            Ok(0)
        }
        Command::GenSynthetic {
            out,
            count,
            size,
            seed,
            name,
        } => {
            let manifest = harness::gen_synthetic(&out, &name, count, size, seed)?;
            println!("{}", manifest.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e}");
            ExitCode::from(if e.is_setup_error() { 2 } else { PARTIAL })
        }
    }
}
