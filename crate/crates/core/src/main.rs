use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use ucl::commands::{self, Grid, RunDir};
use ucl::config::RunConfig;
use ucl::{Error, Result};

/// Contrastive pretraining, linear probing and ROC evaluation for
/// real/fake face classification.
#[derive(Parser)]
#[command(name = "ucl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: desk or paper.
    #[arg(long)]
    preset: Option<String>,
    /// Run directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
    /// Dataset root; defaults to `<out>/data`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the configured synthetic domains.
    GenData(Common),
    /// Contrastive pretraining of encoder and projection head.
    Pretrain(Common),
    /// Train the classifier on frozen features.
    Probe {
        #[command(flatten)]
        common: Common,
        /// Encoder checkpoint; defaults to `<out>/pretrain/encoder.ckpt`.
        #[arg(long)]
        encoder: Option<PathBuf>,
    },
    /// AUC, accuracy and ROC curves on each test domain.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Probe checkpoint; defaults to `<out>/probe/probe.ckpt`.
        #[arg(long)]
        probe: Option<PathBuf>,
    },
    /// Comparative table over an ablation grid.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// augmentation-rows, feature-source or denominator.
        #[arg(long)]
        grid: String,
        /// Comma-separated seeds; overrides `ablate.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Comma-separated cell labels to run; all cells by default.
        #[arg(long, value_delimiter = ',')]
        cells: Vec<String>,
    },
    /// Plot ROC CSV files as one SVG.
    Roc {
        /// ROC CSV files; defaults to `<out>/eval/*_roc.csv`.
        #[arg(long = "input", num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Output SVG; defaults to `<out>/eval/roc.svg`.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value = "ROC")]
        title: String,
    },
    /// Print the resolved configuration.
    ShowConfig(Common),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Checkpoint { .. }
        | Error::Manifest { .. }
        | Error::Image { .. } => 2,
        _ => 1,
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut config = match (&common.config, &common.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => {
            return Err(Error::config(
                "config",
                "pass --config <path> or --preset desk|paper",
            ))
        }
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn data_root(common: &Common, run: &RunDir) -> PathBuf {
    common.data.clone().unwrap_or_else(|| run.data())
}

fn prepare(common: &Common) -> Result<(RunConfig, RunDir)> {
    let config = resolve(common)?;
    let run = RunDir::new(&common.out);
    commands::persist_config(&run, &config)?;
    Ok((config, run))
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    match cli.command {
        Command::GenData(common) => {
            let (config, run) = prepare(&common)?;
            for d in commands::gen_data(&config, &data_root(&common, &run), common.force)? {
                println!(
                    "{}  {} samples  sha256 {}  {}",
                    d.name,
                    d.samples,
                    d.checksum,
                    show(&d.dir)
                );
            }
        }
        Command::Pretrain(common) => {
            let (config, run) = prepare(&common)?;
            let out = run.encoder();
            let report =
                commands::cmd_pretrain(&config, &data_root(&common, &run), &out, common.force)?;
            let losses = report.losses();
            println!(
                "pretrained {} epochs, loss {:.4} -> {:.4}, {:.1}s, config {}  {}",
                losses.len(),
                losses.first().copied().unwrap_or(f64::NAN),
                losses.last().copied().unwrap_or(f64::NAN),
                report.wall_clock_secs,
                report.config_hash,
                show(&out)
            );
        }
        Command::Probe { common, encoder } => {
            let (config, run) = prepare(&common)?;
            let encoder = encoder.unwrap_or_else(|| run.encoder());
            let out = run.probe();
            let report = commands::cmd_probe(
                &config,
                &encoder,
                &data_root(&common, &run),
                &out,
                common.force,
            )?;
            println!(
                "probe trained, train accuracy {:.4}, {:.1}s, config {}  {}",
                report.train_accuracy.unwrap_or(f64::NAN),
                report.wall_clock_secs,
                report.config_hash,
                show(&out)
            );
        }
        Command::Eval {
            common,
            encoder,
            probe,
        } => {
            let (config, run) = prepare(&common)?;
            let encoder = encoder.unwrap_or_else(|| run.encoder());
            let probe = probe.unwrap_or_else(|| run.probe());
            let reports = commands::cmd_eval(
                &config,
                &encoder,
                &probe,
                &data_root(&common, &run),
                &run.eval(),
            )?;
            println!(
                "{:<12} {:<12} {:>8} {:>9}",
                "train", "test", "AUC", "accuracy"
            );
            for r in reports {
                println!(
                    "{:<12} {:<12} {:>8.4} {:>9.4}",
                    r.train_domain, r.test_domain, r.auc, r.accuracy
                );
            }
        }
        Command::Ablate {
            common,
            grid,
            seeds,
            cells,
        } => {
            let grid = Grid::parse(&grid)?;
            let (mut config, run) = prepare(&common)?;
            if !seeds.is_empty() {
                config.ablate.seeds = seeds;
            }
            let table = commands::cmd_ablate(
                &config,
                grid,
                &cells,
                &data_root(&common, &run),
                &run.ablate(),
            )?;
            print!("{}", table.to_text());
        }
        Command::Roc {
            inputs,
            out,
            svg,
            title,
        } => {
            let run = RunDir::new(out);
            let inputs = if inputs.is_empty() {
                let dir = run.eval();
                let mut found: Vec<PathBuf> = std::fs::read_dir(&dir)
                    .map_err(|e| Error::io(&dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.to_string_lossy().ends_with("_roc.csv"))
                    .collect();
                found.sort();
                found
            } else {
                inputs
            };
            let svg = svg.unwrap_or_else(|| run.eval().join("roc.svg"));
            commands::cmd_roc(&inputs, &svg, &title)?;
            println!("{}", show(&svg));
        }
        Command::ShowConfig(common) => {
            println!("{}", resolve(&common)?.to_json());
            return Ok(());
        }
    }
    eprintln!("done in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
