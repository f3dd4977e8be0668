use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scenegan::dataset::{make_mini_dataset, MiniConfig};
use scenegan::pipeline::{report, run_pipeline, PipelineConfig, Stage};
use scenegan::Error;

#[derive(Parser)]
#[command(name = "scenegan", version, about = "Acoustic scene classification pipeline")]
struct Cli {
    /// Pipeline config (flat `key = value`); built-in defaults without it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the synthetic mini dataset (into --out, or the pipeline's data directory).
    Mkdata,
    /// Feature caches for every configured system.
    Extract,
    /// GAN augmentation rounds for augmented systems.
    Augment,
    /// Train every system over the configured seeds.
    Train,
    /// Seed-averaged evaluation-fold predictions.
    Predict,
    /// Ensemble fusion of the member predictions.
    Fuse,
    /// Run the pipeline through evaluation and print the table.
    Eval,
    /// Print the accuracy table of a results directory.
    Report { dir: Option<PathBuf> },
}

fn config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::from_text("")?,
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_override("seed", &s.to_string())?;
    }
    if let Some(o) = &cli.out {
        cfg = cfg.with_override("out", &o.display().to_string())?;
    }
    if let Some(j) = cli.jobs {
        cfg = cfg.with_override("jobs", &j.to_string())?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let stage = match &cli.cmd {
        Cmd::Report { dir } => {
            let dir = match dir {
                Some(d) => d.clone(),
                None => config(cli)?.out,
            };
            print!("{}", report(&dir)?);
            return Ok(());
        }
        Cmd::Mkdata if cli.config.is_none() => {
            // stand-alone dataset, outside any pipeline
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("mini"));
            let m = make_mini_dataset(&out, &MiniConfig { seed: cli.seed.unwrap_or(0), ..MiniConfig::default() })?;
            println!("{} clips under {}", m.clips.len(), out.display());
            return Ok(());
        }
        Cmd::Mkdata => Stage::Mkdata,
        Cmd::Extract => Stage::Extract,
        Cmd::Augment => Stage::Augment,
        Cmd::Train => Stage::Train,
        Cmd::Predict => Stage::Predict,
        Cmd::Fuse => Stage::Fuse,
        Cmd::Eval => Stage::Eval,
    };
    let cfg = config(cli)?;
    for r in run_pipeline(&cfg, stage)? {
        println!("{:<48} {} {}", r.label, r.hash, if r.skipped { "skipped" } else { "done" });
    }
    if stage == Stage::Eval {
        print!("{}", report(&cfg.out)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
