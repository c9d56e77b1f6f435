use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egsnas::audit::AuditConfig;
use egsnas::commands;
use egsnas::config::{RunConfig, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "egsnas", version, about = "Cell search with ensemble Gumbel-Softmax codes")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config field, e.g. `--set sampling_count=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, env = OUTPUT_DIR_ENV, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Search a cell and export the derived code.
    Search,
    /// Retrain an exported code and report accuracies.
    Evaluate {
        #[arg(long)]
        code: PathBuf,
    },
    /// Random-search baseline.
    Baseline {
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Check the encoding bijection, inclusion marginals and code counts.
    VerifyPropositions {
        #[arg(long, default_value_t = 1)]
        min_ops: usize,
        #[arg(long, default_value_t = 6)]
        max_ops: usize,
        #[arg(long, default_value_t = 1)]
        min_m: usize,
        #[arg(long, default_value_t = 4)]
        max_m: usize,
        #[arg(long, default_value_t = 20_000)]
        draws: usize,
    },
    /// Write the configured dataset with its split assignment as CSV.
    DumpDataset {
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(global: &Global) -> egsnas::Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &global.output_dir {
        cfg.output_dir = dir.clone();
    }
    for assignment in &global.set {
        cfg.apply_override(assignment)?;
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> egsnas::Result<ExitCode> {
    let mut cfg = resolve(&cli.global)?;
    match cli.command {
        Command::Search => {
            let summary = commands::cmd_search(&cfg)?;
            println!("derived {}", summary.code().render());
            println!("wrote {}", summary.output_dir.display());
        }
        Command::Evaluate { code } => {
            print!("{}", commands::cmd_evaluate(&code, &cfg)?.to_json()?);
        }
        Command::Baseline { budget } => {
            if let Some(b) = budget {
                cfg.budget = b;
            }
            print!("{}", commands::cmd_baseline(&cfg, cfg.budget)?.to_json()?);
        }
        Command::VerifyPropositions {
            min_ops,
            max_ops,
            min_m,
            max_m,
            draws,
        } => {
            let audit = AuditConfig {
                ops: min_ops..=max_ops,
                sampling_counts: min_m..=max_m,
                draws,
                seed: cfg.seed,
                ..AuditConfig::default()
            };
            let report = commands::cmd_verify_propositions(&audit)?;
            print!("{report}");
            if !report.passed() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::DumpDataset { out } => {
            commands::cmd_dump_dataset(&cfg, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
