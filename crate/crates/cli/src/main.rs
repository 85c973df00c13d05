#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;
mod recipes;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use config::{Config, ConfigError};
use experiments::Kind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// First-passage exploration experiments under finite time budgets.
#[derive(Parser, Debug)]
#[command(name = "rare-reach", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (flat `key = value` with `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Use a built-in recipe as the configuration.
    #[arg(long, global = true, conflicts_with = "config")]
    recipe: Option<String>,

    /// Master seed; falls back to the config's `seed`, then RARE_REACH_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (wall-clock only, results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cramér root, drift at the root and optimal particle counts.
    CumulantReport,
    /// Ratio of N-particle to single-particle passage probabilities.
    ParallelSweep,
    /// Restarted passage success probability across budgets.
    RestartRun,
    /// Restart gain against the single-start benchmark.
    RestartGain,
    /// Fleming-Viot distance to the exact quasi-stationary law.
    FvConverge,
    /// M/M/1 time-average estimator and its variance link.
    #[command(name = "mm1-appendix1")]
    Mm1Appendix1,
    /// M/M/1/K stationary probability estimators.
    #[command(name = "mm1k-appendix3")]
    Mm1kAppendix3,
    /// List built-in recipes, or print one.
    Recipes {
        /// Print this recipe's configuration.
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Module(#[from] rare_reach::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

fn kind_of(c: &Command) -> Option<Kind> {
    Some(match c {
        Command::CumulantReport => Kind::CumulantReport,
        Command::ParallelSweep => Kind::ParallelSweep,
        Command::RestartRun => Kind::RestartRun,
        Command::RestartGain => Kind::RestartGain,
        Command::FvConverge => Kind::FvConverge,
        Command::Mm1Appendix1 => Kind::Mm1Appendix1,
        Command::Mm1kAppendix3 => Kind::Mm1kAppendix3,
        Command::Recipes { .. } => return None,
    })
}

fn load_config(cli: &Cli, kind: Kind) -> Result<Config, RunError> {
    let text = match (&cli.config, &cli.recipe) {
        (Some(path), _) => fs::read_to_string(path)?,
        (None, Some(name)) => {
            let r = recipes::find(name).ok_or_else(|| {
                ConfigError::Other(format!("unknown recipe `{name}`; known: {}", recipes::list().join(", ")))
            })?;
            if r.kind != kind {
                return Err(ConfigError::Other(format!(
                    "recipe `{name}` is for `{}`, not `{}`",
                    r.kind.name(),
                    kind.name()
                ))
                .into());
            }
            r.config.to_string()
        }
        (None, None) => String::new(),
    };
    Ok(Config::parse(&text)?)
}

fn resolve_seed(cli: &Cli, c: &mut Config) -> Result<u64, RunError> {
    if let Some(s) = cli.seed {
        c.set("seed", s);
    } else if !c.has("seed") {
        if let Ok(v) = std::env::var("RARE_REACH_SEED") {
            let s: u64 = v
                .trim()
                .parse()
                .map_err(|e| ConfigError::invalid("RARE_REACH_SEED", e))?;
            c.set("seed", s);
        }
    }
    Ok(c.get("seed", 0u64)?)
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text)?;
    Ok(())
}

fn run(cli: &Cli, kind: Kind) -> Result<(), RunError> {
    let started = Instant::now();
    let mut c = load_config(cli, kind)?;
    let seed = resolve_seed(cli, &mut c)?;
    let plan = experiments::plan(kind, &c, seed)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| ConfigError::invalid("workers", e))?;
    let tables = pool.install(|| plan.run())?;

    fs::create_dir_all(&cli.out)?;
    let mut outputs = Vec::new();
    for t in &tables {
        let (ext, body) = match cli.format {
            Format::Csv => ("csv", t.to_csv()),
            Format::Json => ("json", t.to_json()),
        };
        let name = format!("{}.{ext}", t.name);
        write(&cli.out.join(&name), &body)?;
        outputs.push(name);
    }
    write(&cli.out.join("resolved.conf"), &c.render_resolved())?;
    let manifest = json!({
        "tool": "rare-reach",
        "version": env!("CARGO_PKG_VERSION"),
        "kind": kind.name(),
        "seed": seed,
        "workers": pool.current_num_threads(),
        "format": match cli.format { Format::Csv => "csv", Format::Json => "json" },
        "recipe": cli.recipe,
        "config": c.resolved(),
        "configFile": "resolved.conf",
        "outputs": outputs,
        "wallClockSeconds": started.elapsed().as_secs_f64(),
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&cli.out.join("manifest.json"), &text)?;
    for o in &outputs {
        println!("{}", cli.out.join(o).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Recipes { show } = &cli.command {
        match show {
            Some(name) => match recipes::find(name) {
                Some(r) => print!("{}", r.config),
                None => {
                    eprintln!("unknown recipe `{name}`; known: {}", recipes::list().join(", "));
                    return ExitCode::from(2);
                }
            },
            None => {
                for r in recipes::RECIPES {
                    println!("{:<10} {:<15} {:>4}s  {}", r.name, r.kind.name(), r.budget_secs, r.description);
                }
            }
        }
        return ExitCode::SUCCESS;
    }
    let kind = kind_of(&cli.command).expect("experiment subcommand");
    match run(&cli, kind) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                RunError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
