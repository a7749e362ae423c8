use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wheelleg_core::sim::{bench, run_scenario, ScenarioConfig, SimError};

/// Output directory when neither `--out` nor this variable is given: `./out/<scenario>`.
const OUT_ENV: &str = "WHEELLEG_OUT";
const VERBOSE_ENV: &str = "WHEELLEG_VERBOSE";

#[derive(Parser, Debug)]
#[command(name = "wheelleg", version, about = "Run wheel-legged whole-body control scenarios")]
struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print progress and the effective configuration.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario and write trajectory.csv and metrics.json.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a configuration entry, e.g. `--set terrain.peak=0.1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Compare warm-started and cold receding-horizon solves.
    Bench {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Number of receding-horizon solves to compare.
        #[arg(long, default_value_t = 100)]
        solves: usize,
        /// Also write the per-step table as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<SimError>() {
                Some(SimError::Config(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn load(path: &Path, set: &[String], seed: Option<u64>) -> anyhow::Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut overrides = set.to_vec();
    if let Some(s) = seed {
        overrides.push(format!("seed={s}"));
    }
    Ok(ScenarioConfig::from_toml_with_overrides(&text, &overrides)?)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let verbose = cli.verbose || std::env::var_os(VERBOSE_ENV).is_some_and(|v| !v.is_empty() && v != "0");
    match cli.command {
        Command::Run { config, out, set } => {
            let cfg = load(&config, &set, cli.seed)?;
            if verbose {
                eprintln!("{}", cfg.to_toml_string());
            }
            let out = out
                .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| Path::new("out").join(&cfg.name));
            let started = Instant::now();
            let (log, report) = run_scenario(&cfg)?;
            if verbose {
                eprintln!("simulated {} steps in {:.2} s", log.rows.len(), started.elapsed().as_secs_f64());
            }
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let csv = out.join("trajectory.csv");
            let mut w = BufWriter::new(fs::File::create(&csv).with_context(|| format!("creating {}", csv.display()))?);
            log.write_csv(&mut w)?;
            w.flush()?;
            fs::write(out.join("metrics.json"), report.to_json())?;
            print!("{}", report.table());
            if verbose {
                eprintln!("wrote {}", out.display());
            }
        }
        Command::Bench { config, set, solves, out } => {
            let cfg = load(&config, &set, cli.seed)?;
            let report = bench(&cfg, solves)?;
            print!("{}", report.table());
            if let Some(path) = out {
                fs::write(&path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}
