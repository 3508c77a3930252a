use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfh_pon::config::{load_config_with, ConfigError, RunConfig};
use mfh_pon::harness::{self, HarnessError};

/// TWDM-PON upstream simulator for mobile fronthaul DWBA schemes.
#[derive(Parser)]
#[command(name = "mfh-pon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all replications of one configuration.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Results CSV; the resolved config goes next to it as .json.
        /// Without it the CSV is printed to stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the b_factor x scheme grid from the [sweep] section.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Comma-separated override of sweep.b_factors.
        #[arg(long)]
        b_factors: Option<String>,
        /// Comma-separated override of sweep.schemes.
        #[arg(long)]
        schemes: Option<String>,
    },
    /// Check a configuration and print it fully resolved as JSON.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run one replication and write every dispatched event to a text file.
    Trace {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        replication: u32,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// INI config overlaid on the shipped preset, or a resolved .json sidecar.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    /// 18h, 24h or custom.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    b_factor: Option<String>,
    /// Simulated seconds per replication.
    #[arg(long)]
    duration: Option<String>,
    /// Seconds excluded from delay statistics.
    #[arg(long)]
    warmup: Option<String>,
    #[arg(long)]
    replications: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    prediction_error: Option<String>,
    /// fixed, limited or gated.
    #[arg(long)]
    sizing: Option<String>,
    /// 60 s x 10 replications instead of the desk-scale defaults.
    #[arg(long)]
    full_scale: bool,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        [
            ("run.scheme", &self.scheme),
            ("run.scenario", &self.scenario),
            ("run.b_factor", &self.b_factor),
            ("run.sim_duration_s", &self.duration),
            ("run.warmup_s", &self.warmup),
            ("run.replications", &self.replications),
            ("run.base_seed", &self.seed),
            ("run.prediction_error", &self.prediction_error),
            ("run.sizing", &self.sizing),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect()
    }

    fn load(&self, extra: Vec<(String, String)>) -> Result<RunConfig, ConfigError> {
        let mut overrides = self.overrides();
        overrides.extend(extra);
        let mut cfg = match &self.config {
            Some(path) => load_config_with(path, &overrides)?,
            None => RunConfig::from_ini_with_overrides("", &overrides)?,
        };
        if self.full_scale {
            cfg.full_scale();
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

fn write_rows(cfg: &RunConfig, rows: &[harness::SummaryRow], out: Option<&Path>) -> Result<(), HarnessError> {
    match out {
        Some(path) => {
            let side = harness::write_outputs(cfg, rows, path)?;
            eprintln!("wrote {} and {}", path.display(), side.display());
            Ok(())
        }
        None => harness::write_csv(io::stdout().lock(), rows),
    }
}

fn execute(cmd: Command) -> Result<ExitCode, HarnessError> {
    match cmd {
        Command::Run { cfg, out } => {
            let cfg = cfg.load(Vec::new())?;
            let result = harness::run_scenario(&cfg)?;
            write_rows(&cfg, &result.rows, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            cfg,
            out,
            b_factors,
            schemes,
        } => {
            let mut extra = Vec::new();
            if let Some(b) = b_factors {
                extra.push(("sweep.b_factors".to_string(), b));
            }
            if let Some(s) = schemes {
                extra.push(("sweep.schemes".to_string(), s));
            }
            let cfg = cfg.load(extra)?;
            let cells = harness::sweep(&cfg);
            for c in &cells {
                if let Err(e) = &c.outcome {
                    eprintln!("cell {} b={:.2} failed: {e}", c.scheme, c.b_factor);
                }
            }
            write_rows(&cfg, &harness::sweep_rows(&cfg, &cells), out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { cfg } => {
            let cfg = cfg.load(Vec::new())?;
            println!("{}", cfg.to_json()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace { cfg, out, replication } => {
            let cfg = cfg.load(Vec::new())?;
            let file = File::create(&out).map_err(|source| HarnessError::Io {
                path: out.clone(),
                source,
            })?;
            let sink: Box<dyn Write + Send> = Box::new(BufWriter::new(file));
            let run = harness::run_replication(&cfg, replication, Some(sink))?;
            eprintln!("{} events written to {}", run.events, out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
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
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
