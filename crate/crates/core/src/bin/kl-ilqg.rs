use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kl_ilqg::harness::{
    dump_models, lqr_check, run_session, run_sweep, write_curve_csv, write_json, write_session_csv,
    write_sweep_csv, SessionConfig, SweepConfig,
};
use kl_ilqg::Result;

#[derive(Parser)]
#[command(name = "kl-ilqg", version, about = "KL-constrained iLQG on a simulated 7-joint arm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config file; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config (the seed list for `sweep`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Single learning session.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write the samples and local models around the final policy.
        #[arg(long, requires = "out")]
        dump_models: bool,
    },
    /// Parameter grid, several seeds per cell.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Backward pass against the Riccati recursion on random LQ problems.
    LqrCheck {
        #[arg(long, default_value_t = 20)]
        fixtures: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

fn sink(dir: Option<&Path>, name: &str) -> Result<Box<dyn Write>> {
    Ok(match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            Box::new(BufWriter::new(File::create(d.join(name))?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, dump_models: dump } => {
            let mut config = match &common.config {
                Some(p) => SessionConfig::load(p)?,
                None => SessionConfig::default(),
            };
            if let Some(s) = common.seed {
                config.seed = s;
            }
            let result = run_session(&config)?;
            let out = common.out.as_deref();
            match common.format {
                Format::Csv => {
                    write_session_csv(&result, sink(out, "session.csv")?)?;
                    if out.is_some() {
                        write_curve_csv(&result, sink(out, "curve.csv")?)?;
                    }
                }
                Format::Json => write_json(&result, sink(out, "session.json")?)?,
            }
            if dump {
                write_json(&dump_models(&config, &result.policy)?, sink(out, "models.json")?)?;
            }
            if let Some(reason) = &result.aborted {
                eprintln!("session aborted: {reason}");
            }
            Ok(true)
        }
        Command::Sweep { common } => {
            let mut config = match &common.config {
                Some(p) => SweepConfig::load(p)?,
                None => SweepConfig::default(),
            };
            if let Some(s) = common.seed {
                config.seeds = vec![s];
            }
            let cells = run_sweep(&config)?;
            let out = common.out.as_deref();
            match common.format {
                Format::Csv => write_sweep_csv(&cells, sink(out, "sweep.csv")?)?,
                Format::Json => write_json(&cells, sink(out, "sweep.json")?)?,
            }
            Ok(true)
        }
        Command::LqrCheck {
            fixtures,
            seed,
            tolerance,
        } => {
            let check = lqr_check(fixtures, seed)?;
            let ok = check.passed(tolerance);
            println!(
                "{} fixtures: max gain rel error {:.3e}, max offset rel error {:.3e}: {}",
                check.fixtures,
                check.max_gain_rel_error,
                check.max_offset_rel_error,
                if ok { "ok" } else { "FAILED" }
            );
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            if let kl_ilqg::Error::Config(list) = &e {
                for p in list {
                    eprintln!("  - {p}");
                }
            }
            ExitCode::from(2)
        }
    }
}
