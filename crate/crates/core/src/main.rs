use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use bdris::harness::{self, ExperimentConfig};
use bdris::{Error, Result};

#[derive(Parser)]
#[command(name = "bdris", version, about = "Beyond-diagonal RIS channel models and optimizers")]
struct Cli {
    /// Worker threads for Monte-Carlo trials.
    #[arg(long, global = true, env = "BDRIS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a config file. Any key can be
    /// overridden with a trailing `--key value` pair.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Fit band-connected susceptances to random fully connected ones and
    /// report the channel mismatch.
    ValidateProp2 {
        #[arg(long, default_value_t = 2)]
        n_t: usize,
        #[arg(long, default_value_t = 2)]
        n_r: usize,
        #[arg(long, default_value_t = 8)]
        n_i: usize,
        /// Bandwidth; defaults to the optimal one.
        #[arg(long)]
        q: Option<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected --key, got '{flag}'")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Error::Config(format!("missing value for --{key}")))?;
                (key.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn io::Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn main_inner(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.cmd {
        Cmd::Run { config, overrides } => {
            let text = fs::read_to_string(&config)?;
            let cfg = ExperimentConfig::from_text(&text, &parse_overrides(&overrides)?)?;
            let rows = harness::run(&cfg)?;
            harness::write_csv(&rows, output(cfg.output.as_ref())?)?;
            Ok(true)
        }
        Cmd::ValidateProp2 {
            n_t,
            n_r,
            n_i,
            q,
            trials,
            seed,
            output: path,
        } => {
            let rows = harness::validate_prop2(n_t, n_r, n_i, q, trials, seed)?;
            harness::write_prop2_csv(&rows, output(path.as_ref())?)?;
            Ok(true)
        }
        Cmd::Selftest => {
            let checks = harness::selftest()?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
