//! `dynrisk` command-line front end.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use config::{canonical_key, RawConfig};
use error::{CliError, CliResult};

const USAGE: &str = "\
usage: dynrisk <command> [name] [--config FILE] [--threads N] [--key value ...]

commands:
  merton              closed-form Merton quantities
  risk                risk of the control in control.* at (control.t, control.x)
  solve-continuous    continuous-time solver, writes the value surface
  solve-discrete      discrete-time solver, writes the value surface
  simulate            Monte Carlo check of the solved policy
  efficiency          efficiency sweep over sweep.lambdas
  experiment <name>   named recipe

Keys use dotted names such as risk.alpha. Short forms: --alpha, --benchmark,
--bound, --delta, --gamma, --level, --measure, --out, --paths, --regime,
--seed, --T. The default output directory is $DYNRISK_OUTPUT_DIR or ./out.
";

struct Invocation {
    command: String,
    experiment: Option<String>,
    config_file: Option<PathBuf>,
    threads: Option<usize>,
    overrides: Vec<(&'static str, String)>,
}

fn parse_args(args: &[String]) -> CliResult<Option<Invocation>> {
    let mut it = args.iter();
    let command = match it.next() {
        None => return Err(CliError::Usage(USAGE.trim_end().to_string())),
        Some(c) if c == "--help" || c == "-h" || c == "help" => return Ok(None),
        Some(c) if c == "--version" => {
            println!("dynrisk {}", output::VERSION);
            return Ok(None);
        }
        Some(c) => c.clone(),
    };
    let mut inv = Invocation {
        command,
        experiment: None,
        config_file: None,
        threads: None,
        overrides: Vec::new(),
    };
    while let Some(arg) = it.next() {
        if arg == "--help" || arg == "-h" {
            return Ok(None);
        }
        let Some(flag) = arg.strip_prefix("--") else {
            if inv.command == "experiment" && inv.experiment.is_none() {
                inv.experiment = Some(arg.clone());
                continue;
            }
            return Err(CliError::Usage(format!("unexpected argument '{arg}'")));
        };
        let (name, value) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Config(format!("--{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        match name.as_str() {
            "config" => {
                if inv.config_file.replace(PathBuf::from(value)).is_some() {
                    return Err(CliError::Config("--config given more than once".into()));
                }
            }
            "threads" => {
                let n = value
                    .parse::<usize>()
                    .ok()
                    .filter(|n| *n > 0)
                    .ok_or_else(|| {
                        CliError::Config(format!(
                            "--threads expects a positive integer, got '{value}'"
                        ))
                    })?;
                if inv.threads.replace(n).is_some() {
                    return Err(CliError::Config("--threads given more than once".into()));
                }
            }
            _ => {
                let key = canonical_key(&name)?;
                if inv.overrides.iter().any(|(k, _)| *k == key) {
                    return Err(CliError::Config(format!(
                        "conflicting flags: '{key}' set more than once"
                    )));
                }
                inv.overrides.push((key, value));
            }
        }
    }
    Ok(Some(inv))
}

fn run(args: &[String]) -> CliResult<()> {
    let Some(inv) = parse_args(args)? else {
        print!("{USAGE}");
        return Ok(());
    };
    if let Some(n) = inv.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set thread count: {e}")))?;
    }
    let mut raw = RawConfig::default();
    if let Some(path) = &inv.config_file {
        raw.apply_file(path)?;
    }
    for (k, v) in inv.overrides {
        raw.set(k, v);
    }
    commands::run(&inv.command, inv.experiment.as_deref(), &raw)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dynrisk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
