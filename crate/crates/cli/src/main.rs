mod args;
mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;
use rate_core::error::{ErrorKind, RateError};

use args::{Cli, Command, ReplayArgs};
use commands::{Invocation, Outcome};
use manifest::{sha256_file, Manifest};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "RATE_THREADS";

/// Command-line flag for an internal parameter name.
fn flag_for(name: &str) -> String {
    let flag = match name {
        "n_iter" => "iter",
        "max_steps" => "cascade",
        "n_subpops" => "subpops",
        "freq_range" => "freq-lo/--freq-hi",
        "n_pcs" => "pcs",
        "beta" => "beta-const",
        other => other,
    };
    format!("--{}", flag.replace('_', "-"))
}

fn describe(err: &RateError) -> String {
    match err {
        RateError::InvalidParameter { name, reason } => format!("{}: {reason}", flag_for(name)),
        RateError::Stage { stage, source } => format!("{stage} stage: {}", describe(source)),
        other => other.to_string(),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("cannot configure {n} threads: {e}"))
}

fn run(command: &Command, inv: &Invocation) -> Result<Outcome, RateError> {
    match command {
        Command::Simulate(a) => commands::simulate(a, inv),
        Command::Rate(a) => commands::rate(a, inv),
        Command::Scan(a) => commands::scan(a, inv),
        Command::Power(a) => commands::power(a, inv),
        Command::Replay(a) => replay(a),
    }
}

fn rebase(path: &mut PathBuf, cwd: &Path) {
    if path.is_relative() {
        *path = cwd.join(&*path);
    }
}

/// Drops every `--out-dir` occurrence from a recorded argv.
fn without_out_dir(argv: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == "--out-dir" {
            skip = true;
        } else if !a.starts_with("--out-dir=") {
            out.push(a.clone());
        }
    }
    out
}

fn replay(args: &ReplayArgs) -> Result<Outcome, RateError> {
    let recorded = Manifest::read(&args.manifest)?;
    let cwd = PathBuf::from(&recorded.cwd);
    let mut argv = recorded.argv.clone();
    if let Some(dir) = &args.out_dir {
        let dir = std::path::absolute(dir).unwrap_or_else(|_| dir.clone());
        argv = without_out_dir(&argv);
        argv.push("--out-dir".into());
        argv.push(dir.display().to_string());
    }
    let cli = Cli::try_parse_from(std::iter::once("rate".to_string()).chain(argv.iter().cloned())).map_err(|e| {
        RateError::Parse {
            location: args.manifest.display().to_string(),
            message: format!("recorded arguments do not parse: {}", e.kind()),
        }
    })?;
    let mut command = cli.command;
    match &mut command {
        Command::Simulate(a) => rebase(&mut a.out_dir, &cwd),
        Command::Rate(a) => {
            rebase(&mut a.genotypes, &cwd);
            rebase(&mut a.phenotype, &cwd);
            rebase(&mut a.out_dir, &cwd);
        }
        Command::Scan(a) => {
            rebase(&mut a.genotypes, &cwd);
            rebase(&mut a.phenotype, &cwd);
            rebase(&mut a.out_dir, &cwd);
        }
        Command::Power(a) => rebase(&mut a.out_dir, &cwd),
        Command::Replay(_) => {
            return Err(RateError::Parse {
                location: args.manifest.display().to_string(),
                message: "a manifest cannot record a replay".into(),
            })
        }
    }
    for input in &recorded.inputs {
        let mut path = PathBuf::from(&input.path);
        rebase(&mut path, &cwd);
        let digest = sha256_file(&path)?;
        if digest != input.sha256 {
            return Err(RateError::Parse {
                location: path.display().to_string(),
                message: format!("input changed since the run (sha256 {digest}, recorded {})", input.sha256),
            });
        }
    }
    log::info!("replaying `{}` from {}", recorded.command, args.manifest.display());
    run(&command, &Invocation { argv, cwd: recorded.cwd })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapKind::DisplayHelp | ClapKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    match run(&cli.command, &Invocation::current()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::TooManyFailures { failed, total }) => {
            eprintln!("error: {failed} of {total} replicates failed (more than 10%); outputs cover the rest");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn internal_names_map_to_flags() {
        assert_eq!(flag_for("pc_var"), "--pc-var");
        assert_eq!(flag_for("n_iter"), "--iter");
        assert_eq!(flag_for("max_steps"), "--cascade");
        assert_eq!(flag_for("h2"), "--h2");
    }

    #[test]
    fn stage_errors_keep_the_flag() {
        let e = RateError::param("burn_in", "too large").in_stage("gibbs");
        assert_eq!(describe(&e), "gibbs stage: --burn-in: too large");
    }

    #[test]
    fn out_dir_is_stripped_in_both_spellings() {
        let argv: Vec<String> = ["scan", "--out-dir", "a", "--level", "0.1", "--out-dir=b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(without_out_dir(&argv), ["scan", "--level", "0.1"]);
    }
}
