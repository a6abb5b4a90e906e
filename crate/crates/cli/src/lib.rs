//! Command-line front end for `ddpca-core`: CSV input and output, run
//! manifests, replay, and the simulation studies.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;

use crate::commands::{Cli, Command, ReplayArgs, RunOutput};
use crate::error::{CliError, CliResult};
use crate::io::{read_bytes, sha256_hex, write_atomic, Artifact};
use crate::manifest::{RunManifest, MANIFEST_NAME};

/// Inserts the entries of every `--config FILE` right after the subcommand
/// name, so flags given on the command line override them.
pub fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut config = None;
    let mut sub_at = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(path) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else if sub_at.is_none() && !a.starts_with('-') {
            sub_at = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(at)) = (config, sub_at) else {
        return Ok(args);
    };
    let text = String::from_utf8(read_bytes(&path)?)
        .map_err(|_| CliError::usage(format!("{}: config file is not UTF-8", path.display())))?;
    let extra = config::to_args(&config::parse(&text)?);
    let mut out = args;
    out.splice(at + 1..at + 1, extra.into_iter().map(OsString::from));
    Ok(out)
}

/// Parses arguments; the error is clap's, ready for `Error::exit`.
pub fn parse_cli(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    Cli::try_parse_from(args)
}

fn prefixed(prefix: &str, name: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}{name}"))
}

fn write_outputs(prefix: &str, artifacts: &[Artifact]) -> CliResult<()> {
    for a in artifacts {
        let path = prefixed(prefix, &a.name);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        write_atomic(&path, &a.bytes)?;
    }
    Ok(())
}

fn digests(artifacts: &[Artifact]) -> BTreeMap<String, String> {
    artifacts.iter().map(|a| (a.name.clone(), sha256_hex(&a.bytes))).collect()
}

fn input_digests(inputs: &[PathBuf]) -> CliResult<BTreeMap<String, String>> {
    inputs.iter().map(|p| Ok((p.display().to_string(), sha256_hex(&read_bytes(p)?)))).collect()
}

/// Runs one command, writes its files and manifest, and returns the console
/// report.
pub fn execute(cmd: &Command) -> CliResult<(RunOutput, RunManifest)> {
    if let Command::Replay(args) = cmd {
        return replay(args);
    }
    let start = Instant::now();
    let out = cmd.execute()?;
    let prefix = cmd.out_prefix().to_owned();
    write_outputs(&prefix, &out.artifacts)?;
    let manifest = RunManifest {
        subcommand: cmd.name().to_owned(),
        params: serde_json::to_value(cmd).expect("commands serialize"),
        seed: cmd.seed(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        inputs: input_digests(&out.inputs)?,
        outputs: digests(&out.artifacts),
        warnings: out.warnings.clone(),
    };
    manifest.write(&prefixed(&prefix, MANIFEST_NAME))?;
    Ok((out, manifest))
}

/// Re-executes the command recorded in a manifest and checks that inputs and
/// outputs hash to the recorded digests.
pub fn replay(args: &ReplayArgs) -> CliResult<(RunOutput, RunManifest)> {
    let recorded = RunManifest::read(&args.manifest)?;
    let mut cmd: Command = serde_json::from_value(recorded.params.clone())
        .map_err(|e| CliError::usage(format!("{}: unreadable parameters: {e}", args.manifest.display())))?;
    if cmd.name() != recorded.subcommand {
        return Err(CliError::usage(format!(
            "manifest names '{}' but records a '{}' command",
            recorded.subcommand,
            cmd.name()
        )));
    }
    if matches!(cmd, Command::Replay(_)) {
        return Err(CliError::usage("cannot replay a replay"));
    }
    for (path, want) in &recorded.inputs {
        let got = sha256_hex(&read_bytes(Path::new(path))?);
        if &got != want {
            return Err(CliError::Replay(format!("input {path} changed since the recorded run")));
        }
    }
    let start = Instant::now();
    let out = cmd.execute()?;
    let got = digests(&out.artifacts);
    if got != recorded.outputs {
        let names: Vec<&str> = recorded
            .outputs
            .keys()
            .chain(got.keys())
            .filter(|k| recorded.outputs.get(*k) != got.get(*k))
            .map(String::as_str)
            .collect();
        return Err(CliError::Replay(format!("outputs differ: {}", names.join(", "))));
    }
    let mut manifest = RunManifest { wall_time_secs: start.elapsed().as_secs_f64(), ..recorded };
    if let Some(prefix) = &args.out_prefix {
        cmd.set_out_prefix(prefix.clone());
        manifest.params = serde_json::to_value(&cmd).expect("commands serialize");
        write_outputs(prefix, &out.artifacts)?;
        manifest.write(&prefixed(prefix, MANIFEST_NAME))?;
    }
    Ok((out, manifest))
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match parse_cli(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match execute(&cli.command) {
        Ok((out, _)) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            if !out.report.is_empty() {
                println!("{}", out.report);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                let name = cli.command.name();
                eprintln!("\nusage: ddpca {name} [OPTIONS]; see 'ddpca {name} --help'");
            }
            e.exit_code()
        }
    }
}
