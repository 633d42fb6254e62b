//! `dzrp`: command-line front end.
//!
//! Each run writes `manifest.json` and its result files to
//! `<out>/<manifest hash>`; passing that manifest back as `--config`
//! reproduces the run.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use dzrp::env::Environment;

use commands::{Ctx, Outcome};
use manifest::{run_dir, sha256_hex, EnvFileRef, Manifest};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "dzrp", version, about = "Disordered zero-range process toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration, or a manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parent directory of run directories.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for replicas; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Environment record to simulate instead of `model.env`.
    #[arg(long = "env-file", global = true)]
    env_file: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy, Debug)]
enum Command {
    /// Flux table, critical density and front speed.
    Flux,
    /// Run the particle system and record snapshots and currents.
    Simulate,
    /// Exact Riemann solution, optionally against Godunov.
    Riemann,
    /// Empirical density profiles against the Godunov solution.
    Hydro,
    /// Distance to the critical measure over time.
    Converge,
    /// Local equilibrium statistics around a site.
    Localeq,
    /// Current through the origin fed by an isolated peak.
    Peak,
    /// Build an environment and write its record.
    Env,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Flux => "flux",
            Command::Simulate => "simulate",
            Command::Riemann => "riemann",
            Command::Hydro => "hydro",
            Command::Converge => "converge",
            Command::Localeq => "localeq",
            Command::Peak => "peak",
            Command::Env => "env",
        }
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_env_file(path: &Path, expected: Option<&str>) -> Result<(Environment, EnvFileRef), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let sha256 = sha256_hex(&bytes);
    if let Some(want) = expected {
        if want != sha256 {
            return Err(CliError::Config(format!("{} does not match the manifest hash", path.display())));
        }
    }
    let text = String::from_utf8(bytes).map_err(|e| CliError::Config(e.to_string()))?;
    let env = Environment::from_json(&text).map_err(CliError::config)?;
    Ok((env, EnvFileRef { path: path.to_path_buf(), sha256 }))
}

fn execute(cli: &Cli) -> Result<PathBuf, CliError> {
    let name = cli.command.name();
    let input = match &cli.config {
        Some(path) => read_json(path)?,
        None => Value::Object(Default::default()),
    };
    let (raw, seed, env_ref) = match Manifest::detect(&input) {
        Some(m) => {
            let m = m?;
            if m.command != name {
                return Err(CliError::Config(format!("manifest is for `{}`, not `{name}`", m.command)));
            }
            (m.config, cli.seed.unwrap_or(m.seed), m.env_file)
        }
        None => (input, cli.seed.unwrap_or(0), None),
    };
    let env_file = match (&cli.env_file, &env_ref) {
        (Some(path), _) => Some(load_env_file(path, None)?),
        (None, Some(r)) => Some(load_env_file(&r.path, Some(&r.sha256))?),
        (None, None) => None,
    };
    let (env, env_ref) = match env_file {
        Some((env, r)) => (Some(env), Some(r)),
        None => (None, None),
    };
    let ctx = Ctx { seed, workers: cli.workers, env_file: env };
    let outcome: Outcome = match cli.command {
        Command::Flux => commands::flux(raw, &ctx),
        Command::Simulate => commands::simulate(raw, &ctx),
        Command::Riemann => commands::riemann(raw, &ctx),
        Command::Hydro => commands::hydro(raw, &ctx),
        Command::Converge => commands::converge(raw, &ctx),
        Command::Localeq => commands::localeq(raw, &ctx),
        Command::Peak => commands::peak(raw, &ctx),
        Command::Env => commands::env(raw, &ctx),
    }?;

    let mut manifest = Manifest {
        command: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config: outcome.config,
        env_file: env_ref,
        env_sha256: outcome.env_sha256,
        output_dir: None,
    };
    let dir = run_dir(&cli.out, &manifest);
    manifest.output_dir = Some(dir.clone());
    let write = |file: &str, bytes: &[u8]| {
        std::fs::write(dir.join(file), bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.join(file).display())))
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    text.push(b'\n');
    write("manifest.json", &text)?;
    for (file, bytes) in &outcome.files {
        write(file, bytes)?;
    }
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
