use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tetramer_cli::config::{load_config, parse_with_overrides, RunConfig};
use tetramer_cli::output::{RunOutput, CONFIG_SNAPSHOT};
use tetramer_cli::{plot, run, WORKERS_ENV};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "tetramer", version, about = "Monomer-trimer Bose-Hubbard thermalization experiments")]
struct Cli {
    /// TOML configuration; every key has a default.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set model.n=50`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sector basis representatives.
    Basis,
    /// Uncoupled (and, for ω > 0, coupled) sector spectrum.
    Spectrum,
    /// Window-mean spacing ratio over (x, ε).
    ChaosMap,
    /// Quantum quench: P(x, t), entropy and the thermal comparison.
    EvolveQuantum,
    /// Mean-field ensemble: P(x, t), entropy and the thermal comparison.
    EvolveClassical,
    /// Poincaré section of the mean-field flow.
    Poincare,
    /// Coupling threshold ω_T at (x0, eps0).
    Threshold,
    /// ω_T against the initial energy.
    ScanEps,
    /// ω_T against UN/Ω.
    ScanUn,
    /// Δρ against ωN/Ω for several N, with collapse and fit.
    Scaling,
    /// Mean level spacings against N with a/N + b/N² fits.
    SpacingScaling,
    /// Render SVG figures from the tables in a run directory.
    Plot {
        /// Run directory (defaults to the output directory).
        dir: Option<PathBuf>,
    },
    /// Print the full configuration with defaults filled in.
    ShowConfig,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Basis => "basis",
            Command::Spectrum => "spectrum",
            Command::ChaosMap => "chaos-map",
            Command::EvolveQuantum => "evolve-quantum",
            Command::EvolveClassical => "evolve-classical",
            Command::Poincare => "poincare",
            Command::Threshold => "threshold",
            Command::ScanEps => "scan-eps",
            Command::ScanUn => "scan-un",
            Command::Scaling => "scaling",
            Command::SpacingScaling => "spacing-scaling",
            Command::Plot { .. } => "plot",
            Command::ShowConfig => "show-config",
        }
    }
}

/// The system OpenBLAS picks a faulty kernel on some CPUs unless a core
/// type is forced; re-executes with one chosen from the CPU features.
#[cfg(unix)]
fn pin_blas_core() {
    use std::os::unix::process::CommandExt;
    const VAR: &str = "OPENBLAS_CORETYPE";
    if std::env::var_os(VAR).is_some() {
        return;
    }
    #[cfg(target_arch = "x86_64")]
    let core = if std::arch::is_x86_feature_detected!("avx512f") {
        "SkylakeX"
    } else if std::arch::is_x86_feature_detected!("avx2") {
        "Haswell"
    } else {
        "Nehalem"
    };
    #[cfg(not(target_arch = "x86_64"))]
    return;
    #[cfg(target_arch = "x86_64")]
    if let Ok(exe) = std::env::current_exe() {
        let err = std::process::Command::new(exe)
            .args(std::env::args_os().skip(1))
            .env(VAR, core)
            .exec();
        eprintln!("warning: could not re-execute with {VAR}={core}: {err}");
    }
}

#[cfg(not(unix))]
fn pin_blas_core() {}

fn set_workers() -> Result<(), String> {
    let Some(raw) = std::env::var_os(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{WORKERS_ENV} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn config(cli: &Cli) -> Result<RunConfig, String> {
    let mut c = match &cli.config {
        Some(path) => load_config(path, &cli.set),
        None => parse_with_overrides("", &cli.set),
    }
    .map_err(|e| e.to_string())?;
    if let Some(out) = &cli.out {
        c.output.dir = out.clone();
    }
    Ok(c)
}

fn main() -> ExitCode {
    pin_blas_core();
    let cli = Cli::parse();
    if let Err(e) = set_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let config = match config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match &cli.command {
        Command::ShowConfig => {
            print!("{}", config.to_toml());
            ExitCode::SUCCESS
        }
        Command::Plot { dir } => {
            let dir = dir.clone().unwrap_or_else(|| config.output.dir.clone());
            match plot::render(&dir, &dir) {
                Ok((written, warnings)) => {
                    for w in &warnings {
                        eprintln!("warning: {w}");
                    }
                    if written.is_empty() {
                        eprintln!("warning: no figures rendered from {}", dir.display());
                    }
                    for f in &written {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(EXIT_PARTIAL)
                }
            }
        }
        cmd => {
            let name = cmd.name();
            let mut out = match RunOutput::create(&config.output.dir) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(EXIT_PARTIAL);
                }
            };
            out.job("config snapshot", |out| out.text(CONFIG_SNAPSHOT, &config.to_toml()));
            if let Err(e) = run::dispatch(name, &config, &mut out) {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_CONFIG);
            }
            let dir = out.dir.clone();
            match out.finish(name, &config) {
                Ok(true) => {
                    eprintln!("{name}: done, outputs in {}", dir.display());
                    ExitCode::SUCCESS
                }
                Ok(false) => {
                    eprintln!("{name}: finished with failed jobs, see {}", dir.join("manifest.toml").display());
                    ExitCode::from(EXIT_PARTIAL)
                }
                Err(e) => {
                    eprintln!("error: manifest: {e:#}");
                    ExitCode::from(EXIT_PARTIAL)
                }
            }
        }
    }
}
