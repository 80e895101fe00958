//! Batch CLI: α sweeps, beampatterns, and convergence traces.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bpms::digital::DesignMethod;
use bpms::sweep::{
    beampattern_csv, convergence_csv, curve_csv, load_manifest, run_sweep, uniform_grid,
    write_sweep_artifacts,
};
use bpms::{load_config, Error, Result, ScenarioConfig};

#[derive(Parser)]
#[command(name = "bpms", about = "Positioning/sensing beamforming tradeoff toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Scenario TOML; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a design method over an α grid and emit CSV + manifest.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Design method name.
        #[arg(long, default_value = "fdb-wcrb")]
        method: DesignMethod,
        /// Point count N (uniform grid) or explicit comma-separated list.
        #[arg(long, default_value = "21")]
        alpha_grid: String,
        /// Evaluate bounds through the fused two-receiver information.
        #[arg(long)]
        fused: bool,
        /// Replay a previously written manifest instead of the flags above.
        #[arg(long, conflicts_with_all = ["config", "seed", "method", "alpha_grid", "fused"])]
        replay: Option<PathBuf>,
    },
    /// Emit the transmit beampattern of one design at one α.
    Beampattern {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "fdb-wcrb")]
        method: DesignMethod,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Number of angle samples on [−π/2, π/2].
        #[arg(long, default_value_t = 721)]
        resolution: usize,
    },
    /// Emit the alternating analog design's objective trace at one α.
    Converge {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
}

fn load_scenario(common: &CommonOpts) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(&std::fs::read_to_string(path)?)?,
        None => load_config("")?,
    };
    if let Some(seed) = common.seed {
        cfg.rng_seed = seed;
    }
    Ok(cfg)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    if spec.contains(',') || spec.contains('.') {
        spec.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::ConfigParse(format!("alpha '{s}': {e}")))
            })
            .collect()
    } else {
        let n: usize = spec
            .trim()
            .parse()
            .map_err(|e| Error::ConfigParse(format!("grid size '{spec}': {e}")))?;
        if n == 0 {
            return Err(Error::ConfigParse("grid size must be positive".into()));
        }
        Ok(uniform_grid(n))
    }
}

fn write_artifact(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Sweep { common, method, alpha_grid, fused, replay } => {
            let (cfg, grid, method, fused) = match &replay {
                Some(path) => {
                    let manifest = load_manifest(&std::fs::read_to_string(path)?)?;
                    let method: DesignMethod = manifest.method.parse()?;
                    (manifest.scenario, manifest.alpha_grid, method, manifest.fused)
                }
                None => (load_scenario(&common)?, parse_grid(&alpha_grid)?, method, fused),
            };
            let curve = run_sweep(&cfg, method, &grid, fused)?;
            let path = write_sweep_artifacts(&common.out, &cfg, &grid, &curve)?;
            println!("{}", path.display());
            for p in &curve.points {
                if !p.is_ok() {
                    eprintln!("alpha {}: {}", p.alpha, p.status);
                }
            }
            let _ = curve_csv(&curve);
            Ok(curve.all_ok())
        }
        Command::Beampattern { common, method, alpha, resolution } => {
            let cfg = load_scenario(&common)?;
            let csv = beampattern_csv(&cfg, method, alpha, resolution)?;
            let name = format!("beampattern_{}_{alpha}.csv", method.name());
            let path = write_artifact(&common.out, &name, &csv)?;
            println!("{}", path.display());
            Ok(true)
        }
        Command::Converge { common, alpha } => {
            let cfg = load_scenario(&common)?;
            let csv = convergence_csv(&cfg, alpha)?;
            let name = format!("convergence_{alpha}.csv");
            let path = write_artifact(&common.out, &name, &csv)?;
            println!("{}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
