//! `toda-ghd <experiment> --config <path> [--seed-offset k] [--out dir] [--threads n] [--emit-veff]`
//!
//! Exit status: 0 when every asserted check passes, 1 when some check
//! fails, 2 on configuration or runtime errors.

use anyhow::{bail, Context, Result};
use clap::Parser;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use toda_ghd::harness::{run, Experiment, ExperimentConfig, RunOptions};
use toda_ghd::DressingSolution;

#[derive(Debug, Parser)]
#[command(name = "toda-ghd", version, about = "Thermal Toda lattice experiments")]
struct Cli {
    /// One of: conservation, spacing, dos, dressing-identities, scattering,
    /// concentration, proxy, lln, fluctuations.
    experiment: String,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Added to every seed in the config.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Output directory for reports and curves.
    #[arg(long, env = "TODA_GHD_OUT", default_value = "toda-ghd-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write the dressing table (`veff.csv`) for the config's β and θ.
    #[arg(long)]
    emit_veff: bool,
}

fn load_config(path: &Path, experiment: Experiment, seed_offset: u64) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let obj = value.as_object_mut().context("config must be a JSON object")?;
    match obj.get("experiment").and_then(|v| v.as_str()) {
        Some(name) if name != experiment.name() => bail!("config is for {name:?}, command line asks for {:?}", experiment.name()),
        Some(_) => {}
        None => {
            obj.insert("experiment".into(), experiment.name().into());
        }
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(value)?;
    for s in &mut cfg.seeds {
        *s = s.wrapping_add(seed_offset);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool> {
    let experiment = Experiment::parse(&cli.experiment)?;
    let cfg = load_config(&cli.config, experiment, cli.seed_offset)?;
    if cli.emit_veff {
        std::fs::create_dir_all(&cli.out)?;
        let sol = DressingSolution::solve(&cfg.params()?, cfg.dos_grid()?)?;
        let path = cli.out.join("veff.csv");
        sol.write_csv(&path)?;
        log::info!("wrote {}", path.display());
    }
    let opts = RunOptions { threads: cli.threads, out_dir: Some(cli.out.clone()) };
    let report = run(&cfg, &opts)?;
    for c in &report.checks {
        println!("{}", c.line());
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    println!("{}: {} checks, {} failed, {:.1} s, report in {}", report.experiment, report.checks.len(), report.checks.iter().filter(|c| !c.pass).count(), report.wall_clock_secs, cli.out.display());
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
