//! Batch driver for the manufactured control examples and the Neumann study.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gdm::experiment::{self, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "gdm", version, about = "Convergence studies for gradient discretisations")]
struct Args {
    /// key = value config file; command-line options override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// 1, 2, 3 or custom.
    #[arg(long)]
    example: Option<String>,
    /// p1, ncp1, mlncp1 or hmm.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    /// Finest mesh: squares per side, doubling from 4.
    #[arg(long)]
    nmax: Option<usize>,
    /// Directory for the CSV and markdown tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Example 2 data built with the Laplacian instead of div(A grad).
    #[arg(long)]
    paper_literal_ex2: bool,
    /// Exit nonzero when an order leaves its expected band or a row fails.
    #[arg(long)]
    check: bool,
    /// Standalone Neumann study instead of the control problem.
    #[arg(long)]
    pde: bool,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(short, long)]
    verbose: bool,
}

fn config(args: &Args) -> gdm::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.example {
        cfg.set("example", v)?;
    }
    if let Some(v) = &args.scheme {
        cfg.set("scheme", v)?;
    }
    if let Some(v) = args.rho {
        cfg.set("rho", &v.to_string())?;
    }
    if let Some(v) = args.nmax {
        cfg.set("nmax", &v.to_string())?;
    }
    if let Some(v) = &args.out {
        cfg.out = Some(v.clone());
    }
    if args.paper_literal_ex2 {
        cfg.paper_literal_ex2 = true;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| gdm::Error::Config(format!("expected key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.verbose |= args.verbose;
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &Args) -> gdm::Result<bool> {
    let cfg = config(args)?;
    env_logger::Builder::new()
        .filter_level(if cfg.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn })
        .init();

    if args.pde {
        let report = experiment::run_pde_study(&cfg)?;
        let csv = report.csv();
        print!("{csv}");
        if let Some(dir) = &cfg.out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("pde.csv"), &csv)?;
        }
        return Ok(true);
    }

    let report = experiment::run_experiment(&cfg)?;
    println!("{}", experiment::markdown(&report, &cfg));
    if let Some(dir) = &cfg.out {
        for path in experiment::write_outputs(&report, &cfg, dir)? {
            eprintln!("wrote {}", path.display());
        }
    }
    if !args.check {
        return Ok(true);
    }
    let problems = experiment::check_report(&report, &cfg);
    for p in &problems {
        eprintln!("check failed: {p}");
    }
    Ok(problems.is_empty())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
