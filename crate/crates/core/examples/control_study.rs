//! Convergence tables for one manufactured control example.
//!
//! cargo run --release --example control_study -- example=1 scheme=ncp1 nmax=64

use gdm::experiment::{markdown, run_experiment, ExperimentConfig};

fn main() -> gdm::Result<()> {
    let mut cfg = ExperimentConfig::default();
    for arg in std::env::args().skip(1) {
        let (key, value) = arg
            .split_once('=')
            .ok_or_else(|| gdm::Error::Config(format!("expected key=value, got `{arg}`")))?;
        cfg.set(key, value)?;
    }
    let start = std::time::Instant::now();
    let report = run_experiment(&cfg)?;
    println!("{}", markdown(&report, &cfg));
    eprintln!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
