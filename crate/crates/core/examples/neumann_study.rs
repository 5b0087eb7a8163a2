//! Neumann convergence and the quality measures `C_D`, `S_D`, `W_D` for every
//! scheme, with `ψ = 2cos(πx)cos(πy)`.
//!
//! cargo run --release --example neumann_study -- nmax=32 kappa=1

use gdm::experiment::{run_pde_study, ExperimentConfig};
use gdm::SchemeKind;

fn main() -> gdm::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.set("nmax", "32")?;
    for arg in std::env::args().skip(1) {
        let (key, value) = arg
            .split_once('=')
            .ok_or_else(|| gdm::Error::Config(format!("expected key=value, got `{arg}`")))?;
        cfg.set(key, value)?;
    }
    for kind in SchemeKind::ALL {
        cfg.scheme = kind;
        let report = run_pde_study(&cfg)?;
        println!("# {kind}");
        print!("{}", report.csv());
        println!();
    }
    Ok(())
}
