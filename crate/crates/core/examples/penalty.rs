//! How the penalty weight `ρ` affects the active set iteration on Example 2
//! with HMM, for normalised and raw (nonzero-average) data.
//!
//! cargo run --release --example penalty

use gdm::experiment::{run_experiment, ExampleId, ExperimentConfig};
use gdm::SchemeKind;

fn main() -> gdm::Result<()> {
    for normalize in [true, false] {
        println!("normalize = {normalize}");
        for rho in [1.0, 1e-1, 1e-2, 1e-4] {
            let mut cfg = ExperimentConfig::for_example(ExampleId::Two, SchemeKind::Hmm);
            cfg.set("pattern", "forward")?;
            cfg.set("nmax", "16")?;
            cfg.rho = Some(rho);
            cfg.normalize = normalize;
            let report = run_experiment(&cfg)?;
            let cells: Vec<String> = report
                .rows
                .iter()
                .map(|r| match &r.failure {
                    None => format!("ni={} err_u={:.4}", r.iterations, r.errors[4]),
                    Some(_) => "no convergence".to_string(),
                })
                .collect();
            println!("  rho = {rho:<6e} {}", cells.join(" | "));
        }
    }
    Ok(())
}
