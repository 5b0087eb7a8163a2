//! The constant `c̄` that makes the exact control of Example 3 mean-free, and
//! the discrete constants the solver finds for it.
//!
//! cargo run --release --example average_constant

use gdm::experiment::{exact_solution, run_experiment, ExampleId, ExperimentConfig};
use gdm::SchemeKind;

fn main() -> gdm::Result<()> {
    let mut cfg = ExperimentConfig::for_example(ExampleId::Three, SchemeKind::ConformingP1);
    println!("reference quadrature   c̄");
    for n in [64, 256, 1024] {
        let exact = exact_solution(&cfg, n)?;
        println!("{:>9} squares   {:.8}", n, exact.cbar);
    }

    cfg.set("nmax", "32")?;
    println!("\nscheme   discrete c on the 1/4 .. 1/32 meshes");
    for kind in SchemeKind::ALL {
        cfg.scheme = kind;
        let report = run_experiment(&cfg)?;
        let cs: Vec<String> = report.rows.iter().map(|r| format!("{:.6}", r.cstar)).collect();
        println!("{:>7}  {}", kind.name(), cs.join("  "));
    }
    Ok(())
}
