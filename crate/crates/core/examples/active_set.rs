//! One primal-dual active set solve, step by step.
//!
//! cargo run --release --example active_set -- example=3 scheme=hmm n=16

use gdm::control::kkt_residual;
use gdm::experiment::{build_problem, exact_solution, ExperimentConfig};
use gdm::{active_set_solve, Mesh, Rect};

fn main() -> gdm::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.set("example", "3")?;
    cfg.set("n", "16")?;
    for arg in std::env::args().skip(1) {
        let (key, value) = arg
            .split_once('=')
            .ok_or_else(|| gdm::Error::Config(format!("expected key=value, got `{arg}`")))?;
        cfg.set(key, value)?;
    }
    let n = cfg.ns[0];
    let exact = exact_solution(&cfg, 512)?;
    let mesh = Mesh::uniform_triangular(n, Rect::UNIT, cfg.pattern)?;
    let problem = build_problem(&cfg, mesh, &exact)?;
    let sol = active_set_solve(&problem)?;

    println!("{} on {n}x{n}, rho = {:e}", cfg.scheme, problem.rho);
    for (i, inc) in sol.history.iter().enumerate() {
        println!("  step {:>2}: relative increment {inc:.3e}", i + 1);
    }
    println!(
        "cells: {} at a, {} at b, {} inactive",
        sol.active_lower.len(),
        sol.active_upper.len(),
        sol.inactive.len()
    );
    let c = -problem.gd.average(&sol.adjoint)? / problem.alpha;
    println!("discrete c = {c:.8} (exact c̄ = {:.8})", exact.cbar);
    let r = kkt_residual(&problem, &sol)?;
    println!(
        "residuals: state {:.2e}, adjoint {:.2e}, variational inequality {:.2e}",
        r.state, r.adjoint, r.variational_inequality
    );
    Ok(())
}
