//! Uniform mesh families, their geometry and the plain-text mesh format.
//!
//! cargo run --release --example meshes

use std::sync::Arc;

use gdm::schemes;
use gdm::{DiagonalPattern, Mesh, Rect, SchemeKind};

fn main() -> gdm::Result<()> {
    println!("{:>12} {:>4} {:>6} {:>6} {:>6} {:>9} {:>7}", "family", "n", "cells", "faces", "verts", "h", "eta");
    for n in [4, 8, 16] {
        let family = [
            ("forward", Mesh::uniform_triangular(n, Rect::UNIT, DiagonalPattern::Forward)?),
            ("alternating", Mesh::uniform_triangular(n, Rect::UNIT, DiagonalPattern::Alternating)?),
            ("squares", Mesh::uniform_quadrilateral(n, Rect::UNIT)?),
        ];
        for (name, m) in family {
            println!(
                "{name:>12} {n:>4} {:>6} {:>6} {:>6} {:>9.6} {:>7.4}",
                m.num_cells(),
                m.num_faces(),
                m.num_vertices(),
                m.h(),
                m.regularity_eta()
            );
        }
    }

    let mesh = Mesh::uniform_triangular(4, Rect::UNIT, DiagonalPattern::Alternating)?;
    let path = std::env::temp_dir().join("gdm_alternating_4.mesh");
    mesh.save(&path)?;
    let back = Mesh::load(&path)?;
    println!("\nwrote and reloaded {} ({} cells)", path.display(), back.num_cells());
    println!("{}", mesh.to_ascii().lines().take(4).collect::<Vec<_>>().join("\n"));

    let mesh = Arc::new(back);
    println!("\nunknowns on the reloaded mesh:");
    for kind in SchemeKind::ALL {
        let gd = schemes::build(kind, mesh.clone())?;
        println!("  {:>7}: {} dofs, {} quadrature points", kind.name(), gd.dof_count(), gd.quadrature().len());
    }
    let squares = Arc::new(Mesh::uniform_quadrilateral(4, Rect::UNIT)?);
    let hmm = schemes::build(SchemeKind::Hmm, squares)?;
    println!("      hmm on 4x4 squares: {} dofs", hmm.dof_count());
    Ok(())
}
