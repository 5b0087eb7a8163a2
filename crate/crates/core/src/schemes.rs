//! Builders for the four gradient discretisations: conforming P1,
//! nonconforming (Crouzeix–Raviart) P1, its mass-lumped variant on diamonds,
//! and the hybrid mimetic mixed (HMM) scheme on general polygons.
//!
//! DOFs are numbered in mesh order: vertices for P1, faces for the two
//! nonconforming variants, cells then faces for HMM.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use crate::gd::{GradientDiscretisation, QuadratureBuilder, QuadratureRule, SchemeKind};
use crate::linalg::SparseMatrix;
use crate::mesh::{Mesh, Point};
use crate::{Error, Result};

/// Builds `kind` on `mesh` with the 3-point quadrature.
pub fn build(kind: SchemeKind, mesh: Arc<Mesh>) -> Result<GradientDiscretisation> {
    build_with_rule(kind, mesh, QuadratureRule::ThreePoint)
}

/// Builds `kind` on `mesh`; all integrals of the resulting discretisation use
/// `rule` on each triangle (or half-diamond).
pub fn build_with_rule(kind: SchemeKind, mesh: Arc<Mesh>, rule: QuadratureRule) -> Result<GradientDiscretisation> {
    match kind {
        SchemeKind::ConformingP1 => conforming_p1(mesh, rule),
        SchemeKind::NonconformingP1 => nonconforming_p1(mesh, rule),
        SchemeKind::MassLumpedP1 => mass_lumped_ncp1(mesh, rule),
        SchemeKind::Hmm => hmm(mesh, rule),
    }
}

fn require_triangles(mesh: &Mesh, kind: SchemeKind) -> Result<()> {
    match mesh.cells().iter().position(|c| c.len() != 3) {
        Some(cell) => Err(Error::NonTriangular {
            scheme: kind.name(),
            cell,
            vertices: mesh.cells()[cell].len(),
        }),
        None => Ok(()),
    }
}

/// Gradients of the barycentric coordinates of triangle `t`.
fn barycentric_gradients(t: [Point; 3]) -> [Point; 3] {
    let area2 = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0]);
    std::array::from_fn(|i| {
        let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
        [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2]
    })
}

fn triangle_of(mesh: &Mesh, k: usize) -> [Point; 3] {
    let c = &mesh.cells()[k];
    [mesh.vertices()[c[0]], mesh.vertices()[c[1]], mesh.vertices()[c[2]]]
}

struct Rows {
    pi: Vec<(usize, usize, f64)>,
    gx: Vec<(usize, usize, f64)>,
    gy: Vec<(usize, usize, f64)>,
}

impl Rows {
    fn new() -> Self {
        Rows {
            pi: Vec::new(),
            gx: Vec::new(),
            gy: Vec::new(),
        }
    }

    fn grad(&mut self, q: usize, dof: usize, g: Point) {
        self.gx.push((q, dof, g[0]));
        self.gy.push((q, dof, g[1]));
    }

    fn finish(
        self,
        kind: SchemeKind,
        mesh: Arc<Mesh>,
        dofs: usize,
        quad: QuadratureBuilder,
    ) -> GradientDiscretisation {
        let quad = quad.finish();
        let nq = quad.len();
        let mk = |t: &[(usize, usize, f64)]| SparseMatrix::from_triplets(nq, dofs, t).expect("indices in range");
        let pi = mk(&self.pi);
        let grad = [mk(&self.gx), mk(&self.gy)];
        GradientDiscretisation::assemble(kind, mesh, dofs, quad, pi, grad, vec![1.0; dofs])
    }
}

/// Continuous piecewise-linear functions with vertex DOFs.
pub fn build_conforming_p1(mesh: Arc<Mesh>) -> Result<GradientDiscretisation> {
    conforming_p1(mesh, QuadratureRule::ThreePoint)
}

fn conforming_p1(mesh: Arc<Mesh>, rule: QuadratureRule) -> Result<GradientDiscretisation> {
    require_triangles(&mesh, SchemeKind::ConformingP1)?;
    let mut quad = QuadratureBuilder::new(rule);
    let mut rows = Rows::new();
    for k in 0..mesh.num_cells() {
        let t = triangle_of(&mesh, k);
        let g = barycentric_gradients(t);
        let verts = &mesh.cells()[k];
        quad.start_cell();
        let base = quad.len();
        for (p, l) in quad.push_triangle(t).iter().enumerate() {
            for i in 0..3 {
                rows.pi.push((base + p, verts[i], l[i]));
                rows.grad(base + p, verts[i], g[i]);
            }
        }
    }
    let n = mesh.num_vertices();
    Ok(rows.finish(SchemeKind::ConformingP1, mesh, n, quad))
}

/// Crouzeix–Raviart basis on a triangle: the function attached to local face
/// `j` (joining local vertices `j` and `j+1`) is `1 − 2λ_{j+2}`.
fn ncp1_local(t: [Point; 3]) -> [(usize, Point); 3] {
    let g = barycentric_gradients(t);
    std::array::from_fn(|j| {
        let opp = (j + 2) % 3;
        (opp, [-2.0 * g[opp][0], -2.0 * g[opp][1]])
    })
}

/// Piecewise-linear functions continuous at face midpoints, with the broken gradient.
pub fn build_nonconforming_p1(mesh: Arc<Mesh>) -> Result<GradientDiscretisation> {
    nonconforming_p1(mesh, QuadratureRule::ThreePoint)
}

fn nonconforming_p1(mesh: Arc<Mesh>, rule: QuadratureRule) -> Result<GradientDiscretisation> {
    require_triangles(&mesh, SchemeKind::NonconformingP1)?;
    let mut quad = QuadratureBuilder::new(rule);
    let mut rows = Rows::new();
    for k in 0..mesh.num_cells() {
        let t = triangle_of(&mesh, k);
        let local = ncp1_local(t);
        let geo = mesh.geometry(k);
        quad.start_cell();
        let base = quad.len();
        for (p, l) in quad.push_triangle(t).iter().enumerate() {
            for (j, &(opp, g)) in local.iter().enumerate() {
                let dof = geo.faces[j].face;
                rows.pi.push((base + p, dof, 1.0 - 2.0 * l[opp]));
                rows.grad(base + p, dof, g);
            }
        }
    }
    let n = mesh.num_faces();
    Ok(rows.finish(SchemeKind::NonconformingP1, mesh, n, quad))
}

/// Nonconforming P1 gradient with a reconstruction that is constant on each
/// diamond `D_σ` (the union of the half-diamonds `(x_K, σ)`).
pub fn build_mass_lumped_ncp1(mesh: Arc<Mesh>) -> Result<GradientDiscretisation> {
    mass_lumped_ncp1(mesh, QuadratureRule::ThreePoint)
}

fn mass_lumped_ncp1(mesh: Arc<Mesh>, rule: QuadratureRule) -> Result<GradientDiscretisation> {
    require_triangles(&mesh, SchemeKind::MassLumpedP1)?;
    let mut quad = QuadratureBuilder::new(rule);
    let mut rows = Rows::new();
    for k in 0..mesh.num_cells() {
        let t = triangle_of(&mesh, k);
        let local = ncp1_local(t);
        let geo = mesh.geometry(k);
        let xk = mesh.cell_points()[k];
        quad.start_cell();
        for j in 0..3 {
            let sub = [xk, t[j], t[(j + 1) % 3]];
            let base = quad.len();
            for p in 0..quad.push_triangle(sub).len() {
                rows.pi.push((base + p, geo.faces[j].face, 1.0));
                for (jj, &(_, g)) in local.iter().enumerate() {
                    rows.grad(base + p, geo.faces[jj].face, g);
                }
            }
        }
    }
    let n = mesh.num_faces();
    Ok(rows.finish(SchemeKind::MassLumpedP1, mesh, n, quad))
}

/// Hybrid mimetic mixed scheme: cell and face unknowns, cellwise-constant
/// reconstruction, and a consistent gradient plus a stabilisation that is
/// constant on each half-diamond.
pub fn build_hmm(mesh: Arc<Mesh>) -> Result<GradientDiscretisation> {
    hmm(mesh, QuadratureRule::ThreePoint)
}

fn hmm(mesh: Arc<Mesh>, rule: QuadratureRule) -> Result<GradientDiscretisation> {
    let nc = mesh.num_cells();
    let mut quad = QuadratureBuilder::new(rule);
    let mut rows = Rows::new();
    for k in 0..nc {
        let geo = mesh.geometry(k);
        let cell = &mesh.cells()[k];
        let xk = mesh.cell_points()[k];
        let faces = &geo.faces;
        // ∇̄_K v = Σ_σ consistent[σ] v_σ
        let consistent: Vec<Point> = faces
            .iter()
            .map(|f| {
                let s = f.measure / geo.measure;
                [s * f.normal[0], s * f.normal[1]]
            })
            .collect();
        quad.start_cell();
        for (j, fj) in faces.iter().enumerate() {
            let sub = [
                xk,
                mesh.vertices()[cell[j]],
                mesh.vertices()[cell[(j + 1) % cell.len()]],
            ];
            let base = quad.len();
            let stab = SQRT_2 / fj.distance;
            let offset = [fj.midpoint[0] - xk[0], fj.midpoint[1] - xk[1]];
            let mut coeffs: Vec<(usize, Point)> = Vec::with_capacity(faces.len() + 1);
            coeffs.push((k, [-stab * fj.normal[0], -stab * fj.normal[1]]));
            for (i, fi) in faces.iter().enumerate() {
                let c = consistent[i];
                let own = if i == j { 1.0 } else { 0.0 };
                let s = stab * (own - (c[0] * offset[0] + c[1] * offset[1]));
                coeffs.push((nc + fi.face, [c[0] + s * fj.normal[0], c[1] + s * fj.normal[1]]));
            }
            for p in 0..quad.push_triangle(sub).len() {
                rows.pi.push((base + p, k, 1.0));
                for &(dof, g) in &coeffs {
                    rows.grad(base + p, dof, g);
                }
            }
        }
    }
    let n = nc + mesh.num_faces();
    Ok(rows.finish(SchemeKind::Hmm, mesh, n, quad))
}

/// Samples a function into DOFs in the natural way for each scheme: vertex
/// values (P1), face-midpoint values (ncP1 variants), cell-point and
/// face-midpoint values (HMM).
pub fn interpolate<F: Fn(Point) -> f64>(gd: &GradientDiscretisation, f: F) -> Vec<f64> {
    let mesh = gd.mesh();
    match gd.kind() {
        SchemeKind::ConformingP1 => mesh.vertices().iter().map(|&p| f(p)).collect(),
        SchemeKind::NonconformingP1 | SchemeKind::MassLumpedP1 => {
            mesh.faces().iter().map(|s| f(s.midpoint)).collect()
        }
        SchemeKind::Hmm => mesh
            .cell_points()
            .iter()
            .map(|&p| f(p))
            .chain(mesh.faces().iter().map(|s| f(s.midpoint)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gd::DiscreteFunction;
    use crate::mesh::{DiagonalPattern, Rect};

    fn mesh(n: usize, pattern: DiagonalPattern) -> Arc<Mesh> {
        Arc::new(Mesh::uniform_triangular(n, Rect::UNIT, pattern).unwrap())
    }

    fn affine(p: Point) -> f64 {
        0.3 + 1.7 * p[0] - 0.6 * p[1]
    }

    #[test]
    fn dof_counts() {
        let m1 = mesh(1, DiagonalPattern::Forward);
        assert_eq!(build_conforming_p1(m1.clone()).unwrap().dof_count(), 4);
        assert_eq!(build_nonconforming_p1(m1.clone()).unwrap().dof_count(), 5);
        assert_eq!(build_mass_lumped_ncp1(m1).unwrap().dof_count(), 5);
        let m2 = mesh(2, DiagonalPattern::Forward);
        assert_eq!(build_hmm(m2).unwrap().dof_count(), 8 + 16);
    }

    #[test]
    fn affine_exactness() {
        for pattern in [DiagonalPattern::Forward, DiagonalPattern::Alternating] {
            for kind in SchemeKind::ALL {
                let gd = build(kind, mesh(3, pattern)).unwrap();
                let v = DiscreteFunction::new(interpolate(&gd, affine));
                let g = gd.reconstruct_gradient(&v).unwrap();
                for gq in &g {
                    assert!((gq[0] - 1.7).abs() < 1e-12 && (gq[1] + 0.6).abs() < 1e-12, "{kind}");
                }
                let p = gd.reconstruct(&v).unwrap();
                let q = gd.quadrature();
                match kind {
                    SchemeKind::ConformingP1 | SchemeKind::NonconformingP1 => {
                        for (val, pt) in p.iter().zip(q.points()) {
                            assert!((val - affine(*pt)).abs() < 1e-12);
                        }
                    }
                    SchemeKind::Hmm => {
                        for k in 0..gd.mesh().num_cells() {
                            let c = affine(gd.mesh().cell_points()[k]);
                            assert!(q.cell_range(k).all(|i| (p[i] - c).abs() < 1e-12));
                        }
                    }
                    SchemeKind::MassLumpedP1 => {}
                }
            }
        }
    }

    #[test]
    fn hmm_stabilisation_vanishes_on_affine_data() {
        let gd = build_hmm(mesh(4, DiagonalPattern::Alternating)).unwrap();
        let m = gd.mesh();
        let v = interpolate(&gd, affine);
        let nc = m.num_cells();
        for k in 0..nc {
            let geo = m.geometry(k);
            let xk = m.cell_points()[k];
            let gbar = geo.faces.iter().fold([0.0, 0.0], |acc, f| {
                let s = f.measure * v[nc + f.face] / geo.measure;
                [acc[0] + s * f.normal[0], acc[1] + s * f.normal[1]]
            });
            for f in &geo.faces {
                let r = v[nc + f.face]
                    - v[k]
                    - (gbar[0] * (f.midpoint[0] - xk[0]) + gbar[1] * (f.midpoint[1] - xk[1]));
                assert!(r.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hmm_on_polygons() {
        // Quadrilaterals and an off-centre cell point.
        let m = Mesh::uniform_quadrilateral(3, Rect::UNIT).unwrap();
        let mut pts = m.cell_points().to_vec();
        pts[4] = [0.45, 0.52];
        let m = Arc::new(Mesh::with_cell_points(m.vertices().to_vec(), m.cells().to_vec(), Some(pts)).unwrap());
        let gd = build_hmm(m).unwrap();
        let v = DiscreteFunction::new(interpolate(&gd, affine));
        for g in gd.reconstruct_gradient(&v).unwrap() {
            assert!((g[0] - 1.7).abs() < 1e-12 && (g[1] + 0.6).abs() < 1e-12);
        }
        let c = DiscreteFunction::new(vec![2.5; gd.dof_count()]);
        for g in gd.reconstruct_gradient(&c).unwrap() {
            assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
        }
    }

    #[test]
    fn fe_schemes_reject_polygons() {
        let m = Arc::new(Mesh::uniform_quadrilateral(2, Rect::UNIT).unwrap());
        for kind in [SchemeKind::ConformingP1, SchemeKind::NonconformingP1, SchemeKind::MassLumpedP1] {
            assert!(matches!(build(kind, m.clone()), Err(Error::NonTriangular { .. })));
        }
    }

    #[test]
    fn ncp1_variants_share_gradient() {
        let m = mesh(3, DiagonalPattern::Alternating);
        let a = build_nonconforming_p1(m.clone()).unwrap();
        let b = build_mass_lumped_ncp1(m).unwrap();
        // Same cellwise-constant operator; compare its value on each cell.
        for k in 0..a.mesh().num_cells() {
            let qa = a.quadrature().cell_range(k).start;
            for qb in b.quadrature().cell_range(k) {
                for d in 0..2 {
                    let ra: Vec<_> = a.grad()[d].row(qa).collect();
                    let rb: Vec<_> = b.grad()[d].row(qb).collect();
                    assert_eq!(ra, rb);
                }
            }
        }
    }

    #[test]
    fn ncp1_basis_matches_midpoint_values() {
        let gd = build_nonconforming_p1(mesh(2, DiagonalPattern::Forward)).unwrap();
        let m = gd.mesh();
        let interior = m.faces().iter().position(|f| !f.is_boundary()).unwrap();
        let mut e = vec![0.0; gd.dof_count()];
        e[interior] = 1.0;
        // Evaluate the cellwise-linear function at each face midpoint of each adjacent cell.
        for k in 0..m.num_cells() {
            let t = triangle_of(m, k);
            let g = barycentric_gradients(t);
            let geo = m.geometry(k);
            for (j, f) in geo.faces.iter().enumerate() {
                let _ = j;
                let val: f64 = ncp1_local(t)
                    .iter()
                    .enumerate()
                    .map(|(jj, &(opp, _))| {
                        let lam = g[opp][0] * (f.midpoint[0] - t[opp][0])
                            + g[opp][1] * (f.midpoint[1] - t[opp][1])
                            + 1.0;
                        e[geo.faces[jj].face] * (1.0 - 2.0 * lam)
                    })
                    .sum();
                let expected = if f.face == interior { 1.0 } else { 0.0 };
                assert!((val - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_lumped_reconstruction_on_diamonds() {
        let gd = build_mass_lumped_ncp1(mesh(3, DiagonalPattern::Forward)).unwrap();
        let m = gd.mesh();
        let v: Vec<f64> = (0..gd.dof_count()).map(|i| (i as f64 * 0.37).sin()).collect();
        let diamonds = m.diamonds();
        let expected: f64 = diamonds.iter().map(|d| d.measure * v[d.face]).sum::<f64>() / m.area();
        assert!((gd.average(&v.into()).unwrap() - expected).abs() < 1e-13);
        let total: f64 = diamonds.iter().map(|d| d.measure).sum();
        assert!((total - m.area()).abs() < 1e-12);
    }
}
