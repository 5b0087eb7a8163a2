//! The gradient-discretisation abstraction.
//!
//! A [`GradientDiscretisation`] is a space of degrees of freedom together with
//! two linear reconstructions: a function `Π_D` and a gradient `∇_D`. Both are
//! stored as sparse operators from DOF vectors to values at the points of a
//! quadrature layout, so every integral the schemes need is a weighted sum
//! over those points.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::linalg::{self, LowRankUpdate, RankOne, SolverOptions, SparseMatrix};
use crate::mesh::{Mesh, Point};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    ConformingP1,
    NonconformingP1,
    MassLumpedP1,
    Hmm,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::ConformingP1,
        SchemeKind::NonconformingP1,
        SchemeKind::MassLumpedP1,
        SchemeKind::Hmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::ConformingP1 => "p1",
            SchemeKind::NonconformingP1 => "ncp1",
            SchemeKind::MassLumpedP1 => "mlncp1",
            SchemeKind::Hmm => "hmm",
        }
    }

    /// Whether `Π_D` is piecewise constant (on cells or diamonds).
    pub fn piecewise_constant(self) -> bool {
        matches!(self, SchemeKind::MassLumpedP1 | SchemeKind::Hmm)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}` (p1|ncp1|mlncp1|hmm)")))
    }
}

/// Quadrature points grouped by cell.
#[derive(Debug, Clone)]
pub struct Quadrature {
    points: Vec<Point>,
    weights: Vec<f64>,
    cell_offsets: Vec<usize>,
}

/// Barycentric coordinates of the symmetric 3-point rule, exact for quadratics.
pub(crate) const TRIANGLE_RULE: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

const CENTROID_RULE: [[f64; 3]; 1] = [[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];

/// Per-triangle quadrature used by a discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum QuadratureRule {
    /// Symmetric 3-point rule, exact for quadratics.
    #[default]
    ThreePoint,
    /// One point at the centroid, exact for affine functions.
    Centroid,
}

impl QuadratureRule {
    fn barycentrics(self) -> &'static [[f64; 3]] {
        match self {
            QuadratureRule::ThreePoint => &TRIANGLE_RULE,
            QuadratureRule::Centroid => &CENTROID_RULE,
        }
    }
}

impl FromStr for QuadratureRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "three-point" | "3" => Ok(QuadratureRule::ThreePoint),
            "centroid" | "1" => Ok(QuadratureRule::Centroid),
            other => Err(Error::Config(format!("unknown quadrature `{other}` (three-point|centroid)"))),
        }
    }
}

pub(crate) fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

pub(crate) fn barycentric_point(t: [Point; 3], l: [f64; 3]) -> Point {
    [
        l[0] * t[0][0] + l[1] * t[1][0] + l[2] * t[2][0],
        l[0] * t[0][1] + l[1] * t[1][1] + l[2] * t[2][1],
    ]
}

#[derive(Debug, Default)]
pub(crate) struct QuadratureBuilder {
    rule: QuadratureRule,
    points: Vec<Point>,
    weights: Vec<f64>,
    cell_offsets: Vec<usize>,
}

impl QuadratureBuilder {
    pub fn new(rule: QuadratureRule) -> Self {
        QuadratureBuilder {
            rule,
            ..Default::default()
        }
    }

    pub fn start_cell(&mut self) {
        self.cell_offsets.push(self.points.len());
    }

    /// Appends the rule on triangle `t`; returns the barycentric coordinates
    /// used so callers can build matching operator rows.
    pub fn push_triangle(&mut self, t: [Point; 3]) -> &'static [[f64; 3]] {
        let rule = self.rule.barycentrics();
        let w = triangle_area(t[0], t[1], t[2]) / rule.len() as f64;
        for &l in rule {
            self.points.push(barycentric_point(t, l));
            self.weights.push(w);
        }
        rule
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn finish(mut self) -> Quadrature {
        self.cell_offsets.push(self.points.len());
        Quadrature {
            points: self.points,
            weights: self.weights,
            cell_offsets: self.cell_offsets,
        }
    }
}

impl Quadrature {
    /// The 3-point rule on every triangle of `mesh`, or on the fan of
    /// sub-triangles `(x_K, σ)` for polygonal cells.
    pub fn on_mesh(mesh: &Mesh) -> Quadrature {
        let mut b = QuadratureBuilder::default();
        for (k, cell) in mesh.cells().iter().enumerate() {
            b.start_cell();
            let v = |i: usize| mesh.vertices()[cell[i % cell.len()]];
            if cell.len() == 3 {
                b.push_triangle([v(0), v(1), v(2)]);
            } else {
                for j in 0..cell.len() {
                    b.push_triangle([mesh.cell_points()[k], v(j), v(j + 1)]);
                }
            }
        }
        b.finish()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_cells(&self) -> usize {
        self.cell_offsets.len() - 1
    }

    /// Indices of the points belonging to cell `k`.
    pub fn cell_range(&self, k: usize) -> std::ops::Range<usize> {
        self.cell_offsets[k]..self.cell_offsets[k + 1]
    }

    /// Owning cell of every point.
    pub fn cell_of_points(&self) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for k in 0..self.num_cells() {
            out[self.cell_range(k)].fill(k);
        }
        out
    }

    pub fn sample<F: Fn(Point) -> f64>(&self, f: F) -> Vec<f64> {
        self.points.iter().map(|&p| f(p)).collect()
    }

    pub fn sample_vec<F: Fn(Point) -> Point>(&self, f: F) -> Vec<Point> {
        self.points.iter().map(|&p| f(p)).collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_norm_vec(&self, values: &[Point]) -> f64 {
        assert_eq!(values.len(), self.len());
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * (v[0] * v[0] + v[1] * v[1]))
            .sum::<f64>()
            .sqrt()
    }

    /// Per-cell integrals of a sampled field.
    pub fn cell_integrals(&self, values: &[f64]) -> Vec<f64> {
        (0..self.num_cells())
            .map(|k| {
                self.cell_range(k)
                    .map(|q| self.weights[q] * values[q])
                    .sum()
            })
            .collect()
    }

    /// Per-cell sums of the weights.
    pub fn cell_measures(&self) -> Vec<f64> {
        (0..self.num_cells())
            .map(|k| self.weights[self.cell_range(k)].iter().sum())
            .collect()
    }
}

/// A DOF vector of some gradient discretisation.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunction {
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(values: Vec<f64>) -> Self {
        DiscreteFunction { values }
    }

    pub fn zeros(n: usize) -> Self {
        DiscreteFunction {
            values: vec![0.0; n],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: f64, other: &DiscreteFunction) -> DiscreteFunction {
        DiscreteFunction::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        )
    }
}

impl From<Vec<f64>> for DiscreteFunction {
    fn from(values: Vec<f64>) -> Self {
        DiscreteFunction::new(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityMeasures {
    /// Discrete Poincaré constant.
    pub coercivity: f64,
    /// Interpolation error of the test function (least-squares upper bound,
    /// within a factor √2 of the true minimum).
    pub consistency: f64,
    /// Limit-conformity defect of the flux.
    pub limit_conformity: f64,
}

#[derive(Debug, Clone)]
pub struct GradientDiscretisation {
    pub(crate) kind: SchemeKind,
    pub(crate) mesh: Arc<Mesh>,
    pub(crate) dof_count: usize,
    pub(crate) quadrature: Quadrature,
    pub(crate) pi: SparseMatrix,
    pub(crate) grad: [SparseMatrix; 2],
    pub(crate) one: DiscreteFunction,
    pub(crate) average_row: Vec<f64>,
}

/// The quality measures are diagnostics; their Gram solves stop short of the
/// roundoff floor that ill-conditioned schemes hit near 1e-12.
const QUALITY_SOLVE: SolverOptions = SolverOptions {
    rel_tol: 1e-10,
    max_iter: None,
};

impl GradientDiscretisation {
    pub(crate) fn assemble(
        kind: SchemeKind,
        mesh: Arc<Mesh>,
        dof_count: usize,
        quadrature: Quadrature,
        pi: SparseMatrix,
        grad: [SparseMatrix; 2],
        one: Vec<f64>,
    ) -> Self {
        let area = mesh.area();
        let average_row = pi
            .tmatvec(quadrature.weights())
            .into_iter()
            .map(|v| v / area)
            .collect();
        GradientDiscretisation {
            kind,
            mesh,
            dof_count,
            quadrature,
            pi,
            grad,
            one: DiscreteFunction::new(one),
            average_row,
        }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    /// `Π_D` as a (quadrature points × DOFs) matrix.
    pub fn pi(&self) -> &SparseMatrix {
        &self.pi
    }

    /// Components of `∇_D`, each a (quadrature points × DOFs) matrix.
    pub fn grad(&self) -> &[SparseMatrix; 2] {
        &self.grad
    }

    /// The element `1_D`.
    pub fn one(&self) -> &DiscreteFunction {
        &self.one
    }

    /// Linear functional `v ↦ ⨍ Π_D v`.
    pub fn average_row(&self) -> &[f64] {
        &self.average_row
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dof_count {
            return Err(Error::DimensionMismatch {
                expected: self.dof_count,
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn zeros(&self) -> DiscreteFunction {
        DiscreteFunction::zeros(self.dof_count)
    }

    /// Values of `Π_D v` at the quadrature points.
    pub fn reconstruct(&self, v: &DiscreteFunction) -> Result<Vec<f64>> {
        self.check(v.values())?;
        Ok(self.pi.matvec(v.values()))
    }

    /// Values of `∇_D v` at the quadrature points.
    pub fn reconstruct_gradient(&self, v: &DiscreteFunction) -> Result<Vec<Point>> {
        self.check(v.values())?;
        let gx = self.grad[0].matvec(v.values());
        let gy = self.grad[1].matvec(v.values());
        Ok(gx.into_iter().zip(gy).map(|(x, y)| [x, y]).collect())
    }

    /// `⨍_Ω Π_D v`.
    pub fn average(&self, v: &DiscreteFunction) -> Result<f64> {
        self.check(v.values())?;
        Ok(linalg::dot(&self.average_row, v.values()))
    }

    /// `(‖∇_D v‖² + |⨍ Π_D v|²)^{1/2}`.
    pub fn discrete_norm(&self, v: &DiscreteFunction) -> Result<f64> {
        let g = self.reconstruct_gradient(v)?;
        let avg = self.average(v)?;
        Ok((self.quadrature.l2_norm_vec(&g).powi(2) + avg * avg).sqrt())
    }

    /// Mass matrix `(Π_D e_i, Π_D e_j)`.
    pub fn mass_matrix(&self) -> SparseMatrix {
        SparseMatrix::weighted_gram(&self.pi, self.quadrature.weights(), &self.pi).into_symmetric()
    }

    /// `(∇_D e_i, ∇_D e_j)`.
    pub fn gradient_gram(&self) -> SparseMatrix {
        let w = self.quadrature.weights();
        SparseMatrix::weighted_gram(&self.grad[0], w, &self.grad[0])
            .add(&SparseMatrix::weighted_gram(&self.grad[1], w, &self.grad[1]))
            .into_symmetric()
    }

    /// The average term of the discrete norm, `m mᵀ` with `m` the averaging row.
    pub fn average_outer(&self, weight: f64) -> RankOne {
        RankOne {
            weight,
            vector: self.average_row.clone(),
        }
    }

    /// Load vector `∫ F Π_D e_i` of a field sampled at the quadrature points.
    pub fn load(&self, field: &[f64]) -> Vec<f64> {
        assert_eq!(field.len(), self.quadrature.len());
        let weighted: Vec<f64> = field
            .iter()
            .zip(self.quadrature.weights())
            .map(|(f, w)| f * w)
            .collect();
        self.pi.tmatvec(&weighted)
    }

    /// DOFs × cells matrix `B_{iK} = ∫_K Π_D e_i`, mapping a piecewise-constant
    /// field to its load vector.
    pub fn cell_load_matrix(&self) -> SparseMatrix {
        let q = &self.quadrature;
        let mut t = Vec::new();
        for k in 0..q.num_cells() {
            for p in q.cell_range(k) {
                for (i, v) in self.pi.row(p) {
                    t.push((i, k, v * q.weights()[p]));
                }
            }
        }
        SparseMatrix::from_triplets(self.dof_count, q.num_cells(), &t).expect("indices in range")
    }

    /// Coercivity constant `C_D`: the square root of the largest generalised
    /// eigenvalue of the Π-mass form against the discrete-norm form, by power
    /// iteration (200 steps or relative change below 1e-10).
    pub fn coercivity_constant(&self) -> Result<f64> {
        let mass = self.mass_matrix();
        let gram = self.gradient_gram();
        let avg = self.average_outer(1.0);
        let g = LowRankUpdate {
            matrix: &gram,
            update: &avg,
        };
        let n = self.dof_count;
        // Deterministic non-symmetric start vector.
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.7548).sin()).collect();
        let mut lambda = 0.0;
        for _ in 0..200 {
            let mv = mass.matvec(&v);
            let w = linalg::solve_spd(&g, &mv, QUALITY_SOLVE)
                .map_err(|e| Error::Singular(format!("discrete norm Gram matrix: {e}")))?;
            let wm = linalg::dot(&w, &mass.matvec(&w));
            let wg = linalg::dot(&w, &linalg::LinearOperator::apply(&g, &w));
            let next = wm / wg;
            let scale = linalg::norm_inf(&w);
            v = w.into_iter().map(|x| x / scale).collect();
            let done = (next - lambda).abs() <= 1e-10 * next.abs();
            lambda = next;
            if done {
                break;
            }
        }
        Ok(lambda.sqrt())
    }

    /// Least-squares interpolation error of a smooth function: minimises
    /// `‖Π_D w − φ‖² + ‖∇_D w − ∇φ‖²` and reports `‖Π_D w − φ‖ + ‖∇_D w − ∇φ‖`
    /// at the minimiser.
    pub fn consistency_error<F, G>(&self, phi: F, grad_phi: G) -> Result<f64>
    where
        F: Fn(Point) -> f64,
        G: Fn(Point) -> Point,
    {
        let q = &self.quadrature;
        let phi_q = q.sample(phi);
        let grad_q = q.sample_vec(grad_phi);
        let op = self.mass_matrix().add(&self.gradient_gram());
        let gx: Vec<f64> = grad_q.iter().map(|g| g[0]).collect();
        let gy: Vec<f64> = grad_q.iter().map(|g| g[1]).collect();
        let rhs: Vec<f64> = self
            .load(&phi_q)
            .into_iter()
            .zip(self.grad[0].tmatvec(&weighted(&gx, q.weights())))
            .zip(self.grad[1].tmatvec(&weighted(&gy, q.weights())))
            .map(|((a, b), c)| a + b + c)
            .collect();
        let w = DiscreteFunction::new(linalg::solve_spd(&op, &rhs, QUALITY_SOLVE)?);
        let pw = self.reconstruct(&w)?;
        let gw = self.reconstruct_gradient(&w)?;
        let e0: Vec<f64> = pw.iter().zip(&phi_q).map(|(a, b)| a - b).collect();
        let e1: Vec<Point> = gw
            .iter()
            .zip(&grad_q)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
            .collect();
        Ok(q.l2_norm(&e0) + q.l2_norm_vec(&e1))
    }

    /// Dual norm (with respect to `‖·‖_D`) of
    /// `w ↦ ∫ Π_D w div(flux) + ∇_D w · flux`, for a flux with zero normal trace.
    pub fn limit_conformity<F, G>(&self, flux: F, div_flux: G) -> Result<f64>
    where
        F: Fn(Point) -> Point,
        G: Fn(Point) -> f64,
    {
        let q = &self.quadrature;
        let flux_q = q.sample_vec(flux);
        let div_q = q.sample(div_flux);
        let fx: Vec<f64> = flux_q.iter().map(|g| g[0]).collect();
        let fy: Vec<f64> = flux_q.iter().map(|g| g[1]).collect();
        let l: Vec<f64> = self
            .load(&div_q)
            .into_iter()
            .zip(self.grad[0].tmatvec(&weighted(&fx, q.weights())))
            .zip(self.grad[1].tmatvec(&weighted(&fy, q.weights())))
            .map(|((a, b), c)| a + b + c)
            .collect();
        if linalg::norm2(&l) == 0.0 {
            return Ok(0.0);
        }
        let gram = self.gradient_gram();
        let avg = self.average_outer(1.0);
        let g = LowRankUpdate {
            matrix: &gram,
            update: &avg,
        };
        let x = linalg::solve_spd(&g, &l, QUALITY_SOLVE)
            .map_err(|e| Error::Singular(format!("discrete norm Gram matrix: {e}")))?;
        Ok(linalg::dot(&l, &x).max(0.0).sqrt())
    }

    /// `C_D`, `S_D(φ)` and `W_D(A∇φ)` in one call.
    pub fn quality_measures<F, G, H, D>(
        &self,
        phi: F,
        grad_phi: G,
        flux: H,
        div_flux: D,
    ) -> Result<QualityMeasures>
    where
        F: Fn(Point) -> f64,
        G: Fn(Point) -> Point,
        H: Fn(Point) -> Point,
        D: Fn(Point) -> f64,
    {
        Ok(QualityMeasures {
            coercivity: self.coercivity_constant()?,
            consistency: self.consistency_error(phi, grad_phi)?,
            limit_conformity: self.limit_conformity(flux, div_flux)?,
        })
    }
}

fn weighted(values: &[f64], weights: &[f64]) -> Vec<f64> {
    values.iter().zip(weights).map(|(v, w)| v * w).collect()
}
