//! Penalised gradient scheme for `−div(A∇ψ) = F` with homogeneous Neumann
//! conditions. The zero-average constraint on `ψ` is imposed by adding
//! `ρ (⨍Π_D ψ)(⨍Π_D w)` to the bilinear form, which for zero-average `F`
//! gives the same solution for every `ρ > 0`.

use std::fmt;
use std::sync::Arc;

use crate::gd::{DiscreteFunction, GradientDiscretisation};
use crate::linalg::{self, LowRankUpdate, RankOne, SolverOptions, SparseMatrix};
use crate::mesh::Point;
use crate::{Error, Result};

pub type Tensor = [[f64; 2]; 2];

/// Matrix-valued diffusion coefficient with caller-supplied ellipticity bounds.
#[derive(Clone)]
pub struct DiffusionField {
    field: Arc<dyn Fn(Point) -> Tensor + Send + Sync>,
    lower: f64,
    upper: f64,
}

impl DiffusionField {
    pub fn new<F>(field: F, lower: f64, upper: f64) -> Result<Self>
    where
        F: Fn(Point) -> Tensor + Send + Sync + 'static,
    {
        if !(lower > 0.0 && upper >= lower && upper.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "ellipticity bounds must satisfy 0 < lower <= upper, got ({lower}, {upper})"
            )));
        }
        Ok(DiffusionField {
            field: Arc::new(field),
            lower,
            upper,
        })
    }

    /// `A = c·Id`.
    pub fn scaled_identity(c: f64) -> Result<Self> {
        Self::new(move |_| [[c, 0.0], [0.0, c]], c, c)
    }

    pub fn eval(&self, x: Point) -> Tensor {
        (self.field)(x)
    }

    pub fn apply(&self, x: Point, v: Point) -> Point {
        let a = self.eval(x);
        [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }
}

impl fmt::Debug for DiffusionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionField")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish_non_exhaustive()
    }
}

/// Matrix of `a_D(u, v) = ∫ A∇_D u · ∇_D v`, with `A` sampled at the
/// quadrature points.
pub fn assemble_stiffness(gd: &GradientDiscretisation, a: &DiffusionField) -> SparseMatrix {
    let q = gd.quadrature();
    let tensors: Vec<Tensor> = q.points().iter().map(|&x| a.eval(x)).collect();
    let mut total: Option<SparseMatrix> = None;
    for r in 0..2 {
        for s in 0..2 {
            let w: Vec<f64> = tensors.iter().zip(q.weights()).map(|(t, w)| t[r][s] * w).collect();
            if w.iter().all(|&x| x == 0.0) {
                continue;
            }
            let term = SparseMatrix::weighted_gram(&gd.grad()[r], &w, &gd.grad()[s]);
            total = Some(match total {
                Some(t) => t.add(&term),
                None => term,
            });
        }
    }
    total
        .unwrap_or_else(|| SparseMatrix::zeros(gd.dof_count(), gd.dof_count()))
        .into_symmetric()
}

/// The penalty `ρ m mᵀ`, where `m·v = ⨍ Π_D v`.
pub fn assemble_penalty(gd: &GradientDiscretisation, rho: f64) -> RankOne {
    gd.average_outer(rho)
}

#[derive(Debug, Clone)]
pub struct NeumannProblem<'a> {
    pub gd: &'a GradientDiscretisation,
    pub diffusion: &'a DiffusionField,
    /// `F` sampled at the quadrature points.
    pub source: Vec<f64>,
    pub rho: f64,
}

impl<'a> NeumannProblem<'a> {
    /// Samples `source` on the quadrature layout; `ρ = 1`.
    pub fn new<F: Fn(Point) -> f64>(gd: &'a GradientDiscretisation, diffusion: &'a DiffusionField, source: F) -> Self {
        NeumannProblem {
            gd,
            diffusion,
            source: gd.quadrature().sample(source),
            rho: 1.0,
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    /// Subtracts the quadrature average of the source.
    pub fn normalized(mut self) -> Self {
        let q = self.gd.quadrature();
        let mean = q.integrate(&self.source) / self.gd.mesh().area();
        self.source.iter_mut().for_each(|f| *f -= mean);
        self
    }
}

/// Solves `(K + ρ m mᵀ) ψ = (∫ F Π_D e_i)_i` by preconditioned CG.
pub fn solve_neumann(problem: &NeumannProblem<'_>) -> Result<DiscreteFunction> {
    let gd = problem.gd;
    if !(problem.rho > 0.0) {
        return Err(Error::InvalidProblem(format!("penalty weight must be positive, got {}", problem.rho)));
    }
    if problem.source.len() != gd.quadrature().len() {
        return Err(Error::DimensionMismatch {
            expected: gd.quadrature().len(),
            got: problem.source.len(),
        });
    }
    let q = gd.quadrature();
    let mean = q.integrate(&problem.source) / gd.mesh().area();
    let norm = q.l2_norm(&problem.source);
    if mean.abs() > 1e-8 * norm {
        log::warn!("Neumann source has average {mean:e}; the solution will carry a mean of average/rho");
    }
    let stiffness = assemble_stiffness(gd, problem.diffusion);
    let penalty = assemble_penalty(gd, problem.rho);
    let op = LowRankUpdate {
        matrix: &stiffness,
        update: &penalty,
    };
    let load = gd.load(&problem.source);
    let psi = linalg::solve_spd(&op, &load, SolverOptions::default())?;
    Ok(DiscreteFunction::new(psi))
}

/// `v − (⨍Π_D v − target)·1_D`.
pub fn shift_to_average(gd: &GradientDiscretisation, v: &DiscreteFunction, target: f64) -> Result<DiscreteFunction> {
    let avg = gd.average(v)?;
    Ok(v.axpy(-(avg - target), gd.one()))
}

/// `(‖Π_D v − ψ‖, ‖∇_D v − ∇ψ‖)` on the scheme's quadrature.
pub fn error_norms<F, G>(gd: &GradientDiscretisation, v: &DiscreteFunction, exact: F, grad: G) -> Result<(f64, f64)>
where
    F: Fn(Point) -> f64,
    G: Fn(Point) -> Point,
{
    let q = gd.quadrature();
    let pv = gd.reconstruct(v)?;
    let gv = gd.reconstruct_gradient(v)?;
    let e0: Vec<f64> = pv.iter().zip(q.points()).map(|(p, &x)| p - exact(x)).collect();
    let e1: Vec<Point> = gv
        .iter()
        .zip(q.points())
        .map(|(g, &x)| {
            let d = grad(x);
            [g[0] - d[0], g[1] - d[1]]
        })
        .collect();
    Ok((q.l2_norm(&e0), q.l2_norm_vec(&e1)))
}
