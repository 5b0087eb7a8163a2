//! Distributed optimal control with box bounds `a ≤ u ≤ b` and a zero-average
//! constraint on the control, discretised by a gradient scheme for the state
//! and adjoint and by piecewise constants for the control.
//!
//! The discrete optimality system is solved by an active-set iteration in which
//! the adjoint equation carries a correction that drives the adjoint towards the
//! translate whose cellwise projection yields a zero-average control.

use std::sync::Arc;

use crate::gd::{DiscreteFunction, GradientDiscretisation};
use crate::linalg::{self, RankOne, SparseMatrix};
use crate::mesh::Point;
use crate::neumann::{assemble_stiffness, DiffusionField};
use crate::{Error, Result};

/// One value per mesh cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(values: Vec<f64>) -> Self {
        PiecewiseConstant { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Measure-weighted average.
    pub fn average(&self, measures: &[f64]) -> f64 {
        let total: f64 = measures.iter().sum();
        linalg::dot(&self.values, measures) / total
    }

    /// Membership in the discrete admissible set: bounds hold exactly and the
    /// average vanishes to `tol`.
    pub fn is_admissible(&self, measures: &[f64], a: f64, b: f64, tol: f64) -> bool {
        self.values.iter().all(|&v| a <= v && v <= b) && self.average(measures).abs() <= tol
    }

    /// The field sampled at the quadrature points of `gd`.
    pub fn to_quadrature(&self, gd: &GradientDiscretisation) -> Vec<f64> {
        gd.quadrature()
            .cell_of_points()
            .into_iter()
            .map(|k| self.values[k])
            .collect()
    }
}

impl From<Vec<f64>> for PiecewiseConstant {
    fn from(values: Vec<f64>) -> Self {
        PiecewiseConstant::new(values)
    }
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub gd: Arc<GradientDiscretisation>,
    pub diffusion: DiffusionField,
    /// `f` at the quadrature points.
    pub source: Vec<f64>,
    /// `y_d` at the quadrature points.
    pub target: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub rho: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl ControlProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F, Y>(
        gd: Arc<GradientDiscretisation>,
        diffusion: DiffusionField,
        source: F,
        target: Y,
        lower: f64,
        upper: f64,
        alpha: f64,
        rho: f64,
    ) -> Result<Self>
    where
        F: Fn(Point) -> f64,
        Y: Fn(Point) -> f64,
    {
        if !(lower < 0.0 && 0.0 < upper) {
            return Err(Error::InvalidProblem(format!(
                "bounds must satisfy a < 0 < b, got a = {lower}, b = {upper}"
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidProblem(format!("alpha must be positive, got {alpha}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidProblem(format!("rho must be positive, got {rho}")));
        }
        let q = gd.quadrature();
        let source = q.sample(source);
        let target = q.sample(target);
        let area = gd.mesh().area();
        for (name, field) in [("f", &source), ("y_d", &target)] {
            let mean = q.integrate(field) / area;
            if mean.abs() > 1e-8 * q.l2_norm(field) {
                log::warn!("{name} has discrete average {mean:e}");
            }
        }
        Ok(ControlProblem {
            gd,
            diffusion,
            source,
            target,
            lower,
            upper,
            alpha,
            rho,
            tolerance: 1e-10,
            max_iterations: 100,
        })
    }

    /// Subtracts the quadrature averages of `f` and `y_d`, so the discrete
    /// optimality system is compatible with zero-average states and controls.
    pub fn normalized(mut self) -> Self {
        let q = self.gd.quadrature();
        let area = self.gd.mesh().area();
        for field in [&mut self.source, &mut self.target] {
            let mean = q.integrate(field) / area;
            field.iter_mut().for_each(|v| *v -= mean);
        }
        self
    }

    pub fn cell_measures(&self) -> Vec<f64> {
        self.gd.quadrature().cell_measures()
    }
}

#[derive(Debug, Clone)]
pub struct KktSolution {
    pub state: DiscreteFunction,
    /// Adjoint translated to satisfy the zero-average projection condition.
    pub adjoint: DiscreteFunction,
    pub control: PiecewiseConstant,
    pub multiplier: PiecewiseConstant,
    /// Number of linear solves performed.
    pub iterations: usize,
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
    pub inactive: Vec<usize>,
    /// Relative increment after each iteration.
    pub history: Vec<f64>,
    /// The constant `c⋆` of the final adjoint translation `p − α c⋆ 1_D`.
    pub adjoint_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    pub state: f64,
    pub adjoint: f64,
    /// Most negative admissible directional derivative of the reduced cost.
    pub variational_inequality: f64,
}

/// Cellwise averages of a quadrature field.
pub fn proj_mesh(gd: &GradientDiscretisation, field: &[f64]) -> PiecewiseConstant {
    let q = gd.quadrature();
    let integrals = q.cell_integrals(field);
    let measures = q.cell_measures();
    PiecewiseConstant::new(integrals.iter().zip(&measures).map(|(i, m)| i / m).collect())
}

pub fn proj_mesh_fn<F: Fn(Point) -> f64>(gd: &GradientDiscretisation, f: F) -> PiecewiseConstant {
    proj_mesh(gd, &gd.quadrature().sample(f))
}

pub fn clamp(s: f64, a: f64, b: f64) -> f64 {
    b.min(a.max(s))
}

/// `Γ(c) = Σ w_i P_[a,b](φ_i + c)`: cell values with cell measures, or
/// quadrature samples with quadrature weights.
pub fn gamma(c: f64, phi: &[f64], weights: &[f64], a: f64, b: f64) -> f64 {
    phi.iter().zip(weights).map(|(p, w)| w * clamp(p + c, a, b)).sum()
}

/// Root `c⋆` of `Γ` by bisection, with `|Γ(c⋆)| ≤ tol · Σw · max(|a|, |b|, 1)`
/// (infinite bounds excluded from the scale).
pub fn find_cstar(phi: &[f64], weights: &[f64], a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a < 0.0 && 0.0 < b) {
        return Err(Error::InvalidProblem(format!("bounds must satisfy a < 0 < b, got [{a}, {b}]")));
    }
    if phi.is_empty() || phi.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: phi.len(),
        });
    }
    let g = |c: f64| gamma(c, phi, weights, a, b);
    let (min, max) = phi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let total: f64 = weights.iter().sum();
    let scale = [a.abs(), b.abs(), 1.0]
        .into_iter()
        .filter(|v| v.is_finite())
        .fold(1.0, f64::max);
    let target = tol * total * scale;

    let spread = (max - min).abs().max(1.0);
    let mut lo = if a.is_finite() { a - max + 1e-12 * spread } else { -1.0 - max };
    let mut hi = if b.is_finite() { b - min - 1e-12 * spread } else { 1.0 - min };
    let mut step = 1.0;
    for _ in 0..200 {
        if g(lo) <= 0.0 {
            break;
        }
        lo -= step;
        step *= 2.0;
    }
    step = 1.0;
    for _ in 0..200 {
        if g(hi) >= 0.0 {
            break;
        }
        hi += step;
        step *= 2.0;
    }
    let (glo, ghi) = (g(lo), g(hi));
    if !(glo <= 0.0 && ghi >= 0.0) {
        return Err(Error::NoBracket { lo, hi });
    }
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() <= target || mid == lo || mid == hi {
            return Ok(mid);
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn cell_projection(problem: &ControlProblem, p: &DiscreteFunction) -> Result<PiecewiseConstant> {
    let gd = &problem.gd;
    let field: Vec<f64> = gd.reconstruct(p)?.into_iter().map(|v| -v / problem.alpha).collect();
    Ok(proj_mesh(gd, &field))
}

/// Translates `p` to `p − α c⋆ 1_D` so that `P_[a,b](Proj(−Π_D p / α))` has zero
/// average. Returns the translated adjoint and `c⋆`.
pub fn shift_adjoint_proper(problem: &ControlProblem, p: &DiscreteFunction) -> Result<(DiscreteFunction, f64)> {
    let phi = cell_projection(problem, p)?;
    let c = find_cstar(phi.values(), &problem.cell_measures(), problem.lower, problem.upper, 1e-14)?;
    Ok((p.axpy(-problem.alpha * c, problem.gd.one()), c))
}

/// `P_[a,b](Proj(−Π_D p / α))`.
pub fn control_from_adjoint(problem: &ControlProblem, p: &DiscreteFunction) -> Result<PiecewiseConstant> {
    let phi = cell_projection(problem, p)?;
    Ok(PiecewiseConstant::new(
        phi.values()
            .iter()
            .map(|&v| clamp(v, problem.lower, problem.upper))
            .collect(),
    ))
}

/// Operators reused across active-set iterations.
struct Operators {
    stiffness: SparseMatrix,
    mass: SparseMatrix,
    /// `B_{iK} = ∫_K Π_D e_i`.
    cell_load: SparseMatrix,
    /// Rows of `Bᵀ`: the DOFs touching each cell.
    cell_load_t: SparseMatrix,
    average: RankOne,
    measures: Vec<f64>,
    source_load: Vec<f64>,
    target_load: Vec<f64>,
}

impl Operators {
    fn new(problem: &ControlProblem) -> Self {
        let gd = &problem.gd;
        let cell_load = gd.cell_load_matrix();
        Operators {
            stiffness: assemble_stiffness(gd, &problem.diffusion),
            mass: gd.mass_matrix(),
            cell_load_t: cell_load.transpose(),
            cell_load,
            average: gd.average_outer(1.0),
            measures: gd.quadrature().cell_measures(),
            source_load: gd.load(&problem.source),
            target_load: gd.load(&problem.target),
        }
    }

    /// `(Bᵀp)_K / |K|`, the cell averages of `Π_D p`.
    fn cell_averages(&self, p: &[f64]) -> Vec<f64> {
        self.cell_load_t
            .matvec(p)
            .into_iter()
            .zip(&self.measures)
            .map(|(v, m)| v / m)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CellState {
    Lower,
    Upper,
    Inactive,
}

/// Solves the linearised optimality system for one set of active cells.
///
/// The coupled `(y, p)` operator has the rank-one penalty `ρ m mᵀ` in both
/// diagonal blocks. The sparse part is factorised with one pinned DOF per block
/// to make it invertible, and the pins are traded for the penalty by a rank-4
/// Woodbury correction.
fn linear_step(
    problem: &ControlProblem,
    ops: &Operators,
    sets: &[CellState],
    correction: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = problem.gd.dof_count();
    let (a, b, alpha, rho) = (problem.lower, problem.upper, problem.alpha, problem.rho);
    let m = &ops.average.vector;
    let pin = 0;
    let s_pin = ops.stiffness.get(pin, pin).max(f64::MIN_POSITIVE);
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * ops.stiffness.nnz() + ops.mass.nnz() + 2);
    for (r, c, v) in ops.stiffness.triplets() {
        t.push((r, c, v));
        t.push((n + r, n + c, v));
    }
    t.push((pin, pin, s_pin));
    t.push((n + pin, n + pin, s_pin));
    for (r, c, v) in ops.mass.triplets() {
        t.push((n + r, c, -v));
    }
    let mut active_control = vec![0.0; sets.len()];
    for (k, s) in sets.iter().enumerate() {
        match s {
            CellState::Lower => active_control[k] = a,
            CellState::Upper => active_control[k] = b,
            CellState::Inactive => {
                // B e_K (1/(α|K|)) (Bᵀ p)_K moved to the left-hand side.
                let col: Vec<(usize, f64)> = ops.cell_load_t.row(k).collect();
                let s = 1.0 / (alpha * ops.measures[k]);
                for &(i, bi) in &col {
                    for &(j, bj) in &col {
                        t.push((i, n + j, s * bi * bj));
                    }
                }
            }
        }
    }
    let lu = linalg::SparseLu::new(&SparseMatrix::from_triplets(2 * n, 2 * n, &t)?)?;

    let mut rhs = vec![0.0; 2 * n];
    let bu = ops.cell_load.matvec(&active_control);
    for i in 0..n {
        rhs[i] = bu[i] + ops.source_load[i];
        rhs[n + i] = -ops.target_load[i] + rho * correction * m[i];
    }
    // Low-rank part U Vᵀ with columns (m in y), (m in p), (pin in y), (pin in p).
    let block = |offset: usize, v: &[f64], scale: f64| -> Vec<f64> {
        let mut out = vec![0.0; 2 * n];
        out[offset..offset + n].iter_mut().zip(v).for_each(|(o, x)| *o = scale * x);
        out
    };
    let mut e = vec![0.0; n];
    e[pin] = 1.0;
    let v_cols = [block(0, m, 1.0), block(n, m, 1.0), block(0, &e, 1.0), block(n, &e, 1.0)];
    let u_cols = [block(0, m, rho), block(n, m, rho), block(0, &e, -s_pin), block(n, &e, -s_pin)];
    let mut columns = vec![rhs];
    columns.extend(u_cols.iter().cloned());
    let solved = lu.solve_many(&columns)?;
    let (z, zu) = (&solved[0], &solved[1..]);
    let capacitance: Vec<Vec<f64>> = v_cols
        .iter()
        .enumerate()
        .map(|(i, v)| {
            zu.iter()
                .enumerate()
                .map(|(j, w)| linalg::dot(v, w) + if i == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let vz: Vec<f64> = v_cols.iter().map(|v| linalg::dot(v, z)).collect();
    let w = linalg::solve_dense(&capacitance, &vz)?;
    let mut x = z.clone();
    for (wj, col) in w.iter().zip(zu) {
        x.iter_mut().zip(col).for_each(|(xi, c)| *xi -= wj * c);
    }
    Ok((x[..n].to_vec(), x[n..].to_vec()))
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff = new.iter().zip(old).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    diff / linalg::norm_inf(old).max(linalg::norm_inf(new)).max(1e-14)
}

/// Active-set iteration from `u = μ = 0`. Each step fixes the cells where the
/// previous `u + μ` lies below `a` or above `b`, solves the coupled state and
/// adjoint equations with the inactive control eliminated, and stops when the
/// relative sup-norm increments of `u` and `Π_D p` fall below the tolerance.
pub fn active_set_solve(problem: &ControlProblem) -> Result<KktSolution> {
    let gd = &problem.gd;
    let ops = Operators::new(problem);
    let nc = gd.mesh().num_cells();
    let area = gd.mesh().area();
    let (a, b, alpha) = (problem.lower, problem.upper, problem.alpha);

    let mut u = vec![0.0; nc];
    let mut mu = vec![0.0; nc];
    let mut p = vec![0.0; gd.dof_count()];
    let mut pi_p = vec![0.0; gd.quadrature().len()];
    let mut history = Vec::new();

    for iteration in 1..=problem.max_iterations {
        let sets: Vec<CellState> = u
            .iter()
            .zip(&mu)
            .map(|(u, m)| {
                let s = u + m;
                if s < a {
                    CellState::Lower
                } else if s > b {
                    CellState::Upper
                } else {
                    CellState::Inactive
                }
            })
            .collect();
        let prev_avg = ops.cell_averages(&p);
        let clamped: f64 = prev_avg
            .iter()
            .zip(&ops.measures)
            .map(|(v, m)| m * clamp(-v / alpha, a, b))
            .sum::<f64>()
            / area;
        let correction = linalg::dot(&ops.average.vector, &p) - clamped;

        let (y_new, p_new) = linear_step(problem, &ops, &sets, correction)?;
        let avg = ops.cell_averages(&p_new);
        let u_new: Vec<f64> = sets
            .iter()
            .zip(&avg)
            .map(|(s, v)| match s {
                CellState::Lower => a,
                CellState::Upper => b,
                CellState::Inactive => -v / alpha,
            })
            .collect();
        let mu_new: Vec<f64> = avg.iter().zip(&u_new).map(|(v, u)| -(v / alpha + u)).collect();
        let pi_new = gd.pi().matvec(&p_new);
        let change = relative_change(&u_new, &u).max(relative_change(&pi_new, &pi_p));
        history.push(change);
        log::debug!("active set iteration {iteration}: increment {change:e}");
        u = u_new;
        mu = mu_new;
        p = p_new;
        pi_p = pi_new;

        if change <= problem.tolerance {
            let pick = |want: CellState| -> Vec<usize> {
                sets.iter()
                    .enumerate()
                    .filter(|(_, s)| **s == want)
                    .map(|(k, _)| k)
                    .collect()
            };
            let (adjoint, shift) = shift_adjoint_proper(problem, &DiscreteFunction::new(p))?;
            return Ok(KktSolution {
                state: DiscreteFunction::new(y_new),
                adjoint,
                control: PiecewiseConstant::new(u),
                multiplier: PiecewiseConstant::new(mu),
                iterations: iteration,
                active_lower: pick(CellState::Lower),
                active_upper: pick(CellState::Upper),
                inactive: pick(CellState::Inactive),
                history,
                adjoint_shift: shift,
            });
        }
    }
    Err(Error::ActiveSetNotConverged {
        iterations: problem.max_iterations,
        history,
    })
}

/// Residuals of the penalised optimality system at `sol`:
/// the sup-norms of the state and adjoint equation residuals over the DOF
/// basis, and the most negative derivative of the reduced cost along an
/// admissible exchange of control mass between two cells (0 if none).
pub fn kkt_residual(problem: &ControlProblem, sol: &KktSolution) -> Result<KktResidual> {
    let gd = &problem.gd;
    let ops = Operators::new(problem);
    let (a, b, alpha, rho) = (problem.lower, problem.upper, problem.alpha, problem.rho);
    let y = sol.state.values();
    let p = sol.adjoint.values();
    if y.len() != gd.dof_count() || p.len() != gd.dof_count() {
        return Err(Error::DimensionMismatch {
            expected: gd.dof_count(),
            got: y.len().min(p.len()),
        });
    }
    let u = sol.control.values();
    let m = &ops.average.vector;

    let bu = ops.cell_load.matvec(u);
    let ky = ops.stiffness.matvec(y);
    let my = linalg::dot(m, y);
    let state = (0..y.len())
        .map(|i| (ky[i] + rho * my * m[i] - bu[i] - ops.source_load[i]).abs())
        .fold(0.0, f64::max);

    let avg_u = control_from_adjoint(problem, &sol.adjoint)?.average(&ops.measures);
    let kp = ops.stiffness.matvec(p);
    let massy = ops.mass.matvec(y);
    let adjoint = (0..p.len())
        .map(|i| (kp[i] + rho * avg_u * m[i] - massy[i] + ops.target_load[i]).abs())
        .fold(0.0, f64::max);

    let cells = ops.cell_averages(p);
    let g: Vec<f64> = cells.iter().zip(u).map(|(c, u)| c + alpha * u).collect();
    let slack = 1e-12 * [a.abs(), b.abs(), 1.0].into_iter().filter(|v| v.is_finite()).fold(1.0, f64::max);
    let can_increase = g
        .iter()
        .zip(u)
        .filter(|(_, &u)| u < b - slack)
        .map(|(g, _)| *g)
        .fold(f64::INFINITY, f64::min);
    let can_decrease = g
        .iter()
        .zip(u)
        .filter(|(_, &u)| u > a + slack)
        .map(|(g, _)| *g)
        .fold(f64::NEG_INFINITY, f64::max);
    let vi = (can_increase - can_decrease).min(0.0);
    Ok(KktResidual {
        state,
        adjoint,
        variational_inequality: if vi.is_nan() { 0.0 } else { vi },
    })
}
