//! Error measurement against exact solutions: the scheme-dependent
//! interpolant `w_M`, post-processed controls, relative errors and
//! experimental orders of convergence.

use std::sync::Arc;

use crate::control::{clamp, find_cstar, ControlProblem, KktSolution};
use crate::gd::{DiscreteFunction, GradientDiscretisation, Quadrature, SchemeKind};
use crate::mesh::{Mesh, Point};
use crate::Result;

type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// `w_M` at the quadrature points: `w` itself for the finite element schemes,
/// `w(x̄_K)` on each cell for HMM and `w(x̄_σ)` on each diamond for mass-lumped
/// ncP1.
pub fn interpolant_w_mesh<F: Fn(Point) -> f64>(gd: &GradientDiscretisation, w: F) -> Vec<f64> {
    let q = gd.quadrature();
    let mesh = gd.mesh();
    match gd.kind() {
        SchemeKind::ConformingP1 | SchemeKind::NonconformingP1 => q.sample(w),
        SchemeKind::Hmm => {
            let at: Vec<f64> = (0..mesh.num_cells()).map(|k| w(mesh.centroid(k))).collect();
            q.cell_of_points().into_iter().map(|k| at[k]).collect()
        }
        SchemeKind::MassLumpedP1 => {
            // Each quadrature point lies in one diamond, identified by the
            // single face DOF of its row of Π_D.
            (0..q.len())
                .map(|i| {
                    let (face, _) = gd.pi().row(i).next().expect("one entry per row");
                    w(mesh.faces()[face].midpoint)
                })
                .collect()
        }
    }
}

/// Exact optimal state, adjoint and control of a manufactured problem, with
/// `ū = P_[a,b](−p̄/α + c̄)`.
#[derive(Clone)]
pub struct ExactSolution {
    pub state: ScalarFn,
    pub state_grad: VectorFn,
    pub adjoint: ScalarFn,
    pub adjoint_grad: VectorFn,
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    pub cbar: f64,
    /// `‖ȳ‖, ‖∇ȳ‖, ‖p̄‖, ‖∇p̄‖, ‖ū‖` on the reference quadrature.
    pub norms: [f64; 5],
}

impl std::fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactSolution")
            .field("alpha", &self.alpha)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("cbar", &self.cbar)
            .field("norms", &self.norms)
            .finish_non_exhaustive()
    }
}

impl ExactSolution {
    /// Finds `c̄` and the reference norms on `reference`, which should be much
    /// finer than any mesh the solution is compared against. `p̄` must have
    /// zero average.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state: ScalarFn,
        state_grad: VectorFn,
        adjoint: ScalarFn,
        adjoint_grad: VectorFn,
        alpha: f64,
        lower: f64,
        upper: f64,
        reference: &Quadrature,
    ) -> Result<Self> {
        let phi: Vec<f64> = reference.sample(|x| -adjoint(x) / alpha);
        let cbar = find_cstar(&phi, reference.weights(), lower, upper, 1e-13)?;
        let mut exact = ExactSolution {
            state,
            state_grad,
            adjoint,
            adjoint_grad,
            alpha,
            lower,
            upper,
            cbar,
            norms: [0.0; 5],
        };
        let s = &exact;
        exact.norms = [
            reference.l2_norm(&reference.sample(|x| (s.state)(x))),
            reference.l2_norm_vec(&reference.sample_vec(|x| (s.state_grad)(x))),
            reference.l2_norm(&reference.sample(|x| (s.adjoint)(x))),
            reference.l2_norm_vec(&reference.sample_vec(|x| (s.adjoint_grad)(x))),
            reference.l2_norm(&reference.sample(|x| s.control(x))),
        ];
        Ok(exact)
    }

    pub fn control(&self, x: Point) -> f64 {
        clamp(-(self.adjoint)(x) / self.alpha + self.cbar, self.lower, self.upper)
    }
}

/// `(ũ, ũ_h)` at the quadrature points, with `ũ = P_[a,b](−p̄_M/α)` for `p̄`
/// translated to the average of `Π_D p_D`, and `ũ_h = P_[a,b](−Π_D p_D/α)`.
pub fn postprocessed_controls(
    problem: &ControlProblem,
    exact: &ExactSolution,
    adjoint: &DiscreteFunction,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let gd = &problem.gd;
    let shift = adjoint_shift(gd, exact, adjoint)?;
    let (a, b, alpha) = (problem.lower, problem.upper, problem.alpha);
    let pm = interpolant_w_mesh(gd, |x| (exact.adjoint)(x) + shift);
    let tilde = pm.iter().map(|v| clamp(-v / alpha, a, b)).collect();
    let tilde_h = gd.reconstruct(adjoint)?.iter().map(|v| clamp(-v / alpha, a, b)).collect();
    Ok((tilde, tilde_h))
}

/// Constant making the quadrature average of `p̄ + shift` equal that of `Π_D p_D`.
fn adjoint_shift(gd: &GradientDiscretisation, exact: &ExactSolution, p: &DiscreteFunction) -> Result<f64> {
    let q = gd.quadrature();
    let area = gd.mesh().area();
    let exact_avg = q.integrate(&q.sample(|x| (exact.adjoint)(x))) / area;
    Ok(gd.average(p)? - exact_avg)
}

/// One mesh of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    /// `err(ȳ), err(∇ȳ), err(p̄), err(∇p̄), err(ū), err(ũ)`.
    pub errors: [f64; 6],
    /// Average of the computed control.
    pub u_avg: f64,
    /// Centroid-rule average of the (unnormalised) source.
    pub f_avg: f64,
    /// Average of the reconstructed state.
    pub y_avg: f64,
    pub iterations: usize,
    /// `−⨍Π_D p_D / α`: the discrete counterpart of `c̄` for the proper adjoint.
    pub cstar: f64,
    pub failure: Option<String>,
}

impl ConvergenceRow {
    pub fn failed(h: f64, f_avg: f64, message: String) -> Self {
        ConvergenceRow {
            h,
            errors: [f64::NAN; 6],
            u_avg: f64::NAN,
            f_avg,
            y_avg: f64::NAN,
            iterations: 0,
            cstar: f64::NAN,
            failure: Some(message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// `c̄` of the exact control.
    pub cbar: f64,
}

impl ConvergenceReport {
    /// Orders between consecutive rows, column by column; `orders()[i]`
    /// compares rows `i` and `i + 1`.
    pub fn orders(&self) -> Vec<[f64; 6]> {
        self.rows
            .windows(2)
            .map(|w| std::array::from_fn(|c| eoc_pair(w[0].errors[c], w[1].errors[c], w[0].h, w[1].h)))
            .collect()
    }

    pub fn last_orders(&self) -> Option<[f64; 6]> {
        self.orders().last().copied()
    }
}

fn eoc_pair(e0: f64, e1: f64, h0: f64, h1: f64) -> f64 {
    (e0 / e1).ln() / (h0 / h1).ln()
}

/// `log(e_i/e_{i+1}) / log(h_i/h_{i+1})` for consecutive entries.
pub fn eoc(errors: &[f64], h: &[f64]) -> Vec<f64> {
    assert_eq!(errors.len(), h.len());
    (1..errors.len())
        .map(|i| eoc_pair(errors[i - 1], errors[i], h[i - 1], h[i]))
        .collect()
}

/// `(1/|Ω|) Σ_K |K| f(x̄_K)`.
pub fn centroid_average<F: Fn(Point) -> f64>(mesh: &Mesh, f: F) -> f64 {
    (0..mesh.num_cells())
        .map(|k| mesh.cell_measure(k) * f(mesh.centroid(k)))
        .sum::<f64>()
        / mesh.area()
}

/// Relative errors and diagnostics of one computed solution. `h` is the
/// nominal mesh size reported in the row and `f_avg` the source diagnostic.
pub fn error_report(
    problem: &ControlProblem,
    sol: &KktSolution,
    exact: &ExactSolution,
    h: f64,
    f_avg: f64,
) -> Result<ConvergenceRow> {
    let gd = &problem.gd;
    let q = gd.quadrature();
    let [ny, ngy, np, ngp, nu] = exact.norms;

    let rel = |values: Vec<f64>, reference: Vec<f64>, norm: f64| -> f64 {
        let diff: Vec<f64> = values.iter().zip(&reference).map(|(a, b)| a - b).collect();
        q.l2_norm(&diff) / norm
    };
    let rel_vec = |values: Vec<Point>, reference: Vec<Point>, norm: f64| -> f64 {
        let diff: Vec<Point> = values
            .iter()
            .zip(&reference)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
            .collect();
        q.l2_norm_vec(&diff) / norm
    };

    let shift = adjoint_shift(gd, exact, &sol.adjoint)?;
    let err_y = rel(gd.reconstruct(&sol.state)?, interpolant_w_mesh(gd, |x| (exact.state)(x)), ny);
    let err_gy = rel_vec(
        gd.reconstruct_gradient(&sol.state)?,
        q.sample_vec(|x| (exact.state_grad)(x)),
        ngy,
    );
    let err_p = rel(
        gd.reconstruct(&sol.adjoint)?,
        interpolant_w_mesh(gd, |x| (exact.adjoint)(x) + shift),
        np,
    );
    let err_gp = rel_vec(
        gd.reconstruct_gradient(&sol.adjoint)?,
        q.sample_vec(|x| (exact.adjoint_grad)(x)),
        ngp,
    );
    let err_u = rel(sol.control.to_quadrature(gd), q.sample(|x| exact.control(x)), nu);
    let (tilde, tilde_h) = postprocessed_controls(problem, exact, &sol.adjoint)?;
    let err_pu = rel(tilde_h, tilde, nu);

    Ok(ConvergenceRow {
        h,
        errors: [err_y, err_gy, err_p, err_gp, err_u, err_pu],
        u_avg: sol.control.average(&problem.cell_measures()),
        f_avg,
        y_avg: gd.average(&sol.state)?,
        iterations: sol.iterations,
        cstar: -gd.average(&sol.adjoint)? / problem.alpha,
        failure: None,
    })
}
