//! Gradient discretisation methods for elliptic distributed optimal control
//! with pure Neumann boundary conditions.
//!
//! The crate is organised bottom-up: [`mesh`] builds polygonal meshes,
//! [`schemes`] turns them into [`GradientDiscretisation`]s, [`neumann`] solves
//! the state equation, [`control`] solves the optimality system by a primal-dual
//! active set method and [`postprocess`] measures errors and convergence rates.
//! [`experiment`] ties everything together for the manufactured test cases.

pub mod control;
pub mod experiment;
pub mod gd;
pub mod linalg;
pub mod mesh;
pub mod neumann;
pub mod postprocess;
pub mod schemes;

pub use control::{active_set_solve, ControlProblem, KktSolution, KktResidual, PiecewiseConstant};
pub use gd::{DiscreteFunction, GradientDiscretisation, Quadrature, QualityMeasures, QuadratureRule, SchemeKind};
pub use linalg::{RankOne, SparseMatrix};
pub use mesh::{DiagonalPattern, Mesh, Point, Rect};
pub use neumann::{solve_neumann, DiffusionField, NeumannProblem};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh file line {line}: {msg}")]
    MeshParse { line: usize, msg: String },
    #[error("{scheme} needs a triangular mesh, cell {cell} has {vertices} vertices")]
    NonTriangular {
        scheme: &'static str,
        cell: usize,
        vertices: usize,
    },
    #[error("entry ({row}, {col}) outside a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("iterative solver stopped after {iterations} iterations, relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("invalid problem data: {0}")]
    InvalidProblem(String),
    #[error("no sign change of the average map on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error(
        "active set iteration did not converge in {iterations} steps (last increment {:e})",
        .history.last().copied().unwrap_or(f64::NAN)
    )]
    ActiveSetNotConverged { iterations: usize, history: Vec<f64> },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
