//! Sparse matrices and the linear solvers used by the schemes.
//!
//! Symmetric positive definite systems go through a Jacobi-preconditioned
//! conjugate gradient. The nonsymmetric block systems of the active-set loop are
//! factorised with a sparse LU.

use faer::sparse::{SparseColMat, Triplet};

use crate::{Error, Result};

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            symmetric: false,
        }
    }

    /// Assembles from `(row, col, value)` triplets; duplicates are summed and
    /// entries within a row are sorted by column.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, _) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::IndexOutOfRange {
                    row: r,
                    col: c,
                    rows,
                    cols,
                });
            }
            counts[r + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols_raw = vec![0usize; triplets.len()];
        let mut vals_raw = vec![0f64; triplets.len()];
        for &(r, c, v) in triplets {
            cols_raw[next[r]] = c;
            vals_raw[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..rows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols_raw[k], vals_raw[k])));
            scratch.sort_by_key(|e| e.0);
            for &(c, v) in scratch.iter() {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        })
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t).expect("indices in range")
    }

    /// Marks the matrix as symmetric. Debug builds verify the claim.
    pub fn into_symmetric(mut self) -> Self {
        debug_assert!(self.rows == self.cols);
        debug_assert!(
            self.asymmetry() <= 1e-12 * self.max_abs().max(f64::MIN_POSITIVE),
            "matrix flagged symmetric is not"
        );
        self.symmetric = true;
        self
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column/value pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, &t).expect("indices in range")
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec: operand length");
        assert_eq!(y.len(), self.rows, "matvec: output length");
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `y = Aᵀ x`.
    pub fn tmatvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "tmatvec: operand length");
        let mut y = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr != 0.0 {
                for (c, v) in self.row(r) {
                    y[c] += v * xr;
                }
            }
        }
        y
    }

    /// `Aᵀ diag(w) B` for two matrices sharing their row space.
    pub fn weighted_gram(a: &SparseMatrix, weights: &[f64], b: &SparseMatrix) -> Self {
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rows, weights.len());
        let mut t = Vec::new();
        for (q, &w) in weights.iter().enumerate() {
            for (i, ai) in a.row(q) {
                for (j, bj) in b.row(q) {
                    t.push((i, j, w * ai * bj));
                }
            }
        }
        Self::from_triplets(a.cols, b.cols, &t).expect("indices in range")
    }

    /// Entry-wise sum of two matrices of equal shape.
    pub fn add(&self, other: &SparseMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let t: Vec<_> = self.triplets().chain(other.triplets()).collect();
        let mut out = Self::from_triplets(self.rows, self.cols, &t).expect("indices in range");
        out.symmetric = self.symmetric && other.symmetric;
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }
}

/// Rank-one matrix `weight · v vᵀ`, kept in factored form since `v` is dense.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    pub weight: f64,
    pub vector: Vec<f64>,
}

impl RankOne {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let s = self.weight * dot(&self.vector, x);
        self.vector.iter().map(|v| s * v).collect()
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let n = self.vector.len();
        let mut t = Vec::with_capacity(n * n);
        for (i, &vi) in self.vector.iter().enumerate() {
            for (j, &vj) in self.vector.iter().enumerate() {
                let x = self.weight * vi * vj;
                if x != 0.0 {
                    t.push((i, j, x));
                }
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
            .expect("indices in range")
            .into_symmetric()
    }
}

/// Square operator usable by [`solve_spd`].
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        assert_eq!(self.rows, self.cols, "operator must be square");
        self.rows
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        SparseMatrix::diagonal(self)
    }
}

/// Sparse matrix plus a rank-one term.
#[derive(Debug, Clone)]
pub struct LowRankUpdate<'a> {
    pub matrix: &'a SparseMatrix,
    pub update: &'a RankOne,
}

impl LinearOperator for LowRankUpdate<'_> {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec_into(x, y);
        let s = self.update.weight * dot(&self.update.vector, x);
        for (yi, vi) in y.iter_mut().zip(&self.update.vector) {
            *yi += s * vi;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.matrix
            .diagonal()
            .into_iter()
            .zip(&self.update.vector)
            .map(|(d, v)| d + self.update.weight * v * v)
            .collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub rel_tol: f64,
    /// Defaults to `20 n` when unset.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: 1e-12,
            max_iter: None,
        }
    }
}

/// Jacobi-preconditioned conjugate gradient for symmetric positive definite
/// operators. Returns `x` with `‖Ax − b‖ ≤ rel_tol ‖b‖` (checked on the true
/// residual, restarting when the recursive residual has drifted).
pub fn solve_spd<A: LinearOperator + ?Sized>(a: &A, b: &[f64], opts: SolverOptions) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let max_iter = opts.max_iter.unwrap_or(20 * n.max(1));
    let target = opts.rel_tol * bnorm;

    let mut ax = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = bnorm;
    // A handful of restarts cover loss of orthogonality on ill-conditioned systems.
    for _restart in 0..8 {
        a.apply_into(&x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        residual = norm2(&r);
        if residual <= target {
            return Ok(x);
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        while iterations < max_iter {
            iterations += 1;
            a.apply_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                return Err(Error::NotConverged {
                    iterations,
                    residual: residual / bnorm,
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            residual = norm2(&r);
            if residual <= 0.5 * target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if iterations >= max_iter {
            break;
        }
    }
    a.apply_into(&x, &mut ax);
    let true_res = norm2(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>());
    if true_res <= target {
        Ok(x)
    } else {
        Err(Error::NotConverged {
            iterations,
            residual: true_res.max(residual) / bnorm,
        })
    }
}

/// Sparse LU factorisation of a general square matrix, reusable across
/// right-hand sides.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.cols() });
        }
        let t: Vec<_> = a.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &t)
            .map_err(|e| Error::Singular(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::Singular(format!("{e:?}")))?;
        Ok(SparseLu { n, lu })
    }

    /// Solves for several right-hand sides at once.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if let Some(b) = rhs.iter().find(|b| b.len() != self.n) {
            return Err(Error::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let b = faer::Mat::<f64>::from_fn(self.n, rhs.len(), |i, j| rhs[j][i]);
        let x = faer::linalg::solvers::Solve::solve(&self.lu, &b);
        let out: Vec<Vec<f64>> = (0..rhs.len())
            .map(|j| (0..self.n).map(|i| x[(i, j)]).collect())
            .collect();
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Singular("LU solve produced non-finite values".into()));
        }
        Ok(out)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(&[b.to_vec()])?.pop().unwrap_or_default())
    }
}

/// Direct solve of a general square sparse system by LU with partial pivoting.
pub fn solve_lu(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch { expected: a.rows(), got: b.len() });
    }
    SparseLu::new(a)?.solve(b)
}

/// Solves a small dense system, given by rows, with partial-pivoting LU.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: a.len() });
    }
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[i][j]);
    let rhs = faer::Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let x = faer::linalg::solvers::Solve::solve(&m.partial_piv_lu(), &rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("dense solve produced non-finite values".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicates_are_summed() {
        let m = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0), (0, 0, 1.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 2.0);
    }

    #[test]
    fn identity_and_empty() {
        let id = SparseMatrix::identity(3);
        assert_eq!(id.matvec(&[1.0, -2.0, 3.5]), vec![1.0, -2.0, 3.5]);
        let z = SparseMatrix::from_triplets(3, 3, &[]).unwrap();
        assert_eq!(z.matvec(&[1.0, 2.0, 3.0]), vec![0.0; 3]);
    }

    #[test]
    fn out_of_range_triplet() {
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn cg_diagonal() {
        let x = solve_spd(&SparseMatrix::identity(4), &[1.0, 2.0, 3.0, 4.0], Default::default()).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0]);
        let d = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 4.0)]).unwrap();
        let x = solve_spd(&d, &[1.0, 2.0, 4.0], Default::default()).unwrap();
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-14);
        }
        assert_eq!(solve_spd(&d, &[0.0; 3], Default::default()).unwrap(), vec![0.0; 3]);
    }

    fn random_spd(n: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut s: f64 = (0..n).map(|k| m[k][i] * m[k][j]).sum();
                if i == j {
                    s += 1.0;
                }
                t.push((i, j, s));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap().into_symmetric()
    }

    #[test]
    fn cg_random_spd_residual() {
        let a = random_spd(10, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve_spd(&a, &b, Default::default()).unwrap();
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-12 * norm2(&b));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = random_spd(30, 3);
        let b = vec![1.0; 30];
        let err = solve_spd(
            &a,
            &b,
            SolverOptions {
                rel_tol: 1e-14,
                max_iter: Some(2),
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 2, .. }));
    }

    #[test]
    fn low_rank_update_operator() {
        let a = SparseMatrix::identity(3);
        let r = RankOne {
            weight: 2.0,
            vector: vec![1.0, 1.0, 0.0],
        };
        let op = LowRankUpdate {
            matrix: &a,
            update: &r,
        };
        assert_eq!(op.apply(&[1.0, 0.0, 0.0]), vec![3.0, 2.0, 0.0]);
        assert_eq!(op.diagonal(), vec![3.0, 3.0, 1.0]);
        let dense = a.add(&r.to_sparse());
        let x = solve_spd(&op, &[1.0, 2.0, 3.0], Default::default()).unwrap();
        let back = dense.matvec(&x);
        for (p, q) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_nonsymmetric() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]).unwrap();
        let x = solve_lu(&a, &[1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0 / 6.0).abs() < 1e-15 && (x[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn symmetric_matvec_is_self_adjoint(seed in 0u64..500, n in 2usize..12) {
            let a = random_spd(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let l = dot(&a.matvec(&x), &y);
            let r = dot(&x, &a.matvec(&y));
            proptest::prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()).max(1.0));
        }

        #[test]
        fn cg_reproduces_rhs(seed in 0u64..200, n in 2usize..15) {
            let a = random_spd(n, seed);
            let b: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sin()).collect();
            let x = solve_spd(&a, &b, Default::default()).unwrap();
            let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
            proptest::prop_assert!(norm2(&r) <= 1e-12 * norm2(&b));
        }
    }
}
