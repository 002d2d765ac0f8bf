//! Sparse direct solvers and a matrix-free conjugate gradient.
//!
//! Symmetric positive definite systems use a supernodal Cholesky
//! factorization with a fill-reducing ordering. The Newton step is solved
//! through a symmetric indefinite saddle point system with a regularized
//! LDLᵀ factorization and iterative refinement.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::linalg::solvers::Solve;
use faer::perm::PermRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, SparseColMatRef, SymbolicSparseColMatRef, Triplet};
use faer::{Conj, MatMut, Par, Side};

use crate::assembly::{dot, SparseSymOperator};
use crate::{Error, Result};

/// Reusable Cholesky factorization of a [`SparseSymOperator`].
#[derive(Debug, Clone)]
pub struct Factorization {
    dim: usize,
    // `None` for the 0-dimensional operator.
    llt: Option<Llt<usize, f64>>,
}

impl Factorization {
    pub fn factorize(a: &SparseSymOperator) -> Result<Self> {
        let dim = a.dim();
        if dim == 0 {
            return Ok(Self { dim, llt: None });
        }
        let symbolic =
            SymbolicSparseColMatRef::new_checked(dim, dim, a.row_ptr(), None, a.col_idx());
        let mat = SparseColMatRef::new(symbolic, a.values());
        let llt = Llt::try_new_with_symbolic(
            faer::sparse::linalg::solvers::SymbolicLlt::try_new(symbolic, Side::Lower)
                .map_err(|e| Error::Internal(format!("symbolic Cholesky failed: {e:?}")))?,
            mat,
            Side::Lower,
        )
        .map_err(|e| match e {
            faer::sparse::linalg::LltError::Numeric(
                faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index },
            ) => Error::NotPositiveDefinite { pivot: index },
            other => Error::Internal(format!("Cholesky factorization failed: {other:?}")),
        })?;
        Ok(Self {
            dim,
            llt: Some(llt),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, factorization has dimension {}",
                b.len(),
                self.dim
            )));
        }
        let mut x = b.to_vec();
        if let Some(llt) = &self.llt {
            llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.dim, 1));
        }
        Ok(x)
    }
}

/// General square sparse matrix assembled from triplets, factored by LU.
#[derive(Debug)]
pub struct SparseLu {
    dim: usize,
    lu: Option<Lu<usize, f64>>,
}

impl SparseLu {
    pub fn factorize(dim: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        if dim == 0 {
            return Ok(Self { dim, lu: None });
        }
        let triplets: Vec<Triplet<usize, usize, f64>> = entries
            .iter()
            .map(|&(row, col, val)| Triplet::new(row, col, val))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &triplets)
            .map_err(|e| Error::InvalidArgument(format!("bad sparse matrix: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::Internal(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { dim, lu: Some(lu) })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, matrix has dimension {}",
                b.len(),
                self.dim
            )));
        }
        let mut x = b.to_vec();
        if let Some(lu) = &self.lu {
            lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.dim, 1));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Internal("singular block system".into()));
        }
        Ok(x)
    }
}

/// Pieces of the Newton step `y + α⁻¹ P E G P y = rhs`.
///
/// With `a = P y`, `w = α⁻¹ G a` and `c = P E w` the step is equivalent to
/// the symmetric saddle point system
///
/// ```text
///   [ M     0       A  ] [c]   [M rhs]
///   [ 0     α K_ff  −EᵀM ] [w] = [  0  ]
///   [ A     −M E    0    ] [a]   [  0  ]
/// ```
///
/// with `A = K+M`, followed by `y = rhs − c`. Here `f` is the free interior
/// node set and `E` its injection into `W_h`.
pub struct BlockNewtonParts<'a> {
    pub mass: &'a SparseSymOperator,
    pub h1: &'a SparseSymOperator,
    /// Stiffness matrix restricted to the free nodes.
    pub free_stiffness: &'a SparseSymOperator,
    /// Full-mesh indices of the free nodes, ascending.
    pub free_nodes: &'a [usize],
    pub alpha: f64,
}

const REFINE_TOL: f64 = 1e-14;
const REFINE_MAX: usize = 10;

/// Upper triangle of the saddle point matrix as `(row, col, value)` with
/// `row <= col`, the pivot sign pattern, and the node-blocked elimination
/// order (`c_j`, `w_j`, `a_j` per node, nodes in fill-reducing order).
struct SaddleSystem {
    dim: usize,
    upper: Vec<(usize, usize, f64)>,
    signs: Vec<i8>,
    order: Vec<usize>,
}

fn saddle_system(parts: &BlockNewtonParts<'_>) -> Result<SaddleSystem> {
    let n = parts.mass.dim();
    let nf = parts.free_nodes.len();
    let (c0, w0, a0) = (0, n, n + nf);
    let dim = 2 * n + nf;
    let mut free_position = vec![usize::MAX; n];
    for (k, &node) in parts.free_nodes.iter().enumerate() {
        free_position[node] = k;
    }
    let mut upper = Vec::with_capacity(2 * parts.h1.nnz() + parts.free_stiffness.nnz());
    for r in 0..n {
        for (c, v) in parts.mass.row(r) {
            if r <= c {
                upper.push((c0 + r, c0 + c, v));
            }
            // −M E block: row a_r, column w_k; stored transposed above the diagonal.
            let fc = free_position[c];
            if fc != usize::MAX {
                upper.push((w0 + fc, a0 + r, -v));
            }
        }
        for (c, v) in parts.h1.row(r) {
            upper.push((c0 + r, a0 + c, v));
        }
    }
    for k in 0..nf {
        for (l, v) in parts.free_stiffness.row(k) {
            if k <= l {
                upper.push((w0 + k, w0 + l, parts.alpha * v));
            }
        }
    }
    let mut signs = vec![1i8; dim];
    signs[a0..].fill(-1);

    let node_order = fill_reducing_order(parts.h1)?;
    let mut order = Vec::with_capacity(dim);
    for &node in &node_order {
        order.push(c0 + node);
        if free_position[node] != usize::MAX {
            order.push(w0 + free_position[node]);
        }
        order.push(a0 + node);
    }
    Ok(SaddleSystem {
        dim,
        upper,
        signs,
        order,
    })
}

/// Approximate minimum degree ordering of a symmetric sparsity pattern.
fn fill_reducing_order(a: &SparseSymOperator) -> Result<Vec<usize>> {
    let dim = a.dim();
    let symbolic = SymbolicSparseColMatRef::new_checked(dim, dim, a.row_ptr(), None, a.col_idx());
    let chol = factorize_symbolic_cholesky(
        symbolic,
        Side::Lower,
        SymmetricOrdering::Amd,
        CholeskySymbolicParams::default(),
    )
    .map_err(|e| Error::Internal(format!("ordering failed: {e:?}")))?;
    Ok(match chol.perm() {
        Some(perm) => perm.arrays().0.to_vec(),
        None => (0..dim).collect(),
    })
}

impl SaddleSystem {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(r, c, v) in &self.upper {
            out[r] += v * x[c];
            if r != c {
                out[c] += v * x[r];
            }
        }
        out
    }

    /// LDLᵀ with sign-guided pivot regularization followed by iterative
    /// refinement against the exact matrix.
    fn solve_ldlt(&self, b: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim;
        let triplets: Vec<Triplet<usize, usize, f64>> = self
            .upper
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &triplets)
            .map_err(|e| Error::InvalidArgument(format!("bad sparse matrix: {e:?}")))?;
        let mut inverse = vec![0usize; dim];
        for (k, &i) in self.order.iter().enumerate() {
            inverse[i] = k;
        }
        let perm = PermRef::new_checked(&self.order, &inverse, dim);
        let symbolic = factorize_symbolic_cholesky(
            mat.symbolic(),
            Side::Upper,
            SymmetricOrdering::Custom(perm),
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| Error::Internal(format!("symbolic LDLT failed: {e:?}")))?;

        let scale = self.upper.iter().fold(0.0f64, |m, t| m.max(t.2.abs()));
        let regularization = LdltRegularization {
            dynamic_regularization_signs: Some(&self.signs),
            dynamic_regularization_delta: scale * 1e-10,
            dynamic_regularization_epsilon: scale * 1e-14,
        };
        let mut values = vec![0.0; symbolic.len_val()];
        let mut mem = MemBuffer::new(
            symbolic
                .factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default())
                .or(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq)),
        );
        let stack = MemStack::new(&mut mem);
        let ldlt = symbolic
            .factorize_numeric_ldlt(
                &mut values,
                mat.as_ref(),
                Side::Upper,
                regularization,
                Par::Seq,
                stack,
                Default::default(),
            )
            .map_err(|e| Error::Internal(format!("LDLT failed: {e:?}")))?;

        let b_norm = dot(b, b).sqrt();
        let mut x = vec![0.0; dim];
        let mut r = b.to_vec();
        for _ in 0..REFINE_MAX {
            let mut d = r.clone();
            ldlt.solve_in_place_with_conj(
                Conj::No,
                MatMut::from_column_major_slice_mut(&mut d, dim, 1),
                Par::Seq,
                stack,
            );
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += di;
            }
            let ax = self.apply(&x);
            for i in 0..dim {
                r[i] = b[i] - ax[i];
            }
            if dot(&r, &r).sqrt() <= REFINE_TOL * b_norm {
                return Ok(x);
            }
        }
        if x.iter().all(|v| v.is_finite()) && dot(&r, &r).sqrt() <= 1e-11 * b_norm {
            return Ok(x);
        }
        Err(Error::Internal("LDLT refinement stalled".into()))
    }

    fn solve_lu(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut full = Vec::with_capacity(2 * self.upper.len());
        for &(r, c, v) in &self.upper {
            full.push((r, c, v));
            if r != c {
                full.push((c, r, v));
            }
        }
        SparseLu::factorize(self.dim, &full)?.solve(b)
    }
}

/// Solves the Newton step and returns `y`.
///
/// Uses the regularized LDLᵀ path and falls back to sparse LU if
/// refinement does not converge.
pub fn solve_block_newton(parts: &BlockNewtonParts<'_>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = parts.mass.dim();
    let nf = parts.free_nodes.len();
    if rhs.len() != n || parts.h1.dim() != n || parts.free_stiffness.dim() != nf {
        return Err(Error::InvalidArgument("inconsistent block Newton dimensions".into()));
    }
    if nf == 0 {
        // G ≡ 0: the operator is the identity.
        return Ok(rhs.to_vec());
    }
    let system = saddle_system(parts)?;
    let mut b = vec![0.0; system.dim];
    b[..n].copy_from_slice(&parts.mass.mul_vec(rhs));
    let x = match system.solve_ldlt(&b) {
        Ok(x) => x,
        Err(_) => system.solve_lu(&b)?,
    };
    Ok(rhs.iter().zip(&x[..n]).map(|(r, c)| r - c).collect())
}

/// Outcome of [`conjugate_gradient`].
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for `T x = b` where `T` is self-adjoint and positive
/// definite with respect to the inner product induced by `gram`.
///
/// Stops once the residual norm in that inner product drops below `rel_tol`
/// times the norm of `b`.
pub fn conjugate_gradient<F>(
    apply: F,
    gram: &SparseSymOperator,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let inner = |u: &[f64], v: &[f64]| gram.bilinear(u, v);
    let b_norm = inner(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = inner(&r, &r);
    for it in 0..max_iter {
        let tp = apply(&p)?;
        let ptp = inner(&p, &tp);
        if ptp <= 0.0 {
            return Err(Error::Internal(
                "operator is not positive definite in the given inner product".into(),
            ));
        }
        let step = rr / ptp;
        for i in 0..x.len() {
            x[i] += step * p[i];
            r[i] -= step * tp[i];
        }
        let rr_new = inner(&r, &r);
        let rel = rr_new.max(0.0).sqrt() / b_norm;
        if rel <= rel_tol {
            return Ok(CgOutcome {
                solution: x,
                iterations: it + 1,
                relative_residual: rel,
            });
        }
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
    })
}

/// Euclidean relative residual `‖A x − b‖₂ / ‖b‖₂`.
pub fn relative_residual(a: &SparseSymOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let num: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    let den = dot(b, b);
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{h1_matrix, mass_matrix};
    use crate::mesh::Mesh;

    fn inf_norm(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn identity_solve() {
        let f = Factorization::factorize(&SparseSymOperator::identity(5)).unwrap();
        let b = vec![1.0, -2.0, 3.5, 0.0, 7.0];
        assert_eq!(f.solve(&b).unwrap(), b);
    }

    #[test]
    fn two_by_two() {
        let a = SparseSymOperator::from_triplets(
            2,
            vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)],
        )
        .unwrap();
        let x = Factorization::factorize(&a).unwrap().solve(&[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constants_are_helmholtz_eigenfunctions() {
        let mesh = Mesh::build_friedrichs_keller(4).unwrap();
        let a = h1_matrix(&mesh);
        let m = mass_matrix(&mesh);
        let b = m.mul_vec(&vec![1.0; a.dim()]);
        let x = Factorization::factorize(&a).unwrap().solve(&b).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let bound = 1e-10 * (a.to_dense().abs().row_sum().max() * inf_norm(&x) + inf_norm(&b));
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(inf_norm(&r) <= bound);
        assert!(relative_residual(&a, &x, &b) <= 1e-9);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = SparseSymOperator::from_triplets(
            2,
            vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert!(matches!(
            Factorization::factorize(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let f = Factorization::factorize(&SparseSymOperator::identity(3)).unwrap();
        assert!(matches!(f.solve(&[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn empty_operator() {
        let empty = SparseSymOperator::from_triplets(0, vec![]).unwrap();
        let f = Factorization::factorize(&empty).unwrap();
        assert!(f.solve(&[]).unwrap().is_empty());
    }

    #[test]
    fn deterministic_solves() {
        let mesh = Mesh::build_friedrichs_keller(10).unwrap();
        let a = h1_matrix(&mesh);
        let b: Vec<f64> = (0..a.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x1 = Factorization::factorize(&a).unwrap().solve(&b).unwrap();
        let x2 = Factorization::factorize(&a).unwrap().solve(&b).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn lu_solves_nonsymmetric() {
        let entries = [(0, 0, 0.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 1.0)];
        let lu = SparseLu::factorize(2, &entries).unwrap();
        let x = lu.solve(&[1.0, 4.0]).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cg_matches_direct_solve() {
        let mesh = Mesh::build_friedrichs_keller(6).unwrap();
        let a = h1_matrix(&mesh);
        let id = SparseSymOperator::identity(a.dim());
        let b: Vec<f64> = (0..a.dim()).map(|i| (i as f64).cos()).collect();
        let cg = conjugate_gradient(|v| Ok(a.mul_vec(v)), &id, &b, 1e-13, 500).unwrap();
        let direct = Factorization::factorize(&a).unwrap().solve(&b).unwrap();
        for (p, q) in cg.solution.iter().zip(&direct) {
            assert!((p - q).abs() < 1e-10);
        }
    }
}
