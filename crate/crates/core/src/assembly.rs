//! P1 finite element matrices, nodal interpolation and discrete norms.

use crate::linalg::Factorization;
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Which discrete function space a coefficient vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// All mesh nodes, `W_h`.
    Full,
    /// Interior nodes only (homogeneous Dirichlet data), `V_h`.
    Interior,
}

/// Coefficient vector of a P1 function tagged with its space.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalFunction {
    values: Vec<f64>,
    space: Space,
}

impl NodalFunction {
    pub fn new(values: Vec<f64>, space: Space, mesh: &Mesh) -> Result<Self> {
        let expected = match space {
            Space::Full => mesh.num_nodes(),
            Space::Interior => mesh.num_interior(),
        };
        if values.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "nodal vector has length {}, space {:?} needs {}",
                values.len(),
                space,
                expected
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite nodal value at index {k}")));
        }
        Ok(Self { values, space })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// Values on all mesh nodes, zero-extending `V_h` functions.
    pub fn to_full(&self, mesh: &Mesh) -> Vec<f64> {
        match self.space {
            Space::Full => self.values.clone(),
            Space::Interior => mesh.extend_interior(&self.values),
        }
    }
}

/// Norms used throughout: L², full H¹ and the H¹ seminorm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L2,
    H1,
    H1Semi,
}

/// Symmetric sparse matrix in compressed row storage with sorted columns.
///
/// Since the matrix is symmetric the same arrays also describe it in
/// compressed column storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymOperator {
    /// Compresses a list of `(row, col, value)` contributions, summing
    /// duplicates in insertion order.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|&&(i, j, _)| i >= dim || j >= dim) {
            return Err(Error::InvalidArgument(format!(
                "entry ({i}, {j}) out of range for dimension {dim}"
            )));
        }
        // Stable sort keeps the element order of duplicate contributions, so
        // (i, j) and (j, i) are summed identically.
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates over `(col, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Entry `(i, j)`, zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "dimension mismatch in matrix-vector product");
        (0..self.dim)
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    /// Entrywise sum of two operators of equal dimension.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::InvalidArgument(format!(
                "cannot add operators of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for op in [self, other] {
            for i in 0..op.dim {
                triplets.extend(op.row(i).map(|(j, v)| (i, j, v)));
            }
        }
        Self::from_triplets(self.dim, triplets)
    }

    /// Principal submatrix on `indices` (sorted ascending, no duplicates).
    /// Row/column `k` of the result corresponds to `indices[k]`.
    pub fn principal_submatrix(&self, indices: &[usize]) -> Result<Self> {
        let mut position = vec![usize::MAX; self.dim];
        for (k, &i) in indices.iter().enumerate() {
            if i >= self.dim {
                return Err(Error::InvalidArgument(format!(
                    "index {i} out of range for dimension {}",
                    self.dim
                )));
            }
            if k > 0 && indices[k - 1] >= i {
                return Err(Error::InvalidArgument(
                    "submatrix indices must be strictly ascending".into(),
                ));
            }
            position[i] = k;
        }
        let mut row_ptr = Vec::with_capacity(indices.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in indices {
            for (j, v) in self.row(i) {
                let pj = position[j];
                if pj != usize::MAX {
                    col_idx.push(pj);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            dim: indices.len(),
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut dense = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                dense[(i, j)] = v;
            }
        }
        dense
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Element stiffness matrix of a P1 triangle.
fn element_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
        - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        b[i] = p[j][1] - p[k][1];
        c[i] = p[k][0] - p[j][0];
    }
    let mut ke = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
        }
    }
    ke
}

/// Consistent element mass matrix of a P1 triangle.
fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

fn assemble<F>(mesh: &Mesh, element: F) -> SparseSymOperator
where
    F: Fn(usize, [[f64; 2]; 3]) -> [[f64; 3]; 3],
{
    let mut triplets = Vec::with_capacity(9 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = tri.map(|k| mesh.nodes()[k]);
        let local = element(t, p);
        for a in 0..3 {
            for b in 0..3 {
                triplets.push((tri[a], tri[b], local[a][b]));
            }
        }
    }
    SparseSymOperator::from_triplets(mesh.num_nodes(), triplets)
        .expect("mesh connectivity indices are in range")
}

/// `K[i][j] = ∫ ∇φ_i·∇φ_j` over all P1 basis functions of `W_h`.
pub fn stiffness_matrix(mesh: &Mesh) -> SparseSymOperator {
    assemble(mesh, |_, p| element_stiffness(p))
}

/// Consistent (not lumped) P1 mass matrix.
pub fn mass_matrix(mesh: &Mesh) -> SparseSymOperator {
    assemble(mesh, |t, _| element_mass(mesh.signed_area(t)))
}

/// Gram matrix of the H¹ inner product, `K + M`.
pub fn h1_matrix(mesh: &Mesh) -> SparseSymOperator {
    let k = stiffness_matrix(mesh);
    let m = mass_matrix(mesh);
    k.add(&m).expect("stiffness and mass share the node count")
}

/// Principal submatrix of a `W_h` operator on the given interior nodes.
pub fn restrict_to_interior(
    op: &SparseSymOperator,
    mesh: &Mesh,
    free: &[usize],
) -> Result<SparseSymOperator> {
    if op.dim() != mesh.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "operator dimension {} does not match mesh with {} nodes",
            op.dim(),
            mesh.num_nodes()
        )));
    }
    if let Some(&k) = free.iter().find(|&&k| k >= mesh.num_nodes()) {
        return Err(Error::InvalidArgument(format!("node index {k} out of range")));
    }
    if let Some(&k) = free.iter().find(|&&k| mesh.boundary_mask()[k]) {
        return Err(Error::InvalidArgument(format!("node {k} is a boundary node")));
    }
    op.principal_submatrix(free)
}

/// Nodal interpolant `I_h f`.
pub fn interpolate<F>(f: F, mesh: &Mesh) -> Result<NodalFunction>
where
    F: Fn(f64, f64) -> f64,
{
    let values: Vec<f64> = mesh.nodes().iter().map(|&[x, y]| f(x, y)).collect();
    NodalFunction::new(values, Space::Full, mesh)
}

/// Mesh together with its assembled matrices and the cached factorization
/// of `K + M`.
#[derive(Debug)]
pub struct FeMatrices {
    mesh: Mesh,
    stiffness: SparseSymOperator,
    mass: SparseSymOperator,
    h1: SparseSymOperator,
    h1_factor: Factorization,
    stiffness_interior: SparseSymOperator,
}

impl FeMatrices {
    pub fn assemble(mesh: Mesh) -> Result<Self> {
        let stiffness = stiffness_matrix(&mesh);
        let mass = mass_matrix(&mesh);
        let h1 = stiffness.add(&mass)?;
        let h1_factor = Factorization::factorize(&h1)?;
        let stiffness_interior = restrict_to_interior(&stiffness, &mesh, mesh.interior_nodes())?;
        Ok(Self {
            mesh,
            stiffness,
            mass,
            h1,
            h1_factor,
            stiffness_interior,
        })
    }

    /// Convenience for `assemble(Mesh::build_friedrichs_keller(n))`.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::assemble(Mesh::build_friedrichs_keller(n)?)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn stiffness(&self) -> &SparseSymOperator {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseSymOperator {
        &self.mass
    }

    pub fn h1(&self) -> &SparseSymOperator {
        &self.h1
    }

    pub fn h1_factor(&self) -> &Factorization {
        &self.h1_factor
    }

    /// Dirichlet stiffness matrix on `V_h`.
    pub fn stiffness_interior(&self) -> &SparseSymOperator {
        &self.stiffness_interior
    }

    /// Norm of a full-node coefficient vector.
    pub fn norm_full(&self, values: &[f64], kind: NormKind) -> f64 {
        let sq = match kind {
            NormKind::L2 => self.mass.bilinear(values, values),
            NormKind::H1 => self.h1.bilinear(values, values),
            NormKind::H1Semi => self.stiffness.bilinear(values, values),
        };
        sq.max(0.0).sqrt()
    }

    pub fn norm(&self, v: &NodalFunction, kind: NormKind) -> f64 {
        match v.space() {
            Space::Full => self.norm_full(v.values(), kind),
            Space::Interior => self.norm_full(&v.to_full(&self.mesh), kind),
        }
    }

    /// L² distance of two full-node vectors.
    pub fn l2_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm_full(&d, NormKind::L2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn mesh(n: usize) -> Mesh {
        Mesh::build_friedrichs_keller(n).unwrap()
    }

    #[test]
    fn stiffness_center_row_n2() {
        let k = stiffness_matrix(&mesh(2));
        // center node 4; axis neighbours 1, 3, 5, 7; diagonal neighbours 0, 8.
        assert!((k.get(4, 4) - 4.0).abs() < 1e-14);
        for j in [1, 3, 5, 7] {
            assert!((k.get(4, j) + 1.0).abs() < 1e-14);
        }
        for j in [0, 2, 6, 8] {
            assert_eq!(k.get(4, j), 0.0);
        }
    }

    #[test]
    fn element_stiffness_of_reference_triangle() {
        // right angle at the middle vertex
        let ke = element_stiffness([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        let expected = [[0.5, -0.5, 0.0], [-0.5, 1.0, -0.5], [0.0, -0.5, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((ke[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_annihilates_constants_and_is_psd() {
        for n in [2, 5, 9] {
            let k = stiffness_matrix(&mesh(n));
            let ones = vec![1.0; k.dim()];
            assert!(k.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
            let x: Vec<f64> = (0..k.dim()).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            assert!(k.bilinear(&x, &x) >= 0.0);
        }
    }

    #[test]
    fn stiffness_is_m_matrix() {
        let m = mesh(8);
        let k = stiffness_matrix(&m);
        for i in 0..k.dim() {
            let mut off = 0.0;
            for (j, v) in k.row(i) {
                if j != i {
                    assert!(v <= 0.0, "positive off-diagonal at ({i},{j})");
                    off += v.abs();
                }
            }
            if !m.boundary_mask()[i] {
                assert!(k.get(i, i) >= off - 1e-14);
            }
        }
    }

    #[test]
    fn mass_total_is_area() {
        for n in [2, 7, 16] {
            let m = mass_matrix(&mesh(n));
            let ones = vec![1.0; m.dim()];
            assert!((m.bilinear(&ones, &ones) - 1.0).abs() < 1e-12);
            assert!(m.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn center_hat_function_mass_n2() {
        // φ_center is supported on the 6 triangles touching node 4, each of
        // area 1/8: ∫φ² = 6 · area/6 = 1/8.
        let m = mass_matrix(&mesh(2));
        assert!((m.get(4, 4) - 0.125).abs() < 1e-15);
        // neighbours sharing two triangles: 2·area/12 = 1/48; those sharing
        // one edge on the diagonal too.
        for j in [1, 3, 5, 7, 0, 8] {
            assert!((m.get(4, j) - 2.0 * (1.0 / 8.0) / 12.0).abs() < 1e-15);
        }
        for j in [2, 6] {
            assert_eq!(m.get(4, j), 0.0);
        }
    }

    #[test]
    fn element_mass_formula() {
        let me = element_mass(0.5);
        assert!((me[0][0] - 2.0 * 0.5 / 12.0).abs() < 1e-16);
        assert!((me[0][1] - 0.5 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn h1_matrix_properties() {
        let m = mesh(4);
        let a = h1_matrix(&m);
        let mass = mass_matrix(&m);
        assert!(a.is_symmetric());
        let ones = vec![1.0; a.dim()];
        let lhs = a.mul_vec(&ones);
        let rhs = mass.mul_vec(&ones);
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).abs() < 1e-14);
        }
        let eig_a = SymmetricEigen::new(a.to_dense()).eigenvalues.min();
        let eig_m = SymmetricEigen::new(mass.to_dense()).eigenvalues.min();
        assert!(eig_m > 0.0);
        assert!(eig_a >= eig_m - 1e-14);
    }

    #[test]
    fn matrices_are_exactly_symmetric() {
        let m = mesh(6);
        assert!(stiffness_matrix(&m).is_symmetric());
        assert!(mass_matrix(&m).is_symmetric());
        assert!(h1_matrix(&m).is_symmetric());
    }

    #[test]
    fn restriction_to_all_interior_is_five_point_laplacian() {
        let m = mesh(4);
        let k = stiffness_matrix(&m);
        let kv = restrict_to_interior(&k, &m, m.interior_nodes()).unwrap();
        // hand-assembled 5-point stencil on the 3×3 interior grid
        let side = 3;
        let mut dense = nalgebra::DMatrix::<f64>::zeros(9, 9);
        for j in 0..side {
            for i in 0..side {
                let r = j * side + i;
                dense[(r, r)] = 4.0;
                if i > 0 {
                    dense[(r, r - 1)] = -1.0;
                }
                if i + 1 < side {
                    dense[(r, r + 1)] = -1.0;
                }
                if j > 0 {
                    dense[(r, r - side)] = -1.0;
                }
                if j + 1 < side {
                    dense[(r, r + side)] = -1.0;
                }
            }
        }
        assert!((kv.to_dense() - dense).abs().max() < 1e-14);
    }

    #[test]
    fn restriction_edge_cases() {
        let m = mesh(4);
        let k = stiffness_matrix(&m);
        let empty = restrict_to_interior(&k, &m, &[]).unwrap();
        assert_eq!(empty.dim(), 0);
        assert!(matches!(
            restrict_to_interior(&k, &m, &[1000]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(restrict_to_interior(&k, &m, &[0]).is_err());
    }

    #[test]
    fn interpolation_of_smooth_fields() {
        let m = mesh(4);
        let yd = interpolate(|x, y| -x - y, &m).unwrap();
        for j in 0..=4 {
            for i in 0..=4 {
                let v = yd.values()[j * 5 + i];
                assert!((v + (i + j) as f64 / 4.0).abs() < 1e-15);
            }
        }
        let psi = interpolate(|_, _| -5.0, &m).unwrap();
        assert!(psi.values().iter().all(|&v| v == -5.0));
        assert!(matches!(
            interpolate(|x, _| 1.0 / (x - x), &m),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn interpolant_of_affine_matches_at_midpoints() {
        let m = mesh(3);
        let f = |x: f64, y: f64| 0.3 + 2.0 * x - 1.5 * y;
        let v = interpolate(f, &m).unwrap();
        for tri in m.triangles() {
            let p = tri.map(|k| m.nodes()[k]);
            let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
            let interp: f64 = tri.iter().map(|&k| v.values()[k]).sum::<f64>() / 3.0;
            assert!((interp - f(c[0], c[1])).abs() < 1e-14);
        }
    }

    #[test]
    fn galerkin_consistency_for_affine_products() {
        let m = mesh(5);
        let mass = mass_matrix(&m);
        let f = interpolate(|x, y| 1.0 + x - 2.0 * y, &m).unwrap();
        let g = interpolate(|x, y| 3.0 * x + y, &m).unwrap();
        // ∫ (1 + x − 2y)(3x + y) over the unit square
        let exact = 3.0 / 2.0 + 1.0 / 2.0 + 1.0 + 1.0 / 4.0 - 6.0 / 4.0 - 2.0 / 3.0;
        assert!((mass.bilinear(f.values(), g.values()) - exact).abs() < 1e-12);
    }

    #[test]
    fn norms() {
        let mats = FeMatrices::unit_square(8).unwrap();
        let ones = NodalFunction::new(vec![1.0; 81], Space::Full, mats.mesh()).unwrap();
        assert!((mats.norm(&ones, NormKind::L2) - 1.0).abs() < 1e-12);
        assert_eq!(mats.norm(&ones, NormKind::H1Semi), 0.0);
        let x = interpolate(|x, _| x, mats.mesh()).unwrap();
        assert!((mats.norm(&x, NormKind::L2) - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let v: Vec<f64> = (0..81).map(|i| ((i * 13 % 7) as f64) * 0.3 - 1.0).collect();
        let l2 = mats.norm_full(&v, NormKind::L2);
        let semi = mats.norm_full(&v, NormKind::H1Semi);
        let h1 = mats.norm_full(&v, NormKind::H1);
        assert!((h1 * h1 - l2 * l2 - semi * semi).abs() < 1e-12);
    }

    #[test]
    fn interior_functions_are_zero_extended() {
        let mats = FeMatrices::unit_square(4).unwrap();
        let v = NodalFunction::new(vec![1.0; 9], Space::Interior, mats.mesh()).unwrap();
        let full = v.to_full(mats.mesh());
        assert_eq!(full.iter().filter(|&&x| x == 1.0).count(), 9);
        assert!(NodalFunction::new(vec![1.0; 10], Space::Interior, mats.mesh()).is_err());
        assert!(NodalFunction::new(vec![f64::NAN; 9], Space::Interior, mats.mesh()).is_err());
    }
}
