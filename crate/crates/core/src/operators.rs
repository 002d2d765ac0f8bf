//! The two linear solution operators used by the Newton iteration: the
//! discrete H¹ Riesz map `P_h` and the active-set derivative `G_N`.

use serde::{Deserialize, Serialize};

use crate::assembly::{FeMatrices, NodalFunction, SparseSymOperator, Space};
use crate::linalg::Factorization;
use crate::obstacle::ObstacleSolution;
use crate::{Error, Result};

/// How the constrained node set `N_i` is built from an obstacle solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorPolicy {
    /// Strictly active nodes only; biactive nodes stay free.
    #[default]
    StrictOnly,
    /// Strictly active and biactive nodes.
    StrictPlusBiactive,
}

/// `y = P_h u`, i.e. `(K + M) y = M u`, for `u` on all nodes.
pub fn apply_p(u: &[f64], mats: &FeMatrices) -> Result<Vec<f64>> {
    if u.len() != mats.mesh().num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "P_h expects {} nodal values, got {}",
            mats.mesh().num_nodes(),
            u.len()
        )));
    }
    mats.h1_factor().solve(&mats.mass().mul_vec(u))
}

/// [`apply_p`] on a tagged function; `V_h` inputs are zero-extended.
pub fn apply_p_function(u: &NodalFunction, mats: &FeMatrices) -> Result<NodalFunction> {
    let y = apply_p(&u.to_full(mats.mesh()), mats)?;
    NodalFunction::new(y, Space::Full, mats.mesh())
}

/// Constrained node set `N` together with the factored stiffness matrix on
/// the remaining free interior nodes.
#[derive(Debug, Clone)]
pub struct DerivativeSelector {
    constrained: Vec<bool>,
    free_nodes: Vec<usize>,
    free_positions: Vec<usize>,
    free_stiffness: SparseSymOperator,
    factor: Factorization,
}

impl DerivativeSelector {
    /// `constrained` holds positions within the interior node list.
    pub fn new(constrained: &[usize], mats: &FeMatrices) -> Result<Self> {
        let m = mats.mesh().num_interior();
        let mut mask = vec![false; m];
        for &k in constrained {
            if k >= m {
                return Err(Error::InvalidArgument(format!(
                    "interior position {k} out of range ({m} interior nodes)"
                )));
            }
            mask[k] = true;
        }
        Self::from_mask(mask, mats)
    }

    pub fn from_mask(constrained: Vec<bool>, mats: &FeMatrices) -> Result<Self> {
        let interior = mats.mesh().interior_nodes();
        if constrained.len() != interior.len() {
            return Err(Error::InvalidArgument("constrained mask length mismatch".into()));
        }
        let free_positions: Vec<usize> = (0..constrained.len()).filter(|&k| !constrained[k]).collect();
        let free_nodes = free_positions.iter().map(|&k| interior[k]).collect();
        let free_stiffness = mats.stiffness_interior().principal_submatrix(&free_positions)?;
        let factor = Factorization::factorize(&free_stiffness)?;
        Ok(Self {
            constrained,
            free_nodes,
            free_positions,
            free_stiffness,
            factor,
        })
    }

    /// Builds `N` from a classified obstacle solution.
    pub fn from_solution(sol: &ObstacleSolution, policy: SelectorPolicy, mats: &FeMatrices) -> Result<Self> {
        let mut mask = vec![false; sol.w.len()];
        for &k in &sol.strictly_active {
            mask[k] = true;
        }
        if policy == SelectorPolicy::StrictPlusBiactive {
            for &k in &sol.biactive {
                mask[k] = true;
            }
        }
        Self::from_mask(mask, mats)
    }

    /// Contains every strictly active node and no inactive node of `sol`.
    pub fn is_admissible_for(&self, sol: &ObstacleSolution) -> bool {
        sol.strictly_active.iter().all(|&k| self.constrained[k])
            && sol.inactive.iter().all(|&k| !self.constrained[k])
    }

    pub fn constrained_mask(&self) -> &[bool] {
        &self.constrained
    }

    pub fn num_constrained(&self) -> usize {
        self.constrained.iter().filter(|&&c| c).count()
    }

    /// Global indices of the free interior nodes.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn free_stiffness(&self) -> &SparseSymOperator {
        &self.free_stiffness
    }

    /// `w = G_N a` on the interior nodes: zero on `N`,
    /// `K_ff w_f = (M a)_f` on the free nodes.
    pub fn apply(&self, a: &[f64], mats: &FeMatrices) -> Result<Vec<f64>> {
        let mesh = mats.mesh();
        if a.len() != mesh.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "G_N expects {} nodal values, got {}",
                mesh.num_nodes(),
                a.len()
            )));
        }
        let load = mats.mass().mul_vec(a);
        let rhs: Vec<f64> = self.free_nodes.iter().map(|&k| load[k]).collect();
        let wf = self.factor.solve(&rhs)?;
        let mut w = vec![0.0; mesh.num_interior()];
        for (&k, v) in self.free_positions.iter().zip(wf) {
            w[k] = v;
        }
        Ok(w)
    }

    /// [`DerivativeSelector::apply`] zero-extended to all nodes.
    pub fn apply_full(&self, a: &[f64], mats: &FeMatrices) -> Result<Vec<f64>> {
        Ok(mats.mesh().extend_interior(&self.apply(a, mats)?))
    }
}

/// `w = G_N a` as a `V_h` function.
pub fn apply_g(selector: &DerivativeSelector, a: &NodalFunction, mats: &FeMatrices) -> Result<NodalFunction> {
    let w = selector.apply(&a.to_full(mats.mesh()), mats)?;
    NodalFunction::new(w, Space::Interior, mats.mesh())
}
