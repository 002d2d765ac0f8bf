//! Discrete obstacle problem: given a load `z ∈ W_h` and an obstacle `ψ`,
//! find `w ∈ V_h` minimizing `½ wᵀ K_V w − wᵀ (M z)|_V` subject to
//! `w ≥ ψ` at every interior node.
//!
//! Node sets in this module are positions within
//! [`Mesh::interior_nodes`](crate::Mesh::interior_nodes), not global node
//! indices.

use nalgebra::{DMatrix, DVector};

use crate::assembly::FeMatrices;
use crate::linalg::Factorization;
use crate::{Error, Result};

/// Default relative tolerance for primal activity, `w ≤ ψ + tol·(1 + |ψ|)`.
pub const DEFAULT_TOL_ACTIVE: f64 = 1e-12;
/// Default multiplier threshold separating strictly active from biactive.
pub const DEFAULT_TOL_STRICT: f64 = 1e-10;
/// Interior-node limit for the enumeration oracle.
pub const ORACLE_MAX_NODES: usize = 16;

#[derive(Debug, Clone)]
pub struct PdasOptions {
    pub max_iterations: usize,
    /// Weight `c` in the active set update `λ + c (ψ − w) > 0`.
    pub c: f64,
    pub tol_active: f64,
    pub tol_strict: f64,
}

impl Default for PdasOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            c: 1.0,
            tol_active: DEFAULT_TOL_ACTIVE,
            tol_strict: DEFAULT_TOL_STRICT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSolution {
    /// State on the interior nodes.
    pub w: Vec<f64>,
    /// Nodal multiplier `K_V w − (M z)|_V`.
    pub lambda: Vec<f64>,
    pub inactive: Vec<usize>,
    pub strictly_active: Vec<usize>,
    pub biactive: Vec<usize>,
    /// Final active set of the active set iteration, reusable as a warm start.
    pub active_mask: Vec<bool>,
    pub pdas_iterations: usize,
}

impl ObstacleSolution {
    fn new(w: Vec<f64>, lambda: Vec<f64>, psi: &[f64], active_mask: Vec<bool>, iterations: usize,
           opts: &PdasOptions) -> Self {
        let mut sol = Self {
            w,
            lambda,
            inactive: Vec::new(),
            strictly_active: Vec::new(),
            biactive: Vec::new(),
            active_mask,
            pdas_iterations: iterations,
        };
        classify_nodes(&mut sol, psi, opts.tol_active, opts.tol_strict);
        sol
    }

    /// Nodes where the constraint holds with equality (strict and biactive).
    pub fn contact_set(&self) -> Vec<usize> {
        let mut set: Vec<usize> = self
            .strictly_active
            .iter()
            .chain(&self.biactive)
            .copied()
            .collect();
        set.sort_unstable();
        set
    }
}

/// Recomputes the inactive / strictly active / biactive partition.
///
/// `psi` is the obstacle on the interior nodes.
pub fn classify_nodes(sol: &mut ObstacleSolution, psi: &[f64], tol_active: f64, tol_strict: f64) {
    sol.inactive.clear();
    sol.strictly_active.clear();
    sol.biactive.clear();
    for k in 0..sol.w.len() {
        if sol.w[k] > psi[k] + tol_active * (1.0 + psi[k].abs()) {
            sol.inactive.push(k);
        } else if sol.lambda[k] > tol_strict {
            sol.strictly_active.push(k);
        } else {
            sol.biactive.push(k);
        }
    }
}

struct Prepared {
    load: Vec<f64>,
    psi: Vec<f64>,
}

fn prepare(z: &[f64], psi: &[f64], mats: &FeMatrices) -> Result<Prepared> {
    let mesh = mats.mesh();
    let nn = mesh.num_nodes();
    if z.len() != nn || psi.len() != nn {
        return Err(Error::InvalidArgument(format!(
            "load and obstacle must have {nn} nodal values, got {} and {}",
            z.len(),
            psi.len()
        )));
    }
    if z.iter().chain(psi).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite load or obstacle".into()));
    }
    if let Some(k) = (0..nn).find(|&k| mesh.boundary_mask()[k] && psi[k] >= 0.0) {
        return Err(Error::InfeasibleConstraints(format!(
            "obstacle must be negative on the boundary, ψ = {} at node {k}",
            psi[k]
        )));
    }
    let load = mesh.restrict_interior(&mats.mass().mul_vec(z));
    Ok(Prepared {
        load,
        psi: mesh.restrict_interior(psi),
    })
}

fn multiplier(mats: &FeMatrices, w: &[f64], load: &[f64]) -> Vec<f64> {
    mats.stiffness_interior()
        .mul_vec(w)
        .iter()
        .zip(load)
        .map(|(kw, f)| kw - f)
        .collect()
}

/// Solves the equality-constrained subproblem `w = ψ` on `active`,
/// `K_II w_I = f_I − K_IA ψ_A` on the rest.
fn solve_with_active_set(mats: &FeMatrices, load: &[f64], psi: &[f64], active: &[bool]) -> Result<Vec<f64>> {
    let kv = mats.stiffness_interior();
    let free: Vec<usize> = (0..active.len()).filter(|&k| !active[k]).collect();
    let mut w: Vec<f64> = (0..active.len()).map(|k| if active[k] { psi[k] } else { 0.0 }).collect();
    if free.is_empty() {
        return Ok(w);
    }
    let rhs: Vec<f64> = free
        .iter()
        .map(|&i| {
            let coupling: f64 = kv.row(i).filter(|&(j, _)| active[j]).map(|(j, v)| v * psi[j]).sum();
            load[i] - coupling
        })
        .collect();
    let sub = kv.principal_submatrix(&free)?;
    let wf = Factorization::factorize(&sub)?.solve(&rhs)?;
    for (&i, v) in free.iter().zip(wf) {
        w[i] = v;
    }
    Ok(w)
}

/// `S_h(z)` with default options and a cold start.
pub fn solve_obstacle(z: &[f64], psi: &[f64], mats: &FeMatrices) -> Result<ObstacleSolution> {
    solve_obstacle_with(z, psi, mats, None, &PdasOptions::default())
}

/// Primal–dual active set method for `S_h(z)`.
///
/// `z` and `psi` are given on all mesh nodes. Iterates until the active
/// set repeats exactly.
pub fn solve_obstacle_with(
    z: &[f64],
    psi: &[f64],
    mats: &FeMatrices,
    warm_start: Option<&[bool]>,
    opts: &PdasOptions,
) -> Result<ObstacleSolution> {
    let Prepared { load, psi } = prepare(z, psi, mats)?;
    solve_obstacle_load(&load, &psi, mats, warm_start, opts)
}

/// Primal–dual active set method for `min ½ wᵀ K_V w − wᵀ load` subject to
/// `w ≥ psi`, with `load` and `psi` given on the interior nodes.
pub fn solve_obstacle_load(
    load: &[f64],
    psi: &[f64],
    mats: &FeMatrices,
    warm_start: Option<&[bool]>,
    opts: &PdasOptions,
) -> Result<ObstacleSolution> {
    let m = mats.mesh().num_interior();
    if load.len() != m || psi.len() != m {
        return Err(Error::InvalidArgument(format!(
            "interior load and obstacle must have {m} values, got {} and {}",
            load.len(),
            psi.len()
        )));
    }
    if load.iter().chain(psi).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite load or obstacle".into()));
    }
    let mut active = match warm_start {
        Some(mask) if mask.len() == m => mask.to_vec(),
        Some(mask) => {
            return Err(Error::InvalidArgument(format!(
                "warm start mask has length {}, expected {m}",
                mask.len()
            )))
        }
        None => vec![false; m],
    };
    for it in 1..=opts.max_iterations {
        let w = solve_with_active_set(mats, load, psi, &active)?;
        let lambda = multiplier(mats, &w, load);
        let next: Vec<bool> = (0..m).map(|k| lambda[k] + opts.c * (psi[k] - w[k]) > 0.0).collect();
        if next == active {
            return Ok(ObstacleSolution::new(w, lambda, psi, active, it, opts));
        }
        active = next;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
    })
}

/// Result of exhaustive active set enumeration.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub solution: ObstacleSolution,
    /// Number of active sets passing the KKT screen (1 unless degenerate).
    pub candidates: usize,
}

/// Enumerates all `2^m` active sets with dense linear algebra and returns
/// the candidate that is primal feasible with a nonnegative multiplier.
pub fn brute_force_oracle(z: &[f64], psi: &[f64], mats: &FeMatrices) -> Result<OracleOutcome> {
    let m = mats.mesh().num_interior();
    if m > ORACLE_MAX_NODES {
        return Err(Error::TooLarge(format!(
            "{m} interior nodes, enumeration supports at most {ORACLE_MAX_NODES}"
        )));
    }
    let Prepared { load, psi } = prepare(z, psi, mats)?;
    let kv = mats.stiffness_interior().to_dense();
    let f = DVector::from_column_slice(&load);
    let psi_v = DVector::from_column_slice(&psi);
    let opts = PdasOptions::default();
    let scale = 1.0 + f.amax() + kv.amax() * psi_v.amax();

    let mut found: Option<ObstacleSolution> = None;
    let mut candidates = 0;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<bool> = (0..m).map(|k| mask & (1 << k) != 0).collect();
        let free: Vec<usize> = (0..m).filter(|&k| !active[k]).collect();
        let mut w = DVector::from_fn(m, |k, _| if active[k] { psi[k] } else { 0.0 });
        if !free.is_empty() {
            let nf = free.len();
            let kff = DMatrix::from_fn(nf, nf, |a, b| kv[(free[a], free[b])]);
            let rhs = DVector::from_fn(nf, |a, _| {
                let i = free[a];
                f[i] - (0..m).filter(|&j| active[j]).map(|j| kv[(i, j)] * psi[j]).sum::<f64>()
            });
            let chol = kff
                .cholesky()
                .ok_or_else(|| Error::Internal("dense free-set stiffness not SPD".into()))?;
            let wf = chol.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                w[i] = wf[a];
            }
        }
        let lambda = &kv * &w - &f;
        let feasible = (0..m).all(|k| w[k] >= psi[k] - 1e-12 * (1.0 + psi[k].abs()));
        let signed = (0..m).all(|k| lambda[k] >= -1e-12 * scale);
        if feasible && signed {
            candidates += 1;
            if found.is_none() {
                found = Some(ObstacleSolution::new(
                    w.as_slice().to_vec(),
                    lambda.as_slice().to_vec(),
                    &psi,
                    active,
                    0,
                    &opts,
                ));
            }
        }
    }
    found
        .map(|solution| OracleOutcome { solution, candidates })
        .ok_or_else(|| Error::Internal("no active set satisfies the KKT conditions".into()))
}
