//! Outer semismooth Newton iteration for the discrete optimal control
//! problem
//!
//! ```text
//!   min ½‖y − I_h y_D‖²_{L²} + (α/2)‖∇u‖²_{L²}
//!   s.t. (y, v)_{H¹} = (u, v)_{L²} for all v ∈ W_h,  u ∈ V_h,  u ≥ ψ at nodes,
//! ```
//!
//! written as the fixed-point equation `y − P_h S_h(α⁻¹ P_h(I_h y_D − y)) = 0`.

use serde::{Deserialize, Serialize};

use crate::assembly::{FeMatrices, NodalFunction, NormKind, Space};
use crate::linalg::{self, BlockNewtonParts, CgOutcome};
use crate::obstacle::{self, ObstacleSolution, PdasOptions};
use crate::operators::{apply_p, DerivativeSelector};
use crate::{Error, Result};

pub use crate::operators::SelectorPolicy;

/// Slack of the contraction certificate `‖y‖ ≤ (1 + slack) ‖rhs‖`.
pub const CONTRACTION_SLACK: f64 = 1e-9;
/// Admissible relative M-norm residual of a Newton system solve.
pub const NEWTON_SOLVE_TOL: f64 = 5e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// `y⁰ = I_h y_D`.
    InterpolateDesired,
    Zero,
    /// Nodal values on all mesh nodes.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub selector_policy: SelectorPolicy,
    pub y0: InitialGuess,
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidArgument(format!("tol must be nonnegative, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Interpolated data of one problem instance on a mesh.
#[derive(Debug, Clone)]
pub struct Problem {
    /// `I_h y_D` on all nodes.
    pub desired: NodalFunction,
    /// `I_h ψ` on all nodes.
    pub obstacle: NodalFunction,
}

impl Problem {
    pub fn new(desired: NodalFunction, obstacle: NodalFunction) -> Result<Self> {
        if desired.space() != Space::Full || obstacle.space() != Space::Full {
            return Err(Error::InvalidArgument("desired state and obstacle live on W_h".into()));
        }
        Ok(Self { desired, obstacle })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonStatus {
    Converged,
    MaxIterReached,
}

/// Scalar summary of iteration `i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    /// `‖y^i − ỹ^i‖_{L²}`.
    pub residual: f64,
    /// `|N_i|`, absent at the final iteration.
    pub constrained_nodes: Option<usize>,
    pub strictly_active: usize,
    pub biactive: usize,
    pub pdas_iterations: usize,
    pub y_l2: f64,
    pub y_tilde_h1: f64,
    pub u_h1_semi: f64,
    /// `‖y^{i+1}‖ / ‖rhs‖` of the Newton solve performed after this check.
    pub contraction_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    /// Newton updates performed, equal to the index of the last iterate.
    pub iterations: usize,
    pub status: NewtonStatus,
    pub history: Vec<IterationRecord>,
    /// `y^0, …, y^i` on all nodes.
    pub y_iterates: Vec<Vec<f64>>,
    /// `ỹ^0, …, ỹ^i` on all nodes.
    pub y_tilde_iterates: Vec<Vec<f64>>,
    /// `u^0, …, u^i`, zero-extended to all nodes.
    pub u_iterates: Vec<Vec<f64>>,
    /// `ζ^i` of the last iteration.
    pub final_zeta: Vec<f64>,
    /// Obstacle solution `S_h(ζ^i)` of the last iteration.
    pub final_obstacle: ObstacleSolution,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.residual)
    }

    pub fn final_y(&self) -> &[f64] {
        self.y_iterates.last().expect("at least one iterate")
    }

    pub fn final_y_tilde(&self) -> &[f64] {
        self.y_tilde_iterates.last().expect("at least one iterate")
    }

    pub fn final_u(&self) -> &[f64] {
        self.u_iterates.last().expect("at least one iterate")
    }

    /// Final multiplier on the interior nodes.
    pub fn final_lambda(&self) -> &[f64] {
        &self.final_obstacle.lambda
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.residual).collect()
    }
}

/// `y + α⁻¹ P_h E G_N P_h y`.
pub fn newton_step_matrix_apply(
    y: &[f64],
    selector: &DerivativeSelector,
    alpha: f64,
    mats: &FeMatrices,
) -> Result<Vec<f64>> {
    let correction = correction_term(&apply_p(y, mats)?, selector, alpha, mats)?;
    Ok(y.iter().zip(&correction).map(|(a, b)| a + b).collect())
}

/// `α⁻¹ P_h E G_N a` for an already computed `a = P_h y`.
fn correction_term(py: &[f64], selector: &DerivativeSelector, alpha: f64, mats: &FeMatrices) -> Result<Vec<f64>> {
    let w = selector.apply_full(py, mats)?;
    Ok(apply_p(&w, mats)?.into_iter().map(|v| v / alpha).collect())
}

/// Solution of one Newton system.
#[derive(Debug, Clone)]
pub struct NewtonSolve {
    pub y: Vec<f64>,
    /// `‖y‖_{L²} / ‖rhs‖_{L²}`, zero for `rhs = 0`.
    pub contraction_ratio: f64,
    /// `‖T y − rhs‖_{L²} / ‖rhs‖_{L²}`.
    pub relative_residual: f64,
}

/// Solves `y + α⁻¹ P_h G_N P_h y = rhs` through the sparse block system and
/// reports the unit-bound ratio and residual without enforcing them.
pub fn solve_newton_system_unchecked(
    rhs: &[f64],
    selector: &DerivativeSelector,
    alpha: f64,
    mats: &FeMatrices,
) -> Result<NewtonSolve> {
    let parts = BlockNewtonParts {
        mass: mats.mass(),
        h1: mats.h1(),
        free_stiffness: selector.free_stiffness(),
        free_nodes: selector.free_nodes(),
        alpha,
    };
    let y = linalg::solve_block_newton(&parts, rhs)?;
    let rhs_norm = mats.norm_full(rhs, NormKind::L2);
    let y_norm = mats.norm_full(&y, NormKind::L2);
    let ty = newton_step_matrix_apply(&y, selector, alpha, mats)?;
    let (contraction_ratio, relative_residual) = if rhs_norm == 0.0 {
        (if y_norm == 0.0 { 0.0 } else { f64::INFINITY }, mats.norm_full(&ty, NormKind::L2))
    } else {
        (y_norm / rhs_norm, mats.l2_distance(&ty, rhs) / rhs_norm)
    };
    Ok(NewtonSolve {
        y,
        contraction_ratio,
        relative_residual,
    })
}

/// [`solve_newton_system_unchecked`] followed by verification of the unit
/// bound on the inverse and of the residual.
pub fn solve_newton_system(
    rhs: &[f64],
    selector: &DerivativeSelector,
    alpha: f64,
    mats: &FeMatrices,
) -> Result<NewtonSolve> {
    let step = solve_newton_system_unchecked(rhs, selector, alpha, mats)?;
    if step.contraction_ratio > 1.0 + CONTRACTION_SLACK {
        return Err(Error::Internal(format!(
            "Newton solve violates the unit bound: ‖y‖/‖rhs‖ = {:e}",
            step.contraction_ratio
        )));
    }
    if step.relative_residual > NEWTON_SOLVE_TOL {
        return Err(Error::Internal(format!(
            "Newton solve residual {:e} exceeds {NEWTON_SOLVE_TOL:e}",
            step.relative_residual
        )));
    }
    Ok(step)
}

/// Matrix-free solve of the Newton system by conjugate gradients in the L²
/// inner product, in which the operator is self-adjoint and ≥ Id.
pub fn solve_newton_system_cg(
    rhs: &[f64],
    selector: &DerivativeSelector,
    alpha: f64,
    mats: &FeMatrices,
    rel_tol: f64,
) -> Result<CgOutcome> {
    linalg::conjugate_gradient(
        |v| newton_step_matrix_apply(v, selector, alpha, mats),
        mats.mass(),
        rhs,
        rel_tol,
        10 * rhs.len() + 100,
    )
}

/// Runs the semismooth Newton method.
pub fn run(config: &NewtonConfig, problem: &Problem, mats: &FeMatrices) -> Result<NewtonReport> {
    run_with_pdas(config, problem, mats, &PdasOptions::default())
}

pub fn run_with_pdas(
    config: &NewtonConfig,
    problem: &Problem,
    mats: &FeMatrices,
    pdas: &PdasOptions,
) -> Result<NewtonReport> {
    config.validate()?;
    let mesh = mats.mesh();
    let nn = mesh.num_nodes();
    let desired = problem.desired.values();
    let psi = problem.obstacle.values();
    if desired.len() != nn || psi.len() != nn {
        return Err(Error::InvalidArgument("problem data does not match the mesh".into()));
    }
    let alpha = config.alpha;

    let mut y = match &config.y0 {
        InitialGuess::InterpolateDesired => desired.to_vec(),
        InitialGuess::Zero => vec![0.0; nn],
        InitialGuess::Custom(v) => NodalFunction::new(v.clone(), Space::Full, mesh)?.into_values(),
    };
    let p_desired = apply_p(desired, mats)?;

    let mut history = Vec::new();
    let mut y_iterates = Vec::new();
    let mut y_tilde_iterates = Vec::new();
    let mut u_iterates = Vec::new();
    let mut warm: Option<Vec<bool>> = None;
    let mut selector: Option<DerivativeSelector> = None;

    for i in 0.. {
        let py = apply_p(&y, mats)?;
        let zeta: Vec<f64> = p_desired.iter().zip(&py).map(|(a, b)| (a - b) / alpha).collect();
        let sol = obstacle::solve_obstacle_with(&zeta, psi, mats, warm.as_deref(), pdas)?;
        let u = mesh.extend_interior(&sol.w);
        let y_tilde = apply_p(&u, mats)?;
        let residual = mats.l2_distance(&y, &y_tilde);

        history.push(IterationRecord {
            index: i,
            residual,
            constrained_nodes: None,
            strictly_active: sol.strictly_active.len(),
            biactive: sol.biactive.len(),
            pdas_iterations: sol.pdas_iterations,
            y_l2: mats.norm_full(&y, NormKind::L2),
            y_tilde_h1: mats.norm_full(&y_tilde, NormKind::H1),
            u_h1_semi: mats.norm_full(&u, NormKind::H1Semi),
            contraction_ratio: None,
        });
        y_iterates.push(y.clone());
        y_tilde_iterates.push(y_tilde.clone());
        u_iterates.push(u);

        let status = if residual <= config.tol {
            Some(NewtonStatus::Converged)
        } else if i >= config.max_iter {
            Some(NewtonStatus::MaxIterReached)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok(NewtonReport {
                iterations: i,
                status,
                history,
                y_iterates,
                y_tilde_iterates,
                u_iterates,
                final_zeta: zeta,
                final_obstacle: sol,
            });
        }

        let next = DerivativeSelector::from_solution(&sol, config.selector_policy, mats)?;
        let reuse = selector
            .as_ref()
            .is_some_and(|s| s.constrained_mask() == next.constrained_mask());
        if !reuse {
            selector = Some(next);
        }
        let sel = selector.as_ref().expect("selector set above");
        debug_assert!(sel.is_admissible_for(&sol));

        let correction = correction_term(&py, sel, alpha, mats)?;
        let rhs: Vec<f64> = y_tilde.iter().zip(&correction).map(|(a, b)| a + b).collect();
        let step = solve_newton_system(&rhs, sel, alpha, mats)?;

        let record = history.last_mut().expect("pushed above");
        record.constrained_nodes = Some(sel.num_constrained());
        record.contraction_ratio = Some(step.contraction_ratio);

        warm = Some(sol.active_mask);
        y = step.y;
    }
    unreachable!("the loop only exits by returning")
}
