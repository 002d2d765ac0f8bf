//! Seeded property checks on the discrete operators.
//!
//! Each check draws i.i.d. nodal fields uniform in `[-10, 10]` from a
//! ChaCha8 generator and reports the worst violation of its inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assembly::{dot, FeMatrices, NormKind};
use crate::newton::solve_newton_system_unchecked;
use crate::obstacle::{self, solve_obstacle, ObstacleSolution, PdasOptions};
use crate::operators::{DerivativeSelector, SelectorPolicy};
use crate::{Error, Result};

/// Range of the random nodal fields.
pub const FIELD_RANGE: f64 = 10.0;
/// Constant obstacle used by the convexity and Lipschitz checks; active on a
/// nonempty set for loads drawn from [`FIELD_RANGE`].
pub const CHECK_OBSTACLE: f64 = -0.01;
pub const CONVEXITY_SLACK: f64 = 1e-9;
pub const MONOTONICITY_SLACK: f64 = 1e-12;
pub const CONTRACTION_SLACK: f64 = 1e-9;
/// Required decay of the differentiability ratio from the first to the last scale.
pub const DIFFERENTIABILITY_DECAY: f64 = 0.1;
/// Allowed growth of the Lipschitz ratio over the coarsest mesh.
pub const LIPSCHITZ_FACTOR: f64 = 2.0;

const CONVEX_WEIGHTS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const PERTURBATION_SCALES: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
const LIPSCHITZ_SCALES: [f64; 3] = [1e-1, 1e-2, 1e-3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_violation: f64,
    pub passed: bool,
    /// Per-trial values, layout specific to the check.
    pub data: serde_json::Value,
}

impl CheckReport {
    fn new(name: &str, trials: usize, seed: u64, tolerance: f64, max_violation: f64,
           data: serde_json::Value) -> Self {
        Self {
            name: name.to_string(),
            trials,
            seed,
            tolerance,
            max_violation,
            passed: max_violation <= tolerance,
            data,
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-FIELD_RANGE..=FIELD_RANGE)).collect()
}

/// Random constrained node mask with a random density.
pub fn random_mask(rng: &mut ChaCha8Rng, len: usize) -> Vec<bool> {
    let density: f64 = rng.random_range(0.0..=1.0);
    (0..len).map(|_| rng.random_bool(density)).collect()
}

fn require_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    Ok(())
}

fn constant(value: f64, mats: &FeMatrices) -> Vec<f64> {
    vec![value; mats.mesh().num_nodes()]
}

/// Largest nodal excess of `S_h(λ z₁ + (1−λ) z₂)` over
/// `λ S_h(z₁) + (1−λ) S_h(z₂)` for `λ` in `weights`.
pub fn convexity_violation(
    mats: &FeMatrices,
    z1: &[f64],
    z2: &[f64],
    psi: &[f64],
    weights: &[f64],
) -> Result<f64> {
    let s1 = solve_obstacle(z1, psi, mats)?;
    let s2 = solve_obstacle(z2, psi, mats)?;
    let mut worst = 0.0f64;
    for &lam in weights {
        let z: Vec<f64> = z1.iter().zip(z2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let s = solve_obstacle(&z, psi, mats)?;
        for k in 0..s.w.len() {
            worst = worst.max(s.w[k] - (lam * s1.w[k] + (1.0 - lam) * s2.w[k]));
        }
    }
    Ok(worst)
}

/// `S_h(λ z₁ + (1−λ) z₂) ≤ λ S_h(z₁) + (1−λ) S_h(z₂)` nodewise for
/// `λ ∈ {0, ¼, ½, ¾, 1}`.
pub fn check_pointwise_convexity(mats: &FeMatrices, trials: usize, seed: u64) -> Result<CheckReport> {
    require_trials(trials)?;
    let nn = mats.mesh().num_nodes();
    let psi = constant(CHECK_OBSTACLE, mats);
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    let mut per_trial = Vec::with_capacity(trials);
    for _ in 0..trials {
        let z1 = random_field(&mut rng, nn);
        let z2 = random_field(&mut rng, nn);
        let violation = convexity_violation(mats, &z1, &z2, &psi, &CONVEX_WEIGHTS)?;
        worst = worst.max(violation);
        per_trial.push(violation);
    }
    Ok(CheckReport::new("convexity", trials, seed, CONVEXITY_SLACK, worst, json!(per_trial)))
}

/// `⟨z, G_N z⟩ ≥ 0` for random loads `z = M a` and random node sets `N`.
///
/// The violation of a trial is `−⟨z, G z⟩ / (‖z‖₂ ‖G z‖₂)`, clamped at zero.
pub fn check_derivative_monotonicity(mats: &FeMatrices, trials: usize, seed: u64) -> Result<CheckReport> {
    require_trials(trials)?;
    let mesh = mats.mesh();
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    let mut per_trial = Vec::with_capacity(trials);
    for _ in 0..trials {
        let a = random_field(&mut rng, mesh.num_nodes());
        let sel = DerivativeSelector::from_mask(random_mask(&mut rng, mesh.num_interior()), mats)?;
        let w = sel.apply(&a, mats)?;
        let load = mesh.restrict_interior(&mats.mass().mul_vec(&a));
        let pairing = dot(&load, &w);
        let scale = dot(&load, &load).sqrt() * dot(&w, &w).sqrt();
        let violation = if scale > 0.0 { (-pairing / scale).max(0.0) } else { 0.0 };
        worst = worst.max(violation);
        per_trial.push(json!({
            "pairing": pairing,
            "scale": scale,
            "constrained": sel.num_constrained(),
        }));
    }
    Ok(CheckReport::new(
        "monotonicity",
        trials,
        seed,
        MONOTONICITY_SLACK,
        worst,
        json!(per_trial),
    ))
}

/// Increment `S_h(ζ + z) − S_h(ζ)` from the base solution at `ζ`.
///
/// Solved as the shifted obstacle problem for `δ = w − w₀` with load
/// `(M z)|_V − λ₀` and obstacle `ψ − w₀`, where `λ₀` is the base multiplier
/// (zero off the contact set). Its multiplier equals that of `S_h(ζ + z)`,
/// and `δ` carries no cancellation error from the size of `w₀`.
pub fn obstacle_increment(
    mats: &FeMatrices,
    base: &ObstacleSolution,
    psi_interior: &[f64],
    z: &[f64],
) -> Result<ObstacleSolution> {
    let mesh = mats.mesh();
    let m = mesh.num_interior();
    let mut contact = vec![false; m];
    for &k in base.strictly_active.iter().chain(&base.biactive) {
        contact[k] = true;
    }
    let mz = mesh.restrict_interior(&mats.mass().mul_vec(z));
    let load: Vec<f64> = (0..m)
        .map(|k| if contact[k] { mz[k] - base.lambda[k] } else { mz[k] })
        .collect();
    let shifted_psi: Vec<f64> = (0..m)
        .map(|k| if contact[k] { 0.0 } else { psi_interior[k] - base.w[k] })
        .collect();
    obstacle::solve_obstacle_load(&load, &shifted_psi, mats, Some(&contact), &PdasOptions::default())
}

/// Remainder ratios of Newton differentiability along `direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentiabilityRatios {
    pub scales: Vec<f64>,
    /// `‖δ − G z‖_{L²} / ‖z‖_{L²}` with `δ` from [`obstacle_increment`].
    pub ratios: Vec<f64>,
    /// Same ratio with `δ = S_h(ζ+z) − S_h(ζ)` formed by subtraction;
    /// bounded below by round-off of order `ε ‖S_h(ζ)‖ / ‖z‖`.
    pub direct_ratios: Vec<f64>,
}

/// Ratios `‖S(ζ+z) − S(ζ) − G z‖_{L²} / ‖z‖_{L²}` for `z = t d / ‖d‖`,
/// `t = 10⁻¹, …, 10⁻⁶`, with `G` taken at the perturbed point.
pub fn differentiability_ratios(
    mats: &FeMatrices,
    base: &[f64],
    psi: &[f64],
    direction: &[f64],
) -> Result<DifferentiabilityRatios> {
    let mesh = mats.mesh();
    let nn = mesh.num_nodes();
    if base.len() != nn || psi.len() != nn || direction.len() != nn {
        return Err(Error::InvalidArgument("fields do not match the mesh".into()));
    }
    let d_norm = mats.norm_full(direction, NormKind::L2);
    if d_norm == 0.0 {
        return Err(Error::InvalidArgument("perturbation direction is zero".into()));
    }
    let psi_interior = mesh.restrict_interior(psi);
    let s0 = solve_obstacle(base, psi, mats)?;
    let remainder_ratio = |delta: &[f64], gz: &[f64], z: &[f64]| {
        let r: Vec<f64> = delta.iter().zip(gz).map(|(a, b)| a - b).collect();
        mats.norm_full(&mesh.extend_interior(&r), NormKind::L2) / mats.norm_full(z, NormKind::L2)
    };
    let mut ratios = Vec::with_capacity(PERTURBATION_SCALES.len());
    let mut direct_ratios = Vec::with_capacity(PERTURBATION_SCALES.len());
    for &t in &PERTURBATION_SCALES {
        let z: Vec<f64> = direction.iter().map(|d| t * d / d_norm).collect();
        let inc = obstacle_increment(mats, &s0, &psi_interior, &z)?;
        let sel = DerivativeSelector::from_solution(&inc, SelectorPolicy::StrictOnly, mats)?;
        let gz = sel.apply(&z, mats)?;
        ratios.push(remainder_ratio(&inc.w, &gz, &z));

        let shifted: Vec<f64> = base.iter().zip(&z).map(|(b, dz)| b + dz).collect();
        let s = solve_obstacle(&shifted, psi, mats)?;
        let sel = DerivativeSelector::from_solution(&s, SelectorPolicy::StrictOnly, mats)?;
        let gz = sel.apply(&z, mats)?;
        let delta: Vec<f64> = s.w.iter().zip(&s0.w).map(|(a, b)| a - b).collect();
        direct_ratios.push(remainder_ratio(&delta, &gz, &z));
    }
    Ok(DifferentiabilityRatios {
        scales: PERTURBATION_SCALES.to_vec(),
        ratios,
        direct_ratios,
    })
}

/// Newton differentiability of `S_h` at `base` along a seeded random
/// direction. The violation is the ratio at the smallest scale divided by
/// the ratio at the largest, or zero when the former vanishes.
pub fn check_newton_differentiability(
    mats: &FeMatrices,
    base: &[f64],
    psi: &[f64],
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = rng(seed);
    let direction = random_field(&mut rng, mats.mesh().num_nodes());
    let r = differentiability_ratios(mats, base, psi, &direction)?;
    let (first, last) = (r.ratios[0], r.ratios[r.ratios.len() - 1]);
    let violation = if last == 0.0 {
        0.0
    } else if first == 0.0 {
        f64::INFINITY
    } else {
        last / first
    };
    Ok(CheckReport::new(
        "differentiability",
        1,
        seed,
        DIFFERENTIABILITY_DECAY,
        violation,
        serde_json::to_value(&r)?,
    ))
}

/// `‖y‖_{L²} ≤ ‖rhs‖_{L²}` for the Newton system with random rhs and node sets.
pub fn check_contraction(mats: &FeMatrices, alpha: f64, trials: usize, seed: u64) -> Result<CheckReport> {
    require_trials(trials)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let mesh = mats.mesh();
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    let mut per_trial = Vec::with_capacity(trials);
    for _ in 0..trials {
        let rhs = random_field(&mut rng, mesh.num_nodes());
        let sel = DerivativeSelector::from_mask(random_mask(&mut rng, mesh.num_interior()), mats)?;
        let step = solve_newton_system_unchecked(&rhs, &sel, alpha, mats)?;
        worst = worst.max(step.contraction_ratio - 1.0);
        per_trial.push(json!({
            "ratio": step.contraction_ratio,
            "constrained": sel.num_constrained(),
        }));
    }
    Ok(CheckReport::new(
        "contraction",
        trials,
        seed,
        CONTRACTION_SLACK,
        worst.max(0.0),
        json!(per_trial),
    ))
}

fn lipschitz_ratio(mats: &FeMatrices, u: &[f64], base: &ObstacleSolution, z: &[f64], psi: &[f64]) -> Result<f64> {
    let shifted: Vec<f64> = u.iter().zip(z).map(|(a, b)| a + b).collect();
    let s = solve_obstacle(&shifted, psi, mats)?;
    let diff: Vec<f64> = s.w.iter().zip(&base.w).map(|(a, b)| a - b).collect();
    Ok(mats.norm_full(&mats.mesh().extend_interior(&diff), NormKind::L2) / mats.norm_full(z, NormKind::L2))
}

/// Mesh dependence of `‖S(u+z) − S(u)‖_{L²} / ‖z‖_{L²}` for shrinking `z`.
///
/// The violation is the largest per-mesh maximum divided by the maximum on
/// the first (coarsest) mesh.
pub fn check_lipschitz_scaling(meshes: &[FeMatrices], trials: usize, seed: u64) -> Result<CheckReport> {
    require_trials(trials)?;
    if meshes.is_empty() {
        return Err(Error::InvalidArgument("no meshes given".into()));
    }
    let mut rng = rng(seed);
    let mut maxima = Vec::with_capacity(meshes.len());
    for mats in meshes {
        let nn = mats.mesh().num_nodes();
        let psi = constant(CHECK_OBSTACLE, mats);
        let mut max_ratio = 0.0f64;
        for _ in 0..trials {
            let u = random_field(&mut rng, nn);
            let d = random_field(&mut rng, nn);
            let d_norm = mats.norm_full(&d, NormKind::L2);
            let base = solve_obstacle(&u, &psi, mats)?;
            for &t in &LIPSCHITZ_SCALES {
                let z: Vec<f64> = d.iter().map(|v| t * v / d_norm).collect();
                max_ratio = max_ratio.max(lipschitz_ratio(mats, &u, &base, &z, &psi)?);
            }
        }
        maxima.push(max_ratio);
    }
    let coarse = maxima[0];
    let overall = maxima.iter().copied().fold(0.0f64, f64::max);
    let violation = if coarse > 0.0 { overall / coarse } else { f64::INFINITY };
    let ns: Vec<usize> = meshes.iter().map(|m| m.mesh().n()).collect();
    Ok(CheckReport::new(
        "lipschitz",
        trials,
        seed,
        LIPSCHITZ_FACTOR,
        violation,
        json!({ "n": ns, "max_ratio": maxima }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trials_rejected() {
        let mats = FeMatrices::unit_square(4).unwrap();
        assert!(check_pointwise_convexity(&mats, 0, 1).is_err());
        assert!(check_derivative_monotonicity(&mats, 0, 1).is_err());
        assert!(check_contraction(&mats, 1e-5, 0, 1).is_err());
    }

    #[test]
    fn convexity_endpoints_and_equal_loads_are_exact() {
        let mats = FeMatrices::unit_square(8).unwrap();
        let nn = mats.mesh().num_nodes();
        let psi = constant(CHECK_OBSTACLE, &mats);
        let mut r = rng(3);
        let z1 = random_field(&mut r, nn);
        let z2 = random_field(&mut r, nn);
        assert_eq!(convexity_violation(&mats, &z1, &z2, &psi, &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(convexity_violation(&mats, &z1, &z1, &psi, &CONVEX_WEIGHTS).unwrap(), 0.0);
    }

    #[test]
    fn convexity_holds_on_small_mesh() {
        let mats = FeMatrices::unit_square(8).unwrap();
        let report = check_pointwise_convexity(&mats, 10, 42).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn monotonicity_trivial_cases() {
        let mats = FeMatrices::unit_square(6).unwrap();
        let m = mats.mesh().num_interior();
        let all = DerivativeSelector::from_mask(vec![true; m], &mats).unwrap();
        let a = vec![1.0; mats.mesh().num_nodes()];
        assert!(all.apply(&a, &mats).unwrap().iter().all(|v| *v == 0.0));
        let none = DerivativeSelector::from_mask(vec![false; m], &mats).unwrap();
        assert!(none.apply(&vec![0.0; a.len()], &mats).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn contraction_trivial_cases() {
        let mats = FeMatrices::unit_square(6).unwrap();
        let m = mats.mesh().num_interior();
        let all = DerivativeSelector::from_mask(vec![true; m], &mats).unwrap();
        let rhs: Vec<f64> = (0..mats.mesh().num_nodes()).map(|i| (i as f64).sin()).collect();
        let step = solve_newton_system_unchecked(&rhs, &all, 1e-5, &mats).unwrap();
        assert_eq!(step.y, rhs);
        let none = DerivativeSelector::from_mask(vec![false; m], &mats).unwrap();
        let zero = solve_newton_system_unchecked(&vec![0.0; rhs.len()], &none, 1e-5, &mats).unwrap();
        assert!(zero.y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_direction_rejected() {
        let mats = FeMatrices::unit_square(4).unwrap();
        let nn = mats.mesh().num_nodes();
        let r = differentiability_ratios(&mats, &vec![0.0; nn], &vec![-5.0; nn], &vec![0.0; nn]);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn inactive_obstacle_gives_linear_map() {
        let mats = FeMatrices::unit_square(8).unwrap();
        let nn = mats.mesh().num_nodes();
        let mut r = rng(5);
        let base = random_field(&mut r, nn);
        let d = random_field(&mut r, nn);
        let r = differentiability_ratios(&mats, &base, &vec![-1e9; nn], &d).unwrap();
        assert!(r.ratios.iter().all(|v| *v == 0.0), "{r:?}");
    }

    #[test]
    fn linear_regime_ratio_is_reproducible() {
        let mats = FeMatrices::unit_square(8).unwrap();
        let nn = mats.mesh().num_nodes();
        let psi = vec![-1e9; nn];
        let mut r = rng(9);
        let d = random_field(&mut r, nn);
        let z: Vec<f64> = d.iter().map(|v| 1e-3 * v).collect();
        let u1 = random_field(&mut r, nn);
        let u2 = random_field(&mut r, nn);
        let b1 = solve_obstacle(&u1, &psi, &mats).unwrap();
        let b2 = solve_obstacle(&u2, &psi, &mats).unwrap();
        let r1 = lipschitz_ratio(&mats, &u1, &b1, &z, &psi).unwrap();
        let r2 = lipschitz_ratio(&mats, &u2, &b2, &z, &psi).unwrap();
        assert!((r1 - r2).abs() <= 1e-6 * r1, "{r1} {r2}");
    }

    #[test]
    fn increment_matches_subtraction() {
        let mats = FeMatrices::unit_square(8).unwrap();
        let mesh = mats.mesh();
        let nn = mesh.num_nodes();
        let psi = constant(CHECK_OBSTACLE, &mats);
        let psi_interior = mesh.restrict_interior(&psi);
        let mut r = rng(21);
        let mut changed = 0;
        for _ in 0..10 {
            let base = random_field(&mut r, nn);
            let z = random_field(&mut r, nn);
            let s0 = solve_obstacle(&base, &psi, &mats).unwrap();
            let shifted: Vec<f64> = base.iter().zip(&z).map(|(a, b)| a + b).collect();
            let s1 = solve_obstacle(&shifted, &psi, &mats).unwrap();
            let inc = obstacle_increment(&mats, &s0, &psi_interior, &z).unwrap();
            for k in 0..s1.w.len() {
                assert!((s0.w[k] + inc.w[k] - s1.w[k]).abs() <= 1e-12, "node {k}");
                assert!((inc.lambda[k] - s1.lambda[k]).abs() <= 1e-9 * (1.0 + s1.lambda[k].abs()));
            }
            if s0.strictly_active != s1.strictly_active {
                changed += 1;
            }
        }
        assert!(changed > 0, "perturbations never moved the active set");
    }

    #[test]
    fn remainder_is_nonzero_when_the_active_set_moves() {
        let mats = FeMatrices::unit_square(8).unwrap();
        let nn = mats.mesh().num_nodes();
        let psi = constant(CHECK_OBSTACLE, &mats);
        let mut moved = 0;
        for seed in 0..20 {
            let mut r = rng(seed);
            let base = random_field(&mut r, nn);
            let d = random_field(&mut r, nn);
            let out = differentiability_ratios(&mats, &base, &psi, &d).unwrap();
            assert!(out.ratios.iter().all(|v| v.is_finite() && *v >= 0.0));
            if out.ratios[0] > 0.0 {
                moved += 1;
                assert!(out.ratios[PERTURBATION_SCALES.len() - 1] <= DIFFERENTIABILITY_DECAY * out.ratios[0]);
            }
        }
        assert!(moved > 0);
    }

    #[test]
    fn checks_are_deterministic() {
        let mats = FeMatrices::unit_square(6).unwrap();
        let a = check_contraction(&mats, 1e-5, 5, 11).unwrap();
        let b = check_contraction(&mats, 1e-5, 5, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
