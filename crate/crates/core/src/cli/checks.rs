//! Registry of the diagnostics suite with default sizes and seeds.

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::sweep::Provenance;
use crate::diagnostics::{self, CheckReport};
use crate::{newton, Error, FeMatrices, Result};

pub const CHECK_NAMES: [&str; 5] = [
    "convexity",
    "monotonicity",
    "differentiability",
    "contraction",
    "lipschitz",
];

/// Default `(mesh parameters, trials, seed)` of a registered check.
pub fn defaults(name: &str) -> Option<(&'static [usize], usize, u64)> {
    Some(match name {
        "convexity" => (&[16], 100, 42),
        "monotonicity" => (&[8], 100, 42),
        "differentiability" => (&[16], 1, 42),
        "contraction" => (&[8], 100, 42),
        "lipschitz" => (&[8, 16, 32], 10, 7),
        _ => return None,
    })
}

/// Overrides applied to every requested check.
#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOverrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecksOutput {
    pub provenance: Provenance,
    pub checks: Vec<CheckReport>,
}

impl ChecksOutput {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Validates check names and overrides before any computation.
pub fn validate_request(names: &[String], overrides: &CheckOverrides) -> Result<()> {
    if let Some(bad) = names.iter().find(|n| defaults(n).is_none()) {
        return Err(Error::InvalidArgument(format!(
            "unknown check {bad:?}; registered checks: {}",
            CHECK_NAMES.join(", ")
        )));
    }
    if overrides.trials == Some(0) {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    Ok(())
}

pub fn run_check(name: &str, config: &RunConfig, overrides: &CheckOverrides) -> Result<CheckReport> {
    let (meshes, trials, seed) = defaults(name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown check {name:?}")))?;
    let trials = overrides.trials.unwrap_or(trials);
    let seed = overrides.seed.unwrap_or(seed);
    match name {
        "convexity" => diagnostics::check_pointwise_convexity(&FeMatrices::unit_square(meshes[0])?, trials, seed),
        "monotonicity" => {
            diagnostics::check_derivative_monotonicity(&FeMatrices::unit_square(meshes[0])?, trials, seed)
        }
        "contraction" => {
            diagnostics::check_contraction(&FeMatrices::unit_square(meshes[0])?, config.alpha, trials, seed)
        }
        "differentiability" => {
            let mats = FeMatrices::unit_square(meshes[0])?;
            let problem = config.problem(&mats)?;
            let report = newton::run(&config.newton_config(), &problem, &mats)?;
            diagnostics::check_newton_differentiability(&mats, &report.final_zeta, problem.obstacle.values(), seed)
        }
        "lipschitz" => {
            let mats: Vec<FeMatrices> = meshes.iter().map(|&n| FeMatrices::unit_square(n)).collect::<Result<_>>()?;
            diagnostics::check_lipschitz_scaling(&mats, trials, seed)
        }
        _ => unreachable!("validated by defaults()"),
    }
}

/// Runs the named checks in order; an empty list runs all registered checks.
pub fn run_checks(names: &[String], config: &RunConfig, overrides: &CheckOverrides) -> Result<ChecksOutput> {
    validate_request(names, overrides)?;
    let names: Vec<String> = if names.is_empty() {
        CHECK_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        names.to_vec()
    };
    let checks = names
        .iter()
        .map(|n| run_check(n, config, overrides))
        .collect::<Result<Vec<_>>>()?;
    let mut provenance = Provenance::new(config, None);
    if let Some(seed) = overrides.seed {
        provenance.seed = seed;
    }
    Ok(ChecksOutput { provenance, checks })
}
