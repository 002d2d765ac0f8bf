//! Mesh sweep with experimental orders of convergence.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::assembly::NormKind;
use crate::newton::{self, NewtonReport, NewtonStatus};
use crate::{Error, FeMatrices, Result};

pub const CSV_HEADER: &str = "h,iterations,final_residue,eoc_l2_y,eoc_h1_ytilde,eoc_h10_u";

/// `EOC_i` of an iterate history at index `i`:
///
/// ```text
///   log(d_i / d_{i−1}) / log(d_{i−1} / d_{i−2}),  d_k = ‖v_k − v_{k−1}‖.
/// ```
pub fn compute_eoc_at(history: &[Vec<f64>], i: usize, kind: NormKind, mats: &FeMatrices) -> Result<f64> {
    if i < 3 || i >= history.len() {
        return Err(Error::UndefinedEoc(format!(
            "index {i} needs iterates i−3..i, history has {} entries",
            history.len()
        )));
    }
    let diff = |k: usize| {
        let d: Vec<f64> = history[k].iter().zip(&history[k - 1]).map(|(a, b)| a - b).collect();
        mats.norm_full(&d, kind)
    };
    eoc_from_differences(diff(i - 2), diff(i - 1), diff(i))
}

/// `EOC` at the last iterate of `history`.
pub fn compute_eoc(history: &[Vec<f64>], kind: NormKind, mats: &FeMatrices) -> Result<f64> {
    if history.len() < 4 {
        return Err(Error::UndefinedEoc(format!(
            "need at least 4 iterates, got {}",
            history.len()
        )));
    }
    compute_eoc_at(history, history.len() - 1, kind, mats)
}

/// EOC from three consecutive difference norms `d_{i−2}, d_{i−1}, d_i`.
pub fn eoc_from_differences(d2: f64, d1: f64, d0: f64) -> Result<f64> {
    if d2 == 0.0 || d1 == 0.0 || d0 == 0.0 {
        return Err(Error::UndefinedEoc("zero difference between iterates".into()));
    }
    let eoc = (d0 / d1).ln() / (d1 / d2).ln();
    if !eoc.is_finite() {
        return Err(Error::UndefinedEoc("equal consecutive differences".into()));
    }
    Ok(eoc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub h: f64,
    pub iterations: usize,
    pub final_residue: f64,
    pub status: NewtonStatus,
    pub eoc_l2_y: Option<f64>,
    pub eoc_h1_ytilde: Option<f64>,
    pub eoc_h10_u: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: RunConfig,
    pub seed: u64,
    /// Seconds since the Unix epoch; absent unless requested so that output
    /// is reproducible byte for byte.
    pub timestamp: Option<u64>,
    pub version: String,
    /// Iterate index at which the EOC columns are evaluated.
    pub eoc_index: Option<usize>,
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn new(config: &RunConfig, timestamp: Option<u64>) -> Self {
        Self {
            config: config.clone(),
            seed: config.seed,
            timestamp,
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            eoc_index: None,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Ordered by decreasing `h`.
    pub rows: Vec<SweepRow>,
    pub provenance: Provenance,
}

/// Runs the Newton method on every mesh and evaluates the EOC columns at
/// the largest iterate index reached by all runs.
pub fn run_sweep(config: &RunConfig, meshes: &[usize], timestamp: Option<u64>) -> Result<SweepResult> {
    if meshes.is_empty() {
        return Err(Error::InvalidArgument("mesh list is empty".into()));
    }
    config.validate()?;
    if let Some(&n) = meshes.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidArgument(format!("mesh parameter {n} is below 2")));
    }
    let mut ns = meshes.to_vec();
    ns.sort_unstable();
    ns.dedup();

    let newton_config = config.newton_config();
    let mut runs: Vec<(FeMatrices, NewtonReport)> = Vec::with_capacity(ns.len());
    for &n in &ns {
        let mats = FeMatrices::unit_square(n)?;
        let problem = config.problem(&mats)?;
        let report = newton::run(&newton_config, &problem, &mats)?;
        runs.push((mats, report));
    }
    let eoc_index = runs.iter().map(|(_, r)| r.iterations).min().expect("nonempty");

    let mut rows = Vec::with_capacity(runs.len());
    for (mats, report) in &runs {
        let eoc = |hist: &[Vec<f64>], kind| compute_eoc_at(hist, eoc_index, kind, mats).ok();
        let n = mats.mesh().n();
        rows.push(SweepRow {
            n,
            h: 1.0 / n as f64,
            iterations: report.iterations,
            final_residue: report.final_residual(),
            status: report.status,
            eoc_l2_y: eoc(&report.y_iterates, NormKind::L2),
            eoc_h1_ytilde: eoc(&report.y_tilde_iterates, NormKind::H1),
            eoc_h10_u: eoc(&report.u_iterates, config.u_norm),
        });
    }
    rows.sort_by(|a, b| b.h.total_cmp(&a.h));

    let mut provenance = Provenance::new(config, timestamp);
    provenance.eoc_index = Some(eoc_index);
    provenance.notes.push(format!(
        "eoc_h10_u uses the {} norm of the control",
        match config.u_norm {
            NormKind::H1Semi => "H1 semi",
            NormKind::H1 => "full H1",
            NormKind::L2 => "L2",
        }
    ));
    Ok(SweepResult { rows, provenance })
}

/// Shortest round-trip decimal; scientific notation outside `[1e-4, 1e16)`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl SweepResult {
    /// CSV table; a `status` column is appended only when some run did not
    /// converge.
    pub fn to_csv(&self) -> String {
        let failed = self.rows.iter().any(|r| r.status != NewtonStatus::Converged);
        let mut out = String::from(CSV_HEADER);
        if failed {
            out.push_str(",status");
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                r.h,
                r.iterations,
                format_float(r.final_residue),
                opt(r.eoc_l2_y),
                opt(r.eoc_h1_ytilde),
                opt(r.eoc_h10_u)
            );
            if failed {
                out.push_str(match r.status {
                    NewtonStatus::Converged => ",converged",
                    NewtonStatus::MaxIterReached => ",max_iter_reached",
                });
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_history(diffs: &[f64]) -> Vec<Vec<f64>> {
        let mut v = vec![vec![0.0; 9]];
        for &d in diffs {
            let last = v.last().unwrap().clone();
            v.push(last.iter().map(|x| x + d).collect());
        }
        v
    }

    #[test]
    fn quadratic_history_gives_two() {
        let rho: f64 = 0.5;
        let diffs: Vec<f64> = (1..=5).map(|i| rho.powi(1 << i)).collect();
        let mats = FeMatrices::unit_square(2).unwrap();
        let eoc = compute_eoc(&scalar_history(&diffs), NormKind::L2, &mats).unwrap();
        assert!((eoc - 2.0).abs() < 1e-10, "{eoc}");
    }

    #[test]
    fn linear_history_gives_one() {
        let rho: f64 = 0.3;
        let diffs: Vec<f64> = (1..=5).map(|i| rho.powi(i)).collect();
        let mats = FeMatrices::unit_square(2).unwrap();
        let eoc = compute_eoc(&scalar_history(&diffs), NormKind::H1, &mats).unwrap();
        assert!((eoc - 1.0).abs() < 1e-10, "{eoc}");
    }

    #[test]
    fn undefined_cases() {
        let mats = FeMatrices::unit_square(2).unwrap();
        let short = scalar_history(&[1.0, 0.5]);
        assert!(matches!(compute_eoc(&short, NormKind::L2, &mats), Err(Error::UndefinedEoc(_))));
        let stalled = scalar_history(&[1.0, 0.5, 0.0]);
        assert!(matches!(compute_eoc(&stalled, NormKind::L2, &mats), Err(Error::UndefinedEoc(_))));
        assert!(eoc_from_differences(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn empty_mesh_list_rejected() {
        let cfg = RunConfig::default();
        assert!(matches!(run_sweep(&cfg, &[], None), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn float_formatting_round_trips() {
        for x in [0.0625, 7.3259e-11, 1.8745, 2.0, 1e20, -3.5e-7] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(0.0625), "0.0625");
        assert_eq!(format_float(7.3259e-11), "7.3259e-11");
    }
}
