use obstacle_control::cli::RunConfig;
use obstacle_control::newton::{self, solve_newton_system, InitialGuess, NewtonStatus};
use obstacle_control::operators::apply_p;
use obstacle_control::{DerivativeSelector, FeMatrices, NormKind, SelectorPolicy};

fn preset_report(n: usize) -> (RunConfig, FeMatrices, newton::Problem, newton::NewtonReport) {
    let cfg = RunConfig::preset("paper").unwrap();
    let mats = FeMatrices::unit_square(n).unwrap();
    let problem = cfg.problem(&mats).unwrap();
    let report = newton::run(&cfg.newton_config(), &problem, &mats).unwrap();
    (cfg, mats, problem, report)
}

#[test]
fn coarse_preset_run() {
    let (cfg, _, _, report) = preset_report(16);
    assert_eq!(report.status, NewtonStatus::Converged);
    assert!(report.iterations.abs_diff(6) <= 1);
    assert!(report.final_residual() <= cfg.tol);
    assert_eq!(report.history.len(), report.iterations + 1);
    assert!(report.history.iter().all(|r| r.contraction_ratio.is_none_or(|c| c <= 1.0 + 1e-9)));
}

#[test]
fn converged_selector_reproduces_the_fixed_point() {
    let (cfg, mats, problem, report) = preset_report(64);
    let y = report.final_y();
    let sel = DerivativeSelector::from_solution(&report.final_obstacle, SelectorPolicy::StrictOnly, &mats).unwrap();
    // Newton step from the converged iterate
    let py = apply_p(y, &mats).unwrap();
    let corr = apply_p(&sel.apply_full(&py, &mats).unwrap(), &mats).unwrap();
    let rhs: Vec<f64> = report
        .final_y_tilde()
        .iter()
        .zip(&corr)
        .map(|(a, b)| a + b / cfg.alpha)
        .collect();
    let next = solve_newton_system(&rhs, &sel, cfg.alpha, &mats).unwrap().y;
    assert!(mats.l2_distance(&next, y) <= cfg.tol);

    // discrete optimality system: z = P(y − y_D), y = P u, u = S(−z/α)
    let diff: Vec<f64> = y.iter().zip(problem.desired.values()).map(|(a, b)| a - b).collect();
    let z = apply_p(&diff, &mats).unwrap();
    let load: Vec<f64> = z.iter().map(|v| -v / cfg.alpha).collect();
    let u = obstacle_control::obstacle::solve_obstacle(&load, problem.obstacle.values(), &mats).unwrap();
    let y_of_u = apply_p(&mats.mesh().extend_interior(&u.w), &mats).unwrap();
    assert!(mats.l2_distance(&y_of_u, y) <= 1e-7);
}

#[test]
fn restart_from_converged_state_stops_immediately() {
    let (cfg, mats, problem, report) = preset_report(32);
    let mut config = cfg.newton_config();
    config.y0 = InitialGuess::Custom(report.final_y().to_vec());
    let again = newton::run(&config, &problem, &mats).unwrap();
    assert_eq!(again.iterations, 0);
    assert!(mats.l2_distance(again.final_y(), report.final_y()) == 0.0);
    assert!(mats.norm_full(again.final_u(), NormKind::H1Semi) > 0.0);
}

#[test]
fn multiplier_is_supported_on_the_contact_region() {
    let (_, _, _, report) = preset_report(64);
    let sol = &report.final_obstacle;
    assert!(!sol.strictly_active.is_empty());
    for &k in &sol.inactive {
        assert!(sol.lambda[k].abs() <= 1e-8);
    }
    for &k in &sol.strictly_active {
        assert!(sol.lambda[k] > 0.0 && sol.w[k] == -5.0);
    }
}
