mod support;

use support::checks;

#[test]
fn tape_gradients_match_finite_differences() {
    let err = checks::gradient_rel_err(20);
    assert!(err < 1e-6, "max relative error {err:e}");
}

#[test]
fn r_plus_delta_is_the_objective_subgradient() {
    let err = checks::conditional_gradient_err(100);
    assert!(err <= 1e-12, "max abs difference {err:e}");
}

#[test]
fn closed_form_step_beats_the_grid() {
    let report = checks::step_size_optimality(300);
    assert!(report.all_in_unit_interval);
    assert!(
        report.worst_margin >= -1e-8,
        "margin {:e}",
        report.worst_margin
    );
}

#[test]
fn multi_step_solve_matches_dual_oracle() {
    let r = checks::dual_oracle(0, 100_000);
    assert!(
        (r.solver_dual - r.oracle_dual).abs() <= 1e-4,
        "solver {} oracle {} after {} iterations",
        r.solver_dual,
        r.oracle_dual,
        r.iterations
    );
    assert!(
        r.worst_decrease <= 1e-12,
        "dual decreased by {:e}",
        r.worst_decrease
    );
}

#[test]
fn dfw_matches_sgd_when_gamma_clips_to_one() {
    let r = checks::sgd_equivalence(40);
    assert!(r.compared >= 20, "only {} instances clipped", r.compared);
    assert!(r.worst_diff <= 1e-15, "difference {:e}", r.worst_diff);
}

#[test]
fn first_solver_iteration_is_the_single_step_update() {
    let r = checks::single_step_agreement(100);
    assert!(r.gamma_diff <= 1e-15, "gamma difference {:e}", r.gamma_diff);
    assert!(
        r.update_diff <= 1e-15,
        "update difference {:e}",
        r.update_diff
    );
}

#[test]
fn smoothing_switch_rule_holds() {
    assert_eq!(checks::smoothing_switch_violations(10_000), 0);
}
