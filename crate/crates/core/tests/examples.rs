//! Every example runs to completion.

#[path = "../examples/ablation.rs"]
mod ablation;
#[path = "../examples/covariance_projection.rs"]
mod covariance_projection;
#[path = "../examples/keypoint_selection.rs"]
mod keypoint_selection;
#[path = "../examples/monte_carlo_check.rs"]
mod monte_carlo_check;
#[path = "../examples/pose_solve.rs"]
mod pose_solve;
#[path = "../examples/simulate_and_run.rs"]
mod simulate_and_run;
#[path = "../examples/trajectory_eval.rs"]
mod trajectory_eval;

#[test]
fn covariance_projection_runs() {
    covariance_projection::run_example().unwrap();
}

#[test]
fn monte_carlo_check_runs() {
    monte_carlo_check::run_example().unwrap();
}

#[test]
fn keypoint_selection_runs() {
    keypoint_selection::run_example().unwrap();
}

#[test]
fn pose_solve_runs() {
    pose_solve::run_example().unwrap();
}

#[test]
fn simulate_and_run_runs() {
    simulate_and_run::run_example().unwrap();
}

#[test]
fn trajectory_eval_runs() {
    trajectory_eval::run_example().unwrap();
}

#[test]
fn ablation_runs() {
    ablation::run_with(1, 10).unwrap();
}
