//! Two-frame pose optimization.
//!
//! Solves for the camera pose `T` (camera to world) that minimizes
//!
//! ```text
//! sum_i  r_i^T S_i^-1 r_i,   r_i = p_prev_i - T * p_curr_i,
//! S_i = Sigma_prev_i + R Sigma_curr_i R^T
//! ```
//!
//! with Levenberg-Marquardt on SE(3) using the right-multiplicative update
//! `T <- T * exp(xi)`. Because `S_i` depends on the rotation, it is recomputed
//! at every linearization point and held fixed while solving the damped
//! normal equations. Steps are accepted only if they lower the full cost.

use nalgebra::{Cholesky, Matrix3x6, Matrix6, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{hat, Frame, Landmark3D, Mat3, PoseSE3, Vec3, Vec6};

/// Condition number above which a combined covariance is regularized.
pub const MAX_CONDITION: f64 = 1e12;
const REGULARIZATION: f64 = 1e-9;
const LAMBDA_MAX: f64 = 1e16;
const DEGENERATE_SINGULAR_VALUE: f64 = 1e-9;

/// How per-pair covariances are formed; the non-`Full` modes are ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// `Sigma_prev + R Sigma_curr R^T` with all off-diagonal terms.
    #[default]
    Full,
    /// As `Full` after zeroing the off-diagonals of both inputs.
    Diagonal,
    /// Unweighted least squares.
    Identity,
    /// As `Full` after dividing each frame's covariances by the mean of
    /// `det(Sigma)^(1/3)` over that frame.
    ScaleAgnostic,
}

impl CovarianceMode {
    pub const ALL: [CovarianceMode; 4] = [
        CovarianceMode::Full,
        CovarianceMode::Diagonal,
        CovarianceMode::Identity,
        CovarianceMode::ScaleAgnostic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CovarianceMode::Full => "full",
            CovarianceMode::Diagonal => "diagonal",
            CovarianceMode::Identity => "identity",
            CovarianceMode::ScaleAgnostic => "scale_agnostic",
        }
    }
}

impl std::str::FromStr for CovarianceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CovarianceMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("covariance_mode", format!("unknown mode `{s}`")))
    }
}

/// A landmark seen in the previous frame (already in world coordinates) and
/// its match in the current camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub prev_world: Landmark3D,
    pub curr_camera: Landmark3D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePairProblem {
    pub pairs: Vec<MatchedPair>,
    pub initial_pose: PoseSE3,
    pub covariance_mode: CovarianceMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LMConfig {
    pub max_iters: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Convergence on relative cost decrease.
    pub cost_tol: f64,
    /// Convergence on the update norm, with the translational part measured
    /// relative to the spread of the landmarks.
    pub step_tol: f64,
}

impl Default for LMConfig {
    fn default() -> Self {
        LMConfig {
            max_iters: 100,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.3,
            cost_tol: 1e-10,
            step_tol: 1e-10,
        }
    }
}

impl LMConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let checks = [
            ("max_iters", self.max_iters as f64),
            ("lambda_init", self.lambda_init),
            ("lambda_up", self.lambda_up),
            ("lambda_down", self.lambda_down),
            ("cost_tol", self.cost_tol),
            ("step_tol", self.step_tol),
        ];
        for (name, value) in checks {
            if !(value > 0.0) {
                return Err(Error::config(format!("{prefix}.{name}"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// Per-frame divisors used by [`CovarianceMode::ScaleAgnostic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameNormalizers {
    pub prev: f64,
    pub curr: f64,
}

impl Default for FrameNormalizers {
    fn default() -> Self {
        FrameNormalizers { prev: 1.0, curr: 1.0 }
    }
}

/// Mean of `det(Sigma)^(1/3)`, or 1 when that mean is not positive.
pub fn mean_generalized_variance<'a>(covariances: impl Iterator<Item = &'a Mat3>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for c in covariances {
        sum += c.determinant().max(0.0).cbrt();
        n += 1;
    }
    let mean = if n > 0 { sum / n as f64 } else { 0.0 };
    if mean > 0.0 && mean.is_finite() {
        mean
    } else {
        1.0
    }
}

/// A combined pair covariance and whether it had to be regularized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCovariance {
    pub matrix: Mat3,
    pub regularized: bool,
}

fn diagonal_only(m: &Mat3) -> Mat3 {
    Mat3::from_diagonal(&m.diagonal())
}

/// Adds `1e-9 * trace / 3 * I` when the condition number exceeds 1e12 (or
/// the matrix is not positive definite); falls back to the identity for an
/// all-zero matrix.
fn regularize(m: Mat3) -> PairCovariance {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo > 0.0 && hi / lo <= MAX_CONDITION {
        return PairCovariance {
            matrix: sym,
            regularized: false,
        };
    }
    let trace = sym.trace();
    let bump = if trace > 0.0 && trace.is_finite() {
        REGULARIZATION * trace / 3.0
    } else {
        1.0
    };
    let mut matrix = sym + Mat3::identity() * bump;
    if lo + bump <= 0.0 {
        matrix += Mat3::identity() * (-lo);
    }
    PairCovariance { matrix, regularized: true }
}

/// Combined covariance of one matched pair at rotation `rotation`.
pub fn pair_covariance(pair: &MatchedPair, rotation: &Mat3, mode: CovarianceMode, norms: &FrameNormalizers) -> PairCovariance {
    let (prev, curr) = match mode {
        CovarianceMode::Identity => {
            return PairCovariance {
                matrix: Mat3::identity(),
                regularized: false,
            }
        }
        CovarianceMode::Full => (pair.prev_world.covariance, pair.curr_camera.covariance),
        CovarianceMode::Diagonal => (
            diagonal_only(&pair.prev_world.covariance),
            diagonal_only(&pair.curr_camera.covariance),
        ),
        CovarianceMode::ScaleAgnostic => (pair.prev_world.covariance / norms.prev, pair.curr_camera.covariance / norms.curr),
    };
    regularize(prev + rotation * curr * rotation.transpose())
}

/// Jacobian of `r = p_prev - T p_curr` with respect to the right-perturbation
/// twist `[rho, phi]`: `[-R, R [p_curr]x]`.
pub fn residual_jacobian(pose: &PoseSE3, curr: &Vec3) -> Matrix3x6<f64> {
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-pose.rotation));
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(pose.rotation * hat(curr)));
    j
}

pub fn residual(pair: &MatchedPair, pose: &PoseSE3) -> Vec3 {
    pair.prev_world.position - pose.transform_point(&pair.curr_camera.position)
}

impl FramePairProblem {
    pub fn new(pairs: Vec<MatchedPair>, initial_pose: PoseSE3, covariance_mode: CovarianceMode) -> Self {
        FramePairProblem {
            pairs,
            initial_pose,
            covariance_mode,
        }
    }

    /// Checks pair count, frame tags, and that the previous-frame positions
    /// are not collinear.
    pub fn validate(&self) -> Result<()> {
        if self.pairs.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "{} pairs, at least 3 required",
                self.pairs.len()
            )));
        }
        if self
            .pairs
            .iter()
            .any(|p| p.prev_world.frame != Frame::World || p.curr_camera.frame != Frame::Camera)
        {
            return Err(Error::Domain("pairs must match world landmarks to camera landmarks".into()));
        }
        let centroid = self.centroid();
        let mut scatter = Mat3::zeros();
        for p in &self.pairs {
            let d = p.prev_world.position - centroid;
            scatter += d * d.transpose();
        }
        let eig = SymmetricEigen::new(scatter).eigenvalues;
        let mut sorted: Vec<f64> = eig.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        // singular values of the centered position matrix
        let second = sorted[1].max(0.0).sqrt();
        if !(second > DEGENERATE_SINGULAR_VALUE) {
            return Err(Error::DegenerateGeometry(format!(
                "previous-frame landmarks are collinear (singular value {second:e})"
            )));
        }
        Ok(())
    }

    fn centroid(&self) -> Vec3 {
        self.pairs.iter().map(|p| p.prev_world.position).sum::<Vec3>() / self.pairs.len() as f64
    }

    /// RMS distance of the previous-frame landmarks from their centroid.
    pub fn spatial_scale(&self) -> f64 {
        let c = self.centroid();
        let ms = self.pairs.iter().map(|p| (p.prev_world.position - c).norm_squared()).sum::<f64>() / self.pairs.len() as f64;
        ms.sqrt()
    }

    pub fn normalizers(&self) -> FrameNormalizers {
        if self.covariance_mode != CovarianceMode::ScaleAgnostic {
            return FrameNormalizers::default();
        }
        FrameNormalizers {
            prev: mean_generalized_variance(self.pairs.iter().map(|p| &p.prev_world.covariance)),
            curr: mean_generalized_variance(self.pairs.iter().map(|p| &p.curr_camera.covariance)),
        }
    }

    pub fn covariances(&self, rotation: &Mat3) -> Vec<PairCovariance> {
        let norms = self.normalizers();
        self.pairs
            .iter()
            .map(|p| pair_covariance(p, rotation, self.covariance_mode, &norms))
            .collect()
    }
}

fn quadratic_form(r: &Vec3, cov: &Mat3) -> Result<f64> {
    let chol = Cholesky::new(*cov).ok_or_else(|| Error::Numerical("pair covariance is not positive definite".into()))?;
    Ok(r.dot(&chol.solve(r)))
}

/// Total squared Mahalanobis distance at `pose`, with every pair covariance
/// formed at `pose`'s rotation.
pub fn mahalanobis_cost(problem: &FramePairProblem, pose: &PoseSE3) -> Result<f64> {
    let covs = problem.covariances(&pose.rotation);
    problem
        .pairs
        .iter()
        .zip(&covs)
        .map(|(p, c)| quadratic_form(&residual(p, pose), &c.matrix))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSolution {
    pub pose: PoseSE3,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Number of linearizations performed.
    pub iterations: usize,
    pub residuals: Vec<Vec3>,
    pub converged: bool,
    /// Pairs whose combined covariance needed regularization at the solution.
    pub regularized_pairs: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

struct NormalEquations {
    hessian: Matrix6<f64>,
    gradient: Vector6<f64>,
}

fn build_normal_equations(problem: &FramePairProblem, pose: &PoseSE3) -> Result<NormalEquations> {
    let covs = problem.covariances(&pose.rotation);
    let mut hessian = Matrix6::zeros();
    let mut gradient = Vector6::zeros();
    for (pair, cov) in problem.pairs.iter().zip(&covs) {
        let chol = Cholesky::new(cov.matrix).ok_or_else(|| Error::Numerical("pair covariance is not positive definite".into()))?;
        let j = residual_jacobian(pose, &pair.curr_camera.position);
        let r = residual(pair, pose);
        let w_j = chol.solve(&j);
        hessian += j.transpose() * w_j;
        gradient += w_j.transpose() * r;
    }
    Ok(NormalEquations {
        hessian: (hessian + hessian.transpose()) * 0.5,
        gradient,
    })
}

/// Minimizes [`mahalanobis_cost`] from `problem.initial_pose`.
///
/// Errors on degenerate geometry before iterating. Running out of iterations
/// is not an error: the best pose found is returned with `converged = false`.
pub fn solve_pose(problem: &FramePairProblem, cfg: &LMConfig) -> Result<PoseSolution> {
    problem.validate()?;
    cfg.validate("lm")?;
    let scale = problem.spatial_scale();
    let mut pose = problem.initial_pose;
    let mut cost = mahalanobis_cost(problem, &pose)?;
    let initial_cost = cost;
    let mut history = vec![cost];
    let mut lambda = cfg.lambda_init;
    let mut iterations = 0;
    let mut converged = cost == 0.0;

    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let ne = build_normal_equations(problem, &pose)?;
        if ne.gradient.amax() == 0.0 {
            converged = true;
            break;
        }
        let diag = ne.hessian.diagonal();
        let floor = diag.amax() * 1e-12;
        loop {
            let mut damped = ne.hessian;
            for k in 0..6 {
                damped[(k, k)] += lambda * diag[k].max(floor);
            }
            let step = Cholesky::new(damped).map(|c| -c.solve(&ne.gradient));
            let Some(step) = step.filter(|s| s.iter().all(|x| x.is_finite())) else {
                lambda *= cfg.lambda_up;
                if lambda > LAMBDA_MAX {
                    converged = true;
                    break;
                }
                continue;
            };
            let candidate = (pose * PoseSE3::exp(&step)).renormalized();
            let new_cost = mahalanobis_cost(problem, &candidate)?;
            if new_cost <= cost {
                let decrease = cost - new_cost;
                let step_norm = normalized_step(&step, scale);
                pose = candidate;
                cost = new_cost;
                history.push(cost);
                lambda = (lambda * cfg.lambda_down).max(1e-300);
                if cost == 0.0 || decrease <= cfg.cost_tol * history[history.len() - 2] || step_norm <= cfg.step_tol {
                    converged = true;
                }
                break;
            }
            lambda *= cfg.lambda_up;
            if lambda > LAMBDA_MAX || normalized_step(&step, scale) <= cfg.step_tol {
                // No descent direction left at machine precision.
                converged = true;
                break;
            }
        }
    }

    let covs = problem.covariances(&pose.rotation);
    Ok(PoseSolution {
        residuals: problem.pairs.iter().map(|p| residual(p, &pose)).collect(),
        regularized_pairs: covs.iter().filter(|c| c.regularized).count(),
        pose,
        initial_cost,
        final_cost: cost,
        iterations,
        converged,
        cost_history: history,
    })
}

fn normalized_step(step: &Vec6, scale: f64) -> f64 {
    let rho = Vec3::new(step[0], step[1], step[2]) / scale.max(f64::MIN_POSITIVE);
    let phi = Vec3::new(step[3], step[4], step[5]);
    (rho.norm_squared() + phi.norm_squared()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn lm(p: Vec3, cov: Mat3, frame: Frame) -> Landmark3D {
        Landmark3D::new(p, cov, frame)
    }

    fn pair(prev: Vec3, curr: Vec3, prev_cov: Mat3, curr_cov: Mat3) -> MatchedPair {
        MatchedPair {
            prev_world: lm(prev, prev_cov, Frame::World),
            curr_camera: lm(curr, curr_cov, Frame::Camera),
        }
    }

    #[test]
    fn isotropic_inputs_sum() {
        let p = pair(Vec3::zeros(), Vec3::zeros(), Mat3::identity(), Mat3::identity());
        let r = crate::geometry::so3_exp(&Vec3::new(0.3, -0.2, 1.0));
        let c = pair_covariance(&p, &r, CovarianceMode::Full, &FrameNormalizers::default());
        assert_relative_eq!(c.matrix, Mat3::identity() * 2.0, epsilon = 1e-14);
        assert!(!c.regularized);
    }

    #[test]
    fn rotated_rank_one_covariance_matches_transform() {
        let curr = Mat3::from_diagonal(&Vec3::new(1.0, 1e-9, 1e-9));
        let p = pair(Vec3::zeros(), Vec3::zeros(), Mat3::zeros(), curr);
        let r = crate::geometry::so3_exp(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        let c = pair_covariance(&p, &r, CovarianceMode::Full, &FrameNormalizers::default());
        let via_transform = crate::geometry::transform_landmark(
            &PoseSE3 {
                rotation: r,
                translation: Vec3::zeros(),
            },
            &p.curr_camera,
        )
        .unwrap()
        .covariance;
        assert_relative_eq!(c.matrix, via_transform, epsilon = 1e-15);
        assert_relative_eq!(c.matrix, Mat3::from_diagonal(&Vec3::new(1e-9, 1.0, 1e-9)), epsilon = 1e-15);
    }

    #[test]
    fn identity_mode_ignores_inputs() {
        let p = pair(Vec3::zeros(), Vec3::zeros(), Mat3::identity() * 7.0, Mat3::zeros());
        let c = pair_covariance(&p, &Mat3::identity(), CovarianceMode::Identity, &FrameNormalizers::default());
        assert_eq!(c.matrix, Mat3::identity());
    }

    #[test]
    fn singular_covariance_is_regularized() {
        let p = pair(
            Vec3::zeros(),
            Vec3::zeros(),
            Mat3::from_diagonal(&Vec3::new(3.0, 0.0, 0.0)),
            Mat3::zeros(),
        );
        let c = pair_covariance(&p, &Mat3::identity(), CovarianceMode::Full, &FrameNormalizers::default());
        assert!(c.regularized);
        assert_relative_eq!(c.matrix, Mat3::from_diagonal(&Vec3::new(3.0 + 1e-9, 1e-9, 1e-9)), epsilon = 1e-18);
        let zero = pair(Vec3::zeros(), Vec3::zeros(), Mat3::zeros(), Mat3::zeros());
        let c = pair_covariance(&zero, &Mat3::identity(), CovarianceMode::Full, &FrameNormalizers::default());
        assert!(c.regularized);
        assert_eq!(c.matrix, Mat3::identity());
    }

    #[test]
    fn diagonal_mode_drops_correlations() {
        let cov = Mat3::new(2.0, 0.5, 0.3, 0.5, 1.0, 0.1, 0.3, 0.1, 4.0);
        let p = pair(Vec3::zeros(), Vec3::zeros(), cov, cov);
        let c = pair_covariance(&p, &Mat3::identity(), CovarianceMode::Diagonal, &FrameNormalizers::default());
        assert_eq!(c.matrix, Mat3::from_diagonal(&Vec3::new(4.0, 2.0, 8.0)));
    }

    #[test]
    fn single_pair_cost() {
        let p = pair(
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::zeros(),
            Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 1.0)),
            Mat3::zeros(),
        );
        let problem = FramePairProblem::new(vec![p], PoseSE3::identity(), CovarianceMode::Full);
        assert_relative_eq!(mahalanobis_cost(&problem, &PoseSE3::identity()).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn collinear_landmarks_are_degenerate() {
        let pairs = (0..5)
            .map(|i| pair(Vec3::new(i as f64, 0.0, 0.0), Vec3::zeros(), Mat3::identity(), Mat3::identity()))
            .collect();
        let problem = FramePairProblem::new(pairs, PoseSE3::identity(), CovarianceMode::Full);
        assert!(matches!(
            solve_pose(&problem, &LMConfig::default()),
            Err(Error::DegenerateGeometry(_))
        ));
        let two = FramePairProblem::new(
            vec![
                pair(Vec3::zeros(), Vec3::zeros(), Mat3::identity(), Mat3::identity()),
                pair(Vec3::x(), Vec3::zeros(), Mat3::identity(), Mat3::identity()),
            ],
            PoseSE3::identity(),
            CovarianceMode::Full,
        );
        assert!(two.validate().is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in CovarianceMode::ALL {
            assert_eq!(m.name().parse::<CovarianceMode>().unwrap(), m);
        }
        assert!("bogus".parse::<CovarianceMode>().is_err());
    }
}
