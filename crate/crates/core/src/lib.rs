//! Metric-scale stereo visual odometry back-end.
//!
//! Dense flow and depth maps with per-pixel variances go in; keypoints are
//! picked where the frontend is confident, backprojected with full 3D
//! covariances, and each frame's pose is solved by covariance-weighted
//! Levenberg-Marquardt against the previous frame.
//!
//! * [`geometry`]: camera model and SE(3) arithmetic.
//! * [`uncertainty`]: depth and 3D covariance propagation.
//! * [`selector`]: uncertainty-driven keypoint selection.
//! * [`optimizer`]: two-frame pose solver.
//! * [`sim`] and [`obs_io`]: synthetic sequences and the on-disk format.
//! * [`eval`]: relative trajectory metrics.
//! * [`mc`]: Monte Carlo checks of the closed-form uncertainty models.
//! * [`pipeline`]: end-to-end runs and ablations.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod geometry;
pub mod mc;
pub mod obs_io;
pub mod observation;
pub mod optimizer;
pub mod pipeline;
pub mod selector;
pub mod sim;
pub mod trajectory;
pub mod uncertainty;

pub use error::{Error, Result};
pub use geometry::{Frame, Landmark3D, PoseSE3, StereoCamera};
pub use observation::{FrameObservation, ImageMap};
pub use optimizer::{solve_pose, CovarianceMode, FramePairProblem, LMConfig, MatchedPair, PoseSolution};
pub use pipeline::{KeypointMode, RunConfig};
pub use selector::{KeypointCandidate, SelectorConfig};
pub use sim::SceneConfig;
pub use trajectory::Trajectory;
pub use uncertainty::{DisparityEstimate, PixelObservation};
