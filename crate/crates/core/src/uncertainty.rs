//! Propagation of 2D matching and depth uncertainty into metric 3D
//! covariances.
//!
//! Three steps feed the optimizer:
//!
//! * [`disparity_to_depth`] turns a Gaussian disparity with relative error
//!   `gamma` into a first-order Gaussian depth.
//! * [`correct_depth_uncertainty`] re-estimates the depth of a matched point
//!   from a local depth patch weighted by the matching uncertainty, which
//!   inflates the variance near depth discontinuities.
//! * [`project_covariance`] maps `(u, v, d)` with independent Gaussian errors
//!   to the exact covariance of the backprojected point, off-diagonal terms
//!   included.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::geometry::{Frame, Landmark3D, Mat3, StereoCamera};

/// Relative disparity error above which the first-order depth model is
/// flagged as unreliable.
pub const GAMMA_WARN: f64 = 0.3;

/// Default side length of the depth patch used for uncertainty correction.
pub const DEFAULT_PATCH_SIZE: usize = 32;

/// Lower bound on the standard deviation of the patch weighting kernel, in
/// pixels.
pub const MIN_KERNEL_SIGMA: f64 = 0.5;

const PSD_TOLERANCE: f64 = -1e-10;

/// A keypoint with per-axis matching variance and a depth with its variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelObservation {
    pub u: f64,
    pub v: f64,
    pub sigma_u2: f64,
    pub sigma_v2: f64,
    pub depth: f64,
    pub sigma_d2: f64,
}

impl PixelObservation {
    pub fn new(u: f64, v: f64, sigma_u2: f64, sigma_v2: f64, depth: f64, sigma_d2: f64) -> Result<Self> {
        let obs = PixelObservation {
            u,
            v,
            sigma_u2,
            sigma_v2,
            depth,
            sigma_d2,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_u2 >= 0.0 && self.sigma_v2 >= 0.0 && self.sigma_d2 >= 0.0) {
            return Err(Error::Domain("observation variances must be non-negative".into()));
        }
        if !(self.depth > 0.0) {
            return Err(Error::Domain(format!("observation depth must be positive, got {}", self.depth)));
        }
        if !(self.u.is_finite() && self.v.is_finite()) {
            return Err(Error::Domain("observation pixel must be finite".into()));
        }
        Ok(())
    }
}

/// Gaussian disparity `N(mu, (gamma * mu)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisparityEstimate {
    pub mu: f64,
    pub gamma: f64,
}

impl DisparityEstimate {
    pub fn sigma(&self) -> f64 {
        self.gamma * self.mu
    }
}

/// Mean and variance of a depth estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthEstimate {
    pub mean: f64,
    pub variance: f64,
    /// Set when the relative disparity error is large enough that the
    /// first-order approximation is unreliable.
    pub low_quality: bool,
}

/// First-order depth distribution induced by a Gaussian disparity.
///
/// `mean = b fx / mu`, `variance = (b fx gamma)^2 / mu^2`.
pub fn disparity_to_depth(cam: &StereoCamera, disp: &DisparityEstimate) -> Result<DepthEstimate> {
    if !(disp.mu > 0.0) {
        return Err(Error::Domain(format!("disparity mean must be positive, got {}", disp.mu)));
    }
    if !(disp.gamma >= 0.0) {
        return Err(Error::Domain(format!(
            "relative disparity error must be non-negative, got {}",
            disp.gamma
        )));
    }
    let bf = cam.baseline * cam.fx;
    let mean = bf / disp.mu;
    let variance = (bf * disp.gamma).powi(2) / (disp.mu * disp.mu);
    let low_quality = disp.gamma >= GAMMA_WARN;
    if low_quality {
        log::warn!(
            "disparity relative error {} exceeds {GAMMA_WARN}; depth variance is approximate",
            disp.gamma
        );
    }
    Ok(DepthEstimate {
        mean,
        variance,
        low_quality,
    })
}

/// A rectangular window of depth samples around a (sub-pixel) center.
///
/// Samples that are not finite and positive are treated as invalid and carry
/// zero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPatch {
    /// Pixel coordinate of the top-left sample.
    pub origin: (i64, i64),
    pub width: usize,
    pub height: usize,
    /// Row-major samples.
    pub depths: Vec<f64>,
    /// Pixel coordinate the weighting kernel is centered on.
    pub center: (f64, f64),
}

impl DepthPatch {
    pub fn new(origin: (i64, i64), width: usize, height: usize, depths: Vec<f64>, center: (f64, f64)) -> Result<Self> {
        if depths.len() != width * height {
            return Err(Error::Domain(format!(
                "patch of {width}x{height} needs {} samples, got {}",
                width * height,
                depths.len()
            )));
        }
        Ok(DepthPatch {
            origin,
            width,
            height,
            depths,
            center,
        })
    }

    /// Cuts a `kernel x kernel` window out of a row-major depth map, centered
    /// on the pixel nearest to `center` and clipped at the image border.
    pub fn from_map(map: &[f64], map_width: usize, map_height: usize, center: (f64, f64), kernel: usize) -> Result<Self> {
        if kernel == 0 {
            return Err(Error::Domain("patch kernel size must be positive".into()));
        }
        let half = (kernel / 2) as i64;
        let x0 = (center.0.round() as i64 - half).max(0);
        let y0 = (center.1.round() as i64 - half).max(0);
        let x1 = (center.0.round() as i64 - half + kernel as i64).min(map_width as i64);
        let y1 = (center.1.round() as i64 - half + kernel as i64).min(map_height as i64);
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::NoDepthSupport);
        }
        let (w, h) = ((x1 - x0) as usize, (y1 - y0) as usize);
        let mut depths = Vec::with_capacity(w * h);
        for y in y0..y1 {
            let row = y as usize * map_width;
            depths.extend_from_slice(&map[row + x0 as usize..row + x1 as usize]);
        }
        DepthPatch::new((x0, y0), w, h, depths, center)
    }

    fn is_valid(d: f64) -> bool {
        d.is_finite() && d > 0.0
    }

    /// Normalized Gaussian weights over the valid samples.
    ///
    /// The kernel is axis-aligned with standard deviations
    /// `max(sqrt(sigma_u2), 0.5)` and `max(sqrt(sigma_v2), 0.5)` pixels.
    pub fn weights(&self, sigma_u2: f64, sigma_v2: f64) -> Result<Vec<f64>> {
        let su2 = sigma_u2.max(MIN_KERNEL_SIGMA * MIN_KERNEL_SIGMA);
        let sv2 = sigma_v2.max(MIN_KERNEL_SIGMA * MIN_KERNEL_SIGMA);
        let mut weights = vec![0.0; self.depths.len()];
        let mut total = 0.0;
        for (k, w) in weights.iter_mut().enumerate() {
            if !Self::is_valid(self.depths[k]) {
                continue;
            }
            let x = self.origin.0 as f64 + (k % self.width) as f64 - self.center.0;
            let y = self.origin.1 as f64 + (k / self.width) as f64 - self.center.1;
            *w = (-0.5 * (x * x / su2 + y * y / sv2)).exp();
            total += *w;
        }
        if !(total > 0.0) {
            return Err(Error::NoDepthSupport);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(weights)
    }
}

/// Weighted mean and variance of the patch depths under the matching
/// uncertainty kernel.
pub fn correct_depth_uncertainty(patch: &DepthPatch, sigma_u2: f64, sigma_v2: f64) -> Result<DepthEstimate> {
    let weights = patch.weights(sigma_u2, sigma_v2)?;
    let valid = || weights.iter().zip(&patch.depths).filter(|(w, _)| **w > 0.0);
    let mean: f64 = valid().map(|(w, d)| w * d).sum();
    let variance: f64 = valid().map(|(w, d)| w * (d - mean) * (d - mean)).sum();
    Ok(DepthEstimate {
        mean,
        variance,
        low_quality: false,
    })
}

/// Covariance of the backprojected point before the PSD guard.
pub fn raw_projection_covariance(cam: &StereoCamera, obs: &PixelObservation) -> Mat3 {
    let du = obs.u - cam.cx;
    let dv = obs.v - cam.cy;
    let d2 = obs.depth * obs.depth;
    let sd2 = obs.sigma_d2;
    let sxx = (obs.sigma_u2 * sd2 + obs.sigma_u2 * d2 + du * du * sd2) / (cam.fx * cam.fx);
    let syy = (obs.sigma_v2 * sd2 + obs.sigma_v2 * d2 + dv * dv * sd2) / (cam.fy * cam.fy);
    let szz = sd2;
    let sxz = sd2 * du / cam.fx;
    let syz = sd2 * dv / cam.fy;
    let sxy = sd2 * du * dv / (cam.fx * cam.fy);
    Mat3::new(sxx, sxy, sxz, sxy, syy, syz, sxz, syz, szz)
}

/// Symmetrizes `m` and, only if its smallest eigenvalue is below -1e-10,
/// clamps negative eigenvalues to zero.
pub fn enforce_psd(m: &Mat3) -> Mat3 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.min() >= PSD_TOLERANCE {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = eig.eigenvectors;
    let out = v * Mat3::from_diagonal(&clamped) * v.transpose();
    (out + out.transpose()) * 0.5
}

/// Backprojects `obs` and attaches the covariance induced by independent
/// Gaussian errors on `u`, `v` and `d`.
pub fn project_covariance(cam: &StereoCamera, obs: &PixelObservation) -> Result<Landmark3D> {
    obs.validate()?;
    let position = cam.backproject(obs.u, obs.v, obs.depth)?;
    let covariance = enforce_psd(&raw_projection_covariance(cam, obs));
    Ok(Landmark3D::new(position, covariance, Frame::Camera))
}
