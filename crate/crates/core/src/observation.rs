//! Dense per-frame maps produced by a frontend (simulated or ingested).

use crate::error::{Error, Result};
use crate::geometry::PoseSE3;

/// A row-major image with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Domain(format!(
                "map of {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(ImageMap {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        ImageMap {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    /// Single-channel plane `c` as a row-major vector.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

/// What the frontend reports for one frame.
///
/// `flow` is the forward optical flow to the next frame. `mask` marks the
/// pixels usable as keypoint sources: their depth is valid and their forward
/// match is visible. For the last frame of a sequence the flow is zero and the
/// mask only reflects depth validity.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub flow: ImageMap,
    pub flow_var: ImageMap,
    pub depth: ImageMap,
    pub depth_var: ImageMap,
    pub mask: Vec<bool>,
    pub gt_pose: PoseSE3,
    pub timestamp: f64,
}

impl FrameObservation {
    pub fn width(&self) -> usize {
        self.depth.width
    }

    pub fn height(&self) -> usize {
        self.depth.height
    }

    /// Checks that every map shares the frame dimensions and that variances
    /// are non-negative on unmasked pixels.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width(), self.height());
        let maps = [
            ("flow", &self.flow, 2),
            ("flow_var", &self.flow_var, 2),
            ("depth", &self.depth, 1),
            ("depth_var", &self.depth_var, 1),
        ];
        for (name, map, channels) in maps {
            if map.width != w || map.height != h || map.channels != channels {
                return Err(Error::Domain(format!(
                    "{name} map is {}x{}x{}, expected {w}x{h}x{channels}",
                    map.width, map.height, map.channels
                )));
            }
        }
        if self.mask.len() != w * h {
            return Err(Error::Domain("mask size does not match frame".into()));
        }
        for (i, &valid) in self.mask.iter().enumerate() {
            if !valid {
                continue;
            }
            let (fu, fv) = (self.flow_var.data[2 * i], self.flow_var.data[2 * i + 1]);
            if !(fu >= 0.0 && fv >= 0.0 && self.depth_var.data[i] >= 0.0) {
                return Err(Error::Domain(format!("negative variance at pixel {i}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width() + x]
    }
}

/// Depth at a sub-pixel location by bilinear interpolation of inverse depth.
///
/// Inverse depth is affine in pixel coordinates over a plane, so this is
/// exact whenever the four neighbours lie on one planar surface. Returns
/// `None` if the support leaves the image or touches an invalid sample.
pub fn interpolate_depth(depth: &ImageMap, u: f64, v: f64) -> Option<f64> {
    if !(u >= 0.0 && v >= 0.0) {
        return None;
    }
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
    if x1 >= depth.width || y1 >= depth.height {
        return None;
    }
    let inv = |x: usize, y: usize| {
        let d = depth.get(x, y, 0);
        (d.is_finite() && d > 0.0).then(|| 1.0 / d)
    };
    let top = inv(x0, y0)? * (1.0 - fx) + inv(x1, y0)? * fx;
    let bottom = inv(x0, y1)? * (1.0 - fx) + inv(x1, y1)? * fx;
    let inv_d = top * (1.0 - fy) + bottom * fy;
    (inv_d > 0.0).then(|| 1.0 / inv_d)
}
