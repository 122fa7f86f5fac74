//! Time-stamped pose sequences and the TUM trajectory text format
//! (`timestamp tx ty tz qx qy qz qw`, one pose per line).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PoseSE3, Vec3};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub poses: Vec<(f64, PoseSE3)>,
}

impl Trajectory {
    /// Builds a trajectory, requiring strictly increasing timestamps.
    pub fn new(poses: Vec<(f64, PoseSE3)>) -> Result<Self> {
        if let Some(w) = poses.windows(2).find(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Domain(format!(
                "timestamps must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(Trajectory { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.poses.iter().map(|(t, _)| *t)
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.poses.iter().map(|(_, p)| p.translation)
    }

    /// Applies `g` on the left of every pose.
    pub fn transformed(&self, g: &PoseSE3) -> Trajectory {
        Trajectory {
            poses: self.poses.iter().map(|(t, p)| (*t, *g * *p)).collect(),
        }
    }

    pub fn to_tum_string(&self) -> String {
        let mut out = String::new();
        for (t, p) in &self.poses {
            let q = p.quaternion();
            let x = p.translation;
            writeln!(out, "{t} {} {} {} {} {} {} {}", x.x, x.y, x.z, q[0], q[1], q[2], q[3]).unwrap();
        }
        out
    }

    pub fn write_tum(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tum_string()).map_err(|e| Error::io(path, e))
    }

    /// Parses TUM text. Blank lines and lines starting with `#` are skipped.
    pub fn parse_tum(text: &str, origin: &Path) -> Result<Trajectory> {
        let mut poses = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let values: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(origin, format!("line {}: {e}", lineno + 1)))?;
            if values.len() != 8 {
                return Err(Error::format(
                    origin,
                    format!("line {}: expected 8 values, found {}", lineno + 1, values.len()),
                ));
            }
            let q = [values[4], values[5], values[6], values[7]];
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::format(origin, format!("line {}: zero quaternion", lineno + 1)));
            }
            let pose = PoseSE3::from_quaternion(q, Vec3::new(values[1], values[2], values[3]));
            poses.push((values[0], pose));
        }
        Trajectory::new(poses).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn read_tum(path: &Path) -> Result<Trajectory> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Trajectory::parse_tum(&text, path)
    }
}
