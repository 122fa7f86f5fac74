//! On-disk observation directories.
//!
//! Layout:
//!
//! * `poses_gt.txt`: TUM trajectory, one line per frame.
//! * `frame_%06d.obs`: the 8-byte magic `MACVOOBS`, then little-endian `u32`
//!   width and height, then one `u32` channel count per map (2, 2, 1, 1, 1),
//!   then the maps flow, flow variance, depth, depth variance and mask as
//!   little-endian `f32`, row-major with channels interleaved. The mask is
//!   stored as 0.0 / 1.0.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::observation::{FrameObservation, ImageMap};
use crate::trajectory::Trajectory;

pub const MAGIC: &[u8; 8] = b"MACVOOBS";
pub const POSES_FILE: &str = "poses_gt.txt";
const CHANNELS: [usize; 5] = [2, 2, 1, 1, 1];

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.obs")
}

pub fn encode_frame(obs: &FrameObservation) -> Vec<u8> {
    let (w, h) = (obs.width(), obs.height());
    let mut out = Vec::with_capacity(8 + 7 * 4 + w * h * 7 * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    for c in CHANNELS {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    for map in [&obs.flow, &obs.flow_var, &obs.depth, &obs.depth_var] {
        for v in &map.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    for &m in &obs.mask {
        out.extend_from_slice(&(if m { 1.0f32 } else { 0.0 }).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.path,
                format!(
                    "truncated: needed {} bytes at offset {}, file has {}",
                    n,
                    self.pos,
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Decodes one frame file; the pose and timestamp are left at defaults.
pub fn decode_frame(bytes: &[u8], path: &Path) -> Result<FrameObservation> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::format(path, "bad magic, expected MACVOOBS"));
    }
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    if w == 0 || h == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    for (k, expected) in CHANNELS.iter().enumerate() {
        let c = r.u32()? as usize;
        if c != *expected {
            return Err(Error::format(path, format!("map {k} has {c} channels, expected {expected}")));
        }
    }
    let mut map = |c: usize| -> Result<ImageMap> { ImageMap::new(w, h, c, r.f32s(w * h * c)?) };
    let flow = map(2)?;
    let flow_var = map(2)?;
    let depth = map(1)?;
    let depth_var = map(1)?;
    let mask_values = map(1)?.data;
    if r.pos != bytes.len() {
        return Err(Error::format(path, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mask = mask_values.iter().map(|v| *v != 0.0).collect();
    Ok(FrameObservation {
        flow,
        flow_var,
        depth,
        depth_var,
        mask,
        gt_pose: Default::default(),
        timestamp: 0.0,
    })
}

/// Writes `poses_gt.txt` and one `.obs` file per frame into `dir`.
pub fn write_observations(dir: &Path, frames: &[FrameObservation]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let traj = Trajectory::new(frames.iter().map(|f| (f.timestamp, f.gt_pose)).collect())?;
    traj.write_tum(&dir.join(POSES_FILE))?;
    for (i, f) in frames.iter().enumerate() {
        let path = dir.join(frame_file_name(i));
        std::fs::write(&path, encode_frame(f)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("frame_") && name.ends_with(".obs") {
            files.push(entry.path());
        }
    }
    files.sort();
    Ok(files)
}

/// Loads an observation directory written by [`write_observations`] or an
/// external frontend following the same layout.
pub fn ingest_observations(dir: &Path) -> Result<Vec<FrameObservation>> {
    let poses = Trajectory::read_tum(&dir.join(POSES_FILE))?;
    let files = frame_files(dir)?;
    if files.len() != poses.len() {
        return Err(Error::FramePoseMismatch {
            frames: files.len(),
            poses: poses.len(),
        });
    }
    let mut frames = Vec::with_capacity(files.len());
    for (i, ((timestamp, pose), path)) in poses.poses.iter().zip(&files).enumerate() {
        let expected = dir.join(frame_file_name(i));
        if *path != expected {
            return Err(Error::io(
                &expected,
                std::io::Error::new(std::io::ErrorKind::NotFound, "frame file missing"),
            ));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut obs = decode_frame(&bytes, path)?;
        if let Some(first) = frames.first() {
            let first: &FrameObservation = first;
            if (obs.width(), obs.height()) != (first.width(), first.height()) {
                return Err(Error::format(
                    path,
                    format!(
                        "dimension mismatch: {}x{} but first frame is {}x{}",
                        obs.width(),
                        obs.height(),
                        first.width(),
                        first.height()
                    ),
                ));
            }
        }
        obs.gt_pose = *pose;
        obs.timestamp = *timestamp;
        frames.push(obs);
    }
    Ok(frames)
}
