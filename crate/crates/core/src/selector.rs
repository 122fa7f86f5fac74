//! Keypoint selection from dense uncertainty maps.
//!
//! Selection runs three filters in order: non-minimum suppression over a
//! combined uncertainty score, a geometry filter (image border and depth
//! range), then an uncertainty filter that drops candidates whose flow or
//! depth uncertainty exceeds a multiple of the per-channel median.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::StereoCamera;
use crate::observation::FrameObservation;

/// The pose solver needs at least this many keypoints.
pub const MIN_KEYPOINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointCandidate {
    pub u: u32,
    pub v: u32,
    /// Combined uncertainty, lower is better.
    pub score: f64,
    /// `sigma_u^2 + sigma_v^2` in pixels squared.
    pub flow_unc: f64,
    /// `sigma_d^2` in meters squared.
    pub depth_unc: f64,
    pub depth: f64,
}

impl KeypointCandidate {
    /// Ranking used by every filter: ascending score, then `(u, v)`.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.u.cmp(&other.u))
            .then(self.v.cmp(&other.v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub nms_radius: u32,
    pub border_margin: u32,
    pub depth_range: [f64; 2],
    pub unc_multiplier: f64,
    pub max_keypoints: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            nms_radius: 8,
            border_margin: 8,
            depth_range: [0.1, 100.0],
            unc_multiplier: 1.5,
            max_keypoints: 200,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if self.nms_radius < 1 {
            return Err(Error::config(field("nms_radius"), "must be at least 1"));
        }
        if !(self.depth_range[0] > 0.0 && self.depth_range[1] >= self.depth_range[0]) {
            return Err(Error::config(field("depth_range"), "must satisfy 0 < min <= max"));
        }
        if !(self.unc_multiplier > 0.0) {
            return Err(Error::config(field("unc_multiplier"), "must be positive"));
        }
        if self.max_keypoints < MIN_KEYPOINTS {
            return Err(Error::config(field("max_keypoints"), format!("must be at least {MIN_KEYPOINTS}")));
        }
        Ok(())
    }
}

/// Median of a non-empty slice; the mean of the two middle values for even
/// lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if v.len() % 2 == 1 {
        return Some(upper);
    }
    let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(0.5 * (lower + upper))
}

fn normalized(x: f64, med: f64) -> f64 {
    if med > 0.0 {
        x / med
    } else if x > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// One candidate per unmasked pixel with a finite positive depth. Scores are
/// `flow_unc / median_flow + depth_unc / median_depth` over the frame.
pub fn candidates_from_observation(obs: &FrameObservation) -> Vec<KeypointCandidate> {
    let (w, h) = (obs.width(), obs.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let depth = obs.depth.get(x, y, 0);
            if !obs.is_valid(x, y) || !(depth.is_finite() && depth > 0.0) {
                continue;
            }
            out.push(KeypointCandidate {
                u: x as u32,
                v: y as u32,
                score: 0.0,
                flow_unc: obs.flow_var.get(x, y, 0) + obs.flow_var.get(x, y, 1),
                depth_unc: obs.depth_var.get(x, y, 0),
                depth,
            });
        }
    }
    let flow: Vec<f64> = out.iter().map(|c| c.flow_unc).collect();
    let depth: Vec<f64> = out.iter().map(|c| c.depth_unc).collect();
    if let (Some(mf), Some(md)) = (median(&flow), median(&depth)) {
        for c in &mut out {
            c.score = normalized(c.flow_unc, mf) + normalized(c.depth_unc, md);
        }
    }
    out
}

/// Greedy non-minimum suppression in Chebyshev distance.
///
/// Candidates are visited by [`KeypointCandidate::rank_cmp`]; one is kept when
/// no previously kept candidate lies within `max(|du|, |dv|) < radius`.
/// Survivors come out in rank order.
pub fn nms_filter(candidates: &[KeypointCandidate], radius: u32) -> Vec<KeypointCandidate> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let radius = radius.max(1);
    let mut order: Vec<&KeypointCandidate> = candidates.iter().collect();
    order.sort_by(|a, b| a.rank_cmp(b));

    // Two survivors can never share an r x r cell, so each cell holds at most
    // one and a conflict check only needs the 3 x 3 neighbouring cells.
    let cell = radius as usize;
    let cols = candidates.iter().map(|c| c.u as usize).max().unwrap() / cell + 1;
    let rows = candidates.iter().map(|c| c.v as usize).max().unwrap() / cell + 1;
    let mut grid: Vec<Option<(u32, u32)>> = vec![None; cols * rows];
    let mut kept = Vec::new();
    for c in order {
        let (cx, cy) = (c.u as usize / cell, c.v as usize / cell);
        let mut blocked = false;
        'scan: for gy in cy.saturating_sub(1)..=(cy + 1).min(rows - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(cols - 1) {
                if let Some((u, v)) = grid[gy * cols + gx] {
                    if u.abs_diff(c.u) < radius && v.abs_diff(c.v) < radius {
                        blocked = true;
                        break 'scan;
                    }
                }
            }
        }
        if !blocked {
            grid[cy * cols + cx] = Some((c.u, c.v));
            kept.push(*c);
        }
    }
    kept
}

/// Drops candidates at the image border or outside the configured depth range.
pub fn geometry_filter(candidates: &[KeypointCandidate], cam: &StereoCamera, cfg: &SelectorConfig) -> Vec<KeypointCandidate> {
    let m = cfg.border_margin;
    let inside = |x: u32, size: u32| x >= m && x.saturating_add(m) < size;
    candidates
        .iter()
        .filter(|c| inside(c.u, cam.width) && inside(c.v, cam.height) && c.depth >= cfg.depth_range[0] && c.depth <= cfg.depth_range[1])
        .copied()
        .collect()
}

/// Keeps candidates whose flow and depth uncertainties are both within
/// `multiplier` times their respective medians over the input.
pub fn uncertainty_filter(candidates: &[KeypointCandidate], multiplier: f64) -> Result<Vec<KeypointCandidate>> {
    let flow: Vec<f64> = candidates.iter().map(|c| c.flow_unc).collect();
    let depth: Vec<f64> = candidates.iter().map(|c| c.depth_unc).collect();
    let (Some(mf), Some(md)) = (median(&flow), median(&depth)) else {
        return Err(Error::Empty("uncertainty_filter needs at least one candidate"));
    };
    Ok(candidates
        .iter()
        .filter(|c| c.flow_unc <= multiplier * mf && c.depth_unc <= multiplier * md)
        .copied()
        .collect())
}

fn ensure_enough(found: usize) -> Result<()> {
    if found < MIN_KEYPOINTS {
        return Err(Error::InsufficientKeypoints {
            found,
            required: MIN_KEYPOINTS,
        });
    }
    Ok(())
}

/// Full uncertainty-driven selection: NMS, then geometry, then uncertainty
/// filter, truncated to `max_keypoints` by rank.
pub fn select(obs: &FrameObservation, cam: &StereoCamera, cfg: &SelectorConfig) -> Result<Vec<KeypointCandidate>> {
    let candidates = candidates_from_observation(obs);
    let after_nms = nms_filter(&candidates, cfg.nms_radius);
    let after_geometry = geometry_filter(&after_nms, cam, cfg);
    ensure_enough(after_geometry.len())?;
    let mut kept = uncertainty_filter(&after_geometry, cfg.unc_multiplier)?;
    kept.sort_by(|a, b| a.rank_cmp(b));
    kept.truncate(cfg.max_keypoints);
    ensure_enough(kept.len())?;
    Ok(kept)
}

/// Ablation baseline: draws `max_keypoints` geometry-filter survivors
/// uniformly without replacement, ignoring uncertainty.
pub fn select_random<R: Rng + ?Sized>(
    obs: &FrameObservation,
    cam: &StereoCamera,
    cfg: &SelectorConfig,
    rng: &mut R,
) -> Result<Vec<KeypointCandidate>> {
    let pool = geometry_filter(&candidates_from_observation(obs), cam, cfg);
    ensure_enough(pool.len())?;
    let n = cfg.max_keypoints.min(pool.len());
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(u: u32, v: u32, score: f64) -> KeypointCandidate {
        KeypointCandidate {
            u,
            v,
            score,
            flow_unc: 1.0,
            depth_unc: 1.0,
            depth: 5.0,
        }
    }

    #[test]
    fn nms_single_candidate() {
        let c = [cand(3, 4, 0.5)];
        assert_eq!(nms_filter(&c, 5), c.to_vec());
    }

    #[test]
    fn nms_keeps_lower_score() {
        let c = [cand(10, 10, 0.2), cand(12, 11, 0.1)];
        assert_eq!(nms_filter(&c, 3), vec![c[1]]);
        // Chebyshev distance equal to the radius is not a conflict.
        let c = [cand(10, 10, 0.2), cand(13, 11, 0.1)];
        assert_eq!(nms_filter(&c, 3).len(), 2);
    }

    #[test]
    fn nms_grid_of_ties() {
        let mut c = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                c.push(cand(2 * i, 2 * j, 1.0));
            }
        }
        let kept: Vec<(u32, u32)> = nms_filter(&c, 3).iter().map(|k| (k.u, k.v)).collect();
        let expected: Vec<(u32, u32)> = [0, 4, 8].iter().flat_map(|&u| [0, 4, 8].map(move |v| (u, v))).collect();
        assert_eq!(kept, expected);
    }

    #[test]
    fn geometry_filter_edges() {
        let cam = StereoCamera::new(100.0, 100.0, 50.0, 40.0, 0.1, 100, 80).unwrap();
        let cfg = SelectorConfig {
            depth_range: [0.1, 100.0],
            ..Default::default()
        };
        assert!(geometry_filter(&[cand(0, 40, 0.0)], &cam, &cfg).is_empty());
        assert!(geometry_filter(&[cand(92, 40, 0.0)], &cam, &cfg).is_empty());
        assert_eq!(geometry_filter(&[cand(91, 71, 0.0)], &cam, &cfg).len(), 1);
        let mut near = cand(50, 40, 0.0);
        near.depth = 0.05;
        assert!(geometry_filter(&[near], &cam, &cfg).is_empty());
    }

    #[test]
    fn uncertainty_filter_examples() {
        let same: Vec<_> = (0..7).map(|i| cand(i, 0, 0.0)).collect();
        assert_eq!(uncertainty_filter(&same, 1.5).unwrap().len(), 7);

        let ramp: Vec<_> = (1..=9)
            .map(|i| KeypointCandidate {
                flow_unc: i as f64,
                ..cand(i, 0, 0.0)
            })
            .collect();
        let kept: Vec<f64> = uncertainty_filter(&ramp, 1.5).unwrap().iter().map(|c| c.flow_unc).collect();
        assert_eq!(kept, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);

        let mut outlier: Vec<_> = (0..9).map(|i| cand(i, 0, 0.0)).collect();
        outlier[4].depth_unc = 100.0;
        outlier[4].flow_unc = 0.0;
        let kept = uncertainty_filter(&outlier, 1.5).unwrap();
        assert_eq!(kept.len(), 8);
        assert!(kept.iter().all(|c| c.u != 4));
    }

    #[test]
    fn uncertainty_filter_rejects_empty_input() {
        assert!(matches!(uncertainty_filter(&[], 1.5), Err(Error::Empty(_))));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn config_validation_names_fields() {
        let cfg = SelectorConfig {
            unc_multiplier: 0.0,
            ..Default::default()
        };
        assert!(cfg
            .validate("selector")
            .unwrap_err()
            .to_string()
            .contains("selector.unc_multiplier"));
    }
}
