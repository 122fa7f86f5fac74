//! Monte Carlo oracles for the closed-form uncertainty models.
//!
//! The empirical side only samples the generative model and applies textbook
//! estimators; the closed-form results are computed separately and compared
//! entry by entry. Samples are drawn in fixed-size blocks, each with its own
//! ChaCha stream, and block results are merged in block order, so a report is
//! bit-identical for any number of worker threads.

use std::io::Write as _;
use std::path::Path;

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, StereoCamera, Vec3};
use crate::uncertainty::{disparity_to_depth, project_covariance, DisparityEstimate, PixelObservation};

pub const BLOCK_SIZE: usize = 1 << 16;
pub const MIN_DEPTH_SAMPLES: usize = 10_000;
pub const MIN_PROJECTION_SAMPLES: usize = 100_000;
/// Rejection rate above which the positive-disparity assumption is flagged.
pub const MAX_REJECTION_RATE: f64 = 0.01;
/// 90% quantile of the chi-square distribution with 3 degrees of freedom.
pub const CHI2_3DOF_90: f64 = 6.251_388_631_170_325;

#[derive(Debug, Clone, PartialEq)]
pub struct McEntry {
    pub name: &'static str,
    pub closed_form: f64,
    pub empirical: f64,
    /// Asymptotic standard error of the empirical estimate.
    pub std_err: f64,
    /// `(empirical - closed_form) / std_err`.
    pub z: f64,
}

/// Fraction of samples inside the closed-form confidence ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub level: f64,
    pub full: f64,
    pub diagonal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub samples: usize,
    pub rejected: usize,
    pub entries: Vec<McEntry>,
    /// Largest relative error over entries with a non-negligible closed form.
    pub max_rel_err: f64,
    /// Relative error of the standard deviation (depth oracle only).
    pub sigma_rel_err: Option<f64>,
    pub coverage: Option<Coverage>,
    pub flagged: bool,
}

impl McReport {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max)
    }

    pub fn entry(&self, name: &str) -> Option<&McEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn finish(samples: usize, rejected: usize, entries: Vec<McEntry>) -> McReport {
        let scale = entries.iter().map(|e| e.closed_form.abs()).fold(0.0, f64::max);
        let max_rel_err = entries
            .iter()
            .filter(|e| e.closed_form.abs() > 1e-9 * scale)
            .map(|e| ((e.empirical - e.closed_form) / e.closed_form).abs())
            .fold(0.0, f64::max);
        McReport {
            samples,
            rejected,
            entries,
            max_rel_err,
            sigma_rel_err: None,
            coverage: None,
            flagged: false,
        }
    }

    /// One line per entry plus the summary fields.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "samples={} rejected={} max_rel_err={:.3e} max|z|={:.3}",
            self.samples,
            self.rejected,
            self.max_rel_err,
            self.max_abs_z()
        );
        if let Some(e) = self.sigma_rel_err {
            s += &format!(" sigma_rel_err={e:.3e}");
        }
        if let Some(c) = self.coverage {
            s += &format!(" coverage@{:.0}%: full={:.4} diagonal={:.4}", c.level * 100.0, c.full, c.diagonal);
        }
        if self.flagged {
            s += " FLAGGED";
        }
        for e in &self.entries {
            s += &format!(
                "\n  {:<9} closed={:>14.6e} empirical={:>14.6e} se={:.3e} z={:+.3}",
                e.name, e.closed_form, e.empirical, e.std_err, e.z
            );
        }
        s
    }
}

fn entry(name: &'static str, closed_form: f64, empirical: f64, std_err: f64) -> McEntry {
    let z = if std_err > 0.0 {
        (empirical - closed_form) / std_err
    } else if empirical == closed_form {
        0.0
    } else {
        f64::INFINITY
    };
    McEntry {
        name,
        closed_form,
        empirical,
        std_err,
        z,
    }
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs `f(block_index, block_len)` over every block and returns the results
/// in block order.
fn run_blocks<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync,
{
    let blocks = n.div_ceil(BLOCK_SIZE);
    let len = |b: usize| BLOCK_SIZE.min(n - b * BLOCK_SIZE);
    let workers = workers.clamp(1, blocks.max(1));
    let mut results: Vec<(usize, T)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || (w..blocks).step_by(workers).map(|b| (b, f(b, len(b)))).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sampling worker panicked"))
            .collect()
    });
    results.sort_by_key(|(b, _)| *b);
    results.into_iter().map(|(_, t)| t).collect()
}

fn draw_depth(rng: &mut ChaCha8Rng, mu: f64, sigma: f64, bf: f64) -> Option<f64> {
    let n: f64 = rng.sample(StandardNormal);
    let disparity = mu + sigma * n;
    (disparity > 0.0).then(|| bf / disparity)
}

/// Samples `D ~ N(mu, (gamma mu)^2)`, discards non-positive draws, and compares
/// the mean and variance of `b fx / D` with [`disparity_to_depth`].
pub fn mc_depth_distribution(cam: &StereoCamera, disp: &DisparityEstimate, n: usize, seed: u64) -> Result<McReport> {
    mc_depth_distribution_with_workers(cam, disp, n, seed, default_workers())
}

pub fn mc_depth_distribution_with_workers(
    cam: &StereoCamera,
    disp: &DisparityEstimate,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<McReport> {
    if n < MIN_DEPTH_SAMPLES {
        return Err(Error::config("samples", format!("need at least {MIN_DEPTH_SAMPLES}, got {n}")));
    }
    let closed = disparity_to_depth(cam, disp)?;
    let (mu, sigma, bf) = (disp.mu, disp.sigma(), cam.baseline * cam.fx);

    let first = run_blocks(n, workers, |b, len| {
        let mut rng = block_rng(seed, b);
        let (mut count, mut sum) = (0usize, 0.0);
        for _ in 0..len {
            if let Some(d) = draw_depth(&mut rng, mu, sigma, bf) {
                count += 1;
                sum += d;
            }
        }
        (count, sum)
    });
    let accepted: usize = first.iter().map(|r| r.0).sum();
    if accepted < 2 {
        return Err(Error::Numerical("every disparity draw was non-positive".into()));
    }
    let mean = first.iter().map(|r| r.1).sum::<f64>() / accepted as f64;

    let second = run_blocks(n, workers, |b, len| {
        let mut rng = block_rng(seed, b);
        let (mut m2, mut m4) = (0.0, 0.0);
        for _ in 0..len {
            if let Some(d) = draw_depth(&mut rng, mu, sigma, bf) {
                let c = (d - mean) * (d - mean);
                m2 += c;
                m4 += c * c;
            }
        }
        (m2, m4)
    });
    let m2: f64 = second.iter().map(|r| r.0).sum();
    let m4 = second.iter().map(|r| r.1).sum::<f64>() / accepted as f64;
    let var = m2 / (accepted - 1) as f64;
    let nf = accepted as f64;
    let entries = vec![
        entry("mean", closed.mean, mean, (var / nf).sqrt()),
        entry("variance", closed.variance, var, ((m4 - var * var).max(0.0) / nf).sqrt()),
    ];
    let rejected = n - accepted;
    let mut report = McReport::finish(n, rejected, entries);
    report.sigma_rel_err = Some(if closed.variance > 0.0 {
        (var.sqrt() - closed.variance.sqrt()).abs() / closed.variance.sqrt()
    } else {
        var.sqrt()
    });
    report.flagged = rejected as f64 / n as f64 > MAX_REJECTION_RATE;
    Ok(report)
}

struct ProjectionSampler {
    u: f64,
    v: f64,
    d: f64,
    su: f64,
    sv: f64,
    sd: f64,
    cx: f64,
    cy: f64,
    fx: f64,
    fy: f64,
}

impl ProjectionSampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        let u = self.u + self.su * rng.sample::<f64, _>(StandardNormal);
        let v = self.v + self.sv * rng.sample::<f64, _>(StandardNormal);
        let d = self.d + self.sd * rng.sample::<f64, _>(StandardNormal);
        Vec3::new((u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d)
    }
}

const PAIRS: [(usize, usize, &str); 6] = [(0, 0, "xx"), (1, 1, "yy"), (2, 2, "zz"), (0, 1, "xy"), (0, 2, "xz"), (1, 2, "yz")];

/// Samples `u`, `v`, `d` independently, backprojects, and compares the
/// sample covariance with [`project_covariance`]. Also reports how many
/// samples fall in the 90% ellipsoid of the full covariance and of its
/// diagonal truncation.
pub fn mc_projection_covariance(cam: &StereoCamera, obs: &PixelObservation, n: usize, seed: u64) -> Result<McReport> {
    mc_projection_covariance_with_workers(cam, obs, n, seed, default_workers())
}

pub fn mc_projection_covariance_with_workers(
    cam: &StereoCamera,
    obs: &PixelObservation,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<McReport> {
    if n < MIN_PROJECTION_SAMPLES {
        return Err(Error::config("samples", format!("need at least {MIN_PROJECTION_SAMPLES}, got {n}")));
    }
    let closed = project_covariance(cam, obs)?;
    let sampler = ProjectionSampler {
        u: obs.u,
        v: obs.v,
        d: obs.depth,
        su: obs.sigma_u2.sqrt(),
        sv: obs.sigma_v2.sqrt(),
        sd: obs.sigma_d2.sqrt(),
        cx: cam.cx,
        cy: cam.cy,
        fx: cam.fx,
        fy: cam.fy,
    };

    let sums = run_blocks(n, workers, |b, len| {
        let mut rng = block_rng(seed, b);
        (0..len).fold(Vec3::zeros(), |acc, _| acc + sampler.draw(&mut rng))
    });
    let mean = sums.iter().fold(Vec3::zeros(), |a, s| a + s) / n as f64;

    let center = closed.position;
    let full_inv = Cholesky::new(closed.covariance).map(|c| c.inverse());
    let diag = closed.covariance.diagonal();
    let diag_inv = diag.iter().all(|v| *v > 0.0).then(|| Mat3::from_diagonal(&diag.map(|v| 1.0 / v)));

    struct Moments {
        second: [f64; 6],
        fourth: [f64; 6],
        inside_full: usize,
        inside_diag: usize,
    }
    let moments = run_blocks(n, workers, |b, len| {
        let mut rng = block_rng(seed, b);
        let mut m = Moments {
            second: [0.0; 6],
            fourth: [0.0; 6],
            inside_full: 0,
            inside_diag: 0,
        };
        for _ in 0..len {
            let p = sampler.draw(&mut rng);
            let c = p - mean;
            for (k, (i, j, _)) in PAIRS.iter().enumerate() {
                let prod = c[*i] * c[*j];
                m.second[k] += prod;
                m.fourth[k] += prod * prod;
            }
            let e = p - center;
            if let Some(inv) = &full_inv {
                if e.dot(&(inv * e)) <= CHI2_3DOF_90 {
                    m.inside_full += 1;
                }
            }
            if let Some(inv) = &diag_inv {
                if e.dot(&(inv * e)) <= CHI2_3DOF_90 {
                    m.inside_diag += 1;
                }
            }
        }
        m
    });

    let nf = n as f64;
    let mut second = [0.0; 6];
    let mut fourth = [0.0; 6];
    let (mut inside_full, mut inside_diag) = (0usize, 0usize);
    for m in &moments {
        for k in 0..6 {
            second[k] += m.second[k];
            fourth[k] += m.fourth[k];
        }
        inside_full += m.inside_full;
        inside_diag += m.inside_diag;
    }
    let entries = PAIRS
        .iter()
        .enumerate()
        .map(|(k, (i, j, name))| {
            let cov = second[k] / (nf - 1.0);
            let m22 = fourth[k] / nf;
            let se = ((m22 - cov * cov).max(0.0) / nf).sqrt();
            entry(name, closed.covariance[(*i, *j)], cov, se)
        })
        .collect();
    let mut report = McReport::finish(n, 0, entries);
    if full_inv.is_some() && diag_inv.is_some() {
        report.coverage = Some(Coverage {
            level: 0.9,
            full: inside_full as f64 / nf,
            diagonal: inside_diag as f64 / nf,
        });
    }
    Ok(report)
}

/// The 27-observation test matrix: `u` and `v` at the principal point, half
/// way to the border and near the border, each at depths 1, 5 and 20 m, with
/// matching and depth variances that vary across the grid.
pub fn standard_observation_grid(cam: &StereoCamera) -> Vec<PixelObservation> {
    let us = [cam.cx, 0.5 * (cam.cx + cam.width as f64), cam.width as f64 - 2.0];
    let vs = [cam.cy, 0.5 * cam.cy, 2.0];
    let depths = [1.0, 5.0, 20.0];
    let mut out = Vec::with_capacity(27);
    for (i, &u) in us.iter().enumerate() {
        for (j, &v) in vs.iter().enumerate() {
            for (k, &d) in depths.iter().enumerate() {
                let sigma_u2 = [0.25, 1.0, 4.0][(i + k) % 3];
                let sigma_v2 = [4.0, 0.25, 1.0][(j + k) % 3];
                let rel = [0.01, 0.05, 0.1][(i + j + k) % 3];
                out.push(PixelObservation {
                    u,
                    v,
                    sigma_u2,
                    sigma_v2,
                    depth: d,
                    sigma_d2: (rel * d).powi(2),
                });
            }
        }
    }
    out
}

/// Depth-oracle rows: one per report.
pub fn write_depth_csv(path: &Path, rows: &[(DisparityEstimate, McReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let header = [
        "gamma",
        "mu_disparity",
        "samples",
        "rejected",
        "closed_mean",
        "empirical_mean",
        "closed_variance",
        "empirical_variance",
        "variance_std_err",
        "variance_z",
        "sigma_rel_err",
        "flagged",
    ];
    w.write_record(header).map_err(|e| Error::format(path, e.to_string()))?;
    for (disp, r) in rows {
        let mean = r.entry("mean").expect("mean entry");
        let var = r.entry("variance").expect("variance entry");
        w.write_record([
            disp.gamma.to_string(),
            disp.mu.to_string(),
            r.samples.to_string(),
            r.rejected.to_string(),
            mean.closed_form.to_string(),
            mean.empirical.to_string(),
            var.closed_form.to_string(),
            var.empirical.to_string(),
            var.std_err.to_string(),
            var.z.to_string(),
            r.sigma_rel_err.unwrap_or(f64::NAN).to_string(),
            r.flagged.to_string(),
        ])
        .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Projection-oracle rows: one per covariance entry per observation.
pub fn write_projection_csv(path: &Path, rows: &[(PixelObservation, McReport)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let header = [
        "obs_index",
        "u",
        "v",
        "depth",
        "sigma_u2",
        "sigma_v2",
        "sigma_d2",
        "entry",
        "closed_form",
        "empirical",
        "std_err",
        "z",
        "coverage_full",
        "coverage_diagonal",
    ];
    w.write_record(header).map_err(|e| Error::format(path, e.to_string()))?;
    for (i, (obs, r)) in rows.iter().enumerate() {
        let (cf, cd) = r.coverage.map_or((f64::NAN, f64::NAN), |c| (c.full, c.diagonal));
        for e in &r.entries {
            w.write_record([
                i.to_string(),
                obs.u.to_string(),
                obs.v.to_string(),
                obs.depth.to_string(),
                obs.sigma_u2.to_string(),
                obs.sigma_v2.to_string(),
                obs.sigma_d2.to_string(),
                e.name.to_string(),
                e.closed_form.to_string(),
                e.empirical.to_string(),
                e.std_err.to_string(),
                e.z.to_string(),
                cf.to_string(),
                cd.to_string(),
            ])
            .map_err(|e| Error::format(path, e.to_string()))?;
        }
    }
    let mut inner = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}
