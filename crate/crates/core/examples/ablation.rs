//! Covariance and keypoint ablations on the anisotropic-noise scene, over a
//! few seeds.
//!
//! ```bash
//! cargo run --release -p metric-vo --example ablation
//! ```

use metric_vo::pipeline::{ablate_sequence, AblationMode, KeypointMode, Sequence, Settings};
use metric_vo::{sim, CovarianceMode, LMConfig, Result, SceneConfig, SelectorConfig};

pub fn run_example() -> Result<()> {
    run_with(3, 30)
}

pub fn run_with(seeds: u64, frames: usize) -> Result<()> {
    let base = SceneConfig::from_toml_str(include_str!("../configs/ablation_scene.toml"))?;
    let modes: Vec<AblationMode> = ["full", "diagonal", "identity", "scale_agnostic", "identity/random"]
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_>>()?;
    let settings = Settings {
        selector: SelectorConfig {
            nms_radius: 6,
            border_margin: 6,
            depth_range: base.depth_range,
            max_keypoints: 120,
            ..SelectorConfig::default()
        },
        lm: LMConfig::default(),
        covariance_mode: CovarianceMode::Full,
        keypoint_mode: KeypointMode::Uncertainty,
        seed: 0,
    };

    let mut table: Vec<Vec<f64>> = vec![Vec::new(); modes.len()];
    for seed in 0..seeds {
        let scene = SceneConfig {
            seed,
            num_frames: frames,
            ..base.clone()
        };
        let seq = Sequence {
            camera: scene.camera,
            frames: sim::generate_sequence(&scene)?,
        };
        for (k, row) in ablate_sequence(&seq, &settings, &modes)?.into_iter().enumerate() {
            table[k].push(row.t_rel);
        }
    }
    println!("{:<18} {:>14}", "mode", "t_rel [mm/frame]");
    for (mode, t) in modes.iter().zip(&table) {
        let mut sorted = t.clone();
        sorted.sort_by(f64::total_cmp);
        println!("{:<18} {:>14.3}", mode.label(), 1e3 * sorted[sorted.len() / 2]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
