//! Selects keypoints on a simulated frame whose middle band has strongly
//! inflated (and honestly reported) noise, and compares with random picks.
//!
//! ```bash
//! cargo run -p metric-vo --example keypoint_selection
//! ```

use metric_vo::selector::{select, select_random};
use metric_vo::sim::generate_sequence;
use metric_vo::{Result, SceneConfig, SelectorConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<()> {
    let mut scene = SceneConfig::from_toml_str(include_str!("../configs/ablation_scene.toml"))?;
    scene.num_frames = 2;
    let frames = generate_sequence(&scene)?;
    let band = scene.anomaly_regions[0].rect;
    let in_band = |v: u32| v >= band[1] && v < band[3];

    let cfg = SelectorConfig {
        nms_radius: 6,
        border_margin: 6,
        depth_range: scene.depth_range,
        ..SelectorConfig::default()
    };
    let chosen = select(&frames[0], &scene.camera, &cfg)?;
    let random = select_random(&frames[0], &scene.camera, &cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!(
        "uncertainty selector: {} keypoints, {} in the noisy band",
        chosen.len(),
        chosen.iter().filter(|k| in_band(k.v)).count()
    );
    println!(
        "random selector:      {} keypoints, {} in the noisy band",
        random.len(),
        random.iter().filter(|k| in_band(k.v)).count()
    );
    for k in chosen.iter().take(5) {
        println!("  ({:>3}, {:>3}) score {:.3} depth {:.2} m", k.u, k.v, k.score, k.depth);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
