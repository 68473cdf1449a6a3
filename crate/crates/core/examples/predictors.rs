//! Runs all seven synthetic predictors on one episode and compares their
//! frames with the ground truth.
//!
//! ```text
//! cargo run --example predictors -- [EPISODE_ID]
//! ```

use actbench::metrics::{psnr, ssim, SsimConfig};
use actbench::predict::{predict, PredictorConfig, PredictorKind, CONTEXT_FRAMES};
use actbench::sim::{simulate_episode, WorldConfig};

fn main() -> actbench::Result<()> {
    let id: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let world = WorldConfig::default();
    let episode = simulate_episode(&world, id)?;
    let cfg = SsimConfig::default();
    println!(
        "episode {id}: {} context frames, {} predicted",
        CONTEXT_FRAMES,
        episode.video.frames - CONTEXT_FRAMES
    );
    println!(
        "{:<13} {:>10} {:>10} {:>10} {:>10}",
        "predictor", "PSNR t=1", "PSNR t=28", "SSIM t=1", "SSIM t=28"
    );
    for kind in PredictorKind::ALL {
        let video = predict(&PredictorConfig::new(kind), &world, &episode)?;
        let last = video.frames - 1;
        let truth = |j: usize| episode.video.frame(j + CONTEXT_FRAMES);
        println!(
            "{:<13} {:>10.2} {:>10.2} {:>10.4} {:>10.4}",
            kind.as_str(),
            psnr(&video.frame(0), &truth(0))?,
            psnr(&video.frame(last), &truth(last))?,
            ssim(&video.frame(0), &truth(0), &cfg)?,
            ssim(&video.frame(last), &truth(last), &cfg)?,
        );
    }
    Ok(())
}
