//! The perceptual-vs-action divergence on static spans: while no object has
//! moved yet, a frozen frame is almost right pixel-wise, yet it carries no
//! information about the gripper's motion; a blurred playback scores worse
//! on PSNR/SSIM but keeps the motion.
//!
//! ```text
//! cargo run --release --example rank_inversion -- [EPISODES]
//! ```

use actbench::harness::static_span;
use actbench::metrics::{psnr, ssim, SsimConfig};
use actbench::predict::{predict, PredictorConfig, PredictorKind, CONTEXT_FRAMES};
use actbench::sim::{simulate_episode, WorldConfig};
use actbench::video::Video;

fn span_means(
    pred: &Video,
    truth: &Video,
    span: usize,
    cfg: &SsimConfig,
) -> actbench::Result<(f64, f64)> {
    let (mut p, mut s) = (0.0, 0.0);
    for j in 0..span {
        let (a, b) = (pred.frame(j), truth.frame(j + CONTEXT_FRAMES));
        p += psnr(&a, &b)?;
        s += ssim(&a, &b, cfg)?;
    }
    Ok((p / span as f64, s / span as f64))
}

fn main() -> actbench::Result<()> {
    let n: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(50);
    let world = WorldConfig::default();
    let cfg = SsimConfig::default();
    let blur = PredictorConfig::new(PredictorKind::BlurOracle);
    let frozen = PredictorConfig::new(PredictorKind::Frozen);
    let (mut spans, mut blur_worse) = (0, 0);
    for id in 0..n {
        let e = simulate_episode(&world, id)?;
        let span = static_span(&e.object_positions);
        if span == 0 {
            continue;
        }
        spans += 1;
        let (bp, bs) = span_means(&predict(&blur, &world, &e)?, &e.video, span, &cfg)?;
        let (fp, fs) = span_means(&predict(&frozen, &world, &e)?, &e.video, span, &cfg)?;
        if bp < fp && bs < fs {
            blur_worse += 1;
        }
        if spans <= 5 {
            println!("episode {id:>3}: span {span:>2} frames  blur PSNR {bp:5.2} SSIM {bs:.3} | frozen PSNR {fp:5.2} SSIM {fs:.3}");
        }
    }
    println!("blur_oracle below frozen on both metrics in {blur_worse} of {spans} static spans");
    Ok(())
}
