//! PSNR, SSIM and FVD-lite on hand-built frames and clips.
//!
//! ```text
//! cargo run --example metrics
//! ```

use actbench::imageops::gaussian_blur;
use actbench::metrics::{fvd_lite, psnr, ssim, SsimConfig};
use actbench::predict::{predict, PredictorConfig, PredictorKind, CONTEXT_FRAMES};
use actbench::sim::{simulate_episode, WorldConfig};
use actbench::video::{Frame, Video};

fn main() -> actbench::Result<()> {
    let black = Frame::filled(64, 64, &[0.0; 3]);
    let grey = Frame::filled(64, 64, &[0.5; 3]);
    let white = Frame::filled(64, 64, &[1.0; 3]);
    let cfg = SsimConfig::default();
    println!(
        "PSNR(black, black) = {:.1} dB (capped)",
        psnr(&black, &black)?
    );
    println!("PSNR(black, grey)  = {:.4} dB", psnr(&black, &grey)?);
    println!("SSIM(black, white) = {:.3e}", ssim(&black, &white, &cfg)?);

    let world = WorldConfig::default();
    let episode = simulate_episode(&world, 3)?;
    let frame = episode.video.frame(5);
    for sigma in [0.5, 1.0, 2.0, 4.0] {
        let blurred = gaussian_blur(&frame, sigma);
        println!(
            "blur sigma {sigma:>3}: PSNR {:6.2} dB, SSIM {:.4}",
            psnr(&frame, &blurred)?,
            ssim(&frame, &blurred, &cfg)?
        );
    }

    // FVD-lite compares feature distributions over many clips; the two
    // context frames of the real clips are dropped before featurization.
    let episodes: Vec<_> = (0..40)
        .map(|id| simulate_episode(&world, id))
        .collect::<Result<_, _>>()?;
    let real: Vec<Video> = episodes.iter().map(|e| e.video.clone()).collect();
    for kind in [
        PredictorKind::Oracle,
        PredictorKind::BlurOracle,
        PredictorKind::Frozen,
    ] {
        let preds = episodes
            .iter()
            .map(|e| predict(&PredictorConfig::new(kind), &world, e))
            .collect::<Result<Vec<_>, _>>()?;
        println!(
            "fvd_lite(real, {:<11}) = {:.4}",
            kind.as_str(),
            fvd_lite(&real, &preds, CONTEXT_FRAMES, 32)?
        );
    }
    Ok(())
}
