//! Trains the pairwise action-inference network on oracle playback and on
//! frozen predictions, then scores both on held-out clips.
//!
//! ```text
//! cargo run --release --example train_inference -- [TRAIN_CLIPS] [EPOCHS]
//! ```

use actbench::dataset::aligned_targets;
use actbench::inference::{
    evaluate, mean_predictor_mae, train_inference, InferenceNetSpec, SequenceSet, TrainConfig,
};
use actbench::predict::{predict, PredictorConfig, PredictorKind};
use actbench::sim::{simulate_episode, WorldConfig};

fn clips(
    world: &WorldConfig,
    kind: PredictorKind,
    ids: std::ops::Range<u64>,
) -> actbench::Result<SequenceSet> {
    let mut set = SequenceSet::default();
    for id in ids {
        let episode = simulate_episode(world, id)?;
        let video = predict(&PredictorConfig::new(kind), world, &episode)?;
        set.push(id, video, aligned_targets(&episode))?;
    }
    Ok(set)
}

fn main() -> actbench::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let n_train: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let world = WorldConfig::default();
    let config = TrainConfig {
        max_epochs: epochs,
        ..TrainConfig::default()
    };
    for kind in [PredictorKind::Oracle, PredictorKind::Frozen] {
        let train = clips(&world, kind, 0..n_train)?;
        let val = clips(&world, kind, 10_000..10_016)?;
        let test = clips(&world, kind, 20_000..20_064)?;
        let model = train_inference(&train, &val, &InferenceNetSpec::default(), &config)?;
        let (score, _) = evaluate(&model, &test)?;
        println!(
            "{:<7} R² {:+.4}  MAE {:.4} px (mean predictor {:.4})  even R² {:+.4}  odd R² {:+.4}  best epoch {}",
            kind.as_str(),
            score.aggregate_r2,
            score.aggregate_mae,
            mean_predictor_mae(&test)?,
            score.even.r2,
            score.odd.r2,
            model.best_epoch
        );
    }
    Ok(())
}
