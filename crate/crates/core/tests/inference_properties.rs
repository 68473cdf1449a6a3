//! Invariances of the action-inference scores and of the pairwise network.

use actbench::dataset::aligned_targets;
use actbench::inference::{
    evaluate, mae, mean_predictor_score, r2, train_inference, write_pair_input, InferenceNetSpec,
    InputNorm, SequenceSet, TargetNorm, TrainConfig, TrainedModel,
};
use actbench::nn::Tensor;
use actbench::predict::{predict, PredictorConfig, PredictorKind};
use actbench::sim::{simulate_episode, WorldConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spread(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-10.0f64..10.0, n),
        prop::collection::vec(-10.0f64..10.0, n),
    )
        .prop_filter("targets need spread", |(_, t)| {
            let m = t.iter().sum::<f64>() / t.len() as f64;
            t.iter().map(|v| (v - m).powi(2)).sum::<f64>() > 1e-3
        })
}

proptest! {
    #[test]
    fn r2_is_shift_invariant((p, t) in spread(16), c in -100.0f64..100.0) {
        let base = r2(&p, &t).unwrap();
        let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
        let ts: Vec<f64> = t.iter().map(|v| v + c).collect();
        prop_assert!((r2(&ps, &ts).unwrap() - base).abs() < 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn r2_is_scale_invariant((p, t) in spread(16), k in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0]) {
        let base = r2(&p, &t).unwrap();
        let ps: Vec<f64> = p.iter().map(|v| v * k).collect();
        let ts: Vec<f64> = t.iter().map(|v| v * k).collect();
        prop_assert!((r2(&ps, &ts).unwrap() - base).abs() < 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn mae_is_non_negative_and_zero_only_on_equality((p, t) in spread(12)) {
        let m = mae(&p, &t).unwrap();
        prop_assert!(m >= 0.0);
        prop_assert_eq!(m == 0.0, p == t);
        prop_assert_eq!(mae(&t, &t).unwrap(), 0.0);
    }
}

#[test]
fn r2_is_undefined_on_constant_targets() {
    assert!(r2(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).is_err());
    assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
}

fn clips(kind: PredictorKind, ids: std::ops::Range<u64>) -> SequenceSet {
    let w = WorldConfig::default();
    let mut set = SequenceSet::default();
    for id in ids {
        let e = simulate_episode(&w, id).unwrap();
        let v = predict(&PredictorConfig::new(kind), &w, &e).unwrap();
        set.push(id, v, aligned_targets(&e)).unwrap();
    }
    set
}

#[test]
fn pair_outputs_do_not_depend_on_evaluation_order() {
    let spec = InferenceNetSpec::default();
    let net = spec.build(3).unwrap();
    let set = clips(PredictorKind::Oracle, 0..2);
    let norm = InputNorm::identity(spec.frame_channels);
    let per = spec.input_shape().iter().product::<usize>();
    let pairs: Vec<(usize, usize)> = (0..2).flat_map(|c| (0..27).map(move |i| (c, i))).collect();
    let batch = |order: &[(usize, usize)]| {
        let mut data = vec![0.0; order.len() * per];
        for (k, &(c, i)) in order.iter().enumerate() {
            write_pair_input(&set.videos[c], i, &norm, &mut data[k * per..(k + 1) * per]);
        }
        let mut shape = vec![order.len()];
        shape.extend(spec.input_shape());
        net.forward(&Tensor::new(shape, data).unwrap()).unwrap()
    };
    let reference = batch(&pairs);
    let mut shuffled: Vec<usize> = (0..pairs.len()).collect();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let order: Vec<_> = shuffled.iter().map(|&k| pairs[k]).collect();
    let out = batch(&order);
    for (k, &src) in shuffled.iter().enumerate() {
        assert_eq!(
            &out.data()[2 * k..2 * k + 2],
            &reference.data()[2 * src..2 * src + 2]
        );
    }
}

#[test]
fn mean_predictor_r2_is_near_zero_at_every_timestep() {
    let train = clips(PredictorKind::Frozen, 0..256);
    let test = clips(PredictorKind::Frozen, 10_000..10_256);
    let mean = TargetNorm::fit(&train).unwrap().mean;
    let score = mean_predictor_score(mean, &test).unwrap();
    for (t, r) in score.r2_per_timestep.iter().enumerate() {
        let r = r.expect("non-degenerate timestep");
        assert!(
            (-0.05..=0.05).contains(&r),
            "timestep {}: mean-predictor R² {r}",
            t + 1
        );
    }
}

#[test]
fn training_is_reproducible_and_survives_a_checkpoint() {
    let train = clips(PredictorKind::Oracle, 0..16);
    let val = clips(PredictorKind::Oracle, 100..104);
    let test = clips(PredictorKind::Oracle, 200..208);
    let config = TrainConfig {
        max_epochs: 2,
        seed: 5,
        ..TrainConfig::default()
    };
    let spec = InferenceNetSpec::default();
    let a = train_inference(&train, &val, &spec, &config).unwrap();
    let b = train_inference(&train, &val, &spec, &config).unwrap();
    assert_eq!(a.checkpoint_bytes(), b.checkpoint_bytes());
    assert_eq!(a.log.len(), 2);
    let restored =
        TrainedModel::from_checkpoint_bytes(&a.checkpoint_bytes(), "memory".as_ref()).unwrap();
    let (sa, _) = evaluate(&a, &test).unwrap();
    let (sr, _) = evaluate(&restored, &test).unwrap();
    assert_eq!(sa, sr);
    assert_eq!(sa.r2_per_timestep.len(), 27);
    assert_eq!(sa.num_clips, 8);
}
