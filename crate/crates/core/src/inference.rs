//! Action inference: a convolutional regressor that reads two consecutive
//! frames and outputs the gripper displacement between them, and the
//! per-timestep R²/MAE scoring built on it.
//!
//! Pairs are treated as independent samples. The same parameters score every
//! timestep, so any temporal trend in the scores comes from the frames.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, checkpoint, mse_loss, LayerSpec, Method, Network, OptimizerState, Tensor};
use crate::rng::{domain, stream};
use crate::video::Video;

pub const ACTION_DIM: usize = 2;
pub const DIM_NAMES: [&str; ACTION_DIM] = ["dx", "dy"];

/// Samples per gradient chunk; chunk gradients are summed in a fixed order
/// so results do not depend on the worker count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceNetSpec {
    pub image_size: usize,
    pub frame_channels: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
}

impl Default for InferenceNetSpec {
    fn default() -> Self {
        Self {
            image_size: 64,
            frame_channels: 3,
            conv_channels: vec![16, 32, 64, 128],
            kernel: 3,
            stride: 2,
        }
    }
}

impl InferenceNetSpec {
    pub fn input_shape(&self) -> Vec<usize> {
        vec![2 * self.frame_channels, self.image_size, self.image_size]
    }

    /// conv+relu blocks, global average pooling, then a dense head onto the action.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let mut c = 2 * self.frame_channels;
        for &out in &self.conv_channels {
            layers.push(LayerSpec::conv(c, out, self.kernel, self.stride));
            layers.push(LayerSpec::Relu);
            c = out;
        }
        layers.push(LayerSpec::GlobalAvgPool);
        layers.push(LayerSpec::dense(c, ACTION_DIM));
        layers
    }

    pub fn build(&self, seed: u64) -> Result<Network> {
        let mut rng = stream(seed, domain::TRAINING, 0);
        Network::new(self.input_shape(), self.layers(), &mut rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Method,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-MAE improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Method::Adam,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || self.max_epochs == 0
            || self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
        {
            return Err(Error::InvalidConfig(
                "batch_size, max_epochs and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// Parity of the underlying action index: even steps are the ones where the
/// commanded velocity is resampled. Pair `i` is labelled with action `i + 2`,
/// which has the same parity as `i`.
pub fn parity_of(pair_index: usize) -> Parity {
    if pair_index.is_multiple_of(2) {
        Parity::Even
    } else {
        Parity::Odd
    }
}

/// One training example: two frames stacked along channels, plus its label.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    /// `(2C, H, W)`, first frame's channels first.
    pub input: Tensor,
    pub target: [f64; ACTION_DIM],
    pub timestep: usize,
    pub parity: Parity,
}

/// Per-channel affine map applied to every input pixel before the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Per-channel mean and standard deviation over every training frame.
    /// Raw frames are dominated by a near-constant background; without
    /// centring, training sits on the mean-predictor plateau.
    pub fn fit(set: &SequenceSet) -> Result<Self> {
        let c = set
            .videos
            .first()
            .ok_or_else(|| Error::Empty("training clips".into()))?
            .channels;
        let mut sum = vec![0.0f64; c];
        let mut count = 0usize;
        for v in &set.videos {
            for px in v.data.chunks_exact(c) {
                for (s, x) in sum.iter_mut().zip(px) {
                    *s += *x as f64;
                }
            }
            count += v.data.len() / c;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0f64; c];
        for v in &set.videos {
            for px in v.data.chunks_exact(c) {
                for ((q, x), m) in sq.iter_mut().zip(px).zip(&mean) {
                    *q += (*x as f64 - m).powi(2);
                }
            }
        }
        let std = sq
            .iter()
            .map(|q| (q / count as f64).sqrt().max(1e-3))
            .collect();
        Ok(Self { mean, std })
    }
}

/// Writes frames `i` and `i + 1` of `video` as a `(2C, H, W)` block.
pub fn write_pair_input(video: &Video, i: usize, norm: &InputNorm, out: &mut [f64]) {
    let (h, w, c) = (video.height, video.width, video.channels);
    let plane = h * w;
    debug_assert_eq!(out.len(), 2 * c * plane);
    for (k, t) in [i, i + 1].into_iter().enumerate() {
        let f = video.frame_data(t);
        for ch in 0..c {
            let dst = &mut out[(k * c + ch) * plane..(k * c + ch + 1) * plane];
            for (p, d) in dst.iter_mut().enumerate() {
                *d = (f[p * c + ch] as f64 - norm.mean[ch]) / norm.std[ch];
            }
        }
    }
}

/// Consecutive frame pairs with the action executed between them.
pub fn make_pairs(video: &Video, actions: &[[f32; 2]]) -> Result<Vec<PairSample>> {
    if video.frames < 2 || actions.len() + 1 != video.frames {
        return Err(Error::length(
            "make_pairs: actions per frame pair",
            video.frames.saturating_sub(1),
            actions.len(),
        ));
    }
    let shape = vec![2 * video.channels, video.height, video.width];
    let n: usize = shape.iter().product();
    let raw = InputNorm::identity(video.channels);
    actions
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut buf = vec![0.0; n];
            write_pair_input(video, i, &raw, &mut buf);
            Ok(PairSample {
                input: Tensor::new(shape.clone(), buf)?,
                target: [a[0] as f64, a[1] as f64],
                timestep: i,
                parity: parity_of(i),
            })
        })
        .collect()
}

/// Predicted (or ground-truth) clips with one action label per frame pair.
#[derive(Debug, Clone, Default)]
pub struct SequenceSet {
    pub ids: Vec<u64>,
    pub videos: Vec<Video>,
    pub targets: Vec<Vec<[f32; 2]>>,
}

impl SequenceSet {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn push(&mut self, id: u64, video: Video, targets: Vec<[f32; 2]>) -> Result<()> {
        if targets.len() + 1 != video.frames {
            return Err(Error::length(
                "targets per clip",
                video.frames.saturating_sub(1),
                targets.len(),
            ));
        }
        if let Some(first) = self.videos.first() {
            if first.shape() != video.shape() {
                return Err(Error::shape("clip", &first.shape(), &video.shape()));
            }
        }
        self.ids.push(id);
        self.videos.push(video);
        self.targets.push(targets);
        Ok(())
    }

    pub fn pairs_per_clip(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    fn pair_indices(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|e| (0..self.targets[e].len()).map(move |i| (e, i)))
            .collect()
    }
}

/// Per-dimension standardization fitted on the training targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetNorm {
    pub mean: [f64; ACTION_DIM],
    pub std: [f64; ACTION_DIM],
}

impl TargetNorm {
    pub fn fit(set: &SequenceSet) -> Result<Self> {
        let all: Vec<[f32; 2]> = set.targets.iter().flatten().copied().collect();
        if all.is_empty() {
            return Err(Error::Empty("training targets".into()));
        }
        let n = all.len() as f64;
        let mut mean = [0.0; ACTION_DIM];
        let mut std = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            mean[d] = all.iter().map(|a| a[d] as f64).sum::<f64>() / n;
            let var = all
                .iter()
                .map(|a| (a[d] as f64 - mean[d]).powi(2))
                .sum::<f64>()
                / n;
            std[d] = var.sqrt().max(1e-6);
        }
        Ok(Self { mean, std })
    }

    fn encode(&self, a: [f32; 2]) -> [f64; 2] {
        [0, 1].map(|d| (a[d] as f64 - self.mean[d]) / self.std[d])
    }

    fn decode(&self, z: &[f64]) -> [f64; 2] {
        [0, 1].map(|d| z[d] * self.std[d] + self.mean[d])
    }
}

/// Everything fitted on the training split besides the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub input: InputNorm,
    pub target: TargetNorm,
}

impl Standardization {
    pub fn fit(train: &SequenceSet) -> Result<Self> {
        Ok(Self {
            input: InputNorm::fit(train)?,
            target: TargetNorm::fit(train)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
}

/// A regressor ready for scoring; parameters are rounded to f32 so the
/// in-memory model equals its checkpoint.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: Network,
    pub norm: Standardization,
    pub seed: u64,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainedModel {
    /// Inferred displacements, in pixels, for each consecutive pair of `video`.
    pub fn infer(&self, video: &Video) -> Result<Vec<[f64; 2]>> {
        infer_with(&self.net, &self.norm, video)
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        checkpoint::encode(
            &self.net,
            self.seed,
            serde_json::json!({ "standardization": self.norm, "best_epoch": self.best_epoch }),
        )
    }

    pub fn from_checkpoint_bytes(bytes: &[u8], path: &std::path::Path) -> Result<Self> {
        let (net, header) = checkpoint::decode(bytes, path)?;
        let norm: Standardization =
            serde_json::from_value(header.metadata["standardization"].clone()).map_err(|e| {
                Error::Format {
                    path: path.to_path_buf(),
                    detail: format!("standardization: {e}"),
                }
            })?;
        let best_epoch = header.metadata["best_epoch"].as_u64().unwrap_or(0) as usize;
        Ok(Self {
            net,
            norm,
            seed: header.seed,
            best_epoch,
            log: Vec::new(),
        })
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_mae\n");
        for e in &self.log {
            s.push_str(&format!(
                "{},{:.9},{:.9}\n",
                e.epoch, e.train_loss, e.val_mae
            ));
        }
        s
    }
}

fn infer_with(net: &Network, norm: &Standardization, video: &Video) -> Result<Vec<[f64; 2]>> {
    let n = video.frames - 1;
    let per: usize = net.input_shape().iter().product();
    let mut buf = vec![0.0; n * per];
    for (i, chunk) in buf.chunks_exact_mut(per).enumerate() {
        write_pair_input(video, i, &norm.input, chunk);
    }
    let mut shape = vec![n];
    shape.extend_from_slice(net.input_shape());
    let out = net.forward(&Tensor::new(shape, buf)?)?;
    Ok(out
        .data()
        .chunks_exact(ACTION_DIM)
        .map(|z| norm.target.decode(z))
        .collect())
}

fn validation_mae(net: &Network, norm: &Standardization, val: &SequenceSet) -> Result<f64> {
    let per_clip = val
        .videos
        .par_iter()
        .zip(&val.targets)
        .map(|(v, t)| {
            let p = infer_with(net, norm, v)?;
            Ok(p.iter()
                .zip(t)
                .map(|(p, t)| {
                    (0..ACTION_DIM)
                        .map(|d| (p[d] - t[d] as f64).abs())
                        .sum::<f64>()
                })
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    let count = val.targets.iter().map(Vec::len).sum::<usize>() * ACTION_DIM;
    Ok(per_clip.iter().sum::<f64>() / count as f64)
}

/// Gradient of the batch-mean loss; returns (loss, per-parameter gradients).
fn batch_gradients(
    net: &Network,
    set: &SequenceSet,
    norm: &Standardization,
    batch: &[(usize, usize)],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let per: usize = net.input_shape().iter().product();
    let total = batch.len() as f64;
    let chunks = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut buf = vec![0.0; chunk.len() * per];
            let mut target = Vec::with_capacity(chunk.len() * ACTION_DIM);
            for (slot, &(e, i)) in buf.chunks_exact_mut(per).zip(chunk) {
                write_pair_input(&set.videos[e], i, &norm.input, slot);
                target.extend(norm.target.encode(set.targets[e][i]));
            }
            let mut shape = vec![chunk.len()];
            shape.extend_from_slice(net.input_shape());
            let (pred, cache) = net.forward_cached(&Tensor::new(shape, buf)?)?;
            let target = Tensor::new(pred.shape().to_vec(), target)?;
            let (loss, grad) = mse_loss(&pred, &target)?;
            // Reweight the chunk-mean loss into the batch mean.
            let w = chunk.len() as f64 / total;
            let grad = Tensor::new(
                grad.shape().to_vec(),
                grad.data().iter().map(|g| g * w).collect(),
            )?;
            let g = net.backward_cached(&cache, &grad)?;
            Ok((loss * w, g.params))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = chunks.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        for (acc, part) in grads.iter_mut().zip(g) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    Ok((loss, grads))
}

/// Trains on `train`, keeping the parameters with the best validation MAE.
pub fn train_inference(
    train: &SequenceSet,
    val: &SequenceSet,
    spec: &InferenceNetSpec,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation split".into()));
    }
    let norm = Standardization::fit(train)?;
    let mut net = spec.build(config.seed)?;
    let mut opt = OptimizerState::with_method(config.optimizer, config.learning_rate);
    let mut rng = stream(config.seed, domain::TRAINING, 1);
    let mut order = train.pair_indices();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = batch_gradients(&net, train, &norm, batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite training loss {loss}"),
                });
            }
            loss_sum += loss * batch.len() as f64;
            net.set_grads(&nn::Gradients {
                params: grads,
                input: Tensor::zeros(vec![1]),
            })?;
            opt.step(net.params_mut())?;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_mae = validation_mae(&net, &norm, val)?;
        if !val_mae.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("non-finite validation MAE {val_mae}"),
            });
        }
        log::info!("epoch {epoch}: train_loss {train_loss:.5} val_mae {val_mae:.4}");
        log.push(EpochLog {
            epoch,
            train_loss,
            val_mae,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_mae < *b) {
            best = Some((val_mae, epoch, net.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (_, best_epoch, mut best_net) = best.expect("at least one epoch ran");
    checkpoint::round_to_f32(&mut best_net);
    for p in best_net.params_mut() {
        p.clear_grad();
    }
    Ok(TrainedModel {
        net: best_net,
        norm,
        seed: config.seed,
        best_epoch,
        log,
    })
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::length("r2 inputs", targets.len(), preds.len()));
    }
    if targets.len() < 2 {
        return Err(Error::UndefinedScore(
            "R² needs at least two samples".into(),
        ));
    }
    let n = targets.len() as f64;
    let first = targets[0];
    let mean = first + targets.iter().map(|t| t - first).sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedScore("targets have zero variance".into()));
    }
    let ss_res: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::length("mae inputs", targets.len(), preds.len()));
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub name: String,
    pub r2_per_timestep: Vec<Option<f64>>,
    pub mae_per_timestep: Vec<f64>,
    pub aggregate_r2: f64,
    pub aggregate_mae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityScore {
    pub r2: f64,
    pub mae: f64,
}

/// Scores over the test clips; timestep `i` here is pair `i` (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceScore {
    pub r2_per_timestep: Vec<Option<f64>>,
    pub mae_per_timestep: Vec<f64>,
    pub aggregate_r2: f64,
    pub aggregate_mae: f64,
    pub even: ParityScore,
    pub odd: ParityScore,
    pub per_dimension: Vec<DimensionScore>,
    /// Timesteps whose targets had zero variance; excluded from R² aggregates.
    pub degenerate_timesteps: Vec<usize>,
    pub num_clips: usize,
}

/// One test clip's inferred and true actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipTrace {
    pub id: u64,
    pub inferred: Vec<[f64; 2]>,
    pub truth: Vec<[f64; 2]>,
    /// Mean over dimensions of the R² along this clip; `None` if undefined.
    pub r2: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Scores a table of inferred vs true actions, `[clip][timestep]`.
pub fn score_predictions(
    inferred: &[Vec<[f64; 2]>],
    truth: &[Vec<[f64; 2]>],
) -> Result<InferenceScore> {
    if inferred.len() != truth.len() {
        return Err(Error::length("scored clips", truth.len(), inferred.len()));
    }
    if truth.len() < 2 {
        return Err(Error::Empty("test split (need at least 2 clips)".into()));
    }
    let steps = truth[0].len();
    if truth.iter().chain(inferred).any(|c| c.len() != steps) {
        return Err(Error::InvalidConfig("clips have different lengths".into()));
    }
    let mut per_dimension = Vec::with_capacity(ACTION_DIM);
    for (d, name) in DIM_NAMES.iter().enumerate() {
        let mut r2s = Vec::with_capacity(steps);
        let mut maes = Vec::with_capacity(steps);
        for i in 0..steps {
            let p: Vec<f64> = inferred.iter().map(|c| c[i][d]).collect();
            let t: Vec<f64> = truth.iter().map(|c| c[i][d]).collect();
            r2s.push(match r2(&p, &t) {
                Ok(v) => Some(v),
                Err(Error::UndefinedScore(_)) => None,
                Err(e) => return Err(e),
            });
            maes.push(mae(&p, &t)?);
        }
        per_dimension.push(DimensionScore {
            name: name.to_string(),
            aggregate_r2: mean_of(r2s.iter().flatten().copied()),
            aggregate_mae: mean_of(maes.iter().copied()),
            r2_per_timestep: r2s,
            mae_per_timestep: maes,
        });
    }
    let r2_per_timestep: Vec<Option<f64>> = (0..steps)
        .map(|i| {
            let vals: Option<Vec<f64>> =
                per_dimension.iter().map(|d| d.r2_per_timestep[i]).collect();
            vals.map(|v| mean_of(v.into_iter()))
        })
        .collect();
    let mae_per_timestep: Vec<f64> = (0..steps)
        .map(|i| mean_of(per_dimension.iter().map(|d| d.mae_per_timestep[i])))
        .collect();
    let degenerate_timesteps = (0..steps)
        .filter(|&i| r2_per_timestep[i].is_none())
        .collect();
    let parity = |want: Parity| ParityScore {
        r2: mean_of(
            r2_per_timestep
                .iter()
                .enumerate()
                .filter(|(i, _)| parity_of(*i) == want)
                .filter_map(|(_, v)| *v),
        ),
        mae: mean_of(
            mae_per_timestep
                .iter()
                .enumerate()
                .filter(|(i, _)| parity_of(*i) == want)
                .map(|(_, v)| *v),
        ),
    };
    Ok(InferenceScore {
        aggregate_r2: mean_of(r2_per_timestep.iter().flatten().copied()),
        aggregate_mae: mean_of(mae_per_timestep.iter().copied()),
        even: parity(Parity::Even),
        odd: parity(Parity::Odd),
        r2_per_timestep,
        mae_per_timestep,
        per_dimension,
        degenerate_timesteps,
        num_clips: truth.len(),
    })
}

/// Runs the model over every test clip.
pub fn infer_all(model: &TrainedModel, test: &SequenceSet) -> Result<Vec<ClipTrace>> {
    test.videos
        .par_iter()
        .zip(&test.targets)
        .zip(&test.ids)
        .map(|((v, t), &id)| {
            let inferred = model.infer(v)?;
            let truth: Vec<[f64; 2]> = t.iter().map(|a| [a[0] as f64, a[1] as f64]).collect();
            let dims: Option<Vec<f64>> = (0..ACTION_DIM)
                .map(|d| {
                    let p: Vec<f64> = inferred.iter().map(|a| a[d]).collect();
                    let q: Vec<f64> = truth.iter().map(|a| a[d]).collect();
                    r2(&p, &q).ok()
                })
                .collect();
            Ok(ClipTrace {
                id,
                r2: dims.map(|v| mean_of(v.into_iter())),
                inferred,
                truth,
            })
        })
        .collect()
}

pub fn evaluate(
    model: &TrainedModel,
    test: &SequenceSet,
) -> Result<(InferenceScore, Vec<ClipTrace>)> {
    let traces = infer_all(model, test)?;
    let inferred: Vec<_> = traces.iter().map(|t| t.inferred.clone()).collect();
    let truth: Vec<_> = traces.iter().map(|t| t.truth.clone()).collect();
    Ok((score_predictions(&inferred, &truth)?, traces))
}

/// Score of a regressor that always outputs `mean`, on `test`'s targets.
pub fn mean_predictor_score(mean: [f64; 2], test: &SequenceSet) -> Result<InferenceScore> {
    let truth: Vec<Vec<[f64; 2]>> = test
        .targets
        .iter()
        .map(|c| c.iter().map(|a| [a[0] as f64, a[1] as f64]).collect())
        .collect();
    let inferred: Vec<Vec<[f64; 2]>> = truth.iter().map(|c| vec![mean; c.len()]).collect();
    score_predictions(&inferred, &truth)
}

/// Mean absolute deviation of the test targets from their own per-timestep
/// mean, aggregated exactly like [`InferenceScore::aggregate_mae`].
pub fn mean_predictor_mae(test: &SequenceSet) -> Result<f64> {
    let steps = test.pairs_per_clip();
    if test.len() < 2 || steps == 0 {
        return Err(Error::Empty("test targets".into()));
    }
    let n = test.len() as f64;
    let mut per_step = Vec::with_capacity(steps);
    for i in 0..steps {
        let mut acc = 0.0;
        for d in 0..ACTION_DIM {
            let vals: Vec<f64> = test.targets.iter().map(|c| c[i][d] as f64).collect();
            let m = vals.iter().sum::<f64>() / n;
            acc += vals.iter().map(|v| (v - m).abs()).sum::<f64>() / n;
        }
        per_step.push(acc / ACTION_DIM as f64);
    }
    Ok(mean_of(per_step.into_iter()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::Frame;

    #[test]
    fn r2_reference_values() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(r2(&t, &t).unwrap(), 1.0);
        assert_eq!(r2(&[2.0, 2.0, 2.0], &t).unwrap(), 0.0);
        assert!((r2(&[1.0, 2.0, 4.0], &t).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn r2_rejects_degenerate_targets() {
        assert!(matches!(
            r2(&[1.0, 2.0], &[3.0, 3.0]),
            Err(Error::UndefinedScore(_))
        ));
        assert!(matches!(r2(&[1.0], &[3.0]), Err(Error::UndefinedScore(_))));
    }

    #[test]
    fn mae_is_zero_only_on_exact_match() {
        assert_eq!(mae(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 0.0);
        assert!(mae(&[1.0, -2.0], &[1.0, -2.5]).unwrap() > 0.0);
    }

    fn clip(frames: usize) -> Video {
        let fs: Vec<Frame> = (0..frames)
            .map(|t| Frame::filled(4, 4, &[t as f32 / 30.0, 0.5, 1.0]))
            .collect();
        Video::from_frames(&fs).unwrap()
    }

    #[test]
    fn pair_counts_and_parity() {
        let v = clip(28);
        let actions = vec![[0.5f32, -0.5]; 27];
        let pairs = make_pairs(&v, &actions).unwrap();
        assert_eq!(pairs.len(), 27);
        assert_eq!(pairs[0].parity, Parity::Even);
        assert_eq!(pairs[1].parity, Parity::Odd);
        assert_eq!(pairs[2].parity, Parity::Even);
        assert_eq!(make_pairs(&clip(2), &actions[..1]).unwrap().len(), 1);
        assert!(make_pairs(&v, &actions[..26]).is_err());
    }

    #[test]
    fn pair_input_stacks_channels() {
        let v = clip(3);
        let p = &make_pairs(&v, &[[0.0, 0.0], [1.0, 1.0]]).unwrap()[1];
        assert_eq!(p.input.shape(), &[6, 4, 4]);
        // Channel 0 of frame 1, then channel 0 of frame 2 at offset 3 planes.
        assert_eq!(p.input.data()[0], (1.0f32 / 30.0) as f64);
        assert_eq!(p.input.data()[3 * 16], (2.0f32 / 30.0) as f64);
    }

    #[test]
    fn default_architecture_maps_pairs_to_actions() {
        let spec = InferenceNetSpec::default();
        let net = spec.build(0).unwrap();
        assert_eq!(net.input_shape(), &[6, 64, 64]);
        assert_eq!(net.output_shape(), &[ACTION_DIM]);
    }

    #[test]
    fn score_flags_degenerate_steps() {
        let truth = vec![vec![[1.0, 2.0], [0.0, 0.0]], vec![[2.0, 3.0], [0.0, 0.0]]];
        let inferred = vec![vec![[1.0, 2.0], [0.1, 0.0]], vec![[2.0, 3.0], [0.0, 0.0]]];
        let s = score_predictions(&inferred, &truth).unwrap();
        assert_eq!(s.degenerate_timesteps, vec![1]);
        assert_eq!(s.r2_per_timestep, vec![Some(1.0), None]);
        assert_eq!(s.aggregate_r2, 1.0);
        assert!((s.mae_per_timestep[1] - 0.025).abs() < 1e-15);
    }
}
