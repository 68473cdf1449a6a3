//! Surrogate video predictors of known quality.
//!
//! Every predictor sees the first two frames of an episode and (except
//! `action_free`) the displacements that follow, and emits the remaining
//! `T − 2` frames. Each kind isolates one failure mode: blur, pixel noise,
//! no motion, wrong motion, growing blur, and a crude pixel-motion model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{gaussian_blur, sample_bilinear};
use crate::rng::{domain, stream};
use crate::sim::{self, color_centroid, Episode, WorldConfig};
use crate::video::{Frame, Video};

pub const CONTEXT_FRAMES: usize = 2;

/// How predicted frames pair with actions: predicted frame `j` is ground-truth
/// frame `j + 2`, and pair `(j, j + 1)` is labelled with the displacement
/// between ground-truth positions `j + 2` and `j + 3`.
pub const ALIGNMENT: &str =
    "pair (j, j+1) of predicted frames <-> action[j+2] (ground-truth frames j+2 -> j+3)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Oracle,
    BlurOracle,
    NoiseOracle,
    Frozen,
    ActionFree,
    Drift,
    Warp,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 7] = [
        PredictorKind::Oracle,
        PredictorKind::BlurOracle,
        PredictorKind::NoiseOracle,
        PredictorKind::Frozen,
        PredictorKind::ActionFree,
        PredictorKind::Drift,
        PredictorKind::Warp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictorKind::Oracle => "oracle",
            PredictorKind::BlurOracle => "blur_oracle",
            PredictorKind::NoiseOracle => "noise_oracle",
            PredictorKind::Frozen => "frozen",
            PredictorKind::ActionFree => "action_free",
            PredictorKind::Drift => "drift",
            PredictorKind::Warp => "warp",
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown predictor kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    /// Report label; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: PredictorKind,
    #[serde(default = "default_blur_sigma")]
    pub blur_sigma: f64,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_drift_rate")]
    pub drift_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_blur_sigma() -> f64 {
    2.0
}
fn default_noise_sigma() -> f64 {
    0.1
}
fn default_drift_rate() -> f64 {
    0.15
}

impl PredictorConfig {
    pub fn new(kind: PredictorKind) -> Self {
        Self {
            name: None,
            kind,
            blur_sigma: default_blur_sigma(),
            noise_sigma: default_noise_sigma(),
            drift_rate: default_drift_rate(),
            seed: 0,
        }
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.blur_sigma >= 0.0 && self.noise_sigma >= 0.0 && self.drift_rate >= 0.0;
        if !ok
            || !(self.blur_sigma.is_finite()
                && self.noise_sigma.is_finite()
                && self.drift_rate.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "predictor `{}`: hyperparameters must be finite and non-negative",
                self.name()
            )));
        }
        Ok(())
    }

    /// Only the hyperparameters that influence this kind, for cache keys and manifests.
    pub fn effective(&self) -> serde_json::Value {
        let mut v = serde_json::json!({ "kind": self.kind, "seed": self.seed });
        match self.kind {
            PredictorKind::BlurOracle => v["blur_sigma"] = self.blur_sigma.into(),
            PredictorKind::NoiseOracle => v["noise_sigma"] = self.noise_sigma.into(),
            PredictorKind::Drift => v["drift_rate"] = self.drift_rate.into(),
            _ => {}
        }
        v
    }
}

/// Predicts frames `2..T` of `episode` from its first two frames.
pub fn predict(config: &PredictorConfig, world: &WorldConfig, episode: &Episode) -> Result<Video> {
    config.validate()?;
    let gt = &episode.video;
    let t = gt.frames;
    if t <= CONTEXT_FRAMES || episode.actions.len() + 1 != t {
        return Err(Error::shape(
            "predict: episode",
            &[
                world.episode_length,
                world.image_size,
                world.image_size,
                world.channels,
            ],
            &gt.shape(),
        ));
    }
    let horizon = t - CONTEXT_FRAMES;
    let frames: Vec<Frame> = match config.kind {
        PredictorKind::Oracle => return gt.slice(CONTEXT_FRAMES, t),
        PredictorKind::BlurOracle => (CONTEXT_FRAMES..t)
            .map(|i| gaussian_blur(&gt.frame(i), config.blur_sigma))
            .collect(),
        PredictorKind::Drift => (0..horizon)
            .map(|j| {
                gaussian_blur(
                    &gt.frame(j + CONTEXT_FRAMES),
                    config.drift_rate * (j + 1) as f64,
                )
            })
            .collect(),
        PredictorKind::NoiseOracle => {
            let mut rng = stream(config.seed, domain::PREDICTOR + 100, episode.id);
            let mut out = gt.slice(CONTEXT_FRAMES, t)?;
            for v in out.data.iter_mut() {
                let z: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
                *v = (*v as f64 + config.noise_sigma * z).clamp(0.0, 1.0) as f32;
            }
            return Ok(out);
        }
        PredictorKind::Frozen => vec![gt.frame(CONTEXT_FRAMES - 1); horizon],
        PredictorKind::ActionFree => {
            let mut rng = stream(config.seed, domain::PREDICTOR + 200, episode.id);
            let last = CONTEXT_FRAMES - 1;
            let previous = episode.actions[last - 1].map(f64::from);
            let fresh = sim::sample_action_sequence_from(
                world.sigma_hi,
                world.sigma_lo,
                last,
                Some(previous),
                horizon,
                &mut rng,
            );
            let (_, _, mut frames) =
                sim::rollout(world, &episode.state_at(last), &episode.palette(), &fresh);
            frames.remove(0);
            frames
        }
        PredictorKind::Warp => {
            let mut prev = gt.frame(CONTEXT_FRAMES - 1);
            let mut out = Vec::with_capacity(horizon);
            for a in &episode.actions[CONTEXT_FRAMES - 1..] {
                let next = warp_gripper(&prev, world, [a[0] as f64, a[1] as f64]);
                out.push(next.clone());
                prev = next;
            }
            out
        }
    };
    Video::from_frames(&frames)
}

/// Moves the pixels around the gripper by `action`, leaving the rest of the frame alone.
fn warp_gripper(prev: &Frame, world: &WorldConfig, action: [f64; 2]) -> Frame {
    let Some(c) = color_centroid(prev, sim::BACKGROUND, sim::GRIPPER_COLOR) else {
        return prev.clone();
    };
    // Pixel centres sit at +0.5; the centroid is in continuous coordinates.
    let reach = world.gripper_radius + 1.5;
    let near = |px: f64, py: f64, cx: f64, cy: f64| {
        let (dx, dy) = (px - cx, py - cy);
        dx * dx + dy * dy <= reach * reach
    };
    let mut out = prev.clone();
    let ch = prev.channels;
    for y in 0..prev.height {
        for x in 0..prev.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            if near(px, py, c[0], c[1]) || near(px, py, c[0] + action[0], c[1] + action[1]) {
                let i = (y * prev.width + x) * ch;
                sample_bilinear(
                    prev,
                    x as f64 - action[0],
                    y as f64 - action[1],
                    &mut out.data[i..i + ch],
                );
            }
        }
    }
    out
}
