//! End-to-end benchmark runs: configuration, cached pipeline stages and the
//! final report.

mod pipeline;
mod report;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::SplitSizes;
use crate::error::{Error, Result};
use crate::inference::{InferenceNetSpec, TrainConfig};
use crate::predict::{PredictorConfig, PredictorKind};
use crate::sim::WorldConfig;

pub use pipeline::{
    evaluate_model, run_pipeline, static_span, DatasetHashes, Evaluation, Pipeline, RunOutcome,
    StageRecord, StageSummary, Staged, TrainOutputs, BASELINE_NAME, MODEL_FILE, PERCEPTUAL_FILE,
    SCORE_FILE, STAGE_RECORD, TRAIN_LOG_FILE,
};
pub use report::{
    best_worst_examples, emit_curves, examples_csv, rank_models, spearman, CurveTable,
    EpisodePerceptual, Example, MeanPredictor, MetricRanking, MetricReport, PerceptualScore,
    Rankings, ReportRow, SpearmanEntry, TargetStats, REPORT_SCHEMA_VERSION,
};

/// Mixed into every cache key; bump when a stage's output format changes.
pub const CODE_VERSION: &str = concat!("actbench ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    FvdLite,
    R2,
    Mae,
    Psnr,
    Ssim,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::FvdLite,
        MetricKind::R2,
        MetricKind::Mae,
        MetricKind::Psnr,
        MetricKind::Ssim,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::FvdLite => "fvd_lite",
            MetricKind::R2 => "r2",
            MetricKind::Mae => "mae",
            MetricKind::Psnr => "psnr",
            MetricKind::Ssim => "ssim",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricKind::R2 | MetricKind::Psnr | MetricKind::Ssim)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric `{s}`")))
    }
}

/// Everything a run needs. Every field has a default, so an empty file is a
/// valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives the simulator, the stochastic predictors and network training.
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub world: WorldConfig,
    pub splits: SplitSizes,
    pub network: InferenceNetSpec,
    pub train: TrainConfig,
    pub predictors: Vec<PredictorConfig>,
    pub metrics: Vec<MetricKind>,
    pub fvd_batch_size: usize,
    /// Best and worst test clips kept per predictor.
    pub best_worst_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            output_dir: PathBuf::from("runs/default"),
            world: WorldConfig::default(),
            splits: SplitSizes::default(),
            network: InferenceNetSpec::default(),
            train: TrainConfig::default(),
            predictors: PredictorKind::ALL
                .into_iter()
                .map(PredictorConfig::new)
                .collect(),
            metrics: MetricKind::ALL.to_vec(),
            fvd_batch_size: 32,
            best_worst_k: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks the config and pushes `master_seed` into every nested seed.
    /// Nested seeds may be left at 0 or set equal to the master seed; any
    /// other value is rejected rather than silently overridden.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let seed = c.master_seed;
        let clash = |what: &str, s: u64| {
            if s != 0 && s != seed {
                Err(Error::InvalidConfig(format!(
                    "{what} seed {s} differs from master_seed {seed}; set master_seed instead"
                )))
            } else {
                Ok(())
            }
        };
        clash("world", c.world.seed)?;
        clash("train", c.train.seed)?;
        c.world.seed = seed;
        c.train.seed = seed;
        c.world.validate()?;
        c.train.validate()?;
        if c.predictors.is_empty() {
            return Err(Error::InvalidConfig("no predictors configured".into()));
        }
        let mut names = BTreeSet::new();
        for p in &mut c.predictors {
            clash(&format!("predictor `{}`", p.name()), p.seed)?;
            p.seed = seed;
            p.validate()?;
            if !names.insert(p.name().to_string()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate predictor name `{}`",
                    p.name()
                )));
            }
        }
        if c.network.image_size != c.world.image_size
            || c.network.frame_channels != c.world.channels
        {
            return Err(Error::InvalidConfig(
                "network input size must match the world's image size and channels".into(),
            ));
        }
        if c.metrics.is_empty() {
            return Err(Error::InvalidConfig("no metrics configured".into()));
        }
        c.metrics.sort();
        c.metrics.dedup();
        if c.fvd_batch_size == 0 {
            return Err(Error::InvalidConfig(
                "fvd_batch_size must be positive".into(),
            ));
        }
        let needs_test = c
            .metrics
            .iter()
            .any(|m| matches!(m, MetricKind::R2 | MetricKind::Mae))
            || c.metrics.contains(&MetricKind::FvdLite);
        if needs_test && c.splits.test < 2 {
            return Err(Error::InvalidConfig(
                "the test split needs at least 2 episodes".into(),
            ));
        }
        Ok(c)
    }

    pub fn wants(&self, m: MetricKind) -> bool {
        self.metrics.contains(&m)
    }

    pub fn wants_inference(&self) -> bool {
        self.wants(MetricKind::R2) || self.wants(MetricKind::Mae)
    }

    pub fn predictor(&self, kind: PredictorKind) -> PredictorConfig {
        self.predictors
            .iter()
            .find(|p| p.kind == kind)
            .cloned()
            .unwrap_or_else(|| PredictorConfig::new(kind))
    }

    /// SHA-256 of the resolved configuration, excluding where it is written.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("output_dir");
        sha256_json(&v)
    }
}

/// Hash of a JSON value's compact serialization (object keys are sorted).
pub fn sha256_json(v: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
        let c = RunConfig::default().resolved().unwrap();
        assert_eq!(c.predictors.len(), 7);
    }

    #[test]
    fn toml_roundtrip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_duplicates_are_rejected() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        let dup = "[[predictors]]\nkind = \"frozen\"\n[[predictors]]\nkind = \"frozen\"\n";
        assert!(RunConfig::from_toml_str(dup).unwrap().resolved().is_err());
        let named = "[[predictors]]\nkind = \"frozen\"\n[[predictors]]\nkind = \"frozen\"\nname = \"still\"\n";
        assert!(RunConfig::from_toml_str(named).unwrap().resolved().is_ok());
    }

    #[test]
    fn master_seed_propagates() {
        let c = RunConfig::from_toml_str("master_seed = 9")
            .unwrap()
            .resolved()
            .unwrap();
        assert_eq!(c.world.seed, 9);
        assert_eq!(c.train.seed, 9);
        assert!(c.predictors.iter().all(|p| p.seed == 9));
        let clash = RunConfig::from_toml_str("master_seed = 9\n[world]\nseed = 3\n").unwrap();
        assert!(clash.resolved().is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::default();
        let b = RunConfig {
            output_dir: "elsewhere".into(),
            ..RunConfig::default()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig {
            master_seed: 1,
            ..RunConfig::default()
        };
        assert_ne!(a.hash(), c.hash());
    }
}
