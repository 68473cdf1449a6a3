//! Cached pipeline stages.
//!
//! Each stage lives in `<output_dir>/<group>/<key>/`, where `key` hashes the
//! stage's input content hashes, its configuration and [`CODE_VERSION`]. A
//! stage directory is complete once its `stage.json` exists; re-running with
//! unchanged inputs reuses it. The inference network's key hashes the exact
//! frames and targets it trains on, so training on oracle playback and on
//! ground truth share one model.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::report::{
    best_worst_examples, emit_curves, examples_csv, rank_models, EpisodePerceptual, MeanPredictor,
    MetricReport, PerceptualScore, ReportRow, TargetStats, REPORT_SCHEMA_VERSION,
};
use super::{sha256_json, MetricKind, RunConfig, CODE_VERSION};
use crate::dataset::{self, Split};
use crate::error::{Error, Result};
use crate::inference::{self, ClipTrace, InferenceScore, SequenceSet, TrainedModel};
use crate::metrics::{self, SsimConfig};
use crate::predict::{PredictorConfig, ALIGNMENT, CONTEXT_FRAMES};

pub const BASELINE_NAME: &str = "oracle_baseline";
pub const STAGE_RECORD: &str = "stage.json";
pub const MODEL_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const SCORE_FILE: &str = "score.json";
pub const PERCEPTUAL_FILE: &str = "perceptual.json";

/// What a finished stage leaves behind in its directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub code_version: String,
    /// Wall-clock time of the run that produced the artifacts.
    pub seconds: f64,
    pub inputs: serde_json::Value,
    pub outputs: serde_json::Value,
}

impl StageRecord {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(STAGE_RECORD);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Format {
            path,
            detail: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: String,
    pub dir: PathBuf,
    pub cache_hit: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Staged<T> {
    pub dir: PathBuf,
    pub key: String,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHashes {
    pub content_hash: String,
    /// Per split, the hash of the clips as the inference network sees them.
    pub clips: BTreeMap<String, String>,
}

impl DatasetHashes {
    pub fn compute(root: &Path) -> Result<Self> {
        let mut clips = BTreeMap::new();
        for split in Split::ALL {
            clips.insert(
                split_name(split).to_string(),
                dataset::split_clip_hash(root, split)?,
            );
        }
        Ok(Self {
            content_hash: dataset::content_hash(root)?,
            clips,
        })
    }

    fn clip(&self, split: Split) -> &str {
        &self.clips[split_name(split)]
    }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutputs {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: InferenceScore,
    pub traces: Vec<ClipTrace>,
}

/// Scores a trained model on a test split.
pub fn evaluate_model(model: &TrainedModel, test: &SequenceSet) -> Result<Evaluation> {
    let (score, traces) = inference::evaluate(model, test)?;
    Ok(Evaluation { score, traces })
}

pub struct Pipeline {
    config: RunConfig,
    root: PathBuf,
    offline: bool,
    stages: Vec<StageSummary>,
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricReport,
    pub report_dir: PathBuf,
    pub stages: Vec<StageSummary>,
}

impl Pipeline {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let config = config.resolved()?;
        Ok(Self {
            root: config.output_dir.clone(),
            config,
            offline: false,
            stages: Vec::new(),
        })
    }

    /// Only reuse cached stages; a missing stage is an error instead of work.
    pub fn offline(mut self) -> Self {
        self.offline = true;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stages(&self) -> &[StageSummary] {
        &self.stages
    }

    fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn stage<T, F>(
        &mut self,
        stage: &str,
        group: &str,
        inputs: serde_json::Value,
        run: F,
    ) -> Result<Staged<T>>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce(&Path) -> Result<T>,
    {
        let material = serde_json::json!({
            "stage": stage.split(':').next().unwrap_or(stage),
            "code_version": CODE_VERSION,
            "inputs": inputs,
        });
        let key = sha256_json(&material);
        let dir = self.root.join(group).join(&key[..16]);
        let fail = |e: Error| Error::Stage {
            stage: stage.to_string(),
            seed: self.config.master_seed,
            dir: dir.clone(),
            source: Box::new(e),
        };
        if let Ok(rec) = StageRecord::read(&dir) {
            if rec.key == key {
                if let Ok(value) = serde_json::from_value(rec.outputs) {
                    log::info!("{stage}: cached in {}", dir.display());
                    self.stages.push(StageSummary {
                        stage: stage.into(),
                        dir: dir.clone(),
                        cache_hit: true,
                        seconds: rec.seconds,
                    });
                    return Ok(Staged { dir, key, value });
                }
            }
        }
        if self.offline {
            return Err(fail(Error::Empty(
                "no completed artifact; run the pipeline to produce it".into(),
            )));
        }
        log::info!("{stage}: running in {}", dir.display());
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| fail(Error::io(&dir, e)))?;
        }
        fs::create_dir_all(&dir).map_err(|e| fail(Error::io(&dir, e)))?;
        let started = Instant::now();
        let value = run(&dir).map_err(fail)?;
        let seconds = started.elapsed().as_secs_f64();
        let record = StageRecord {
            stage: stage.into(),
            key: key.clone(),
            code_version: CODE_VERSION.into(),
            seconds,
            inputs: material["inputs"].clone(),
            outputs: serde_json::to_value(&value).expect("stage outputs serialize"),
        };
        let path = dir.join(STAGE_RECORD);
        let mut bytes = serde_json::to_vec_pretty(&record).expect("record serializes");
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| fail(Error::io(&path, e)))?;
        self.stages.push(StageSummary {
            stage: stage.into(),
            dir: dir.clone(),
            cache_hit: false,
            seconds,
        });
        Ok(Staged { dir, key, value })
    }

    /// Simulated ground-truth episodes for every split.
    pub fn ground_truth(&mut self) -> Result<Staged<DatasetHashes>> {
        let (world, splits) = (self.config.world.clone(), self.config.splits);
        let inputs = serde_json::json!({ "world": world, "splits": splits });
        self.stage("generate", "datasets/ground_truth", inputs, |dir| {
            dataset::generate_dataset(&world, splits, dir)?;
            DatasetHashes::compute(dir)
        })
    }

    /// One predictor's playback of the ground-truth dataset.
    pub fn predictions(
        &mut self,
        predictor: &PredictorConfig,
        truth: &Staged<DatasetHashes>,
    ) -> Result<Staged<DatasetHashes>> {
        let inputs = serde_json::json!({
            "predictor": predictor.effective(),
            "source": truth.value.content_hash,
        });
        let source = truth.dir.clone();
        let p = predictor.clone();
        self.stage(
            &format!("predict:{}", predictor.name()),
            &format!("datasets/{}", predictor.name()),
            inputs,
            |dir| {
                dataset::build_prediction_dataset(&p, &source, dir)?;
                DatasetHashes::compute(dir)
            },
        )
    }

    /// Wraps an existing dataset directory (e.g. one built by hand) as a stage input.
    pub fn external_dataset(dir: &Path) -> Result<Staged<DatasetHashes>> {
        Ok(Staged {
            dir: dir.to_path_buf(),
            key: String::new(),
            value: DatasetHashes::compute(dir)?,
        })
    }

    /// Wraps a finished training stage directory.
    pub fn external_model(dir: &Path) -> Result<Staged<TrainOutputs>> {
        let rec = StageRecord::read(dir)?;
        let value = serde_json::from_value(rec.outputs).map_err(|e| Error::Format {
            path: dir.join(STAGE_RECORD),
            detail: e.to_string(),
        })?;
        Ok(Staged {
            dir: dir.to_path_buf(),
            key: rec.key,
            value,
        })
    }

    /// Trains an inference network on the train/val clips of `data`.
    pub fn train(
        &mut self,
        label: &str,
        data: &Staged<DatasetHashes>,
    ) -> Result<Staged<TrainOutputs>> {
        let (spec, train_cfg) = (self.config.network.clone(), self.config.train.clone());
        let inputs = serde_json::json!({
            "train_clips": data.value.clip(Split::Train),
            "val_clips": data.value.clip(Split::Val),
            "network": spec,
            "train": train_cfg,
        });
        let source = data.dir.clone();
        self.stage(&format!("train:{label}"), "models", inputs, |dir| {
            let train = dataset::load_split(&source, Split::Train)?;
            let val = dataset::load_split(&source, Split::Val)?;
            let model = inference::train_inference(&train, &val, &spec, &train_cfg)?;
            let path = dir.join(MODEL_FILE);
            fs::write(&path, model.checkpoint_bytes()).map_err(|e| Error::io(&path, e))?;
            let path = dir.join(TRAIN_LOG_FILE);
            fs::write(&path, model.log_csv()).map_err(|e| Error::io(&path, e))?;
            let best = &model.log[model.best_epoch - 1];
            Ok(TrainOutputs {
                best_epoch: model.best_epoch,
                epochs_run: model.log.len(),
                best_val_mae: best.val_mae,
            })
        })
    }

    pub fn load_model(model: &Staged<TrainOutputs>) -> Result<TrainedModel> {
        let path = model.dir.join(MODEL_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        TrainedModel::from_checkpoint_bytes(&bytes, &path)
    }

    /// Per-timestep R²/MAE of `model` on the test clips of `data`.
    pub fn score(
        &mut self,
        label: &str,
        model: &Staged<TrainOutputs>,
        data: &Staged<DatasetHashes>,
    ) -> Result<Staged<Evaluation>> {
        let inputs = serde_json::json!({
            "model": model.key,
            "test_clips": data.value.clip(Split::Test),
        });
        let (source, model) = (data.dir.clone(), model.clone());
        let dataset_hash = data.value.content_hash.clone();
        self.stage(&format!("evaluate:{label}"), "scores", inputs, |dir| {
            let net = Self::load_model(&model)?;
            let test = dataset::load_split(&source, Split::Test)?;
            let evaluation = evaluate_model(&net, &test)?;
            let artifact = serde_json::json!({
                "score": evaluation.score,
                "model": model.key,
                "dataset_hash": dataset_hash,
            });
            let path = dir.join(SCORE_FILE);
            let mut bytes = serde_json::to_vec_pretty(&artifact).expect("score serializes");
            bytes.push(b'\n');
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            Ok(evaluation)
        })
    }

    /// PSNR/SSIM per frame and FVD-lite of `data`'s test clips against ground truth.
    pub fn perceptual(
        &mut self,
        label: &str,
        data: &Staged<DatasetHashes>,
        truth: &Staged<DatasetHashes>,
    ) -> Result<Staged<PerceptualScore>> {
        let with_fvd = self.config.wants(MetricKind::FvdLite);
        let batch = self.config.fvd_batch_size;
        let inputs = serde_json::json!({
            "test_clips": data.value.clip(Split::Test),
            "truth": truth.value.content_hash,
            "fvd_batch_size": batch,
            "fvd": with_fvd,
        });
        let (source, truth_dir) = (data.dir.clone(), truth.dir.clone());
        self.stage(
            &format!("perceptual:{label}"),
            "perceptual",
            inputs,
            |dir| {
                let score = perceptual_score(&source, &truth_dir, with_fvd, batch)?;
                let path = dir.join(PERCEPTUAL_FILE);
                let mut bytes = serde_json::to_vec_pretty(&score).expect("score serializes");
                bytes.push(b'\n');
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                Ok(score)
            },
        )
    }

    fn row(
        &mut self,
        name: &str,
        kind: &str,
        data: &Staged<DatasetHashes>,
        truth: &Staged<DatasetHashes>,
        traces: &mut Vec<(String, Vec<ClipTrace>)>,
    ) -> Result<(ReportRow, Option<Staged<TrainOutputs>>)> {
        let mut artifacts = BTreeMap::new();
        artifacts.insert("dataset".into(), self.relative(&data.dir));
        let mut row = ReportRow {
            name: name.into(),
            kind: kind.into(),
            fvd_lite: None,
            aggregate_r2: None,
            aggregate_mae: None,
            mean_psnr: None,
            mean_ssim: None,
            best_epoch: None,
            inference: None,
            psnr_per_timestep: None,
            ssim_per_timestep: None,
            artifacts,
        };
        let mut model_out = None;
        if self.config.wants_inference() {
            let model = self.train(name, data)?;
            let eval = self.score(name, &model, data)?;
            let score = eval.value.score.clone();
            row.artifacts
                .insert("model".into(), self.relative(&model.dir));
            row.artifacts
                .insert("score".into(), self.relative(&eval.dir));
            row.best_epoch = Some(model.value.best_epoch);
            if self.config.wants(MetricKind::R2) {
                row.aggregate_r2 = Some(score.aggregate_r2);
            }
            if self.config.wants(MetricKind::Mae) {
                row.aggregate_mae = Some(score.aggregate_mae);
            }
            row.inference = Some(score);
            traces.push((name.to_string(), eval.value.traces));
            model_out = Some(model);
        }
        let perceptual = [MetricKind::Psnr, MetricKind::Ssim, MetricKind::FvdLite];
        if perceptual.iter().any(|m| self.config.wants(*m)) {
            let p = self.perceptual(name, data, truth)?;
            row.artifacts
                .insert("perceptual".into(), self.relative(&p.dir));
            let p = p.value;
            if self.config.wants(MetricKind::Psnr) {
                row.mean_psnr = Some(p.mean_psnr);
                row.psnr_per_timestep = Some(p.psnr_per_timestep);
            }
            if self.config.wants(MetricKind::Ssim) {
                row.mean_ssim = Some(p.mean_ssim);
                row.ssim_per_timestep = Some(p.ssim_per_timestep);
            }
            row.fvd_lite = p.fvd_lite;
        }
        Ok((row, model_out))
    }

    /// Runs every stage (reusing cached ones) and writes the report.
    pub fn run(&mut self) -> Result<RunOutcome> {
        let (report, traces) = self.assemble()?;
        let report_dir = self.root.join("report");
        write_report(&report_dir, &report, &traces, self.config.best_worst_k)?;
        Ok(RunOutcome {
            report,
            report_dir,
            stages: self.stages.clone(),
        })
    }

    /// Runs every stage and builds the report without writing it; also
    /// returns each row's per-clip traces.
    #[allow(clippy::type_complexity)]
    pub fn assemble(&mut self) -> Result<(MetricReport, Vec<(String, Vec<ClipTrace>)>)> {
        let truth = self.ground_truth()?;
        let mut dataset_hashes = BTreeMap::new();
        dataset_hashes.insert("ground_truth".to_string(), truth.value.content_hash.clone());
        let mut traces = Vec::new();
        let mut rows = Vec::new();
        for p in self.config.predictors.clone() {
            let data = self.predictions(&p, &truth)?;
            dataset_hashes.insert(p.name().to_string(), data.value.content_hash.clone());
            rows.push(
                self.row(p.name(), p.kind.as_str(), &data, &truth, &mut traces)?
                    .0,
            );
        }
        let (baseline, baseline_model) =
            self.row(BASELINE_NAME, "ground_truth", &truth, &truth, &mut traces)?;

        let test = dataset::load_split(&truth.dir, Split::Test)?;
        let target_stats = target_stats(&test);
        let mean_predictor = match &baseline_model {
            Some(m) => {
                let mean = Self::load_model(m)?.norm.target.mean;
                let score = inference::mean_predictor_score(mean, &test)?;
                let r2s = score.r2_per_timestep.iter().flatten();
                Some(MeanPredictor {
                    mean,
                    aggregate_mae: inference::mean_predictor_mae(&test)?,
                    min_r2: r2s.clone().fold(f64::INFINITY, |a, b| a.min(*b)),
                    max_r2: r2s.fold(f64::NEG_INFINITY, |a, b| a.max(*b)),
                })
            }
            None => None,
        };
        let baseline_even_mae_ge_odd = baseline.inference.as_ref().map(|s| s.even.mae >= s.odd.mae);
        if let Some(s) = &baseline.inference {
            log::info!(
                "baseline even-step MAE {:.4} vs odd-step MAE {:.4}",
                s.even.mae,
                s.odd.mae
            );
        }
        let mut notes = vec![
            "every inference network is trained from scratch with the master seed".to_string(),
            "fvd_lite uses hand-crafted features; compare it only within a run".to_string(),
            "timesteps count frame pairs from 1; even/odd is the parity of the action index"
                .to_string(),
        ];
        let rankings = match rank_models(&rows, &self.config.metrics) {
            Ok(r) => Some(r),
            Err(e) => {
                notes.push(format!("no rankings: {e}"));
                None
            }
        };
        let report = MetricReport {
            schema_version: REPORT_SCHEMA_VERSION,
            code_version: CODE_VERSION.into(),
            config_hash: self.config.hash(),
            master_seed: self.config.master_seed,
            alignment: ALIGNMENT.into(),
            metrics: self.config.metrics.clone(),
            rows,
            baseline,
            rankings,
            target_stats,
            mean_predictor,
            baseline_even_mae_ge_odd,
            dataset_hashes,
            notes,
        };
        Ok((report, traces))
    }
}

/// Runs the whole benchmark described by `config`.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutcome> {
    Pipeline::new(config)?.run()
}

fn write_report(
    dir: &Path,
    report: &MetricReport,
    traces: &[(String, Vec<ClipTrace>)],
    k: usize,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        ("report.json".to_string(), report.to_json()),
        ("report.csv".to_string(), report.to_csv()),
        ("report.txt".to_string(), report.to_text()),
    ];
    for table in emit_curves(report) {
        files.push((table.file_name(), table.to_csv()));
    }
    if !traces.is_empty() {
        files.push((
            "best_worst.csv".into(),
            examples_csv(&best_worst_examples(traces, k)),
        ));
    }
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn target_stats(test: &SequenceSet) -> TargetStats {
    let std = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let mut even = [Vec::new(), Vec::new()];
    let mut odd = [Vec::new(), Vec::new()];
    for clip in &test.targets {
        for (i, a) in clip.iter().enumerate() {
            for d in 0..2 {
                if i % 2 == 0 {
                    even[d].push(a[d] as f64);
                } else {
                    odd[d].push(a[d] as f64 - clip[i - 1][d] as f64);
                }
            }
        }
    }
    TargetStats {
        std_dx_even: std(&even[0]),
        std_dy_even: std(&even[1]),
        std_dx_odd_deviation: std(&odd[0]),
        std_dy_odd_deviation: std(&odd[1]),
    }
}

/// Frames `CONTEXT_FRAMES..` during which every object still sits where it
/// was in the last context frame; only the gripper moves there.
pub fn static_span(object_positions: &[Vec<[f32; 2]>]) -> usize {
    let reference = &object_positions[CONTEXT_FRAMES - 1];
    object_positions[CONTEXT_FRAMES..]
        .iter()
        .take_while(|p| *p == reference)
        .count()
}

fn perceptual_score(
    source: &Path,
    truth_dir: &Path,
    with_fvd: bool,
    batch: usize,
) -> Result<PerceptualScore> {
    let truth_manifest = dataset::read_manifest(truth_dir)?;
    let predicted = dataset::load_split(source, Split::Test)?;
    let ssim_cfg = SsimConfig::default();
    let per_clip = predicted
        .ids
        .par_iter()
        .zip(&predicted.videos)
        .map(|(&id, pred)| {
            let episode = dataset::load_episode(truth_dir, &truth_manifest, id)?;
            let truth = episode.video.slice(CONTEXT_FRAMES, episode.video.frames)?;
            let mut psnr = Vec::with_capacity(truth.frames);
            let mut ssim = Vec::with_capacity(truth.frames);
            for t in 0..truth.frames {
                let (a, b) = (pred.frame(t), truth.frame(t));
                psnr.push(metrics::psnr(&a, &b)?);
                ssim.push(metrics::ssim(&a, &b, &ssim_cfg)?);
            }
            Ok((truth, psnr, ssim, static_span(&episode.object_positions)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let frames = per_clip.first().map_or(0, |c| c.1.len());
    let n = per_clip.len() as f64;
    let psnr_per_timestep: Vec<f64> = (0..frames)
        .map(|t| per_clip.iter().map(|c| c.1[t]).sum::<f64>() / n)
        .collect();
    let ssim_per_timestep: Vec<f64> = (0..frames)
        .map(|t| per_clip.iter().map(|c| c.2[t]).sum::<f64>() / n)
        .collect();
    let episodes: Vec<EpisodePerceptual> = predicted
        .ids
        .iter()
        .zip(&per_clip)
        .map(|(&id, (_, psnr, ssim, span))| EpisodePerceptual {
            id,
            psnr: mean(psnr),
            ssim: mean(ssim),
            static_span: *span,
            static_psnr: (*span > 0).then(|| mean(&psnr[..*span])),
            static_ssim: (*span > 0).then(|| mean(&ssim[..*span])),
        })
        .collect();
    let fvd_lite = if with_fvd {
        let truths: Vec<_> = per_clip.into_iter().map(|c| c.0).collect();
        Some(metrics::fvd_lite(&truths, &predicted.videos, 0, batch)?)
    } else {
        None
    };
    Ok(PerceptualScore {
        mean_psnr: mean(&episodes.iter().map(|e| e.psnr).collect::<Vec<_>>()),
        mean_ssim: mean(&episodes.iter().map(|e| e.ssim).collect::<Vec<_>>()),
        psnr_per_timestep,
        ssim_per_timestep,
        fvd_lite,
        episodes,
    })
}
