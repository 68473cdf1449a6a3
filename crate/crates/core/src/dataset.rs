//! On-disk datasets: a `manifest.json` plus one `ep_<id>.bin` per episode
//! holding little-endian f32 tensors concatenated in declared order.
//!
//! Two kinds share the layout. Episode datasets come from the simulator;
//! prediction datasets hold one predictor's frames for every source episode,
//! with the aligned action targets.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::SequenceSet;
use crate::predict::{self, PredictorConfig, ALIGNMENT, CONTEXT_FRAMES};
use crate::sim::{self, Episode, WorldConfig};
use crate::video::Video;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const DTYPE: &str = "f32-le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Episodes,
    Predictions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 2000,
            val: 200,
            test: 256,
        }
    }
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl Splits {
    /// Consecutive ids: train first, then val, then test.
    pub fn contiguous(sizes: SplitSizes) -> Self {
        let (a, b) = (sizes.train as u64, (sizes.train + sizes.val) as u64);
        Self {
            train: (0..a).collect(),
            val: (a..b).collect(),
            test: (b..sizes.total() as u64).collect(),
        }
    }

    pub fn get(&self, split: Split) -> &[u64] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = u64> + '_ {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorDecl {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

impl TensorDecl {
    fn new(name: &str, shape: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            dtype: DTYPE.into(),
            shape,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    pub world: WorldConfig,
    pub seed: u64,
    pub splits: Splits,
    /// Per-episode file contents, in order.
    pub tensors: Vec<TensorDecl>,
    /// Effective predictor hyperparameters (prediction datasets only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor: Option<serde_json::Value>,
    /// Content hash of the episode dataset the predictions were made from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<String>,
}

impl Manifest {
    pub fn tensor(&self, name: &str) -> Option<&TensorDecl> {
        self.tensors.iter().find(|t| t.name == name)
    }

    fn record_len(&self) -> usize {
        self.tensors.iter().map(TensorDecl::len).sum()
    }
}

fn episode_tensors(w: &WorldConfig) -> Vec<TensorDecl> {
    let (t, s) = (w.episode_length, w.image_size);
    vec![
        TensorDecl::new("video", vec![t, s, s, w.channels]),
        TensorDecl::new("gripper_positions", vec![t, 2]),
        TensorDecl::new("actions", vec![t - 1, 2]),
        TensorDecl::new("object_positions", vec![t, w.num_objects, 2]),
        TensorDecl::new("object_colors", vec![w.num_objects, 3]),
    ]
}

fn prediction_tensors(w: &WorldConfig) -> Vec<TensorDecl> {
    let (h, s) = (w.episode_length - CONTEXT_FRAMES, w.image_size);
    vec![
        TensorDecl::new("video", vec![h, s, s, w.channels]),
        TensorDecl::new("actions", vec![h - 1, 2]),
    ]
}

pub fn episode_path(root: &Path, id: u64) -> PathBuf {
    root.join(format!("ep_{id}.bin"))
}

fn encode_f32(parts: &[&[f32]]) -> Vec<u8> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(4 * n);
    for p in parts {
        for v in *p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn write_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_file(&root.join(MANIFEST), &bytes)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.clone(),
        detail: e.to_string(),
    })?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Format {
            path,
            detail: format!(
                "format version {} (expected {FORMAT_VERSION})",
                m.format_version
            ),
        });
    }
    Ok(m)
}

fn encode_episode(e: &Episode) -> Vec<u8> {
    let flat2 = |v: &[[f32; 2]]| v.iter().flatten().copied().collect::<Vec<f32>>();
    let objects: Vec<f32> = e
        .object_positions
        .iter()
        .flatten()
        .flatten()
        .copied()
        .collect();
    let colors: Vec<f32> = e.object_colors.iter().flatten().copied().collect();
    encode_f32(&[
        &e.video.data,
        &flat2(&e.gripper_positions),
        &flat2(&e.actions),
        &objects,
        &colors,
    ])
}

/// Simulates every episode of every split and writes the dataset under `root`.
/// The manifest is written last, so its presence marks a complete dataset.
pub fn generate_dataset(world: &WorldConfig, sizes: SplitSizes, root: &Path) -> Result<Manifest> {
    world.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let splits = Splits::contiguous(sizes);
    let ids: Vec<u64> = splits.all().collect();
    ids.par_iter().try_for_each(|&id| {
        let e = sim::simulate_episode(world, id)?;
        write_file(&episode_path(root, id), &encode_episode(&e))
    })?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: DatasetKind::Episodes,
        world: world.clone(),
        seed: world.seed,
        splits,
        tensors: episode_tensors(world),
        predictor: None,
        source_hash: None,
        alignment: None,
    };
    write_manifest(root, &manifest)?;
    Ok(manifest)
}

fn read_record(root: &Path, manifest: &Manifest, id: u64) -> Result<Vec<Vec<f32>>> {
    let path = episode_path(root, id);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != 4 * manifest.record_len() {
        return Err(Error::Format {
            path,
            detail: format!(
                "{} bytes, expected {}",
                bytes.len(),
                4 * manifest.record_len()
            ),
        });
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    Ok(manifest
        .tensors
        .iter()
        .map(|t| values.by_ref().take(t.len()).collect())
        .collect())
}

fn pairs(v: &[f32]) -> Vec<[f32; 2]> {
    v.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

fn video_from(decl: &TensorDecl, data: Vec<f32>) -> Result<Video> {
    let s = &decl.shape;
    Video::new([s[0], s[1], s[2], s[3]], data)
}

fn expect_kind(root: &Path, manifest: &Manifest, kind: DatasetKind) -> Result<()> {
    if manifest.kind != kind {
        return Err(Error::Format {
            path: root.join(MANIFEST),
            detail: format!("dataset kind {:?}, expected {kind:?}", manifest.kind),
        });
    }
    Ok(())
}

pub fn load_episode(root: &Path, manifest: &Manifest, id: u64) -> Result<Episode> {
    expect_kind(root, manifest, DatasetKind::Episodes)?;
    let mut parts = read_record(root, manifest, id)?.into_iter();
    let mut next = || parts.next().expect("declared tensor");
    let video = video_from(&manifest.tensors[0], next())?;
    let gripper_positions = pairs(&next());
    let actions = pairs(&next());
    let n = manifest.world.num_objects;
    let flat = pairs(&next());
    let object_positions = (0..manifest.world.episode_length)
        .map(|t| flat[t * n..(t + 1) * n].to_vec())
        .collect();
    let object_colors = next().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(Episode {
        id,
        video,
        gripper_positions,
        actions,
        object_positions,
        object_colors,
    })
}

/// Predicted frames and their action targets for one source episode.
pub fn load_prediction(
    root: &Path,
    manifest: &Manifest,
    id: u64,
) -> Result<(Video, Vec<[f32; 2]>)> {
    expect_kind(root, manifest, DatasetKind::Predictions)?;
    let mut parts = read_record(root, manifest, id)?.into_iter();
    let video = video_from(&manifest.tensors[0], parts.next().expect("video"))?;
    Ok((video, pairs(&parts.next().expect("actions"))))
}

/// The action targets paired with predicted frames of `episode`.
pub fn aligned_targets(episode: &Episode) -> Vec<[f32; 2]> {
    episode.actions[CONTEXT_FRAMES..].to_vec()
}

/// Runs `predictor` over every episode of the dataset at `source` and writes
/// the predictions under `out`.
pub fn build_prediction_dataset(
    predictor: &PredictorConfig,
    source: &Path,
    out: &Path,
) -> Result<Manifest> {
    predictor.validate()?;
    let src = read_manifest(source)?;
    expect_kind(source, &src, DatasetKind::Episodes)?;
    let source_hash = content_hash(source)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ids: Vec<u64> = src.splits.all().collect();
    ids.par_iter().try_for_each(|&id| {
        let e = load_episode(source, &src, id)?;
        let video = predict::predict(predictor, &src.world, &e)?;
        let targets: Vec<f32> = aligned_targets(&e).into_iter().flatten().collect();
        write_file(
            &episode_path(out, id),
            &encode_f32(&[&video.data, &targets]),
        )
    })?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: DatasetKind::Predictions,
        world: src.world.clone(),
        seed: src.seed,
        splits: src.splits.clone(),
        tensors: prediction_tensors(&src.world),
        predictor: Some(predictor.effective()),
        source_hash: Some(source_hash),
        alignment: Some(ALIGNMENT.into()),
    };
    write_manifest(out, &manifest)?;
    Ok(manifest)
}

/// One inference-ready clip: predicted (or ground-truth from index 2) frames
/// and their aligned action targets.
pub fn load_clip(root: &Path, manifest: &Manifest, id: u64) -> Result<(Video, Vec<[f32; 2]>)> {
    match manifest.kind {
        DatasetKind::Predictions => load_prediction(root, manifest, id),
        DatasetKind::Episodes => {
            let e = load_episode(root, manifest, id)?;
            Ok((
                e.video.slice(CONTEXT_FRAMES, e.video.frames)?,
                aligned_targets(&e),
            ))
        }
    }
}

/// Loads one split as inference-ready clips. Episode datasets yield their
/// ground-truth frames from index 2 on, aligned exactly like predictions.
pub fn load_split(root: &Path, split: Split) -> Result<SequenceSet> {
    let manifest = read_manifest(root)?;
    let ids = manifest.splits.get(split);
    let clips = ids
        .par_iter()
        .map(|&id| load_clip(root, &manifest, id))
        .collect::<Result<Vec<_>>>()?;
    let mut set = SequenceSet::default();
    for (&id, (video, targets)) in ids.iter().zip(clips) {
        set.push(id, video, targets)?;
    }
    Ok(set)
}

/// SHA-256 over one split's clips as the inference network sees them, so a
/// ground-truth dataset and oracle predictions of it hash identically.
pub fn split_clip_hash(root: &Path, split: Split) -> Result<String> {
    let manifest = read_manifest(root)?;
    let digests = manifest
        .splits
        .get(split)
        .par_iter()
        .map(|&id| {
            let (video, targets) = load_clip(root, &manifest, id)?;
            let flat: Vec<f32> = targets.into_iter().flatten().collect();
            Ok((id, Sha256::digest(encode_f32(&[&video.data, &flat]))))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut h = Sha256::new();
    for (id, d) in digests {
        h.update(id.to_le_bytes());
        h.update(d);
    }
    Ok(hex::encode(h.finalize()))
}

/// SHA-256 over the manifest and every episode file, in manifest order.
pub fn content_hash(root: &Path) -> Result<String> {
    let manifest_path = root.join(MANIFEST);
    let manifest_bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = read_manifest(root)?;
    let mut h = Sha256::new();
    h.update(&manifest_bytes);
    for id in manifest.splits.all() {
        let path = episode_path(root, id);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update(id.to_le_bytes());
        h.update(Sha256::digest(&bytes));
    }
    Ok(hex::encode(h.finalize()))
}
