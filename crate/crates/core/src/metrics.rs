//! Frame-comparison metrics (PSNR, SSIM) and a Fréchet distance between
//! Gaussian fits of hand-crafted video features ("FVD-lite").
//!
//! FVD-lite is only meaningful for ranking predictors against each other on
//! the same test split; its scale is unrelated to published FVD numbers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::video::{Frame, Video};

/// Returned for identical inputs instead of +∞.
pub const PSNR_CAP_DB: f64 = 100.0;

fn check_same(context: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(context, a, b));
    }
    Ok(())
}

pub fn mse(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64
}

fn psnr_from_mse(m: f64) -> f64 {
    if m <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB)
    }
}

/// Peak signal-to-noise ratio in dB with peak value 1.0.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    check_same("psnr", &a.shape(), &b.shape())?;
    Ok(psnr_from_mse(mse(&a.data, &b.data)))
}

/// PSNR of the whole clip as a single signal.
pub fn psnr_video(a: &Video, b: &Video) -> Result<f64> {
    check_same("psnr", &a.shape(), &b.shape())?;
    Ok(psnr_from_mse(mse(&a.data, &b.data)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub stride: usize,
    pub dynamic_range: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 8,
            stride: 1,
            dynamic_range: 1.0,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Sums over every `window`-wide run along rows, then along columns.
fn box_sums(img: &[f64], h: usize, w: usize, window: usize) -> Vec<f64> {
    let ow = w - window + 1;
    let oh = h - window + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let r = &img[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = r[x..x + window].iter().sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..window).map(|k| rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Single-channel SSIM map averaged over uniform `window × window` patches.
pub fn ssim_gray(a: &[f64], b: &[f64], h: usize, w: usize, config: &SsimConfig) -> Result<f64> {
    let win = config.window;
    if win == 0 || h < win || w < win {
        return Err(Error::InvalidConfig(format!(
            "frame {h}x{w} is smaller than the {win}x{win} SSIM window"
        )));
    }
    let stride = config.stride.max(1);
    let (c1, c2) = (config.c1(), config.c2());
    let n = (win * win) as f64;
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let sa = box_sums(a, h, w, win);
    let sb = box_sums(b, h, w, win);
    let saa = box_sums(&aa, h, w, win);
    let sbb = box_sums(&bb, h, w, win);
    let sab = box_sums(&ab, h, w, win);
    let ow = w - win + 1;
    let oh = h - win + 1;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in (0..oh).step_by(stride) {
        for x in (0..ow).step_by(stride) {
            let i = y * ow + x;
            let ma = sa[i] / n;
            let mb = sb[i] / n;
            let va = saa[i] / n - ma * ma;
            let vb = sbb[i] / n - mb * mb;
            let cov = sab[i] / n - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM on luma, mean of the index map.
pub fn ssim(a: &Frame, b: &Frame, config: &SsimConfig) -> Result<f64> {
    check_same("ssim", &a.shape(), &b.shape())?;
    ssim_gray(&a.luma(), &b.luma(), a.height, a.width, config)
}

pub const FEATURE_GRID: usize = 8;
pub const FEATURE_DIM: usize = 3 * FEATURE_GRID * FEATURE_GRID * 3;

/// 576-dim summary of an RGB video: per-channel temporal mean, temporal
/// standard deviation and mean absolute frame difference on an 8×8 grid of
/// block averages.
pub fn video_feature(v: &Video) -> Result<Vec<f64>> {
    if v.frames < 2 {
        return Err(Error::InvalidConfig(
            "video_feature needs at least 2 frames".into(),
        ));
    }
    if v.channels != 3
        || !v.height.is_multiple_of(FEATURE_GRID)
        || !v.width.is_multiple_of(FEATURE_GRID)
    {
        return Err(Error::shape(
            "video_feature",
            &[v.frames, 64, 64, 3],
            &v.shape(),
        ));
    }
    let cells = FEATURE_GRID * FEATURE_GRID;
    let (bh, bw) = (v.height / FEATURE_GRID, v.width / FEATURE_GRID);
    let block_area = (bh * bw) as f64;
    // [t][channel][cell]
    let small: Vec<Vec<f64>> = (0..v.frames)
        .map(|t| {
            let f = v.frame_data(t);
            let mut s = vec![0.0; 3 * cells];
            for y in 0..v.height {
                for x in 0..v.width {
                    let cell = (y / bh) * FEATURE_GRID + x / bw;
                    let p = &f[(y * v.width + x) * 3..][..3];
                    for c in 0..3 {
                        s[c * cells + cell] += p[c] as f64;
                    }
                }
            }
            s.iter_mut().for_each(|x| *x /= block_area);
            s
        })
        .collect();
    let t = v.frames as f64;
    let d = 3 * cells;
    let mut feat = vec![0.0; 3 * d];
    for k in 0..d {
        let first = small[0][k];
        let mean = first + small.iter().map(|s| s[k] - first).sum::<f64>() / t;
        let var = small.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / t;
        let diff = small
            .windows(2)
            .map(|w| (w[1][k] - w[0][k]).abs())
            .sum::<f64>()
            / (t - 1.0);
        feat[k] = mean;
        feat[d + k] = var.sqrt();
        feat[2 * d + k] = diff;
    }
    Ok(feat)
}

/// Mean and unbiased covariance of a sample of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

/// Streaming accumulator; sums are shifted by the first sample for stability
/// and consumed in arrival order, so chunking the input changes nothing.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    shift: Option<DVector<f64>>,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
    count: usize,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            shift: None,
            sum: DVector::zeros(dim),
            outer: DMatrix::zeros(dim, dim),
            count: 0,
        }
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        let dim = self.sum.len();
        if x.len() != dim {
            return Err(Error::length("feature vector", dim, x.len()));
        }
        let v = DVector::from_column_slice(x);
        let shift = self.shift.get_or_insert_with(|| v.clone());
        let c = &v - &*shift;
        self.sum += &c;
        self.outer.ger(1.0, &c, &c, 1.0);
        self.count += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<GaussianMoments> {
        if self.count < 2 {
            return Err(Error::Empty(
                "moment sample (need at least 2 vectors)".into(),
            ));
        }
        let n = self.count as f64;
        let shift = self.shift.unwrap();
        let centred_mean = &self.sum / n;
        let mut cov = (&self.outer - &centred_mean * centred_mean.transpose() * n) / (n - 1.0);
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(GaussianMoments {
            mean: centred_mean + shift,
            covariance: cov,
            count: self.count,
        })
    }
}

impl GaussianMoments {
    pub fn estimate(samples: &[Vec<f64>]) -> Result<Self> {
        let dim = samples.first().map_or(0, Vec::len);
        let mut acc = MomentAccumulator::new(dim);
        for s in samples {
            acc.push(s)?;
        }
        acc.finish()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn sym_eigen(m: DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical(format!("eigendecomposition of {what} did not converge")))
}

/// Eigenvalues below the round-off floor of the decomposition are treated as zero.
fn clamp_eigenvalues(values: &DVector<f64>) -> DVector<f64> {
    let n = values.len() as f64;
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = n * f64::EPSILON * top;
    values.map(|v| if v > floor { v } else { 0.0 })
}

/// Fréchet distance between two Gaussians:
/// `‖μp − μq‖² + tr(Σp + Σq − 2 (Σp^½ Σq Σp^½)^½)`.
pub fn frechet_distance(p: &GaussianMoments, q: &GaussianMoments) -> Result<f64> {
    if p.dim() != q.dim() || p.covariance.shape() != q.covariance.shape() {
        return Err(Error::length(
            "frechet_distance dimensionality",
            p.dim(),
            q.dim(),
        ));
    }
    let mean_term = (&p.mean - &q.mean).norm_squared();
    let ep = sym_eigen(p.covariance.clone(), "first covariance")?;
    let lp = clamp_eigenvalues(&ep.eigenvalues);
    let sqrt_p =
        &ep.eigenvectors * DMatrix::from_diagonal(&lp.map(f64::sqrt)) * ep.eigenvectors.transpose();
    let eq = sym_eigen(q.covariance.clone(), "second covariance")?;
    let lq = clamp_eigenvalues(&eq.eigenvalues);
    let inner = &sqrt_p * &q.covariance * &sqrt_p;
    let ei = sym_eigen(inner, "covariance product")?;
    let cross: f64 = clamp_eigenvalues(&ei.eigenvalues)
        .iter()
        .map(|v| v.sqrt())
        .sum();
    let d = mean_term + lp.sum() + lq.sum() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Fréchet distance between the feature distributions of real and predicted
/// clips. The first `context` frames of every real clip are dropped so both
/// sets cover the same predicted span. `batch_size` only bounds how many
/// clips are featurized at once.
pub fn fvd_lite(
    real: &[Video],
    predicted: &[Video],
    context: usize,
    batch_size: usize,
) -> Result<f64> {
    if real.len() < 2 || predicted.len() < 2 {
        return Err(Error::Empty(
            "fvd_lite input (need at least 2 videos per set)".into(),
        ));
    }
    if real.len() < 2 * FEATURE_DIM || predicted.len() < 2 * FEATURE_DIM {
        log::warn!(
            "fvd_lite: {} real / {} predicted clips for {FEATURE_DIM}-dim features; covariance will be rank-deficient",
            real.len(),
            predicted.len()
        );
    }
    let batch = batch_size.max(1);
    let moments = |set: &[Video], drop: usize| -> Result<GaussianMoments> {
        let mut acc = MomentAccumulator::new(FEATURE_DIM);
        for chunk in set.chunks(batch) {
            let feats = chunk
                .iter()
                .map(|v| {
                    let v = if drop > 0 {
                        v.slice(drop, v.frames)?
                    } else {
                        v.clone()
                    };
                    video_feature(&v)
                })
                .collect::<Result<Vec<_>>>()?;
            for f in &feats {
                acc.push(f)?;
            }
        }
        acc.finish()
    };
    let p = moments(real, context)?;
    let q = moments(predicted, 0)?;
    frechet_distance(&p, &q)
}
