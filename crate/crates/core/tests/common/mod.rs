//! Reference implementations shared by the integration tests and the
//! acceptance run. Each is written independently of the library code it
//! checks.
#![allow(dead_code)]

use actbench::nn::{LayerSpec, Network, Tensor};
use actbench::video::Frame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_INSTANCES: u64 = 100;
pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_MAX_REL: f64 = 1e-4;

/// Relative error with a floor on the scale so that two gradients that are
/// both tiny are compared absolutely; the floor sits well above the
/// finite-difference round-off (~1e-11 here).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-4)
}

/// Inputs bounded away from zero so ReLU kinks are never straddled by the
/// finite-difference step.
pub fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m: f64 = rng.gen_range(0.05..1.0);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// Worst relative error over every parameter and every input coordinate of
/// the scalar `sum(forward(x) * upstream)`, central differences.
pub fn worst_gradient_error(net: &mut Network, x: &Tensor, upstream: &Tensor) -> f64 {
    let objective = |n: &Network, x: &Tensor| -> f64 {
        n.forward(x)
            .unwrap()
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(a, b)| a * b)
            .sum()
    };
    let grads = net.backward(x, upstream).unwrap();
    let mut worst: f64 = 0.0;
    for p in 0..net.params().len() {
        for k in 0..net.params()[p].len() {
            let orig = net.params()[p].data()[k];
            net.params_mut()[p].data_mut()[k] = orig + GRAD_STEP;
            let plus = objective(net, x);
            net.params_mut()[p].data_mut()[k] = orig - GRAD_STEP;
            let minus = objective(net, x);
            net.params_mut()[p].data_mut()[k] = orig;
            worst = worst.max(rel_err(
                (plus - minus) / (2.0 * GRAD_STEP),
                grads.params[p][k],
            ));
        }
    }
    let mut xp = x.clone();
    for k in 0..x.len() {
        let orig = x.data()[k];
        xp.data_mut()[k] = orig + GRAD_STEP;
        let plus = objective(net, &xp);
        xp.data_mut()[k] = orig - GRAD_STEP;
        let minus = objective(net, &xp);
        xp.data_mut()[k] = orig;
        worst = worst.max(rel_err(
            (plus - minus) / (2.0 * GRAD_STEP),
            grads.input.data()[k],
        ));
    }
    worst
}

/// Per-sample input shape, layer stack and batch size of one random instance.
pub type Instance = (Vec<usize>, Vec<LayerSpec>, usize);

pub fn conv_instance(rng: &mut ChaCha8Rng) -> Instance {
    let cin = rng.gen_range(1..4);
    let cout = rng.gen_range(1..4);
    let k = rng.gen_range(1..4);
    let stride = rng.gen_range(1..3);
    let h = rng.gen_range(k..k + 5);
    let w = rng.gen_range(k..k + 5);
    (
        vec![cin, h, w],
        vec![LayerSpec::conv(cin, cout, k, stride)],
        rng.gen_range(1..3),
    )
}

pub fn dense_instance(rng: &mut ChaCha8Rng) -> Instance {
    let i = rng.gen_range(1..8);
    let o = rng.gen_range(1..6);
    (vec![i], vec![LayerSpec::dense(i, o)], rng.gen_range(1..4))
}

pub fn relu_instance(rng: &mut ChaCha8Rng) -> Instance {
    let c = rng.gen_range(1..4);
    (
        vec![c, rng.gen_range(1..5), rng.gen_range(1..5)],
        vec![LayerSpec::Relu],
        rng.gen_range(1..3),
    )
}

pub fn pool_instance(rng: &mut ChaCha8Rng) -> Instance {
    let c = rng.gen_range(1..5);
    (
        vec![c, rng.gen_range(1..6), rng.gen_range(1..6)],
        vec![LayerSpec::GlobalAvgPool],
        rng.gen_range(1..3),
    )
}

pub fn flatten_instance(rng: &mut ChaCha8Rng) -> Instance {
    let (c, h, w) = (
        rng.gen_range(1..4),
        rng.gen_range(1..4),
        rng.gen_range(1..4),
    );
    (
        vec![c, h, w],
        vec![LayerSpec::Flatten, LayerSpec::dense(c * h * w, 2)],
        rng.gen_range(1..3),
    )
}

/// The production layout (conv/relu stack, pooling, dense head) at a size
/// small enough for exhaustive finite differences.
pub fn composite_instance(_rng: &mut ChaCha8Rng) -> Instance {
    let layers = vec![
        LayerSpec::conv(6, 4, 3, 2),
        LayerSpec::Relu,
        LayerSpec::conv(4, 5, 3, 2),
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::dense(5, 2),
    ];
    (vec![6, 11, 11], layers, 2)
}

pub type InstanceBuilder = fn(&mut ChaCha8Rng) -> Instance;

pub const LAYER_CASES: [(&str, InstanceBuilder); 6] = [
    ("conv2d", conv_instance),
    ("dense", dense_instance),
    ("relu", relu_instance),
    ("global-avg-pool", pool_instance),
    ("flatten", flatten_instance),
    ("conv-relu-pool-dense", composite_instance),
];

/// Smallest |pre-activation| feeding any ReLU in `net` for input `x`.
fn closest_kink(net: &Network, x: &Tensor) -> f64 {
    let layers = net.layers();
    let mut closest = f64::INFINITY;
    for (k, layer) in layers.iter().enumerate() {
        if *layer != LayerSpec::Relu {
            continue;
        }
        let prefix_layers = layers[..k].to_vec();
        let mut prefix = Network::zeroed(net.input_shape().to_vec(), prefix_layers).unwrap();
        let n = prefix.params().len();
        for (dst, src) in prefix.params_mut().iter_mut().zip(&net.params()[..n]) {
            dst.data_mut().copy_from_slice(src.data());
        }
        let z = prefix.forward(x).unwrap();
        closest = z.data().iter().fold(closest, |m, v| m.min(v.abs()));
    }
    closest
}

/// Worst error over `GRAD_INSTANCES` random instances, and the first
/// instance seed exceeding the tolerance, if any. Inputs that put a hidden
/// ReLU within 1e-3 of its kink are redrawn, since central differences are
/// meaningless across the kink.
pub fn check_layer(build: fn(&mut ChaCha8Rng) -> Instance) -> (f64, Option<u64>) {
    let mut overall: f64 = 0.0;
    let mut first_bad = None;
    for seed in 0..GRAD_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (shape, layers, batch) = build(&mut rng);
        let mut net = Network::new(shape.clone(), layers, &mut rng).unwrap();
        // Non-zero biases so their gradients are exercised away from the init.
        for p in net.params_mut() {
            for v in p.data_mut() {
                *v += rng.gen_range(-0.1..0.1);
            }
        }
        let mut full = vec![batch];
        full.extend(&shape);
        let x = loop {
            let x = Tensor::new(
                full.clone(),
                away_from_zero(&mut rng, full.iter().product()),
            )
            .unwrap();
            if closest_kink(&net, &x) >= 1e-3 {
                break x;
            }
        };
        let out = net.forward(&x).unwrap();
        let up = Tensor::new(
            out.shape().to_vec(),
            (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let e = worst_gradient_error(&mut net, &x, &up);
        if e >= GRAD_MAX_REL && first_bad.is_none() {
            first_bad = Some(seed);
        }
        overall = overall.max(e);
    }
    (overall, first_bad)
}

pub fn random_frame(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Frame {
    Frame {
        height: h,
        width: w,
        channels: 3,
        data: (0..h * w * 3).map(|_| rng.gen::<f32>()).collect(),
    }
}

/// Textbook SSIM: for every 8×8 window, explicit means, population variances
/// and covariance from nested loops, then the mean of the index map.
pub fn naive_ssim(a: &Frame, b: &Frame) -> f64 {
    let luma = |f: &Frame, y: usize, x: usize| {
        let p = &f.data[(y * f.width + x) * 3..][..3];
        0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
    };
    let (c1, c2) = ((0.01f64).powi(2), (0.03f64).powi(2));
    let win = 8;
    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=a.height - win {
        for x0 in 0..=a.width - win {
            let (mut ma, mut mb) = (0.0, 0.0);
            for y in y0..y0 + win {
                for x in x0..x0 + win {
                    ma += luma(a, y, x);
                    mb += luma(b, y, x);
                }
            }
            ma /= n;
            mb /= n;
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for y in y0..y0 + win {
                for x in x0..x0 + win {
                    let da = luma(a, y, x) - ma;
                    let db = luma(b, y, x) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            va /= n;
            vb /= n;
            cov /= n;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// 50 random 64×64 pairs, half of them correlated so the index spans more
/// than noise.
pub fn ssim_pairs(seed: u64) -> Vec<(Frame, Frame)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..50)
        .map(|i| {
            let a = random_frame(&mut rng, 64, 64);
            let b = if i % 2 == 0 {
                random_frame(&mut rng, 64, 64)
            } else {
                let mut b = a.clone();
                for v in &mut b.data {
                    *v = (*v + rng.gen_range(-0.1f32..0.1)).clamp(0.0, 1.0);
                }
                b
            };
            (a, b)
        })
        .collect()
}

/// Fréchet distance between diagonal Gaussians in closed form:
/// `Σ (μ1 − μ2)² + (σ1 − σ2)²` with σ the per-dimension standard deviations.
pub fn diagonal_frechet(m1: &[f64], v1: &[f64], m2: &[f64], v2: &[f64]) -> f64 {
    (0..m1.len())
        .map(|i| (m1[i] - m2[i]).powi(2) + (v1[i].sqrt() - v2[i].sqrt()).powi(2))
        .sum()
}

/// Least-squares slope of `ys` against `0, 1, 2, …`.
pub fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let num: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, y)| (i as f64 - xm) * (y - ym))
        .sum();
    let den: f64 = (0..ys.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    num / den
}
