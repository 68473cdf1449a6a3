//! Per-channel filters over [`Frame`]s with edge-clamped borders.

use crate::video::Frame;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur. `sigma <= 0` returns the frame unchanged.
pub fn gaussian_blur(frame: &Frame, sigma: f64) -> Frame {
    if sigma <= 0.0 {
        return frame.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (h, w, c) = (frame.height as i64, frame.width as i64, frame.channels);
    let at = |y: i64, x: i64| (y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize * c;

    let mut tmp = vec![0.0f64; frame.data.len()];
    for y in 0..h {
        for x in 0..w {
            let dst = at(y, x);
            for (j, kv) in k.iter().enumerate() {
                let src = at(y, x + j as i64 - r);
                for ch in 0..c {
                    tmp[dst + ch] += kv * frame.data[src + ch] as f64;
                }
            }
        }
    }
    let mut out = vec![0.0f32; frame.data.len()];
    for y in 0..h {
        for x in 0..w {
            let dst = at(y, x);
            for ch in 0..c {
                let mut acc = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    acc += kv * tmp[at(y + j as i64 - r, x) + ch];
                }
                out[dst + ch] = acc.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Frame {
        data: out,
        ..*frame
    }
}

/// Bilinear sample at continuous pixel-center coordinates, clamped at edges.
pub fn sample_bilinear(frame: &Frame, x: f64, y: f64, out: &mut [f32]) {
    let xf = x.clamp(0.0, (frame.width - 1) as f64);
    let yf = y.clamp(0.0, (frame.height - 1) as f64);
    let x0 = xf.floor() as usize;
    let y0 = yf.floor() as usize;
    let x1 = (x0 + 1).min(frame.width - 1);
    let y1 = (y0 + 1).min(frame.height - 1);
    let fx = (xf - x0 as f64) as f32;
    let fy = (yf - y0 as f64) as f32;
    let (p00, p01) = (frame.pixel(y0, x0), frame.pixel(y0, x1));
    let (p10, p11) = (frame.pixel(y1, x0), frame.pixel(y1, x1));
    for c in 0..frame.channels {
        let top = p00[c] * (1.0 - fx) + p01[c] * fx;
        let bottom = p10[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = top * (1.0 - fy) + bottom * fy;
    }
}

/// Whole-frame translation by `(dx, dy)` pixels: `out(p) = frame(p − d)`.
pub fn shift(frame: &Frame, dx: f64, dy: f64) -> Frame {
    let mut out = frame.clone();
    let c = frame.channels;
    for y in 0..frame.height {
        for x in 0..frame.width {
            let i = (y * frame.width + x) * c;
            sample_bilinear(frame, x as f64 - dx, y as f64 - dy, &mut out.data[i..i + c]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Frame {
        let mut f = Frame::filled(6, 7, &[0.0, 0.0, 0.0]);
        for (i, v) in f.data.iter_mut().enumerate() {
            *v = (i % 17) as f32 / 17.0;
        }
        f
    }

    #[test]
    fn zero_sigma_is_identity() {
        let f = ramp();
        assert_eq!(gaussian_blur(&f, 0.0), f);
    }

    #[test]
    fn blur_preserves_constant_frames() {
        let f = Frame::filled(9, 9, &[0.25, 0.5, 0.75]);
        let b = gaussian_blur(&f, 1.7);
        for (a, b) in f.data.iter().zip(&b.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_and_integer_shifts_are_exact() {
        let f = ramp();
        assert_eq!(shift(&f, 0.0, 0.0), f);
        let s = shift(&f, 1.0, 0.0);
        assert_eq!(s.pixel(2, 3), f.pixel(2, 2));
    }
}
