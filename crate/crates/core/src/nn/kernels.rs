//! Batched layer kernels over flat NCHW buffers.
//!
//! Convolutions lower each sample to an im2col matrix of shape
//! `[C*kh*kw, OH*OW]` and go through a dense GEMM. Every sample is
//! processed independently so a sample's output never depends on what
//! else is in the batch.

/// `c[m×n] = alpha * a[m×k] · b[k×n] + beta * c`, with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the asserted lengths cover every index reachable through the
    // given strides for these dimensions.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn out_dims(h: usize, w: usize, (kh, kw): (usize, usize), stride: usize) -> (usize, usize) {
    ((h - kh) / stride + 1, (w - kw) / stride + 1)
}

fn im2col(
    x: &[f64],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    stride: usize,
    cols: &mut [f64],
) {
    let (oh, ow) = out_dims(h, w, (kh, kw), stride);
    let p = oh * ow;
    let mut row = 0;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let src = &plane[(oy * stride + ki) * w + kj..];
                    let d = &mut dst[oy * ow..(oy + 1) * ow];
                    for (ox, v) in d.iter_mut().enumerate() {
                        *v = src[ox * stride];
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im(
    cols: &[f64],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    stride: usize,
    dx: &mut [f64],
) {
    let (oh, ow) = out_dims(h, w, (kh, kw), stride);
    let p = oh * ow;
    let mut row = 0;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let base = (oy * stride + ki) * w + kj;
                    for ox in 0..ow {
                        plane[base + ox * stride] += src[oy * ow + ox];
                    }
                }
                row += 1;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_forward(
    x: &[f64],
    batch: usize,
    (c, h, w): (usize, usize, usize),
    weight: &[f64],
    bias: &[f64],
    out_channels: usize,
    kernel: (usize, usize),
    stride: usize,
) -> Vec<f64> {
    let (oh, ow) = out_dims(h, w, kernel, stride);
    let k = c * kernel.0 * kernel.1;
    let p = oh * ow;
    let in_len = c * h * w;
    let out_len = out_channels * p;
    let mut out = vec![0.0; batch * out_len];
    let mut cols = vec![0.0; k * p];
    for (xs, ys) in x.chunks_exact(in_len).zip(out.chunks_exact_mut(out_len)) {
        im2col(xs, (c, h, w), kernel, stride, &mut cols);
        for (o, row) in ys.chunks_exact_mut(p).enumerate() {
            row.fill(bias[o]);
        }
        gemm(
            out_channels,
            k,
            p,
            weight,
            (k as isize, 1),
            &cols,
            (p as isize, 1),
            1.0,
            ys,
        );
    }
    out
}

/// Accumulates into `dweight`/`dbias` and returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    x: &[f64],
    g: &[f64],
    batch: usize,
    (c, h, w): (usize, usize, usize),
    weight: &[f64],
    out_channels: usize,
    kernel: (usize, usize),
    stride: usize,
    dweight: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let (oh, ow) = out_dims(h, w, kernel, stride);
    let k = c * kernel.0 * kernel.1;
    let p = oh * ow;
    let in_len = c * h * w;
    let out_len = out_channels * p;
    let mut dx = vec![0.0; batch * in_len];
    let mut cols = vec![0.0; k * p];
    let mut dcols = vec![0.0; k * p];
    for ((xs, gs), dxs) in x
        .chunks_exact(in_len)
        .zip(g.chunks_exact(out_len))
        .zip(dx.chunks_exact_mut(in_len))
    {
        im2col(xs, (c, h, w), kernel, stride, &mut cols);
        for (o, row) in gs.chunks_exact(p).enumerate() {
            dbias[o] += row.iter().sum::<f64>();
        }
        // dW[o×k] += g[o×p] · colsᵀ[p×k]
        gemm(
            out_channels,
            p,
            k,
            gs,
            (p as isize, 1),
            &cols,
            (1, p as isize),
            1.0,
            dweight,
        );
        // dcols[k×p] = Wᵀ[k×o] · g[o×p]
        gemm(
            k,
            out_channels,
            p,
            weight,
            (1, k as isize),
            gs,
            (p as isize, 1),
            0.0,
            &mut dcols,
        );
        col2im(&dcols, (c, h, w), kernel, stride, dxs);
    }
    dx
}

pub(crate) fn dense_forward(
    x: &[f64],
    batch: usize,
    in_features: usize,
    out_features: usize,
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * out_features);
    for xs in x.chunks_exact(in_features) {
        for (o, wrow) in weight.chunks_exact(in_features).enumerate() {
            let dot: f64 = wrow.iter().zip(xs).map(|(a, b)| a * b).sum();
            out.push(dot + bias[o]);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    x: &[f64],
    g: &[f64],
    _batch: usize,
    in_features: usize,
    out_features: usize,
    weight: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let mut dx = Vec::with_capacity(x.len());
    for (xs, gs) in x
        .chunks_exact(in_features)
        .zip(g.chunks_exact(out_features))
    {
        for (o, &go) in gs.iter().enumerate() {
            dbias[o] += go;
            let drow = &mut dweight[o * in_features..(o + 1) * in_features];
            for (d, &xv) in drow.iter_mut().zip(xs) {
                *d += go * xv;
            }
        }
        for i in 0..in_features {
            let mut acc = 0.0;
            for (o, &go) in gs.iter().enumerate() {
                acc += go * weight[o * in_features + i];
            }
            dx.push(acc);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution.
    fn conv_naive(
        x: &[f64],
        (c, h, w): (usize, usize, usize),
        weight: &[f64],
        bias: &[f64],
        o: usize,
        (kh, kw): (usize, usize),
        s: usize,
    ) -> Vec<f64> {
        let (oh, ow) = out_dims(h, w, (kh, kw), s);
        let mut out = vec![0.0; o * oh * ow];
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[oc];
                    for ci in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                acc += weight[((oc * c + ci) * kh + ki) * kw + kj]
                                    * x[(ci * h + oy * s + ki) * w + ox * s + kj];
                            }
                        }
                    }
                    out[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        let (c, h, w, o) = (3, 9, 8, 4);
        let x: Vec<f64> = (0..c * h * w)
            .map(|i| ((i * 37 % 17) as f64) / 7.0 - 1.0)
            .collect();
        let wt: Vec<f64> = (0..o * c * 9)
            .map(|i| ((i * 11 % 13) as f64) / 5.0 - 1.2)
            .collect();
        let b = vec![0.1, -0.2, 0.3, 0.0];
        for stride in 1..=3 {
            let fast = conv2d_forward(&x, 1, (c, h, w), &wt, &b, o, (3, 3), stride);
            let slow = conv_naive(&x, (c, h, w), &wt, &b, o, (3, 3), stride);
            assert_eq!(fast.len(), slow.len());
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
