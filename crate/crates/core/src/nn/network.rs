use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// One stage of a feed-forward chain. Spatial layers work on `(C, H, W)` samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    GlobalAvgPool,
    Flatten,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride,
        }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Dense {
            in_features,
            out_features,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::GlobalAvgPool => "global-avg-pool",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let context = || format!("layer {index} ({})", self.name());
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel: (kh, kw),
                stride,
            } => {
                if stride == 0 || kh == 0 || kw == 0 || out_channels == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "{}: kernel, stride and channels must be positive",
                        context()
                    )));
                }
                match input {
                    &[c, h, w] if c == in_channels && h >= kh && w >= kw => Ok(vec![
                        out_channels,
                        (h - kh) / stride + 1,
                        (w - kw) / stride + 1,
                    ]),
                    _ => Err(Error::shape(context(), &[in_channels, kh, kw], input)),
                }
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => match input {
                &[n] if n == in_features => Ok(vec![out_features]),
                _ => Err(Error::shape(context(), &[in_features], input)),
            },
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::GlobalAvgPool => match input {
                &[c, _, _] => Ok(vec![c]),
                _ => Err(Error::shape(context(), &[0, 0, 0], input)),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Shapes of (weight, bias), if the layer is trainable.
    fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel: (kh, kw),
                ..
            } => Some((vec![out_channels, in_channels, kh, kw], vec![out_channels])),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => Some((vec![out_features, in_features], vec![out_features])),
            _ => None,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel: (kh, kw),
                ..
            } => (in_channels * kh * kw, out_channels * kh * kw),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => (in_features, out_features),
            _ => (0, 0),
        }
    }
}

/// Layer chain plus its parameters. Trainable layers own two consecutive
/// entries of `params`: weight, then bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    param_index: Vec<Option<usize>>,
    params: Vec<Tensor>,
}

/// Activations retained by [`Network::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Vec<f64>>,
    pub input: Tensor,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeroed(input_shape, layers)?;
        for (layer, idx) in net.layers.iter().zip(&net.param_index) {
            if let Some(i) = *idx {
                let (fan_in, fan_out) = layer.fans();
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for w in net.params[i].data_mut() {
                    *w = rng.gen_range(-limit..limit);
                }
            }
        }
        Ok(net)
    }

    /// Same topology with every parameter set to zero.
    pub fn zeroed(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "input shape {input_shape:?} must be non-empty and positive"
            )));
        }
        let mut shapes = vec![input_shape.clone()];
        let mut params = Vec::new();
        let mut param_index = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let next = layer.output_shape(i, shapes.last().unwrap())?;
            if next.contains(&0) {
                return Err(Error::shape(
                    format!("layer {i} ({})", layer.name()),
                    &[1],
                    &next,
                ));
            }
            shapes.push(next);
            match layer.param_shapes() {
                Some((w, b)) => {
                    param_index.push(Some(params.len()));
                    params.push(Tensor::zeros(w));
                    params.push(Tensor::zeros(b));
                }
                None => param_index.push(None),
            }
        }
        Ok(Self {
            input_shape,
            layers,
            shapes,
            param_index,
            params,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Stores computed gradients in each parameter's grad slot.
    pub fn set_grads(&mut self, grads: &Gradients) -> Result<()> {
        if grads.params.len() != self.params.len() {
            return Err(Error::length(
                "parameter gradients",
                self.params.len(),
                grads.params.len(),
            ));
        }
        for (p, g) in self.params.iter_mut().zip(&grads.params) {
            p.set_grad(g.clone())?;
        }
        Ok(())
    }

    /// Returns the batch size implied by `shape`: either exactly the
    /// per-sample input shape (batch of one) or `[N, ..input_shape]`.
    fn batch_of(&self, shape: &[usize], per_sample: &[usize], what: &str) -> Result<usize> {
        if shape == per_sample {
            Ok(1)
        } else if shape.len() == per_sample.len() + 1 && &shape[1..] == per_sample {
            Ok(shape[0])
        } else {
            Err(Error::shape(what, per_sample, shape))
        }
    }

    fn batched_shape(&self, single: bool, batch: usize, per_sample: &[usize]) -> Vec<usize> {
        if single {
            per_sample.to_vec()
        } else {
            let mut s = vec![batch];
            s.extend_from_slice(per_sample);
            s
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let single = input.shape() == self.input_shape.as_slice();
        let batch = self.batch_of(input.shape(), &self.input_shape, "network input (layer 0)")?;
        let mut x = input.data().to_vec();
        for i in 0..self.layers.len() {
            x = self.layer_forward(i, batch, &x);
        }
        Tensor::new(self.batched_shape(single, batch, self.output_shape()), x)
    }

    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let single = input.shape() == self.input_shape.as_slice();
        let batch = self.batch_of(input.shape(), &self.input_shape, "network input (layer 0)")?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.data().to_vec());
        for i in 0..self.layers.len() {
            let next = self.layer_forward(i, batch, activations.last().unwrap());
            activations.push(next);
        }
        let out = Tensor::new(
            self.batched_shape(single, batch, self.output_shape()),
            activations.last().unwrap().clone(),
        )?;
        Ok((out, ForwardCache { batch, activations }))
    }

    /// Recomputes the forward pass, then backpropagates `upstream`.
    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let (_, cache) = self.forward_cached(input)?;
        self.backward_cached(&cache, upstream)
    }

    pub fn backward_cached(&self, cache: &ForwardCache, upstream: &Tensor) -> Result<Gradients> {
        let batch = cache.batch;
        let expected_out = self.batched_shape(batch == 1, batch, self.output_shape());
        let batched_out = self.batched_shape(false, batch, self.output_shape());
        if upstream.shape() != expected_out.as_slice() && upstream.shape() != batched_out.as_slice()
        {
            return Err(Error::shape(
                "upstream gradient",
                &batched_out,
                upstream.shape(),
            ));
        }
        let mut param_grads: Vec<Vec<f64>> =
            self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let mut g = upstream.data().to_vec();
        for i in (0..self.layers.len()).rev() {
            g = self.layer_backward(i, batch, &cache.activations[i], &g, &mut param_grads);
        }
        let input = Tensor::new(self.batched_shape(batch == 1, batch, &self.input_shape), g)?;
        Ok(Gradients {
            params: param_grads,
            input,
        })
    }

    fn layer_forward(&self, i: usize, batch: usize, x: &[f64]) -> Vec<f64> {
        let in_shape = &self.shapes[i];
        let out_shape = &self.shapes[i + 1];
        match self.layers[i] {
            LayerSpec::Conv2d {
                kernel: (kh, kw),
                stride,
                ..
            } => {
                let p = self.param_index[i].unwrap();
                kernels::conv2d_forward(
                    x,
                    batch,
                    (in_shape[0], in_shape[1], in_shape[2]),
                    self.params[p].data(),
                    self.params[p + 1].data(),
                    out_shape[0],
                    (kh, kw),
                    stride,
                )
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let p = self.param_index[i].unwrap();
                kernels::dense_forward(
                    x,
                    batch,
                    in_features,
                    out_features,
                    self.params[p].data(),
                    self.params[p + 1].data(),
                )
            }
            LayerSpec::Relu => x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            LayerSpec::GlobalAvgPool => {
                let plane = in_shape[1] * in_shape[2];
                // Shifted by the first element so a constant map averages to itself exactly.
                x.chunks_exact(plane)
                    .map(|c| c[0] + c.iter().map(|v| v - c[0]).sum::<f64>() / plane as f64)
                    .collect()
            }
            LayerSpec::Flatten => x.to_vec(),
        }
    }

    fn layer_backward(
        &self,
        i: usize,
        batch: usize,
        x: &[f64],
        g: &[f64],
        param_grads: &mut [Vec<f64>],
    ) -> Vec<f64> {
        let in_shape = &self.shapes[i];
        let out_shape = &self.shapes[i + 1];
        match self.layers[i] {
            LayerSpec::Conv2d {
                kernel: (kh, kw),
                stride,
                ..
            } => {
                let p = self.param_index[i].unwrap();
                let (dw, rest) = param_grads[p..].split_at_mut(1);
                kernels::conv2d_backward(
                    x,
                    g,
                    batch,
                    (in_shape[0], in_shape[1], in_shape[2]),
                    self.params[p].data(),
                    out_shape[0],
                    (kh, kw),
                    stride,
                    &mut dw[0],
                    &mut rest[0],
                )
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let p = self.param_index[i].unwrap();
                let (dw, rest) = param_grads[p..].split_at_mut(1);
                kernels::dense_backward(
                    x,
                    g,
                    batch,
                    in_features,
                    out_features,
                    self.params[p].data(),
                    &mut dw[0],
                    &mut rest[0],
                )
            }
            // Subgradient at exactly zero is taken as 0.
            LayerSpec::Relu => x
                .iter()
                .zip(g)
                .map(|(&xv, &gv)| if xv > 0.0 { gv } else { 0.0 })
                .collect(),
            LayerSpec::GlobalAvgPool => {
                let plane = in_shape[1] * in_shape[2];
                let scale = 1.0 / plane as f64;
                g.iter()
                    .flat_map(|&gv| std::iter::repeat_n(gv * scale, plane))
                    .collect()
            }
            LayerSpec::Flatten => g.to_vec(),
        }
    }
}
