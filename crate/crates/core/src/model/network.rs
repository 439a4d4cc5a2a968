//! A minimal sequential CNN with hand-written backpropagation.
//!
//! Layers are grouped into named stages; a stage whose first layer is a
//! convolution can serve as the explanation target, and its output (after
//! whatever activation/pooling the stage contains) is the activation stack.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// A `channels × height × width` feature tensor, row-major within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }
}

/// 2-D convolution, stride 1, square kernel, symmetric zero padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            padding,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h + 2 * self.padding + 1 - self.kernel, w + 2 * self.padding + 1 - self.kernel)
    }

    /// Valid output range along one axis for kernel offset `t`.
    fn span(&self, t: usize, n_in: usize, n_out: usize) -> Range<usize> {
        let shift = t as isize - self.padding as isize;
        let lo = (-shift).max(0) as usize;
        let hi = ((n_in as isize - shift).min(n_out as isize)).max(0) as usize;
        lo..hi.max(lo)
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let (oh, ow) = self.out_dims(x.height, x.width);
        let k = self.kernel;
        let mut out = Tensor::zeros(self.out_channels, oh, ow);
        for o in 0..self.out_channels {
            let dst = &mut out.data[o * oh * ow..(o + 1) * oh * ow];
            dst.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let src = &x.data[i * x.plane_len()..(i + 1) * x.plane_len()];
                for ky in 0..k {
                    let ys = self.span(ky, x.height, oh);
                    for kx in 0..k {
                        let wv = self.weight[((o * self.in_channels + i) * k + ky) * k + kx];
                        let xs = self.span(kx, x.width, ow);
                        for y in ys.clone() {
                            let sy = y + ky - self.padding;
                            let row = &src[sy * x.width..];
                            let drow = &mut dst[y * ow..(y + 1) * ow];
                            for xo in xs.clone() {
                                drow[xo] += wv * row[xo + kx - self.padding];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn backward(&self, x: &Tensor, g: &Tensor, grads: Option<(&mut [f64], &mut [f64])>) -> Tensor {
        let (oh, ow) = (g.height, g.width);
        let k = self.kernel;
        let mut gin = Tensor::zeros(x.channels, x.height, x.width);
        let mut grads = grads;
        for o in 0..self.out_channels {
            let go = &g.data[o * oh * ow..(o + 1) * oh * ow];
            if let Some((_, db)) = grads.as_mut() {
                db[o] += go.iter().sum::<f64>();
            }
            for i in 0..self.in_channels {
                let src = &x.data[i * x.plane_len()..(i + 1) * x.plane_len()];
                let gi = &mut gin.data[i * x.plane_len()..(i + 1) * x.plane_len()];
                for ky in 0..k {
                    let ys = self.span(ky, x.height, oh);
                    for kx in 0..k {
                        let widx = ((o * self.in_channels + i) * k + ky) * k + kx;
                        let wv = self.weight[widx];
                        let xs = self.span(kx, x.width, ow);
                        let mut dw = 0.0;
                        for y in ys.clone() {
                            let sy = y + ky - self.padding;
                            for xo in xs.clone() {
                                let sx = xo + kx - self.padding;
                                let gv = go[y * ow + xo];
                                gi[sy * x.width + sx] += wv * gv;
                                dw += gv * src[sy * x.width + sx];
                            }
                        }
                        if let Some((dwt, _)) = grads.as_mut() {
                            dwt[widx] += dw;
                        }
                    }
                }
            }
        }
        gin
    }
}

/// Fully connected layer over a flattened input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(self.outputs, 1, 1);
        for o in 0..self.outputs {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            out.data[o] = self.bias[o] + row.iter().zip(&x.data).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }

    fn backward(&self, x: &Tensor, g: &Tensor, grads: Option<(&mut [f64], &mut [f64])>) -> Tensor {
        let mut gin = Tensor { data: vec![0.0; x.data.len()], ..x.clone() };
        for o in 0..self.outputs {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            for (gi, w) in gin.data.iter_mut().zip(row) {
                *gi += w * g.data[o];
            }
        }
        if let Some((dw, db)) = grads {
            for o in 0..self.outputs {
                db[o] += g.data[o];
                for (d, v) in dw[o * self.inputs..(o + 1) * self.inputs].iter_mut().zip(&x.data) {
                    *d += g.data[o] * v;
                }
            }
        }
        gin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    /// 2×2 max pooling with stride 2 (odd trailing rows/columns dropped).
    MaxPool2,
    /// Spatial mean per channel; output is `channels × 1 × 1`.
    GlobalAvgPool,
    Linear(Linear),
}

impl Layer {
    fn forward(&self, x: &Tensor) -> Tensor {
        match self {
            Layer::Conv2d(c) => c.forward(x),
            Layer::Relu => Tensor { data: x.data.iter().map(|&v| v.max(0.0)).collect(), ..x.clone() },
            Layer::MaxPool2 => {
                let (oh, ow) = (x.height / 2, x.width / 2);
                let mut out = Tensor::zeros(x.channels, oh, ow);
                for c in 0..x.channels {
                    let src = &x.data[c * x.plane_len()..];
                    for y in 0..oh {
                        for xo in 0..ow {
                            let (i, _) = pool_argmax(src, x.width, y, xo);
                            out.data[(c * oh + y) * ow + xo] = src[i];
                        }
                    }
                }
                out
            }
            Layer::GlobalAvgPool => {
                let n = x.plane_len() as f64;
                let data = x.data.chunks(x.plane_len()).map(|p| p.iter().sum::<f64>() / n).collect();
                Tensor { channels: x.channels, height: 1, width: 1, data }
            }
            Layer::Linear(l) => l.forward(x),
        }
    }

    fn backward(&self, x: &Tensor, g: &Tensor, grads: Option<(&mut [f64], &mut [f64])>) -> Tensor {
        match self {
            Layer::Conv2d(c) => c.backward(x, g, grads),
            Layer::Relu => Tensor {
                data: x.data.iter().zip(&g.data).map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 }).collect(),
                ..x.clone()
            },
            Layer::MaxPool2 => {
                let mut gin = Tensor::zeros(x.channels, x.height, x.width);
                for c in 0..x.channels {
                    let off = c * x.plane_len();
                    for y in 0..g.height {
                        for xo in 0..g.width {
                            let (i, _) = pool_argmax(&x.data[off..], x.width, y, xo);
                            gin.data[off + i] += g.data[(c * g.height + y) * g.width + xo];
                        }
                    }
                }
                gin
            }
            Layer::GlobalAvgPool => {
                let n = x.plane_len();
                let mut gin = Tensor::zeros(x.channels, x.height, x.width);
                for c in 0..x.channels {
                    let v = g.data[c] / n as f64;
                    gin.data[c * n..(c + 1) * n].fill(v);
                }
                gin
            }
            Layer::Linear(l) => l.backward(x, g, grads),
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(_) | Layer::Linear(_) => 2,
            _ => 0,
        }
    }

    fn params(&self) -> Vec<&Vec<f64>> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => vec![],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => vec![],
        }
    }
}

/// Flat index (within the plane) of the max of a 2×2 window; first wins ties.
fn pool_argmax(plane: &[f64], width: usize, y: usize, x: usize) -> (usize, f64) {
    let mut best = (2 * y) * width + 2 * x;
    for i in [best + 1, best + width, best + width + 1] {
        if plane[i] > plane[best] {
            best = i;
        }
    }
    (best, plane[best])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub layers: Vec<Layer>,
}

impl Stage {
    pub fn is_convolutional(&self) -> bool {
        matches!(self.layers.first(), Some(Layer::Conv2d(_)))
    }
}

/// Intermediate inputs recorded during a traced forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    start_stage: usize,
    inputs: Vec<Vec<Tensor>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub stages: Vec<Stage>,
}

impl Network {
    pub fn stage_index(&self, name: &str) -> Option<usize> {
        self.stages.iter().position(|s| s.name == name)
    }

    pub fn forward_range(&self, x: Tensor, stages: Range<usize>) -> Tensor {
        let mut x = x;
        for stage in &self.stages[stages] {
            for layer in &stage.layers {
                x = layer.forward(&x);
            }
        }
        x
    }

    pub fn forward_range_traced(&self, x: Tensor, stages: Range<usize>) -> (Tensor, Trace) {
        let mut trace = Trace { start_stage: stages.start, inputs: Vec::new() };
        let mut x = x;
        for stage in &self.stages[stages] {
            let mut inputs = Vec::with_capacity(stage.layers.len());
            for layer in &stage.layers {
                let y = layer.forward(&x);
                inputs.push(std::mem::replace(&mut x, y));
            }
            trace.inputs.push(inputs);
        }
        (x, trace)
    }

    /// Propagates `grad` (w.r.t. the traced output) back to the traced input.
    /// When `param_grads` is given, parameter gradients are accumulated into
    /// it using the ordering of [`Network::params`].
    pub fn backward(&self, trace: &Trace, grad: Tensor, mut param_grads: Option<&mut [Vec<f64>]>) -> Tensor {
        let mut g = grad;
        let slots = self.param_slots();
        for (offset, inputs) in trace.inputs.iter().enumerate().rev() {
            let s = trace.start_stage + offset;
            for (l, layer) in self.stages[s].layers.iter().enumerate().rev() {
                let pg = match (param_grads.as_deref_mut(), layer.param_count()) {
                    (Some(all), 2) => {
                        let slot = slots[s][l];
                        let (a, b) = all[slot..slot + 2].split_at_mut(1);
                        Some((a[0].as_mut_slice(), b[0].as_mut_slice()))
                    }
                    _ => None,
                };
                g = layer.backward(&inputs[l], &g, pg);
            }
        }
        g
    }

    fn param_slots(&self) -> Vec<Vec<usize>> {
        let mut next = 0;
        self.stages
            .iter()
            .map(|s| {
                s.layers
                    .iter()
                    .map(|l| {
                        let slot = next;
                        next += l.param_count();
                        slot
                    })
                    .collect()
            })
            .collect()
    }

    /// All parameter tensors in a fixed order (per layer: weight, bias).
    pub fn params(&self) -> Vec<&Vec<f64>> {
        self.stages.iter().flat_map(|s| s.layers.iter()).flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.stages.iter_mut().flat_map(|s| s.layers.iter_mut()).flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }
}
