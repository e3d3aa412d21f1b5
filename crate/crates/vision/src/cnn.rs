use std::fmt;

use crate::{Shape, Tensor, VisionError};

pub const NUM_CLASSES: usize = 6;

/// Square convolution kernel stored `[ky][kx][c_in][c_out]`, so the output
/// channel is the fastest-moving index in the inner loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub data: Vec<f32>,
}

impl ConvKernel {
    pub fn zeros(k: usize, c_in: usize, c_out: usize) -> Self {
        Self {
            k,
            c_in,
            c_out,
            data: vec![0.0; k * k * c_in * c_out],
        }
    }

    #[inline]
    pub fn index(&self, ky: usize, kx: usize, ci: usize, co: usize) -> usize {
        ((ky * self.k + kx) * self.c_in + ci) * self.c_out + co
    }

    #[inline]
    pub fn get(&self, ky: usize, kx: usize, ci: usize, co: usize) -> f32 {
        self.data[self.index(ky, kx, ci, co)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel: ConvKernel,
    pub bias: Vec<f32>,
}

/// Fully connected layer; `weights` is `inputs × outputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Stride-1 cross-correlation with zero padding that preserves the spatial
/// size. No activation is applied.
pub fn conv2d_same(
    input: &Tensor,
    kernel: &ConvKernel,
    bias: &[f32],
) -> Result<Tensor, VisionError> {
    if input.shape.c != kernel.c_in {
        return Err(VisionError::Shape {
            layer: 0,
            message: format!(
                "input has {} channels, kernel expects {}",
                input.shape.c, kernel.c_in
            ),
        });
    }
    if bias.len() != kernel.c_out {
        return Err(VisionError::Shape {
            layer: 0,
            message: format!("bias has {} entries, need {}", bias.len(), kernel.c_out),
        });
    }
    let Shape { h, w, c: c_in } = input.shape;
    let c_out = kernel.c_out;
    let r = (kernel.k / 2) as isize;
    let out_shape = Shape::new(h, w, c_out);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut acc = vec![0.0f32; c_out];
    for y in 0..h as isize {
        for x in 0..w as isize {
            acc.copy_from_slice(bias);
            for ky in 0..kernel.k {
                let iy = y + ky as isize - r;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel.k {
                    let ix = x + kx as isize - r;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let px = (iy as usize * w + ix as usize) * c_in;
                    let pixel = &input.data[px..px + c_in];
                    let wbase = kernel.index(ky, kx, 0, 0);
                    let taps = &kernel.data[wbase..wbase + c_in * c_out];
                    for (v, row) in pixel.iter().zip(taps.chunks_exact(c_out)) {
                        for (a, wt) in acc.iter_mut().zip(row) {
                            *a += v * wt;
                        }
                    }
                }
            }
            out.extend_from_slice(&acc);
        }
    }
    Ok(Tensor::from_vec(out_shape, out))
}

/// 2×2 max pooling with stride 2.
pub fn maxpool2(input: &Tensor) -> Result<Tensor, VisionError> {
    let Shape { h, w, c } = input.shape;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(VisionError::Shape {
            layer: 0,
            message: format!("max pooling needs even dimensions, got {}", input.shape),
        });
    }
    let out_shape = Shape::new(h / 2, w / 2, c);
    let mut out = Vec::with_capacity(out_shape.len());
    for y in 0..h / 2 {
        for x in 0..w / 2 {
            for ch in 0..c {
                let m = input
                    .at(2 * y, 2 * x, ch)
                    .max(input.at(2 * y, 2 * x + 1, ch))
                    .max(input.at(2 * y + 1, 2 * x, ch))
                    .max(input.at(2 * y + 1, 2 * x + 1, ch));
                out.push(m);
            }
        }
    }
    Ok(Tensor::from_vec(out_shape, out))
}

pub fn dense(input: &[f32], layer: &DenseLayer) -> Vec<f32> {
    let mut out = layer.bias.clone();
    for (x, row) in input.iter().zip(layer.weights.chunks_exact(layer.outputs)) {
        for (o, w) in out.iter_mut().zip(row) {
            *o += x * w;
        }
    }
    out
}

pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits.iter().map(|&z| ((z - max) as f64).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / sum) as f32).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv { k: usize, filters: usize },
    MaxPool,
    Dense { outputs: usize, softmax: bool },
}

impl LayerKind {
    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "Convolution",
            LayerKind::MaxPool => "Pooling",
            LayerKind::Dense { .. } => "Fully Connected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    /// 1-based position in the network.
    pub number: usize,
    pub kind: LayerKind,
}

/// One row of a shape audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeRow {
    pub number: usize,
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
    pub params: usize,
}

impl fmt::Display for ShapeRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>2}  {:<15}  {:<15} -> {:<15} params={}",
            self.number,
            self.kind.label(),
            self.input.to_string(),
            self.output.to_string(),
            self.params
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnnSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl CnnSpec {
    /// The 16-layer hand-gesture network: seven 3×3 ReLU convolutions
    /// doubling from 8 to 512 filters, each followed by 2×2 max pooling,
    /// then dense 512→128 (ReLU) and 128→6 (softmax).
    pub fn hand_gesture() -> Self {
        let mut layers = Vec::with_capacity(16);
        for filters in [8, 16, 32, 64, 128, 256, 512] {
            layers.push(LayerKind::Conv { k: 3, filters });
            layers.push(LayerKind::MaxPool);
        }
        layers.push(LayerKind::Dense {
            outputs: 128,
            softmax: false,
        });
        layers.push(LayerKind::Dense {
            outputs: NUM_CLASSES,
            softmax: true,
        });
        Self {
            input: Shape::new(128, 128, 1),
            layers: layers
                .into_iter()
                .enumerate()
                .map(|(i, kind)| LayerSpec {
                    number: i + 1,
                    kind,
                })
                .collect(),
        }
    }

    /// Propagate shapes through every layer without touching weights.
    pub fn shape_trace(&self) -> Result<Vec<ShapeRow>, VisionError> {
        let mut shape = self.input;
        let mut rows = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (output, params) = match layer.kind {
                LayerKind::Conv { k, filters } => (
                    Shape::new(shape.h, shape.w, filters),
                    k * k * shape.c * filters + filters,
                ),
                LayerKind::MaxPool => {
                    if !shape.h.is_multiple_of(2) || !shape.w.is_multiple_of(2) {
                        return Err(VisionError::Shape {
                            layer: layer.number,
                            message: format!("cannot pool odd shape {shape}"),
                        });
                    }
                    (Shape::new(shape.h / 2, shape.w / 2, shape.c), 0)
                }
                LayerKind::Dense { outputs, .. } => {
                    let inputs = shape.len();
                    (Shape::new(1, 1, outputs), inputs * outputs + outputs)
                }
            };
            rows.push(ShapeRow {
                number: layer.number,
                kind: layer.kind,
                input: shape,
                output,
                params,
            });
            shape = output;
        }
        Ok(rows)
    }

    pub fn param_count(&self) -> Result<usize, VisionError> {
        Ok(self.shape_trace()?.iter().map(|r| r.params).sum())
    }
}

/// Result of a forward pass: class probabilities plus the shape trace
/// actually executed.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub probs: Vec<f32>,
    pub trace: Vec<ShapeRow>,
}

impl Forward {
    /// Highest-probability class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}
