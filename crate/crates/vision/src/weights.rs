use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnn::{conv2d_same, dense, maxpool2, softmax};
use crate::{
    CnnSpec, ConvKernel, ConvLayer, DenseLayer, Forward, LayerKind, Tensor, VisionError,
};

/// Leading bytes of a weights file.
pub const WEIGHTS_MAGIC: &[u8; 8] = b"VESTCNN1";

#[derive(Debug, Clone, PartialEq)]
enum LayerParams {
    Conv(ConvLayer),
    Pool,
    Dense(DenseLayer),
}

/// Parameters for every layer of a [`CnnSpec`].
///
/// On disk: the magic, then little-endian `f32`s layer by layer. A
/// convolution stores its kernel with the output channel slowest
/// (`[c_out][ky][kx][c_in]`) followed by `c_out` biases; a dense layer
/// stores its `inputs × outputs` matrix row-major followed by `outputs`
/// biases. Pooling layers store nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnWeights {
    spec: CnnSpec,
    layers: Vec<LayerParams>,
}

impl CnnWeights {
    /// He-uniform initialization from a fixed seed, zero biases.
    pub fn seeded(spec: CnnSpec, seed: u64) -> Result<Self, VisionError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = spec.shape_trace()?;
        let layers = trace
            .iter()
            .map(|row| match row.kind {
                LayerKind::Conv { k, filters } => {
                    let c_in = row.input.c;
                    let limit = (6.0 / (k * k * c_in) as f32).sqrt();
                    let mut kernel = ConvKernel::zeros(k, c_in, filters);
                    kernel
                        .data
                        .iter_mut()
                        .for_each(|w| *w = rng.random_range(-limit..limit));
                    LayerParams::Conv(ConvLayer {
                        kernel,
                        bias: vec![0.0; filters],
                    })
                }
                LayerKind::MaxPool => LayerParams::Pool,
                LayerKind::Dense { outputs, .. } => {
                    let inputs = row.input.len();
                    let limit = (6.0 / inputs as f32).sqrt();
                    LayerParams::Dense(DenseLayer {
                        inputs,
                        outputs,
                        weights: (0..inputs * outputs)
                            .map(|_| rng.random_range(-limit..limit))
                            .collect(),
                        bias: vec![0.0; outputs],
                    })
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &CnnSpec {
        &self.spec
    }

    /// Mutable access to a dense layer by its 1-based layer number.
    pub fn dense_mut(&mut self, number: usize) -> Option<&mut DenseLayer> {
        match self.layers.get_mut(number.checked_sub(1)?) {
            Some(LayerParams::Dense(d)) => Some(d),
            _ => None,
        }
    }

    pub fn conv_mut(&mut self, number: usize) -> Option<&mut ConvLayer> {
        match self.layers.get_mut(number.checked_sub(1)?) {
            Some(LayerParams::Conv(c)) => Some(c),
            _ => None,
        }
    }

    pub fn from_bytes(spec: CnnSpec, bytes: &[u8]) -> Result<Self, VisionError> {
        if bytes.len() < WEIGHTS_MAGIC.len() || &bytes[..8] != WEIGHTS_MAGIC {
            return Err(VisionError::BadMagic {
                found: bytes[..bytes.len().min(8)].to_vec(),
            });
        }
        let body = &bytes[8..];
        let expected = spec.param_count()?;
        let found = body.len() / 4;
        if found != expected || !body.len().is_multiple_of(4) {
            return Err(VisionError::WeightCount { expected, found });
        }
        let mut floats = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };

        let trace = spec.shape_trace()?;
        let mut layers = Vec::with_capacity(trace.len());
        for row in &trace {
            layers.push(match row.kind {
                LayerKind::Conv { k, filters } => {
                    let c_in = row.input.c;
                    let stored = take(k * k * c_in * filters);
                    let mut kernel = ConvKernel::zeros(k, c_in, filters);
                    let mut it = stored.into_iter();
                    for co in 0..filters {
                        for ky in 0..k {
                            for kx in 0..k {
                                for ci in 0..c_in {
                                    let idx = kernel.index(ky, kx, ci, co);
                                    kernel.data[idx] = it.next().unwrap_or_default();
                                }
                            }
                        }
                    }
                    LayerParams::Conv(ConvLayer {
                        kernel,
                        bias: take(filters),
                    })
                }
                LayerKind::MaxPool => LayerParams::Pool,
                LayerKind::Dense { outputs, .. } => {
                    let inputs = row.input.len();
                    LayerParams::Dense(DenseLayer {
                        inputs,
                        outputs,
                        weights: take(inputs * outputs),
                        bias: take(outputs),
                    })
                }
            });
        }
        Ok(Self { spec, layers })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = WEIGHTS_MAGIC.to_vec();
        let mut put = |v: f32| out.extend_from_slice(&v.to_le_bytes());
        for layer in &self.layers {
            match layer {
                LayerParams::Conv(c) => {
                    let k = &c.kernel;
                    for co in 0..k.c_out {
                        for ky in 0..k.k {
                            for kx in 0..k.k {
                                for ci in 0..k.c_in {
                                    put(k.get(ky, kx, ci, co));
                                }
                            }
                        }
                    }
                    c.bias.iter().for_each(|&b| put(b));
                }
                LayerParams::Pool => {}
                LayerParams::Dense(d) => {
                    d.weights.iter().for_each(|&w| put(w));
                    d.bias.iter().for_each(|&b| put(b));
                }
            }
        }
        out
    }

    pub fn load(spec: CnnSpec, path: &Path) -> Result<Self, VisionError> {
        Self::from_bytes(spec, &std::fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), VisionError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Run the network on one input tensor.
    pub fn forward(&self, input: &Tensor) -> Result<Forward, VisionError> {
        if input.shape != self.spec.input {
            return Err(VisionError::Shape {
                layer: 1,
                message: format!("input is {}, network expects {}", input.shape, self.spec.input),
            });
        }
        let expected = self.spec.shape_trace()?;
        let mut x = input.clone();
        let mut probs = Vec::new();
        let mut trace = Vec::with_capacity(expected.len());
        for (row, params) in expected.iter().zip(&self.layers) {
            let shape_err = |message: String| VisionError::Shape {
                layer: row.number,
                message,
            };
            let input_shape = x.shape;
            match (row.kind, params) {
                (LayerKind::Conv { k, filters }, LayerParams::Conv(c)) => {
                    if c.kernel.k != k || c.kernel.c_out != filters || c.kernel.c_in != x.shape.c {
                        return Err(shape_err(format!(
                            "kernel {}x{}x{}x{} does not fit {} with {filters} filters",
                            c.kernel.k, c.kernel.k, c.kernel.c_in, c.kernel.c_out, x.shape
                        )));
                    }
                    x = conv2d_same(&x, &c.kernel, &c.bias).map_err(|e| match e {
                        VisionError::Shape { message, .. } => shape_err(message),
                        other => other,
                    })?;
                    x.relu_in_place();
                }
                (LayerKind::MaxPool, LayerParams::Pool) => {
                    x = maxpool2(&x).map_err(|e| match e {
                        VisionError::Shape { message, .. } => shape_err(message),
                        other => other,
                    })?;
                }
                (LayerKind::Dense { outputs, softmax: last }, LayerParams::Dense(d)) => {
                    if d.inputs != x.data.len()
                        || d.outputs != outputs
                        || d.weights.len() != d.inputs * d.outputs
                        || d.bias.len() != d.outputs
                    {
                        return Err(shape_err(format!(
                            "dense {}x{} does not fit flattened input of {}",
                            d.inputs,
                            d.outputs,
                            x.data.len()
                        )));
                    }
                    let mut out = dense(&x.data, d);
                    if last {
                        out = softmax(&out);
                        probs = out.clone();
                    } else {
                        out.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                    x = Tensor::from_vec(crate::Shape::new(1, 1, outputs), out);
                }
                _ => return Err(shape_err("parameters do not match layer kind".into())),
            }
            if x.shape != row.output {
                return Err(shape_err(format!(
                    "produced {}, expected {}",
                    x.shape, row.output
                )));
            }
            trace.push(super::ShapeRow {
                input: input_shape,
                ..row.clone()
            });
        }
        if probs.is_empty() {
            probs = x.data;
        }
        Ok(Forward { probs, trace })
    }
}
