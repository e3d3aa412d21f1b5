//! Hand-gesture vision pipeline: crop, grayscale, blur, adaptive threshold,
//! then a fixed 16-layer CNN that scores six hand states (zero to five
//! raised fingers).
//!
//! Everything here is a pure function of its inputs, so the pipeline can be
//! run on any thread and its results handed back as plain values.

mod cnn;
mod error;
mod image;
mod pipeline;
mod preprocess;
mod tensor;
mod weights;

pub use cnn::{
    conv2d_same, dense, maxpool2, softmax, CnnSpec, ConvKernel, ConvLayer, DenseLayer, Forward,
    LayerKind, LayerSpec, ShapeRow, NUM_CLASSES,
};
pub use error::VisionError;
pub use image::{read_pnm, read_pnm_file, write_pgm, write_ppm, Image};
pub use pipeline::{classify_hand, preprocess_hand, Classification, PreprocessConfig};
pub use preprocess::{
    adaptive_threshold, crop_center, gaussian_blur, gaussian_kernel, to_grayscale, BinaryImage,
};
pub use tensor::{Shape, Tensor};
pub use weights::{CnnWeights, WEIGHTS_MAGIC};
