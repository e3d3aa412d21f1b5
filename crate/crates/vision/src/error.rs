use thiserror::Error;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("image is {width}x{height}, need at least {min}x{min}")]
    Size { width: usize, height: usize, min: usize },

    #[error("shape error at layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("bad PNM data at byte {offset}: {message}")]
    Pnm { offset: usize, message: String },

    #[error("weights file: expected {expected} floats, found {found}")]
    WeightCount { expected: usize, found: usize },

    #[error("weights file: bad magic {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("expected a {expected}-channel image, got {found}")]
    Channels { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
