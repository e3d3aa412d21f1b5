use crate::preprocess::sigma_for_window;
use crate::{
    adaptive_threshold, crop_center, gaussian_blur, to_grayscale, BinaryImage, CnnWeights, Image,
    Shape, ShapeRow, Tensor, VisionError,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub crop: usize,
    pub blur_window: usize,
    pub blur_sigma: f64,
    pub threshold_window: usize,
    /// `None` derives σ from the window size (2.0 for 11×11).
    pub threshold_sigma: Option<f64>,
    pub threshold_c: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            crop: 128,
            blur_window: 3,
            blur_sigma: 7.0,
            threshold_window: 11,
            threshold_sigma: None,
            threshold_c: 2.0,
        }
    }
}

/// crop → grayscale → blur → adaptive threshold.
pub fn preprocess_hand(raw: &Image, cfg: &PreprocessConfig) -> Result<BinaryImage, VisionError> {
    let cropped = crop_center(raw, cfg.crop)?;
    let gray = to_grayscale(&cropped)?;
    let blurred = gaussian_blur(&gray, cfg.blur_window, cfg.blur_sigma)?;
    let sigma = cfg
        .threshold_sigma
        .unwrap_or_else(|| sigma_for_window(cfg.threshold_window));
    adaptive_threshold(&blurred, cfg.threshold_window, sigma, cfg.threshold_c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class: usize,
    pub probs: Vec<f32>,
    pub trace: Vec<ShapeRow>,
}

pub fn classify_hand(
    raw: &Image,
    weights: &CnnWeights,
    cfg: &PreprocessConfig,
) -> Result<Classification, VisionError> {
    let mask = preprocess_hand(raw, cfg)?;
    let input = Tensor::from_vec(
        Shape::new(mask.height, mask.width, 1),
        mask.pixels.iter().map(|&p| p as f32).collect(),
    );
    let out = weights.forward(&input)?;
    Ok(Classification {
        class: out.argmax(),
        probs: out.probs,
        trace: out.trace,
    })
}
