use crate::{Image, VisionError};

/// A {0, 1} mask; 1 marks a dark transition (edge) pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl BinaryImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn count_ones(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }
}

/// Central `size`×`size` window, no scaling. Odd margins put the extra
/// pixel on the right/bottom.
pub fn crop_center(img: &Image, size: usize) -> Result<Image, VisionError> {
    if img.width < size || img.height < size {
        return Err(VisionError::Size {
            width: img.width,
            height: img.height,
            min: size,
        });
    }
    let x0 = (img.width - size) / 2;
    let y0 = (img.height - size) / 2;
    let c = img.channels;
    let mut pixels = Vec::with_capacity(size * size * c);
    for y in y0..y0 + size {
        let row = (y * img.width + x0) * c;
        pixels.extend_from_slice(&img.pixels[row..row + size * c]);
    }
    Ok(Image {
        width: size,
        height: size,
        channels: c,
        pixels,
    })
}

/// ITU-R BT.601 luma.
pub fn to_grayscale(rgb: &Image) -> Result<Image, VisionError> {
    match rgb.channels {
        1 => Ok(rgb.clone()),
        3 => Ok(Image {
            width: rgb.width,
            height: rgb.height,
            channels: 1,
            pixels: rgb
                .pixels
                .chunks_exact(3)
                .map(|p| {
                    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) as f32
                })
                .collect(),
        }),
        n => Err(VisionError::Channels {
            expected: 3,
            found: n,
        }),
    }
}

/// Sampled 2-D Gaussian of odd side `k`, normalized to sum 1, row-major.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Vec<f64> {
    assert!(k % 2 == 1, "kernel side must be odd");
    let r = (k / 2) as i64;
    let mut w = Vec::with_capacity(k * k);
    for dy in -r..=r {
        for dx in -r..=r {
            w.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Correlate a single-channel image with a square kernel, replicating edge
/// pixels outside the frame.
fn filter_replicate(img: &Image, kernel: &[f64], k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, h - 1) as usize;
                let krow = ((dy + r) as usize) * k;
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w - 1) as usize;
                    acc += kernel[krow + (dx + r) as usize]
                        * img.pixels[sy * img.width + sx] as f64;
                }
            }
            out.push(acc);
        }
    }
    out
}

fn require_gray(img: &Image) -> Result<(), VisionError> {
    if img.channels != 1 {
        return Err(VisionError::Channels {
            expected: 1,
            found: img.channels,
        });
    }
    Ok(())
}

pub fn gaussian_blur(img: &Image, k: usize, sigma: f64) -> Result<Image, VisionError> {
    require_gray(img)?;
    let kernel = gaussian_kernel(k, sigma);
    Ok(Image {
        width: img.width,
        height: img.height,
        channels: 1,
        pixels: filter_replicate(img, &kernel, k)
            .into_iter()
            .map(|v| v as f32)
            .collect(),
    })
}

/// Gaussian-weighted local-mean threshold with inverted polarity: a pixel is
/// foreground when it is at least `c` below its neighbourhood mean.
pub fn adaptive_threshold(
    img: &Image,
    window: usize,
    sigma: f64,
    c: f64,
) -> Result<BinaryImage, VisionError> {
    require_gray(img)?;
    let kernel = gaussian_kernel(window, sigma);
    let means = filter_replicate(img, &kernel, window);
    Ok(BinaryImage {
        width: img.width,
        height: img.height,
        pixels: img
            .pixels
            .iter()
            .zip(means)
            .map(|(&v, t)| u8::from(v as f64 <= t - c))
            .collect(),
    })
}

/// Default σ for a Gaussian window of side `window` when none is given.
pub(crate) fn sigma_for_window(window: usize) -> f64 {
    0.3 * ((window as f64 - 1.0) / 2.0 - 1.0) + 0.8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_640x360_window() {
        let img = Image::from_fn(640, 360, 1, |x, y, _| (x + 1000 * y) as f32);
        let out = crop_center(&img, 128).unwrap();
        assert_eq!(out.get(0, 0, 0), (256 + 1000 * 116) as f32);
        assert_eq!(out.get(127, 127, 0), (383 + 1000 * 243) as f32);
    }

    #[test]
    fn crop_identity_and_too_small() {
        let img = Image::from_fn(128, 128, 3, |x, y, c| (x * 3 + y + c) as f32);
        assert_eq!(crop_center(&img, 128).unwrap(), img);
        let small = Image::new(100, 100, 1);
        assert!(matches!(
            crop_center(&small, 128),
            Err(VisionError::Size { width: 100, .. })
        ));
    }

    #[test]
    fn grayscale_weights() {
        let img = Image {
            width: 3,
            height: 1,
            channels: 3,
            pixels: vec![255.0, 255.0, 255.0, 0.0, 0.0, 0.0, 255.0, 0.0, 0.0],
        };
        let g = to_grayscale(&img).unwrap();
        assert!((g.pixels[0] - 255.0).abs() < 1e-4);
        assert_eq!(g.pixels[1], 0.0);
        assert!((g.pixels[2] - 76.245).abs() < 1e-4);
    }

    #[test]
    fn blur_kernel_center_sigma_seven() {
        let k = gaussian_kernel(3, 7.0);
        let expected = 1.0 / (1.0 + 4.0 * (-1.0f64 / 98.0).exp() + 4.0 * (-2.0f64 / 98.0).exp());
        assert!((k[4] - expected).abs() < 1e-15);
        assert!((k[4] - 0.112632).abs() < 5e-6);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blur_keeps_constant_image() {
        let img = Image::from_fn(9, 7, 1, |_, _, _| 42.0);
        let out = gaussian_blur(&img, 3, 7.0).unwrap();
        assert!(out.pixels.iter().all(|&v| (v - 42.0).abs() < 1e-4));
    }

    #[test]
    fn threshold_uniform_is_empty() {
        let img = Image::from_fn(20, 20, 1, |_, _, _| 100.0);
        let out = adaptive_threshold(&img, 11, 2.0, 2.0).unwrap();
        assert_eq!(out.count_ones(), 0);
        assert!(out.pixels.iter().all(|&p| p <= 1));
    }

    #[test]
    fn default_sigma_rule() {
        assert!((sigma_for_window(11) - 2.0).abs() < 1e-12);
    }
}
