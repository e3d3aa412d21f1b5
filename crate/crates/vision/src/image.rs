use std::io::Write;
use std::path::Path;

use crate::VisionError;

/// Row-major image with interleaved channels. Grayscale values live in
/// `[0, 255]`; the pipeline keeps them as floats between stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            pixels: vec![0.0; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut pixels = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            pixels,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Quantize to 8-bit with rounding and clamping.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Parse a binary PGM (`P5`) or PPM (`P6`) with maxval up to 255.
pub fn read_pnm(bytes: &[u8]) -> Result<Image, VisionError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token()?;
    let channels = match magic.as_slice() {
        b"P5" => 1,
        b"P6" => 3,
        _ => {
            return Err(VisionError::Pnm {
                offset: 0,
                message: format!("expected P5 or P6, found {:?}", String::from_utf8_lossy(&magic)),
            })
        }
    };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(VisionError::Pnm {
            offset: cur.pos,
            message: format!("unsupported maxval {maxval}"),
        });
    }
    // exactly one whitespace byte separates the header from the raster
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(VisionError::Pnm {
            offset: cur.pos,
            message: "missing whitespace after header".into(),
        });
    }
    let start = cur.pos + 1;
    let need = width * height * channels;
    let have = bytes.len().saturating_sub(start);
    if have < need {
        return Err(VisionError::Pnm {
            offset: bytes.len(),
            message: format!("raster truncated: need {need} bytes, found {have}"),
        });
    }
    let scale = 255.0 / maxval as f32;
    let pixels = bytes[start..start + need]
        .iter()
        .map(|&b| b as f32 * scale)
        .collect();
    Ok(Image {
        width,
        height,
        channels,
        pixels,
    })
}

pub fn read_pnm_file(path: &Path) -> Result<Image, VisionError> {
    read_pnm(&std::fs::read(path)?)
}

fn write_pnm(path: &Path, img: &Image, magic: &str) -> Result<(), VisionError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "{magic}\n{} {}\n255\n", img.width, img.height)?;
    f.write_all(&img.to_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn write_pgm(path: &Path, img: &Image) -> Result<(), VisionError> {
    if img.channels != 1 {
        return Err(VisionError::Channels {
            expected: 1,
            found: img.channels,
        });
    }
    write_pnm(path, img, "P5")
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<(), VisionError> {
    if img.channels != 3 {
        return Err(VisionError::Channels {
            expected: 3,
            found: img.channels,
        });
    }
    write_pnm(path, img, "P6")
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<Vec<u8>, VisionError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(VisionError::Pnm {
                offset: start,
                message: "unexpected end of header".into(),
            });
        }
        Ok(self.bytes[start..self.pos].to_vec())
    }

    fn number(&mut self, what: &str) -> Result<usize, VisionError> {
        self.skip_space_and_comments();
        let offset = self.pos;
        let tok = self.token()?;
        std::str::from_utf8(&tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| VisionError::Pnm {
                offset,
                message: format!("invalid {what} {:?}", String::from_utf8_lossy(&tok)),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let img = Image::from_fn(5, 3, 1, |x, y, _| (x * 10 + y) as f32);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_pgm(&p, &img).unwrap();
        assert_eq!(read_pnm_file(&p).unwrap(), img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut data = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        data.extend([7, 9]);
        let img = read_pnm(&data).unwrap();
        assert_eq!(img.pixels, vec![7.0, 9.0]);
    }

    #[test]
    fn truncated_raster_names_offset() {
        let mut data = b"P6 2 2 255\n".to_vec();
        data.extend([0u8; 5]);
        match read_pnm(&data) {
            Err(VisionError::Pnm { offset, message }) => {
                assert_eq!(offset, data.len());
                assert!(message.contains("need 12"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_bad_width() {
        assert!(matches!(
            read_pnm(b"P2 1 1 255\n0"),
            Err(VisionError::Pnm { offset: 0, .. })
        ));
        assert!(matches!(
            read_pnm(b"P5 x 1 255\n0"),
            Err(VisionError::Pnm { offset: 3, .. })
        ));
    }
}
