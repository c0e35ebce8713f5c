//! Grayscale images with unit-interval intensities, pixel-domain MSE, and
//! binary PGM (P5) I/O.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A grayscale image stored as a flat row-major vector of intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

/// Intensity scale used when computing mean squared error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MseScale {
    /// Differences taken on the `[0, 1]` intensity scale.
    Unit,
    /// Differences multiplied by 255 first, matching 8-bit pixel error magnitudes.
    Byte255,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(
                "image dimensions must be positive".into(),
            ));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "expected {} pixels for {}x{}, got {}",
                width * height,
                width,
                height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "pixel intensities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)`; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Total pixel count `d = width * height`.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Snaps every intensity to the nearest 8-bit level, i.e. the value that a
    /// PGM write/read round trip would produce.
    pub fn quantized(&self) -> GrayImage {
        let pixels = self
            .pixels
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) / 255.0)
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Reads a binary (P5) PGM file with 8-bit samples.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_pgm_bytes(&bytes)
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = 0usize;
        let mut fields = Vec::with_capacity(4);
        // Header: magic, width, height, maxval; '#' starts a comment to end of line.
        while fields.len() < 4 {
            while cursor < bytes.len() && bytes[cursor].is_ascii_whitespace() {
                cursor += 1;
            }
            if cursor >= bytes.len() {
                return Err(Error::Format("truncated PGM header".into()));
            }
            if bytes[cursor] == b'#' {
                while cursor < bytes.len() && bytes[cursor] != b'\n' {
                    cursor += 1;
                }
                continue;
            }
            let start = cursor;
            while cursor < bytes.len() && !bytes[cursor].is_ascii_whitespace() {
                cursor += 1;
            }
            fields.push(&bytes[start..cursor]);
        }
        if fields[0] != b"P5" {
            return Err(Error::Format("not a binary PGM (expected magic P5)".into()));
        }
        let parse = |field: &[u8], name: &str| -> Result<usize> {
            std::str::from_utf8(field)
                .ok()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::Format(format!("invalid PGM {name}")))
        };
        let width = parse(fields[1], "width")?;
        let height = parse(fields[2], "height")?;
        let maxval = parse(fields[3], "maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Format(format!(
                "unsupported PGM maxval {maxval} (expected 1..=255)"
            )));
        }
        // Exactly one whitespace byte separates the header from raster data.
        cursor += 1;
        let expected = width * height;
        let raster = bytes
            .get(cursor..cursor + expected)
            .ok_or_else(|| Error::Format("truncated PGM raster".into()))?;
        let pixels = raster.iter().map(|&b| b as f64 / maxval as f64).collect();
        GrayImage::new(width, height, pixels)
    }

    /// Writes the image as binary PGM, rounding intensities to 8-bit levels.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.to_pgm_bytes())?;
        Ok(())
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.pixels
                .iter()
                .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
        );
        out
    }
}

/// Mean squared error between two images of identical dimensions.
pub fn mse(a: &GrayImage, b: &GrayImage, scale: MseScale) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let factor = match scale {
        MseScale::Unit => 1.0,
        MseScale::Byte255 => 255.0,
    };
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = factor * (x - y);
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Deterministic textured test image: overlapping sinusoids, a diagonal ramp,
/// and a hash-based grain so that no block is constant and there is enough
/// high-frequency energy for blur to reach large error levels.
pub fn synthetic_texture(width: usize, height: usize) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| {
        let xf = x as f64;
        let yf = y as f64;
        let waves = 0.26 * (xf * 0.55).sin() * (yf * 0.35).cos()
            + 0.18 * ((xf * 0.13) + (yf * 0.21)).sin()
            + 0.12 * (xf * 1.7 + yf * 0.9).sin();
        let ramp = 0.25 * (xf + yf) / (width + height) as f64;
        // Integer hash grain, uniform in [-0.5, 0.5).
        let mut h = (x as u64)
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add((y as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
        h ^= h >> 30;
        h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 27;
        let grain = (h as f64 / u64::MAX as f64 - 0.5) * 0.14;
        0.5 + waves + ramp + grain
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_identical_images_is_zero() {
        let img = synthetic_texture(8, 8);
        assert_eq!(mse(&img, &img, MseScale::Byte255).unwrap(), 0.0);
    }

    #[test]
    fn mse_byte_scale_matches_direct_sum() {
        let a = GrayImage::new(2, 1, vec![0.0, 0.0]).unwrap();
        let b = GrayImage::new(2, 1, vec![10.0 / 255.0, 20.0 / 255.0]).unwrap();
        // (10^2 + 20^2) / 2 = 250 on the byte scale.
        let got = mse(&a, &b, MseScale::Byte255).unwrap();
        assert!((got - 250.0).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn mse_is_symmetric() {
        let a = synthetic_texture(6, 5);
        let b = GrayImage::from_fn(6, 5, |x, y| 0.3 + 0.01 * (x as f64) + 0.02 * (y as f64));
        let ab = mse(&a, &b, MseScale::Unit).unwrap();
        let ba = mse(&b, &a, MseScale::Unit).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn mse_rejects_dimension_mismatch() {
        let a = synthetic_texture(4, 4);
        let b = synthetic_texture(4, 5);
        assert!(matches!(
            mse(&a, &b, MseScale::Unit),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn pgm_round_trip_is_exact_on_byte_grid() {
        let img = synthetic_texture(13, 7).quantized();
        let bytes = img.to_pgm_bytes();
        let back = GrayImage::from_pgm_bytes(&bytes).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pgm_parses_comments_in_header() {
        let mut bytes = b"P5\n# a comment\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 128, 255, 64]);
        let img = GrayImage::from_pgm_bytes(&bytes).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.get(1, 0), 128.0 / 255.0);
    }

    #[test]
    fn pgm_rejects_bad_magic_and_truncation() {
        assert!(GrayImage::from_pgm_bytes(b"P2\n2 2\n255\n0 0 0 0").is_err());
        assert!(GrayImage::from_pgm_bytes(b"P5\n4 4\n255\n\x00\x01").is_err());
    }

    #[test]
    fn new_rejects_out_of_range_intensities() {
        assert!(GrayImage::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(GrayImage::new(1, 2, vec![0.5, -0.1]).is_err());
    }

    #[test]
    fn texture_has_no_constant_blocks() {
        let img = synthetic_texture(64, 64);
        for by in 0..16 {
            for bx in 0..16 {
                let mut lo = f64::MAX;
                let mut hi = f64::MIN;
                for y in 0..4 {
                    for x in 0..4 {
                        let v = img.get(bx * 4 + x, by * 4 + y);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                assert!(hi - lo > 1e-6, "flat 4x4 tile at ({bx},{by})");
            }
        }
    }
}
