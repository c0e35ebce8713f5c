//! Synthetic distortion corpus: six distortion families applied to a base
//! image, each calibrated by bisection so the distorted image lands on a
//! prescribed byte-scale MSE level (the iso-error setting).
//!
//! All stochastic kinds freeze one noise realization per seed, which makes
//! the error level a deterministic, monotone function of strength and lets
//! bisection converge.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{mse, GrayImage, MseScale};

/// Distortion families; the discriminants are the class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    Original = 0,
    ContrastStretch = 1,
    GaussianNoise = 2,
    LuminanceEnhance = 3,
    GaussianBlur = 4,
    SaltPepper = 5,
    JpegLike = 6,
}

impl DistortionKind {
    pub const ALL_DISTORTIONS: [DistortionKind; 6] = [
        DistortionKind::ContrastStretch,
        DistortionKind::GaussianNoise,
        DistortionKind::LuminanceEnhance,
        DistortionKind::GaussianBlur,
        DistortionKind::SaltPepper,
        DistortionKind::JpegLike,
    ];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::Original => "original",
            DistortionKind::ContrastStretch => "contrast_stretch",
            DistortionKind::GaussianNoise => "gaussian_noise",
            DistortionKind::LuminanceEnhance => "luminance_enhance",
            DistortionKind::GaussianBlur => "gaussian_blur",
            DistortionKind::SaltPepper => "salt_pepper",
            DistortionKind::JpegLike => "jpeg_like",
        }
    }

    pub fn from_label(label: u8) -> Result<Self> {
        Ok(match label {
            0 => DistortionKind::Original,
            1 => DistortionKind::ContrastStretch,
            2 => DistortionKind::GaussianNoise,
            3 => DistortionKind::LuminanceEnhance,
            4 => DistortionKind::GaussianBlur,
            5 => DistortionKind::SaltPepper,
            6 => DistortionKind::JpegLike,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown distortion label {other}"
                )))
            }
        })
    }
}

/// A fully specified distortion: kind, kind-specific strength, and the seed
/// fixing the noise realization for stochastic kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    /// Stretch gain minus one, noise sigma, luminance offset, blur sigma in
    /// pixels, flip fraction, or quantization scale, depending on `kind`.
    pub strength: f64,
    pub seed: u64,
}

/// Applies a distortion. Deterministic given `(image, spec)`; output clamped
/// to `[0, 1]`. Zero strength reproduces the input exactly.
pub fn apply(image: &GrayImage, spec: &DistortionSpec) -> Result<GrayImage> {
    if spec.strength < 0.0 || !spec.strength.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "distortion strength must be nonnegative, got {}",
            spec.strength
        )));
    }
    if spec.strength == 0.0 || spec.kind == DistortionKind::Original {
        return Ok(image.clone());
    }
    let s = spec.strength;
    Ok(match spec.kind {
        DistortionKind::Original => unreachable!(),
        DistortionKind::ContrastStretch => {
            map_pixels(image, |v| (1.0 + s) * (v - 0.5) + 0.5)
        }
        DistortionKind::LuminanceEnhance => map_pixels(image, |v| v + s),
        DistortionKind::GaussianNoise => {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            let noise: Vec<f64> = (0..image.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut i = 0;
            map_pixels(image, |v| {
                let out = v + s * noise[i];
                i += 1;
                out
            })
        }
        DistortionKind::SaltPepper => {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            let field: Vec<(f64, bool)> = (0..image.len())
                .map(|_| (rng.random::<f64>(), rng.random::<bool>()))
                .collect();
            let mut i = 0;
            map_pixels(image, |v| {
                let (u, salt) = field[i];
                i += 1;
                if u < s {
                    if salt {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    v
                }
            })
        }
        DistortionKind::GaussianBlur => gaussian_blur(image, s),
        DistortionKind::JpegLike => jpeg_like(image, s),
    })
}

fn map_pixels(image: &GrayImage, mut f: impl FnMut(f64) -> f64) -> GrayImage {
    GrayImage::from_fn(image.width(), image.height(), |x, y| f(image.get(x, y)))
}

/// Mirror index for symmetric border reflection (edge pixel included).
fn reflect(i: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= len {
            i = 2 * len - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn gaussian_blur(image: &GrayImage, sigma: f64) -> GrayImage {
    let radius = (3.0 * sigma).ceil() as isize;
    if radius == 0 {
        return image.clone();
    }
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for i in -radius..=radius {
        kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (w, h) = (image.width(), image.height());
    // Horizontal pass.
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + ki as isize - radius, w);
                acc += k * image.get(sx, y);
            }
            tmp[y * w + x] = acc;
        }
    }
    // Vertical pass.
    GrayImage::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (ki, k) in kernel.iter().enumerate() {
            let sy = reflect(y as isize + ki as isize - radius, h);
            acc += k * tmp[sy * w + x];
        }
        acc
    })
}

/// Standard 8x8 luminance quantization table.
const LUMA_TABLE: [[f64; 8]; 8] = [
    [16.0, 11.0, 10.0, 16.0, 24.0, 40.0, 51.0, 61.0],
    [12.0, 12.0, 14.0, 19.0, 26.0, 58.0, 60.0, 55.0],
    [14.0, 13.0, 16.0, 24.0, 40.0, 57.0, 69.0, 56.0],
    [14.0, 17.0, 22.0, 29.0, 51.0, 87.0, 80.0, 62.0],
    [18.0, 22.0, 37.0, 56.0, 68.0, 109.0, 103.0, 77.0],
    [24.0, 35.0, 55.0, 64.0, 81.0, 104.0, 113.0, 92.0],
    [49.0, 64.0, 78.0, 87.0, 103.0, 121.0, 120.0, 101.0],
    [72.0, 92.0, 95.0, 98.0, 112.0, 100.0, 103.0, 99.0],
];

/// Orthonormal 8-point DCT-II basis matrix.
fn dct8_matrix() -> [[f64; 8]; 8] {
    let mut c = [[0.0; 8]; 8];
    for (u, row) in c.iter_mut().enumerate() {
        let alpha = if u == 0 {
            (1.0f64 / 8.0).sqrt()
        } else {
            (2.0f64 / 8.0).sqrt()
        };
        for (i, entry) in row.iter_mut().enumerate() {
            *entry = alpha * (((2 * i + 1) as f64) * (u as f64) * std::f64::consts::PI / 16.0).cos();
        }
    }
    c
}

/// Blocking/quantization artifacts: per 8x8 tile, forward DCT, quantization
/// by the luminance table scaled by `strength`, inverse DCT. Images whose
/// sides are not multiples of 8 are padded by edge replication and cropped
/// back.
fn jpeg_like(image: &GrayImage, strength: f64) -> GrayImage {
    let (w, h) = (image.width(), image.height());
    let pw = w.div_ceil(8) * 8;
    let ph = h.div_ceil(8) * 8;
    let dct = dct8_matrix();
    let mut out = vec![0.0; pw * ph];
    let sample = |x: usize, y: usize| image.get(x.min(w - 1), y.min(h - 1));
    for ty in (0..ph).step_by(8) {
        for tx in (0..pw).step_by(8) {
            // Level-shifted tile.
            let mut tile = [[0.0f64; 8]; 8];
            for (r, row) in tile.iter_mut().enumerate() {
                for (c, entry) in row.iter_mut().enumerate() {
                    *entry = sample(tx + c, ty + r) - 0.5;
                }
            }
            // Forward: C T C'.
            let mut coef = [[0.0f64; 8]; 8];
            for u in 0..8 {
                for v in 0..8 {
                    let mut acc = 0.0;
                    for r in 0..8 {
                        for c in 0..8 {
                            acc += dct[u][r] * tile[r][c] * dct[v][c];
                        }
                    }
                    coef[u][v] = acc;
                }
            }
            for (u, row) in coef.iter_mut().enumerate() {
                for (v, entry) in row.iter_mut().enumerate() {
                    let step = strength * LUMA_TABLE[u][v] / 255.0;
                    if step > 0.0 {
                        *entry = (*entry / step).round() * step;
                    }
                }
            }
            // Inverse: C' coef C.
            for r in 0..8 {
                for c in 0..8 {
                    let mut acc = 0.0;
                    for u in 0..8 {
                        for v in 0..8 {
                            acc += dct[u][r] * coef[u][v] * dct[v][c];
                        }
                    }
                    if ty + r < ph && tx + c < pw {
                        out[(ty + r) * pw + tx + c] = acc + 0.5;
                    }
                }
            }
        }
    }
    GrayImage::from_fn(w, h, |x, y| out[y * pw + x])
}

/// Relative tolerance of the calibration (±1% of the target MSE).
pub const CALIBRATION_TOL: f64 = 0.01;

const MAX_BISECTION_STEPS: usize = 100;

fn strength_bounds(kind: DistortionKind, image: &GrayImage) -> (f64, f64) {
    match kind {
        DistortionKind::Original => (0.0, 0.0),
        DistortionKind::ContrastStretch => (0.5, 1e4),
        DistortionKind::GaussianNoise => (0.05, 8.0),
        DistortionKind::LuminanceEnhance => (0.05, 4.0),
        DistortionKind::GaussianBlur => (1.0, image.width().max(image.height()) as f64),
        DistortionKind::SaltPepper => (0.05, 1.0),
        DistortionKind::JpegLike => (0.5, 1e4),
    }
}

/// Bisection on strength against an arbitrary error measure of the distorted
/// image; used with the plain byte-scale MSE and with its quantized variant.
fn calibrate_with(
    image: &GrayImage,
    kind: DistortionKind,
    target_mse: f64,
    seed: u64,
    measure: &dyn Fn(&GrayImage) -> Result<f64>,
) -> Result<DistortionSpec> {
    if kind == DistortionKind::Original {
        return Err(Error::InvalidParameter(
            "cannot calibrate the identity distortion".into(),
        ));
    }
    if target_mse < 0.0 || !target_mse.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "target MSE must be nonnegative, got {target_mse}"
        )));
    }
    if target_mse == 0.0 {
        return Ok(DistortionSpec {
            kind,
            strength: 0.0,
            seed,
        });
    }
    let eval = |strength: f64| -> Result<f64> {
        let spec = DistortionSpec {
            kind,
            strength,
            seed,
        };
        measure(&apply(image, &spec)?)
    };
    let (initial, max_strength) = strength_bounds(kind, image);
    let mut hi = initial.min(max_strength);
    let mut f_hi = eval(hi)?;
    while f_hi < target_mse && hi < max_strength {
        hi = (hi * 2.0).min(max_strength);
        f_hi = eval(hi)?;
    }
    if f_hi < target_mse * (1.0 - CALIBRATION_TOL) {
        return Err(Error::Calibration {
            kind: kind.name(),
            target: target_mse,
            achievable: f_hi,
        });
    }
    let mut lo = 0.0;
    let mut best = (hi, f_hi);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let f_mid = eval(mid)?;
        if (f_mid - target_mse).abs() < (best.1 - target_mse).abs() {
            best = (mid, f_mid);
        }
        if (f_mid - target_mse).abs() <= CALIBRATION_TOL * target_mse {
            return Ok(DistortionSpec {
                kind,
                strength: mid,
                seed,
            });
        }
        if f_mid < target_mse {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target_mse).abs() <= CALIBRATION_TOL * target_mse {
        return Ok(DistortionSpec {
            kind,
            strength: best.0,
            seed,
        });
    }
    Err(Error::Calibration {
        kind: kind.name(),
        target: target_mse,
        achievable: best.1,
    })
}

/// Finds a strength whose distortion of `image` has byte-scale MSE within
/// ±1% of `target_mse`. Stochastic kinds use the noise realization fixed by
/// `seed` throughout.
pub fn calibrate_to_mse(
    image: &GrayImage,
    kind: DistortionKind,
    target_mse: f64,
    seed: u64,
) -> Result<DistortionSpec> {
    calibrate_with(image, kind, target_mse, seed, &|distorted| {
        mse(image, distorted, MseScale::Byte255)
    })
}

/// One synthesized image with its provenance.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub name: String,
    pub image: GrayImage,
    pub label: u8,
    pub target_mse: f64,
    pub achieved_mse: f64,
    pub spec: DistortionSpec,
}

/// Manifest entry persisted next to the PGM files.
///
/// `achieved_mse` is the calibrated value on continuous intensities;
/// `stored_mse` is what the 8-bit files on disk measure (quantization can
/// move a flat luminance shift to the nearest whole-byte offset).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: u8,
    pub target_mse: f64,
    pub achieved_mse: f64,
    pub stored_mse: f64,
    pub spec: DistortionSpec,
}

fn derive_seed(master: u64, kind_label: u64, level_idx: u64, attempt: u64) -> u64 {
    let mut z = master
        ^ kind_label.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ level_idx.wrapping_mul(0xbf58_476d_1ce4_e5b9)
        ^ attempt.wrapping_mul(0x94d0_49bb_1331_11eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Whether the noise realization (and hence the achievable MSE set) depends
/// on the seed.
fn is_stochastic(kind: DistortionKind) -> bool {
    matches!(
        kind,
        DistortionKind::GaussianNoise | DistortionKind::SaltPepper
    )
}

/// Retries per (kind, level) cell: salt & pepper flips whole pixels, so on a
/// small image a single realization's reachable MSE values may straddle the
/// tolerance window entirely; another realization usually admits the target.
const CALIBRATION_ATTEMPTS: u64 = 64;

/// Synthesizes the labeled corpus: the original plus one image per
/// (kind, MSE level), each within the calibration tolerance of its level.
///
/// The corpus keeps continuous intensities. Snapping a flat luminance shift
/// to the 8-bit grid moves the whole image by a whole-byte offset, which
/// restricts the reachable MSE values to clamp-adjusted squares; most iso-MSE
/// levels would become unreachable after quantization.
pub fn synth_dataset(
    base: &GrayImage,
    levels: &[f64],
    kinds: &[DistortionKind],
    seed: u64,
) -> Result<Vec<LabeledImage>> {
    let base = base.quantized();
    let mut out = Vec::with_capacity(1 + levels.len() * kinds.len());
    out.push(LabeledImage {
        name: "original.pgm".to_string(),
        image: base.clone(),
        label: DistortionKind::Original.label(),
        target_mse: 0.0,
        achieved_mse: 0.0,
        spec: DistortionSpec {
            kind: DistortionKind::Original,
            strength: 0.0,
            seed,
        },
    });
    for &kind in kinds {
        if kind == DistortionKind::Original {
            continue;
        }
        for (level_idx, &target) in levels.iter().enumerate() {
            let attempts = if is_stochastic(kind) {
                CALIBRATION_ATTEMPTS
            } else {
                1
            };
            let mut spec = None;
            let mut last_err = None;
            for attempt in 0..attempts {
                let spec_seed = derive_seed(seed, kind.label() as u64, level_idx as u64, attempt);
                match calibrate_to_mse(&base, kind, target, spec_seed) {
                    Ok(s) => {
                        spec = Some(s);
                        break;
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            let spec = match spec {
                Some(s) => s,
                None => return Err(last_err.expect("at least one attempt ran")),
            };
            let image = apply(&base, &spec)?;
            let achieved = mse(&base, &image, MseScale::Byte255)?;
            out.push(LabeledImage {
                name: format!("{}_{:02}.pgm", kind.name(), level_idx),
                image,
                label: kind.label(),
                target_mse: target,
                achieved_mse: achieved,
                spec,
            });
        }
    }
    Ok(out)
}

/// Writes the corpus as 8-bit PGM files plus `manifest.json`. The manifest
/// records both the calibrated MSE and the value measured on the quantized
/// files as stored.
pub fn write_dataset(dir: impl AsRef<Path>, images: &[LabeledImage]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let base = images
        .iter()
        .find(|e| e.label == DistortionKind::Original.label())
        .map(|e| e.image.quantized());
    let mut manifest = Vec::with_capacity(images.len());
    for entry in images {
        entry.image.write_pgm(dir.join(&entry.name))?;
        let stored_mse = match &base {
            Some(b) => mse(b, &entry.image.quantized(), MseScale::Byte255)?,
            None => f64::NAN,
        };
        manifest.push(ManifestEntry {
            file: entry.name.clone(),
            label: entry.label,
            target_mse: entry.target_mse,
            achieved_mse: entry.achieved_mse,
            stored_mse,
            spec: entry.spec,
        });
    }
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}
