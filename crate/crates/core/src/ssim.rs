//! Structural similarity between pixel blocks and the zero-mean SSIM distance
//! that every objective in this crate minimizes.
//!
//! For zero-mean blocks the full three-term index collapses to
//! `(2 x1'x2 + c) / (|x1|^2 + |x2|^2 + c)` and the associated squared distance
//! is `|x1 - x2|^2 / (|x1|^2 + |x2|^2 + c)` with `c = (q - 1) c2`.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Tolerance on the block-mean when asserting a zero-mean input.
pub const ZERO_MEAN_TOL: f64 = 1e-9;

/// Stabilizer constants for a given block length `q` and dynamic range `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConstants {
    /// Dynamic range of intensities (1.0 throughout this crate).
    pub l: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Distance stabilizer `c = (q - 1) c2`.
    pub c: f64,
    /// Block length the constants were built for.
    pub q: usize,
}

impl SsimConstants {
    /// Constants for blocks of length `q` with intensities in `[0, l]`.
    pub fn new(q: usize, l: f64) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidParameter(format!(
                "block length q={q} must be at least 2 (sample variance uses q-1)"
            )));
        }
        if l <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "dynamic range l={l} must be positive"
            )));
        }
        let c1 = (0.01 * l).powi(2);
        let c2 = (0.03 * l).powi(2);
        Ok(Self {
            l,
            c1,
            c2,
            c3: c2 / 2.0,
            c: (q - 1) as f64 * c2,
            q,
        })
    }

    /// Constants for unit dynamic range.
    pub fn unit_range(q: usize) -> Result<Self> {
        Self::new(q, 1.0)
    }
}

fn check_len(x1: &DVector<f64>, x2: &DVector<f64>, consts: &SsimConstants) -> Result<()> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch(format!(
            "block lengths {} vs {}",
            x1.len(),
            x2.len()
        )));
    }
    if x1.len() != consts.q {
        return Err(Error::DimensionMismatch(format!(
            "constants built for q={}, blocks have length {}",
            consts.q,
            x1.len()
        )));
    }
    Ok(())
}

/// Full SSIM index: product of luminance, contrast, and structure terms.
pub fn ssim_full(x1: &DVector<f64>, x2: &DVector<f64>, consts: &SsimConstants) -> Result<f64> {
    check_len(x1, x2, consts)?;
    let q = x1.len() as f64;
    let mu1 = x1.sum() / q;
    let mu2 = x2.sum() / q;
    let mut var1 = 0.0;
    let mut var2 = 0.0;
    let mut cov = 0.0;
    for i in 0..x1.len() {
        let d1 = x1[i] - mu1;
        let d2 = x2[i] - mu2;
        var1 += d1 * d1;
        var2 += d2 * d2;
        cov += d1 * d2;
    }
    var1 /= q - 1.0;
    var2 /= q - 1.0;
    cov /= q - 1.0;
    let sd1 = var1.sqrt();
    let sd2 = var2.sqrt();
    let luminance = (2.0 * mu1 * mu2 + consts.c1) / (mu1 * mu1 + mu2 * mu2 + consts.c1);
    let contrast = (2.0 * sd1 * sd2 + consts.c2) / (var1 + var2 + consts.c2);
    let structure = (cov + consts.c3) / (sd1 * sd2 + consts.c3);
    Ok(luminance * contrast * structure)
}

/// Squared SSIM distance between two zero-mean blocks:
/// `|x1 - x2|^2 / (|x1|^2 + |x2|^2 + c)`.
///
/// Equals `1 - SSIM(x1, x2)` for zero-mean inputs. Blocks whose norms both
/// vanish are at distance 0 (the stabilizer dominates).
pub fn ssim_distance(x1: &DVector<f64>, x2: &DVector<f64>, consts: &SsimConstants) -> Result<f64> {
    check_len(x1, x2, consts)?;
    let q = x1.len() as f64;
    for (name, x) in [("x1", x1), ("x2", x2)] {
        let mean = x.sum() / q;
        if mean.abs() > ZERO_MEAN_TOL {
            return Err(Error::Precondition(format!(
                "{name} is not zero-mean (mean = {mean:e})"
            )));
        }
    }
    let n1 = x1.norm_squared();
    let n2 = x2.norm_squared();
    if n1 < 1e-15 && n2 < 1e-15 {
        return Ok(0.0);
    }
    Ok((x1 - x2).norm_squared() / (n1 + n2 + consts.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn centered(values: &[f64]) -> DVector<f64> {
        let v = DVector::from_row_slice(values);
        let mean = v.mean();
        v.map(|x| x - mean)
    }

    #[test]
    fn constants_match_unit_range() {
        let c = SsimConstants::unit_range(4).unwrap();
        assert_eq!(c.c1, 1e-4);
        assert_eq!(c.c2, 9e-4);
        assert_eq!(c.c3, 4.5e-4);
        assert_eq!(c.c, 3.0 * 9e-4);
    }

    #[test]
    fn constants_reject_small_q() {
        assert!(SsimConstants::unit_range(1).is_err());
        assert!(SsimConstants::unit_range(0).is_err());
    }

    #[test]
    fn ssim_of_identical_blocks_is_one() {
        let consts = SsimConstants::unit_range(4).unwrap();
        let x = DVector::from_row_slice(&[0.2, 0.4, 0.6, 0.8]);
        let s = ssim_full(&x, &x, &consts).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "got {s}");
    }

    #[test]
    fn ssim_full_matches_scalar_oracle() {
        // Frozen from an independent scalar evaluation of the three-term product.
        let consts = SsimConstants::unit_range(4).unwrap();
        let x1 = DVector::from_row_slice(&[0.1, 0.2, 0.3, 0.4]);
        let x2 = DVector::from_row_slice(&[0.4, 0.3, 0.2, 0.1]);
        let s = ssim_full(&x1, &x2, &consts).unwrap();
        assert!((s - (-0.9474196689386564)).abs() < 1e-12, "got {s}");
    }

    #[test]
    fn distance_of_identical_blocks_is_zero() {
        let consts = SsimConstants::unit_range(4).unwrap();
        let x = centered(&[0.1, 0.9, 0.3, 0.5]);
        assert_eq!(ssim_distance(&x, &x, &consts).unwrap(), 0.0);
    }

    #[test]
    fn distance_matches_direct_evaluation() {
        let consts = SsimConstants::unit_range(2).unwrap();
        let x1 = DVector::from_row_slice(&[1.0, -1.0]);
        let x2 = DVector::from_row_slice(&[2.0, -2.0]);
        let d = ssim_distance(&x1, &x2, &consts).unwrap();
        assert!((d - 0.19998200161985422).abs() < 1e-15, "got {d}");
    }

    #[test]
    fn distance_rejects_nonzero_mean() {
        let consts = SsimConstants::unit_range(3).unwrap();
        let bad = DVector::from_row_slice(&[0.5, 0.5, 0.5]);
        let ok = centered(&[0.1, 0.2, 0.9]);
        assert!(matches!(
            ssim_distance(&bad, &ok, &consts),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn near_zero_blocks_are_at_distance_zero() {
        let consts = SsimConstants::unit_range(2).unwrap();
        let x = DVector::from_row_slice(&[1e-9, -1e-9]);
        assert_eq!(ssim_distance(&x, &x, &consts).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_bounded_and_consistent_with_full_ssim(
            a in proptest::collection::vec(-0.5f64..0.5, 4..16),
            b in proptest::collection::vec(-0.5f64..0.5, 4..16),
        ) {
            let q = a.len().min(b.len());
            let consts = SsimConstants::unit_range(q).unwrap();
            let x1 = centered(&a[..q]);
            let x2 = centered(&b[..q]);
            let d12 = ssim_distance(&x1, &x2, &consts).unwrap();
            let d21 = ssim_distance(&x2, &x1, &consts).unwrap();
            prop_assert_eq!(d12, d21);
            prop_assert!((0.0..=2.0).contains(&d12));
            // Simplified zero-mean form: d = 1 - (2 x1'x2 + c) / (|x1|^2 + |x2|^2 + c).
            let simplified = 1.0
                - (2.0 * x1.dot(&x2) + consts.c)
                    / (x1.norm_squared() + x2.norm_squared() + consts.c);
            prop_assert!((d12 - simplified).abs() < 1e-12);
            // Full SSIM agrees with 1 - distance on zero-mean inputs.
            let s = ssim_full(&x1, &x2, &consts).unwrap();
            prop_assert!((s - (1.0 - d12)).abs() < 1e-12, "ssim {} vs 1-d {}", s, 1.0 - d12);
        }
    }
}
