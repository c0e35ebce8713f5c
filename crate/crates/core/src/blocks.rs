//! Partitioning of images into fixed-length pixel blocks with per-block mean
//! removal.
//!
//! Blocks are taken from the row-major raster in index order; the final block
//! is zero-padded. Padding is applied after the mean of the valid prefix has
//! been removed, so it never biases block statistics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Division of a `d`-pixel image into `b = ceil(d / q)` blocks of length `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BlockPartition {
    q: usize,
    b: usize,
    pad_len: usize,
    d: usize,
}

impl BlockPartition {
    /// Block length `q`.
    pub fn block_len(&self) -> usize {
        self.q
    }

    /// Number of blocks `b`.
    pub fn block_count(&self) -> usize {
        self.b
    }

    /// Zero-padding length of the final block.
    pub fn pad_len(&self) -> usize {
        self.pad_len
    }

    /// Total pixel count of the partitioned image.
    pub fn pixel_count(&self) -> usize {
        self.d
    }

    /// Pixel index range `[start, end)` covered by block `i` (before padding).
    pub fn block_range(&self, i: usize) -> (usize, usize) {
        let start = i * self.q;
        (start, ((i + 1) * self.q).min(self.d))
    }
}

/// Zero-mean blocks of one image together with the removed means.
///
/// The subtraction `pixel - mean` rounds, so the set also keeps the exact
/// per-pixel rounding residuals; `reassemble` folds them back in to reproduce
/// the source pixels bit for bit.
#[derive(Debug, Clone)]
pub struct CenteredBlockSet {
    /// `b x q` matrix; row `i` is the centered (and possibly zero-padded) block `i`.
    blocks: DMatrix<f64>,
    /// Mean removed from each block, computed over valid pixels only.
    means: DVector<f64>,
    /// Exact error of each `pixel - mean` subtraction (Dekker two-sum residual).
    residuals: DMatrix<f64>,
    partition: BlockPartition,
}

/// Error-free sum: returns `(s, e)` with `s = fl(a + b)` and `a + b = s + e` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let ap = s - b;
    let bp = s - ap;
    let e = (a - ap) + (b - bp);
    (s, e)
}

impl CenteredBlockSet {
    pub fn blocks(&self) -> &DMatrix<f64> {
        &self.blocks
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// Centered block `i` as a column vector.
    pub fn block(&self, i: usize) -> DVector<f64> {
        self.blocks.row(i).transpose()
    }

    /// Reconstructs the source image exactly: adds back means (compensating
    /// for subtraction round-off) and drops padding.
    pub fn reassemble(&self, width: usize, height: usize) -> Result<GrayImage> {
        let d = self.partition.d;
        if width * height != d {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} does not hold {d} pixels"
            )));
        }
        let mut pixels = Vec::with_capacity(d);
        for i in 0..self.partition.b {
            let (start, end) = self.partition.block_range(i);
            let mean = self.means[i];
            for col in 0..(end - start) {
                // pixel = mean + block + residual, summed with compensation.
                let (s, t) = two_sum(mean, self.blocks[(i, col)]);
                pixels.push(s + (t + self.residuals[(i, col)]));
            }
        }
        GrayImage::new(width, height, pixels)
    }
}

/// Splits a `d`-pixel image into `ceil(d / q)` raster-order blocks of length `q`.
pub fn partition(image: &GrayImage, q: usize) -> Result<BlockPartition> {
    let d = image.len();
    if q == 0 || q > d {
        return Err(Error::InvalidParameter(format!(
            "block length q={q} must satisfy 1 <= q <= d={d}"
        )));
    }
    let b = d.div_ceil(q);
    Ok(BlockPartition {
        q,
        b,
        pad_len: b * q - d,
        d,
    })
}

/// Removes the arithmetic mean from every block. The final partial block is
/// centered over its valid pixels and then zero-padded to length `q`.
pub fn center_blocks(image: &GrayImage, partition: &BlockPartition) -> Result<CenteredBlockSet> {
    if partition.d != image.len() {
        return Err(Error::DimensionMismatch(format!(
            "partition built for {} pixels, image has {}",
            partition.d,
            image.len()
        )));
    }
    let pixels = image.pixels();
    let mut blocks = DMatrix::zeros(partition.b, partition.q);
    let mut residuals = DMatrix::zeros(partition.b, partition.q);
    let mut means = DVector::zeros(partition.b);
    for i in 0..partition.b {
        let (start, end) = partition.block_range(i);
        let valid = &pixels[start..end];
        let mean = valid.iter().sum::<f64>() / valid.len() as f64;
        means[i] = mean;
        for (col, &v) in valid.iter().enumerate() {
            let (c, e) = two_sum(v, -mean);
            blocks[(i, col)] = c;
            residuals[(i, col)] = e;
        }
    }
    Ok(CenteredBlockSet {
        blocks,
        means,
        residuals,
        partition: *partition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::synthetic_texture;
    use proptest::prelude::*;

    #[test]
    fn partition_large_image() {
        // 512*512 pixels in 64-pixel blocks.
        let img = GrayImage::from_fn(512, 512, |_, _| 0.5);
        let p = partition(&img, 64).unwrap();
        assert_eq!(p.block_count(), 4096);
        assert_eq!(p.pad_len(), 0);
    }

    #[test]
    fn partition_single_block_covers_whole_image() {
        let img = synthetic_texture(4, 3);
        let p = partition(&img, 12).unwrap();
        assert_eq!(p.block_count(), 1);
        assert_eq!(p.block_range(0), (0, 12));
    }

    #[test]
    fn partition_pads_final_block() {
        // d=10, q=4: three blocks, the last holding pixels 8..10 plus two zeros.
        let img = GrayImage::new(10, 1, vec![0.1; 10]).unwrap();
        let p = partition(&img, 4).unwrap();
        assert_eq!(p.block_count(), 3);
        assert_eq!(p.pad_len(), 2);
        assert_eq!(p.block_range(2), (8, 10));
    }

    #[test]
    fn partition_rejects_bad_q() {
        let img = synthetic_texture(4, 4);
        assert!(partition(&img, 0).is_err());
        assert!(partition(&img, 17).is_err());
    }

    #[test]
    fn centering_removes_constant_block() {
        let img = GrayImage::new(4, 1, vec![0.7, 0.7, 0.7, 0.7]).unwrap();
        let p = partition(&img, 4).unwrap();
        let set = center_blocks(&img, &p).unwrap();
        assert_eq!(set.means()[0], 0.7);
        assert!(set.blocks().row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centering_mean_value() {
        let img = GrayImage::new(4, 1, vec![0.25, 0.5, 0.75, 1.0]).unwrap();
        let p = partition(&img, 4).unwrap();
        let set = center_blocks(&img, &p).unwrap();
        assert!((set.means()[0] - 0.625).abs() < 1e-15);
        assert!(set.blocks().row(0).sum().abs() < 1e-12);
    }

    #[test]
    fn padded_block_mean_ignores_padding() {
        let img = GrayImage::new(10, 1, vec![1.0; 10]).unwrap();
        let p = partition(&img, 4).unwrap();
        let set = center_blocks(&img, &p).unwrap();
        // Valid prefix is [1, 1]; its mean is 1, so the block is all zeros.
        assert_eq!(set.means()[2], 1.0);
        assert!(set.blocks().row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_sum_recovers_exact_error() {
        // 1e16 has ulp 2; adding 1.0 is a tie that rounds back to 1e16, so
        // the entire 1.0 is recovered in the error term.
        let (s, e) = two_sum(1e16, 1.0);
        assert_eq!(s, 1e16);
        assert_eq!(e, 1.0);
        // Exact sums carry no error term.
        let (s, e) = two_sum(0.5, 0.25);
        assert_eq!(s, 0.75);
        assert_eq!(e, 0.0);
    }

    proptest! {
        #[test]
        fn blocks_are_zero_mean_and_reassemble_exactly(
            w in 1usize..20,
            h in 1usize..20,
            q in 1usize..24,
            salt in 0u64..1000,
        ) {
            let d = w * h;
            prop_assume!(q <= d);
            let img = GrayImage::from_fn(w, h, |x, y| {
                let mut v = (x as u64 + 31 * y as u64 + 1).wrapping_mul(salt.wrapping_add(1));
                v ^= v >> 7;
                v = v.wrapping_mul(0x2545_f491_4f6c_dd1d);
                (v % 256) as f64 / 255.0
            });
            let p = partition(&img, q).unwrap();
            let set = center_blocks(&img, &p).unwrap();
            for i in 0..p.block_count() {
                let (start, end) = p.block_range(i);
                let mean = set.blocks().row(i).columns(0, end - start).sum()
                    / (end - start) as f64;
                prop_assert!(mean.abs() < 1e-12);
            }
            let back = set.reassemble(w, h).unwrap();
            prop_assert_eq!(back.pixels(), img.pixels());
        }
    }
}
