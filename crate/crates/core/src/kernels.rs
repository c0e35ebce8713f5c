//! Kernel functions, gram-matrix normalization and double-centering, and
//! extraction of the per-neighborhood kernel pieces used by the feature-space
//! solvers.
//!
//! The training gram is cosine-normalized and then double-centered
//! (`K <- H K H` with `H = I - (1/n) 1 1'`), which centers the feature map
//! implicitly. Out-of-sample kernel values are pushed through the same
//! transform with the training statistics frozen.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family. The polynomial kernel has fixed degree 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Polynomial,
    Rbf,
    Sigmoid,
}

/// A kernel function with its scale parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, gamma: f64) -> Result<Self> {
        if gamma <= 0.0 || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kernel gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { kind, gamma })
    }

    /// Kernel with `gamma = 1/q` for feature vectors of length `q`.
    pub fn with_default_gamma(kind: KernelKind, q: usize) -> Result<Self> {
        Self::new(kind, 1.0 / q as f64)
    }

    /// Evaluates the kernel on two equal-length vectors.
    pub fn eval(&self, x1: DVectorView<f64>, x2: DVectorView<f64>) -> f64 {
        match self.kind {
            KernelKind::Linear => x1.dot(&x2),
            KernelKind::Polynomial => (self.gamma * x1.dot(&x2) + 1.0).powi(3),
            KernelKind::Rbf => {
                let mut dist_sq = 0.0;
                for i in 0..x1.len() {
                    let d = x1[i] - x2[i];
                    dist_sq += d * d;
                }
                (-self.gamma * dist_sq).exp()
            }
            KernelKind::Sigmoid => (self.gamma * x1.dot(&x2) + 1.0).tanh(),
        }
    }

    /// Raw gram matrix of the rows of `rows` (one sample per row).
    pub fn gram_matrix(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        let n = rows.nrows();
        let mut k = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = self.eval(
                    rows.row(a).transpose().as_view(),
                    rows.row(b).transpose().as_view(),
                );
                k[(a, b)] = v;
                k[(b, a)] = v;
            }
        }
        k
    }
}

/// Cosine normalization and double-centering statistics of a training gram,
/// kept so that out-of-sample kernel values can be mapped into the same
/// centered feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct GramStats {
    /// Diagonal of the raw (unnormalized) training gram.
    pub raw_diag: DVector<f64>,
    /// Row means of the normalized, pre-centering gram.
    pub row_means: DVector<f64>,
    /// Grand mean of the normalized, pre-centering gram.
    pub grand_mean: f64,
}

/// A normalized, double-centered kernel gram matrix over `n` training samples.
#[derive(Debug, Clone)]
pub struct KernelGram {
    k: DMatrix<f64>,
    stats: GramStats,
    pub normalized: bool,
    pub centered: bool,
}

impl KernelGram {
    /// Wraps a raw symmetric gram without normalization or centering, e.g.
    /// the plain inner-product matrix of already-centered blocks.
    pub fn from_raw(k: DMatrix<f64>) -> Self {
        let n = k.nrows();
        let raw_diag = DVector::from_fn(n, |i, _| k[(i, i)]);
        let row_means = DVector::zeros(n);
        Self {
            k,
            stats: GramStats {
                raw_diag,
                row_means,
                grand_mean: 0.0,
            },
            normalized: false,
            centered: false,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn stats(&self) -> &GramStats {
        &self.stats
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// Kernel pieces for the neighborhood of sample `j`: the self-kernel
    /// `K(j, j)`, the vector `K(neighbor_r, j)`, and the sub-gram
    /// `K(neighbor_r, neighbor_s)`.
    pub fn neighborhood(
        &self,
        j: usize,
        neighbors: &[usize],
    ) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let n = self.n();
        if j >= n || neighbors.iter().any(|&r| r >= n) {
            return Err(Error::InvalidInput(format!(
                "neighborhood index out of range (n = {n})"
            )));
        }
        let kxx = self.k[(j, j)];
        let kvec = DVector::from_iterator(neighbors.len(), neighbors.iter().map(|&r| self.k[(r, j)]));
        let kmat = DMatrix::from_fn(neighbors.len(), neighbors.len(), |r, s| {
            self.k[(neighbors[r], neighbors[s])]
        });
        Ok((kxx, kvec, kmat))
    }
}

/// Cosine-normalizes a raw gram (`K(a,b) / sqrt(K(a,a) K(b,b))`) and then
/// double-centers it. Fails if any diagonal entry is not strictly positive.
pub fn normalize_center(raw: &DMatrix<f64>) -> Result<KernelGram> {
    let n = raw.nrows();
    if raw.ncols() != n || n == 0 {
        return Err(Error::InvalidInput(format!(
            "gram must be square and nonempty, got {}x{}",
            raw.nrows(),
            raw.ncols()
        )));
    }
    let raw_diag = DVector::from_fn(n, |i, _| raw[(i, i)]);
    if raw_diag.iter().any(|&d| d <= 0.0 || !d.is_finite()) {
        return Err(Error::InvalidInput(
            "gram diagonal must be strictly positive for cosine normalization".into(),
        ));
    }
    let inv_sqrt = raw_diag.map(|d| 1.0 / d.sqrt());
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            k[(a, b)] = raw[(a, b)] * inv_sqrt[a] * inv_sqrt[b];
        }
    }
    let row_means = DVector::from_fn(n, |a, _| k.row(a).sum() / n as f64);
    let grand_mean = row_means.sum() / n as f64;
    // H K H expanded entrywise: K(a,b) - m_a - m_b + g.
    for a in 0..n {
        for b in 0..n {
            k[(a, b)] += grand_mean - row_means[a] - row_means[b];
        }
    }
    Ok(KernelGram {
        k,
        stats: GramStats {
            raw_diag,
            row_means,
            grand_mean,
        },
        normalized: true,
        centered: true,
    })
}

/// Builds the normalized, double-centered gram of the rows of `rows`.
pub fn gram_from_rows(kernel: &Kernel, rows: &DMatrix<f64>) -> Result<KernelGram> {
    normalize_center(&kernel.gram_matrix(rows))
}

impl GramStats {
    /// Diagonal of the centered training gram: `1 - 2 m_a + g`.
    pub fn centered_diag(&self) -> DVector<f64> {
        self.row_means
            .map(|m| 1.0 - 2.0 * m + self.grand_mean)
    }

    /// Centered training gram entry `(a, b)` rebuilt from the raw kernel of
    /// the stored training rows and the frozen statistics.
    pub fn centered_entry(
        &self,
        kernel: &Kernel,
        rows: &DMatrix<f64>,
        a: usize,
        b: usize,
    ) -> f64 {
        let raw = kernel.eval(
            rows.row(a).transpose().as_view(),
            rows.row(b).transpose().as_view(),
        );
        raw / (self.raw_diag[a] * self.raw_diag[b]).sqrt() - self.row_means[a]
            - self.row_means[b]
            + self.grand_mean
    }
}

/// Out-of-sample kernel pieces: the centered self-kernel of `query` and the
/// centered cross-kernel vector against every training row, both consistent
/// with the training gram's normalization and centering.
pub fn cross_kernel_oos(
    kernel: &Kernel,
    query: DVectorView<f64>,
    train_rows: &DMatrix<f64>,
    stats: &GramStats,
) -> Result<(f64, DVector<f64>)> {
    let n = train_rows.nrows();
    if stats.raw_diag.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "training stats cover {} samples, matrix has {}",
            stats.raw_diag.len(),
            n
        )));
    }
    let kqq = kernel.eval(query, query);
    if kqq <= 0.0 || !kqq.is_finite() {
        return Err(Error::InvalidInput(format!(
            "query self-kernel {kqq} must be strictly positive for normalization"
        )));
    }
    let inv_q = 1.0 / kqq.sqrt();
    // Normalized cross row; the normalized self-kernel is exactly 1.
    let kn = DVector::from_fn(n, |a, _| {
        kernel.eval(query, train_rows.row(a).transpose().as_view()) * inv_q
            / stats.raw_diag[a].sqrt()
    });
    let query_mean = kn.sum() / n as f64;
    let kvec = DVector::from_fn(n, |a, _| {
        kn[a] - query_mean - stats.row_means[a] + stats.grand_mean
    });
    let kxx = 1.0 - 2.0 * query_mean + stats.grand_mean;
    Ok((kxx, kvec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_row_slice(&[a, b])
    }

    #[test]
    fn rbf_self_kernel_is_one() {
        let k = Kernel::new(KernelKind::Rbf, 0.7).unwrap();
        let x = DVector::from_row_slice(&[0.3, -0.1, 0.8]);
        assert_eq!(k.eval(x.as_view(), x.as_view()), 1.0);
    }

    #[test]
    fn default_gamma_is_reciprocal_block_length() {
        let k = Kernel::with_default_gamma(KernelKind::Rbf, 64).unwrap();
        assert_eq!(k.gamma, 0.015625);
    }

    #[test]
    fn polynomial_matches_scalar_arithmetic() {
        let k = Kernel::new(KernelKind::Polynomial, 0.5).unwrap();
        let x1 = vec2(1.0, 0.0);
        let x2 = vec2(2.0, 0.0);
        // (0.5 * 2 + 1)^3 = 8
        assert_eq!(k.eval(x1.as_view(), x2.as_view()), 8.0);
    }

    #[test]
    fn gamma_must_be_positive() {
        assert!(Kernel::new(KernelKind::Rbf, 0.0).is_err());
        assert!(Kernel::new(KernelKind::Rbf, -1.0).is_err());
    }

    #[test]
    fn normalization_sets_unit_diagonal() {
        let raw = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 9.0, 2.0, 0.5, 2.0, 1.0]);
        let gram = normalize_center(&raw).unwrap();
        // Pre-centering the diagonal is 1; reconstruct it from the stats.
        let s = gram.stats();
        for a in 0..3 {
            let diag = gram.matrix()[(a, a)];
            let expected = 1.0 - 2.0 * s.row_means[a] + s.grand_mean;
            assert!((diag - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn centering_annihilates_row_sums() {
        let raw = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 9.0, 2.0, 0.5, 2.0, 1.0]);
        let gram = normalize_center(&raw).unwrap();
        for a in 0..3 {
            assert!(gram.matrix().row(a).sum().abs() < 1e-8);
            assert!(gram.matrix().column(a).sum().abs() < 1e-8);
        }
    }

    #[test]
    fn centering_matches_dense_triple_product() {
        let raw = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, 0.6, 0.1, 0.6, 3.0]);
        let gram = normalize_center(&raw).unwrap();
        // Oracle: normalize entrywise, then multiply H K H densely.
        let n = 3;
        let mut kn = raw.clone();
        for a in 0..n {
            for b in 0..n {
                kn[(a, b)] = raw[(a, b)] / (raw[(a, a)] * raw[(b, b)]).sqrt();
            }
        }
        let h = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        let oracle = &h * kn * &h;
        assert!((gram.matrix() - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn centering_is_idempotent() {
        let raw = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, 0.6, 0.1, 0.6, 3.0]);
        let gram = normalize_center(&raw).unwrap();
        let n = 3;
        let h = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        let twice = &h * gram.matrix() * &h;
        assert!((gram.matrix() - twice).abs().max() < 1e-10);
    }

    #[test]
    fn normalize_rejects_nonpositive_diagonal() {
        let raw = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.1, 1.0]);
        assert!(matches!(
            normalize_center(&raw),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn neighborhood_extracts_sub_pieces() {
        let raw = DMatrix::from_fn(6, 6, |a, b| {
            1.0 + 1.0 / (1.0 + (a as f64 - b as f64).abs())
        });
        let gram = normalize_center(&raw).unwrap();
        let (kxx, kvec, kmat) = gram.neighborhood(2, &[0, 4, 5]).unwrap();
        let k = gram.matrix();
        assert_eq!(kxx, k[(2, 2)]);
        assert_eq!(kvec[0], k[(0, 2)]);
        assert_eq!(kvec[1], k[(4, 2)]);
        assert_eq!(kvec[2], k[(5, 2)]);
        assert_eq!(kmat[(0, 2)], k[(0, 5)]);
        assert!((kmat.clone() - kmat.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn neighborhood_singleton_reads_directly() {
        let raw = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
        let gram = normalize_center(&raw).unwrap();
        let (kxx, kvec, kmat) = gram.neighborhood(0, &[1]).unwrap();
        assert_eq!(kxx, gram.matrix()[(0, 0)]);
        assert_eq!(kvec[0], gram.matrix()[(1, 0)]);
        assert_eq!(kmat[(0, 0)], gram.matrix()[(1, 1)]);
    }

    #[test]
    fn neighborhood_rejects_out_of_range() {
        let raw = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
        let gram = normalize_center(&raw).unwrap();
        assert!(gram.neighborhood(0, &[2]).is_err());
        assert!(gram.neighborhood(5, &[1]).is_err());
    }

    #[test]
    fn oos_duplicate_of_training_row_matches_gram_column() {
        let kernel = Kernel::new(KernelKind::Linear, 1.0).unwrap();
        let rows = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 0.8, 0.2, -0.6]);
        let gram = gram_from_rows(&kernel, &rows).unwrap();
        let query = rows.row(1).transpose();
        let (kxx, kvec) = cross_kernel_oos(&kernel, query.as_view(), &rows, gram.stats()).unwrap();
        for a in 0..3 {
            assert!(
                (kvec[a] - gram.matrix()[(a, 1)]).abs() < 1e-12,
                "entry {a}: {} vs {}",
                kvec[a],
                gram.matrix()[(a, 1)]
            );
        }
        assert!((kxx - gram.matrix()[(1, 1)]).abs() < 1e-12);
    }

    #[test]
    fn rbf_raw_cross_kernel_decays_for_far_query() {
        let kernel = Kernel::new(KernelKind::Rbf, 1.0).unwrap();
        let far = DVector::from_row_slice(&[50.0, -50.0]);
        let near = vec2(0.1, 0.2);
        assert!(kernel.eval(far.as_view(), near.as_view()) < 1e-300);
    }

    #[test]
    fn oos_two_train_one_query_matches_scalar_formula() {
        let kernel = Kernel::new(KernelKind::Rbf, 0.5).unwrap();
        let rows = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let gram = gram_from_rows(&kernel, &rows).unwrap();
        let query = vec2(0.5, 0.5);
        let (kxx, kvec) = cross_kernel_oos(&kernel, query.as_view(), &rows, gram.stats()).unwrap();
        // Scalar oracle: RBF has unit diagonal, so normalization is a no-op.
        let k_q0 = (-0.5f64 * (0.25 + 0.25)).exp();
        let k_q1 = (-0.5f64 * (0.25 + 0.25)).exp();
        let k_01 = (-0.5f64 * 1.0).exp();
        let row_mean_0 = (1.0 + k_01) / 2.0;
        let row_mean_1 = (k_01 + 1.0) / 2.0;
        let grand = (2.0 + 2.0 * k_01) / 4.0;
        let q_mean = (k_q0 + k_q1) / 2.0;
        assert!((kvec[0] - (k_q0 - q_mean - row_mean_0 + grand)).abs() < 1e-14);
        assert!((kvec[1] - (k_q1 - q_mean - row_mean_1 + grand)).abs() < 1e-14);
        assert!((kxx - (1.0 - 2.0 * q_mean + grand)).abs() < 1e-14);
    }

    #[test]
    fn linear_gram_of_centered_rows_is_inner_product_matrix() {
        let kernel = Kernel::new(KernelKind::Linear, 1.0).unwrap();
        let rows = DMatrix::from_row_slice(3, 3, &[0.2, -0.1, -0.1, 0.4, -0.4, 0.0, -0.3, 0.1, 0.2]);
        let raw = kernel.gram_matrix(&rows);
        let oracle = &rows * rows.transpose();
        assert!((raw - oracle).abs().max() < 1e-12);
    }
}
