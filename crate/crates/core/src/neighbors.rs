//! k-nearest-neighbor lists across the training images for one block index,
//! in input space or in kernel feature space.
//!
//! Distances are computed exactly (O(n^2)); at the scales this crate targets
//! (n on the order of a hundred images) indexing structures would not pay off.
//! Ties are broken by ascending sample index so every list is deterministic.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::KernelGram;

/// Ordered neighbor lists (nearest first) for every sample of one block index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    k: usize,
    lists: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of query samples the graph covers.
    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// Neighbor indices of sample `j`, nearest first.
    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.lists[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.lists.iter().map(|l| l.as_slice())
    }
}

/// Selects the `k` smallest distances, ties broken by smaller index.
fn select_k(distances: &[(usize, f64)], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| {
        distances[a]
            .1
            .partial_cmp(&distances[b].1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(distances[a].0.cmp(&distances[b].0))
    });
    order.truncate(k);
    order.into_iter().map(|i| distances[i].0).collect()
}

/// k-NN lists among the rows of `rows` under Euclidean distance; each sample
/// is excluded from its own list.
pub fn knn_euclidean(rows: &DMatrix<f64>, k: usize) -> Result<NeighborGraph> {
    let n = rows.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "neighbor count k={k} must satisfy 1 <= k < n={n}"
        )));
    }
    let lists = (0..n)
        .map(|j| {
            let dists: Vec<(usize, f64)> = (0..n)
                .filter(|&r| r != j)
                .map(|r| {
                    let mut d = 0.0;
                    for c in 0..rows.ncols() {
                        let diff = rows[(j, c)] - rows[(r, c)];
                        d += diff * diff;
                    }
                    (r, d)
                })
                .collect();
            select_k(&dists, k)
        })
        .collect();
    Ok(NeighborGraph { k, lists })
}

/// Feature-space distance between samples `a` and `b` of a gram matrix:
/// `sqrt(K(a,a) - 2 K(a,b) + K(b,b))`, with round-off negatives clamped to 0.
fn kernel_distance(k: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (k[(a, a)] - 2.0 * k[(a, b)] + k[(b, b)]).max(0.0).sqrt()
}

/// k-NN lists under the feature-space distance induced by `gram`.
pub fn knn_kernel(gram: &KernelGram, k: usize) -> Result<NeighborGraph> {
    let kmat = gram.matrix();
    let n = kmat.nrows();
    let asym = (kmat - kmat.transpose()).abs().max();
    if asym > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "gram matrix is not symmetric (max |K - K'| = {asym:e})"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "neighbor count k={k} must satisfy 1 <= k < n={n}"
        )));
    }
    let lists = (0..n)
        .map(|j| {
            let dists: Vec<(usize, f64)> = (0..n)
                .filter(|&r| r != j)
                .map(|r| (r, kernel_distance(kmat, j, r)))
                .collect();
            select_k(&dists, k)
        })
        .collect();
    Ok(NeighborGraph { k, lists })
}

/// For each query row, the `k` nearest training rows under Euclidean distance.
pub fn knn_oos_euclidean(
    queries: &DMatrix<f64>,
    train: &DMatrix<f64>,
    k: usize,
) -> Result<NeighborGraph> {
    let n = train.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "neighbor count k={k} must satisfy 1 <= k <= n={n}"
        )));
    }
    if queries.ncols() != train.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "query width {} vs training width {}",
            queries.ncols(),
            train.ncols()
        )));
    }
    let lists = (0..queries.nrows())
        .map(|j| {
            let dists: Vec<(usize, f64)> = (0..n)
                .map(|r| {
                    let mut d = 0.0;
                    for c in 0..train.ncols() {
                        let diff = queries[(j, c)] - train[(r, c)];
                        d += diff * diff;
                    }
                    (r, d)
                })
                .collect();
            select_k(&dists, k)
        })
        .collect();
    Ok(NeighborGraph { k, lists })
}

/// Nearest training samples of one out-of-sample query in feature space,
/// from its centered self-kernel and cross-kernel vector plus the diagonal of
/// the centered training gram.
pub fn knn_oos_kernel(
    query_self: f64,
    cross: &nalgebra::DVector<f64>,
    train_diag: &nalgebra::DVector<f64>,
    k: usize,
) -> Result<Vec<usize>> {
    let n = train_diag.len();
    if cross.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "cross-kernel length {} vs training size {}",
            cross.len(),
            n
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "neighbor count k={k} must satisfy 1 <= k <= n={n}"
        )));
    }
    let dists: Vec<(usize, f64)> = (0..n)
        .map(|r| {
            (
                r,
                (query_self - 2.0 * cross[r] + train_diag[r]).max(0.0).sqrt(),
            )
        })
        .collect();
    Ok(select_k(&dists, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram_from_rows, Kernel, KernelKind};
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn collinear_points_pick_closest_two() {
        let rows = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 4.0]);
        let g = knn_euclidean(&rows, 2).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(3), &[2, 1]);
    }

    #[test]
    fn samples_never_list_themselves() {
        let rows = DMatrix::from_fn(8, 3, |r, c| ((r * 7 + c * 3) % 5) as f64);
        let g = knn_euclidean(&rows, 4).unwrap();
        for j in 0..8 {
            assert!(!g.neighbors(j).contains(&j));
            assert_eq!(g.neighbors(j).len(), 4);
        }
    }

    #[test]
    fn rejects_k_not_less_than_n() {
        let rows = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert!(knn_euclidean(&rows, 3).is_err());
        assert!(knn_euclidean(&rows, 0).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_data() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let rows = DMatrix::from_fn(12, 4, |_, _| rng.random_range(-1.0..1.0));
        let g = knn_euclidean(&rows, 5).unwrap();
        for j in 0..12 {
            let mut pairs: Vec<(f64, usize)> = (0..12)
                .filter(|&r| r != j)
                .map(|r| {
                    let d = (rows.row(j) - rows.row(r)).norm_squared();
                    (d, r)
                })
                .collect();
            pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expected: Vec<usize> = pairs.iter().take(5).map(|&(_, r)| r).collect();
            assert_eq!(g.neighbors(j), expected.as_slice(), "row {j}");
        }
    }

    #[test]
    fn linear_kernel_reproduces_euclidean_lists() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        // Zero-mean rows so the raw linear gram corresponds to centered blocks.
        let mut rows = DMatrix::from_fn(10, 6, |_, _| rng.random_range(-1.0..1.0));
        for mut row in rows.row_iter_mut() {
            let m = row.mean();
            row.iter_mut().for_each(|v| *v -= m);
        }
        // Compare against the raw (uncentered) gram: the feature map there is
        // the identity, so the lists must agree exactly.
        let kernel = Kernel::new(KernelKind::Linear, 1.0).unwrap();
        let gram = KernelGram::from_raw(kernel.gram_matrix(&rows));
        let from_kernel = knn_kernel(&gram, 3).unwrap();
        let from_euclid = knn_euclidean(&rows, 3).unwrap();
        assert_eq!(from_kernel, from_euclid);
    }

    #[test]
    fn rbf_distance_has_closed_form() {
        let kernel = Kernel::new(KernelKind::Rbf, 0.8).unwrap();
        let rows = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.4, 0.1, -0.2, 0.3]);
        let raw = kernel.gram_matrix(&rows);
        // RBF has unit diagonal, so d(a,b) = sqrt(2 - 2 K(a,b)).
        for a in 0..3 {
            for b in 0..3 {
                let d = kernel_distance(&raw, a, b);
                let expected = (2.0 - 2.0 * raw[(a, b)]).max(0.0).sqrt();
                assert!((d - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn kernel_knn_rejects_asymmetric_gram() {
        let mut raw = DMatrix::from_element(3, 3, 1.0);
        raw[(0, 1)] = 2.0;
        let gram = KernelGram::from_raw(raw);
        assert!(matches!(
            knn_kernel(&gram, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn oos_query_equal_to_training_row_is_nearest() {
        let train = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let queries = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let g = knn_oos_euclidean(&queries, &train, 2).unwrap();
        assert_eq!(g.neighbors(0)[0], 1);
    }

    #[test]
    fn oos_with_k_equal_n_sorts_all_training_rows() {
        let train = DMatrix::from_row_slice(3, 1, &[0.0, 10.0, 4.0]);
        let queries = DMatrix::from_row_slice(1, 1, &[3.0]);
        let g = knn_oos_euclidean(&queries, &train, 3).unwrap();
        assert_eq!(g.neighbors(0), &[2, 0, 1]);
    }

    #[test]
    fn oos_matches_brute_force() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let train = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let queries = DMatrix::from_fn(1, 2, |_, _| rng.random_range(-1.0..1.0));
        let g = knn_oos_euclidean(&queries, &train, 3).unwrap();
        let mut pairs: Vec<(f64, usize)> = (0..3)
            .map(|r| ((queries.row(0) - train.row(r)).norm_squared(), r))
            .collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<usize> = pairs.iter().map(|&(_, r)| r).collect();
        assert_eq!(g.neighbors(0), expected.as_slice());
    }

    #[test]
    fn oos_kernel_duplicate_query_finds_source_row() {
        let kernel = Kernel::new(KernelKind::Rbf, 0.6).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let train = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
        let gram = gram_from_rows(&kernel, &train).unwrap();
        let query = train.row(4).transpose();
        let (kxx, kvec) =
            crate::kernels::cross_kernel_oos(&kernel, query.as_view(), &train, gram.stats())
                .unwrap();
        let diag = DVector::from_fn(6, |i, _| gram.matrix()[(i, i)]);
        let list = knn_oos_kernel(kxx, &kvec, &diag, 3).unwrap();
        assert_eq!(list[0], 4);
    }

    #[test]
    fn normalized_centered_gram_distances_are_finite_and_nonnegative() {
        let kernel = Kernel::new(KernelKind::Sigmoid, 0.25).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let rows = DMatrix::from_fn(7, 3, |_, _| rng.random_range(-1.0..1.0));
        let gram = gram_from_rows(&kernel, &rows).unwrap();
        let g = knn_kernel(&gram, 3).unwrap();
        for j in 0..7 {
            for &r in g.neighbors(j) {
                let d = kernel_distance(gram.matrix(), j, r);
                assert!(d.is_finite() && d >= 0.0);
            }
        }
    }
}
