//! Closed-form locally linear embedding and its kernel variant, used both as
//! comparison baselines and as oracles for the graph/embedding plumbing.
//!
//! Weights solve `(G + eps I) w = 1` normalized to sum one, where `G` is the
//! local difference gram; the embedding takes the bottom non-null
//! eigenvectors of `(I - W)'(I - W)`. Unlike the block-wise solvers, these
//! operate on whole data vectors.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Sum-to-one reconstruction weights of one point from its `k` neighbors.
#[derive(Debug, Clone)]
pub struct LleWeights {
    /// The weight vector; entries sum to 1.
    pub weights: DVector<f64>,
    /// Tikhonov ridge added to the local gram (0 when it was invertible).
    pub regularization: f64,
}

/// Eigenvector embedding of all points.
#[derive(Debug, Clone)]
pub struct LleEmbedding {
    /// `n x p`; rows are embedded points.
    pub y: DMatrix<f64>,
    /// Eigenvalues of the kept columns, ascending.
    pub eigenvalues: DVector<f64>,
}

/// Solves the sum-to-one weight system for a local gram matrix.
fn solve_local_gram(mut g: DMatrix<f64>) -> Result<LleWeights> {
    let k = g.nrows();
    let ones = DVector::from_element(k, 1.0);
    let mut regularization = 0.0;
    let solved = match Cholesky::new(g.clone()) {
        Some(chol) => chol.solve(&ones),
        None => {
            regularization = 1e-3 * g.trace() / k as f64;
            if regularization <= 0.0 {
                // A zero-trace gram means every neighbor difference vanished.
                regularization = 1e-12;
            }
            for i in 0..k {
                g[(i, i)] += regularization;
            }
            Cholesky::new(g)
                .ok_or_else(|| {
                    Error::Numerical("local gram is singular even after regularization".into())
                })?
                .solve(&ones)
        }
    };
    let total = solved.sum();
    if total.abs() < 1e-300 || !total.is_finite() {
        return Err(Error::Numerical(
            "weight normalization degenerate (sum of unnormalized weights is zero)".into(),
        ));
    }
    Ok(LleWeights {
        weights: solved / total,
        regularization,
    })
}

/// Reconstruction weights of `x` from the neighbor columns of `xmat` (`d x k`).
pub fn lle_weights(x: &DVector<f64>, xmat: &DMatrix<f64>) -> Result<LleWeights> {
    let k = xmat.ncols();
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one neighbor".into()));
    }
    if xmat.nrows() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} entries, neighbors have {}",
            x.len(),
            xmat.nrows()
        )));
    }
    // G = (x 1' - X)' (x 1' - X)
    let mut diff = DMatrix::zeros(x.len(), k);
    for c in 0..k {
        for r in 0..x.len() {
            diff[(r, c)] = x[r] - xmat[(r, c)];
        }
    }
    solve_local_gram(diff.transpose() * diff)
}

/// Kernel-space weights: the local gram entry is
/// `k(x,x) - k(x, a-th nb) - k(x, b-th nb) + k(a-th nb, b-th nb)`.
pub fn klle_weights(kxx: f64, kvec: &DVector<f64>, kmat: &DMatrix<f64>) -> Result<LleWeights> {
    let k = kvec.len();
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one neighbor".into()));
    }
    if kmat.nrows() != k || kmat.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "kernel pieces disagree: kvec has {k} entries, kmat is {}x{}",
            kmat.nrows(),
            kmat.ncols()
        )));
    }
    let g = DMatrix::from_fn(k, k, |a, b| kxx - kvec[a] - kvec[b] + kmat[(a, b)]);
    solve_local_gram(g)
}

/// Embeds all points from the `n x n` scattered weight matrix (row `j` holds
/// the weights of point `j`): eigendecomposes `(I - W)'(I - W)`, drops the
/// null eigenvector, and keeps the next `p` as columns.
pub fn lle_embed(w: &DMatrix<f64>, p: usize) -> Result<LleEmbedding> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix must be square, got {}x{}",
            n,
            w.ncols()
        )));
    }
    if p == 0 || p >= n {
        return Err(Error::InvalidParameter(format!(
            "embedding dimension p={p} must satisfy 1 <= p < n={n}"
        )));
    }
    let iw = DMatrix::identity(n, n) - w;
    let m = iw.transpose() * &iw;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // order[0] is the (near-)zero eigenvalue with constant eigenvector.
    let kept = &order[1..=p];
    let mut y = DMatrix::zeros(n, p);
    let mut eigenvalues = DVector::zeros(p);
    for (col, &idx) in kept.iter().enumerate() {
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        // Sign convention: largest-magnitude entry positive.
        let mut max_abs = 0.0;
        let mut max_val = 0.0;
        for &e in v.iter() {
            if e.abs() > max_abs {
                max_abs = e.abs();
                max_val = e;
            }
        }
        if max_val < 0.0 {
            v = -v;
        }
        y.set_column(col, &v);
        eigenvalues[col] = eig.eigenvalues[idx];
    }
    Ok(LleEmbedding { y, eigenvalues })
}

/// Out-of-sample embedding: weights of the query against its training
/// neighbors, then the weighted sum of those neighbors' embedding rows
/// (`neighbor_embeddings` is `k x p`).
pub fn lle_oos(
    query: &DVector<f64>,
    train_neighbors: &DMatrix<f64>,
    neighbor_embeddings: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let w = lle_weights(query, train_neighbors)?;
    combine(&w, neighbor_embeddings)
}

/// Kernel-space out-of-sample embedding from kernel pieces.
pub fn klle_oos(
    kxx: f64,
    kvec: &DVector<f64>,
    kmat: &DMatrix<f64>,
    neighbor_embeddings: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let w = klle_weights(kxx, kvec, kmat)?;
    combine(&w, neighbor_embeddings)
}

fn combine(w: &LleWeights, neighbor_embeddings: &DMatrix<f64>) -> Result<DVector<f64>> {
    if neighbor_embeddings.nrows() != w.weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights vs {} neighbor embeddings",
            w.weights.len(),
            neighbor_embeddings.nrows()
        )));
    }
    Ok(neighbor_embeddings.transpose() * &w.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Kernel, KernelKind};
    use crate::neighbors::knn_euclidean;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn weights_sum_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..20 {
            let d = rng.random_range(3..8);
            let k = rng.random_range(1..5);
            let x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let xmat = DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
            let w = lle_weights(&x, &xmat).unwrap();
            assert!((w.weights.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn midpoint_query_gets_half_half() {
        let a = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        let b = DVector::from_row_slice(&[2.0, 2.0, 3.0]);
        let mid = (&a + &b) / 2.0;
        let mut xmat = DMatrix::zeros(3, 2);
        xmat.set_column(0, &a);
        xmat.set_column(1, &b);
        let w = lle_weights(&mid, &xmat).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-6, "{}", w.weights[0]);
        assert!((w.weights[1] - 0.5).abs() < 1e-6, "{}", w.weights[1]);
    }

    #[test]
    fn single_neighbor_forces_unit_weight() {
        let x = DVector::from_row_slice(&[1.0, 2.0]);
        let xmat = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        let w = lle_weights(&x, &xmat).unwrap();
        assert!((w.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_hull_point_has_tiny_residual() {
        // Query exactly in the affine hull of three independent neighbors.
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let xmat = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let alpha = DVector::from_row_slice(&[0.2, 0.3, 0.5]);
        let x = &xmat * &alpha;
        let w = lle_weights(&x, &xmat).unwrap();
        assert_eq!(w.regularization, 0.0);
        let residual = (&x - &xmat * &w.weights).norm();
        assert!(residual < 1e-8, "residual {residual}");
    }

    #[test]
    fn embedding_columns_are_eigenvectors() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 12;
        let points = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let graph = knn_euclidean(&points, 4).unwrap();
        let mut w = DMatrix::zeros(n, n);
        for j in 0..n {
            let nbs = graph.neighbors(j);
            let mut xmat = DMatrix::zeros(3, 4);
            for (c, &r) in nbs.iter().enumerate() {
                xmat.set_column(c, &points.row(r).transpose());
            }
            let lw = lle_weights(&points.row(j).transpose(), &xmat).unwrap();
            for (c, &r) in nbs.iter().enumerate() {
                w[(j, r)] = lw.weights[c];
            }
        }
        let emb = lle_embed(&w, 2).unwrap();
        let iw = DMatrix::identity(n, n) - &w;
        let m = iw.transpose() * &iw;
        for col in 0..2 {
            let y = emb.y.column(col);
            let lambda = emb.eigenvalues[col];
            let resid = (&m * y - y * lambda).norm();
            assert!(resid < 1e-8, "column {col}: residual {resid}");
            // Kept eigenvalues lie above the discarded null one.
            assert!(lambda > 1e-13);
        }
        // Kept columns exclude the constant null direction (up to the
        // eigensolver's mixing across a small spectral gap) and are mutually
        // orthogonal.
        let ones = DVector::from_element(n, 1.0);
        for col in 0..2 {
            assert!(emb.y.column(col).dot(&ones).abs() < 1e-6);
        }
        assert!(emb.y.column(0).dot(&emb.y.column(1)).abs() < 1e-8);
    }

    #[test]
    fn klle_with_linear_kernel_equals_lle() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..20 {
            let d = rng.random_range(3..7);
            let k = rng.random_range(1..4);
            let x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let xmat = DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
            let direct = lle_weights(&x, &xmat).unwrap();
            let kxx = x.norm_squared();
            let kvec = xmat.transpose() * &x;
            let kmat = xmat.transpose() * &xmat;
            let viakernel = klle_weights(kxx, &kvec, &kmat).unwrap();
            assert!((direct.weights - viakernel.weights).norm() < 1e-10);
        }
    }

    #[test]
    fn klle_rbf_matches_scalar_formula() {
        let kernel = Kernel::new(KernelKind::Rbf, 0.7).unwrap();
        let x = DVector::from_row_slice(&[0.1, 0.4]);
        let n1 = DVector::from_row_slice(&[0.3, 0.2]);
        let n2 = DVector::from_row_slice(&[-0.2, 0.5]);
        let kxx = kernel.eval(x.as_view(), x.as_view());
        let kvec = DVector::from_row_slice(&[
            kernel.eval(x.as_view(), n1.as_view()),
            kernel.eval(x.as_view(), n2.as_view()),
        ]);
        let kmat = DMatrix::from_row_slice(
            2,
            2,
            &[
                kernel.eval(n1.as_view(), n1.as_view()),
                kernel.eval(n1.as_view(), n2.as_view()),
                kernel.eval(n2.as_view(), n1.as_view()),
                kernel.eval(n2.as_view(), n2.as_view()),
            ],
        );
        let w = klle_weights(kxx, &kvec, &kmat).unwrap();
        // Scalar oracle: G(a,b) = kxx - kvec[a] - kvec[b] + kmat[a][b], then
        // w = G^-1 1 normalized.
        let g = DMatrix::from_fn(2, 2, |a, b| kxx - kvec[a] - kvec[b] + kmat[(a, b)]);
        let ginv = g.try_inverse().unwrap();
        let raw = &ginv * DVector::from_element(2, 1.0);
        let oracle = &raw / raw.sum();
        assert!((&w.weights - oracle).norm() < 1e-9);
        assert!((w.weights.sum() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn oos_convex_combination_recovers_weights() {
        // A query on the segment between two neighbors makes their difference
        // vectors parallel, so the local gram is singular and the ridge
        // bounds the deviation from the exact affine weights at ~1e-3.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let xmat = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let query = xmat.column(0) * 0.3 + xmat.column(1) * 0.7;
        let emb = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let y = lle_oos(&query.clone_owned(), &xmat, &emb).unwrap();
        assert!((y[0] - 0.3).abs() < 5e-3, "{}", y[0]);
        assert!((y[1] - 0.7).abs() < 5e-3, "{}", y[1]);
        assert!((y[0] + y[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn oos_duplicate_query_approaches_one_hot() {
        // The ridge added for the singular gram bounds how hard the duplicate
        // neighbor can dominate; the limit is qualitative, not 1e-6 exact.
        let query = DVector::from_row_slice(&[0.4, -0.2, 0.1]);
        let far = DVector::from_row_slice(&[5.0, 4.0, -3.0]);
        let mut xmat = DMatrix::zeros(3, 2);
        xmat.set_column(0, &query);
        xmat.set_column(1, &far);
        let w = lle_weights(&query, &xmat).unwrap();
        assert!(w.regularization > 0.0);
        assert!(w.weights[0] > 0.99, "got {}", w.weights[0]);
    }

    #[test]
    fn klle_linear_reproduces_lle_embedding() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let n = 10;
        let points = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
        let graph = knn_euclidean(&points, 3).unwrap();
        let mut w_lle = DMatrix::zeros(n, n);
        let mut w_klle = DMatrix::zeros(n, n);
        for j in 0..n {
            let nbs = graph.neighbors(j);
            let mut xmat = DMatrix::zeros(4, 3);
            for (c, &r) in nbs.iter().enumerate() {
                xmat.set_column(c, &points.row(r).transpose());
            }
            let x = points.row(j).transpose();
            let a = lle_weights(&x, &xmat).unwrap();
            let kxx = x.norm_squared();
            let kvec = xmat.transpose() * &x;
            let kmat = xmat.transpose() * &xmat;
            let b = klle_weights(kxx, &kvec, &kmat).unwrap();
            for (c, &r) in nbs.iter().enumerate() {
                w_lle[(j, r)] = a.weights[c];
                w_klle[(j, r)] = b.weights[c];
            }
        }
        assert!((&w_lle - &w_klle).abs().max() < 1e-10);
        let e1 = lle_embed(&w_lle, 2).unwrap();
        let e2 = lle_embed(&w_klle, 2).unwrap();
        assert!((&e1.y - &e2.y).abs().max() < 1e-8);
    }
}
