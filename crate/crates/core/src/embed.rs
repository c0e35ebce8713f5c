//! Constrained embedding of one block index across all images: minimizes the
//! summed SSIM distances between each embedded block and its weighted
//! neighbor reconstruction, subject to zero column means and unit covariance
//! (`V'1 = 0`, `(1/n) V'V = I`).
//!
//! The ADMM step alternates one gradient step on the summed objective plus
//! penalty, a projection (column centering followed by an SVD with singular
//! values set to sqrt(n)), and a dual update. The per-term operators
//! `M = 1_j 1_j' + w w' - 2 1_j w'` and `Psi = M + 2 1_j w'` are rank-2 and
//! never materialized; every theta/gradient evaluation costs O((k+1) p).

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::reconstruct::AdmmConfig;

/// Reconstruction weights of one image scattered to image indices: at most
/// `k` nonzeros, never at the owner's own index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWeightRow {
    owner: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseWeightRow {
    pub fn new(owner: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.iter().any(|&(r, _)| r == owner) {
            return Err(Error::InvalidInput(format!(
                "weight row for image {owner} references itself"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if !entries.iter().all(|&(r, _)| seen.insert(r)) {
            return Err(Error::InvalidInput(format!(
                "duplicate neighbor index in weight row for image {owner}"
            )));
        }
        Ok(Self { owner, entries })
    }

    /// Scatters solved neighbor weights to their image indices.
    pub fn from_neighbors(owner: usize, neighbors: &[usize], weights: &DVector<f64>) -> Result<Self> {
        if neighbors.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} neighbors vs {} weights",
                neighbors.len(),
                weights.len()
            )));
        }
        Self::new(
            owner,
            neighbors.iter().copied().zip(weights.iter().copied()).collect(),
        )
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Dense length-`n` weight vector.
    pub fn to_dense(&self, n: usize) -> DVector<f64> {
        let mut w = DVector::zeros(n);
        for &(r, v) in &self.entries {
            w[r] = v;
        }
        w
    }
}

/// The rank-2 operators of one objective term, kept in factored form.
#[derive(Debug, Clone)]
pub struct EmbedOperators {
    owner: usize,
    entries: Vec<(usize, f64)>,
}

impl EmbedOperators {
    pub fn new(row: &SparseWeightRow) -> Self {
        Self {
            owner: row.owner,
            entries: row.entries.clone(),
        }
    }

    /// Builds operators from raw parts without the owner-exclusion check;
    /// useful for degenerate diagnostics such as a pure self-weight.
    pub fn from_raw_parts(owner: usize, entries: Vec<(usize, f64)>) -> Self {
        Self { owner, entries }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// `a = Y' 1_j` (the owner's embedding row).
    fn own_row(&self, y: &DMatrix<f64>) -> DVector<f64> {
        y.row(self.owner).transpose()
    }

    /// `u = Y' w` (weighted neighbor combination).
    fn weighted_row(&self, y: &DMatrix<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(y.ncols());
        for &(r, wv) in &self.entries {
            u.axpy(wv, &y.row(r).transpose(), 1.0);
        }
        u
    }

    /// Trace-ratio objective `tr(Y'MY) / (tr(Y'PsiY) + c)`.
    pub fn theta(&self, y: &DMatrix<f64>, c: f64) -> f64 {
        let a = self.own_row(y);
        let u = self.weighted_row(y);
        let num = (&a - &u).norm_squared();
        num / (a.norm_squared() + u.norm_squared() + c)
    }

    /// Gradient `(2 / (tr(Y'PsiY) + c)) (M_s - theta Psi) Y` accumulated into
    /// `out`, where `M_s` is the symmetric part of `M`. Only the symmetric
    /// part contributes to the trace, so this is the true derivative of
    /// [`theta`](Self::theta); writing the cross term one-sidedly would fail
    /// a finite-difference check.
    pub fn add_theta_gradient(&self, y: &DMatrix<f64>, c: f64, out: &mut DMatrix<f64>) {
        let a = self.own_row(y);
        let u = self.weighted_row(y);
        let den = a.norm_squared() + u.norm_squared() + c;
        let theta = (&a - &u).norm_squared() / den;
        let scale = 2.0 / den;
        // (M_s - theta Psi) Y = 1_j ((1-theta) a - u)' + w ((1-theta) u - a)'
        let own_term = (&a * (1.0 - theta) - &u) * scale;
        for p in 0..y.ncols() {
            out[(self.owner, p)] += own_term[p];
        }
        let nb_term = (&u * (1.0 - theta) - &a) * scale;
        for &(r, wv) in &self.entries {
            for p in 0..y.ncols() {
                out[(r, p)] += wv * nb_term[p];
            }
        }
    }

    pub fn theta_gradient(&self, y: &DMatrix<f64>, c: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(y.nrows(), y.ncols());
        self.add_theta_gradient(y, c, &mut out);
        out
    }

    /// Dense `M = 1_j 1_j' + w w' - 2 1_j w'` for oracle checks.
    pub fn dense_m(&self, n: usize) -> DMatrix<f64> {
        let one = onehot(self.owner, n);
        let w = SparseWeightRow {
            owner: self.owner,
            entries: self.entries.clone(),
        }
        .to_dense(n);
        &one * one.transpose() + &w * w.transpose() - (&one * w.transpose()) * 2.0
    }

    /// Dense `Psi = M + 2 1_j w'` for oracle checks.
    pub fn dense_psi(&self, n: usize) -> DMatrix<f64> {
        let one = onehot(self.owner, n);
        let w = SparseWeightRow {
            owner: self.owner,
            entries: self.entries.clone(),
        }
        .to_dense(n);
        &one * one.transpose() + &w * w.transpose()
    }
}

fn onehot(j: usize, n: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[j] = 1.0;
    v
}

/// Embedding solve output. `v` satisfies both constraints exactly and is the
/// embedding to use downstream.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    /// Last gradient-step iterate.
    pub y: DMatrix<f64>,
    /// Feasible iterate (zero column means, unit covariance).
    pub v: DMatrix<f64>,
    /// Scaled dual variable.
    pub dual: DMatrix<f64>,
    pub converged: bool,
    pub iterations_run: usize,
    /// Scaled Frobenius primal residual at termination.
    pub final_residual: f64,
    /// Summed objective at the feasible iterate, one entry per iteration.
    pub objective_trace: Vec<f64>,
}

impl EmbeddingMatrix {
    /// The feasible embedding; rows are the embedded blocks.
    pub fn embedding(&self) -> &DMatrix<f64> {
        &self.v
    }
}

/// Projects onto the constraint set: centers the columns, then rescales via
/// SVD so that `(1/n) V'V = I`. Column centering first keeps the output
/// orthogonal to the all-ones vector.
///
/// When the centered input has fewer than `p` independent columns the missing
/// left singular vectors are completed with seeded random directions made
/// orthogonal to the all-ones vector and to the kept columns.
pub fn project_constraints(a: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let (n, p) = a.shape();
    if p == 0 || n <= p {
        return Err(Error::InvalidParameter(format!(
            "projection needs n > p >= 1, got {n}x{p}"
        )));
    }
    let mut centered = a.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.iter_mut().for_each(|v| *v -= mean);
    }
    let svd = centered.svd(true, true);
    let mut u = svd.u.ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not produce V'".into()))?;
    // Columns with vanishing singular values carry no signal; replace them
    // with fresh directions orthogonal to 1 and to the kept columns.
    let sigma_max = svd.singular_values.max();
    let threshold = sigma_max.max(1.0) * 1e-12;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for j in 0..p {
        if svd.singular_values[j] > threshold {
            continue;
        }
        let col = complete_direction(&u, j, n, &mut rng)?;
        u.set_column(j, &col);
    }
    Ok(u * v_t * (n as f64).sqrt())
}

/// Draws a unit vector orthogonal to the all-ones vector and to every column
/// of `u` except column `skip`.
fn complete_direction(
    u: &DMatrix<f64>,
    skip: usize,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<DVector<f64>> {
    for _ in 0..64 {
        let mut cand = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mean = cand.mean();
        cand.iter_mut().for_each(|v| *v -= mean);
        for j in 0..u.ncols() {
            if j == skip {
                continue;
            }
            let col = u.column(j);
            let proj = cand.dot(&col);
            cand.axpy(-proj, &col.clone_owned(), 1.0);
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            return Ok(cand / norm);
        }
    }
    Err(Error::Numerical(
        "could not complete an orthonormal basis for the projection".into(),
    ))
}

/// Solves the constrained embedding for one block index by ADMM.
///
/// `rows` holds one scattered weight row per image; `c` is the SSIM distance
/// stabilizer inherited from the reconstruction stage.
pub fn solve_embedding(
    rows: &[SparseWeightRow],
    p: usize,
    c: f64,
    config: &AdmmConfig,
) -> Result<EmbeddingMatrix> {
    config.validate()?;
    let n = rows.len();
    if p == 0 || p >= n {
        return Err(Error::InvalidParameter(format!(
            "embedding dimension p={p} must satisfy 1 <= p < n={n}"
        )));
    }
    for (j, row) in rows.iter().enumerate() {
        if row.owner != j {
            return Err(Error::InvalidInput(format!(
                "weight row {j} claims owner {}",
                row.owner
            )));
        }
        if row.entries.iter().any(|&(r, _)| r >= n) {
            return Err(Error::InvalidInput(format!(
                "weight row {j} references an image outside 0..{n}"
            )));
        }
    }
    let ops: Vec<EmbedOperators> = rows.iter().map(EmbedOperators::new).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let init = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut y = project_constraints(&init, config.seed)?;
    let mut v = y.clone();
    let mut dual = DMatrix::zeros(n, p);

    let scale = ((n * p) as f64).sqrt();
    let mut objective_trace = Vec::new();
    let mut residual = f64::MAX;
    let mut converged = false;
    let mut iterations_run = 0;
    for iter in 0..config.max_iter {
        let mut grad = DMatrix::zeros(n, p);
        for op in &ops {
            op.add_theta_gradient(&y, c, &mut grad);
        }
        grad += (&y - &v + &dual) * config.rho;
        y -= grad * config.eta;
        v = project_constraints(&(&y + &dual), config.seed)?;
        dual += &y - &v;
        residual = (&y - &v).norm() / scale;
        iterations_run = iter + 1;
        if !residual.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }
        objective_trace.push(ops.iter().map(|op| op.theta(&v, c)).sum());
        if residual <= config.tol {
            converged = true;
            break;
        }
    }
    Ok(EmbeddingMatrix {
        y,
        v,
        dual,
        converged,
        iterations_run,
        final_residual: residual,
        objective_trace,
    })
}

/// Out-of-sample embedding: the weighted combination of the embeddings of the
/// query's training neighbors (`neighbor_embeddings` is `k x p`).
pub fn embed_oos(weights: &DVector<f64>, neighbor_embeddings: &DMatrix<f64>) -> Result<DVector<f64>> {
    if weights.len() != neighbor_embeddings.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights vs {} neighbor embeddings",
            weights.len(),
            neighbor_embeddings.nrows()
        )));
    }
    Ok(neighbor_embeddings.transpose() * weights)
}
