//! Unit-norm SSIM-distance reconstruction of a block from its neighbors,
//! solved by ADMM in input space or in kernel feature space.
//!
//! Each iteration takes one gradient step on the reconstruction objective plus
//! the quadratic penalty, projects the auxiliary variable onto the unit
//! sphere, and updates the scaled dual:
//!
//! ```text
//! w   <- w - eta * grad f(w) - eta * rho * (w - xi + u)
//! xi  <- (w + u) / |w + u|
//! u   <- u + w - xi
//! ```
//!
//! The same driver also reconstructs out-of-sample blocks from training
//! neighbors; only the inputs change.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Parameters of the ADMM solvers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdmmConfig {
    /// Penalty parameter rho > 0.
    pub rho: f64,
    /// Gradient-step learning rate eta > 0.
    pub eta: f64,
    pub max_iter: usize,
    /// Primal-residual tolerance.
    pub tol: f64,
    /// Seed for randomized initialization; a given seed makes the solve
    /// fully deterministic.
    pub seed: u64,
}

impl AdmmConfig {
    pub fn new(rho: f64, eta: f64, max_iter: usize, tol: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            rho,
            eta,
            max_iter,
            tol,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho <= 0.0 || self.eta <= 0.0 || self.tol <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "rho, eta, tol must be positive (rho={}, eta={}, tol={})",
                self.rho, self.eta, self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 0.1,
            eta: 0.1,
            max_iter: 2000,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// Result of a unit-norm reconstruction solve. `xi` is exactly unit-norm and
/// is the weight vector to use downstream.
#[derive(Debug, Clone)]
pub struct ReconstructionWeights {
    /// Last gradient-step iterate.
    pub w: DVector<f64>,
    /// Feasible (unit-norm) iterate; the returned weights.
    pub xi: DVector<f64>,
    /// Scaled dual variable.
    pub dual: DVector<f64>,
    pub iterations_run: usize,
    /// Primal residual |w - xi| at termination.
    pub final_residual: f64,
    pub converged: bool,
}

impl ReconstructionWeights {
    /// The unit-norm weight vector.
    pub fn weights(&self) -> &DVector<f64> {
        &self.xi
    }
}

/// Reconstruction objective in input space:
/// `(x'x + w'X'Xw - 2 w'X'x) / (x'x + w'X'Xw + c)`,
/// the SSIM distance between `x` and `Xw` for zero-mean columns.
pub fn recon_objective(w: &DVector<f64>, x: &DVector<f64>, xmat: &DMatrix<f64>, c: f64) -> f64 {
    let xw = xmat * w;
    let xtx = x.norm_squared();
    let wgw = xw.norm_squared();
    let cross = xw.dot(x);
    (xtx + wgw - 2.0 * cross) / (xtx + wgw + c)
}

/// Gradient of [`recon_objective`]:
/// `2 X'((1 - f(w)) Xw - x) / (x'x + w'X'Xw + c)`.
pub fn recon_gradient(
    w: &DVector<f64>,
    x: &DVector<f64>,
    xmat: &DMatrix<f64>,
    c: f64,
) -> DVector<f64> {
    let xw = xmat * w;
    let xtx = x.norm_squared();
    let wgw = xw.norm_squared();
    let den = xtx + wgw + c;
    let f = (xtx + wgw - 2.0 * xw.dot(x)) / den;
    let inner = xw * (1.0 - f) - x;
    (xmat.transpose() * inner) * (2.0 / den)
}

/// Reconstruction objective in feature space, from kernel pieces
/// `kxx = phi(x)'phi(x)`, `kvec = Phi(X)'phi(x)`, `kmat = Phi(X)'Phi(X)`.
pub fn kernel_objective(
    w: &DVector<f64>,
    kxx: f64,
    kvec: &DVector<f64>,
    kmat: &DMatrix<f64>,
    c: f64,
) -> f64 {
    let kw = kmat * w;
    let wkw = w.dot(&kw);
    (kxx + wkw - 2.0 * w.dot(kvec)) / (kxx + wkw + c)
}

/// Gradient of [`kernel_objective`]:
/// `2 ((1 - f(w)) K w - kvec) / (kxx + w'Kw + c)`.
pub fn kernel_gradient(
    w: &DVector<f64>,
    kxx: f64,
    kvec: &DVector<f64>,
    kmat: &DMatrix<f64>,
    c: f64,
) -> DVector<f64> {
    let kw = kmat * w;
    let wkw = w.dot(&kw);
    let den = kxx + wkw + c;
    let f = (kxx + wkw - 2.0 * w.dot(kvec)) / den;
    (kw * (1.0 - f) - kvec) * (2.0 / den)
}

/// Seeded random start on the unit sphere. A symmetric (uniform) start
/// cannot work in general: when neighbor columns coincide the objective
/// gradient is proportional to the all-ones vector, so a symmetric iterate
/// stays pinned to that ray forever and the iteration oscillates between the
/// two feasible points on it.
fn initial_point(k: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let w = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = w.norm();
    if norm > 0.0 {
        w / norm
    } else {
        DVector::from_element(k, 1.0 / (k as f64).sqrt())
    }
}

/// ADMM driver over a gradient oracle; `trace`, when given, records the `w`
/// iterate after every iteration.
fn solve_sphere_admm(
    k: usize,
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
    config: &AdmmConfig,
    mut trace: Option<&mut Vec<DVector<f64>>>,
) -> Result<ReconstructionWeights> {
    config.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter(
            "need at least one neighbor to reconstruct from".into(),
        ));
    }
    let mut w = initial_point(k, config.seed);
    let mut xi = w.clone();
    let mut dual = DVector::zeros(k);
    let mut residual = f64::MAX;
    let mut iterations_run = 0;
    let mut converged = false;
    for iter in 0..config.max_iter {
        let g = grad(&w);
        w -= config.eta * g + config.eta * config.rho * (&w - &xi + &dual);
        let wu = &w + &dual;
        let norm = wu.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Divergence { iteration: iter });
        }
        xi = wu / norm;
        dual += &w - &xi;
        residual = (&w - &xi).norm();
        iterations_run = iter + 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(w.clone());
        }
        if !residual.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }
        if residual <= config.tol {
            converged = true;
            break;
        }
    }
    Ok(ReconstructionWeights {
        w,
        xi,
        dual,
        iterations_run,
        final_residual: residual,
        converged,
    })
}

/// Solves the unit-norm SSIM reconstruction of `x` from the neighbor columns
/// of `xmat` (`q x k`).
///
/// The solver precomputes the quadratic pieces `x'x`, `X'x`, `X'X` and runs
/// the same core loop as the kernel solver; with the linear kernel the two
/// perform identical arithmetic, and per-iteration cost drops from O(qk) to
/// O(k^2) once q > k.
///
/// When a neighbor column equals `x` exactly, the matching one-hot vector is
/// the closed-form global minimizer (distance zero), so it is returned
/// without iterating; the surrounding SSIM valley is so flat there that the
/// gradient iteration would stall short of it.
pub fn solve_weights(
    x: &DVector<f64>,
    xmat: &DMatrix<f64>,
    c: f64,
    config: &AdmmConfig,
) -> Result<ReconstructionWeights> {
    check_input_dims(x, xmat)?;
    if let Some(r) = exact_match_column(x, xmat) {
        let mut onehot = DVector::zeros(xmat.ncols());
        onehot[r] = 1.0;
        return Ok(ReconstructionWeights {
            w: onehot.clone(),
            xi: onehot,
            dual: DVector::zeros(xmat.ncols()),
            iterations_run: 0,
            final_residual: 0.0,
            converged: true,
        });
    }
    let (kxx, kvec, kmat) = gram_pieces(x, xmat)?;
    solve_sphere_admm(
        kvec.len(),
        |w| kernel_gradient(w, kxx, &kvec, &kmat, c),
        config,
        None,
    )
}

/// Smallest index of a neighbor column identical to `x`, if any.
fn exact_match_column(x: &DVector<f64>, xmat: &DMatrix<f64>) -> Option<usize> {
    (0..xmat.ncols()).find(|&col| (0..x.len()).all(|row| xmat[(row, col)] == x[row]))
}

/// As [`solve_weights`], also returning the `w` iterate after every iteration.
pub fn solve_weights_traced(
    x: &DVector<f64>,
    xmat: &DMatrix<f64>,
    c: f64,
    config: &AdmmConfig,
) -> Result<(ReconstructionWeights, Vec<DVector<f64>>)> {
    let (kxx, kvec, kmat) = gram_pieces(x, xmat)?;
    let mut trace = Vec::new();
    let res = solve_sphere_admm(
        kvec.len(),
        |w| kernel_gradient(w, kxx, &kvec, &kmat, c),
        config,
        Some(&mut trace),
    )?;
    Ok((res, trace))
}

fn gram_pieces(x: &DVector<f64>, xmat: &DMatrix<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    check_input_dims(x, xmat)?;
    Ok((
        x.norm_squared(),
        xmat.transpose() * x,
        xmat.transpose() * xmat,
    ))
}

/// Feature-space solve from kernel pieces. `kmat` must be symmetric.
pub fn solve_weights_kernel(
    kxx: f64,
    kvec: &DVector<f64>,
    kmat: &DMatrix<f64>,
    c: f64,
    config: &AdmmConfig,
) -> Result<ReconstructionWeights> {
    check_kernel_input(kvec, kmat)?;
    solve_sphere_admm(
        kvec.len(),
        |w| kernel_gradient(w, kxx, kvec, kmat, c),
        config,
        None,
    )
}

/// As [`solve_weights_kernel`], also returning the iterate trace.
pub fn solve_weights_kernel_traced(
    kxx: f64,
    kvec: &DVector<f64>,
    kmat: &DMatrix<f64>,
    c: f64,
    config: &AdmmConfig,
) -> Result<(ReconstructionWeights, Vec<DVector<f64>>)> {
    check_kernel_input(kvec, kmat)?;
    let mut trace = Vec::new();
    let res = solve_sphere_admm(
        kvec.len(),
        |w| kernel_gradient(w, kxx, kvec, kmat, c),
        config,
        Some(&mut trace),
    )?;
    Ok((res, trace))
}

/// Reconstructs an out-of-sample block from its training neighbors; the
/// contract is identical to [`solve_weights`], with `xmat` holding training
/// neighbor columns.
pub fn solve_weights_oos(
    query: &DVector<f64>,
    train_neighbors: &DMatrix<f64>,
    c: f64,
    config: &AdmmConfig,
) -> Result<ReconstructionWeights> {
    solve_weights(query, train_neighbors, c, config)
}

fn check_input_dims(x: &DVector<f64>, xmat: &DMatrix<f64>) -> Result<()> {
    if xmat.nrows() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "neighbor matrix is {}x{}, block has length {}",
            xmat.nrows(),
            xmat.ncols(),
            x.len()
        )));
    }
    Ok(())
}

fn check_kernel_input(kvec: &DVector<f64>, kmat: &DMatrix<f64>) -> Result<()> {
    if kmat.nrows() != kmat.ncols() || kmat.nrows() != kvec.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel pieces disagree: kvec has {} entries, kmat is {}x{}",
            kvec.len(),
            kmat.nrows(),
            kmat.ncols()
        )));
    }
    let asym = (kmat - kmat.transpose()).abs().max();
    if asym > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "neighborhood kernel matrix is not symmetric (max |K - K'| = {asym:e})"
        )));
    }
    Ok(())
}
