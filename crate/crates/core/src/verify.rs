//! Self-check suites behind the `verify` command: analytic gradients against
//! central finite differences, and the embedding projection contract.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::embed::{project_constraints, EmbedOperators};
use crate::error::Result;
use crate::reconstruct::{kernel_gradient, kernel_objective, recon_gradient, recon_objective};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst error observed across the check's trials.
    pub worst: f64,
    pub tolerance: f64,
}

/// Report of all checks; `passed` is the conjunction.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-5;
const PROJ_TOL: f64 = 1e-9;
const TRIALS: usize = 50;

fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, w: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(w.len());
    let mut probe = w.clone();
    for i in 0..w.len() {
        probe[i] = w[i] + FD_STEP;
        let plus = f(&probe);
        probe[i] = w[i] - FD_STEP;
        let minus = f(&probe);
        probe[i] = w[i];
        g[i] = (plus - minus) / (2.0 * FD_STEP);
    }
    g
}

fn centered_cols(rng: &mut ChaCha12Rng, q: usize, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(q, k, |_, _| rng.random_range(-0.5..0.5));
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.iter_mut().for_each(|v| *v -= mean);
    }
    m
}

fn centered_vec(rng: &mut ChaCha12Rng, q: usize) -> DVector<f64> {
    let v = DVector::from_fn(q, |_, _| rng.random_range(-0.5..0.5));
    let m = v.mean();
    v.map(|x| x - m)
}

/// Reconstruction gradient vs finite differences at seeded random points.
pub fn check_recon_gradient(seed: u64) -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let q = rng.random_range(4..16);
        let k = rng.random_range(1..8);
        let c = 9e-4 * (q - 1) as f64;
        let x = centered_vec(&mut rng, q);
        let xmat = centered_cols(&mut rng, q, k);
        let w = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        let analytic = recon_gradient(&w, &x, &xmat, c);
        let fd = fd_gradient(|v| recon_objective(v, &x, &xmat, c), &w);
        worst = worst.max((&analytic - &fd).norm() / fd.norm().max(1e-12));
    }
    CheckResult {
        name: "reconstruction gradient vs finite differences",
        passed: worst < FD_TOL,
        worst,
        tolerance: FD_TOL,
    }
}

/// Kernel reconstruction gradient vs finite differences.
pub fn check_kernel_gradient(seed: u64) -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let k = rng.random_range(1..8);
        let c = 0.0135;
        let factors = DMatrix::from_fn(k + 2, k, |_, _| rng.random_range(-1.0..1.0));
        let kmat = factors.transpose() * &factors;
        let kvec = DVector::from_fn(k, |_, _| rng.random_range(-0.5..0.5));
        let kxx = rng.random_range(0.1..2.0);
        let w = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        let analytic = kernel_gradient(&w, kxx, &kvec, &kmat, c);
        let fd = fd_gradient(|v| kernel_objective(v, kxx, &kvec, &kmat, c), &w);
        worst = worst.max((&analytic - &fd).norm() / fd.norm().max(1e-12));
    }
    CheckResult {
        name: "kernel reconstruction gradient vs finite differences",
        passed: worst < FD_TOL,
        worst,
        tolerance: FD_TOL,
    }
}

/// Embedding objective gradient vs finite differences.
pub fn check_embedding_gradient(seed: u64) -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(2));
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let n = rng.random_range(5..12);
        let p = rng.random_range(1..4);
        let owner = rng.random_range(0..n);
        let k = rng.random_range(1..(n - 1).min(5));
        let mut idx: Vec<usize> = (0..n).filter(|&r| r != owner).collect();
        let mut entries = Vec::new();
        for _ in 0..k {
            let pick = rng.random_range(0..idx.len());
            entries.push((idx.swap_remove(pick), rng.random_range(-1.0..1.0)));
        }
        let ops = EmbedOperators::from_raw_parts(owner, entries);
        let y = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let c = 0.0135;
        let analytic = ops.theta_gradient(&y, c);
        let mut fd = DMatrix::zeros(n, p);
        let mut probe = y.clone();
        for r in 0..n {
            for col in 0..p {
                probe[(r, col)] = y[(r, col)] + FD_STEP;
                let plus = ops.theta(&probe, c);
                probe[(r, col)] = y[(r, col)] - FD_STEP;
                let minus = ops.theta(&probe, c);
                probe[(r, col)] = y[(r, col)];
                fd[(r, col)] = (plus - minus) / (2.0 * FD_STEP);
            }
        }
        worst = worst.max((&analytic - &fd).norm() / fd.norm().max(1e-12));
    }
    CheckResult {
        name: "embedding gradient vs finite differences",
        passed: worst < FD_TOL,
        worst,
        tolerance: FD_TOL,
    }
}

/// Projection contract: both constraints hold and re-projection is stable.
pub fn check_projection(seed: u64) -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(3));
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for trial in 0..100 {
        let n = rng.random_range(5..=50);
        let p = rng.random_range(1..=5.min(n - 1));
        let a = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
        let v = match project_constraints(&a, seed.wrapping_add(trial)) {
            Ok(v) => v,
            Err(_) => {
                passed = false;
                continue;
            }
        };
        let mean_err = v.row_sum().abs().max();
        let cov = v.transpose() * &v / n as f64;
        let cov_err = (cov - DMatrix::identity(p, p)).abs().max();
        worst = worst.max(mean_err).max(cov_err);
        if mean_err >= PROJ_TOL || cov_err >= PROJ_TOL {
            passed = false;
        }
        let again = match project_constraints(&v, seed.wrapping_add(trial)) {
            Ok(v2) => v2,
            Err(_) => {
                passed = false;
                continue;
            }
        };
        let drift = (&v - &again).norm();
        if drift >= 1e-10 {
            passed = false;
        }
        worst = worst.max(drift);
    }
    CheckResult {
        name: "constraint projection contract",
        passed,
        worst,
        tolerance: PROJ_TOL,
    }
}

/// Runs every check with the given seed.
pub fn run_verify(seed: u64) -> Result<VerifyReport> {
    Ok(VerifyReport {
        checks: vec![
            check_recon_gradient(seed),
            check_kernel_gradient(seed),
            check_embedding_gradient(seed),
            check_projection(seed),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_on_default_seed() {
        let report = run_verify(0).unwrap();
        for check in &report.checks {
            assert!(
                check.passed,
                "{} failed: worst {} vs tolerance {}",
                check.name, check.worst, check.tolerance
            );
        }
        assert!(report.passed());
    }

    #[test]
    fn checks_pass_across_seeds() {
        for seed in [1u64, 42, 20260811] {
            assert!(run_verify(seed).unwrap().passed(), "seed {seed}");
        }
    }
}
