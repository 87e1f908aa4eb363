use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{MatrixFreeOperator, Result, SpectralError, SymmetricSpectrum};
use crate::rng::{seeded, standard_normal_vec};

/// Residual norm, relative to the largest recurrence coefficient seen, at
/// which the Krylov space is declared invariant.
const BREAKDOWN_RELATIVE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosConfig {
    pub steps: usize,
    pub reorthogonalize: bool,
    pub seed: u64,
    /// Ritz pairs with residual bound under `tolerance · max(1, |λ|)` count
    /// as converged.
    pub tolerance: f64,
    pub compute_eigenvectors: bool,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        LanczosConfig {
            steps: 100,
            reorthogonalize: true,
            seed: 0,
            tolerance: 1e-8,
            compute_eigenvectors: true,
        }
    }
}

impl LanczosConfig {
    pub fn with_steps(steps: usize) -> Self {
        LanczosConfig { steps, ..Default::default() }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Lanczos tridiagonalization from a seeded Gaussian start vector.
///
/// Returns the Ritz values (largest first) with per-pair residual bounds
/// `|β_m · s_{m,i}|`. When the recurrence hits an invariant subspace before
/// `cfg.steps` iterations the spectrum is returned with `truncated() == true`
/// and holds only the Ritz pairs found so far.
pub fn lanczos_topk(op: &dyn MatrixFreeOperator, cfg: &LanczosConfig) -> Result<SymmetricSpectrum> {
    let n = op.dim();
    if n == 0 {
        return Err(SpectralError::InvalidConfig("operator dimension is zero".into()));
    }
    if cfg.steps == 0 || cfg.steps > n {
        return Err(SpectralError::InvalidConfig(format!(
            "steps must be in 1..={n}, got {}",
            cfg.steps
        )));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(SpectralError::InvalidConfig(format!(
            "tolerance must be positive, got {}",
            cfg.tolerance
        )));
    }

    let mut q = standard_normal_vec(&mut seeded(cfg.seed), n);
    let norm = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= norm);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cfg.steps);
    let mut alphas = Vec::with_capacity(cfg.steps);
    let mut betas: Vec<f64> = Vec::with_capacity(cfg.steps);
    let mut scale = 0.0_f64;
    let mut last_beta = 0.0;
    let mut truncated = false;
    let mut w = vec![0.0; n];

    basis.push(q);
    for j in 0..cfg.steps {
        op.apply(&basis[j], &mut w);
        if w.iter().any(|x| !x.is_finite()) {
            return Err(SpectralError::InvalidInput(format!(
                "operator produced a non-finite value at Lanczos step {j}"
            )));
        }
        let mut alpha = dot(&basis[j], &w);
        axpy(-alpha, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        if cfg.reorthogonalize {
            // two classical Gram-Schmidt sweeps
            for _ in 0..2 {
                for (i, qi) in basis.iter().enumerate() {
                    let c = dot(qi, &w);
                    axpy(-c, qi, &mut w);
                    if i == j {
                        alpha += c;
                    }
                }
            }
        }
        alphas.push(alpha);
        let beta = dot(&w, &w).sqrt();
        scale = scale.max(alpha.abs()).max(beta);
        last_beta = beta;
        if j + 1 == cfg.steps {
            break;
        }
        if beta <= BREAKDOWN_RELATIVE * scale {
            truncated = true;
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }

    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let ritz: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let s = eig.eigenvectors.select_columns(order.iter());
    let residuals: Vec<f64> = (0..m).map(|i| (last_beta * s[(m - 1, i)]).abs()).collect();

    let vectors = if cfg.compute_eigenvectors {
        let flat: Vec<f64> = basis.iter().take(m).flat_map(|v| v.iter().copied()).collect();
        let qmat = DMatrix::from_vec(n, m, flat);
        Some(qmat * &s)
    } else {
        None
    };

    Ok(SymmetricSpectrum::new(ritz, vectors, n)?.with_lanczos_metadata(truncated, residuals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{dense_eigvalsh, DenseOperator};
    use nalgebra::DVector;

    fn random_symmetric(k: usize, seed: u64) -> DMatrix<f64> {
        let m = DMatrix::from_vec(k, k, standard_normal_vec(&mut seeded(seed), k * k));
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn isolated_dominant_eigenvalues() {
        let mut diag = vec![0.1; 50];
        diag[0] = 10.0;
        diag[1] = 5.0;
        diag[2] = 1.0;
        let a = DMatrix::from_diagonal(&DVector::from_vec(diag));
        let s = lanczos_topk(&DenseOperator::new(&a), &LanczosConfig::with_steps(10)).unwrap();
        assert!((s.eigenvalues()[0] - 10.0).abs() < 1e-8);
        assert!((s.eigenvalues()[1] - 5.0).abs() < 1e-8);
    }

    #[test]
    fn identity_breaks_down_after_one_step() {
        let a = DMatrix::<f64>::identity(30, 30);
        let s = lanczos_topk(&DenseOperator::new(&a), &LanczosConfig::with_steps(5)).unwrap();
        assert!(s.truncated());
        assert!(!s.is_empty());
        assert!(s.eigenvalues().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn full_run_matches_dense() {
        let a = random_symmetric(100, 5);
        let a = a.tr_mul(&a) + DMatrix::identity(100, 100);
        let dense = dense_eigvalsh(&a).unwrap();
        let s = lanczos_topk(&DenseOperator::new(&a), &LanczosConfig::with_steps(100)).unwrap();
        assert_eq!(s.len(), 100);
        for (x, y) in s.eigenvalues().iter().zip(dense.eigenvalues()) {
            assert!((x - y).abs() <= 1e-6 * y.abs(), "{x} vs {y}");
        }
    }

    #[test]
    fn converged_pairs_have_small_true_residual() {
        let a = random_symmetric(80, 9);
        let cfg = LanczosConfig { steps: 40, ..Default::default() };
        let s = lanczos_topk(&DenseOperator::new(&a), &cfg).unwrap();
        let vecs = s.eigenvectors().unwrap();
        let converged = s.converged_indices(cfg.tolerance);
        assert!(!converged.is_empty());
        for i in converged {
            let v = vecs.column(i);
            let r = (&a * v - v * s.eigenvalues()[i]).norm();
            // the bound is exact up to loss of orthogonality, which reorthogonalization removes
            assert!(r <= 10.0 * cfg.tolerance * s.eigenvalues()[i].abs().max(1.0), "residual {r}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = random_symmetric(40, 1);
        let cfg = LanczosConfig { steps: 15, seed: 99, ..Default::default() };
        let x = lanczos_topk(&DenseOperator::new(&a), &cfg).unwrap();
        let y = lanczos_topk(&DenseOperator::new(&a), &cfg).unwrap();
        let bits = |s: &SymmetricSpectrum| s.eigenvalues().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&x), bits(&y));
        let other = lanczos_topk(&DenseOperator::new(&a), &LanczosConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(bits(&x), bits(&other));
    }

    #[test]
    fn rejects_bad_step_counts() {
        let a = DMatrix::<f64>::identity(4, 4);
        let op = DenseOperator::new(&a);
        assert!(lanczos_topk(&op, &LanczosConfig::with_steps(0)).is_err());
        assert!(lanczos_topk(&op, &LanczosConfig::with_steps(5)).is_err());
    }

    #[test]
    fn ritz_vectors_are_orthonormal() {
        let a = random_symmetric(60, 3);
        let s = lanczos_topk(&DenseOperator::new(&a), &LanczosConfig::with_steps(30)).unwrap();
        assert!(s.orthonormality_defect().unwrap() < 1e-8);
    }
}
