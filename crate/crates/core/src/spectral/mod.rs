//! Symmetric eigencomputation and the effective-dimensionality functional.
//!
//! ```text
//! N_eff(A, z) = Σ_i λ_i / (λ_i + z)
//! ```
//!
//! Eigenvalues much larger than `z` contribute roughly one, eigenvalues much
//! smaller contribute roughly zero, so the sum counts the directions the
//! curvature (or the data) has pinned down relative to the regularizer.
//!
//! Spectra come from two places: [`dense_eigh`] for matrices small enough to
//! hold in memory, and [`lanczos_topk`] for apply-only operators such as a
//! network Hessian.

mod dense;
mod lanczos;
mod operator;

pub use dense::{dense_eigh, dense_eigvalsh};
pub use lanczos::{lanczos_topk, LanczosConfig};
pub use operator::{max_asymmetry, DenseOperator, FnOperator, MatrixFreeOperator};

use nalgebra::DMatrix;
use thiserror::Error;

/// Relative threshold below which an eigenvalue counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("matrix is not symmetric: max |A - A^T| = {max_asymmetry:e} exceeds {allowed:e}")]
    SymmetryViolation { max_asymmetry: f64, allowed: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("regularizer z must be positive and finite, got {0}")]
    InvalidRegularizer(f64),

    #[error("eigenvalue {eigenvalue} at index {index} equals -z; effective dimensionality has a pole")]
    Pole { index: usize, eigenvalue: f64 },

    #[error("invalid Lanczos configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Largest absolute difference `|A_ij − A_ji|` of a square matrix.
pub fn max_asymmetry_dense(matrix: &DMatrix<f64>) -> f64 {
    operator::dense_asymmetry(matrix)
}

/// Eigenvalues of a symmetric operator, sorted non-increasing, with optional
/// orthonormal eigenvectors stored as matrix columns in the same order.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: Option<DMatrix<f64>>,
    source_dim: usize,
    truncated: bool,
    residual_bounds: Option<Vec<f64>>,
}

impl SymmetricSpectrum {
    /// Builds a spectrum, sorting eigenpairs into non-increasing order.
    pub fn new(
        eigenvalues: Vec<f64>,
        eigenvectors: Option<DMatrix<f64>>,
        source_dim: usize,
    ) -> Result<Self> {
        if source_dim == 0 {
            return Err(SpectralError::InvalidInput("source dimension must be positive".into()));
        }
        if eigenvalues.len() > source_dim {
            return Err(SpectralError::InvalidInput(format!(
                "{} eigenvalues exceed ambient dimension {source_dim}",
                eigenvalues.len()
            )));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(SpectralError::InvalidInput("non-finite eigenvalue".into()));
        }
        if let Some(vecs) = &eigenvectors {
            if vecs.nrows() != source_dim || vecs.ncols() != eigenvalues.len() {
                return Err(SpectralError::InvalidInput(format!(
                    "eigenvector block is {}x{}, expected {}x{}",
                    vecs.nrows(),
                    vecs.ncols(),
                    source_dim,
                    eigenvalues.len()
                )));
            }
        }
        let mut spectrum = SymmetricSpectrum {
            eigenvalues,
            eigenvectors,
            source_dim,
            truncated: false,
            residual_bounds: None,
        };
        spectrum.sort_descending();
        Ok(spectrum)
    }

    pub fn from_eigenvalues(eigenvalues: Vec<f64>, source_dim: usize) -> Result<Self> {
        Self::new(eigenvalues, None, source_dim)
    }

    fn sort_descending(&mut self) {
        let n = self.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.eigenvalues[b].total_cmp(&self.eigenvalues[a]));
        if order.iter().enumerate().all(|(i, &j)| i == j) {
            return;
        }
        self.eigenvalues = order.iter().map(|&i| self.eigenvalues[i]).collect();
        if let Some(vecs) = &self.eigenvectors {
            self.eigenvectors = Some(vecs.select_columns(order.iter()));
        }
        if let Some(res) = &self.residual_bounds {
            self.residual_bounds = Some(order.iter().map(|&i| res[i]).collect());
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> Option<&DMatrix<f64>> {
        self.eigenvectors.as_ref()
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// True when an iterative solver stopped early on an invariant subspace.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Per-pair bounds on `‖A v − λ v‖`, when produced by Lanczos.
    pub fn residual_bounds(&self) -> Option<&[f64]> {
        self.residual_bounds.as_deref()
    }

    pub(crate) fn with_lanczos_metadata(mut self, truncated: bool, residuals: Vec<f64>) -> Self {
        self.truncated = truncated;
        self.residual_bounds = Some(residuals);
        self.sort_descending();
        self
    }

    pub fn without_eigenvectors(mut self) -> Self {
        self.eigenvectors = None;
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Number of eigenvalues above [`RANK_TOLERANCE`] relative to the largest.
    pub fn rank(&self) -> usize {
        let threshold = RANK_TOLERANCE * self.max_abs();
        self.eigenvalues.iter().filter(|v| v.abs() > threshold).count()
    }

    /// Maximum deviation of `VᵀV` from the identity, or `None` without vectors.
    pub fn orthonormality_defect(&self) -> Option<f64> {
        let v = self.eigenvectors.as_ref()?;
        let gram = v.tr_mul(v);
        let mut worst = 0.0_f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        Some(worst)
    }

    /// Indices of Ritz pairs whose residual bound is below `tol · max(1, |λ|)`.
    pub fn converged_indices(&self, tol: f64) -> Vec<usize> {
        match &self.residual_bounds {
            None => (0..self.eigenvalues.len()).collect(),
            Some(res) => res
                .iter()
                .zip(&self.eigenvalues)
                .enumerate()
                .filter(|(_, (r, l))| **r <= tol * l.abs().max(1.0))
                .map(|(i, _)| i)
                .collect(),
        }
    }

    /// Reassembles `V Λ Vᵀ`; requires a full set of eigenvectors.
    pub fn reconstruct(&self) -> Option<DMatrix<f64>> {
        let v = self.eigenvectors.as_ref()?;
        let mut scaled = v.clone();
        for (j, lambda) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*lambda);
        }
        Some(scaled * v.transpose())
    }
}

/// `Σ λ'_i / (λ'_i + z)` over a list of eigenvalues, with `λ' = max(λ, 0)`
/// when `clamp_negative` is set.
pub fn effective_dimensionality_of(eigenvalues: &[f64], z: f64, clamp_negative: bool) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(SpectralError::InvalidRegularizer(z));
    }
    let mut total = 0.0;
    for (index, &raw) in eigenvalues.iter().enumerate() {
        let lambda = if clamp_negative { raw.max(0.0) } else { raw };
        let denom = lambda + z;
        if denom == 0.0 {
            return Err(SpectralError::Pole { index, eigenvalue: raw });
        }
        total += lambda / denom;
    }
    Ok(total)
}

pub fn effective_dimensionality(spectrum: &SymmetricSpectrum, z: f64, clamp_negative: bool) -> Result<f64> {
    effective_dimensionality_of(spectrum.eigenvalues(), z, clamp_negative)
}

/// Moore-Penrose pseudo-inverse at the spectrum level: nonzero eigenvalues
/// are inverted, eigenvalues within [`RANK_TOLERANCE`] of zero stay zero.
pub fn pseudo_inverse_spectrum(spectrum: &SymmetricSpectrum) -> SymmetricSpectrum {
    let threshold = RANK_TOLERANCE * spectrum.max_abs();
    let inverted: Vec<f64> = spectrum
        .eigenvalues
        .iter()
        .map(|&l| if l.abs() > threshold { 1.0 / l } else { 0.0 })
        .collect();
    let mut out = SymmetricSpectrum {
        eigenvalues: inverted,
        eigenvectors: spectrum.eigenvectors.clone(),
        source_dim: spectrum.source_dim,
        truncated: spectrum.truncated,
        residual_bounds: None,
    };
    out.sort_descending();
    out
}
