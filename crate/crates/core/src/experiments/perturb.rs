use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ExperimentError, Result};
use crate::nn::{predict_classes, Dataset, MlpSpec};
use crate::rng::{seeded, standard_normal_vec};
use crate::spectral::{SymmetricSpectrum, RANK_TOLERANCE};

/// Resampling attempts before a zero-norm draw is reported.
pub const MAX_RESAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSelector {
    /// Eigenvectors of the `k` largest eigenvalues.
    TopK(usize),
    /// Eigenvectors of the `k` eigenvalues smallest in magnitude.
    BottomK(usize),
    /// The whole parameter space.
    Random,
    /// Eigenvectors whose eigenvalue is zero up to the rank tolerance.
    Nullspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub selector: BasisSelector,
    pub scale: f64,
    pub seed: u64,
}

/// Orthonormal basis chosen from the spectrum's eigenvectors; `None` stands
/// for the identity (selector `Random`).
pub fn select_basis(spectrum: &SymmetricSpectrum, selector: BasisSelector) -> Result<Option<DMatrix<f64>>> {
    if selector == BasisSelector::Random {
        return Ok(None);
    }
    let vecs = spectrum
        .eigenvectors()
        .ok_or_else(|| ExperimentError::InvalidConfig("selector needs eigenvectors".into()))?;
    let count = spectrum.len();
    let cols: Vec<usize> = match selector {
        BasisSelector::TopK(k) => {
            if k == 0 || k > count {
                return Err(ExperimentError::InvalidConfig(format!("top-{k} requested from {count} eigenpairs")));
            }
            (0..k).collect()
        }
        BasisSelector::BottomK(k) => {
            if k == 0 || k > count {
                return Err(ExperimentError::InvalidConfig(format!("bottom-{k} requested from {count} eigenpairs")));
            }
            let ev = spectrum.eigenvalues();
            let mut order: Vec<usize> = (0..count).collect();
            order.sort_by(|&a, &b| ev[a].abs().total_cmp(&ev[b].abs()).then(a.cmp(&b)));
            let mut chosen = order[..k].to_vec();
            chosen.sort_unstable();
            chosen
        }
        BasisSelector::Nullspace => {
            let threshold = RANK_TOLERANCE * spectrum.max_abs();
            let cols: Vec<usize> = (0..count).filter(|&i| spectrum.eigenvalues()[i].abs() <= threshold).collect();
            if cols.is_empty() {
                return Err(ExperimentError::DegenerateDirection("spectrum has no null space".into()));
            }
            cols
        }
        BasisSelector::Random => unreachable!(),
    };
    Ok(Some(vecs.select_columns(cols.iter())))
}

/// Unit vector `Bv/‖Bv‖` for `v ~ N(0, I)` drawn from `rng`.
pub(crate) fn random_unit_in_span(
    basis: Option<&DMatrix<f64>>,
    dim: usize,
    rng: &mut crate::rng::SeededRng,
) -> Result<DVector<f64>> {
    for _ in 0..=MAX_RESAMPLES {
        let d = match basis {
            Some(b) => b * DVector::from_vec(standard_normal_vec(rng, b.ncols())),
            None => DVector::from_vec(standard_normal_vec(rng, dim)),
        };
        let norm = d.norm();
        if norm > 0.0 && norm.is_finite() {
            return Ok(d / norm);
        }
    }
    Err(ExperimentError::DegenerateDirection(format!(
        "direction had zero norm after {MAX_RESAMPLES} resamples"
    )))
}

/// `θ* + s·Bv/‖Bv‖`.
pub fn subspace_perturb(params: &[f64], spectrum: &SymmetricSpectrum, pspec: &PerturbationSpec) -> Result<Vec<f64>> {
    if !(pspec.scale >= 0.0) {
        return Err(ExperimentError::InvalidConfig(format!("scale must be non-negative, got {}", pspec.scale)));
    }
    if spectrum.source_dim() != params.len() {
        return Err(ExperimentError::InvalidConfig(format!(
            "spectrum dimension {} does not match {} parameters",
            spectrum.source_dim(),
            params.len()
        )));
    }
    if pspec.scale == 0.0 {
        return Ok(params.to_vec());
    }
    let basis = select_basis(spectrum, pspec.selector)?;
    let dir = random_unit_in_span(basis.as_ref(), params.len(), &mut seeded(pspec.seed))?;
    Ok(params.iter().zip(dir.iter()).map(|(p, d)| p + pspec.scale * d).collect())
}

/// Fraction of rows where both parameter vectors predict the same class.
pub fn function_agreement(spec: &MlpSpec, params_a: &[f64], params_b: &[f64], data: &Dataset) -> Result<f64> {
    if data.labels().is_none() {
        return Err(ExperimentError::InvalidConfig("agreement needs a classification dataset".into()));
    }
    if data.is_empty() {
        return Err(ExperimentError::InvalidConfig("dataset is empty".into()));
    }
    let a = predict_classes(spec, params_a, &data.inputs)?;
    let b = predict_classes(spec, params_b, &data.inputs)?;
    Ok(a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}
