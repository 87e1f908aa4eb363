use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::perturb::{random_unit_in_span, MAX_RESAMPLES};
use super::{ExperimentError, Result};
use crate::nn::{loss, Dataset, MlpSpec};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSurfaceGrid {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha_range: Vec<f64>,
    pub beta_range: Vec<f64>,
    /// `losses[i][j]` is the data loss at `θ* + α_i u + β_j v`.
    pub losses: Vec<Vec<f64>>,
}

impl LossSurfaceGrid {
    pub fn min_max(&self) -> (f64, f64) {
        self.losses
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| (lo.min(l), hi.max(l)))
    }

    /// `max − min` over the grid.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self.min_max();
        hi - lo
    }
}

/// `points` values evenly spaced over `[−radius, radius]`, with an exact zero
/// in the middle when `points` is odd.
pub fn symmetric_grid(radius: f64, points: usize) -> Vec<f64> {
    if points <= 1 || radius == 0.0 {
        return vec![0.0];
    }
    let c = (points - 1) as f64 / 2.0;
    (0..points).map(|i| radius * (i as f64 - c) / c).collect()
}

/// Loss on the plane `θ* + αu + βv`, where `u` is a random unit vector in the
/// span of `basis` and `v` is a second draw orthogonalized against `u`.
pub fn loss_surface_projection(
    spec: &MlpSpec,
    params: &[f64],
    data: &Dataset,
    basis: Option<&DMatrix<f64>>,
    alpha_range: &[f64],
    beta_range: &[f64],
    seed: u64,
) -> Result<LossSurfaceGrid> {
    let dim = params.len();
    if let Some(b) = basis {
        if b.nrows() != dim {
            return Err(ExperimentError::InvalidConfig(format!("basis has {} rows for {dim} parameters", b.nrows())));
        }
    }
    let mut rng = seeded(seed);
    let u = random_unit_in_span(basis, dim, &mut rng)?;
    let mut v: Option<DVector<f64>> = None;
    for _ in 0..=MAX_RESAMPLES {
        let raw = random_unit_in_span(basis, dim, &mut rng)?;
        let perp = &raw - &u * u.dot(&raw);
        let norm = perp.norm();
        if norm > 1e-8 {
            let mut w = perp / norm;
            // one more pass for orthogonality at rounding level
            w -= &u * u.dot(&w);
            let n2 = w.norm();
            v = Some(w / n2);
            break;
        }
    }
    let v = v.ok_or_else(|| {
        ExperimentError::DegenerateDirection(format!("second direction parallel to the first after {MAX_RESAMPLES} resamples"))
    })?;

    let cells: Vec<(usize, usize)> =
        (0..alpha_range.len()).flat_map(|i| (0..beta_range.len()).map(move |j| (i, j))).collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (alpha_range[i], beta_range[j]);
            let theta: Vec<f64> = (0..dim).map(|k| params[k] + a * u[k] + b * v[k]).collect();
            loss(spec, &theta, data, 0.0).map(|l| l.data)
        })
        .collect::<std::result::Result<_, _>>()?;
    let losses = values.chunks(beta_range.len().max(1)).map(|c| c.to_vec()).collect();
    Ok(LossSurfaceGrid {
        u: u.as_slice().to_vec(),
        v: v.as_slice().to_vec(),
        alpha_range: alpha_range.to_vec(),
        beta_range: beta_range.to_vec(),
        losses,
    })
}
