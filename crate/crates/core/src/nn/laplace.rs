use super::{CurvatureContext, Dataset, MlpSpec, NnError, Result};
use crate::spectral::MatrixFreeOperator;

/// Precision of the Laplace approximation,
/// `v ↦ data_scale · H v + v / prior_variance`, with `H` the Hessian of the
/// mean data loss.
///
/// `data_scale` converts the mean loss into a negative log-likelihood: `n` for
/// cross-entropy, `n / (2σ²)` for squared error with noise variance `σ²`.
#[derive(Debug, Clone)]
pub struct LaplacePrecision {
    ctx: CurvatureContext,
    data_scale: f64,
    prior_variance: f64,
}

pub fn laplace_precision(
    spec: &MlpSpec,
    params: &[f64],
    data: &Dataset,
    prior_variance: f64,
    data_scale: f64,
) -> Result<LaplacePrecision> {
    if !(prior_variance > 0.0) {
        return Err(NnError::InvalidConfig(format!("prior variance must be positive, got {prior_variance}")));
    }
    if !(data_scale > 0.0 && data_scale.is_finite()) {
        return Err(NnError::InvalidConfig(format!("data scale must be positive, got {data_scale}")));
    }
    let ctx = CurvatureContext::new(spec, params, data, 0.0)?;
    Ok(LaplacePrecision { ctx, data_scale, prior_variance })
}

impl LaplacePrecision {
    /// Norm of the gradient of the negative log posterior at the expansion point.
    pub fn gradient_norm(&self) -> f64 {
        self.ctx
            .gradient()
            .iter()
            .zip(self.ctx.params())
            .map(|(g, p)| {
                let full = self.data_scale * g + p / self.prior_variance;
                full * full
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn data_scale(&self) -> f64 {
        self.data_scale
    }
}

impl MatrixFreeOperator for LaplacePrecision {
    fn dim(&self) -> usize {
        self.ctx.len()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.ctx.hvp_into(v, out);
        let inv = 1.0 / self.prior_variance;
        for (o, vi) in out.iter_mut().zip(v) {
            *o = self.data_scale * *o + inv * vi;
        }
    }
}
