//! Generalization measures computed from a trained network and its data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{self, CurvatureContext, Dataset, MlpSpec, NnError};
use crate::rng::{derive_seed, seeded, standard_normal_vec};
use crate::spectral::{effective_dimensionality_of, lanczos_topk, LanczosConfig, SpectralError, SymmetricSpectrum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("measure definition violated: {0}")]
    Definition(String),
    #[error("only {surviving} models pass the training-loss cutoff; need at least 3")]
    InsufficientData { surviving: usize },
    #[error("correlation undefined: zero variance in {0}")]
    UndefinedCorrelation(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T> = std::result::Result<T, MeasureError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub model_id: String,
    pub n_eff_hessian: f64,
    pub z_used: f64,
    pub path_norm: f64,
    pub log_path_norm: f64,
    pub pac_bayes: f64,
    pub mag_pac_bayes: f64,
    pub occam_log_factor: f64,
    pub train_loss: f64,
    pub train_error: f64,
    pub test_loss: f64,
    pub test_error: f64,
}

impl MeasureReport {
    pub const CSV_COLUMNS: [&'static str; 12] = [
        "model_id",
        "n_eff_hessian",
        "z_used",
        "path_norm",
        "log_path_norm",
        "pac_bayes",
        "mag_pac_bayes",
        "occam_log_factor",
        "train_loss",
        "train_error",
        "test_loss",
        "test_error",
    ];

    pub fn field(&self, f: MeasureField) -> f64 {
        match f {
            MeasureField::NEffHessian => self.n_eff_hessian,
            MeasureField::PathNorm => self.path_norm,
            MeasureField::LogPathNorm => self.log_path_norm,
            MeasureField::PacBayes => self.pac_bayes,
            MeasureField::MagPacBayes => self.mag_pac_bayes,
            MeasureField::OccamLogFactor => self.occam_log_factor,
            MeasureField::TrainLoss => self.train_loss,
            MeasureField::TrainError => self.train_error,
            MeasureField::TestLoss => self.test_loss,
            MeasureField::TestError => self.test_error,
            MeasureField::GeneralizationGap => self.test_error - self.train_error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureField {
    NEffHessian,
    PathNorm,
    LogPathNorm,
    PacBayes,
    MagPacBayes,
    OccamLogFactor,
    TrainLoss,
    TrainError,
    TestLoss,
    TestError,
    GeneralizationGap,
}

impl MeasureField {
    pub const MEASURES: [MeasureField; 5] = [
        MeasureField::NEffHessian,
        MeasureField::LogPathNorm,
        MeasureField::PacBayes,
        MeasureField::MagPacBayes,
        MeasureField::OccamLogFactor,
    ];
    pub const TARGETS: [MeasureField; 3] =
        [MeasureField::TestLoss, MeasureField::TestError, MeasureField::GeneralizationGap];

    pub fn name(self) -> &'static str {
        match self {
            MeasureField::NEffHessian => "n_eff_hessian",
            MeasureField::PathNorm => "path_norm",
            MeasureField::LogPathNorm => "log_path_norm",
            MeasureField::PacBayes => "pac_bayes",
            MeasureField::MagPacBayes => "mag_pac_bayes",
            MeasureField::OccamLogFactor => "occam_log_factor",
            MeasureField::TrainLoss => "train_loss",
            MeasureField::TrainError => "train_error",
            MeasureField::TestLoss => "test_loss",
            MeasureField::TestError => "test_error",
            MeasureField::GeneralizationGap => "generalization_gap",
        }
    }
}

impl std::str::FromStr for MeasureField {
    type Err = MeasureError;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            MeasureField::NEffHessian,
            MeasureField::PathNorm,
            MeasureField::LogPathNorm,
            MeasureField::PacBayes,
            MeasureField::MagPacBayes,
            MeasureField::OccamLogFactor,
            MeasureField::TrainLoss,
            MeasureField::TrainError,
            MeasureField::TestLoss,
            MeasureField::TestError,
            MeasureField::GeneralizationGap,
        ];
        all.into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| MeasureError::InvalidConfig(format!("unknown measure field '{s}'")))
    }
}

/// N_eff of the top Ritz values of the mean-loss Hessian (negatives clamped).
/// Missing eigenvalues are ignored, so this is a lower bound on the full-spectrum value.
pub fn hessian_eff_dim(
    spec: &MlpSpec,
    params: &[f64],
    data: &Dataset,
    z: f64,
    lanczos: &LanczosConfig,
) -> Result<(f64, SymmetricSpectrum)> {
    let ctx = CurvatureContext::new(spec, params, data, 0.0)?;
    let spectrum = lanczos_topk(&ctx, lanczos)?;
    let value = effective_dimensionality_of(spectrum.eigenvalues(), z, true)?;
    Ok((value, spectrum))
}

/// `sqrt(Σ f(1; θ²))` with every activation replaced by the identity, which is
/// exactly the root of the summed squared path products. Biases count as
/// weights on paths that start at a constant-one unit.
pub fn path_norm(spec: &MlpSpec, params: &[f64]) -> Result<f64> {
    if params.len() != spec.param_count() {
        return Err(NnError::Shape(format!("{} parameters given, spec has {}", params.len(), spec.param_count())).into());
    }
    let mut a = vec![1.0; spec.input_dim];
    for layer in spec.layers() {
        let mut z = vec![0.0; layer.fan_out];
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &params[layer.weight_offset + o * layer.fan_in..layer.weight_offset + (o + 1) * layer.fan_in];
            *zo = row.iter().zip(&a).map(|(w, x)| w * w * x).sum();
            if let Some(b) = layer.bias_offset {
                *zo += params[b + o] * params[b + o];
            }
        }
        a = z;
    }
    let total: f64 = a.iter().sum();
    if !(total >= 0.0) {
        return Err(MeasureError::Definition(format!("path sum {total} is negative or undefined")));
    }
    Ok(total.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSearchConfig {
    pub target_increase: f64,
    pub mc_samples: usize,
    /// Stop once `hi/lo − 1` falls below this.
    pub search_tolerance: f64,
    pub max_iterations: usize,
    pub sigma_bounds: (f64, f64),
    pub seed: u64,
}

impl Default for SigmaSearchConfig {
    fn default() -> Self {
        SigmaSearchConfig {
            target_increase: 0.1,
            mc_samples: 200,
            search_tolerance: 1e-3,
            max_iterations: 40,
            sigma_bounds: (1e-5, 10.0),
            seed: 0,
        }
    }
}

impl SigmaSearchConfig {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.sigma_bounds;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(MeasureError::InvalidConfig(format!("sigma bounds must satisfy 0 < lo < hi, got ({lo}, {hi})")));
        }
        if !(self.target_increase > 0.0) || self.mc_samples == 0 || !(self.search_tolerance > 0.0) {
            return Err(MeasureError::InvalidConfig(
                "target increase and tolerance must be positive and mc_samples nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// How `|θ|` enters the magnitude-aware perturbation variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeMode {
    /// `σ'²θ_i² + ε`
    Squared,
    /// `σ'²|θ_i| + ε`
    Absolute,
}

pub const MAGNITUDE_EPSILON: f64 = 1e-3;

/// Per-coordinate perturbation variance as a function of σ.
#[derive(Debug, Clone, Copy)]
pub enum PerturbationShape<'a> {
    Isotropic,
    Magnitude { params: &'a [f64], epsilon: f64, mode: MagnitudeMode },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSearchResult {
    /// `1/σ²`.
    pub measure: f64,
    pub sigma: f64,
    pub saturated_upper: bool,
    pub saturated_lower: bool,
    /// The Monte-Carlo increase was non-monotone in σ beyond sampling noise.
    pub unstable: bool,
    pub evaluations: usize,
}

/// Largest σ with `mean_j error(u_j(σ)) − base_error ≤ target`, found by
/// geometric bisection. `u_j(σ)` uses the same normal draw `ξ_j` for every σ,
/// so the search sees a smooth function of σ.
pub fn sigma_search<F>(
    dim: usize,
    base_error: f64,
    shape: PerturbationShape<'_>,
    cfg: &SigmaSearchConfig,
    error_at: F,
) -> Result<SigmaSearchResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if let PerturbationShape::Magnitude { params, .. } = shape {
        if params.len() != dim {
            return Err(MeasureError::InvalidConfig("magnitude parameters do not match dimension".into()));
        }
    }
    let draws: Vec<Vec<f64>> = (0..cfg.mc_samples)
        .map(|j| standard_normal_vec(&mut seeded(derive_seed(cfg.seed, &[j as u64])), dim))
        .collect();
    let mut evaluations = 0usize;
    let mut seen: Vec<(f64, f64)> = Vec::new();
    let mut increase = |sigma: f64| -> f64 {
        let total: Vec<f64> = draws
            .par_iter()
            .map(|xi| {
                let u: Vec<f64> = match shape {
                    PerturbationShape::Isotropic => xi.iter().map(|x| sigma * x).collect(),
                    PerturbationShape::Magnitude { params, epsilon, mode } => xi
                        .iter()
                        .zip(params)
                        .map(|(x, t)| {
                            let m = match mode {
                                MagnitudeMode::Squared => t * t,
                                MagnitudeMode::Absolute => t.abs(),
                            };
                            (sigma * sigma * m + epsilon).sqrt() * x
                        })
                        .collect(),
                };
                error_at(&u)
            })
            .collect();
        evaluations += 1;
        let mean = total.iter().sum::<f64>() / total.len() as f64 - base_error;
        seen.push((sigma, mean));
        mean
    };

    let (mut lo, mut hi) = cfg.sigma_bounds;
    let target = cfg.target_increase;
    let mut result = SigmaSearchResult {
        measure: 0.0,
        sigma: 0.0,
        saturated_upper: false,
        saturated_lower: false,
        unstable: false,
        evaluations: 0,
    };
    let sigma = if increase(hi) <= target {
        result.saturated_upper = true;
        hi
    } else if increase(lo) > target {
        result.saturated_lower = true;
        lo
    } else {
        for _ in 0..cfg.max_iterations {
            if hi / lo - 1.0 <= cfg.search_tolerance {
                break;
            }
            let mid = (lo * hi).sqrt();
            if increase(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    seen.sort_by(|a, b| a.0.total_cmp(&b.0));
    let noise = 1.0 / (cfg.mc_samples as f64).sqrt();
    let mut running_max = f64::NEG_INFINITY;
    for &(_, inc) in &seen {
        if inc < running_max - noise {
            result.unstable = true;
        }
        running_max = running_max.max(inc);
    }
    result.sigma = sigma;
    result.measure = 1.0 / (sigma * sigma);
    result.evaluations = evaluations;
    Ok(result)
}

fn classification_error_search(
    spec: &MlpSpec,
    params: &[f64],
    data: &Dataset,
    cfg: &SigmaSearchConfig,
    shape: PerturbationShape<'_>,
) -> Result<SigmaSearchResult> {
    if data.labels().is_none() {
        return Err(MeasureError::InvalidConfig("PAC-Bayes sharpness is defined on classification error".into()));
    }
    let base = nn::error_rate(spec, params, data)?;
    sigma_search(params.len(), base, shape, cfg, |u| {
        let moved: Vec<f64> = params.iter().zip(u).map(|(p, d)| p + d).collect();
        nn::error_rate(spec, &moved, data).unwrap_or(1.0)
    })
}

/// `1/σ²` for the largest isotropic σ keeping the expected increase in
/// training error below the target.
pub fn pac_bayes_sharpness(
    spec: &MlpSpec,
    params: &[f64],
    data: &Dataset,
    cfg: &SigmaSearchConfig,
) -> Result<SigmaSearchResult> {
    classification_error_search(spec, params, data, cfg, PerturbationShape::Isotropic)
}

/// Magnitude-aware variant with per-coordinate variance `σ'²m(θ_i) + ε`.
pub fn mag_pac_bayes_sharpness(
    spec: &MlpSpec,
    params: &[f64],
    data: &Dataset,
    cfg: &SigmaSearchConfig,
    mode: MagnitudeMode,
) -> Result<SigmaSearchResult> {
    let shape = PerturbationShape::Magnitude { params, epsilon: MAGNITUDE_EPSILON, mode };
    classification_error_search(spec, params, data, cfg, shape)
}

/// `ln N(θ; 0, vI)`.
pub fn log_gaussian_prior(params: &[f64], prior_variance: f64) -> f64 {
    let k = params.len() as f64;
    let sq: f64 = params.iter().map(|p| p * p).sum();
    -0.5 * k * (2.0 * std::f64::consts::PI * prior_variance).ln() - sq / (2.0 * prior_variance)
}

/// `ln p(θ) − ½ Σ ln((λ_i + z)/2π)` over all `source_dim` eigenvalues of the
/// negative log-likelihood Hessian; eigenvalues not present in the spectrum
/// (a truncated Lanczos run) count as zero, negatives are clamped.
pub fn occam_log_factor_from_spectrum(
    params: &[f64],
    prior_variance: f64,
    spectrum: &SymmetricSpectrum,
    z: f64,
) -> Result<f64> {
    if !(prior_variance > 0.0) || !(z > 0.0) {
        return Err(MeasureError::InvalidConfig("prior variance and z must be positive".into()));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let missing = spectrum.source_dim().saturating_sub(spectrum.len()) as f64;
    let logdet: f64 = spectrum.eigenvalues().iter().map(|l| ((l.max(0.0) + z) / two_pi).ln()).sum::<f64>()
        + missing * (z / two_pi).ln();
    Ok(log_gaussian_prior(params, prior_variance) - 0.5 * logdet)
}

/// Occam factor from the dense Hessian of `data_scale · mean loss`.
pub fn occam_log_factor(
    spec: &MlpSpec,
    params: &[f64],
    data: &Dataset,
    prior_variance: f64,
    z: f64,
    data_scale: f64,
) -> Result<f64> {
    let h = nn::full_hessian(spec, params, data, 0.0)?.matrix * data_scale;
    let spectrum = crate::spectral::dense_eigvalsh(&h)?;
    occam_log_factor_from_spectrum(params, prior_variance, &spectrum, z)
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(MeasureError::InvalidConfig("columns differ in length".into()));
    }
    if xs.len() < 3 {
        return Err(MeasureError::InsufficientData { surviving: xs.len() });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(MeasureError::UndefinedCorrelation("measure".into()));
    }
    if syy == 0.0 {
        return Err(MeasureError::UndefinedCorrelation("target".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Pearson correlation over reports whose training loss is below the cutoff.
pub fn pearson_correlation(
    reports: &[MeasureReport],
    measure: MeasureField,
    target: MeasureField,
    train_loss_cutoff: f64,
) -> Result<f64> {
    let kept: Vec<&MeasureReport> = reports
        .iter()
        .filter(|r| r.train_loss < train_loss_cutoff && r.field(measure).is_finite() && r.field(target).is_finite())
        .collect();
    if kept.len() < 3 {
        return Err(MeasureError::InsufficientData { surviving: kept.len() });
    }
    let xs: Vec<f64> = kept.iter().map(|r| r.field(measure)).collect();
    let ys: Vec<f64> = kept.iter().map(|r| r.field(target)).collect();
    pearson(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub measure: String,
    pub target: String,
    pub pearson: Option<f64>,
    pub models: usize,
    pub note: Option<String>,
}

pub fn correlation_table(
    reports: &[MeasureReport],
    measures: &[MeasureField],
    targets: &[MeasureField],
    train_loss_cutoff: f64,
) -> Vec<CorrelationEntry> {
    let models = reports.iter().filter(|r| r.train_loss < train_loss_cutoff).count();
    let mut out = Vec::new();
    for &m in measures {
        for &t in targets {
            let (pearson, note) = match pearson_correlation(reports, m, t, train_loss_cutoff) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(CorrelationEntry { measure: m.name().into(), target: t.name().into(), pearson, models, note });
        }
    }
    out
}

/// Which measures to compute and with what settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    pub z: f64,
    pub lanczos: LanczosConfig,
    pub sigma: SigmaSearchConfig,
    pub prior_variance: f64,
    pub magnitude_mode: MagnitudeMode,
    pub compute_pac_bayes: bool,
}

impl MeasureOptions {
    /// Default Lanczos and σ-search settings with the given `z` and prior variance.
    pub fn new(z: f64, prior_variance: f64) -> Self {
        MeasureOptions {
            z,
            lanczos: LanczosConfig::default(),
            sigma: SigmaSearchConfig::default(),
            prior_variance,
            magnitude_mode: MagnitudeMode::Squared,
            compute_pac_bayes: true,
        }
    }

    /// Preset regularizer `z = 1/(n·prior_variance)`.
    pub fn preset(n: usize, prior_variance: f64) -> Self {
        Self::new(1.0 / (n as f64 * prior_variance), prior_variance)
    }
}

/// Evaluates every measure for one trained classifier.
///
/// The Occam factor uses the Lanczos spectrum of the summed (not mean)
/// negative log-likelihood, `n·H`, with `z_occam = n·z`.
pub fn measure_model(
    model_id: &str,
    spec: &MlpSpec,
    params: &[f64],
    train: &Dataset,
    test: &Dataset,
    opts: &MeasureOptions,
) -> Result<MeasureReport> {
    let mut lanczos = opts.lanczos;
    lanczos.steps = lanczos.steps.min(params.len());
    lanczos.compute_eigenvectors = false;
    let (n_eff, spectrum) = hessian_eff_dim(spec, params, train, opts.z, &lanczos)?;
    let n = train.len() as f64;
    let scaled = SymmetricSpectrum::new(
        spectrum.eigenvalues().iter().map(|l| l * n).collect(),
        None,
        spectrum.source_dim(),
    )?;
    let occam = occam_log_factor_from_spectrum(params, opts.prior_variance, &scaled, opts.z * n)?;
    let pn = path_norm(spec, params)?;
    let (pac, mag) = if opts.compute_pac_bayes {
        (
            pac_bayes_sharpness(spec, params, train, &opts.sigma)?.measure,
            mag_pac_bayes_sharpness(spec, params, train, &opts.sigma, opts.magnitude_mode)?.measure,
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(MeasureReport {
        model_id: model_id.to_string(),
        n_eff_hessian: n_eff,
        z_used: opts.z,
        path_norm: pn,
        log_path_norm: if pn > 0.0 { pn.ln() } else { f64::NEG_INFINITY },
        pac_bayes: pac,
        mag_pac_bayes: mag,
        occam_log_factor: occam,
        train_loss: nn::loss(spec, params, train, 0.0)?.data,
        train_error: nn::error_rate(spec, params, train)?,
        test_loss: nn::loss(spec, params, test, 0.0)?.data,
        test_error: nn::error_rate(spec, params, test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Activation};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    /// Sum over input→output paths of the product of squared weights, with a
    /// bias treated as an edge from a constant-one unit.
    fn brute_force_path_norm(spec: &MlpSpec, params: &[f64]) -> f64 {
        let layers = spec.layers();
        // sources: input units, or the bias unit of any layer
        fn walk(layers: &[crate::nn::LayerLayout], params: &[f64], l: usize, unit: usize, acc: f64) -> f64 {
            if l == layers.len() {
                return acc;
            }
            let layer = &layers[l];
            (0..layer.fan_out)
                .map(|o| {
                    let w = params[layer.weight_offset + o * layer.fan_in + unit];
                    walk(layers, params, l + 1, o, acc * w * w)
                })
                .sum()
        }
        let mut total: f64 = (0..spec.input_dim).map(|i| walk(&layers, params, 0, i, 1.0)).sum();
        for (l, layer) in layers.iter().enumerate() {
            if let Some(b) = layer.bias_offset {
                for o in 0..layer.fan_out {
                    let w = params[b + o];
                    total += walk(&layers, params, l + 1, o, w * w);
                }
            }
        }
        total.sqrt()
    }

    #[test]
    fn path_norm_trivial_cases() {
        let spec = MlpSpec::new(3, 2, vec![], Activation::Relu, false).unwrap();
        let p = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
        let fro = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((path_norm(&spec, &p).unwrap() - fro).abs() < 1e-15);
        let chain = MlpSpec::new(1, 1, vec![1], Activation::Tanh, false).unwrap();
        assert!((path_norm(&chain, &[-3.0, 0.5]).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn path_norm_matches_enumeration() {
        for (spec, seed) in [
            (MlpSpec::new(2, 2, vec![2], Activation::Elu, true).unwrap(), 1),
            (MlpSpec::new(3, 2, vec![4, 4], Activation::Relu, true).unwrap(), 2),
            (MlpSpec::new(3, 2, vec![4, 4], Activation::Tanh, false).unwrap(), 3),
        ] {
            let p = init_params(&spec, seed);
            let a = path_norm(&spec, &p).unwrap();
            let b = brute_force_path_norm(&spec, &p);
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn path_norm_ignores_hidden_permutations() {
        let spec = MlpSpec::new(2, 1, vec![3], Activation::Elu, true).unwrap();
        let p = init_params(&spec, 7);
        // swap hidden units 0 and 2: rows of W1, entries of b1, columns of W2
        let mut q = p.clone();
        let l = spec.layers();
        for c in 0..2 {
            q.swap(l[0].weight_offset + c, l[0].weight_offset + 2 * 2 + c);
        }
        q.swap(l[0].bias_offset.unwrap(), l[0].bias_offset.unwrap() + 2);
        q.swap(l[1].weight_offset, l[1].weight_offset + 2);
        assert!((path_norm(&spec, &p).unwrap() - path_norm(&spec, &q).unwrap()).abs() < 1e-14);
    }

    fn surrogate(diag: &[f64], e0: f64) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
        move |u: &[f64]| {
            let q: f64 = u.iter().zip(diag).map(|(x, a)| a * x * x).sum();
            (e0 + 0.5 * q).min(1.0)
        }
    }

    #[test]
    fn constant_landscape_saturates() {
        let cfg = SigmaSearchConfig { mc_samples: 10, ..Default::default() };
        let r = sigma_search(5, 0.2, PerturbationShape::Isotropic, &cfg, |_| 0.2).unwrap();
        assert!(r.saturated_upper);
        assert_eq!(r.sigma, cfg.sigma_bounds.1);
        assert!((r.measure - 1.0 / 100.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_surrogate_sigma() {
        let diag: Vec<f64> = (0..20).map(|i| 0.5 + 0.1 * i as f64).collect();
        let tr: f64 = diag.iter().sum();
        let cfg = SigmaSearchConfig { mc_samples: 2000, ..Default::default() };
        let r = sigma_search(20, 0.01, PerturbationShape::Isotropic, &cfg, surrogate(&diag, 0.01)).unwrap();
        let want = (0.2 / tr).sqrt();
        assert!((r.sigma - want).abs() <= 0.05 * want, "{} vs {want}", r.sigma);
        assert!(!r.unstable && !r.saturated_lower && !r.saturated_upper);
    }

    #[test]
    fn more_parameters_sharper() {
        let cfg = SigmaSearchConfig { mc_samples: 500, ..Default::default() };
        let small = sigma_search(10, 0.0, PerturbationShape::Isotropic, &cfg, surrogate(&[1.0; 10], 0.0)).unwrap();
        let big = sigma_search(20, 0.0, PerturbationShape::Isotropic, &cfg, surrogate(&[1.0; 20], 0.0)).unwrap();
        assert!(big.measure > small.measure);
    }

    #[test]
    fn magnitude_variants() {
        let diag = [2.0, 1.0, 0.5, 3.0];
        let theta = [1.0, -2.0, 0.5, 0.0];
        let cfg = SigmaSearchConfig { mc_samples: 4000, ..Default::default() };
        let shape = PerturbationShape::Magnitude { params: &theta, epsilon: MAGNITUDE_EPSILON, mode: MagnitudeMode::Squared };
        let r = sigma_search(4, 0.0, shape, &cfg, surrogate(&diag, 0.0)).unwrap();
        let sum_a: f64 = diag.iter().sum();
        let sum_at: f64 = diag.iter().zip(&theta).map(|(a, t)| a * t * t).sum();
        let want = ((0.2 - MAGNITUDE_EPSILON * sum_a) / sum_at).sqrt();
        assert!((r.sigma - want).abs() <= 0.05 * want, "{} vs {want}", r.sigma);

        // θ = 0: only ε noise, independent of σ, so the search saturates
        let zeros = [0.0; 4];
        let shape = PerturbationShape::Magnitude { params: &zeros, epsilon: MAGNITUDE_EPSILON, mode: MagnitudeMode::Absolute };
        let r = sigma_search(4, 0.0, shape, &cfg, surrogate(&diag, 0.0)).unwrap();
        assert!(r.saturated_upper);
    }

    #[test]
    fn pac_bayes_on_network_is_finite() {
        let spec = MlpSpec::new(2, 1, vec![4], Activation::Tanh, true).unwrap();
        let x = DMatrix::from_row_slice(4, 2, &[-1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0]);
        let data = Dataset::classification(x, vec![0, 1, 1, 1]).unwrap();
        let p = init_params(&spec, 1);
        let cfg = SigmaSearchConfig { mc_samples: 20, ..Default::default() };
        let r = pac_bayes_sharpness(&spec, &p, &data, &cfg).unwrap();
        assert!(r.measure.is_finite() && r.sigma > 0.0);
        let reg = Dataset::regression(DMatrix::zeros(1, 2), DMatrix::zeros(1, 1)).unwrap();
        assert!(pac_bayes_sharpness(&spec, &p, &reg, &cfg).is_err());
    }

    #[test]
    fn occam_reduces_to_prior_when_curvature_is_two_pi() {
        let two_pi = 2.0 * std::f64::consts::PI;
        let theta = [0.3, -0.1, 2.0];
        let spec = SymmetricSpectrum::from_eigenvalues(vec![two_pi - 1e-3; 3], 3).unwrap();
        let v = occam_log_factor_from_spectrum(&theta, 1.5, &spec, 1e-3).unwrap();
        assert!((v - log_gaussian_prior(&theta, 1.5)).abs() < 1e-12);
    }

    #[test]
    fn occam_matches_conjugate_evidence() {
        let mut rng = seeded(5);
        let (n, k) = (8, 5);
        let phi = DMatrix::from_vec(n, k, standard_normal_vec(&mut rng, n * k));
        let y = nalgebra::DVector::from_vec(standard_normal_vec(&mut rng, n));
        let (a2, s2) = (2.0, 0.5);
        // evidence: y ~ N(0, σ²I + α²ΦΦᵀ)
        let cov = DMatrix::identity(n, n) * s2 + &phi * phi.transpose() * a2;
        let chol = cov.clone().cholesky().unwrap();
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = y.dot(&chol.solve(&y));
        let evidence = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);
        let model = crate::bayes_linear::GaussianLinearModel::new(phi.clone(), a2, s2).unwrap();
        let mean = crate::bayes_linear::posterior(&model, y.as_slice()).unwrap().mean;
        let resid = &y - &phi * &mean;
        let loglik = -0.5 * n as f64 * (2.0 * std::f64::consts::PI * s2).ln() - resid.norm_squared() / (2.0 * s2);
        let h = crate::spectral::dense_eigvalsh(&(phi.tr_mul(&phi) / s2)).unwrap();
        let occam = occam_log_factor_from_spectrum(mean.as_slice(), a2, &h, 1.0 / a2).unwrap();
        assert!((loglik + occam - evidence).abs() < 1e-9, "{} vs {evidence}", loglik + occam);
    }

    #[test]
    fn pearson_cases() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-15);
        // hand computation: x = 1,2,3,4; y = 2,1,4,3 → sxy = 3, sxx = syy = 5
        assert!((pearson(&xs, &[2.0, 1.0, 4.0, 3.0]).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(pearson(&xs, &[1.0; 4]), Err(MeasureError::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&xs[..2], &xs[..2]), Err(MeasureError::InsufficientData { .. })));
    }

    #[test]
    fn pearson_respects_cutoff() {
        let mk = |tl: f64, te: f64, ne: f64| MeasureReport {
            model_id: String::new(),
            n_eff_hessian: ne,
            z_used: 1.0,
            path_norm: 1.0,
            log_path_norm: 0.0,
            pac_bayes: 1.0,
            mag_pac_bayes: 1.0,
            occam_log_factor: 0.0,
            train_loss: tl,
            train_error: 0.0,
            test_loss: te,
            test_error: te,
        };
        let reports = vec![mk(0.0, 1.0, 1.0), mk(0.0, 2.0, 2.0), mk(0.0, 3.0, 3.0), mk(5.0, 0.0, 9.0)];
        let r = pearson_correlation(&reports, MeasureField::NEffHessian, MeasureField::TestLoss, 0.1).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        assert!(pearson_correlation(&reports, MeasureField::NEffHessian, MeasureField::TestLoss, -1.0).is_err());
    }

    #[test]
    fn lanczos_neff_matches_dense_on_tiny_net() {
        let spec = MlpSpec::new(2, 1, vec![5], Activation::Tanh, true).unwrap();
        let x = DMatrix::from_vec(30, 2, standard_normal_vec(&mut seeded(3), 60));
        let labels = (0..30).map(|i| usize::from(x[(i, 0)] * x[(i, 1)] > 0.0)).collect();
        let data = Dataset::classification(x, labels).unwrap();
        let p = init_params(&spec, 2);
        let cfg = LanczosConfig::with_steps(spec.param_count());
        let (lz, _) = hessian_eff_dim(&spec, &p, &data, 1e-3, &cfg).unwrap();
        let h = nn::full_hessian(&spec, &p, &data, 0.0).unwrap().matrix;
        let dense = effective_dimensionality_of(crate::spectral::dense_eigvalsh(&h).unwrap().eigenvalues(), 1e-3, true).unwrap();
        assert!((lz - dense).abs() <= 0.01 * dense);
        let (huge_z, _) = hessian_eff_dim(&spec, &p, &data, 1e12, &cfg).unwrap();
        assert!(huge_z < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn occam_decreases_in_each_eigenvalue(vals in proptest::collection::vec(0.0f64..50.0, 1..8),
                                              idx in 0usize..8, bump in 1e-3f64..10.0, z in 1e-3f64..5.0) {
            let k = vals.len();
            let i = idx % k;
            let theta = vec![0.1; k];
            let a = SymmetricSpectrum::from_eigenvalues(vals.clone(), k).unwrap();
            let mut up = vals.clone();
            up[i] += bump;
            let b = SymmetricSpectrum::from_eigenvalues(up, k).unwrap();
            let oa = occam_log_factor_from_spectrum(&theta, 1.0, &a, z).unwrap();
            let ob = occam_log_factor_from_spectrum(&theta, 1.0, &b, z).unwrap();
            prop_assert!(ob < oa);
        }

        #[test]
        fn flatter_surrogate_lowers_measure(c in 0.1f64..0.9) {
            let cfg = SigmaSearchConfig { mc_samples: 200, ..Default::default() };
            let sharp = sigma_search(6, 0.0, PerturbationShape::Isotropic, &cfg, surrogate(&[1.0; 6], 0.0)).unwrap();
            let flat_diag = [c; 6];
            let flat = sigma_search(6, 0.0, PerturbationShape::Isotropic, &cfg, surrogate(&flat_diag, 0.0)).unwrap();
            prop_assert!(flat.measure <= sharp.measure);
        }

        #[test]
        fn neff_nondecreasing_in_ritz_count(vals in proptest::collection::vec(-1.0f64..20.0, 1..30), z in 0.01f64..5.0) {
            let mut sorted = vals.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let mut prev = 0.0;
            for m in 1..=sorted.len() {
                let v = effective_dimensionality_of(&sorted[..m], z, true).unwrap();
                prop_assert!(v >= prev);
                prev = v;
            }
        }
    }
}
