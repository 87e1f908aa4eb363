use serde::{Deserialize, Serialize};

use super::data::gen_swiss_roll;
use super::perturb::{function_agreement, select_basis, subspace_perturb, BasisSelector, PerturbationSpec};
use super::projection::{loss_surface_projection, symmetric_grid, LossSurfaceGrid};
use super::{ExperimentError, Result};
use crate::nn::{accuracy, full_hessian, init_params, train, Activation, MlpSpec, TrainConfig};
use crate::rng::derive_seed;
use crate::spectral::dense_eigh;

/// Swiss-roll degeneracy protocol: train, diagonalize the full Hessian, then
/// compare perturbations and loss surfaces along the top and bottom of the
/// spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwissRollConfig {
    pub n: usize,
    pub noise: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub steps: usize,
    pub bottom_k: usize,
    pub top_k: usize,
    pub top_scale: f64,
    /// Random directions averaged per agreement value.
    pub draws: usize,
    /// Bottom eigenvectors spanning the degenerate loss-surface plane.
    pub degenerate_k: usize,
    pub grid_points: usize,
    pub top_radius: f64,
    /// `None` uses `‖θ*‖`.
    pub degenerate_radius: Option<f64>,
    pub seed: u64,
}

impl SwissRollConfig {
    pub fn new(seed: u64) -> Self {
        SwissRollConfig {
            n: 1000,
            noise: 0.1,
            hidden: vec![20; 6],
            activation: Activation::Elu,
            learning_rate: 0.01,
            steps: 4000,
            bottom_k: 500,
            top_k: 3,
            top_scale: 0.1,
            draws: 8,
            degenerate_k: 2000,
            grid_points: 41,
            top_radius: 1.0,
            degenerate_radius: Some(1.0),
            seed,
        }
    }

    pub fn spec(&self) -> Result<MlpSpec> {
        Ok(MlpSpec::new(2, 1, self.hidden.clone(), self.activation, true)?)
    }
}

/// Agreements are means over `draws` random directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwissRollOutcome {
    pub seed: u64,
    pub param_count: usize,
    pub param_norm: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub top_eigenvalues: Vec<f64>,
    pub bottom_scale: f64,
    pub bottom_agreement_train: f64,
    pub bottom_agreement_test: f64,
    pub top_agreement_train: f64,
    pub top_agreement_test: f64,
    pub top_grid: LossSurfaceGrid,
    pub degenerate_grid: LossSurfaceGrid,
}

impl SwissRollOutcome {
    pub fn top_range(&self) -> f64 {
        self.top_grid.range()
    }

    pub fn degenerate_range(&self) -> f64 {
        self.degenerate_grid.range()
    }

    /// Degenerate agreement ≥ 0.99, top agreement lower by ≥ 0.05 (train and
    /// test), degenerate loss range ≥ 100× smaller than the top range.
    pub fn passes(&self) -> bool {
        let bottom_ok = self.bottom_agreement_train >= 0.99 && self.bottom_agreement_test >= 0.99;
        let contrast = self.bottom_agreement_train - self.top_agreement_train >= 0.05
            && self.bottom_agreement_test - self.top_agreement_test >= 0.05;
        let ranges = self.degenerate_range() * 100.0 <= self.top_range();
        bottom_ok && contrast && ranges
    }
}

pub fn swiss_roll_replication(cfg: &SwissRollConfig) -> Result<SwissRollOutcome> {
    let spec = cfg.spec()?;
    let p = spec.param_count();
    if cfg.bottom_k > p || cfg.degenerate_k > p || cfg.top_k > p {
        return Err(ExperimentError::InvalidConfig(format!("basis sizes exceed {p} parameters")));
    }
    if cfg.draws == 0 {
        return Err(ExperimentError::InvalidConfig("draws must be positive".into()));
    }
    let train_set = gen_swiss_roll(cfg.n, cfg.noise, derive_seed(cfg.seed, &[0]));
    let test_set = gen_swiss_roll(cfg.n, cfg.noise, derive_seed(cfg.seed, &[1]));
    let p0 = init_params(&spec, derive_seed(cfg.seed, &[2]));
    let fit = train(&spec, &p0, &train_set, &TrainConfig::adam(cfg.learning_rate, cfg.steps, derive_seed(cfg.seed, &[3])))?;
    let theta = fit.params;
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();

    let hessian = full_hessian(&spec, &theta, &train_set, 0.0)?;
    let spectrum = dense_eigh(&hessian.matrix)?;

    let mean_agreement = |selector: BasisSelector, scale: f64, key: u64| -> Result<(f64, f64)> {
        let (mut tr, mut te) = (0.0, 0.0);
        for r in 0..cfg.draws {
            let seed = derive_seed(cfg.seed, &[key, r as u64]);
            let moved = subspace_perturb(&theta, &spectrum, &PerturbationSpec { selector, scale, seed })?;
            tr += function_agreement(&spec, &theta, &moved, &train_set)?;
            te += function_agreement(&spec, &theta, &moved, &test_set)?;
        }
        Ok((tr / cfg.draws as f64, te / cfg.draws as f64))
    };
    let bottom = mean_agreement(BasisSelector::BottomK(cfg.bottom_k), norm / 2.0, 4)?;
    let top = mean_agreement(BasisSelector::TopK(cfg.top_k), cfg.top_scale, 5)?;

    let top_basis = select_basis(&spectrum, BasisSelector::TopK(cfg.top_k))?;
    let degenerate_basis = select_basis(&spectrum, BasisSelector::BottomK(cfg.degenerate_k))?;
    let top_axis = symmetric_grid(cfg.top_radius, cfg.grid_points);
    let degenerate_axis = symmetric_grid(cfg.degenerate_radius.unwrap_or(norm), cfg.grid_points);
    let top_grid =
        loss_surface_projection(&spec, &theta, &train_set, top_basis.as_ref(), &top_axis, &top_axis, derive_seed(cfg.seed, &[6]))?;
    let degenerate_grid = loss_surface_projection(
        &spec,
        &theta,
        &train_set,
        degenerate_basis.as_ref(),
        &degenerate_axis,
        &degenerate_axis,
        derive_seed(cfg.seed, &[7]),
    )?;

    Ok(SwissRollOutcome {
        seed: cfg.seed,
        param_count: p,
        param_norm: norm,
        train_accuracy: accuracy(&spec, &theta, &train_set)?,
        test_accuracy: accuracy(&spec, &theta, &test_set)?,
        top_eigenvalues: spectrum.eigenvalues()[..cfg.top_k].to_vec(),
        bottom_scale: norm / 2.0,
        bottom_agreement_train: bottom.0,
        bottom_agreement_test: bottom.1,
        top_agreement_train: top.0,
        top_agreement_test: top.1,
        top_grid,
        degenerate_grid,
    })
}
