use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::gen_two_spirals;
use super::output::{fmt_f64, CsvTable};
use super::{pool, ExperimentError, Result};
use crate::measures::{measure_model, MeasureOptions, MeasureReport};
use crate::nn::{init_params, train, Activation, MlpSpec, NnError, TrainConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Width,
    Depth,
    FeatureCount,
    DataCount,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Width => "width",
            SweepAxis::Depth => "depth",
            SweepAxis::FeatureCount => "feature_count",
            SweepAxis::DataCount => "data_count",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::Width, SweepAxis::Depth, SweepAxis::FeatureCount, SweepAxis::DataCount]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ExperimentError::InvalidConfig(format!("unknown sweep axis '{s}'")))
    }
}

/// Network sweep on the two-spirals task. The axis value replaces the width,
/// the depth or the training-set size of the base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub repetitions: usize,
    pub train: TrainConfig,
    pub seed: u64,
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
    pub n_train: usize,
    pub n_test: usize,
    pub noise: f64,
    pub measures: MeasureOptions,
    pub jobs: usize,
}

impl SweepConfig {
    fn base(axis: SweepAxis, values: Vec<usize>, width: usize, depth: usize, seed: u64) -> Self {
        SweepConfig {
            axis,
            values,
            repetitions: 25,
            train: TrainConfig::adam(0.01, 4000, seed),
            seed,
            width,
            depth,
            activation: Activation::Elu,
            n_train: 3000,
            n_test: 3000,
            noise: 0.5,
            measures: MeasureOptions::preset(3000, 1.0),
            jobs: 1,
        }
    }

    /// Depths 1 to 15 at width 20.
    pub fn depth_preset(seed: u64) -> Self {
        Self::base(SweepAxis::Depth, (1..=15).collect(), 20, 0, seed)
    }

    /// Widths 1 to 30 with three hidden layers.
    pub fn width_preset(seed: u64) -> Self {
        Self::base(SweepAxis::Width, (1..=30).collect(), 0, 3, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::InvalidConfig("sweep values must be non-empty and strictly increasing".into()));
        }
        if self.repetitions == 0 {
            return Err(ExperimentError::InvalidConfig("repetitions must be positive".into()));
        }
        if self.axis == SweepAxis::FeatureCount {
            return Err(ExperimentError::InvalidConfig(
                "feature_count sweeps run through the linear double-descent experiment".into(),
            ));
        }
        if self.values[0] == 0 && self.axis != SweepAxis::Depth {
            return Err(ExperimentError::InvalidConfig(format!("{} values must be positive", self.axis.name())));
        }
        self.train.validate()?;
        Ok(())
    }

    /// `(spec, n_train)` of the cell at `value`.
    pub fn cell_shape(&self, value: usize) -> Result<(MlpSpec, usize)> {
        let (width, depth, n) = match self.axis {
            SweepAxis::Width => (value, self.depth, self.n_train),
            SweepAxis::Depth => (self.width, value, self.n_train),
            SweepAxis::DataCount => (self.width, self.depth, value),
            SweepAxis::FeatureCount => unreachable!("rejected by validate"),
        };
        Ok((MlpSpec::new(2, 1, vec![width; depth], self.activation, true)?, n))
    }

    /// Seed of cell `(value, repetition)`; independent of evaluation order.
    pub fn cell_seed(&self, value: usize, repetition: usize) -> u64 {
        derive_seed(self.seed, &[value as u64, repetition as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: usize,
    pub repetition: usize,
    pub param_count: usize,
    /// Training diverged; the report holds NaNs.
    pub diverged: bool,
    pub report: MeasureReport,
}

impl SweepRow {
    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = ["axis", "value", "repetition", "param_count", "diverged"].iter().map(|s| s.to_string()).collect();
        h.extend(MeasureReport::CSV_COLUMNS.iter().map(|s| s.to_string()));
        h
    }

    pub fn csv_record(&self) -> Vec<String> {
        let r = &self.report;
        let mut row = vec![
            self.axis.name().to_string(),
            self.value.to_string(),
            self.repetition.to_string(),
            self.param_count.to_string(),
            self.diverged.to_string(),
            r.model_id.clone(),
        ];
        row.extend(
            [
                r.n_eff_hessian,
                r.z_used,
                r.path_norm,
                r.log_path_norm,
                r.pac_bayes,
                r.mag_pac_bayes,
                r.occam_log_factor,
                r.train_loss,
                r.train_error,
                r.test_loss,
                r.test_error,
            ]
            .map(fmt_f64),
        );
        row
    }
}

pub fn sweep_table(rows: &[SweepRow]) -> CsvTable {
    let mut t = CsvTable::new(&SweepRow::csv_header());
    for r in rows {
        t.push(r.csv_record());
    }
    t
}

fn diverged_report(model_id: String, z: f64) -> MeasureReport {
    let nan = f64::NAN;
    MeasureReport {
        model_id,
        n_eff_hessian: nan,
        z_used: z,
        path_norm: nan,
        log_path_norm: nan,
        pac_bayes: nan,
        mag_pac_bayes: nan,
        occam_log_factor: nan,
        train_loss: nan,
        train_error: nan,
        test_loss: nan,
        test_error: nan,
    }
}

/// Trains and measures one cell.
pub fn run_cell(cfg: &SweepConfig, value: usize, repetition: usize) -> Result<SweepRow> {
    let (spec, n) = cfg.cell_shape(value)?;
    // one data draw per repetition, shared across axis values
    let data_seed = derive_seed(cfg.seed, &[u64::MAX, repetition as u64]);
    let train_set = gen_two_spirals(n, cfg.noise, derive_seed(data_seed, &[0]));
    let test_set = gen_two_spirals(cfg.n_test, cfg.noise, derive_seed(data_seed, &[1]));
    let seed = cfg.cell_seed(value, repetition);
    let model_id = format!("{}={value}/rep={repetition}", cfg.axis.name());
    let mut tc = cfg.train;
    tc.seed = derive_seed(seed, &[1]);
    let mut measures = cfg.measures.clone();
    measures.sigma.seed = derive_seed(seed, &[2]);
    measures.lanczos.seed = derive_seed(seed, &[3]);
    let row = |diverged, report| SweepRow {
        axis: cfg.axis,
        value,
        repetition,
        param_count: spec.param_count(),
        diverged,
        report,
    };
    match train(&spec, &init_params(&spec, derive_seed(seed, &[0])), &train_set, &tc) {
        Ok(fit) => {
            let report = measure_model(&model_id, &spec, &fit.params, &train_set, &test_set, &measures)?;
            Ok(row(false, report))
        }
        Err(NnError::Divergence { .. }) => Ok(row(true, diverged_report(model_id, measures.z))),
        Err(e) => Err(e.into()),
    }
}

/// Every `(value, repetition)` cell, run on `cfg.jobs` threads and returned
/// ordered by value, then repetition.
pub fn depth_width_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> =
        cfg.values.iter().flat_map(|&v| (0..cfg.repetitions).map(move |r| (v, r))).collect();
    pool(cfg.jobs)?.install(|| cells.par_iter().map(|&(v, r)| run_cell(cfg, v, r)).collect())
}

/// Mean of a field over non-diverged repetitions, per axis value.
pub fn rep_means(rows: &[SweepRow], values: &[usize], field: impl Fn(&MeasureReport) -> f64) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let xs: Vec<f64> = rows.iter().filter(|r| r.value == v && !r.diverged).map(|r| field(&r.report)).collect();
            if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 }
        })
        .collect()
}
