use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_params, CurvatureContext, Dataset, MlpSpec, NnError, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    SgdMomentum,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Optimizer::Adam),
            "sgd" | "sgd_momentum" => Ok(Optimizer::SgdMomentum),
            other => Err(NnError::InvalidConfig(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Coupled L2 penalty `(wd/2)‖θ‖²` added to the loss.
    pub weight_decay: f64,
    pub steps: usize,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl TrainConfig {
    pub fn adam(learning_rate: f64, steps: usize, seed: u64) -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate,
            momentum: 0.0,
            weight_decay: 0.0,
            steps,
            batch_size: None,
            seed,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn sgd(learning_rate: f64, momentum: f64, weight_decay: f64, steps: usize, seed: u64) -> Self {
        TrainConfig {
            optimizer: Optimizer::SgdMomentum,
            momentum,
            weight_decay,
            ..Self::adam(learning_rate, steps, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam needs beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: Vec<f64>,
    /// Data loss on the batch used at each step, evaluated before the update.
    pub loss_trace: Vec<f64>,
}

/// Uniform `U(−1/√fan_in, 1/√fan_in)` for weights and biases.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let mut params = vec![0.0; spec.param_count()];
    for layer in spec.layers() {
        let bound = 1.0 / (layer.fan_in as f64).sqrt();
        let w = layer.weight_offset..layer.weight_offset + layer.fan_in * layer.fan_out;
        for p in &mut params[w] {
            *p = rng.random_range(-bound..bound);
        }
        if let Some(b) = layer.bias_offset {
            for p in &mut params[b..b + layer.fan_out] {
                *p = rng.random_range(-bound..bound);
            }
        }
    }
    params
}

struct Batches {
    order: Vec<usize>,
    cursor: usize,
    size: usize,
    rng: crate::rng::SeededRng,
}

impl Batches {
    fn next(&mut self) -> Vec<usize> {
        if self.cursor + self.size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + self.size].to_vec();
        self.cursor += self.size;
        out
    }
}

/// Runs `cfg.steps` optimizer updates from `params0`. Deterministic given the
/// config: minibatches come from per-epoch shuffles seeded by `cfg.seed`.
pub fn train(spec: &MlpSpec, params0: &[f64], data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    check_params(spec, params0)?;
    data.check(spec)?;
    let n = data.len();
    let mut batches = match cfg.batch_size {
        Some(b) if b < n => {
            let mut rng = seeded(cfg.seed);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            Some(Batches { order, cursor: 0, size: b, rng })
        }
        _ => None,
    };

    let p = params0.len();
    let mut params = params0.to_vec();
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let ctx = match &mut batches {
            Some(b) => CurvatureContext::new(spec, &params, &data.subset(&b.next()), cfg.weight_decay)?,
            None => CurvatureContext::new(spec, &params, data, cfg.weight_decay)?,
        };
        let loss = ctx.loss().data;
        if !loss.is_finite() {
            return Err(NnError::Divergence { step, loss });
        }
        trace.push(loss);
        let g = ctx.gradient();
        match cfg.optimizer {
            Optimizer::SgdMomentum => {
                for i in 0..p {
                    m[i] = cfg.momentum * m[i] + g[i];
                    params[i] -= cfg.learning_rate * m[i];
                }
            }
            Optimizer::Adam => {
                let t = (step + 1) as i32;
                let c1 = 1.0 - cfg.beta1.powi(t);
                let c2 = 1.0 - cfg.beta2.powi(t);
                for i in 0..p {
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
                }
            }
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(NnError::Divergence { step, loss: f64::NAN });
        }
    }
    Ok(TrainResult { params, loss_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{accuracy, loss, Activation};
    use nalgebra::DMatrix;

    fn xor_like() -> Dataset {
        let x = DMatrix::from_row_slice(4, 2, &[-1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0]);
        Dataset::classification(x, vec![0, 1, 1, 0]).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let spec = MlpSpec::new(2, 1, vec![4], Activation::Tanh, true).unwrap();
        let p0 = init_params(&spec, 1);
        let out = train(&spec, &p0, &xor_like(), &TrainConfig::adam(0.0, 10, 0)).unwrap();
        assert_eq!(out.params, p0);
        assert_eq!(out.loss_trace.len(), 10);
    }

    #[test]
    fn sgd_on_one_parameter_quadratic() {
        // f(x) = w·1, target 3: loss (w − 3)², minimizer 3
        let spec = MlpSpec::new(1, 1, vec![], Activation::Elu, false).unwrap();
        let data = Dataset::regression(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 3.0)).unwrap();
        let out = train(&spec, &[0.0], &data, &TrainConfig::sgd(0.05, 0.0, 0.0, 500, 0)).unwrap();
        assert!((out.params[0] - 3.0).abs() < 1e-6);
        let out = train(&spec, &[0.0], &data, &TrainConfig::sgd(0.05, 0.9, 0.0, 800, 0)).unwrap();
        assert!((out.params[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn adam_fits_xor() {
        let spec = MlpSpec::new(2, 1, vec![8], Activation::Tanh, true).unwrap();
        let data = xor_like();
        let out = train(&spec, &init_params(&spec, 3), &data, &TrainConfig::adam(0.05, 400, 0)).unwrap();
        assert_eq!(accuracy(&spec, &out.params, &data).unwrap(), 1.0);
        assert!(loss(&spec, &out.params, &data, 0.0).unwrap().data < out.loss_trace[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let spec = MlpSpec::new(2, 2, vec![5], Activation::Elu, true).unwrap();
        let x = DMatrix::from_fn(20, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let data = Dataset::classification(x, (0..20).map(|i| i % 2).collect()).unwrap();
        let mut cfg = TrainConfig::sgd(0.1, 0.9, 1e-4, 50, 9);
        cfg.batch_size = Some(6);
        let a = train(&spec, &init_params(&spec, 1), &data, &cfg).unwrap();
        let b = train(&spec, &init_params(&spec, 1), &data, &cfg).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.params), bits(&b.params));
        assert_eq!(bits(&a.loss_trace), bits(&b.loss_trace));
    }

    #[test]
    fn divergence_is_reported() {
        let spec = MlpSpec::new(1, 1, vec![], Activation::Elu, false).unwrap();
        let data = Dataset::regression(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 3.0)).unwrap();
        let err = train(&spec, &[0.0], &data, &TrainConfig::sgd(10.0, 0.0, 0.0, 2000, 0)).unwrap_err();
        assert!(matches!(err, NnError::Divergence { .. }));
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let spec = MlpSpec::new(4, 2, vec![9], Activation::Elu, true).unwrap();
        let p = init_params(&spec, 5);
        for layer in spec.layers() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            let w = &p[layer.weight_offset..layer.weight_offset + layer.fan_in * layer.fan_out];
            assert!(w.iter().all(|v| v.abs() < bound));
        }
        assert_ne!(p, init_params(&spec, 6));
    }
}
