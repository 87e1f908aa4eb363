//! Small fully connected networks with exact first and second derivatives.
//!
//! Parameters live in one flat vector, layer by layer. Within a layer the
//! weight matrix `W` (out×in) is stored row-major and the bias follows it:
//!
//! ```text
//! [W_1[0,0], W_1[0,1], …, W_1[out-1,in-1], b_1[0..out], W_2 …]
//! ```
//!
//! Binary classification uses a single logit (`output_dim == 1`) with the
//! logistic loss; `output_dim ≥ 2` uses softmax cross-entropy. Regression
//! uses the per-example squared error `‖f(x) − y‖²` averaged over examples.

mod checkpoint;
mod laplace;
mod mlp;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};
pub use laplace::{laplace_precision, LaplacePrecision};
pub use mlp::{
    accuracy, error_rate, forward, full_hessian, gradient, hvp, loss, output_jacobian, predict_classes, CurvatureContext,
    FullHessian, LossValue, FULL_HESSIAN_LIMIT,
};
pub use train::{init_params, train, Optimizer, TrainConfig, TrainResult};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model has {params} parameters; dense Hessian is limited to {limit}")]
    TooLarge { params: usize, limit: usize },
    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// `(φ'(z), φ''(z))`; relu takes 0 as its second derivative everywhere.
    #[inline]
    pub fn derivatives(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    (1.0, 0.0)
                } else {
                    let e = z.exp();
                    (e, e)
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                let d = 1.0 - t * t;
                (d, -2.0 * t * d)
            }
            Activation::Relu => (if z > 0.0 { 1.0 } else { 0.0 }, 0.0),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elu" => Ok(Activation::Elu),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(NnError::InvalidConfig(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub use_bias: bool,
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    /// Present when the spec uses biases.
    pub bias_offset: Option<usize>,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden_layers: Vec<usize>,
        activation: Activation,
        use_bias: bool,
    ) -> Result<Self> {
        let spec = MlpSpec { input_dim, output_dim, hidden_layers, activation, use_bias };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_layers.contains(&0) {
            return Err(NnError::InvalidConfig("all layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_layers.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_layers);
        w.push(self.output_dim);
        w
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let widths = self.widths();
        let mut offset = 0;
        widths
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let weight_offset = offset;
                offset += fan_in * fan_out;
                let bias_offset = if self.use_bias {
                    let b = offset;
                    offset += fan_out;
                    Some(b)
                } else {
                    None
                };
                LayerLayout { fan_in, fan_out, weight_offset, bias_offset }
            })
            .collect()
    }

    /// `Σ (in + bias)·out` over layers.
    pub fn param_count(&self) -> usize {
        let bias = usize::from(self.use_bias);
        self.widths().windows(2).map(|p| (p[0] + bias) * p[1]).sum()
    }

    /// Number of classes a classification head distinguishes.
    pub fn class_count(&self) -> usize {
        self.output_dim.max(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    /// n×m real targets.
    Values(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: Targets,
}

impl Dataset {
    pub fn classification(inputs: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(NnError::Shape(format!("{} inputs but {} labels", inputs.nrows(), labels.len())));
        }
        Ok(Dataset { inputs, targets: Targets::Classes(labels) })
    }

    pub fn regression(inputs: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(NnError::Shape(format!(
                "{} inputs but {} target rows",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        Ok(Dataset { inputs, targets: Targets::Values(targets) })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn task(&self) -> Task {
        match self.targets {
            Targets::Classes(_) => Task::Classification,
            Targets::Values(_) => Task::Regression,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes(l) => Some(l),
            Targets::Values(_) => None,
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let inputs = self.inputs.select_rows(rows.iter());
        let targets = match &self.targets {
            Targets::Classes(l) => Targets::Classes(rows.iter().map(|&r| l[r]).collect()),
            Targets::Values(v) => Targets::Values(v.select_rows(rows.iter())),
        };
        Dataset { inputs, targets }
    }

    /// Checks shapes against a network spec.
    pub fn check(&self, spec: &MlpSpec) -> Result<()> {
        if self.inputs.ncols() != spec.input_dim {
            return Err(NnError::Shape(format!(
                "inputs have {} columns, network expects {}",
                self.inputs.ncols(),
                spec.input_dim
            )));
        }
        match &self.targets {
            Targets::Classes(labels) => {
                if let Some(bad) = labels.iter().find(|&&c| c >= spec.class_count()) {
                    return Err(NnError::Shape(format!(
                        "label {bad} out of range for {} classes",
                        spec.class_count()
                    )));
                }
            }
            Targets::Values(v) => {
                if v.ncols() != spec.output_dim {
                    return Err(NnError::Shape(format!(
                        "targets have {} columns, network outputs {}",
                        v.ncols(),
                        spec.output_dim
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_params(spec: &MlpSpec, params: &[f64]) -> Result<()> {
    let want = spec.param_count();
    if params.len() != want {
        return Err(NnError::Shape(format!("{} parameters given, spec has {want}", params.len())));
    }
    Ok(())
}
