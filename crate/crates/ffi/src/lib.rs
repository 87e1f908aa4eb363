//! C ABI over the `effdim` library.
//!
//! Every fallible function returns an [`EffdimStatus`]; on failure the message
//! is available from [`effdim_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function. Matrices are
//! passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use effdim::bayes_linear::{self, BayesError, GaussianLinearModel};
use effdim::experiments::{gen_swiss_roll, gen_two_spirals};
use effdim::measures::{measure_model, MeasureError, MeasureOptions};
use effdim::nn::{
    self, init_params, CheckpointHeader, Dataset, MlpSpec, NnError, TrainConfig,
};
use effdim::spectral::{self, SpectralError};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffdimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffdimActivation {
    Elu = 0,
    Tanh = 1,
    Relu = 2,
}

/// Generalization measures of one network; mirrors the library report.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EffdimMeasures {
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

/// Labelled inputs.
pub struct EffdimDataset {
    inner: Dataset,
}

/// Multilayer perceptron architecture and parameters.
pub struct EffdimMlp {
    spec: MlpSpec,
    params: Vec<f64>,
    seed: u64,
    steps: usize,
}

/// Gaussian Bayesian linear model.
pub struct EffdimLinearModel {
    inner: GaussianLinearModel,
    n: usize,
    k: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(EffdimStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EffdimStatus::InvalidArgument, msg.into())
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        let status = match e {
            SpectralError::InvalidInput(_) | SpectralError::InvalidRegularizer(_) | SpectralError::InvalidConfig(_) => {
                EffdimStatus::InvalidArgument
            }
            _ => EffdimStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<BayesError> for Failure {
    fn from(e: BayesError) -> Self {
        let status = match e {
            BayesError::Shape(_) | BayesError::InvalidInput(_) | BayesError::InvalidConfig(_) => {
                EffdimStatus::InvalidArgument
            }
            BayesError::Spectral(s) => return s.into(),
            _ => EffdimStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<NnError> for Failure {
    fn from(e: NnError) -> Self {
        let status = match e {
            NnError::Shape(_) | NnError::InvalidConfig(_) | NnError::TooLarge { .. } => EffdimStatus::InvalidArgument,
            NnError::Checkpoint(_) => EffdimStatus::Io,
            NnError::Divergence { .. } => EffdimStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<MeasureError> for Failure {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::Nn(n) => n.into(),
            MeasureError::Spectral(s) => s.into(),
            MeasureError::InvalidConfig(m) => invalid(m),
            other => Failure(EffdimStatus::Numerical, other.to_string()),
        }
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records any failure or panic, and returns its status.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> EffdimStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EffdimStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            EffdimStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(EffdimStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure(EffdimStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| Failure(EffdimStatus::NullPointer, format!("{name} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| Failure(EffdimStatus::NullPointer, format!("{name} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure(EffdimStatus::NullPointer, format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn path_arg<'a>(p: *const c_char) -> FfiResult<&'a Path> {
    if p.is_null() {
        return Err(Failure(EffdimStatus::NullPointer, "path is null".into()));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(Path::new(s))
}

fn matrix(data: &[f64], rows: usize, cols: usize, name: &str) -> FfiResult<DMatrix<f64>> {
    let len = rows.checked_mul(cols).ok_or_else(|| invalid(format!("{name} dimensions overflow")))?;
    if data.len() != len {
        return Err(invalid(format!("{name} has {} entries, expected {len}", data.len())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn effdim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn effdim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `Σ λ/(λ+z)` over `len` eigenvalues. With `clamp_negative`, negative
/// eigenvalues count as zero.
///
/// # Safety
/// `eigenvalues` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn effdim_effective_dimensionality(
    eigenvalues: *const f64,
    len: usize,
    z: f64,
    clamp_negative: bool,
    out: *mut f64,
) -> EffdimStatus {
    guard(|| {
        let eig = slice(eigenvalues, len, "eigenvalues")?;
        write_out(out, spectral::effective_dimensionality_of(eig, z, clamp_negative)?, "out")
    })
}

/// Eigenvalues of a symmetric `dim×dim` matrix, written in non-increasing order.
///
/// # Safety
/// `matrix` must point to `dim*dim` doubles and `out` to `dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn effdim_symmetric_eigenvalues(
    matrix_data: *const f64,
    dim: usize,
    out: *mut f64,
) -> EffdimStatus {
    guard(|| {
        let data = slice(matrix_data, dim.saturating_mul(dim), "matrix")?;
        let out = slice_mut(out, dim, "out")?;
        let spectrum = spectral::dense_eigvalsh(&matrix(data, dim, dim, "matrix")?)?;
        out.copy_from_slice(spectrum.eigenvalues());
        Ok(())
    })
}

/// Builds a Bayesian linear model from an `n×k` feature matrix.
///
/// # Safety
/// `features` must point to `n*k` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn effdim_linear_model_new(
    features: *const f64,
    n: usize,
    k: usize,
    prior_variance: f64,
    noise_variance: f64,
    out: *mut *mut EffdimLinearModel,
) -> EffdimStatus {
    guard(|| {
        let phi = matrix(slice(features, n.saturating_mul(k), "features")?, n, k, "features")?;
        let inner = GaussianLinearModel::new(phi, prior_variance, noise_variance)?;
        write_out(out, boxed(EffdimLinearModel { inner, n, k }), "out")
    })
}

/// # Safety
/// `model` must be NULL or a handle from `effdim_linear_model_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn effdim_linear_model_free(model: *mut EffdimLinearModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Posterior mean (`k` values) for `n` targets.
///
/// # Safety
/// `targets` must point to `n` doubles and `mean_out` to `k` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn effdim_linear_model_posterior_mean(
    model: *const EffdimLinearModel,
    targets: *const f64,
    n: usize,
    mean_out: *mut f64,
    k: usize,
) -> EffdimStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if n != m.n || k != m.k {
            return Err(invalid(format!("model is {}×{}, got n={n} k={k}", m.n, m.k)));
        }
        let post = bayes_linear::posterior(&m.inner, slice(targets, n, "targets")?)?;
        slice_mut(mean_out, k, "mean_out")?.copy_from_slice(post.mean.as_slice());
        Ok(())
    })
}

/// Parameter-space posterior contraction `tr(prior) − tr(posterior)`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn effdim_linear_model_contraction(
    model: *const EffdimLinearModel,
    out: *mut f64,
) -> EffdimStatus {
    guard(|| {
        let m = deref(model, "model")?;
        write_out(out, bayes_linear::posterior_contraction_closed_form(&m.inner)?, "out")
    })
}

/// Classification dataset from `n×dim` inputs and `n` class labels.
///
/// # Safety
/// `inputs` must point to `n*dim` doubles, `labels` to `n` values.
#[no_mangle]
pub unsafe extern "C" fn effdim_dataset_new(
    inputs: *const f64,
    n: usize,
    dim: usize,
    labels: *const usize,
    out: *mut *mut EffdimDataset,
) -> EffdimStatus {
    guard(|| {
        let x = matrix(slice(inputs, n.saturating_mul(dim), "inputs")?, n, dim, "inputs")?;
        let inner = Dataset::classification(x, slice(labels, n, "labels")?.to_vec())?;
        write_out(out, boxed(EffdimDataset { inner }), "out")
    })
}

/// Two interleaved spirals in the plane, two classes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn effdim_dataset_two_spirals(
    n: usize,
    noise: f64,
    seed: u64,
    out: *mut *mut EffdimDataset,
) -> EffdimStatus {
    guard(|| {
        if n == 0 || !(noise >= 0.0 && noise.is_finite()) {
            return Err(invalid("need n > 0 and finite noise >= 0"));
        }
        write_out(out, boxed(EffdimDataset { inner: gen_two_spirals(n, noise, seed) }), "out")
    })
}

/// Two-dimensional Swiss roll, two classes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn effdim_dataset_swiss_roll(
    n: usize,
    noise: f64,
    seed: u64,
    out: *mut *mut EffdimDataset,
) -> EffdimStatus {
    guard(|| {
        if n == 0 || !(noise >= 0.0 && noise.is_finite()) {
            return Err(invalid("need n > 0 and finite noise >= 0"));
        }
        write_out(out, boxed(EffdimDataset { inner: gen_swiss_roll(n, noise, seed) }), "out")
    })
}

/// Number of examples, or 0 for NULL.
///
/// # Safety
/// `data` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn effdim_dataset_len(data: *const EffdimDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `data` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn effdim_dataset_free(data: *mut EffdimDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Network with `n_hidden` hidden layers of the given widths, initialized
/// from `seed`.
///
/// # Safety
/// `hidden` must point to `n_hidden` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn effdim_mlp_new(
    input_dim: usize,
    output_dim: usize,
    hidden: *const usize,
    n_hidden: usize,
    activation: EffdimActivation,
    bias: bool,
    seed: u64,
    out: *mut *mut EffdimMlp,
) -> EffdimStatus {
    guard(|| {
        let act = match activation {
            EffdimActivation::Elu => nn::Activation::Elu,
            EffdimActivation::Tanh => nn::Activation::Tanh,
            EffdimActivation::Relu => nn::Activation::Relu,
        };
        let spec = MlpSpec::new(input_dim, output_dim, slice(hidden, n_hidden, "hidden")?.to_vec(), act, bias)?;
        let params = init_params(&spec, seed);
        write_out(out, boxed(EffdimMlp { spec, params, seed, steps: 0 }), "out")
    })
}

/// Loads a network checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn effdim_mlp_load(path: *const c_char, out: *mut *mut EffdimMlp) -> EffdimStatus {
    guard(|| {
        let (header, params) = nn::load_checkpoint(path_arg(path)?)?;
        let mlp = EffdimMlp { spec: header.spec, params, seed: header.seed, steps: header.steps };
        write_out(out, boxed(mlp), "out")
    })
}

/// Writes a checkpoint readable by `effdim_mlp_load` and the CLI.
///
/// # Safety
/// `mlp` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn effdim_mlp_save(mlp: *const EffdimMlp, path: *const c_char) -> EffdimStatus {
    guard(|| {
        let m = deref(mlp, "mlp")?;
        let header =
            CheckpointHeader { spec: m.spec.clone(), seed: m.seed, steps: m.steps, param_count: m.params.len() };
        nn::save_checkpoint(path_arg(path)?, &header, &m.params)?;
        Ok(())
    })
}

/// # Safety
/// `mlp` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn effdim_mlp_free(mlp: *mut EffdimMlp) {
    if !mlp.is_null() {
        drop(Box::from_raw(mlp));
    }
}

/// Number of parameters, or 0 for NULL.
///
/// # Safety
/// `mlp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn effdim_mlp_param_count(mlp: *const EffdimMlp) -> usize {
    mlp.as_ref().map_or(0, |m| m.params.len())
}

/// Copies the flat parameter vector into `out` (`len` must equal the count).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn effdim_mlp_get_params(mlp: *const EffdimMlp, out: *mut f64, len: usize) -> EffdimStatus {
    guard(|| {
        let m = deref(mlp, "mlp")?;
        if len != m.params.len() {
            return Err(invalid(format!("buffer holds {len} values, model has {}", m.params.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(&m.params);
        Ok(())
    })
}

/// Full-batch Adam for `steps` steps; writes the last recorded loss.
///
/// # Safety
/// `mlp` and `data` must be live handles; `final_loss` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn effdim_mlp_train(
    mlp: *mut EffdimMlp,
    data: *const EffdimDataset,
    learning_rate: f64,
    steps: usize,
    seed: u64,
    final_loss: *mut f64,
) -> EffdimStatus {
    guard(|| {
        let m = deref_mut(mlp, "mlp")?;
        let d = deref(data, "data")?;
        let fit = nn::train(&m.spec, &m.params, &d.inner, &TrainConfig::adam(learning_rate, steps, seed))?;
        m.params = fit.params;
        m.steps += steps;
        if !final_loss.is_null() {
            final_loss.write(fit.loss_trace.last().copied().unwrap_or(f64::NAN));
        }
        Ok(())
    })
}

/// Fraction of correctly classified examples.
///
/// # Safety
/// `mlp` and `data` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn effdim_mlp_accuracy(
    mlp: *const EffdimMlp,
    data: *const EffdimDataset,
    out: *mut f64,
) -> EffdimStatus {
    guard(|| {
        let m = deref(mlp, "mlp")?;
        let d = deref(data, "data")?;
        write_out(out, nn::accuracy(&m.spec, &m.params, &d.inner)?, "out")
    })
}

/// All measures of the network. `z <= 0` selects `1/(n·prior_variance)`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn effdim_mlp_measures(
    mlp: *const EffdimMlp,
    train: *const EffdimDataset,
    test: *const EffdimDataset,
    z: f64,
    prior_variance: f64,
    seed: u64,
    compute_pac_bayes: bool,
    out: *mut EffdimMeasures,
) -> EffdimStatus {
    guard(|| {
        let m = deref(mlp, "mlp")?;
        let (tr, te) = (deref(train, "train")?, deref(test, "test")?);
        if out.is_null() {
            return Err(Failure(EffdimStatus::NullPointer, "out is null".into()));
        }
        let mut opts = MeasureOptions::preset(tr.inner.len(), prior_variance);
        if z > 0.0 {
            opts.z = z;
        }
        opts.compute_pac_bayes = compute_pac_bayes;
        opts.sigma.seed = effdim::rng::derive_seed(seed, &[0]);
        opts.lanczos.seed = effdim::rng::derive_seed(seed, &[1]);
        let r = measure_model("ffi", &m.spec, &m.params, &tr.inner, &te.inner, &opts)?;
        out.write(EffdimMeasures {
            n_eff_hessian: r.n_eff_hessian,
            z_used: r.z_used,
            path_norm: r.path_norm,
            log_path_norm: r.log_path_norm,
            pac_bayes: r.pac_bayes,
            mag_pac_bayes: r.mag_pac_bayes,
            occam_log_factor: r.occam_log_factor,
            train_loss: r.train_loss,
            train_error: r.train_error,
            test_loss: r.test_loss,
            test_error: r.test_error,
        });
        Ok(())
    })
}
