use nalgebra::{DMatrix, DMatrixView};

use super::{check_params, Dataset, LayerLayout, MlpSpec, NnError, Result, Targets};
use crate::spectral::MatrixFreeOperator;

/// Dense Hessians are only assembled up to this many parameters.
pub const FULL_HESSIAN_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub data: f64,
    pub penalty: f64,
}

impl LossValue {
    pub fn total(&self) -> f64 {
        self.data + self.penalty
    }
}

/// `Wᵀ` as an in×out view: row-major out×in storage read column-major.
fn weight_view<'a>(params: &'a [f64], layer: &LayerLayout) -> DMatrixView<'a, f64> {
    let len = layer.fan_in * layer.fan_out;
    DMatrixView::from_slice(&params[layer.weight_offset..layer.weight_offset + len], layer.fan_in, layer.fan_out)
}

fn add_bias(z: &mut DMatrix<f64>, params: &[f64], layer: &LayerLayout) {
    if let Some(off) = layer.bias_offset {
        for (o, mut col) in z.column_iter_mut().enumerate() {
            col.add_scalar_mut(params[off + o]);
        }
    }
}

fn write_layer_grad(out: &mut [f64], layer: &LayerLayout, dw: &DMatrix<f64>, g: &DMatrix<f64>) {
    let len = layer.fan_in * layer.fan_out;
    for (dst, src) in out[layer.weight_offset..layer.weight_offset + len].iter_mut().zip(dw.as_slice()) {
        *dst += src;
    }
    if let Some(off) = layer.bias_offset {
        for (o, col) in g.column_iter().enumerate() {
            out[off + o] += col.sum();
        }
    }
}

/// Network outputs (logits or regression values), one row per input row.
pub fn forward(spec: &MlpSpec, params: &[f64], inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_params(spec, params)?;
    if inputs.ncols() != spec.input_dim {
        return Err(NnError::Shape(format!(
            "inputs have {} columns, network expects {}",
            inputs.ncols(),
            spec.input_dim
        )));
    }
    let layers = spec.layers();
    let last = layers.len() - 1;
    let mut a = inputs.clone();
    for (l, layer) in layers.iter().enumerate() {
        let mut z = &a * weight_view(params, layer);
        add_bias(&mut z, params, layer);
        if l < last {
            z.apply(|v| *v = spec.activation.value(*v));
        }
        a = z;
    }
    Ok(a)
}

/// Jacobian of a single-output network, one row `∂f(xᵢ)/∂θ` per input row.
pub fn output_jacobian(spec: &MlpSpec, params: &[f64], inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_params(spec, params)?;
    if spec.output_dim != 1 {
        return Err(NnError::Shape(format!("output Jacobian needs one output, network has {}", spec.output_dim)));
    }
    if inputs.ncols() != spec.input_dim {
        return Err(NnError::Shape(format!(
            "inputs have {} columns, network expects {}",
            inputs.ncols(),
            spec.input_dim
        )));
    }
    let layers = spec.layers();
    let last = layers.len() - 1;
    let mut jac = DMatrix::zeros(inputs.nrows(), params.len());
    let mut row = vec![0.0; params.len()];
    for i in 0..inputs.nrows() {
        let x = inputs.rows(i, 1).into_owned();
        let mut acts = Vec::with_capacity(last);
        let mut d1 = Vec::with_capacity(last);
        for (l, layer) in layers.iter().take(last).enumerate() {
            let prev = if l == 0 { &x } else { &acts[l - 1] };
            let mut z = prev * weight_view(params, layer);
            add_bias(&mut z, params, layer);
            d1.push(z.map(|v| spec.activation.derivatives(v).0));
            z.apply(|v| *v = spec.activation.value(*v));
            acts.push(z);
        }
        row.iter_mut().for_each(|v| *v = 0.0);
        let mut g = DMatrix::from_element(1, 1, 1.0);
        for l in (0..layers.len()).rev() {
            let prev = if l == 0 { &x } else { &acts[l - 1] };
            write_layer_grad(&mut row, &layers[l], &prev.tr_mul(&g), &g);
            if l > 0 {
                g = (&g * weight_view(params, &layers[l]).transpose()).component_mul(&d1[l - 1]);
            }
        }
        jac.row_mut(i).copy_from_slice(&row);
    }
    Ok(jac)
}

/// Per-row curvature of the loss head with respect to the outputs.
#[derive(Debug, Clone)]
enum HeadCurvature {
    /// `s(1 − s)` per row for the single-logit logistic loss.
    Binary(Vec<f64>),
    /// Softmax probabilities.
    Softmax(DMatrix<f64>),
    /// Squared error: constant 2.
    Squared,
}

/// Mean data loss, `dL/dZ` (already divided by n) and the head curvature.
fn head(spec: &MlpSpec, out: &DMatrix<f64>, targets: &Targets) -> (f64, DMatrix<f64>, HeadCurvature) {
    let n = out.nrows();
    let inv_n = 1.0 / n as f64;
    match targets {
        Targets::Classes(labels) if spec.output_dim == 1 => {
            let mut g = DMatrix::zeros(n, 1);
            let mut curv = Vec::with_capacity(n);
            let mut total = 0.0;
            for i in 0..n {
                let z = out[(i, 0)];
                let y = labels[i] as f64;
                let sp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                total += sp - y * z;
                let s = crate::bayes_linear::sigmoid(z);
                g[(i, 0)] = (s - y) * inv_n;
                curv.push(s * (1.0 - s));
            }
            (total * inv_n, g, HeadCurvature::Binary(curv))
        }
        Targets::Classes(labels) => {
            let c = out.ncols();
            let mut p = DMatrix::zeros(n, c);
            let mut total = 0.0;
            for i in 0..n {
                let row = out.row(i);
                let m = row.max();
                let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
                let lse = m + sum.ln();
                total += lse - out[(i, labels[i])];
                for j in 0..c {
                    p[(i, j)] = (out[(i, j)] - lse).exp();
                }
            }
            let mut g = p.clone();
            for i in 0..n {
                g[(i, labels[i])] -= 1.0;
            }
            (total * inv_n, g * inv_n, HeadCurvature::Softmax(p))
        }
        Targets::Values(y) => {
            let diff = out - y;
            let total = diff.norm_squared();
            (total * inv_n, diff * (2.0 * inv_n), HeadCurvature::Squared)
        }
    }
}

fn head_hessian_apply(curv: &HeadCurvature, rz: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let inv_n = 1.0 / n as f64;
    match curv {
        HeadCurvature::Binary(c) => DMatrix::from_fn(rz.nrows(), 1, |i, _| c[i] * rz[(i, 0)] * inv_n),
        HeadCurvature::Softmax(p) => {
            let mut out = p.component_mul(rz);
            for i in 0..rz.nrows() {
                let dot: f64 = out.row(i).sum();
                for j in 0..rz.ncols() {
                    out[(i, j)] -= p[(i, j)] * dot;
                }
            }
            out * inv_n
        }
        HeadCurvature::Squared => rz * (2.0 * inv_n),
    }
}

fn penalty(params: &[f64], weight_decay: f64) -> f64 {
    if weight_decay == 0.0 {
        0.0
    } else {
        0.5 * weight_decay * params.iter().map(|v| v * v).sum::<f64>()
    }
}

fn prepare(spec: &MlpSpec, params: &[f64], data: &Dataset) -> Result<()> {
    spec.validate()?;
    check_params(spec, params)?;
    data.check(spec)?;
    if data.is_empty() {
        return Err(NnError::Shape("dataset is empty".into()));
    }
    Ok(())
}

/// Mean data loss plus `(wd/2)‖θ‖²`, reported separately.
pub fn loss(spec: &MlpSpec, params: &[f64], data: &Dataset, weight_decay: f64) -> Result<LossValue> {
    prepare(spec, params, data)?;
    let out = forward(spec, params, &data.inputs)?;
    let (value, _, _) = head(spec, &out, &data.targets);
    Ok(LossValue { data: value, penalty: penalty(params, weight_decay) })
}

/// Everything a Hessian-vector product needs, cached from one forward and one
/// backward pass at fixed parameters.
#[derive(Debug, Clone)]
pub struct CurvatureContext {
    spec: MlpSpec,
    layers: Vec<LayerLayout>,
    params: Vec<f64>,
    inputs: DMatrix<f64>,
    /// Hidden activations `A_l`, one per hidden layer.
    acts: Vec<DMatrix<f64>>,
    /// `φ'(Z_l)` and `φ''(Z_l)` for hidden layers.
    d1: Vec<DMatrix<f64>>,
    d2: Vec<DMatrix<f64>>,
    /// `dL/dZ_l` for every layer.
    grads_z: Vec<DMatrix<f64>>,
    /// `dL/dA_l` for hidden layers.
    grads_a: Vec<DMatrix<f64>>,
    curvature: HeadCurvature,
    weight_decay: f64,
    loss: LossValue,
    gradient: Vec<f64>,
}

impl CurvatureContext {
    pub fn new(spec: &MlpSpec, params: &[f64], data: &Dataset, weight_decay: f64) -> Result<Self> {
        prepare(spec, params, data)?;
        let layers = spec.layers();
        let last = layers.len() - 1;

        let mut acts = Vec::with_capacity(last);
        let mut d1 = Vec::with_capacity(last);
        let mut d2 = Vec::with_capacity(last);
        let mut out = DMatrix::zeros(0, 0);
        for (l, layer) in layers.iter().enumerate() {
            let prev = if l == 0 { &data.inputs } else { &acts[l - 1] };
            let mut z = prev * weight_view(params, layer);
            add_bias(&mut z, params, layer);
            if l < last {
                let mut p1 = z.clone();
                let mut p2 = z.clone();
                for ((zv, a), b) in z.iter_mut().zip(p1.iter_mut()).zip(p2.iter_mut()) {
                    let (f1, f2) = spec.activation.derivatives(*zv);
                    *a = f1;
                    *b = f2;
                    *zv = spec.activation.value(*zv);
                }
                acts.push(z);
                d1.push(p1);
                d2.push(p2);
            } else {
                out = z;
            }
        }

        let (data_loss, g_out, curvature) = head(spec, &out, &data.targets);
        let mut gradient = vec![0.0; params.len()];
        let mut grads_z = vec![DMatrix::zeros(0, 0); layers.len()];
        let mut grads_a = vec![DMatrix::zeros(0, 0); last];
        grads_z[last] = g_out;
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let prev = if l == 0 { &data.inputs } else { &acts[l - 1] };
            let dw = prev.tr_mul(&grads_z[l]);
            write_layer_grad(&mut gradient, layer, &dw, &grads_z[l]);
            if l > 0 {
                let da = &grads_z[l] * weight_view(params, layer).transpose();
                grads_z[l - 1] = da.component_mul(&d1[l - 1]);
                grads_a[l - 1] = da;
            }
        }
        if weight_decay != 0.0 {
            for (g, p) in gradient.iter_mut().zip(params) {
                *g += weight_decay * p;
            }
        }
        Ok(CurvatureContext {
            spec: spec.clone(),
            layers,
            params: params.to_vec(),
            inputs: data.inputs.clone(),
            acts,
            d1,
            d2,
            grads_z,
            grads_a,
            curvature,
            weight_decay,
            loss: LossValue { data: data_loss, penalty: penalty(params, weight_decay) },
            gradient,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn loss(&self) -> LossValue {
        self.loss
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// `H v` by a forward R-pass followed by a backward R-pass.
    pub fn hvp_into(&self, v: &[f64], out: &mut [f64]) {
        let layers = &self.layers;
        let last = layers.len() - 1;
        let n = self.inputs.nrows();

        let mut r_acts: Vec<DMatrix<f64>> = Vec::with_capacity(last);
        let mut r_z: Vec<DMatrix<f64>> = Vec::with_capacity(layers.len());
        for (l, layer) in layers.iter().enumerate() {
            let prev = if l == 0 { &self.inputs } else { &self.acts[l - 1] };
            let mut rz = prev * weight_view(v, layer);
            add_bias(&mut rz, v, layer);
            if l > 0 {
                rz += &r_acts[l - 1] * weight_view(&self.params, layer);
            }
            if l < last {
                r_acts.push(rz.component_mul(&self.d1[l]));
            }
            r_z.push(rz);
        }

        out.fill(0.0);
        let mut r_g = head_hessian_apply(&self.curvature, &r_z[last], n);
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let prev = if l == 0 { &self.inputs } else { &self.acts[l - 1] };
            let mut r_dw = prev.tr_mul(&r_g);
            if l > 0 {
                r_dw += r_acts[l - 1].tr_mul(&self.grads_z[l]);
            }
            write_layer_grad(out, layer, &r_dw, &r_g);
            if l > 0 {
                let r_da = &r_g * weight_view(&self.params, layer).transpose()
                    + &self.grads_z[l] * weight_view(v, layer).transpose();
                let mut next = r_da.component_mul(&self.d1[l - 1]);
                let second = self.grads_a[l - 1].component_mul(&self.d2[l - 1]).component_mul(&r_z[l - 1]);
                next += second;
                r_g = next;
            }
        }
        if self.weight_decay != 0.0 {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += self.weight_decay * vi;
            }
        }
    }

    pub fn hvp(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.params.len()];
        self.hvp_into(v, &mut out);
        out
    }
}

impl MatrixFreeOperator for CurvatureContext {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.hvp_into(v, out)
    }
}

/// Exact gradient of [`loss`] by reverse-mode differentiation.
pub fn gradient(spec: &MlpSpec, params: &[f64], data: &Dataset, weight_decay: f64) -> Result<Vec<f64>> {
    Ok(CurvatureContext::new(spec, params, data, weight_decay)?.gradient)
}

/// Hessian-vector product of [`loss`].
pub fn hvp(spec: &MlpSpec, params: &[f64], data: &Dataset, weight_decay: f64, v: &[f64]) -> Result<Vec<f64>> {
    check_params(spec, v)?;
    Ok(CurvatureContext::new(spec, params, data, weight_decay)?.hvp(v))
}

#[derive(Debug, Clone)]
pub struct FullHessian {
    /// Symmetrized `(H + Hᵀ)/2`.
    pub matrix: DMatrix<f64>,
    /// `max |H_ij − H_ji| / max |H_ij|` before symmetrizing.
    pub max_asymmetry: f64,
}

/// Dense Hessian assembled column by column from Hessian-vector products.
pub fn full_hessian(spec: &MlpSpec, params: &[f64], data: &Dataset, weight_decay: f64) -> Result<FullHessian> {
    let p = spec.param_count();
    if p > FULL_HESSIAN_LIMIT {
        return Err(NnError::TooLarge { params: p, limit: FULL_HESSIAN_LIMIT });
    }
    let ctx = CurvatureContext::new(spec, params, data, weight_decay)?;
    let mut h = DMatrix::zeros(p, p);
    let mut e = vec![0.0; p];
    let mut col = vec![0.0; p];
    for j in 0..p {
        e[j] = 1.0;
        ctx.hvp_into(&e, &mut col);
        h.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    let scale = h.amax();
    let asym = crate::spectral::max_asymmetry_dense(&h);
    let max_asymmetry = if scale > 0.0 { asym / scale } else { 0.0 };
    let matrix = (&h + h.transpose()) * 0.5;
    Ok(FullHessian { matrix, max_asymmetry })
}

/// Predicted class per row: `logit > 0` for a single logit, argmax otherwise.
pub fn predict_classes(spec: &MlpSpec, params: &[f64], inputs: &DMatrix<f64>) -> Result<Vec<usize>> {
    let out = forward(spec, params, inputs)?;
    Ok(out
        .row_iter()
        .map(|row| {
            if spec.output_dim == 1 {
                usize::from(row[0] > 0.0)
            } else {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                    .0
            }
        })
        .collect())
}

pub fn accuracy(spec: &MlpSpec, params: &[f64], data: &Dataset) -> Result<f64> {
    let labels = data
        .labels()
        .ok_or_else(|| NnError::InvalidConfig("accuracy needs a classification dataset".into()))?;
    if labels.is_empty() {
        return Err(NnError::Shape("dataset is empty".into()));
    }
    let pred = predict_classes(spec, params, &data.inputs)?;
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn error_rate(spec: &MlpSpec, params: &[f64], data: &Dataset) -> Result<f64> {
    Ok(1.0 - accuracy(spec, params, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dataset};
    use crate::rng::{seeded, standard_normal_vec};

    fn random_params(spec: &MlpSpec, seed: u64, scale: f64) -> Vec<f64> {
        standard_normal_vec(&mut seeded(seed), spec.param_count()).iter().map(|v| v * scale).collect()
    }

    fn toy_classification(n: usize, d: usize, classes: usize, seed: u64) -> Dataset {
        let x = DMatrix::from_vec(n, d, standard_normal_vec(&mut seeded(seed), n * d));
        Dataset::classification(x, (0..n).map(|i| i % classes).collect()).unwrap()
    }

    fn toy_regression(n: usize, d: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let x = DMatrix::from_vec(n, d, standard_normal_vec(&mut rng, n * d));
        let y = DMatrix::from_vec(n, m, standard_normal_vec(&mut rng, n * m));
        Dataset::regression(x, y).unwrap()
    }

    #[test]
    fn output_jacobian_matches_finite_differences() {
        for bias in [false, true] {
            let spec = MlpSpec::new(3, 1, vec![5, 4], Activation::Tanh, bias).unwrap();
            let params = random_params(&spec, 4, 0.7);
            let x = toy_regression(6, 3, 1, 9).inputs;
            let jac = output_jacobian(&spec, &params, &x).unwrap();
            let h = 1e-6;
            for j in 0..params.len() {
                let (mut up, mut down) = (params.clone(), params.clone());
                up[j] += h;
                down[j] -= h;
                let fd = (forward(&spec, &up, &x).unwrap() - forward(&spec, &down, &x).unwrap()) / (2.0 * h);
                for i in 0..x.nrows() {
                    assert!((jac[(i, j)] - fd[(i, 0)]).abs() <= 1e-7, "bias={bias} ({i},{j})");
                }
            }
        }
        let two = MlpSpec::new(3, 2, vec![4], Activation::Tanh, false).unwrap();
        assert!(output_jacobian(&two, &random_params(&two, 1, 1.0), &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let spec = MlpSpec::new(3, 2, vec![4], Activation::Tanh, false).unwrap();
        let out = forward(&spec, &vec![0.0; spec.param_count()], &DMatrix::from_element(5, 3, 1.5)).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_layer_is_affine() {
        let spec = MlpSpec::new(2, 2, vec![], Activation::Elu, true).unwrap();
        // W = [[1,2],[3,4]], b = [5,6]
        let params = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let out = forward(&spec, &params, &DMatrix::from_row_slice(1, 2, &[1.0, -1.0])).unwrap();
        assert_eq!(out[(0, 0)], 1.0 - 2.0 + 5.0);
        assert_eq!(out[(0, 1)], 3.0 - 4.0 + 6.0);
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        for c in [1usize, 3] {
            let spec = MlpSpec::new(2, c, vec![3], Activation::Relu, true).unwrap();
            let data = toy_classification(6, 2, spec.class_count(), 1);
            let l = loss(&spec, &vec![0.0; spec.param_count()], &data, 0.0).unwrap();
            assert!((l.data - (spec.class_count() as f64).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_regression_fit_has_zero_loss_and_gradient() {
        let spec = MlpSpec::new(2, 1, vec![], Activation::Tanh, true).unwrap();
        let params = [0.5, -1.0, 0.25];
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
        let y = forward(&spec, &params, &x).unwrap();
        let data = Dataset::regression(x, y).unwrap();
        assert_eq!(loss(&spec, &params, &data, 0.0).unwrap().data, 0.0);
        assert!(gradient(&spec, &params, &data, 0.0).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn weight_decay_term() {
        let spec = MlpSpec::new(2, 1, vec![3], Activation::Tanh, true).unwrap();
        let params = random_params(&spec, 2, 1.0);
        let data = toy_regression(4, 2, 1, 3);
        let l = loss(&spec, &params, &data, 0.3).unwrap();
        let want = 0.15 * params.iter().map(|v| v * v).sum::<f64>();
        assert!((l.penalty - want).abs() < 1e-12);
    }

    fn check_gradient(spec: &MlpSpec, data: &Dataset, seed: u64) {
        let params = random_params(spec, seed, 0.5);
        let g = gradient(spec, &params, data, 0.01).unwrap();
        let h = 1e-5;
        for j in 0..params.len() {
            let mut p = params.clone();
            p[j] += h;
            let up = loss(spec, &p, data, 0.01).unwrap().total();
            p[j] -= 2.0 * h;
            let down = loss(spec, &p, data, 0.01).unwrap().total();
            let fd = (up - down) / (2.0 * h);
            assert!((g[j] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "coord {j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for act in [Activation::Elu, Activation::Tanh, Activation::Relu] {
            let spec = MlpSpec::new(2, 2, vec![16], act, true).unwrap();
            check_gradient(&spec, &toy_classification(12, 2, 2, 4), 5);
            check_gradient(&spec, &toy_regression(12, 2, 2, 6), 7);
            let single = MlpSpec::new(2, 1, vec![5, 4], act, true).unwrap();
            check_gradient(&single, &toy_classification(9, 2, 2, 8), 9);
        }
    }

    #[test]
    fn hvp_matches_gradient_differences() {
        for act in [Activation::Elu, Activation::Tanh] {
            let spec = MlpSpec::new(2, 2, vec![8], act, true).unwrap();
            for data in [toy_classification(10, 2, 2, 1), toy_regression(10, 2, 2, 2)] {
                let params = random_params(&spec, 3, 0.7);
                let v = random_params(&spec, 4, 1.0);
                let hv = hvp(&spec, &params, &data, 0.0, &v).unwrap();
                let h = 1e-4;
                let plus: Vec<f64> = params.iter().zip(&v).map(|(p, d)| p + h * d).collect();
                let minus: Vec<f64> = params.iter().zip(&v).map(|(p, d)| p - h * d).collect();
                let gp = gradient(&spec, &plus, &data, 0.0).unwrap();
                let gm = gradient(&spec, &minus, &data, 0.0).unwrap();
                let scale = hv.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                for j in 0..hv.len() {
                    let fd = (gp[j] - gm[j]) / (2.0 * h);
                    assert!((hv[j] - fd).abs() <= 1e-4 * fd.abs().max(scale * 1e-2), "{act:?} {j}: {} vs {fd}", hv[j]);
                }
            }
        }
    }

    #[test]
    fn hvp_is_linear_and_symmetric() {
        let spec = MlpSpec::new(3, 3, vec![6, 5], Activation::Tanh, true).unwrap();
        let data = toy_classification(15, 3, 3, 11);
        let ctx = CurvatureContext::new(&spec, &random_params(&spec, 12, 0.6), &data, 1e-3).unwrap();
        let v = random_params(&spec, 13, 1.0);
        let w = random_params(&spec, 14, 1.0);
        let hv = ctx.hvp(&v);
        let hw = ctx.hvp(&w);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (a, b) = (dot(&hv, &w), dot(&v, &hw));
        assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
        let combo: Vec<f64> = v.iter().zip(&w).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let hc = ctx.hvp(&combo);
        for j in 0..hc.len() {
            let want = 2.0 * hv[j] - 0.5 * hw[j];
            assert!((hc[j] - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
        assert!(ctx.hvp(&vec![0.0; ctx.len()]).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn linear_regression_hessian_is_gram() {
        let spec = MlpSpec::new(3, 1, vec![], Activation::Elu, false).unwrap();
        let data = toy_regression(20, 3, 1, 21);
        let fh = full_hessian(&spec, &[0.3, -0.2, 0.1], &data, 0.0).unwrap();
        let want = data.inputs.tr_mul(&data.inputs) * (2.0 / 20.0);
        assert!((fh.matrix - want).amax() < 1e-10);
    }

    #[test]
    fn full_hessian_guard_and_symmetry() {
        let big = MlpSpec::new(2, 1, vec![100, 100], Activation::Elu, true).unwrap();
        let data = toy_classification(3, 2, 2, 0);
        let p = vec![0.0; big.param_count()];
        assert!(matches!(full_hessian(&big, &p, &data, 0.0), Err(NnError::TooLarge { .. })));
        let spec = MlpSpec::new(2, 1, vec![6, 6], Activation::Elu, true).unwrap();
        let fh = full_hessian(&spec, &random_params(&spec, 1, 0.8), &data, 0.0).unwrap();
        assert!(fh.max_asymmetry <= 1e-8);
    }

    #[test]
    fn outputs_finite_for_random_draws() {
        let spec = MlpSpec::new(2, 3, vec![10, 10], Activation::Elu, true).unwrap();
        for seed in 0..10 {
            let out = forward(&spec, &random_params(&spec, seed, 2.0), &toy_regression(5, 2, 3, seed).inputs).unwrap();
            assert!(out.iter().all(|v| v.is_finite()));
        }
    }
}
