use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn::Dataset;
use crate::rng::{derive_seed, seeded, standard_normal_vec};

/// Informative features in the linear double-descent generator.
pub const INFORMATIVE_FEATURES: usize = 20;

/// Points of one Swiss-roll arm before noise: `θ = 1.5π(1 + 2t)`, radius `θ`,
/// the second class rotated by π.
pub fn swiss_roll_point(t: f64, class: usize) -> (f64, f64) {
    let theta = 1.5 * PI * (1.0 + 2.0 * t);
    let phase = if class == 0 { 0.0 } else { PI };
    (theta * (theta + phase).cos(), theta * (theta + phase).sin())
}

/// Shifts and scales each column to zero mean and unit standard deviation;
/// returns `(mean, std)` per column. Columns with zero spread are only centered.
pub fn standardize_columns(x: &mut DMatrix<f64>) -> Vec<(f64, f64)> {
    let n = x.nrows() as f64;
    let mut stats = Vec::with_capacity(x.ncols());
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let std = (col.norm_squared() / n).sqrt();
        if std > 0.0 {
            col /= std;
        }
        stats.push((mean, std));
    }
    stats
}

/// Raw Swiss-roll coordinates, labels and curve parameters `t`.
pub fn swiss_roll_raw(n: usize, noise: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>, Vec<f64>) {
    let mut rng = seeded(seed);
    let first = n.div_ceil(2);
    let mut x = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for i in 0..n {
        let class = usize::from(i >= first);
        let t: f64 = rng.random();
        let (a, b) = swiss_roll_point(t, class);
        let ea: f64 = rng.sample(StandardNormal);
        let eb: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = a + noise * ea;
        x[(i, 1)] = b + noise * eb;
        labels.push(class);
        ts.push(t);
    }
    (x, labels, ts)
}

/// Two interleaved Swiss-roll arms, balanced labels, standardized coordinates.
pub fn gen_swiss_roll(n: usize, noise: f64, seed: u64) -> Dataset {
    assert!(n >= 2, "need at least two points");
    let (mut x, labels, _) = swiss_roll_raw(n, noise, seed);
    standardize_columns(&mut x);
    Dataset::classification(x, labels).expect("shapes agree")
}

/// Classic two-spirals data. The second arm is the exact point reflection of
/// the first, so rotating one class by π gives the other. Coordinates are
/// divided by their per-column standard deviation (the mean is zero by symmetry).
pub fn gen_two_spirals(n: usize, noise: f64, seed: u64) -> Dataset {
    assert!(n >= 2, "need at least two points");
    let half = n / 2;
    let mut rng = seeded(seed);
    let mut arm = Vec::with_capacity(half);
    for _ in 0..half {
        let u: f64 = rng.random();
        let r = u.sqrt() * 780.0 * 2.0 * PI / 360.0;
        let nx: f64 = rng.random();
        let ny: f64 = rng.random();
        arm.push((-r.cos() * r + nx * noise, r.sin() * r + ny * noise));
    }
    let mut x = DMatrix::zeros(2 * half, 2);
    let mut labels = Vec::with_capacity(2 * half);
    for (i, &(a, b)) in arm.iter().enumerate() {
        x[(i, 0)] = a;
        x[(i, 1)] = b;
        x[(half + i, 0)] = -a;
        x[(half + i, 1)] = -b;
    }
    labels.extend(std::iter::repeat_n(0, half));
    labels.extend(std::iter::repeat_n(1, half));
    for mut col in x.column_iter_mut() {
        let rms = (col.norm_squared() / (2 * half) as f64).sqrt();
        if rms > 0.0 {
            col /= rms;
        }
    }
    Dataset::classification(x, labels).expect("shapes agree")
}

/// One draw of the linear double-descent problem.
#[derive(Debug, Clone)]
pub struct DoubleDescentData {
    pub train_features: DMatrix<f64>,
    pub train_targets: Vec<f64>,
    pub test_features: DMatrix<f64>,
    pub test_targets: Vec<f64>,
}

fn double_descent_split(n: usize, k: usize, informative: usize, seed: u64, split: u64) -> (DMatrix<f64>, Vec<f64>) {
    let y = standard_normal_vec(&mut seeded(derive_seed(seed, &[split, u64::MAX])), n);
    let mut x = DMatrix::zeros(n, k);
    for j in 0..k {
        let col = standard_normal_vec(&mut seeded(derive_seed(seed, &[split, j as u64])), n);
        for i in 0..n {
            x[(i, j)] = if j < informative { y[i] + col[i] } else { col[i] };
        }
    }
    (x, y)
}

/// Targets `y ~ N(0,1)`, the first 20 features `y + ε`, the rest pure noise.
///
/// Every column has its own random stream, so the first `k` columns for a
/// given seed are identical whatever the total `k`: a sweep over `k` adds
/// features to a fixed problem rather than redrawing it.
pub fn gen_double_descent_features(n: usize, k: usize, seed: u64) -> DoubleDescentData {
    gen_double_descent_with(n, k, INFORMATIVE_FEATURES, seed)
}

/// As [`gen_double_descent_features`] with `informative` target-carrying columns.
pub fn gen_double_descent_with(n: usize, k: usize, informative: usize, seed: u64) -> DoubleDescentData {
    let (train_features, train_targets) = double_descent_split(n, k, informative, seed, 0);
    let (test_features, test_targets) = double_descent_split(n, k, informative, seed, 1);
    DoubleDescentData { train_features, train_targets, test_features, test_targets }
}

pub const BNN_NOISE_STD: f64 = 0.05;

/// `y = w₁x + w₂x² + w₃x³ + (0.5 + x²)² + sin(4x²) + ε` on an even grid over
/// [−1, 1], `w ~ N(0, I)`, `ε ~ N(0, 0.05²)`. The inputs are the monomial
/// columns `(x, x², x³)`, each centered and scaled.
pub fn gen_bnn_regression(n: usize, seed: u64) -> Dataset {
    assert!(n >= 1, "need at least one point");
    let mut rng = seeded(seed);
    let w = standard_normal_vec(&mut rng, 3);
    let mut x = DMatrix::zeros(n, 3);
    let mut y = DMatrix::zeros(n, 1);
    for i in 0..n {
        let xi = if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
        let eps: f64 = rng.sample(StandardNormal);
        let x2 = xi * xi;
        y[(i, 0)] = w[0] * xi + w[1] * x2 + w[2] * x2 * xi + (0.5 + x2).powi(2) + (4.0 * x2).sin() + BNN_NOISE_STD * eps;
        x[(i, 0)] = xi;
        x[(i, 1)] = x2;
        x[(i, 2)] = x2 * xi;
    }
    standardize_columns(&mut x);
    Dataset::regression(x, y).expect("shapes agree")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swiss_roll_balanced_and_reproducible() {
        let d = gen_swiss_roll(1000, 0.1, 3);
        let ones = d.labels().unwrap().iter().filter(|&&c| c == 1).count();
        assert_eq!(ones, 500);
        assert_eq!(d, gen_swiss_roll(1000, 0.1, 3));
        assert_ne!(d, gen_swiss_roll(1000, 0.1, 4));
        let x = &d.inputs;
        for col in x.column_iter() {
            assert!(col.mean().abs() < 1e-12);
            assert!(((col.norm_squared() / 1000.0).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_swiss_roll_on_curve() {
        let (x, labels, ts) = swiss_roll_raw(50, 0.0, 1);
        for i in 0..50 {
            let (a, b) = swiss_roll_point(ts[i], labels[i]);
            assert_eq!((x[(i, 0)], x[(i, 1)]), (a, b));
        }
    }

    #[test]
    fn two_spirals_point_symmetric() {
        let d = gen_two_spirals(3000, 0.5, 2);
        assert_eq!(d.len(), 3000);
        let x = &d.inputs;
        for i in 0..1500 {
            assert_eq!(x[(i, 0)], -x[(1500 + i, 0)]);
            assert_eq!(x[(i, 1)], -x[(1500 + i, 1)]);
        }
        assert_eq!(d, gen_two_spirals(3000, 0.5, 2));
    }

    #[test]
    fn double_descent_features_are_nested() {
        let small = gen_double_descent_features(30, 25, 9);
        let big = gen_double_descent_features(30, 40, 9);
        assert_eq!(small.train_features, big.train_features.columns(0, 25).into_owned());
        assert_eq!(small.train_targets, big.train_targets);
        assert_ne!(small.train_targets, small.test_targets);
        // informative columns carry the target
        let f = &big.train_features;
        let y = &big.train_targets;
        let corr = |j: usize| (0..30).map(|i| f[(i, j)] * y[i]).sum::<f64>();
        assert!(corr(0) > corr(30).abs());
        let only = gen_double_descent_features(10, 20, 1);
        assert_eq!(only.train_features.ncols(), 20);
    }

    #[test]
    fn bnn_inputs_standardized() {
        let d = gen_bnn_regression(101, 5);
        assert_eq!(d.inputs.ncols(), 3);
        for x in d.inputs.column_iter() {
            assert!(x.mean().abs() <= 1e-12);
            assert!(((x.norm_squared() / 101.0).sqrt() - 1.0).abs() <= 1e-12);
        }
        assert_eq!(d, gen_bnn_regression(101, 5));
        assert_eq!(gen_bnn_regression(1, 0).len(), 1);
    }
}
