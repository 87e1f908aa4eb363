use nalgebra::DMatrix;

use crate::rng::{seeded, standard_normal_vec};

/// A symmetric linear map known only through its action on vectors.
///
/// `apply` must be deterministic and safe to call from several threads on
/// shared read-only state.
pub trait MatrixFreeOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], out: &mut [f64]);

    fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply(v, &mut out);
        out
    }
}

/// Wraps an explicit matrix.
pub struct DenseOperator<'a> {
    matrix: &'a DMatrix<f64>,
}

impl<'a> DenseOperator<'a> {
    pub fn new(matrix: &'a DMatrix<f64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operator matrix must be square");
        DenseOperator { matrix }
    }
}

impl MatrixFreeOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        out.fill(0.0);
        for j in 0..n {
            let vj = v[j];
            if vj == 0.0 {
                continue;
            }
            let col = self.matrix.column(j);
            for (o, a) in out.iter_mut().zip(col.iter()) {
                *o += a * vj;
            }
        }
    }
}

/// Wraps a closure `(v, out)`.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<F> MatrixFreeOperator for FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        (self.f)(v, out)
    }
}

pub(crate) fn dense_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest relative asymmetry `|⟨Av,w⟩ − ⟨v,Aw⟩| / (‖Av‖‖w‖ + ‖v‖‖Aw‖)`
/// over `trials` seeded random pairs.
pub fn max_asymmetry(op: &dyn MatrixFreeOperator, trials: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let n = op.dim();
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let v = standard_normal_vec(&mut rng, n);
        let w = standard_normal_vec(&mut rng, n);
        let av = op.apply_vec(&v);
        let aw = op.apply_vec(&w);
        let norm = |x: &[f64]| dot(x, x).sqrt();
        let scale = norm(&av) * norm(&w) + norm(&v) * norm(&aw);
        if scale > 0.0 {
            worst = worst.max((dot(&av, &w) - dot(&v, &aw)).abs() / scale);
        }
    }
    worst
}
