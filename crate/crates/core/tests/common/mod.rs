//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use csrnet::nn::Layer;
use csrnet::sparsity::Rng;
use csrnet::train::SequentialModel;
use csrnet::{CsrMatrix, DenseMatrix, Scalar, SparsityPattern};
use rand::{Rng as _, SeedableRng};

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn random_dense<T: Scalar>(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix<T> {
    DenseMatrix::from_fn(rows, cols, |_, _| T::from_f64(rng.random_range(-1.0..1.0)))
}

/// Each entry kept independently with probability `density`.
pub fn random_csr<T: Scalar>(rows: usize, cols: usize, density: f64, rng: &mut Rng) -> CsrMatrix<T> {
    let mut positions = Vec::new();
    for p in 0..rows * cols {
        if rng.random::<f64>() < density {
            positions.push(p);
        }
    }
    let pattern = SparsityPattern::from_sorted_positions(rows, cols, &positions).unwrap();
    let values = (0..positions.len())
        .map(|_| T::from_f64(rng.random_range(-1.0..1.0)))
        .collect();
    CsrMatrix::new(pattern, values).unwrap()
}

/// Row-major f64 copy of a CSR matrix, built straight from its arrays.
pub fn csr_as_f64<T: Scalar>(s: &CsrMatrix<T>) -> Vec<f64> {
    let mut out = vec![0.0; s.nrows() * s.ncols()];
    for i in 0..s.nrows() {
        for p in s.row_ptr()[i] as usize..s.row_ptr()[i + 1] as usize {
            out[i * s.ncols() + s.col_idx()[p] as usize] = s.values()[p].as_f64();
        }
    }
    out
}

pub fn dense_as_f64<T: Scalar>(d: &DenseMatrix<T>) -> Vec<f64> {
    d.as_slice().iter().map(|v| v.as_f64()).collect()
}

/// `C = A·B` with the textbook triple loop; `A` is m×k, `B` is k×n.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i * k + l] * b[l * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

/// ‖a − b‖₂ / ‖b‖₂, with `b` the reference. Zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Symmetric relative error for gradient checks.
pub fn grad_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = analytic
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

type ValueFn<'a> = Box<dyn Fn(&DenseMatrix<f64>) -> f64 + 'a>;
type GradFn<'a> = Box<dyn Fn(&DenseMatrix<f64>) -> DenseMatrix<f64> + 'a>;

/// Scalar function of the model output together with its gradient.
pub struct Objective<'a> {
    pub value: ValueFn<'a>,
    pub grad: GradFn<'a>,
}

impl<'a> Objective<'a> {
    /// `Σ R ⊙ Y`.
    pub fn linear(r: &'a DenseMatrix<f64>) -> Self {
        Self {
            value: Box::new(move |y| y.as_slice().iter().zip(r.as_slice()).map(|(a, b)| a * b).sum()),
            grad: Box::new(move |_| r.clone()),
        }
    }

    /// Summed softmax cross-entropy against one-hot `t`.
    pub fn cross_entropy(t: &'a DenseMatrix<f64>) -> Self {
        let loss = csrnet::nn::SoftmaxCrossEntropy;
        Self {
            value: Box::new(move |y| loss.loss(y, t).unwrap()),
            grad: Box::new(move |y| loss.gradient(y, t).unwrap()),
        }
    }
}

fn evaluate(
    model: &mut SequentialModel<f64>,
    x: &DenseMatrix<f64>,
    obj: &Objective,
    prepare: &dyn Fn(&mut SequentialModel<f64>),
) -> f64 {
    prepare(model);
    let y = model.feedforward(x).unwrap();
    (obj.value)(&y)
}

/// Central-difference check of every parameter tensor and of the input
/// gradient. Returns `(name, relative error)` pairs. `prepare` runs before
/// each forward pass, e.g. to replay a dropout mask.
pub fn finite_difference_check(
    model: &mut SequentialModel<f64>,
    x: &DenseMatrix<f64>,
    obj: &Objective,
    prepare: &dyn Fn(&mut SequentialModel<f64>),
) -> Vec<(String, f64)> {
    const H: f64 = 1e-6;
    prepare(model);
    let y = model.feedforward(x).unwrap();
    let dx = model.backpropagate_to_input((obj.grad)(&y)).unwrap();
    let mut analytic = Vec::new();
    for (li, layer) in model.layers_mut().unwrap().iter_mut().enumerate() {
        for p in layer.params_mut() {
            analytic.push((li, p.name, p.grads.to_vec()));
        }
    }

    let mut results = Vec::new();
    let mut counter = std::collections::HashMap::<usize, usize>::new();
    for (li, name, grad) in analytic {
        let slot = counter.entry(li).or_default();
        let pi = *slot;
        *slot += 1;
        let mut numeric = vec![0.0; grad.len()];
        for (j, num) in numeric.iter_mut().enumerate() {
            let orig = param(model, li, pi)[j];
            param(model, li, pi)[j] = orig + H;
            let fp = evaluate(model, x, obj, prepare);
            param(model, li, pi)[j] = orig - H;
            let fm = evaluate(model, x, obj, prepare);
            param(model, li, pi)[j] = orig;
            *num = (fp - fm) / (2.0 * H);
        }
        // A masked layer reports the gradient restricted to its mask.
        if let (Layer::Dense(d), "weights") = (&model.layers().unwrap()[li], name) {
            if let Some(mask) = d.mask() {
                numeric.iter_mut().zip(mask.as_slice()).for_each(|(n, m)| *n *= m);
            }
        }
        results.push((format!("layer{li}.{name}"), grad_err(&grad, &numeric)));
    }

    let mut numeric = vec![0.0; x.len()];
    let mut xp = x.clone();
    for (j, num) in numeric.iter_mut().enumerate() {
        let orig = x.as_slice()[j];
        xp.as_mut_slice()[j] = orig + H;
        let fp = evaluate(model, &xp, obj, prepare);
        xp.as_mut_slice()[j] = orig - H;
        let fm = evaluate(model, &xp, obj, prepare);
        xp.as_mut_slice()[j] = orig;
        *num = (fp - fm) / (2.0 * H);
    }
    results.push(("input".into(), grad_err(dx.as_slice(), &numeric)));
    results
}

fn param(model: &mut SequentialModel<f64>, layer: usize, index: usize) -> &mut [f64] {
    let layers: &mut [Layer<f64>] = model.layers_mut().unwrap();
    let mut params = layers[layer].params_mut();
    let p = params.swap_remove(index);
    p.values
}
