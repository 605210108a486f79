//! Small shared building blocks for the numeric layers: GELU, linear maps,
//! stable softmax. Everything is `f64` and keeps the forward values needed
//! for the analytic backward passes.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// GELU activation (tanh form).
pub fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

/// Derivative of [`gelu`] with respect to its input.
pub fn gelu_prime(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Numerically stable softmax over a slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// log(sum(exp(logits))), stable.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// A dense layer `y = W x + b` with `W: out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Gaussian-initialized weights with the given standard deviation; zero bias.
    pub fn gaussian(d_in: usize, d_out: usize, std: f64, rng: &mut impl Rng) -> Self {
        Self {
            w: gaussian_matrix(d_out, d_in, std, rng),
            b: Array1::zeros(d_out),
        }
    }

    /// All-zero weights and bias.
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            w: Array2::zeros((d_out, d_in)),
            b: Array1::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        self.w.dot(x) + &self.b
    }

    /// Rows of `xs` are inputs; rows of the result are outputs.
    pub fn forward_rows(&self, xs: &Array2<f64>) -> Array2<f64> {
        xs.dot(&self.w.t()) + &self.b
    }

    /// Accumulates parameter gradients for a single input and returns the
    /// gradient with respect to `x`.
    pub fn backward(
        &self,
        x: &Array1<f64>,
        grad_y: &Array1<f64>,
        grad_w: &mut Array2<f64>,
        grad_b: &mut Array1<f64>,
    ) -> Array1<f64> {
        for (i, &gy) in grad_y.iter().enumerate() {
            grad_b[i] += gy;
            for (j, &xj) in x.iter().enumerate() {
                grad_w[[i, j]] += gy * xj;
            }
        }
        self.w.t().dot(grad_y)
    }

    /// Row-wise variant of [`Linear::backward`].
    pub fn backward_rows(
        &self,
        xs: &Array2<f64>,
        grad_ys: &Array2<f64>,
        grad_w: &mut Array2<f64>,
        grad_b: &mut Array1<f64>,
    ) -> Array2<f64> {
        *grad_w += &grad_ys.t().dot(xs);
        for row in grad_ys.rows() {
            *grad_b += &row;
        }
        grad_ys.dot(&self.w)
    }
}

/// `rows x cols` matrix with i.i.d. Gaussian entries.
pub fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("std must be finite and non-negative");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

/// Length-`n` vector with i.i.d. Gaussian entries.
pub fn gaussian_vector(n: usize, std: f64, rng: &mut impl Rng) -> Array1<f64> {
    let dist = Normal::new(0.0, std).expect("std must be finite and non-negative");
    Array1::from_shape_fn(n, |_| dist.sample(rng))
}
