//! Minimal multilayer perceptron with exact reverse-mode gradients for both
//! parameters and inputs.
//!
//! Hidden layers use tanh, the output layer is linear. Single-sample and
//! batched entry points share the same parameters; the batched path exists
//! because the policy-update inner loop is the hot spot of training.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Checkpoint format version.
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite gradient, step rejected")]
    NonFiniteGradient,
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Fully connected network: weights[l] maps activations of layer l to
/// pre-activations of layer l+1.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

/// Parameter gradients shape-congruent with an [`Mlp`], plus the gradient
/// with respect to the network input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub input_grad: DVector<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: net.biases.iter().map(|b| DVector::zeros(b.nrows())).collect(),
            input_grad: DVector::zeros(net.sizes[0]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.input_grad.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm over all parameter gradients (input grad excluded).
    pub fn param_norm(&self) -> f64 {
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w.iter().map(|v| v * v).sum::<f64>();
        }
        for b in &self.biases {
            acc += b.iter().map(|v| v * v).sum::<f64>();
        }
        acc.sqrt()
    }

    /// Scale all parameter gradients in place.
    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            *w *= s;
        }
        for b in &mut self.biases {
            *b *= s;
        }
    }
}

impl Mlp {
    /// Build a network with the given layer sizes, Glorot-uniform weights
    /// and zero biases.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output layers");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = DMatrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-bound..=bound));
            weights.push(w);
            biases.push(DVector::zeros(fan_out));
        }
        Self { sizes: sizes.to_vec(), weights, biases }
    }

    /// Zero the last layer's weights and bias so the initial output is
    /// identically zero regardless of input.
    pub fn zero_output_layer(&mut self) {
        let last = self.weights.len() - 1;
        self.weights[last].fill(0.0);
        self.biases[last].fill(0.0);
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn params_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, len: usize) -> Result<(), NnError> {
        if len != self.sizes[0] {
            return Err(NnError::DimensionMismatch { expected: self.sizes[0], got: len });
        }
        Ok(())
    }

    /// Forward pass: tanh on hidden layers, identity on the output layer.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.try_forward(input).expect("input dimension mismatch")
    }

    pub fn try_forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input.len())?;
        let mut a = DVector::from_column_slice(input);
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &a + b;
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            a = z;
        }
        Ok(a.as_slice().to_vec())
    }

    /// Forward pass over a batch laid out as one column per sample.
    pub fn forward_batch(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(input.nrows(), self.sizes[0], "batch input dimension mismatch");
        let mut a = input.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &a;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            a = z;
        }
        a
    }

    /// Exact reverse-mode gradients of `output . output_grad` with respect
    /// to every parameter and to the input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Gradients, NnError> {
        self.check_input(input.len())?;
        let out_dim = self.output_dim();
        if output_grad.len() != out_dim {
            return Err(NnError::DimensionMismatch { expected: out_dim, got: output_grad.len() });
        }

        // Forward, caching post-activation values per layer.
        let nl = self.weights.len();
        let mut acts: Vec<DVector<f64>> = Vec::with_capacity(nl + 1);
        acts.push(DVector::from_column_slice(input));
        for l in 0..nl {
            let mut z = &self.weights[l] * &acts[l] + &self.biases[l];
            if l < nl - 1 {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }

        let mut grads = Gradients::zeros_like(self);
        // delta at the pre-activation of the layer being processed
        let mut delta = DVector::from_column_slice(output_grad);
        for l in (0..nl).rev() {
            grads.weights[l] = &delta * acts[l].transpose();
            grads.biases[l] = delta.clone();
            let mut upstream = self.weights[l].transpose() * &delta;
            if l > 0 {
                // chain through the tanh that produced acts[l]
                for (u, a) in upstream.iter_mut().zip(acts[l].iter()) {
                    *u *= 1.0 - a * a;
                }
                delta = upstream;
            } else {
                grads.input_grad = upstream;
            }
        }
        Ok(grads)
    }

    /// Batched parameter gradients of `sum_b output_b . output_grad_b`.
    /// Input gradients are not accumulated on this path.
    pub fn backward_batch(&self, input: &DMatrix<f64>, output_grad: &DMatrix<f64>) -> Gradients {
        assert_eq!(input.nrows(), self.sizes[0]);
        assert_eq!(output_grad.nrows(), self.output_dim());
        assert_eq!(input.ncols(), output_grad.ncols());

        let nl = self.weights.len();
        let mut acts: Vec<DMatrix<f64>> = Vec::with_capacity(nl + 1);
        acts.push(input.clone());
        for l in 0..nl {
            let mut z = &self.weights[l] * &acts[l];
            for mut col in z.column_iter_mut() {
                col += &self.biases[l];
            }
            if l < nl - 1 {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }

        let mut grads = Gradients::zeros_like(self);
        let mut delta = output_grad.clone();
        for l in (0..nl).rev() {
            grads.weights[l] = &delta * acts[l].transpose();
            let mut bsum = DVector::zeros(delta.nrows());
            for col in delta.column_iter() {
                bsum += col;
            }
            grads.biases[l] = bsum;
            if l > 0 {
                let mut upstream = self.weights[l].transpose() * &delta;
                for (u, a) in upstream.iter_mut().zip(acts[l].iter()) {
                    *u *= 1.0 - a * a;
                }
                delta = upstream;
            }
        }
        grads
    }

    /// Plain gradient-descent step: every parameter decremented by
    /// `learning_rate * gradient`. Rejects non-finite gradients.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<(), NnError> {
        assert!(learning_rate > 0.0);
        if !grads.is_finite() {
            return Err(NnError::NonFiniteGradient);
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            *w -= g * learning_rate;
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            *b -= g * learning_rate;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint {
            version: CHECKPOINT_VERSION,
            layer_sizes: self.sizes.clone(),
            weights: self.weights.iter().map(|w| w.as_slice().to_vec()).collect(),
            biases: self.biases.iter().map(|b| b.as_slice().to_vec()).collect(),
        }
    }

    pub fn from_checkpoint(ck: &MlpCheckpoint) -> Result<Self, NnError> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(NnError::BadCheckpoint(format!(
                "unsupported version {} (expected {})",
                ck.version, CHECKPOINT_VERSION
            )));
        }
        if ck.layer_sizes.len() < 2 {
            return Err(NnError::BadCheckpoint("fewer than two layers".into()));
        }
        let n = ck.layer_sizes.len() - 1;
        if ck.weights.len() != n || ck.biases.len() != n {
            return Err(NnError::BadCheckpoint("layer count mismatch".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..n {
            let (rows, cols) = (ck.layer_sizes[l + 1], ck.layer_sizes[l]);
            if ck.weights[l].len() != rows * cols || ck.biases[l].len() != rows {
                return Err(NnError::BadCheckpoint(format!("layer {l} shape mismatch")));
            }
            weights.push(DMatrix::from_column_slice(rows, cols, &ck.weights[l]));
            biases.push(DVector::from_column_slice(&ck.biases[l]));
        }
        Ok(Self { sizes: ck.layer_sizes.clone(), weights, biases })
    }
}

/// Serializable network snapshot with a version tag and layer-size header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    /// Column-major weight entries per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Adam optimizer state mirroring one network's parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    m_w: Vec<DMatrix<f64>>,
    v_w: Vec<DMatrix<f64>>,
    m_b: Vec<DVector<f64>>,
    v_b: Vec<DVector<f64>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(net: &Mlp) -> Self {
        Self {
            m_w: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            v_w: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            m_b: net.biases.iter().map(|b| DVector::zeros(b.nrows())).collect(),
            v_b: net.biases.iter().map(|b| DVector::zeros(b.nrows())).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, lr: f64) -> Result<(), NnError> {
        if !grads.is_finite() {
            return Err(NnError::NonFiniteGradient);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for l in 0..net.weights.len() {
            for (i, g) in grads.weights[l].iter().enumerate() {
                let m = &mut self.m_w[l][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                let v = &mut self.v_w[l][i];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                net.weights[l][i] -= lr * (self.m_w[l][i] / bc1) / ((self.v_w[l][i] / bc2).sqrt() + self.eps);
            }
            for (i, g) in grads.biases[l].iter().enumerate() {
                let m = &mut self.m_b[l][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                let v = &mut self.v_b[l][i];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                net.biases[l][i] -= lr * (self.m_b[l][i] / bc1) / ((self.v_b[l][i] / bc2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Result of a finite-difference audit of the analytic gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_param_rel_err: f64,
    pub max_input_rel_err: f64,
    pub params_checked: usize,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Compare every analytic gradient of `output . output_grad` against a
/// central finite difference with step `h`. Independent of the backward
/// pass by construction: it only perturbs parameters and re-runs forward.
pub fn gradient_check(net: &Mlp, input: &[f64], output_grad: &[f64], h: f64) -> GradCheckReport {
    let loss = |n: &Mlp| -> f64 {
        n.forward(input)
            .iter()
            .zip(output_grad)
            .map(|(o, g)| o * g)
            .sum()
    };

    let analytic = net.backward(input, output_grad).expect("consistent dims");
    let mut max_param = 0.0f64;
    let mut count = 0usize;

    for l in 0..net.weights.len() {
        for idx in 0..net.weights[l].len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            plus.weights[l][idx] += h;
            minus.weights[l][idx] -= h;
            let num = (loss(&plus) - loss(&minus)) / (2.0 * h);
            max_param = max_param.max(rel_err(num, analytic.weights[l][idx]));
            count += 1;
        }
        for idx in 0..net.biases[l].len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            plus.biases[l][idx] += h;
            minus.biases[l][idx] -= h;
            let num = (loss(&plus) - loss(&minus)) / (2.0 * h);
            max_param = max_param.max(rel_err(num, analytic.biases[l][idx]));
            count += 1;
        }
    }

    let mut max_input = 0.0f64;
    for i in 0..input.len() {
        let mut plus = input.to_vec();
        let mut minus = input.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let lp: f64 = net.forward(&plus).iter().zip(output_grad).map(|(o, g)| o * g).sum();
        let lm: f64 = net.forward(&minus).iter().zip(output_grad).map(|(o, g)| o * g).sum();
        let num = (lp - lm) / (2.0 * h);
        max_input = max_input.max(rel_err(num, analytic.input_grad[i]));
    }

    GradCheckReport { max_param_rel_err: max_param, max_input_rel_err: max_input, params_checked: count }
}
