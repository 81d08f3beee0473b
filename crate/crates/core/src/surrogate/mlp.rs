//! Feedforward classifier with softmax cross-entropy and hand-written
//! backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Swish,
}

impl Activation {
    fn forward(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Swish => z * crate::ops::sigmoid(z),
        }
    }

    /// Derivative at pre-activation `z` whose activation is `a`.
    fn derivative_from(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Swish => {
                let s = crate::ops::sigmoid(z);
                s + z * s * (1.0 - s)
            }
        }
    }
}

/// Two hidden layers of widths `base` and `2*base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSpec {
    pub base: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec { base: 16, activation: Activation::Tanh, seed: 0 }
    }
}

impl ClassifierSpec {
    pub fn widths(&self, input: usize, classes: usize) -> Vec<usize> {
        vec![input, self.base, 2 * self.base, classes]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// `[W1, b1, W2, b2, ...]`; each `W` is row-major `out x in`.
    pub params: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub correct: usize,
    pub grads: Vec<Vec<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases drawn from `spec.seed`.
    pub fn new(spec: &ClassifierSpec, input: usize, classes: usize) -> Self {
        assert!(spec.base > 0 && input > 0 && classes > 0);
        let widths = spec.widths(input, classes);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params = Vec::new();
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.push((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect());
            params.push(vec![0.0; fan_out]);
        }
        Mlp { widths, activation: spec.activation, params }
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Pre-activations of every layer for a single row.
    fn forward_row(&self, row: &[f64]) -> Vec<Vec<f64>> {
        self.forward_cached(row).0
    }

    /// Pre-activations of every layer plus the activations feeding each layer.
    fn forward_cached(&self, row: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(self.layers());
        let mut post = Vec::with_capacity(self.layers());
        let mut a: Vec<f64> = row.to_vec();
        for l in 0..self.layers() {
            let (w, b) = (&self.params[2 * l], &self.params[2 * l + 1]);
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let z: Vec<f64> = (0..fan_out)
                .map(|o| b[o] + w[o * fan_in..(o + 1) * fan_in].iter().zip(&a).map(|(p, q)| p * q).sum::<f64>())
                .collect();
            let next = if l + 1 < self.layers() {
                z.iter().map(|&v| self.activation.forward(v)).collect()
            } else {
                Vec::new()
            };
            post.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        (pre, post)
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let pre = self.forward_row(row);
        argmax(pre.last().expect("at least one layer"))
    }

    pub fn accuracy(&self, x: &[f64], y: &[usize]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let dim = self.widths[0];
        let hits = y.iter().enumerate().filter(|(i, &c)| self.predict(&x[i * dim..(i + 1) * dim]) == c).count();
        hits as f64 / y.len() as f64
    }

    /// Loss, hits and parameter gradients of the mean loss over `rows`.
    pub fn forward_backward(&self, x: &[f64], y: &[usize], rows: &[usize]) -> BatchResult {
        let dim = self.widths[0];
        let layers = self.layers();
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let mut loss = 0.0;
        let mut correct = 0;
        let scale = 1.0 / rows.len().max(1) as f64;
        for &r in rows {
            let input = &x[r * dim..(r + 1) * dim];
            let (pre, post) = self.forward_cached(input);
            let logits = pre.last().expect("layers");
            let label = y[r];
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
            let sum: f64 = exps.iter().sum();
            loss += (sum.ln() + m - logits[label]) * scale;
            if argmax(logits) == label {
                correct += 1;
            }
            let mut delta: Vec<f64> = exps.iter().map(|e| e / sum * scale).collect();
            delta[label] -= scale;
            for l in (0..layers).rev() {
                let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
                let act_in = &post[l];
                let (gw, rest) = grads.split_at_mut(2 * l + 1);
                let gw = &mut gw[2 * l];
                let gb = &mut rest[0];
                for o in 0..fan_out {
                    gb[o] += delta[o];
                    let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for (g, a) in row.iter_mut().zip(act_in) {
                        *g += delta[o] * a;
                    }
                }
                if l > 0 {
                    let w = &self.params[2 * l];
                    let mut back = vec![0.0; fan_in];
                    for (o, d) in delta.iter().enumerate() {
                        for (b, wi) in back.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                            *b += wi * d;
                        }
                    }
                    for (i, b) in back.iter_mut().enumerate() {
                        *b *= self.activation.derivative_from(pre[l - 1][i], post[l][i]);
                    }
                    delta = back;
                }
            }
        }
        BatchResult { loss, correct, grads }
    }

    /// Mean loss over `rows` without gradients.
    pub fn loss(&self, x: &[f64], y: &[usize], rows: &[usize]) -> f64 {
        let dim = self.widths[0];
        rows.iter()
            .map(|&r| {
                let pre = self.forward_row(&x[r * dim..(r + 1) * dim]);
                let logits = pre.last().expect("layers");
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = logits.iter().map(|v| (v - m).exp()).sum();
                sum.ln() + m - logits[y[r]]
            })
            .sum::<f64>()
            / rows.len().max(1) as f64
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}
