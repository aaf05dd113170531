//! Feed-forward network: ReLU hidden layers, one sigmoid output unit,
//! binary cross-entropy loss, trained with Adam on shuffled mini-batches.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logreg::{sigmoid, softplus};
use super::{check_fit_input, LearnError, Prediction};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_layer_sizes: Vec<usize>,
    /// Maximum number of epochs.
    pub max_iter: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Minimum loss improvement that resets the patience counter.
    pub tol: f64,
    /// Epochs without improvement before stopping.
    pub n_iter_no_change: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_layer_sizes: vec![100],
            max_iter: 500,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 200,
            tol: 1e-3,
            n_iter_no_change: 10,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.hidden_layer_sizes.contains(&0) {
            return Err(LearnError::InvalidParam("hidden layer sizes must be at least 1".into()));
        }
        if self.max_iter == 0 || self.batch_size == 0 {
            return Err(LearnError::InvalidParam("max_iter and batch_size must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(LearnError::InvalidParam("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One dense layer; `weights` is `fan_out x fan_in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub n_epochs: usize,
    pub loss_curve: Vec<f64>,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(n_features: usize, hidden: &[usize], seed: u64) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![n_features];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    fan_in,
                    fan_out,
                    weights: (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        MlpModel { layers, n_epochs: 0, loss_curve: Vec::new() }
    }

    pub fn n_features(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
    }

    /// Output logit and all hidden activations for one row.
    fn forward(&self, row: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
        acts.clear();
        acts.push(row.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = &acts[k];
            let mut out = layer.biases.clone();
            for (o, w_row) in out.iter_mut().zip(layer.weights.chunks_exact(layer.fan_in)) {
                *o += w_row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            }
            if k < last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        acts[last + 1][0]
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        sigmoid(self.forward(row, &mut acts))
    }

    pub fn predict_row(&self, row: &[f64]) -> Prediction {
        let p = self.probability(row);
        Prediction { label: u8::from(p >= 0.5), probability: Some(p) }
    }

    /// Mean binary cross-entropy over `rows` and its gradient, flattened in
    /// the order of [`MlpModel::params_flat`].
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[u8], rows: &[usize]) -> (f64, Vec<f64>) {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
            .collect();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut loss = 0.0;
        let inv_n = 1.0 / rows.len() as f64;
        for &r in rows {
            let z = self.forward(x.row(r), &mut acts);
            let t = f64::from(y[r]);
            // BCE with logits: softplus(z) - t z.
            loss += softplus(z) - t * z;
            let mut delta = vec![(sigmoid(z) - t) * inv_n];
            for k in (0..self.layers.len()).rev() {
                let layer = &self.layers[k];
                let input = &acts[k];
                let (gw, gb) = &mut grads[k];
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] += d;
                    let gw_row = &mut gw[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (g, &xi) in gw_row.iter_mut().zip(input) {
                        *g += d * xi;
                    }
                }
                if k > 0 {
                    let mut prev = vec![0.0; layer.fan_in];
                    for (o, &d) in delta.iter().enumerate() {
                        let w_row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                        for (p, w) in prev.iter_mut().zip(w_row) {
                            *p += d * w;
                        }
                    }
                    // ReLU derivative, taken as 0 at exactly 0.
                    for (p, a) in prev.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        let flat = grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).collect();
        (loss * inv_n, flat)
    }
}

pub fn fit_mlp(x: &Matrix, y: &[u8], params: &MlpParams, seed: u64) -> Result<MlpModel, LearnError> {
    params.validate()?;
    check_fit_input(x, y)?;
    let n = x.n_rows();
    let mut model = MlpModel::init(x.n_cols(), &params.hidden_layer_sizes, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut theta = model.params_flat();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut step = 0i32;
    let batch = params.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut curve = Vec::new();

    for _epoch in 0..params.max_iter {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grad) = model.loss_and_gradient(x, y, chunk);
            if !loss.is_finite() {
                return Err(LearnError::Diverged);
            }
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
            let bc1 = 1.0 - params.beta1.powi(step);
            let bc2 = 1.0 - params.beta2.powi(step);
            let lr = params.learning_rate * bc2.sqrt() / bc1;
            for k in 0..theta.len() {
                m[k] = params.beta1 * m[k] + (1.0 - params.beta1) * grad[k];
                v[k] = params.beta2 * v[k] + (1.0 - params.beta2) * grad[k] * grad[k];
                theta[k] -= lr * m[k] / (v[k].sqrt() + params.epsilon);
            }
            model.set_params_flat(&theta);
        }
        let epoch_loss = epoch_loss / n as f64;
        if !epoch_loss.is_finite() {
            return Err(LearnError::Diverged);
        }
        curve.push(epoch_loss);
        if epoch_loss > best - params.tol {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(epoch_loss);
        if stale > params.n_iter_no_change {
            break;
        }
    }
    model.n_epochs = curve.len();
    model.loss_curve = curve;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_batch(seed: u64, n: usize, d: usize) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
        (Matrix::new(d, data), y)
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let mut m = MlpModel::init(8, &[100], 1);
        m.set_params_flat(&vec![0.0; m.n_params()]);
        assert_eq!(m.probability(&[3.0; 8]), 0.5);
        assert_eq!(m.predict_row(&[-1.0; 8]).label, 1);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = random_batch(2, 5, 8);
        let m = MlpModel::init(8, &[100], 3);
        let rows: Vec<usize> = (0..5).collect();
        let (_, analytic) = m.loss_and_gradient(&x, &y, &rows);
        let theta = m.params_flat();
        let eps = 1e-5;
        let mut probe = m.clone();
        let mut numeric = vec![0.0; theta.len()];
        for k in 0..theta.len() {
            let mut t = theta.clone();
            t[k] += eps;
            probe.set_params_flat(&t);
            let plus = probe.loss_and_gradient(&x, &y, &rows).0;
            t[k] -= 2.0 * eps;
            probe.set_params_flat(&t);
            let minus = probe.loss_and_gradient(&x, &y, &rows).0;
            numeric[k] = (plus - minus) / (2.0 * eps);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-4, "relative error {}", diff / norm);
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let (x, y) = random_batch(4, 300, 8);
        let p = MlpParams { max_iter: 5, ..MlpParams::default() };
        let a = fit_mlp(&x, &y, &p, 42).unwrap();
        let b = fit_mlp(&x, &y, &p, 42).unwrap();
        let bits = |m: &MlpModel| m.params_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = fit_mlp(&x, &y, &p, 43).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn learns_a_nonlinear_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..600 {
            let a: f64 = rng.gen_range(-2.0..2.0);
            let b: f64 = rng.gen_range(-2.0..2.0);
            y.push(u8::from(a * a + b * b < 1.5));
            data.extend([a, b]);
        }
        let x = Matrix::new(2, data);
        let m = fit_mlp(&x, &y, &MlpParams { max_iter: 300, ..MlpParams::default() }, 1).unwrap();
        let acc = x.rows().zip(&y).filter(|(r, &l)| m.predict_row(r).label == l).count() as f64 / 600.0;
        assert!(acc > 0.9, "training accuracy {acc}");
        assert!(m.loss_curve.last().unwrap() < &m.loss_curve[0]);
    }
}
