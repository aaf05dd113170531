//! L2-regularized logistic regression fitted by damped Newton iterations.
//!
//! Minimizes `0.5 * |w|^2 + C * sum_i logloss(y_i, w.x_i + b)`; the bias is
//! not regularized. The Hessian is `(d+1) x (d+1)`, so each Newton step is an
//! exact Cholesky solve followed by a backtracking line search.

use serde::{Deserialize, Serialize};

use super::{check_both_classes, check_fit_input, LearnError, Prediction};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    /// Stop once the gradient max-norm falls below this.
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams { c: 1.0, max_iter: 100, tol: 1e-6 }
    }
}

impl LogRegParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(LearnError::InvalidParam(format!("C must be positive, got {}", self.c)));
        }
        if self.max_iter == 0 {
            return Err(LearnError::InvalidParam("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub n_iter: usize,
}

impl LogRegModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.bias
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }

    pub fn predict_row(&self, row: &[f64]) -> Prediction {
        let p = self.probability(row);
        Prediction { label: u8::from(p >= 0.5), probability: Some(p) }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fit result with the objective value before each accepted step and at the end.
pub struct LogRegFit {
    pub model: LogRegModel,
    pub loss_history: Vec<f64>,
    pub final_grad_norm: f64,
}

pub fn fit_logreg(x: &Matrix, y: &[u8], params: &LogRegParams) -> Result<LogRegModel, LearnError> {
    fit_logreg_traced(x, y, params).map(|f| f.model)
}

pub fn fit_logreg_traced(
    x: &Matrix,
    y: &[u8],
    params: &LogRegParams,
) -> Result<LogRegFit, LearnError> {
    params.validate()?;
    check_fit_input(x, y)?;
    check_both_classes(y)?;
    let d = x.n_cols();
    let p = d + 1;
    let c = params.c;
    // theta = [w_0 .. w_{d-1}, b]
    let mut theta = vec![0.0; p];
    let objective = |theta: &[f64]| -> f64 {
        let w = &theta[..d];
        let b = theta[d];
        let data: f64 = x
            .rows()
            .zip(y)
            .map(|(row, &yi)| {
                let z = dot(w, row) + b;
                softplus(z) - f64::from(yi) * z
            })
            .sum();
        0.5 * dot(w, w) + c * data
    };

    let mut history = Vec::new();
    let mut loss = objective(&theta);
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * p];
    let mut n_iter = 0;
    let mut grad_norm;
    loop {
        history.push(loss);
        // Gradient and Hessian at theta.
        grad.fill(0.0);
        hess.fill(0.0);
        for (row, &yi) in x.rows().zip(y) {
            let z = dot(&theta[..d], row) + theta[d];
            let prob = sigmoid(z);
            let r = prob - f64::from(yi);
            let s = prob * (1.0 - prob);
            for a in 0..p {
                let xa = if a < d { row[a] } else { 1.0 };
                grad[a] += c * r * xa;
                for bidx in 0..=a {
                    let xb = if bidx < d { row[bidx] } else { 1.0 };
                    hess[a * p + bidx] += c * s * xa * xb;
                }
            }
        }
        for a in 0..d {
            grad[a] += theta[a];
            hess[a * p + a] += 1.0;
        }
        for a in 0..p {
            for bidx in 0..a {
                hess[bidx * p + a] = hess[a * p + bidx];
            }
        }
        grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if !grad_norm.is_finite() {
            return Err(LearnError::NonFinite);
        }
        if grad_norm < params.tol || n_iter >= params.max_iter {
            break;
        }
        let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
        let step = solve_spd(&hess, &neg_grad, p).ok_or(LearnError::NonFinite)?;
        let slope = dot(&grad, &step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let trial_loss = objective(&trial);
            if trial_loss <= loss + 1e-4 * t * slope {
                accepted = Some((trial, trial_loss));
                break;
            }
            t *= 0.5;
        }
        n_iter += 1;
        match accepted {
            Some((trial, trial_loss)) => {
                theta = trial;
                loss = trial_loss;
            }
            // No decrease possible at machine precision.
            None => break,
        }
    }
    let bias = theta[d];
    theta.truncate(d);
    Ok(LogRegFit {
        model: LogRegModel { weights: theta, bias, n_iter },
        loss_history: history,
        final_grad_norm: grad_norm,
    })
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, `n x n`).
fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * z[k]).sum();
        z[i] = (b[i] - s) / l[i * n + i];
    }
    let mut out = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * out[k]).sum();
        out[i] = (z[i] - s) / l[i * n + i];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (Matrix, Vec<u8>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..50 {
            xs.push(-1.0);
            ys.push(0);
            xs.push(1.0);
            ys.push(1);
        }
        (Matrix::new(1, xs), ys)
    }

    #[test]
    fn symmetric_toy_boundary_at_zero() {
        let (x, y) = toy();
        let fit = fit_logreg_traced(&x, &y, &LogRegParams::default()).unwrap();
        let m = fit.model;
        assert!(m.bias.abs() < 1e-8);
        assert!(m.weights[0] > 0.0);
        assert_eq!(m.predict_row(&[-0.5]).label, 0);
        assert_eq!(m.predict_row(&[0.5]).label, 1);
        assert!(fit.final_grad_norm < 1e-6);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::new(1, vec![1.0, 2.0]);
        assert!(matches!(
            fit_logreg(&x, &[1, 1], &LogRegParams::default()),
            Err(LearnError::SingleClass)
        ));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let x = Matrix::new(1, vec![1.0, f64::NAN]);
        assert!(matches!(
            fit_logreg(&x, &[0, 1], &LogRegParams::default()),
            Err(LearnError::NonFinite)
        ));
    }

    #[test]
    fn probabilities_strictly_inside_unit_interval() {
        let (x, y) = toy();
        let m = fit_logreg(&x, &y, &LogRegParams::default()).unwrap();
        for v in [-3.0, -0.5, 0.0, 0.5, 3.0] {
            let p = m.probability(&[v]);
            assert!(p > 0.0 && p < 1.0, "p({v}) = {p}");
        }
        // Far from the boundary the double rounds to the endpoint but never leaves it.
        for v in [-1e3, 1e3] {
            let p = m.probability(&[v]);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn newton_never_increases_the_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for c in [0.01, 1.0, 100.0] {
            let n = 300;
            let mut data = Vec::new();
            let mut y = Vec::new();
            for _ in 0..n {
                let row: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let z = row[0] - 2.0 * row[1] + 0.5 + rng.gen_range(-1.0..1.0);
                y.push(u8::from(z > 0.0));
                data.extend(row);
            }
            let x = Matrix::new(4, data);
            let params = LogRegParams { c, ..LogRegParams::default() };
            let fit = fit_logreg_traced(&x, &y, &params).unwrap();
            for w in fit.loss_history.windows(2) {
                assert!(w[1] <= w[0], "loss went up: {} -> {}", w[0], w[1]);
            }
            assert!(fit.final_grad_norm < 1e-6, "C={c}: grad {}", fit.final_grad_norm);
        }
    }

    #[test]
    fn cholesky_solves_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = solve_spd(&a, &[2.0, 1.0], 2).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
    }
}
