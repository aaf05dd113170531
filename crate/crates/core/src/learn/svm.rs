//! Soft-margin support vector classifier trained with SMO.
//!
//! Working pairs are chosen by maximal violation for the first index and by
//! the second-order gain for the second (Fan, Chen and Lin). Kernel columns
//! are cached with least-recently-used eviction.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::{check_both_classes, check_fit_input, LearnError, Prediction};
use crate::matrix::Matrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma {
    /// `1 / (d * Var(X))` over all entries of the training matrix.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelKind,
    pub gamma: Gamma,
    /// Stop once the maximal KKT violation is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Larger training sets are rejected; subsample first.
    pub max_train_size: usize,
    pub cache_mb: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            kernel: KernelKind::Rbf,
            gamma: Gamma::Scale,
            tol: 1e-3,
            max_iter: 10_000_000,
            max_train_size: 20_000,
            cache_mb: 256,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(LearnError::InvalidParam(format!("C must be positive, got {}", self.c)));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(LearnError::InvalidParam(format!("gamma must be positive, got {g}")));
            }
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(LearnError::InvalidParam("tol must be positive".into()));
        }
        Ok(())
    }
}

/// A kernel with its parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// `1 / (d * Var(X))`, or 1 when the matrix is constant.
pub fn scale_gamma(x: &Matrix) -> f64 {
    let v = x.as_slice();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.n_cols() as f64 * var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub support_vectors: Matrix,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    /// Collapsed primal weights, present for the linear kernel.
    pub linear_weights: Option<Vec<f64>>,
    pub n_iter: usize,
    /// Maximal KKT violation when training stopped.
    pub kkt_violation: f64,
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.support_vectors.n_cols()
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        if let Some(w) = &self.linear_weights {
            return w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() - self.rho;
        }
        self.support_vectors
            .rows()
            .zip(&self.dual_coef)
            .map(|(sv, coef)| coef * self.kernel.eval(sv, row))
            .sum::<f64>()
            - self.rho
    }

    /// Sign of the decision value; exactly zero counts as weak.
    pub fn predict_row(&self, row: &[f64]) -> Prediction {
        Prediction { label: u8::from(self.decision(row) > 0.0), probability: None }
    }
}

struct KernelCache<'a> {
    x: &'a Matrix,
    kernel: Kernel,
    slots: Vec<Option<(Rc<[f64]>, u64)>>,
    cached: Vec<usize>,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a Matrix, kernel: Kernel, cache_mb: usize) -> Self {
        let n = x.n_rows();
        let capacity = ((cache_mb << 20) / (8 * n.max(1))).max(2);
        KernelCache { x, kernel, slots: vec![None; n], cached: Vec::new(), capacity, clock: 0 }
    }

    fn column(&mut self, i: usize) -> Rc<[f64]> {
        self.clock += 1;
        if let Some((col, used)) = &mut self.slots[i] {
            *used = self.clock;
            return Rc::clone(col);
        }
        if self.cached.len() >= self.capacity {
            let (pos, _) = self
                .cached
                .iter()
                .enumerate()
                .min_by_key(|(_, &j)| self.slots[j].as_ref().map_or(0, |s| s.1))
                .expect("cache is full, so non-empty");
            let victim = self.cached.swap_remove(pos);
            self.slots[victim] = None;
        }
        let xi = self.x.row(i);
        let col: Rc<[f64]> = self.x.rows().map(|xj| self.kernel.eval(xi, xj)).collect();
        self.slots[i] = Some((Rc::clone(&col), self.clock));
        self.cached.push(i);
        col
    }
}

/// Full dual solution, kept for diagnostics.
pub struct SvmFit {
    pub model: SvmModel,
    pub alpha: Vec<f64>,
}

pub fn fit_svm(x: &Matrix, y: &[u8], params: &SvmParams) -> Result<SvmModel, LearnError> {
    fit_svm_dual(x, y, params).map(|f| f.model)
}

pub fn fit_svm_dual(x: &Matrix, y: &[u8], params: &SvmParams) -> Result<SvmFit, LearnError> {
    params.validate()?;
    check_fit_input(x, y)?;
    check_both_classes(y)?;
    let n = x.n_rows();
    if n > params.max_train_size {
        return Err(LearnError::TooLarge { rows: n, cap: params.max_train_size });
    }
    let kernel = match (params.kernel, params.gamma) {
        (KernelKind::Linear, _) => Kernel::Linear,
        (KernelKind::Rbf, Gamma::Scale) => Kernel::Rbf { gamma: scale_gamma(x) },
        (KernelKind::Rbf, Gamma::Value(g)) => Kernel::Rbf { gamma: g },
    };
    let c = params.c;
    let ys: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let diag: Vec<f64> = x.rows().map(|r| kernel.eval(r, r)).collect();
    let mut cache = KernelCache::new(x, kernel, params.cache_mb);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut n_iter = 0;
    let mut violation;
    loop {
        // First index: maximal violation among the "up" set.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let candidate = if ys[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if candidate && -ys[t] * grad[t] >= gmax {
                gmax = -ys[t] * grad[t];
                i_sel = t;
            }
        }
        // Second index: best second-order gain among the "low" set.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        let col_i = (i_sel != usize::MAX).then(|| cache.column(i_sel));
        for t in 0..n {
            let candidate = if ys[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
            if !candidate {
                continue;
            }
            let yg = ys[t] * grad[t];
            gmax2 = gmax2.max(yg);
            let grad_diff = gmax + yg;
            if let Some(col_i) = &col_i {
                if grad_diff > 0.0 {
                    let quad = diag[i_sel] + diag[t] - 2.0 * col_i[t];
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = t;
                    }
                }
            }
        }
        violation = gmax + gmax2;
        if violation < params.tol || j_sel == usize::MAX || n_iter >= params.max_iter {
            break;
        }
        n_iter += 1;

        let (i, j) = (i_sel, j_sel);
        let col_i = col_i.expect("i selected");
        let col_j = cache.column(j);
        let (yi, yj) = (ys[i], ys[j]);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_ai, old_aj);
        let kij = col_i[j];
        if yi != yj {
            let quad = diag[i] + diag[j] + 2.0 * yi * yj * kij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = diag[i] + diag[j] - 2.0 * kij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (dai, daj) = (ai - old_ai, aj - old_aj);
        // G_k += Q_ki dA_i + Q_kj dA_j with Q_kl = y_k y_l K_kl.
        for k in 0..n {
            grad[k] += ys[k] * (yi * col_i[k] * dai + yj * col_j[k] * daj);
        }
    }

    // Bias from free vectors, or the midpoint of the feasible interval.
    let mut n_free = 0usize;
    let mut sum_free = 0.0;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if upper(alpha[t]) {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    if !rho.is_finite() {
        return Err(LearnError::NonFinite);
    }

    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let support_vectors = x.select(&sv);
    let dual_coef: Vec<f64> = sv.iter().map(|&t| alpha[t] * ys[t]).collect();
    let linear_weights = matches!(kernel, Kernel::Linear).then(|| {
        let mut w = vec![0.0; x.n_cols()];
        for (row, coef) in support_vectors.rows().zip(&dual_coef) {
            for (wk, xk) in w.iter_mut().zip(row) {
                *wk += coef * xk;
            }
        }
        w
    });
    Ok(SvmFit {
        model: SvmModel {
            kernel,
            c,
            support_vectors,
            dual_coef,
            rho,
            linear_weights,
            n_iter,
            kkt_violation: violation,
        },
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rbf_shatters_xor() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]);
        let y = [0, 0, 1, 1];
        let params = SvmParams { c: 10.0, ..SvmParams::default() };
        let m = fit_svm(&x, &y, &params).unwrap();
        for (row, &label) in x.rows().zip(&y) {
            assert_eq!(m.predict_row(row).label, label);
        }
        assert!(m.predict_row(&[0.0, 0.0]).probability.is_none());
    }

    fn blobs(seed: u64, n: usize) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let center = if label == 1 { 2.0 } else { -2.0 };
            data.push(center + rng.gen_range(-1.0..1.0));
            data.push(center + rng.gen_range(-1.0..1.0));
            y.push(label);
        }
        (Matrix::new(2, data), y)
    }

    #[test]
    fn linear_kernel_separates_blobs() {
        let (x, y) = blobs(3, 200);
        // Brute-force witness that the blobs are separable: x0 + x1 = 0.
        for (row, &l) in x.rows().zip(&y) {
            assert_eq!(row[0] + row[1] > 0.0, l == 1);
        }
        let params = SvmParams { kernel: KernelKind::Linear, c: 1.0, ..SvmParams::default() };
        let m = fit_svm(&x, &y, &params).unwrap();
        let correct = x.rows().zip(&y).filter(|(r, &l)| m.predict_row(r).label == l).count();
        assert_eq!(correct, y.len());
        assert!(m.linear_weights.is_some());
    }

    #[test]
    fn linear_weights_match_kernel_expansion() {
        let (x, y) = blobs(4, 60);
        let params = SvmParams { kernel: KernelKind::Linear, c: 0.1, ..SvmParams::default() };
        let mut m = fit_svm(&x, &y, &params).unwrap();
        let fast: Vec<f64> = x.rows().map(|r| m.decision(r)).collect();
        m.linear_weights = None;
        for (r, f) in x.rows().zip(fast) {
            assert!((m.decision(r) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn gamma_scale_on_unit_variance() {
        // Every column has mean 0 and variance 1.
        let rows: Vec<[f64; 8]> = vec![[1.0; 8], [-1.0; 8]];
        assert_eq!(scale_gamma(&Matrix::from_rows(&rows)), 1.0 / 8.0);
    }

    #[test]
    fn dual_feasibility_and_kkt_at_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 300;
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.gen_range(-2.0..2.0);
            let b: f64 = rng.gen_range(-2.0..2.0);
            y.push(u8::from(a * a + b * b + rng.gen_range(-0.5..0.5) < 2.0));
            data.extend([a, b]);
        }
        let x = Matrix::new(2, data);
        for kernel in [KernelKind::Rbf, KernelKind::Linear] {
            let params = SvmParams { c: 10.0, kernel, ..SvmParams::default() };
            let fit = fit_svm_dual(&x, &y, &params).unwrap();
            assert!(fit.alpha.iter().all(|&a| (0.0..=10.0).contains(&a)));
            assert!(fit.model.kkt_violation < 1e-3, "{:?}: {}", kernel, fit.model.kkt_violation);
            // Equality constraint sum alpha_i y_i = 0.
            let s: f64 = fit.model.dual_coef.iter().sum();
            assert!(s.abs() < 1e-9, "sum alpha y = {s}");
        }
    }

    #[test]
    fn kernel_symmetry_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rbf = Kernel::Rbf { gamma: 0.125 };
        for _ in 0..1000 {
            let a: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for k in [rbf, Kernel::Linear] {
                assert!((k.eval(&a, &b) - k.eval(&b, &a)).abs() <= 1e-12);
            }
            let v = rbf.eval(&a, &b);
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn size_cap_is_enforced() {
        let (x, y) = blobs(1, 50);
        let params = SvmParams { max_train_size: 10, ..SvmParams::default() };
        assert!(matches!(fit_svm(&x, &y, &params), Err(LearnError::TooLarge { rows: 50, cap: 10 })));
    }

    #[test]
    fn tiny_cache_gives_the_same_model() {
        let (x, y) = blobs(8, 80);
        let big = fit_svm(&x, &y, &SvmParams::default()).unwrap();
        let small = fit_svm(&x, &y, &SvmParams { cache_mb: 0, ..SvmParams::default() }).unwrap();
        assert_eq!(big, small);
    }
}
