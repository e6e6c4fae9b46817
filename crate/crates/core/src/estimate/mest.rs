use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{require_degree, Estimate, Value, Variance};
use crate::error::{Error, Result};
use crate::sampler::Sample;

/// Per-observation loss `l(x, theta)`, differentiable in `theta`.
pub trait Loss {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64], theta: &[f64]) -> f64;
    /// Adds `scale * grad l(x, theta)` into `grad`.
    fn add_gradient(&self, x: &[f64], theta: &[f64], scale: f64, grad: &mut [f64]);
    /// Adds `scale * hess l(x, theta)` into `hess`. Returns false when the
    /// loss has no analytic Hessian, which forces gradient descent.
    fn add_hessian(&self, _x: &[f64], _theta: &[f64], _scale: f64, _hess: &mut DMatrix<f64>) -> bool {
        false
    }
}

/// `(x[0] - theta)^2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SquaredLoss;

impl Loss for SquaredLoss {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64], theta: &[f64]) -> f64 {
        (x[0] - theta[0]).powi(2)
    }
    fn add_gradient(&self, x: &[f64], theta: &[f64], scale: f64, grad: &mut [f64]) {
        grad[0] += scale * 2.0 * (theta[0] - x[0]);
    }
    fn add_hessian(&self, _x: &[f64], _theta: &[f64], scale: f64, hess: &mut DMatrix<f64>) -> bool {
        hess[(0, 0)] += 2.0 * scale;
        true
    }
}

/// Negative log-likelihood of a logistic model. The payload is
/// `[y, z_1, .., z_p]` with `y` in {0, 1}; `intercept` prepends a constant
/// feature.
#[derive(Clone, Copy, Debug)]
pub struct LogisticLoss {
    pub features: usize,
    pub intercept: bool,
}

impl LogisticLoss {
    pub fn new(features: usize, intercept: bool) -> Self {
        Self { features, intercept }
    }

    fn feature(&self, x: &[f64], j: usize) -> f64 {
        match (self.intercept, j) {
            (true, 0) => 1.0,
            (true, j) => x[j],
            (false, j) => x[j + 1],
        }
    }

    pub fn linear_predictor(&self, x: &[f64], theta: &[f64]) -> f64 {
        (0..self.dim()).map(|j| theta[j] * self.feature(x, j)).sum()
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

pub(crate) fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl Loss for LogisticLoss {
    fn dim(&self) -> usize {
        self.features + usize::from(self.intercept)
    }
    fn value(&self, x: &[f64], theta: &[f64]) -> f64 {
        let eta = self.linear_predictor(x, theta);
        softplus(eta) - x[0] * eta
    }
    fn add_gradient(&self, x: &[f64], theta: &[f64], scale: f64, grad: &mut [f64]) {
        let r = logistic(self.linear_predictor(x, theta)) - x[0];
        for (j, g) in grad.iter_mut().enumerate() {
            *g += scale * r * self.feature(x, j);
        }
    }
    fn add_hessian(&self, x: &[f64], theta: &[f64], scale: f64, hess: &mut DMatrix<f64>) -> bool {
        let p = logistic(self.linear_predictor(x, theta));
        let c = scale * p * (1.0 - p);
        let d = self.dim();
        for a in 0..d {
            let fa = self.feature(x, a);
            for b in 0..d {
                hess[(a, b)] += c * fa * self.feature(x, b);
            }
        }
        true
    }
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    /// Convergence when `|grad| < tol * sum |a_i|`.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Newton steps are used only while the Hessian condition number is below this.
    pub max_condition: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iters: 500,
            max_condition: 1e8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MFit {
    pub theta: Vec<f64>,
    /// Sandwich covariance `H^-1 V H^-1`, `V = sum a_i^2 g_i g_i^T`.
    pub covariance: Vec<Vec<f64>>,
    pub iterations: usize,
}

struct Objective<'a, L> {
    loss: &'a L,
    data: &'a [(f64, &'a [f64])],
}

impl<L: Loss> Objective<'_, L> {
    fn value(&self, theta: &[f64]) -> f64 {
        self.data.iter().map(|(a, x)| a * self.loss.value(x, theta)).sum()
    }

    fn gradient(&self, theta: &[f64]) -> DVector<f64> {
        let mut g = vec![0.0; theta.len()];
        for (a, x) in self.data {
            self.loss.add_gradient(x, theta, *a, &mut g);
        }
        DVector::from_vec(g)
    }

    fn hessian(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let d = theta.len();
        let mut h = DMatrix::zeros(d, d);
        for (a, x) in self.data {
            if !self.loss.add_hessian(x, theta, *a, &mut h) {
                return None;
            }
        }
        Some(h)
    }
}

fn condition_number(h: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(h.clone()).eigenvalues;
    let max = eig.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let min = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Minimizes `sum_i a_i l(x_i, theta)` over `(a_i, x_i)` pairs.
pub fn fit_weighted_loss<L: Loss>(
    loss: &L,
    data: &[(f64, &[f64])],
    config: &FitConfig,
    start: Option<&[f64]>,
) -> Result<MFit> {
    let d = loss.dim();
    let obj = Objective { loss, data };
    let mut theta = DVector::from_vec(start.map_or_else(|| vec![0.0; d], <[f64]>::to_vec));
    if theta.len() != d {
        return Err(Error::Config(format!(
            "start has {} components, loss expects {d}",
            theta.len()
        )));
    }
    let scale: f64 = data.iter().map(|(a, _)| a.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let tol = config.grad_tol * scale;
    let mut value = obj.value(theta.as_slice());
    let mut converged = false;
    let mut iters = 0;
    while iters < config.max_iters {
        let g = obj.gradient(theta.as_slice());
        if g.norm() < tol {
            converged = true;
            break;
        }
        iters += 1;
        let newton = obj
            .hessian(theta.as_slice())
            .filter(|h| condition_number(h) < config.max_condition)
            .and_then(|h| h.cholesky())
            .map(|c| -c.solve(&g));
        let is_newton = newton.is_some();
        let dir = newton.unwrap_or_else(|| -&g);
        let slope = g.dot(&dir);
        // Newton decrement below the rounding level of the objective.
        if is_newton && -slope <= 1e-13 * (value.abs() + scale) {
            converged = true;
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &theta + &dir * step;
            let v = obj.value(cand.as_slice());
            if v <= value + 1e-4 * step * slope {
                theta = cand;
                value = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No representable decrease along a descent direction: the
            // iterate is at the floating-point floor of the objective.
            converged = obj.gradient(theta.as_slice()).norm() < config.grad_tol.sqrt() * scale;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: iters,
            last: theta.as_slice().to_vec(),
        });
    }
    let covariance = sandwich(&obj, theta.as_slice());
    Ok(MFit {
        theta: theta.as_slice().to_vec(),
        covariance,
        iterations: iters,
    })
}

fn sandwich<L: Loss>(obj: &Objective<'_, L>, theta: &[f64]) -> Vec<Vec<f64>> {
    let d = theta.len();
    let mut v = DMatrix::zeros(d, d);
    let mut g = vec![0.0; d];
    for (a, x) in obj.data {
        g.iter_mut().for_each(|e| *e = 0.0);
        obj.loss.add_gradient(x, theta, 1.0, &mut g);
        let gv = DVector::from_column_slice(&g);
        v += &gv * gv.transpose() * (a * a);
    }
    let cov = match obj.hessian(theta).and_then(|h| h.try_inverse()) {
        Some(hinv) => &hinv * v * &hinv,
        None => DMatrix::from_element(d, d, f64::NAN),
    };
    let sym = (&cov + cov.transpose()) * 0.5;
    to_rows(&sym)
}

/// Weighted M-estimate from a sample: coefficients `w_i / F_i`.
pub fn weighted_loss_fit<L: Loss>(sample: &Sample, loss: &L, config: &FitConfig) -> Result<Estimate> {
    require_degree(sample, 1)?;
    let mut data = Vec::with_capacity(sample.len());
    for s in &sample.items {
        if !(s.inclusion > 0.0) {
            return Err(Error::DegenerateInclusion(s.item.id.to_string()));
        }
        data.push((s.item.weight / s.inclusion, s.item.value.as_slice()));
    }
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    let fit = fit_weighted_loss(loss, &data, config, None)?;
    Ok(Estimate {
        value: Value::Vector(fit.theta),
        variance: Some(Variance::Matrix(fit.covariance)),
        degree_used: 1,
        n_effective: sample.len(),
    })
}
