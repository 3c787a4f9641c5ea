//! L2-penalized logistic regression by Newton's method, with Wald inference
//! from the inverse penalized information matrix.
//!
//! Features are standardized (training mean, population standard deviation)
//! before fitting. Columns without variation are left out of the fit and get
//! a zero coefficient with an infinite standard error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{check_len, StatsError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Penalty `l2/2 · ‖β‖²` on slopes; the intercept is not penalized.
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the gradient.
    pub tol: f64,
    pub standardize: bool,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            l2: 0.0,
            max_iter: 100,
            tol: 1e-8,
            standardize: true,
        }
    }
}

/// Design matrix with a leading intercept column, plus labels and penalty.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub l2: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticProblem {
    /// `rows` are feature vectors without the intercept.
    pub fn new(rows: &[Vec<f64>], labels: &[bool], l2: f64) -> Result<Self, StatsError> {
        check_len(rows.len(), labels.len())?;
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let x = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        let y = DVector::from_iterator(n, labels.iter().map(|l| f64::from(u8::from(*l))));
        Ok(Self { x, y, l2 })
    }

    fn penalty_mask(&self) -> DVector<f64> {
        DVector::from_fn(self.x.ncols(), |j, _| if j == 0 { 0.0 } else { self.l2 })
    }

    pub fn log_likelihood(&self, beta: &DVector<f64>) -> f64 {
        let eta = &self.x * beta;
        let ll: f64 = eta
            .iter()
            .zip(self.y.iter())
            .map(|(z, y)| y * z - softplus(*z))
            .sum();
        let pen: f64 = beta
            .iter()
            .zip(self.penalty_mask().iter())
            .map(|(b, l)| 0.5 * l * b * b)
            .sum();
        ll - pen
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = &self.x * beta;
        let resid = DVector::from_fn(eta.len(), |i, _| self.y[i] - sigmoid(eta[i]));
        self.x.tr_mul(&resid) - self.penalty_mask().component_mul(beta)
    }

    /// Negative Hessian of the penalized log-likelihood.
    pub fn information(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = &self.x * beta;
        let mut xw = self.x.clone();
        for (i, z) in eta.iter().enumerate() {
            let p = sigmoid(*z);
            let w = p * (1.0 - p);
            xw.row_mut(i).scale_mut(w);
        }
        let mut info = self.x.tr_mul(&xw);
        for j in 1..info.ncols() {
            info[(j, j)] += self.l2;
        }
        info
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Intercept first, then one slope per input column (standardized units
    /// when standardization was on).
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Input columns left out because they do not vary.
    pub constant_columns: Vec<bool>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
}

impl LogisticFit {
    pub fn fit(
        rows: &[Vec<f64>],
        labels: &[bool],
        opts: &LogisticOptions,
    ) -> Result<Self, StatsError> {
        check_len(rows.len(), labels.len())?;
        if rows.is_empty() {
            return Err(StatsError::Empty);
        }
        let d = rows[0].len();
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(StatsError::LengthMismatch {
                left: d,
                right: rows[i].len(),
            });
        }
        if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(StatsError::NonFinite(i));
        }
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        let mut scales = vec![1.0; d];
        let mut constant = vec![false; d];
        for j in 0..d {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            constant[j] = rows.iter().all(|r| r[j] == rows[0][j]);
            if opts.standardize {
                means[j] = mean;
                scales[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
            }
        }
        let active: Vec<usize> = (0..d).filter(|j| !constant[*j]).collect();
        let design: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| active.iter().map(|&j| (r[j] - means[j]) / scales[j]).collect())
            .collect();
        let problem = LogisticProblem::new(&design, labels, opts.l2)?;
        let (beta, iterations, gradient_norm) = newton(&problem, opts)?;

        let info = problem.information(&beta);
        let cov = info.try_inverse().ok_or(StatsError::Singular)?;
        let normal = Normal::new(0.0, 1.0).expect("standard normal");

        let mut coefficients = vec![0.0; d + 1];
        let mut std_errors = vec![f64::INFINITY; d + 1];
        coefficients[0] = beta[0];
        std_errors[0] = cov[(0, 0)].max(0.0).sqrt();
        for (k, &j) in active.iter().enumerate() {
            coefficients[j + 1] = beta[k + 1];
            std_errors[j + 1] = cov[(k + 1, k + 1)].max(0.0).sqrt();
        }
        let z_scores: Vec<f64> = coefficients
            .iter()
            .zip(&std_errors)
            .map(|(b, s)| if s.is_finite() && *s > 0.0 { b / s } else { 0.0 })
            .collect();
        let p_values = z_scores
            .iter()
            .map(|z| 2.0 * normal.sf(z.abs()))
            .collect();
        Ok(Self {
            coefficients,
            std_errors,
            z_scores,
            p_values,
            constant_columns: constant,
            means,
            scales,
            converged: true,
            iterations,
            gradient_norm,
            log_likelihood: problem.log_likelihood(&beta),
        })
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients[0]
            + row
                .iter()
                .enumerate()
                .map(|(j, v)| self.coefficients[j + 1] * (v - self.means[j]) / self.scales[j])
                .sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(row))
    }

    /// Coefficients and standard errors expressed per unit of the raw inputs.
    pub fn raw_units(&self) -> (Vec<f64>, Vec<f64>) {
        let mut coef = self.coefficients.clone();
        let mut se = self.std_errors.clone();
        for j in 0..self.means.len() {
            coef[j + 1] /= self.scales[j];
            se[j + 1] /= self.scales[j];
            coef[0] -= coef[j + 1] * self.means[j];
        }
        (coef, se)
    }
}

fn newton(
    problem: &LogisticProblem,
    opts: &LogisticOptions,
) -> Result<(DVector<f64>, usize, f64), StatsError> {
    let p = problem.x.ncols();
    let mut beta = DVector::zeros(p);
    // start the intercept at the log-odds of the prevalence
    let prev = problem.y.mean().clamp(1e-6, 1.0 - 1e-6);
    beta[0] = (prev / (1.0 - prev)).ln();
    let mut ll = problem.log_likelihood(&beta);
    for iter in 0..opts.max_iter {
        let grad = problem.gradient(&beta);
        let gnorm = grad.amax();
        if gnorm < opts.tol {
            if problem.l2 == 0.0 && separated(problem, &beta) {
                return Err(StatsError::Separation);
            }
            return Ok((beta, iter, gnorm));
        }
        if beta.amax() > 1e6 {
            return Err(StatsError::Separation);
        }
        let info = problem.information(&beta);
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => info.lu().solve(&grad).ok_or(if problem.l2 > 0.0 {
                StatsError::Singular
            } else {
                StatsError::Separation
            })?,
        };
        // halve until the penalized likelihood does not decrease
        let mut t = 1.0;
        loop {
            let candidate = &beta + &step * t;
            let cand_ll = problem.log_likelihood(&candidate);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) || t < 1e-10 {
                beta = candidate;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
        }
    }
    let gnorm = problem.gradient(&beta).amax();
    if gnorm < opts.tol && !(problem.l2 == 0.0 && separated(problem, &beta)) {
        return Ok((beta, opts.max_iter, gnorm));
    }
    if problem.l2 == 0.0 {
        return Err(StatsError::Separation);
    }
    Err(StatsError::NonConvergence {
        iterations: opts.max_iter,
        gradient_norm: gnorm,
    })
}

/// A slope moving the log-odds by more than this per standard deviation of
/// its column only arises when the likelihood has no finite maximum.
const SEPARATION_LOGIT_PER_SD: f64 = 30.0;

fn separated(problem: &LogisticProblem, beta: &DVector<f64>) -> bool {
    let n = problem.x.nrows() as f64;
    (1..problem.x.ncols()).any(|j| {
        let col = problem.x.column(j);
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        (beta[j] * sd).abs() > SEPARATION_LOGIT_PER_SD
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simulate(n: usize, beta: &[f64], seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = beta.len() - 1;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let eta = beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            labels.push(rng.gen_bool(sigmoid(eta)));
            rows.push(x);
        }
        (rows, labels)
    }

    #[test]
    fn one_dimensional_sign() {
        let rows: Vec<Vec<f64>> = (-10..10).map(|i| vec![i as f64 + 0.5]).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] > 0.0).collect();
        let opts = LogisticOptions {
            l2: 0.1,
            ..Default::default()
        };
        let fit = LogisticFit::fit(&rows, &labels, &opts).unwrap();
        assert!(fit.coefficients[1] > 0.0);
        assert!(fit.gradient_norm < 1e-8);
    }

    #[test]
    fn separation_without_penalty_is_reported() {
        let rows: Vec<Vec<f64>> = (-10..10).map(|i| vec![i as f64 + 0.5]).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] > 0.0).collect();
        let err = LogisticFit::fit(&rows, &labels, &LogisticOptions::default()).unwrap_err();
        assert_eq!(err, StatsError::Separation);
        assert!(err.to_string().contains("l2"));
    }

    #[test]
    fn recovers_simulated_coefficients() {
        let truth = [-0.5, 1.0, -2.0];
        let (rows, labels) = simulate(4000, &truth, 11);
        let opts = LogisticOptions {
            standardize: false,
            ..Default::default()
        };
        let fit = LogisticFit::fit(&rows, &labels, &opts).unwrap();
        for (b, t) in fit.coefficients.iter().zip(truth) {
            assert!((b - t).abs() < 0.2, "{b} vs {t}");
        }
        assert!(fit.p_values[1] < 1e-6 && fit.p_values[2] < 1e-6);
    }

    #[test]
    fn raw_units_undo_standardization() {
        let (mut rows, labels) = simulate(500, &[0.3, 0.8, -0.4], 2);
        for r in &mut rows {
            r[0] = 10.0 * r[0] + 3.0;
        }
        let std = LogisticFit::fit(&rows, &labels, &LogisticOptions::default()).unwrap();
        let raw = LogisticFit::fit(
            &rows,
            &labels,
            &LogisticOptions {
                standardize: false,
                ..Default::default()
            },
        )
        .unwrap();
        let (coef, se) = std.raw_units();
        for (c, r) in coef.iter().zip(&raw.coefficients) {
            assert!((c - r).abs() < 1e-6);
        }
        for (s, r) in se.iter().zip(&raw.std_errors).skip(1) {
            assert!((s - r).abs() < 1e-6);
        }
        for r in rows.iter().take(10) {
            assert!((std.predict_proba(r) - raw.predict_proba(r)).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_column_is_flagged() {
        let (mut rows, labels) = simulate(300, &[0.0, 1.0], 4);
        for r in &mut rows {
            r.push(0.0);
        }
        let fit = LogisticFit::fit(&rows, &labels, &LogisticOptions::default()).unwrap();
        assert!(fit.constant_columns[1]);
        assert_eq!(fit.coefficients[2], 0.0);
        assert!(fit.std_errors[2].is_infinite());
        assert_eq!(fit.p_values[2], 1.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for case in 0..20 {
            let (rows, labels) = simulate(60, &[0.2, -1.0, 0.5, 2.0], case);
            let problem = LogisticProblem::new(&rows, &labels, 0.3).unwrap();
            let beta = DVector::from_fn(4, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let g = problem.gradient(&beta);
            let h = 1e-5;
            let fd = DVector::from_fn(4, |j, _| {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[j] += h;
                dn[j] -= h;
                (problem.log_likelihood(&up) - problem.log_likelihood(&dn)) / (2.0 * h)
            });
            assert!((&g - &fd).norm() <= 1e-5 * g.norm().max(1.0));
        }
    }
}
