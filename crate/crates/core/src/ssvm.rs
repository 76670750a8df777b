//! Survival support vector machine on a precomputed kernel.
//!
//! The dual problem is
//!
//! ```text
//! min  1/2 sum_ik (a_i a_k + d_i d_k s_i s_k) K_ik - sum_ik d_i s_i a_k K_ik
//!      - sum_i a_i Y_i + sum_i d_i s_i Y_i
//! s.t. 0 <= a_i <= C,  0 <= s_i <= C
//! ```
//!
//! with `a = alpha`, `s = alpha*` and `d` the event indicators. Writing
//! `beta = a - d*s` the objective is `1/2 beta' K beta - beta' Y`, which is
//! how it is evaluated here. The prognostic index is
//! `h(x) = sum_i beta_i k(x_i, x) + b`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalData;
use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::krr::select_lambda;
use crate::linalg::{matvec, Cholesky};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsvmSolver {
    /// Cyclic coordinate descent with exact one-dimensional box minimization.
    #[default]
    CoordinateDescent,
    /// Projected gradient with backtracking line search.
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsvmOptions {
    /// Box bound C.
    pub cost: f64,
    /// Stopping tolerance on the projected-gradient infinity norm; defaults to `1e-6 * C`.
    pub tol: Option<f64>,
    /// Maximum sweeps (coordinate descent) or iterations (projected
    /// gradient); defaults to `50 * n`.
    pub max_iter: Option<usize>,
    pub solver: SsvmSolver,
}

impl Default for SsvmOptions {
    fn default() -> Self {
        Self {
            cost: 1.0,
            tol: None,
            max_iter: None,
            solver: SsvmSolver::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvmModel {
    pub alpha: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub bias: f64,
    pub cost: f64,
    pub train_ids: Vec<usize>,
    /// False when the iteration limit was hit before the tolerance.
    pub converged: bool,
    pub iterations: usize,
    /// Projected-gradient norm at the returned point.
    pub kkt: f64,
    pub objective: f64,
    /// Diagonal jitter added to the kernel when it failed the PSD check.
    pub jitter: f64,
}

fn check_shapes(k: &KernelMatrix, data: &SurvivalData) -> Result<()> {
    if !k.is_square() || k.nrows() != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "kernel {:?} for {} survival rows",
            k.values.dim(),
            data.len()
        )));
    }
    Ok(())
}

fn beta(data: &SurvivalData, alpha: &[f64], alpha_star: &[f64]) -> Vec<f64> {
    alpha
        .iter()
        .zip(alpha_star)
        .enumerate()
        .map(|(i, (a, s))| a - data.delta(i) * s)
        .collect()
}

fn objective_from(beta: &[f64], k_beta: &[f64], y: &[f64]) -> f64 {
    beta.iter()
        .zip(k_beta)
        .zip(y)
        .map(|((b, kb), y)| b * (0.5 * kb - y))
        .sum()
}

/// Value of the dual objective at `(alpha, alpha_star)`.
pub fn dual_objective(k: &KernelMatrix, data: &SurvivalData, alpha: &[f64], alpha_star: &[f64]) -> Result<f64> {
    check_shapes(k, data)?;
    if alpha.len() != data.len() || alpha_star.len() != data.len() {
        return Err(Error::ShapeMismatch("multiplier vectors do not match the data".into()));
    }
    let b = beta(data, alpha, alpha_star);
    let kb = matvec(k.values.view(), &b);
    Ok(objective_from(&b, &kb, &data.time))
}

/// Projected gradient of one box-constrained coordinate.
#[inline]
fn projected(value: f64, grad: f64, cost: f64) -> f64 {
    if value <= 0.0 {
        grad.min(0.0)
    } else if value >= cost {
        grad.max(0.0)
    } else {
        grad
    }
}

fn violation(data: &SurvivalData, alpha: &[f64], alpha_star: &[f64], k_beta: &[f64], cost: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..data.len() {
        let g = k_beta[i] - data.time[i];
        worst = worst.max(projected(alpha[i], g, cost).abs());
        if data.event[i] {
            worst = worst.max(projected(alpha_star[i], -g, cost).abs());
        }
    }
    worst
}

/// Infinity norm of the projected gradient of the dual objective; zero
/// exactly at a first-order optimum of the box-constrained problem.
pub fn kkt_violation(k: &KernelMatrix, data: &SurvivalData, model: &SsvmModel) -> Result<f64> {
    check_shapes(k, data)?;
    if model.alpha.len() != data.len() || model.alpha_star.len() != data.len() {
        return Err(Error::ShapeMismatch("model does not match the data".into()));
    }
    let b = beta(data, &model.alpha, &model.alpha_star);
    let kb = matvec(k.values.view(), &b);
    Ok(violation(data, &model.alpha, &model.alpha_star, &kb, model.cost))
}

struct Problem<'a> {
    k: &'a KernelMatrix,
    data: &'a SurvivalData,
    cost: f64,
    tol: f64,
    max_iter: usize,
    jitter: f64,
}

struct Solution {
    alpha: Vec<f64>,
    alpha_star: Vec<f64>,
    k_beta: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl Problem<'_> {
    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        let v = self.k.values[[i, j]];
        if i == j {
            v + self.jitter
        } else {
            v
        }
    }

    fn k_times(&self, x: &[f64]) -> Vec<f64> {
        let mut out = matvec(self.k.values.view(), x);
        if self.jitter > 0.0 {
            out.iter_mut().zip(x).for_each(|(o, v)| *o += self.jitter * v);
        }
        out
    }

    /// Shifts `k_beta` after `beta[i]` changed by `delta`.
    fn update(&self, k_beta: &mut [f64], i: usize, delta: f64) {
        let row = self.k.values.row(i);
        for (kb, kij) in k_beta.iter_mut().zip(row.iter()) {
            *kb += delta * kij;
        }
        k_beta[i] += delta * self.jitter;
    }

    fn coordinate_descent(&self, trace: &mut Option<&mut Vec<f64>>) -> Solution {
        let n = self.data.len();
        let (y, event) = (&self.data.time, &self.data.event);
        let c = self.cost;
        let mut alpha = vec![0.0; n];
        let mut alpha_star = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut k_beta = vec![0.0; n];

        // Exact minimizer of a 1-D convex quadratic over [0, C].
        let step = |value: f64, grad: f64, curv: f64| -> f64 {
            if curv > 1e-15 {
                (value - grad / curv).clamp(0.0, c)
            } else if grad > 0.0 {
                0.0
            } else if grad < 0.0 {
                c
            } else {
                value
            }
        };

        for sweep in 1..=self.max_iter {
            for i in 0..n {
                let kii = self.entry(i, i);
                let g = k_beta[i] - y[i];
                let next = step(alpha[i], g, kii);
                let d = next - alpha[i];
                if d != 0.0 {
                    alpha[i] = next;
                    beta[i] += d;
                    self.update(&mut k_beta, i, d);
                }
                if event[i] {
                    let g_star = -(k_beta[i] - y[i]);
                    let next = step(alpha_star[i], g_star, kii);
                    let d = next - alpha_star[i];
                    if d != 0.0 {
                        alpha_star[i] = next;
                        beta[i] -= d;
                        self.update(&mut k_beta, i, -d);
                    }
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(objective_from(&beta, &k_beta, y));
            }
            if violation(self.data, &alpha, &alpha_star, &k_beta, c) <= self.tol {
                return Solution {
                    alpha,
                    alpha_star,
                    k_beta,
                    iterations: sweep,
                    converged: true,
                };
            }
        }
        Solution {
            alpha,
            alpha_star,
            k_beta,
            iterations: self.max_iter,
            converged: false,
        }
    }

    fn projected_gradient(&self, trace: &mut Option<&mut Vec<f64>>) -> Solution {
        let n = self.data.len();
        let y = &self.data.time;
        let c = self.cost;
        let delta: Vec<f64> = (0..n).map(|i| self.data.delta(i)).collect();
        let mut alpha = vec![0.0; n];
        let mut alpha_star = vec![0.0; n];
        let mut k_beta = vec![0.0; n];
        let mut f = 0.0;

        // Curvature bound: the Hessian in (alpha, alpha*) has norm <= 2 ||K||_inf.
        let norm = (0..n)
            .map(|i| (0..n).map(|j| self.entry(i, j).abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let mut t = if norm > 0.0 { 1.0 / (2.0 * norm) } else { 1.0 };

        for iter in 1..=self.max_iter {
            let g: Vec<f64> = k_beta.iter().zip(y).map(|(kb, y)| kb - y).collect();
            if violation(self.data, &alpha, &alpha_star, &k_beta, c) <= self.tol {
                return Solution {
                    alpha,
                    alpha_star,
                    k_beta,
                    iterations: iter - 1,
                    converged: true,
                };
            }
            t *= 2.0;
            loop {
                let next_a: Vec<f64> = alpha.iter().zip(&g).map(|(a, g)| (a - t * g).clamp(0.0, c)).collect();
                let next_s: Vec<f64> = alpha_star
                    .iter()
                    .zip(&g)
                    .zip(&delta)
                    .map(|((s, g), d)| if *d > 0.0 { (s + t * g).clamp(0.0, c) } else { *s })
                    .collect();
                let beta: Vec<f64> = next_a.iter().zip(&next_s).zip(&delta).map(|((a, s), d)| a - d * s).collect();
                let kb = self.k_times(&beta);
                let f_next = objective_from(&beta, &kb, y);
                // Sufficient decrease: f(x+) <= f(x) + g'(x+ - x) + |x+ - x|^2 / (2t).
                let mut lin = 0.0;
                let mut sq = 0.0;
                for i in 0..n {
                    let da = next_a[i] - alpha[i];
                    let ds = next_s[i] - alpha_star[i];
                    lin += g[i] * da - delta[i] * g[i] * ds;
                    sq += da * da + ds * ds;
                }
                if f_next <= f + lin + sq / (2.0 * t) + 1e-15 * f.abs().max(1.0) || t < 1e-300 {
                    alpha = next_a;
                    alpha_star = next_s;
                    k_beta = kb;
                    f = f_next;
                    break;
                }
                t *= 0.5;
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(f);
            }
        }
        let converged = violation(self.data, &alpha, &alpha_star, &k_beta, c) <= self.tol;
        Solution {
            alpha,
            alpha_star,
            k_beta,
            iterations: self.max_iter,
            converged,
        }
    }
}

/// Solves the dual over the box `[0, C]^(2n)` and recovers the bias.
pub fn solve_ssvm(k: &KernelMatrix, data: &SurvivalData, options: &SsvmOptions) -> Result<SsvmModel> {
    solve_ssvm_traced(k, data, options, None)
}

/// As [`solve_ssvm`], additionally recording the objective after every
/// sweep or iteration into `trace`.
pub fn solve_ssvm_traced(
    k: &KernelMatrix,
    data: &SurvivalData,
    options: &SsvmOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SsvmModel> {
    check_shapes(k, data)?;
    let cost = options.cost;
    if !(cost > 0.0) || !cost.is_finite() {
        return Err(Error::InvalidParameter(format!("cost must be positive, got {cost}")));
    }
    if k.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel".into()));
    }
    let n = data.len();
    let tol = options.tol.unwrap_or(1e-6 * cost);
    let max_iter = options.max_iter.unwrap_or(50 * n.max(1));

    // PSD check at the first rung of the ridge ladder; repair with jitter if it fails.
    let first = 1e-8 * k.mean_diagonal().max(f64::MIN_POSITIVE);
    let jitter = if n == 0 || Cholesky::factor(k.values.view(), first).is_ok() {
        0.0
    } else {
        let j = select_lambda(k)?;
        warn!("kernel failed the PSD check; adding diagonal jitter {j:e}");
        j
    };

    let problem = Problem {
        k,
        data,
        cost,
        tol,
        max_iter,
        jitter,
    };
    let sol = match options.solver {
        SsvmSolver::CoordinateDescent => problem.coordinate_descent(&mut trace),
        SsvmSolver::ProjectedGradient => problem.projected_gradient(&mut trace),
    };
    if !sol.converged {
        warn!("SSVM solver stopped at the iteration limit ({max_iter})");
    }
    let b = beta(data, &sol.alpha, &sol.alpha_star);
    let objective = objective_from(&b, &sol.k_beta, &data.time);
    if !objective.is_finite() {
        return Err(Error::NonFinite("SSVM dual objective".into()));
    }
    let kkt = violation(data, &sol.alpha, &sol.alpha_star, &sol.k_beta, cost);
    let bias = recover_bias(data, &sol.alpha, &sol.k_beta, cost);
    Ok(SsvmModel {
        alpha: sol.alpha,
        alpha_star: sol.alpha_star,
        bias,
        cost,
        train_ids: k.row_ids.clone(),
        converged: sol.converged,
        iterations: sol.iterations,
        kkt,
        objective,
        jitter,
    })
}

/// Median residual `Y_i - sum_k beta_k K_ik` over rows with `0 < alpha_i < C`; zero if none.
fn recover_bias(data: &SurvivalData, alpha: &[f64], k_beta: &[f64], cost: f64) -> f64 {
    let mut residuals: Vec<f64> = (0..data.len())
        .filter(|&i| alpha[i] > 0.0 && alpha[i] < cost)
        .map(|i| data.time[i] - k_beta[i])
        .collect();
    if residuals.is_empty() {
        return 0.0;
    }
    residuals.sort_unstable_by(f64::total_cmp);
    let m = residuals.len();
    if m % 2 == 1 {
        residuals[m / 2]
    } else {
        0.5 * (residuals[m / 2 - 1] + residuals[m / 2])
    }
}

impl SsvmModel {
    /// `K_cross (alpha - delta * alpha*) + b`, where `delta` are the
    /// training event indicators.
    pub fn prognostic_index(&self, k_cross: &KernelMatrix, train: &SurvivalData) -> Result<Vec<f64>> {
        if k_cross.ncols() != self.alpha.len() || train.len() != self.alpha.len() {
            return Err(Error::ShapeMismatch(format!(
                "cross kernel with {} columns and {} training rows for a model of size {}",
                k_cross.ncols(),
                train.len(),
                self.alpha.len()
            )));
        }
        let b = beta(train, &self.alpha, &self.alpha_star);
        Ok(matvec(k_cross.values.view(), &b)
            .into_iter()
            .map(|v| v + self.bias)
            .collect())
    }
}
