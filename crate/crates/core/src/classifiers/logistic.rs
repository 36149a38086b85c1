//! L2-regularized logistic regression fitted with a truncated Newton method.
//!
//! The objective is
//!
//! ```text
//! (n / sum(w)) * sum_i w_i * [log(1 + exp(z_i)) - y_i z_i] + ||beta||^2 / (2C)
//! ```
//!
//! with `z_i = beta . x_i + b`; the intercept is not penalized. With unit
//! weights this is the usual `C`-parameterized form, and rescaling all
//! weights by a constant leaves the optimum unchanged.

use serde::{Deserialize, Serialize};

use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Set when the training data held a single class; probabilities are then
    /// the constant 0 or 1.
    pub constant: Option<bool>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl LogisticModel {
    /// Model with explicit parameters.
    pub fn with_parameters(coefficients: Vec<f64>, intercept: f64) -> Self {
        LogisticModel {
            coefficients,
            intercept,
            constant: None,
            iterations: 0,
            converged: true,
            gradient_norm: 0.0,
        }
    }

    pub fn predict_prob(&self, x: &FeatureMatrix) -> Vec<f64> {
        if let Some(c) = self.constant {
            return vec![if c { 1.0 } else { 0.0 }; x.rows()];
        }
        (0..x.rows())
            .map(|r| sigmoid(x.dot_row(r, &self.coefficients) + self.intercept))
            .collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogisticParams {
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

pub(crate) struct Problem<'a> {
    x: &'a FeatureMatrix,
    y: &'a [bool],
    w: &'a [f64],
    scale: f64,
    inv_c: f64,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(x: &'a FeatureMatrix, y: &'a [bool], w: &'a [f64], c: f64) -> Self {
        let total: f64 = w.iter().sum();
        Problem {
            x,
            y,
            w,
            scale: x.rows() as f64 / total,
            inv_c: 1.0 / c,
        }
    }

    fn margins(&self, theta: &[f64]) -> Vec<f64> {
        let (beta, b) = theta.split_at(self.x.cols());
        (0..self.x.rows())
            .map(|r| self.x.dot_row(r, beta) + b[0])
            .collect()
    }

    pub(crate) fn objective(&self, theta: &[f64]) -> f64 {
        let z = self.margins(theta);
        let loss: f64 = z
            .iter()
            .zip(self.y)
            .zip(self.w)
            .map(|((&zi, &yi), &wi)| wi * (softplus(zi) - if yi { zi } else { 0.0 }))
            .sum();
        let beta = &theta[..self.x.cols()];
        self.scale * loss + 0.5 * self.inv_c * beta.iter().map(|v| v * v).sum::<f64>()
    }

    /// Gradient and the per-row curvature terms `s * w_i * p_i (1 - p_i)`.
    pub(crate) fn gradient(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.x.cols();
        let z = self.margins(theta);
        let mut g = vec![0.0; d + 1];
        let mut curv = vec![0.0; z.len()];
        for (r, &zr) in z.iter().enumerate() {
            let p = sigmoid(zr);
            let resid = self.scale * self.w[r] * (p - if self.y[r] { 1.0 } else { 0.0 });
            curv[r] = self.scale * self.w[r] * p * (1.0 - p);
            let (cols, vals) = self.x.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                g[c as usize] += resid * v;
            }
            g[d] += resid;
        }
        for (gj, &bj) in g[..d].iter_mut().zip(&theta[..d]) {
            *gj += self.inv_c * bj;
        }
        (g, curv)
    }

    fn hess_vec(&self, curv: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.x.cols();
        let (vb, v0) = v.split_at(d);
        let mut out = vec![0.0; d + 1];
        for (r, &h) in curv.iter().enumerate() {
            if h == 0.0 {
                continue;
            }
            let t = h * (self.x.dot_row(r, vb) + v0[0]);
            let (cols, vals) = self.x.row(r);
            for (&c, &val) in cols.iter().zip(vals) {
                out[c as usize] += t * val;
            }
            out[d] += t;
        }
        for (o, &vj) in out[..d].iter_mut().zip(vb) {
            *o += self.inv_c * vj;
        }
        out
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradient on `H d = -g`, stopped at relative residual `eta`.
fn solve_newton_direction(p: &Problem<'_>, curv: &[f64], g: &[f64], eta: f64) -> Vec<f64> {
    let n = g.len();
    let mut d = vec![0.0; n];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut s = r.clone();
    let mut rr = dot(&r, &r);
    let stop = eta * eta * rr;
    for _ in 0..(2 * n).clamp(10, 500) {
        if rr <= stop {
            break;
        }
        let hs = p.hess_vec(curv, &s);
        let shs = dot(&s, &hs);
        if shs <= 0.0 {
            break;
        }
        let alpha = rr / shs;
        for i in 0..n {
            d[i] += alpha * s[i];
            r[i] -= alpha * hs[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            s[i] = r[i] + beta * s[i];
        }
    }
    if d.iter().all(|&v| v == 0.0) {
        // Fall back to steepest descent.
        d = g.iter().map(|v| -v).collect();
    }
    d
}

pub(crate) fn fit_logistic(
    x: &FeatureMatrix,
    y: &[bool],
    w: &[f64],
    params: LogisticParams,
    warm_start: Option<&LogisticModel>,
) -> LogisticModel {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for (&yi, &wi) in y.iter().zip(w) {
        if yi {
            pos += wi;
        } else {
            neg += wi;
        }
    }
    if pos == 0.0 || neg == 0.0 {
        return LogisticModel {
            coefficients: vec![0.0; x.cols()],
            intercept: 0.0,
            constant: Some(pos > 0.0),
            iterations: 0,
            converged: true,
            gradient_norm: 0.0,
        };
    }
    let problem = Problem::new(x, y, w, params.c);
    let d = x.cols();
    let mut theta = vec![0.0; d + 1];
    match warm_start {
        Some(m) if m.constant.is_none() && m.coefficients.len() == d => {
            theta[..d].copy_from_slice(&m.coefficients);
            theta[d] = m.intercept;
        }
        _ => theta[d] = (pos / neg).ln(),
    }
    let mut f = problem.objective(&theta);
    let mut iterations = 0;
    let mut converged = false;
    let mut gnorm = f64::INFINITY;
    while iterations < params.max_iterations {
        let (g, curv) = problem.gradient(&theta);
        gnorm = inf_norm(&g);
        if gnorm <= params.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let eta = 0.5f64.min(gnorm.sqrt());
        let dir = solve_newton_direction(&problem, &curv, &g, eta);
        let slope = dot(&g, &dir);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let fc = problem.objective(&cand);
            if fc <= f + 1e-4 * step * slope {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No further decrease representable in floating point.
            break;
        }
    }
    if !converged {
        gnorm = inf_norm(&problem.gradient(&theta).0);
        converged = gnorm <= params.tolerance;
    }
    let intercept = theta[d];
    theta.truncate(d);
    LogisticModel {
        coefficients: theta,
        intercept,
        constant: None,
        iterations,
        converged,
        gradient_norm: gnorm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-9);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn newton_reaches_tolerance_and_matches_finite_differences() {
        let x = FeatureMatrix::from_dense(&[
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.5, 0.5],
            vec![0.9, 0.2],
            vec![0.1, 0.7],
            vec![0.3, 0.0],
        ]);
        let y = [false, true, true, true, false, false];
        let w = [1.0, 2.0, 1.0, 0.5, 1.0, 1.0];
        let params = LogisticParams {
            c: 1.0,
            tolerance: 1e-6,
            max_iterations: 1000,
        };
        let m = fit_logistic(&x, &y, &w, params, None);
        assert!(m.converged);
        assert!(m.gradient_norm <= 1e-6);

        let p = Problem::new(&x, &y, &w, 1.0);
        let mut theta = m.coefficients.clone();
        theta.push(m.intercept);
        let h = 1e-6;
        for j in 0..theta.len() {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (p.objective(&up) - p.objective(&down)) / (2.0 * h);
            assert!(fd.abs() < 1e-5, "coordinate {j}: {fd}");
        }
        // Analytic gradient agrees with finite differences away from the optimum.
        let probe = vec![0.3, -0.2, 0.1];
        let (g, _) = p.gradient(&probe);
        for j in 0..probe.len() {
            let mut up = probe.clone();
            let mut down = probe.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (p.objective(&up) - p.objective(&down)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-6, "coordinate {j}: {fd} vs {}", g[j]);
        }
    }
}
