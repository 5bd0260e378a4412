//! Point estimators the estimation penalties compare against the true functional.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::LogisticModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MleSolver {
    /// Fixed-step ascent on the mean log-likelihood.
    GradientAscent { step: f64, iterations: usize },
    /// Levenberg-Marquardt damped Gauss-Newton on the same objective.
    GaussNewton { iterations: usize },
}

/// Ridge-regularised least squares (Gaussian maximum likelihood) for the logistic curve
/// `a / (1 + exp(b (x - c)))`, regularised towards `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticMle {
    pub regularization: f64,
    pub solver: MleSolver,
    /// Start each fit from the previous prefix's estimate instead of from `anchor`.
    #[serde(default)]
    pub warm_start: bool,
    pub anchor: [f64; 3],
}

impl LogisticMle {
    /// Regularisation 1e-4, 500 fixed steps of size 0.05 from the prior mean.
    pub fn gradient_ascent(anchor: [f64; 3]) -> Self {
        Self {
            regularization: 1e-4,
            solver: MleSolver::GradientAscent {
                step: 0.05,
                iterations: 500,
            },
            warm_start: false,
            anchor,
        }
    }

    pub fn gauss_newton(anchor: [f64; 3]) -> Self {
        Self {
            regularization: 1e-4,
            solver: MleSolver::GaussNewton { iterations: 30 },
            warm_start: true,
            anchor,
        }
    }

    pub fn default_for(model: &LogisticModel) -> Self {
        Self::gauss_newton(model.prior_mean)
    }

    /// Estimate after each prefix of the data; `out[t]` uses the first `t` points.
    pub fn fit_path(&self, xs: &[f64], ys: &[f64]) -> Result<Vec<[f64; 3]>> {
        let mut out = Vec::with_capacity(xs.len() + 1);
        out.push(self.anchor);
        for t in 1..=xs.len() {
            let start = if self.warm_start { out[t - 1] } else { self.anchor };
            out.push(self.fit_from(&xs[..t], &ys[..t], start)?);
        }
        Ok(out)
    }

    pub fn fit(&self, xs: &[f64], ys: &[f64]) -> Result<[f64; 3]> {
        if self.warm_start {
            Ok(*self.fit_path(xs, ys)?.last().expect("path includes the empty prefix"))
        } else {
            self.fit_from(xs, ys, self.anchor)
        }
    }

    /// Estimate for `prefix ++ (x, y)` given the estimate for `prefix`.
    pub fn fit_extension(
        &self,
        xs: &[f64],
        ys: &[f64],
        previous: [f64; 3],
    ) -> Result<[f64; 3]> {
        let start = if self.warm_start { previous } else { self.anchor };
        self.fit_from(xs, ys, start)
    }

    pub fn objective(&self, p: &[f64; 3], xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len().max(1) as f64;
        let sse: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let r = y - LogisticModel::curve(p[0], p[1], p[2], x);
                r * r
            })
            .sum();
        let reg: f64 = (0..3).map(|i| (p[i] - self.anchor[i]).powi(2)).sum();
        0.5 * sse / n + 0.5 * self.regularization * reg
    }

    fn fit_from(&self, xs: &[f64], ys: &[f64], start: [f64; 3]) -> Result<[f64; 3]> {
        if xs.is_empty() {
            return Ok(self.anchor);
        }
        let p = match self.solver {
            MleSolver::GradientAscent { step, iterations } => {
                let mut p = start;
                for _ in 0..iterations {
                    let (g, _) = self.grad_and_gn(&p, xs, ys);
                    for i in 0..3 {
                        p[i] -= step * g[i];
                    }
                }
                p
            }
            MleSolver::GaussNewton { iterations } => self.levenberg_marquardt(start, xs, ys, iterations),
        };
        if p.iter().all(|v| v.is_finite()) {
            Ok(p)
        } else {
            let iterations = match self.solver {
                MleSolver::GradientAscent { iterations, .. } | MleSolver::GaussNewton { iterations } => iterations,
            };
            Err(Error::NonConvergence { iterations })
        }
    }

    // Gradient of the objective and the Gauss-Newton matrix J^T J / n + reg I.
    fn grad_and_gn(&self, p: &[f64; 3], xs: &[f64], ys: &[f64]) -> ([f64; 3], [[f64; 3]; 3]) {
        let n = xs.len() as f64;
        let (a, b, c) = (p[0], p[1], p[2]);
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for (&x, &y) in xs.iter().zip(ys) {
            let s = 1.0 / (1.0 + (b * (x - c)).exp());
            let ds = s * (1.0 - s);
            let f = a * s;
            let j = [s, -a * ds * (x - c), a * ds * b];
            let r = y - f;
            for i in 0..3 {
                g[i] -= r * j[i];
                for k in 0..3 {
                    h[i][k] += j[i] * j[k];
                }
            }
        }
        for i in 0..3 {
            g[i] = g[i] / n + self.regularization * (p[i] - self.anchor[i]);
            for k in 0..3 {
                h[i][k] /= n;
            }
            h[i][i] += self.regularization;
        }
        (g, h)
    }

    fn levenberg_marquardt(&self, start: [f64; 3], xs: &[f64], ys: &[f64], iterations: usize) -> [f64; 3] {
        let mut p = start;
        let mut f = self.objective(&p, xs, ys);
        let mut mu = 1e-3;
        for _ in 0..iterations {
            let (g, h) = self.grad_and_gn(&p, xs, ys);
            let mut accepted = false;
            for _ in 0..12 {
                let mut m = h;
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] += mu * (1.0 + h[i][i]);
                }
                let Some(delta) = solve3(&m, &[-g[0], -g[1], -g[2]]) else {
                    mu *= 10.0;
                    continue;
                };
                let cand = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]];
                let fc = self.objective(&cand, xs, ys);
                if fc.is_finite() && fc <= f {
                    let moved = delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
                    p = cand;
                    f = fc;
                    mu = (mu * 0.3).max(1e-12);
                    accepted = true;
                    if moved < 1e-10 {
                        return p;
                    }
                    break;
                }
                mu *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        p
    }
}

fn solve3(m: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut mc = *m;
        for r in 0..3 {
            mc[r][col] = b[r];
        }
        let d = mc[0][0] * (mc[1][1] * mc[2][2] - mc[1][2] * mc[2][1])
            - mc[0][1] * (mc[1][0] * mc[2][2] - mc[1][2] * mc[2][0])
            + mc[0][2] * (mc[1][0] * mc[2][1] - mc[1][1] * mc[2][0]);
        *o = d / det;
    }
    Some(out)
}
