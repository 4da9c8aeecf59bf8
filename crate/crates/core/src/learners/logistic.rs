//! L2-regularized logistic regression fitted by batch gradient descent
//! with a backtracking (Armijo) step size.

use serde::{Deserialize, Serialize};

use crate::dataset::Features;
use crate::error::{Error, Result};

const GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    /// Logging only: progress is emitted every `verbose` iterations.
    pub verbose: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            c: 1.0,
            max_iter: 100,
            verbose: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Problem<'a> {
    x: &'a Features,
    y: &'a [u8],
    penalty: f64,
}

impl Problem<'_> {
    fn margin(&self, w: &[f64], b: f64, i: usize) -> f64 {
        self.x.row(i).iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b
    }

    /// Mean log-loss plus `penalty/2 * |w|^2`.
    fn objective(&self, w: &[f64], b: f64) -> f64 {
        let n = self.y.len() as f64;
        let loss: f64 = (0..self.y.len())
            .map(|i| {
                let z = self.margin(w, b, i);
                if self.y[i] == 1 {
                    softplus(-z)
                } else {
                    softplus(z)
                }
            })
            .sum();
        loss / n + 0.5 * self.penalty * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.y.len() as f64;
        let mut gw: Vec<f64> = w.iter().map(|v| self.penalty * v).collect();
        let mut gb = 0.0;
        for i in 0..self.y.len() {
            let r = (sigmoid(self.margin(w, b, i)) - f64::from(self.y[i])) / n;
            for (g, a) in gw.iter_mut().zip(self.x.row(i)) {
                *g += r * a;
            }
            gb += r;
        }
        (gw, gb)
    }
}

pub(super) fn fit(p: &LogisticParams, x: &Features, y: &[u8]) -> Result<LogisticModel> {
    if !(p.c > 0.0) {
        return Err(Error::InvalidConfig("C must be positive".into()));
    }
    let problem = Problem {
        x,
        y,
        penalty: 1.0 / (p.c * y.len() as f64),
    };
    let d = x.n_cols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut f = problem.objective(&w, b);
    let mut step = 1.0;
    let mut iterations = 0;
    for it in 0..p.max_iter {
        let (gw, gb) = problem.gradient(&w, b);
        let gnorm2 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        if gnorm2.sqrt() < GRAD_TOL {
            break;
        }
        iterations = it + 1;
        step *= 2.0;
        loop {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - step * g).collect();
            let b_new = b - step * gb;
            let f_new = problem.objective(&w_new, b_new);
            if f_new <= f - 1e-4 * step * gnorm2 {
                w = w_new;
                b = b_new;
                f = f_new;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                break;
            }
        }
        if p.verbose > 0 && it % p.verbose == 0 {
            log::debug!("logistic iteration {it}: objective {f:.6}, step {step:.3e}");
        }
        if step < 1e-20 {
            break;
        }
    }
    Ok(LogisticModel {
        weights: w,
        intercept: b,
        iterations,
    })
}

impl LogisticModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.weights).map(|(a, c)| a * c).sum::<f64>() + self.intercept
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.decision(row) >= 0.0)
    }
}
