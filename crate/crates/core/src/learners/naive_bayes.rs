//! Gaussian naive Bayes.

use serde::{Deserialize, Serialize};

use crate::dataset::Features;
use crate::error::{Error, Result};

/// Added to every variance so a zero smoothing factor cannot produce a
/// singular Gaussian.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesParams {
    pub var_smoothing: f64,
}

impl Default for NaiveBayesParams {
    fn default() -> Self {
        NaiveBayesParams { var_smoothing: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

fn column_variance(x: &Features, rows: &[usize], j: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&i| x.get(i, j)).sum::<f64>() / n;
    let var = rows.iter().map(|&i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

pub(super) fn fit(p: &NaiveBayesParams, x: &Features, y: &[u8]) -> Result<NaiveBayesModel> {
    if !(p.var_smoothing >= 0.0) {
        return Err(Error::InvalidConfig("var_smoothing must be >= 0".into()));
    }
    let d = x.n_cols();
    let all: Vec<usize> = (0..x.n_rows()).collect();
    let max_var = (0..d)
        .map(|j| column_variance(x, &all, j).1)
        .fold(0.0, f64::max);
    let epsilon = p.var_smoothing * max_var + VARIANCE_FLOOR;

    let mut log_prior = [0.0; 2];
    let mut mean = [Vec::new(), Vec::new()];
    let mut var = [Vec::new(), Vec::new()];
    for class in 0..2u8 {
        let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        let c = class as usize;
        log_prior[c] = (rows.len() as f64 / y.len() as f64).ln();
        for j in 0..d {
            let (m, v) = column_variance(x, &rows, j);
            mean[c].push(m);
            var[c].push(v + epsilon);
        }
    }
    Ok(NaiveBayesModel {
        log_prior,
        mean,
        var,
    })
}

impl NaiveBayesModel {
    /// Joint log-likelihood of `row` under class `c`.
    pub fn log_joint(&self, row: &[f64], c: usize) -> f64 {
        let ll: f64 = row
            .iter()
            .zip(&self.mean[c])
            .zip(&self.var[c])
            .map(|((&x, &m), &v)| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m).powi(2) / (2.0 * v))
            .sum();
        self.log_prior[c] + ll
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.log_joint(row, 1) >= self.log_joint(row, 0))
    }
}
