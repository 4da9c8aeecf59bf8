//! One-hidden-layer perceptron (ReLU hidden units, logistic output) trained
//! with mini-batch SGD, classical momentum and an inverse-scaling step
//! size `learning_rate_init / t^power_t`, `t` being the 1-based epoch.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::Features;
use crate::error::{Error, Result};
use crate::rng;

pub const MLP_HIDDEN_UNITS: usize = 100;
pub const MLP_TOL: f64 = 1e-4;
const BATCH_SIZE: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub alpha: f64,
    pub learning_rate_init: f64,
    pub power_t: f64,
    pub max_iter: usize,
    pub momentum: f64,
    pub n_iter_no_change: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            alpha: 1e-4,
            learning_rate_init: 1e-3,
            power_t: 0.5,
            max_iter: 200,
            momentum: 0.9,
            n_iter_no_change: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    net: Params,
    /// Mean training loss of each completed epoch.
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Params {
    /// `hidden x n_in`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl Params {
    fn zeros_like(&self) -> Params {
        Params {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: 0.0,
        }
    }

    fn hidden(&self, row: &[f64], h: &mut [f64]) {
        let n_in = row.len();
        for (k, hk) in h.iter_mut().enumerate() {
            let w = &self.w1[k * n_in..(k + 1) * n_in];
            let z = self.b1[k] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            *hk = z.max(0.0);
        }
    }

    fn logit(&self, h: &[f64]) -> f64 {
        self.b2 + self.w2.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
    }

    fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).all(|v| v.is_finite()) && self.b2.is_finite()
    }
}

fn log_loss(z: f64, y: f64) -> f64 {
    // softplus(z) - y*z
    let sp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    sp - y * z
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn validate(p: &MlpParams) -> Result<()> {
    let ok = p.alpha >= 0.0
        && p.learning_rate_init > 0.0
        && p.power_t >= 0.0
        && p.momentum >= 0.0
        && p.max_iter >= 1
        && p.n_iter_no_change >= 1;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("invalid MLP parameters {p:?}")))
    }
}

pub(super) fn fit(p: &MlpParams, x: &Features, y: &[u8], seed: u64) -> Result<MlpModel> {
    validate(p)?;
    let n_in = x.n_cols();
    let hidden = MLP_HIDDEN_UNITS;
    let mut rng = rng::stream(seed, &[0x6d6c70]);

    let bound1 = (6.0 / (n_in + hidden) as f64).sqrt();
    let bound2 = (6.0 / (hidden + 1) as f64).sqrt();
    let mut params = Params {
        w1: (0..hidden * n_in).map(|_| rng.random_range(-bound1..=bound1)).collect(),
        b1: (0..hidden).map(|_| rng.random_range(-bound1..=bound1)).collect(),
        w2: (0..hidden).map(|_| rng.random_range(-bound2..=bound2)).collect(),
        b2: rng.random_range(-bound2..=bound2),
    };
    let mut velocity = params.zeros_like();
    let mut grad = params.zeros_like();

    let n = y.len();
    let batch = BATCH_SIZE.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut h = vec![0.0; hidden];
    let mut loss_curve = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;

    for epoch in 1..=p.max_iter {
        let lr = p.learning_rate_init / (epoch as f64).powf(p.power_t);
        order.shuffle(&mut rng);
        let snapshot = params.clone();
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let m = chunk.len() as f64;
            for (g, w) in grad.w1.iter_mut().zip(&params.w1) {
                *g = p.alpha * w / m;
            }
            grad.b1.iter_mut().for_each(|g| *g = 0.0);
            for (g, w) in grad.w2.iter_mut().zip(&params.w2) {
                *g = p.alpha * w / m;
            }
            grad.b2 = 0.0;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let row = x.row(i);
                params.hidden(row, &mut h);
                let z = params.logit(&h);
                let target = f64::from(y[i]);
                batch_loss += log_loss(z, target);
                let delta = (sigmoid(z) - target) / m;
                grad.b2 += delta;
                for k in 0..hidden {
                    grad.w2[k] += delta * h[k];
                    if h[k] > 0.0 {
                        let dk = delta * params.w2[k];
                        grad.b1[k] += dk;
                        let g = &mut grad.w1[k * n_in..(k + 1) * n_in];
                        for (gj, xj) in g.iter_mut().zip(row) {
                            *gj += dk * xj;
                        }
                    }
                }
            }
            let l2: f64 = params.w1.iter().chain(&params.w2).map(|w| w * w).sum();
            epoch_loss += batch_loss + 0.5 * p.alpha * l2;

            let update = |v: &mut [f64], g: &[f64], w: &mut [f64]| {
                for ((vi, gi), wi) in v.iter_mut().zip(g).zip(w.iter_mut()) {
                    *vi = p.momentum * *vi - lr * gi;
                    *wi += *vi;
                }
            };
            update(&mut velocity.w1, &grad.w1, &mut params.w1);
            update(&mut velocity.b1, &grad.b1, &mut params.b1);
            update(&mut velocity.w2, &grad.w2, &mut params.w2);
            velocity.b2 = p.momentum * velocity.b2 - lr * grad.b2;
            params.b2 += velocity.b2;
        }
        let epoch_loss = epoch_loss / n as f64;
        if !epoch_loss.is_finite() || !params.is_finite() {
            params = snapshot;
            break;
        }
        loss_curve.push(epoch_loss);
        if epoch_loss > best_loss - MLP_TOL {
            stale += 1;
        } else {
            stale = 0;
        }
        best_loss = best_loss.min(epoch_loss);
        if stale >= p.n_iter_no_change {
            break;
        }
    }

    Ok(MlpModel {
        net: params,
        loss_curve,
    })
}

impl MlpModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        let mut h = vec![0.0; self.net.b1.len()];
        self.net.hidden(row, &mut h);
        self.net.logit(&h)
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.decision(row) >= 0.0)
    }
}
