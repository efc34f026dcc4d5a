//! Baseline classifiers: L2 logistic regression by full-batch gradient
//! descent, and k-nearest neighbours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Knn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Knn => "knn",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "knn" => Ok(ModelKind::Knn),
            other => Err(Error::InvalidInput(format!(
                "unknown model `{other}` (expected logistic or knn)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub l2: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 1e-2,
            epochs: 500,
            lr: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.intercept + x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>())
    }
}

/// Mean log loss plus `l2/2 |w|^2` (intercept unpenalised) and its gradient
/// with respect to `params = [intercept, w...]`.
pub fn logistic_loss_grad(x: &[Vec<f64>], y: &[u8], params: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let n = x.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let z = params[0] + row.iter().zip(&params[1..]).map(|(a, w)| a * w).sum::<f64>();
        loss += softplus(z) - yi as f64 * z;
        let r = sigmoid(z) - yi as f64;
        grad[0] += r;
        for (g, a) in grad[1..].iter_mut().zip(row) {
            *g += r * a;
        }
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    for (g, w) in grad[1..].iter_mut().zip(&params[1..]) {
        *g += l2 * w;
    }
    loss += 0.5 * l2 * params[1..].iter().map(|w| w * w).sum::<f64>();
    (loss, grad)
}

pub fn train_logistic(x: &[Vec<f64>], y: &[u8], config: &LogisticConfig) -> Result<LogisticModel> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::InvalidInput("logistic regression needs at least 2 rows".into()));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass("logistic training set".into()));
    }
    let d = x[0].len();
    let mut params = vec![0.0; d + 1];
    for _ in 0..config.epochs {
        let (_, g) = logistic_loss_grad(x, y, &params, config.l2);
        for (p, gi) in params.iter_mut().zip(&g) {
            *p -= config.lr * gi;
        }
    }
    Ok(LogisticModel {
        intercept: params[0],
        weights: params[1..].to_vec(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Share of positives among the `k` nearest training rows; distance ties go
/// to the lower index.
pub fn knn_predict(train_x: &[Vec<f64>], train_y: &[u8], query: &[f64], k: usize) -> Result<f64> {
    if train_x.is_empty() {
        return Err(Error::InvalidInput("empty kNN training set".into()));
    }
    let k = k.clamp(1, train_x.len());
    let mut d: Vec<(f64, usize)> = train_x
        .iter()
        .enumerate()
        .map(|(i, r)| (sq_dist(r, query), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let pos = d[..k].iter().filter(|(_, i)| train_y[*i] == 1).count();
    Ok(pos as f64 / k as f64)
}

pub const DEFAULT_K: usize = 5;

/// Trains on one set and scores another. A single-class training set yields
/// its constant class rate.
pub fn fit_predict(
    kind: ModelKind,
    train_x: &[Vec<f64>],
    train_y: &[u8],
    test_x: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let pos = train_y.iter().filter(|&&v| v == 1).count();
    if train_y.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if pos == 0 || pos == train_y.len() {
        let rate = pos as f64 / train_y.len() as f64;
        return Ok(vec![rate; test_x.len()]);
    }
    match kind {
        ModelKind::Logistic => {
            let m = train_logistic(train_x, train_y, &LogisticConfig::default())?;
            Ok(test_x.iter().map(|r| m.predict(r)).collect())
        }
        ModelKind::Knn => test_x
            .iter()
            .map(|r| knn_predict(train_x, train_y, r, DEFAULT_K))
            .collect(),
    }
}
