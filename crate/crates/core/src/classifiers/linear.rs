use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 1e-4,
            learning_rate: 0.1,
            epochs: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            learning_rate: 1e-3,
            epochs: 1000,
        }
    }
}

/// `w·x + b`, predicting class 1 when the score is positive (or, for
/// logistic regression, when the probability exceeds 0.5).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Training objective before each epoch's update.
    pub objective: Vec<f64>,
}

impl LinearModel {
    pub fn score(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.bias
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.score(row) > 0.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy plus `l2/2 · ‖w‖²`, with its gradient
/// `(∂w, ∂b)`.
pub fn logistic_objective(rows: &[f64], labels: &[u8], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &y) in rows.chunks_exact(w.len()).zip(labels) {
        let z = dot(w, row) + b;
        let y = f64::from(y);
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, x) in gw.iter_mut().zip(row) {
            *g += r * x;
        }
        gb += r;
    }
    let reg = 0.5 * l2 * dot(w, w);
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
    }
    (loss / n + reg, gw, gb / n)
}

/// Mean hinge loss on ±1 labels plus `‖w‖² / (2CN)`, with a subgradient.
pub fn svm_objective(rows: &[f64], labels: &[u8], w: &[f64], b: f64, c: f64) -> (f64, Vec<f64>, f64) {
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &y) in rows.chunks_exact(w.len()).zip(labels) {
        let y = if y == 1 { 1.0 } else { -1.0 };
        let margin = y * (dot(w, row) + b);
        if margin < 1.0 {
            loss += 1.0 - margin;
            for (g, x) in gw.iter_mut().zip(row) {
                *g -= y * x;
            }
            gb -= y;
        }
    }
    let lambda = 1.0 / (c * n);
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + lambda * wi;
    }
    (loss / n + 0.5 * lambda * dot(w, w), gw, gb / n)
}

type Objective<'a> = dyn Fn(&[f64], f64) -> (f64, Vec<f64>, f64) + 'a;

fn descend(dim: usize, epochs: usize, lr: f64, objective: &Objective) -> Result<LinearModel> {
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (value, gw, gb) = objective(&w, b);
        if !value.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(value);
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g;
        }
        b -= lr * gb;
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(LinearModel {
        weights: w,
        bias: b,
        objective: history,
    })
}

/// Full-batch gradient descent on the regularized cross-entropy.
pub fn fit_logistic(rows: &[f64], dim: usize, labels: &[u8], config: &LogisticConfig) -> Result<LinearModel> {
    descend(dim, config.epochs, config.learning_rate, &|w, b| {
        logistic_objective(rows, labels, w, b, config.l2)
    })
}

/// Full-batch subgradient descent on the soft-margin objective.
pub fn fit_svm(rows: &[f64], dim: usize, labels: &[u8], config: &SvmConfig) -> Result<LinearModel> {
    if config.c <= 0.0 {
        return Err(Error::InvalidArgument(format!("SVM C must be positive, got {}", config.c)));
    }
    descend(dim, config.epochs, config.learning_rate, &|w, b| svm_objective(rows, labels, w, b, config.c))
}
