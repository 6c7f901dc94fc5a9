//! L2-regularized logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::gbdt::{check_xy, sigmoid, softplus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            epochs: 300,
            learning_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    #[serde(rename = "classifier_params")]
    pub params: LogRegParams,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogRegModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(linear(&self.weights, self.bias, x))
    }
}

fn linear(w: &[f64], b: f64, x: &[f64]) -> f64 {
    b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
}

/// Objective `mean(logloss) + (l2/2)·‖w‖²` and its gradient
/// `(∂/∂w, ∂/∂b)`.
pub fn loss_and_gradient<R: AsRef<[f64]>>(x: &[R], y: &[bool], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &t) in x.iter().zip(y) {
        let row = row.as_ref();
        let z = linear(w, b, row);
        let target = if t { 1.0 } else { 0.0 };
        loss += softplus(z) - target * z;
        let r = sigmoid(z) - target;
        gw.iter_mut().zip(row).for_each(|(g, xi)| *g += r * xi);
        gb += r;
    }
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * 0.5 * l2;
    gw.iter_mut().zip(w).for_each(|(g, wi)| *g = *g / n + l2 * wi);
    (loss / n + reg, gw, gb / n)
}

pub fn train_logreg<R: AsRef<[f64]>>(x: &[R], y: &[bool], params: &LogRegParams) -> Result<LogRegModel> {
    train_logreg_with_history(x, y, params).map(|(m, _)| m)
}

/// Also returns the objective before each epoch's update (plus the final
/// value).
pub fn train_logreg_with_history<R: AsRef<[f64]>>(
    x: &[R],
    y: &[bool],
    params: &LogRegParams,
) -> Result<(LogRegModel, Vec<f64>)> {
    if !(params.learning_rate.is_finite() && params.learning_rate >= 0.0 && params.l2 >= 0.0) {
        return Err(Error::InvalidParam(format!("{params:?}")));
    }
    let d = check_xy(x, y)?;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut history = Vec::with_capacity(params.epochs + 1);
    for _ in 0..params.epochs {
        let (loss, gw, gb) = loss_and_gradient(x, y, &w, b, params.l2);
        history.push(loss);
        w.iter_mut()
            .zip(&gw)
            .for_each(|(wi, g)| *wi -= params.learning_rate * g);
        b -= params.learning_rate * gb;
    }
    history.push(loss_and_gradient(x, y, &w, b, params.l2).0);
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::InvalidParam("logistic regression diverged".into()));
    }
    Ok((
        LogRegModel {
            params: params.clone(),
            weights: w,
            bias: b,
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seed::rng(1);
        for _ in 0..20 {
            let n = rng.gen_range(3..15);
            let d = rng.gen_range(1..6);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = rng.gen_range(-1.0..1.0);
            let l2 = rng.gen_range(0.0..0.5);
            let (_, gw, gb) = loss_and_gradient(&x, &y, &w, b, l2);
            let eps = 1e-6;
            for j in 0..d {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[j] += eps;
                wm[j] -= eps;
                let fd =
                    (loss_and_gradient(&x, &y, &wp, b, l2).0 - loss_and_gradient(&x, &y, &wm, b, l2).0) / (2.0 * eps);
                assert!((fd - gw[j]).abs() <= 1e-5 * gw[j].abs().max(1e-3), "{fd} vs {}", gw[j]);
            }
            let fd = (loss_and_gradient(&x, &y, &w, b + eps, l2).0 - loss_and_gradient(&x, &y, &w, b - eps, l2).0)
                / (2.0 * eps);
            assert!((fd - gb).abs() <= 1e-5 * gb.abs().max(1e-3));
        }
    }

    #[test]
    fn separable_1d_reaches_perfect_accuracy() {
        let x: Vec<Vec<f64>> = [-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|v| vec![*v])
            .collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] > 0.0).collect();
        let p = LogRegParams {
            l2: 0.0,
            epochs: 500,
            learning_rate: 0.5,
        };
        let (m, hist) = train_logreg_with_history(&x, &y, &p).unwrap();
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
        for (r, t) in x.iter().zip(&y) {
            assert_eq!(m.predict_proba(r) >= 0.5, *t);
        }
    }

    #[test]
    fn zero_epochs_give_half() {
        let x = vec![vec![1.0, 2.0], vec![-1.0, 0.0]];
        let p = LogRegParams {
            epochs: 0,
            ..LogRegParams::default()
        };
        let m = train_logreg(&x, &[true, false], &p).unwrap();
        assert_eq!(m.predict_proba(&[5.0, -3.0]), 0.5);
    }

    #[test]
    fn single_class_is_fatal() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            train_logreg(&x, &[false, false], &LogRegParams::default()),
            Err(Error::SingleClass)
        ));
    }
}
