use serde::{Deserialize, Serialize};

use crate::tsdata::WindowedRegressionSet;

use super::{EvalReport, TrainError};

/// Relative pivot size below which a Cholesky factorization is singular.
const PIVOT_TOL: f64 = 1e-12;

/// Linear model `y = wᵀx + b` with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl RidgeFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Minimizes `‖y − Xw − b‖² + λ‖w‖²`. Features and targets are centered,
/// so the intercept is unpenalized. With more features than samples the
/// dual system `(XXᵀ + λI)α = y` is solved instead.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RidgeFit, TrainError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(TrainError::InvalidConfig(format!("ridge lambda must be finite and ≥ 0, got {lambda}")));
    }
    let n = x.len();
    if n == 0 || n != y.len() {
        return Err(TrainError::EmptySet(format!("{n} rows and {} targets", y.len())));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(TrainError::Geometry("ragged design matrix".into()));
    }
    let nf = n as f64;
    let xm: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let ym = y.iter().sum::<f64>() / nf;
    let xc: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(&xm).map(|(v, m)| v - m).collect()).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();

    let singular = || {
        TrainError::Singular(format!(
            "normal equations are singular at lambda = {lambda} ({n} samples, {p} features); use lambda > 0"
        ))
    };
    let weights = if p <= n {
        let mut a = vec![0.0; p * p];
        let mut b = vec![0.0; p];
        for (r, t) in xc.iter().zip(&yc) {
            for i in 0..p {
                b[i] += r[i] * t;
                for j in 0..=i {
                    a[i * p + j] += r[i] * r[j];
                }
            }
        }
        for i in 0..p {
            a[i * p + i] += lambda;
            for j in 0..i {
                a[j * p + i] = a[i * p + j];
            }
        }
        cholesky_solve(a, b, p).ok_or_else(singular)?
    } else {
        if lambda == 0.0 {
            return Err(singular());
        }
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let d: f64 = xc[i].iter().zip(&xc[j]).map(|(a, b)| a * b).sum();
                k[i * n + j] = d;
                k[j * n + i] = d;
            }
            k[i * n + i] += lambda;
        }
        let alpha = cholesky_solve(k, yc, n).ok_or_else(singular)?;
        (0..p).map(|j| xc.iter().zip(&alpha).map(|(r, a)| r[j] * a).sum()).collect()
    };
    let intercept = ym - weights.iter().zip(&xm).map(|(w, m)| w * m).sum::<f64>();
    Ok(RidgeFit {
        lambda,
        weights,
        intercept,
    })
}

/// Solves `A z = b` for symmetric positive definite `A` [n×n].
fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > PIVOT_TOL * scale) {
            return None;
        }
        let l = d.sqrt();
        a[j * n + j] = l;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / l;
        }
    }
    for i in 0..n {
        let s: f64 = (0..i).map(|k| a[i * n + k] * b[k]).sum();
        b[i] = (b[i] - s) / a[i * n + i];
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[k * n + i] * b[k]).sum();
        b[i] = (b[i] - s) / a[i * n + i];
    }
    Some(b)
}

fn design(set: &WindowedRegressionSet) -> Vec<Vec<f64>> {
    (0..set.len()).map(|i| set.input(i).into_data()).collect()
}

/// Fits ridge regression (plain least squares at `lambda = 0`) on the
/// flattened training windows and scores it on `test`.
pub fn linear_baseline(
    train: &WindowedRegressionSet,
    test: &WindowedRegressionSet,
    lambda: f64,
) -> Result<(RidgeFit, EvalReport), TrainError> {
    if train.n_channels() != test.n_channels() || train.window() != test.window() {
        return Err(TrainError::Geometry("train and test windows differ in shape".into()));
    }
    let fit = fit_ridge(&design(train), &train.targets(), lambda)?;
    let preds = design(test).iter().map(|x| fit.predict(x)).collect();
    let id = if lambda == 0.0 { "linear".to_string() } else { format!("ridge(lambda={lambda})") };
    let report = EvalReport::from_predictions(&id, test, preds)?;
    Ok((fit, report))
}
