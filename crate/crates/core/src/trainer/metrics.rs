use serde::{Deserialize, Serialize};

use crate::model::Model;
use crate::tensor::{Tape, Tensor, TensorError, Var};
use crate::tsdata::WindowedRegressionSet;

use super::TrainError;

/// Mean squared residual of scalar predictions `preds` against `targets`.
pub fn mse_loss(tape: &mut Tape, preds: &[Var], targets: &[f64]) -> Result<Var, TensorError> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(TensorError::InvalidArgument {
            op: "mse_loss",
            msg: format!("{} predictions for {} targets", preds.len(), targets.len()),
        });
    }
    let y = tape.concat_rows(preds)?;
    let t = tape.constant(Tensor::new(&[targets.len()], targets.to_vec())?);
    let d = tape.sub(y, t)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

/// RMSE, target spread and their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub rmse: f64,
    /// Population standard deviation of the targets.
    pub se: f64,
    /// `rmse / se`; undefined for constant targets.
    pub srmse: Option<f64>,
}

pub fn scores(targets: &[f64], preds: &[f64]) -> Result<Scores, TrainError> {
    if targets.is_empty() || targets.len() != preds.len() {
        return Err(TrainError::EmptySet(format!(
            "{} targets and {} predictions",
            targets.len(),
            preds.len()
        )));
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let rmse = (targets.iter().zip(preds).map(|(t, y)| (t - y) * (t - y)).sum::<f64>() / n).sqrt();
    let se = (targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n).sqrt();
    Ok(Scores {
        rmse,
        se,
        srmse: (se > 0.0).then(|| rmse / se),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub target: String,
    pub samples: usize,
    pub srmse: Option<f64>,
    pub rmse: f64,
    pub se: f64,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
}

impl EvalReport {
    pub fn from_predictions(
        model_id: &str,
        set: &WindowedRegressionSet,
        predictions: Vec<f64>,
    ) -> Result<Self, TrainError> {
        let targets = set.targets();
        let s = scores(&targets, &predictions)?;
        Ok(EvalReport {
            model_id: model_id.to_string(),
            target: set.target_name().to_string(),
            samples: targets.len(),
            srmse: s.srmse,
            rmse: s.rmse,
            se: s.se,
            predictions,
            targets,
        })
    }
}

/// Scores `model` on every sample of `set`.
pub fn evaluate(model: &Model, set: &WindowedRegressionSet, model_id: &str) -> Result<EvalReport, TrainError> {
    if set.is_empty() {
        return Err(TrainError::EmptySet("evaluation set has no samples".into()));
    }
    super::check_geometry(model, set)?;
    let inputs: Vec<Tensor> = (0..set.len()).map(|i| set.input(i)).collect();
    let preds = model.predict_many(&inputs)?;
    EvalReport::from_predictions(model_id, set, preds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        let mut tape = Tape::new();
        let y = tape.param(Tensor::scalar(0.0));
        let loss = mse_loss(&mut tape, &[y], &[2.0]).unwrap();
        assert_eq!(tape.value(loss).item(), Some(4.0));
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(y).unwrap().data(), &[-4.0]);
        assert!(mse_loss(&mut tape, &[], &[]).is_err());
        assert!(mse_loss(&mut tape, &[y], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn score_examples() {
        let s = scores(&[0.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(s.se, 1.0);
        assert!((s.rmse - 2f64.sqrt()).abs() < 1e-15);
        assert!((s.srmse.unwrap() - 2f64.sqrt()).abs() < 1e-12);
        let t = [1.0, 4.0, 2.5, -3.0];
        assert_eq!(scores(&t, &t).unwrap().srmse, Some(0.0));
        let m = t.iter().sum::<f64>() / 4.0;
        assert_eq!(scores(&t, &[m; 4]).unwrap().srmse, Some(1.0));
        let c = scores(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
        assert_eq!((c.srmse, c.rmse), (None, 1.0));
    }
}
