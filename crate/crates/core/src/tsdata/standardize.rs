use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{DataError, DropReason, DroppedSeries, TimeSeriesDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

impl SeriesStats {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardizeReport {
    pub stats_range: (usize, usize),
    pub stats: Vec<SeriesStats>,
    pub drops: Vec<DroppedSeries>,
}

/// Rescales each series to `(x − mean) / std` using statistics (population
/// std) from the present values in `train`. Series with zero spread there
/// are dropped.
pub fn standardize(
    data: &TimeSeriesDataset,
    train: Range<usize>,
) -> Result<(TimeSeriesDataset, StandardizeReport), DataError> {
    if train.is_empty() || train.end > data.len() {
        return Err(DataError::Invalid(format!(
            "statistics range {train:?} outside 0..{}",
            data.len()
        )));
    }
    let mut report = StandardizeReport {
        stats_range: (train.start, train.end),
        ..Default::default()
    };
    let mut out = data.clone();
    let mut keep = vec![true; data.n_series()];
    for i in 0..data.n_series() {
        let present: Vec<f64> = train
            .clone()
            .filter(|&t| data.mask[i][t])
            .map(|t| data.values[i][t])
            .collect();
        let n = present.len() as f64;
        let mean = present.iter().sum::<f64>() / n;
        let var = present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if present.is_empty() || std.is_nan() || std <= f64::EPSILON * mean.abs().max(1.0) {
            keep[i] = false;
            report.drops.push(DroppedSeries {
                series: data.names[i].clone(),
                reason: DropReason::Constant,
            });
            continue;
        }
        let stats = SeriesStats {
            name: data.names[i].clone(),
            mean,
            std,
        };
        for (v, &present) in out.values[i].iter_mut().zip(&data.mask[i]) {
            if present {
                *v = stats.apply(*v);
            }
        }
        report.stats.push(stats);
    }
    let out = out.retain_series(|i| keep[i])?;
    Ok((out, report))
}
