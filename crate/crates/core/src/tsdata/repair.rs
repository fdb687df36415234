use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeriesDataset};

/// Two months of daily records.
pub const DEFAULT_MAX_GAP: usize = 61;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFill {
    pub series: String,
    /// Index of the first missing step.
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// A missing run longer than the cap.
    LongGap { start: usize, len: usize },
    /// Missing first or last value, so a run cannot be interpolated.
    MissingEndpoint,
    /// Zero variance over the statistics range.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSeries {
    pub series: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub max_gap: usize,
    pub fills: Vec<GapFill>,
    pub drops: Vec<DroppedSeries>,
}

/// Runs of missing values as `(start, len)`.
fn missing_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut t = 0;
    while t < mask.len() {
        if mask[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < mask.len() && !mask[t] {
            t += 1;
        }
        runs.push((start, t - start));
    }
    runs
}

/// Fills missing runs of at most `max_gap` steps by linear interpolation
/// between the flanking values; drops series with a longer run or a
/// missing endpoint. The time index must have a fixed step.
pub fn repair_gaps(data: &TimeSeriesDataset, max_gap: usize) -> Result<(TimeSeriesDataset, RepairReport), DataError> {
    if data.len() >= 2 {
        let step = data.stamps[1] - data.stamps[0];
        for (i, w) in data.stamps.windows(2).enumerate() {
            if w[1] - w[0] != step {
                return Err(DataError::IrregularStep {
                    index: i + 1,
                    expected: step,
                    got: w[1] - w[0],
                });
            }
        }
    }

    let mut report = RepairReport {
        max_gap,
        ..Default::default()
    };
    let mut out = data.clone();
    let mut keep = vec![true; data.n_series()];
    let last = data.len() - 1;
    for i in 0..data.n_series() {
        let runs = missing_runs(&data.mask[i]);
        let bad = runs.iter().find_map(|&(start, len)| {
            if start == 0 || start + len - 1 == last {
                Some(DropReason::MissingEndpoint)
            } else if len > max_gap {
                Some(DropReason::LongGap { start, len })
            } else {
                None
            }
        });
        if let Some(reason) = bad {
            keep[i] = false;
            report.drops.push(DroppedSeries {
                series: data.names[i].clone(),
                reason,
            });
            continue;
        }
        for (start, len) in runs {
            let (lo, hi) = (start - 1, start + len);
            let (a, b) = (data.values[i][lo], data.values[i][hi]);
            let span = (hi - lo) as f64;
            for t in start..hi {
                let frac = (t - lo) as f64 / span;
                out.values[i][t] = a + (b - a) * frac;
                out.mask[i][t] = true;
            }
            report.fills.push(GapFill {
                series: data.names[i].clone(),
                start,
                len,
            });
        }
    }
    if keep.iter().all(|k| !k) {
        return Err(DataError::AllSeriesDropped);
    }
    let out = out.retain_series(|i| keep[i])?;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: Vec<Vec<Option<f64>>>) -> TimeSeriesDataset {
        let names = (0..rows.len()).map(|i| format!("s{i}")).collect();
        let len = rows[0].len();
        let values = rows.iter().map(|r| r.iter().map(|v| v.unwrap_or(0.0)).collect()).collect();
        let mask = rows.iter().map(|r| r.iter().map(Option::is_some).collect()).collect();
        let stamps: Vec<i64> = (0..len as i64).collect();
        let labels = stamps.iter().map(|s| s.to_string()).collect();
        TimeSeriesDataset::new("t".into(), names, values, mask, stamps, labels).unwrap()
    }

    #[test]
    fn midpoint_fill() {
        let d = ds(vec![
            vec![Some(1.0), None, Some(3.0)],
            vec![Some(0.0), Some(0.0), Some(1.0)],
        ]);
        let (r, rep) = repair_gaps(&d, 1).unwrap();
        assert_eq!(r.series(0), &[1.0, 2.0, 3.0]);
        assert!(r.is_complete());
        assert_eq!(rep.fills, vec![GapFill { series: "s0".into(), start: 1, len: 1 }]);
    }

    #[test]
    fn long_gap_drops_named_series() {
        let d = ds(vec![
            vec![Some(1.0), None, None, Some(3.0)],
            vec![Some(1.0), Some(2.0), Some(0.0), Some(3.0)],
            vec![Some(1.0), Some(2.0), Some(5.0), Some(3.0)],
        ]);
        let (r, rep) = repair_gaps(&d, 1).unwrap();
        assert_eq!(r.names(), &["s1", "s2"]);
        assert_eq!(rep.drops[0].series, "s0");
        assert_eq!(rep.drops[0].reason, DropReason::LongGap { start: 1, len: 2 });
        let (r, _) = repair_gaps(&d, 2).unwrap();
        assert_eq!(r.series(0), &[1.0, 1.0 + 2.0 / 3.0, 1.0 + 4.0 / 3.0, 3.0]);
    }

    #[test]
    fn missing_endpoints_drop() {
        let d = ds(vec![
            vec![None, Some(1.0), Some(3.0)],
            vec![Some(1.0), Some(1.0), None],
            vec![Some(1.0), Some(1.0), Some(2.0)],
        ]);
        match repair_gaps(&d, 10) {
            Err(DataError::TooFewSeries(1)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_dropped_is_an_error() {
        let d = ds(vec![vec![None, Some(1.0)], vec![Some(1.0), None]]);
        assert!(matches!(repair_gaps(&d, 10), Err(DataError::AllSeriesDropped)));
    }

    #[test]
    fn idempotent() {
        let d = ds(vec![
            vec![Some(1.0), None, Some(7.0), None, None, Some(2.0)],
            vec![Some(1.0), Some(2.0), None, Some(0.5), Some(0.0), Some(3.0)],
        ]);
        let (once, _) = repair_gaps(&d, 2).unwrap();
        let (twice, rep) = repair_gaps(&once, 2).unwrap();
        assert_eq!(once, twice);
        assert!(rep.fills.is_empty() && rep.drops.is_empty());
    }

    #[test]
    fn irregular_step_rejected() {
        let d = TimeSeriesDataset::new(
            "t".into(),
            vec!["a".into(), "b".into()],
            vec![vec![1.0; 3], vec![2.0; 3]],
            vec![vec![true; 3]; 2],
            vec![0, 1, 3],
            vec!["0".into(), "1".into(), "3".into()],
        )
        .unwrap();
        assert!(matches!(repair_gaps(&d, 1), Err(DataError::IrregularStep { index: 2, .. })));
    }
}
