use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

use super::{DataError, SeriesStats, TimeSeriesDataset};

#[derive(Debug)]
struct WindowSource {
    channel_names: Vec<String>,
    channels: Vec<Vec<f64>>,
    target: Vec<f64>,
    time_labels: Vec<String>,
}

/// Regression samples: the trailing `window` steps of every non-target
/// series, ending at `t`, paired with the target series at `t`.
///
/// Samples are views into shared series storage; subsets are cheap.
#[derive(Debug, Clone)]
pub struct WindowedRegressionSet {
    target: String,
    window: usize,
    source: Arc<WindowSource>,
    ends: Vec<usize>,
    stats: Vec<SeriesStats>,
}

impl WindowedRegressionSet {
    pub fn target_name(&self) -> &str {
        &self.target
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn channel_names(&self) -> &[String] {
        &self.source.channel_names
    }

    pub fn n_channels(&self) -> usize {
        self.source.channel_names.len()
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    /// Input block [channels × window] of sample `i`.
    pub fn input(&self, i: usize) -> Tensor {
        let end = self.ends[i];
        let start = end + 1 - self.window;
        let mut data = Vec::with_capacity(self.n_channels() * self.window);
        for ch in &self.source.channels {
            data.extend_from_slice(&ch[start..=end]);
        }
        Tensor::from_parts(vec![self.n_channels(), self.window], data)
    }

    pub fn target(&self, i: usize) -> f64 {
        self.source.target[self.ends[i]]
    }

    pub fn targets(&self) -> Vec<f64> {
        self.ends.iter().map(|&e| self.source.target[e]).collect()
    }

    /// Time index of sample `i`'s target.
    pub fn end(&self, i: usize) -> usize {
        self.ends[i]
    }

    pub fn ends(&self) -> &[usize] {
        &self.ends
    }

    pub fn time_label(&self, i: usize) -> &str {
        &self.source.time_labels[self.ends[i]]
    }

    /// Standardization statistics of the source dataset, if any were attached.
    pub fn stats(&self) -> &[SeriesStats] {
        &self.stats
    }

    pub fn with_stats(mut self, stats: Vec<SeriesStats>) -> Self {
        self.stats = stats;
        self
    }

    /// Samples at the given positions, in the given order.
    pub fn subset(&self, positions: &[usize]) -> Self {
        WindowedRegressionSet {
            ends: positions.iter().map(|&p| self.ends[p]).collect(),
            ..self.clone()
        }
    }

    /// Positions `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        WindowedRegressionSet {
            ends: self.ends[range].to_vec(),
            ..self.clone()
        }
    }
}

/// One sample per step `t` whose trailing `window` steps are present in
/// every series; channels are the dataset's series minus `target`, in order.
pub fn make_windows(data: &TimeSeriesDataset, target: &str, window: usize) -> Result<WindowedRegressionSet, DataError> {
    let p = data
        .index_of(target)
        .ok_or_else(|| DataError::UnknownSeries(target.to_string()))?;
    if window == 0 {
        return Err(DataError::Invalid("window must be positive".into()));
    }
    let len = data.len();
    let present: Vec<bool> = (0..len).map(|t| (0..data.n_series()).all(|i| data.mask[i][t])).collect();
    let mut ends = Vec::new();
    let mut run = 0;
    let mut longest = 0;
    for t in 0..len {
        run = if present[t] { run + 1 } else { 0 };
        longest = longest.max(run);
        if run >= window {
            ends.push(t);
        }
    }
    if ends.is_empty() {
        return Err(DataError::WindowTooLong {
            window,
            usable: longest,
        });
    }
    let others: Vec<usize> = (0..data.n_series()).filter(|&i| i != p).collect();
    let source = WindowSource {
        channel_names: others.iter().map(|&i| data.names[i].clone()).collect(),
        channels: others.iter().map(|&i| data.values[i].clone()).collect(),
        target: data.values[p].clone(),
        time_labels: data.labels.clone(),
    };
    Ok(WindowedRegressionSet {
        target: target.to_string(),
        window,
        source: Arc::new(source),
        ends,
        stats: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    #[default]
    Chronological,
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub mode: SplitMode,
    /// Permutation seed for shuffled mode.
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.9,
            mode: SplitMode::Chronological,
            seed: 0,
        }
    }
}

/// Train/test split at `round(S · train_fraction)`. Chronological mode
/// keeps sample order, so every training target precedes every test target.
pub fn split(
    set: &WindowedRegressionSet,
    spec: &SplitSpec,
) -> Result<(WindowedRegressionSet, WindowedRegressionSet), DataError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DataError::Invalid(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let s = set.len();
    let n_train = (s as f64 * spec.train_fraction).round() as usize;
    if n_train == 0 || n_train >= s {
        return Err(DataError::DegenerateSplit {
            train: n_train.min(s),
            test: s - n_train.min(s),
        });
    }
    let mut order: Vec<usize> = (0..s).collect();
    if spec.mode == SplitMode::Shuffled {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    }
    Ok((set.subset(&order[..n_train]), set.subset(&order[n_train..])))
}

/// Structured summary of a windowed set and its split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowManifest {
    pub target: String,
    pub window: usize,
    pub channels: Vec<String>,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// First and last target time label of each side.
    pub train_span: (String, String),
    pub test_span: (String, String),
    pub stats: Vec<SeriesStats>,
}

impl WindowManifest {
    pub fn new(train: &WindowedRegressionSet, test: &WindowedRegressionSet) -> Self {
        let span = |s: &WindowedRegressionSet| {
            (
                s.time_label(0).to_string(),
                s.time_label(s.len() - 1).to_string(),
            )
        };
        WindowManifest {
            target: train.target.clone(),
            window: train.window,
            channels: train.channel_names().to_vec(),
            n_samples: train.len() + test.len(),
            n_train: train.len(),
            n_test: test.len(),
            train_span: span(train),
            test_span: span(test),
            stats: train.stats.clone(),
        }
    }
}

/// One row per sample: time label, target, then every window value with
/// columns named `channel@-lag`.
pub fn write_split_csv<W: Write>(out: W, set: &WindowedRegressionSet) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string(), "target".to_string()];
    for name in set.channel_names() {
        for lag in (0..set.window).rev() {
            header.push(format!("{name}@-{lag}"));
        }
    }
    w.write_record(&header)?;
    for i in 0..set.len() {
        let mut row = vec![set.time_label(i).to_string(), format!("{:.16e}", set.target(i))];
        row.extend(set.input(i).data().iter().map(|v| format!("{v:.16e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
