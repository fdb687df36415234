use std::ops::Range;

use gcnn_core::spectral::{cut_value, ncut_value, similarity_from_series, spectral_cluster, GroupAssignment};
use gcnn_core::tsdata::{
    load_csv, make_windows, repair_gaps, split, standardize, RepairReport, StandardizeReport, TimeSeriesDataset,
    WindowedRegressionSet,
};

use crate::config::RunConfig;
use crate::CliError;

/// Repaired, standardized data and its windowed train/test split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: TimeSeriesDataset,
    pub raw_series: usize,
    pub repair: RepairReport,
    pub standardize: StandardizeReport,
    /// Time steps the standardization statistics and similarity graph use.
    pub stats_range: Range<usize>,
    pub train: WindowedRegressionSet,
    pub test: WindowedRegressionSet,
}

/// Loads, repairs, standardizes, windows and splits the configured data
/// with `target` as the regression target.
pub fn prepare(cfg: &RunConfig, target: &str) -> Result<Prepared, CliError> {
    let raw = load_csv(&cfg.data.path, &cfg.schema())
        .map_err(|e| CliError::Data(format!("{}: {e}", cfg.data.path.display())))?;
    let (repaired, repair) = repair_gaps(&raw, cfg.data.max_gap)?;
    let stats_end = (repaired.len() as f64 * cfg.data.train_fraction).floor() as usize;
    if stats_end < 2 {
        return Err(CliError::Data(format!(
            "{} time steps leave fewer than 2 for training statistics",
            repaired.len()
        )));
    }
    let (data, std_report) = standardize(&repaired, 0..stats_end)?;
    let set = make_windows(&data, target, cfg.data.window)?.with_stats(std_report.stats.clone());
    let (train, test) = split(&set, &cfg.split_spec())?;
    Ok(Prepared {
        raw_series: raw.n_series(),
        data,
        repair,
        standardize: std_report,
        stats_range: 0..stats_end,
        train,
        test,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Input channel names, in model channel order.
    pub names: Vec<String>,
    pub assignment: GroupAssignment,
    pub ncut: f64,
    pub cut: f64,
}

/// Spectral clustering of the input channels on the training time range.
pub fn cluster_inputs(cfg: &RunConfig, prep: &Prepared) -> Result<ClusterResult, CliError> {
    let names = prep.train.channel_names().to_vec();
    let range = prep.stats_range.clone();
    let slices = names
        .iter()
        .map(|n| {
            let i = prep
                .data
                .index_of(n)
                .ok_or_else(|| CliError::Data(format!("series `{n}` missing")))?;
            Ok(&prep.data.series(i)[range.clone()])
        })
        .collect::<Result<Vec<&[f64]>, CliError>>()?;
    let graph = similarity_from_series(&names, &slices)?;
    let assignment = spectral_cluster(&graph, cfg.model.k, cfg.seed)?;
    Ok(ClusterResult {
        ncut: ncut_value(&graph, &assignment)?,
        cut: cut_value(&graph, &assignment)?,
        names,
        assignment,
    })
}
