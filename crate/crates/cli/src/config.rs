//! Run configuration: TOML document, overrides and hashing.

use std::path::{Path, PathBuf};

use gcnn_core::model::{Family, Grouping, ModelSpec, Preset, StageSpec};
use gcnn_core::tensor::{Activation, Padding};
use gcnn_core::trainer::TrainConfig;
use gcnn_core::tsdata::{CsvSchema, SplitMode, SplitSpec, DEFAULT_MAX_GAP};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

fn default_window() -> usize {
    64
}

fn default_max_gap() -> usize {
    DEFAULT_MAX_GAP
}

fn default_train_fraction() -> f64 {
    0.9
}

fn default_delimiter() -> String {
    ",".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub target: String,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_max_gap")]
    pub max_gap: usize,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split: SplitMode,
}

fn default_iterations() -> usize {
    2
}

fn default_recurrent() -> usize {
    3
}

fn default_channels() -> Vec<usize> {
    vec![100; 4]
}

fn default_pools() -> Vec<usize> {
    vec![1, 4, 4, 4]
}

fn default_kw() -> usize {
    3
}

fn default_dense() -> Vec<usize> {
    vec![100]
}

fn default_hidden() -> Activation {
    Activation::Relu
}

fn default_output() -> Activation {
    Activation::Linear
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Water,
    Drone,
}

impl PresetName {
    pub fn input_channels(self) -> usize {
        self.preset().input_channels()
    }

    fn preset(self) -> Preset {
        match self {
            PresetName::Water => Preset::Water,
            PresetName::Drone => Preset::Drone,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Uses the published layer plan for this dataset; `family` and
    /// `grouping` still apply.
    #[serde(default)]
    pub preset: Option<PresetName>,
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub grouping: Grouping,
    /// Number of groups; 0 leaves it unset, which only ungrouped models allow.
    #[serde(default)]
    pub k: usize,
    #[serde(default = "default_iterations")]
    pub rcl_iterations: usize,
    #[serde(default = "default_recurrent")]
    pub recurrent_stages: usize,
    /// Output channels of each stage; per group when grouped.
    #[serde(default = "default_channels")]
    pub channels: Vec<usize>,
    /// Max-pool window before each stage; 1 means none.
    #[serde(default = "default_pools")]
    pub pools: Vec<usize>,
    #[serde(default = "default_kw")]
    pub kernel_width: usize,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default = "default_dense")]
    pub dense: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub hidden_activation: Activation,
    #[serde(default = "default_output")]
    pub output_activation: Activation,
    #[serde(default = "default_hidden")]
    pub coeff_activation: Activation,
    /// Group assignment file for explicit mode; clustered from the data
    /// when absent.
    #[serde(default)]
    pub assignment: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        toml::from_str("").expect("all model fields have defaults")
    }
}

fn default_repeats() -> usize {
    3
}

fn default_networks() -> Vec<String> {
    vec!["cnn".into(), "cnn-exp".into(), "cnn-coeff".into()]
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Number of target picks.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Explicit targets; drawn at random from the series when empty.
    #[serde(default)]
    pub targets: Vec<String>,
    /// Networks as `cnn` or `rcnn` with an optional `-exp` or `-coeff` suffix.
    #[serde(default = "default_networks")]
    pub networks: Vec<String>,
    /// Ridge penalties of the linear baselines; 0 is plain least squares.
    #[serde(default = "default_lambdas")]
    pub ridge_lambdas: Vec<f64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        toml::from_str("").expect("all compare fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Sets `key.path = value` in a TOML table. The value is parsed as TOML
/// and falls back to a plain string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses `text`, applies overrides and resolves relative paths
    /// against `base`.
    pub fn parse(text: &str, base: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        cfg.data.path = resolve(&cfg.data.path);
        cfg.out = resolve(&cfg.out);
        if let Some(a) = &cfg.model.assignment {
            cfg.model.assignment = Some(resolve(a));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    /// Field-level checks run before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        let d = &self.data;
        if !d.path.is_file() {
            return bad("data.path", format!("{} is not a readable file", d.path.display()));
        }
        if d.window == 0 {
            return bad("data.window", "must be at least 1".into());
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return bad("data.train_fraction", format!("{} is outside (0, 1)", d.train_fraction));
        }
        if d.delimiter.len() != 1 {
            return bad("data.delimiter", format!("`{}` is not a single byte", d.delimiter));
        }
        let m = &self.model;
        if m.grouping != Grouping::None && m.k == 0 {
            return bad("model.k", "is required for grouped models".into());
        }
        if m.grouping == Grouping::Explicit && m.k < 2 {
            return bad("model.k", format!("explicit grouping needs k ≥ 2, got {}", m.k));
        }
        if m.grouping == Grouping::Coeff && m.k < 1 {
            return bad("model.k", "must be at least 1".into());
        }
        if m.family == Family::Rcnn && m.rcl_iterations < 1 {
            return bad("model.rcl_iterations", "must be at least 1".into());
        }
        if m.preset.is_none() && m.channels.len() != m.pools.len() {
            return bad(
                "model.pools",
                format!("{} pools for {} channel stages", m.pools.len(), m.channels.len()),
            );
        }
        if let Some(a) = &m.assignment {
            if !a.is_file() {
                return bad("model.assignment", format!("{} is not a readable file", a.display()));
            }
        }
        self.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        let c = &self.compare;
        if c.repeats == 0 {
            return bad("compare.repeats", "must be at least 1".into());
        }
        for n in &c.networks {
            parse_network(n)?;
        }
        if let Some(l) = c.ridge_lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return bad("compare.ridge_lambdas", format!("{l} is not finite and ≥ 0"));
        }
        Ok(())
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            delimiter: self.data.delimiter.as_bytes()[0],
            ..CsvSchema::default()
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.data.train_fraction,
            mode: self.data.split,
            seed: self.seed,
        }
    }

    /// Training settings with the run seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// SHA-256 of the effective configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let text = toml::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Model spec for `input_channels` series windows of the configured length.
    pub fn model_spec(&self, input_channels: usize) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let mut spec = match m.preset {
            Some(p) => {
                let spec = ModelSpec::preset(p.preset(), m.family, m.grouping);
                if spec.input_channels != input_channels || spec.window != self.data.window {
                    return Err(CliError::Config(format!(
                        "model.preset: expects {}×{} windows, data gives {input_channels}×{}",
                        spec.input_channels, spec.window, self.data.window
                    )));
                }
                spec
            }
            None => {
                let mut spec = ModelSpec::new(input_channels, self.data.window, m.grouping, 1, 1, m.dense.clone());
                spec.k = if m.grouping == Grouping::None { 1 } else { m.k };
                spec.stages = m
                    .channels
                    .iter()
                    .zip(&m.pools)
                    .map(|(&channels, &pool)| StageSpec { channels, pool })
                    .collect();
                spec.kernel_width = m.kernel_width;
                spec.padding = m.padding;
                spec
            }
        };
        spec.family = m.family;
        spec.rcl_iterations = m.rcl_iterations;
        spec.recurrent_stages = m.recurrent_stages.min(spec.stages.len());
        spec.hidden_activation = m.hidden_activation;
        spec.output_activation = m.output_activation;
        spec.coeff_activation = m.coeff_activation;
        spec.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        Ok(spec)
    }
}

/// Parses `cnn`, `rcnn`, `cnn-exp`, `rcnn-coeff`, ...
pub fn parse_network(name: &str) -> Result<(Family, Grouping), CliError> {
    let (fam, grp) = name.split_once('-').unwrap_or((name, ""));
    let family = match fam {
        "cnn" => Family::Cnn,
        "rcnn" => Family::Rcnn,
        _ => return Err(CliError::Config(format!("compare.networks: unknown family in `{name}`"))),
    };
    let grouping = match grp {
        "" => Grouping::None,
        "exp" => Grouping::Explicit,
        "coeff" => Grouping::Coeff,
        _ => return Err(CliError::Config(format!("compare.networks: unknown grouping in `{name}`"))),
    };
    Ok((family, grouping))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> (tempfile::TempDir, String) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "t,a,b\n0,1,2\n").unwrap();
        (dir, "[data]\npath = \"d.csv\"\ntarget = \"a\"\n".to_string())
    }

    #[test]
    fn defaults_and_overrides() {
        let (dir, text) = base();
        let cfg = RunConfig::parse(&text, dir.path(), &[]).unwrap();
        assert_eq!(cfg.data.window, 64);
        assert_eq!(cfg.train.epochs, 200);
        assert_eq!(cfg.model.channels, vec![100; 4]);
        let o = vec![
            "train.epochs=5".to_string(),
            "model.grouping=coeff".to_string(),
            "model.k=3".to_string(),
            "model.channels=[2,3]".to_string(),
            "model.pools=[1,2]".to_string(),
        ];
        let cfg2 = RunConfig::parse(&text, dir.path(), &o).unwrap();
        assert_eq!(cfg2.train.epochs, 5);
        assert_eq!(cfg2.model.grouping, Grouping::Coeff);
        assert_eq!(cfg2.model.channels, vec![2, 3]);
        assert_ne!(cfg.hash(), cfg2.hash());
        let mut moved = cfg.clone();
        moved.out = PathBuf::from("/elsewhere");
        assert_eq!(moved.hash(), cfg.hash());
    }

    #[test]
    fn field_level_errors() {
        let (dir, text) = base();
        for (o, field) in [
            ("model.grouping=explicit", "model.k"),
            ("model.k=1", ""),
            ("data.train_fraction=1.5", "data.train_fraction"),
            ("train.learning_rate=-1", "train"),
            ("model.pools=[1]", "model.pools"),
            ("compare.networks=[\"mlp\"]", "compare.networks"),
            ("bogus=1", "unknown field"),
        ] {
            let mut over = vec![o.to_string()];
            if o == "model.k=1" {
                over.push("model.grouping=explicit".into());
            }
            let err = RunConfig::parse(&text, dir.path(), &over).unwrap_err().to_string();
            assert!(err.contains(if field.is_empty() { "model.k" } else { field }), "{o}: {err}");
        }
        let err = RunConfig::parse("[data]\npath = \"missing.csv\"\ntarget = \"a\"\n", dir.path(), &[]).unwrap_err();
        assert!(err.to_string().contains("data.path"));
    }

    #[test]
    fn networks() {
        assert_eq!(parse_network("rcnn-coeff").unwrap(), (Family::Rcnn, Grouping::Coeff));
        assert_eq!(parse_network("cnn").unwrap(), (Family::Cnn, Grouping::None));
        assert!(parse_network("cnn-x").is_err());
    }
}
