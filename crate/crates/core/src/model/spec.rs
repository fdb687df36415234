use serde::{Deserialize, Serialize};

use crate::tensor::{Activation, Padding};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Cnn,
    Rcnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    #[default]
    None,
    Explicit,
    Coeff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Water,
    Drone,
}

impl Preset {
    pub fn input_channels(self) -> usize {
        match self {
            Preset::Water => 87,
            Preset::Drone => 147,
        }
    }
}

/// One convolution stage: optional max pooling, then a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    /// Output channels; per group when the model is grouped.
    pub channels: usize,
    /// Max-pool window and stride applied before the convolution; 1 means none.
    #[serde(default = "one")]
    pub pool: usize,
}

fn one() -> usize {
    1
}

fn default_iterations() -> usize {
    2
}

fn default_recurrent() -> usize {
    3
}

fn default_kw() -> usize {
    3
}

fn default_hidden() -> Activation {
    Activation::Relu
}

fn default_output() -> Activation {
    Activation::Linear
}

/// Layer-stack description of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_channels: usize,
    pub window: usize,
    #[serde(default)]
    pub family: Family,
    #[serde(default = "default_iterations")]
    pub rcl_iterations: usize,
    /// Number of leading stages that are recurrent in the rcnn family.
    #[serde(default = "default_recurrent")]
    pub recurrent_stages: usize,
    #[serde(default)]
    pub grouping: Grouping,
    #[serde(default = "one")]
    pub k: usize,
    pub stages: Vec<StageSpec>,
    #[serde(default = "default_kw")]
    pub kernel_width: usize,
    #[serde(default)]
    pub padding: Padding,
    /// Hidden dense widths; a single linear output unit always follows.
    pub dense: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub hidden_activation: Activation,
    #[serde(default = "default_output")]
    pub output_activation: Activation,
    #[serde(default = "default_hidden")]
    pub coeff_activation: Activation,
}

/// Width and channel count after one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub kind: String,
    pub channels: usize,
    pub width: usize,
    pub groups: usize,
}

impl ModelSpec {
    /// Four stages with pools 1, 4, 4, 4, kernel width 3 and same padding.
    pub fn new(
        input_channels: usize,
        window: usize,
        grouping: Grouping,
        k: usize,
        channels: usize,
        dense: Vec<usize>,
    ) -> Self {
        ModelSpec {
            input_channels,
            window,
            family: Family::Cnn,
            rcl_iterations: default_iterations(),
            recurrent_stages: default_recurrent(),
            grouping,
            k,
            stages: [1, 4, 4, 4].iter().map(|&pool| StageSpec { channels, pool }).collect(),
            kernel_width: default_kw(),
            padding: Padding::Same,
            dense,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
            coeff_activation: Activation::Relu,
        }
    }

    /// Architectures of the groundwater (87 inputs) and drone (147 inputs)
    /// experiments, window 64.
    pub fn preset(preset: Preset, family: Family, grouping: Grouping) -> Self {
        let (n, vanilla, k, per_group, dense) = match preset {
            Preset::Water => (preset.input_channels(), 500, 5, 100, 100),
            Preset::Drone => (preset.input_channels(), 750, 15, 50, 200),
        };
        let mut spec = match grouping {
            Grouping::None => ModelSpec::new(n, 64, grouping, 1, vanilla, vec![dense]),
            _ => ModelSpec::new(n, 64, grouping, k, per_group, vec![dense]),
        };
        spec.family = family;
        spec
    }

    pub fn is_grouped(&self) -> bool {
        self.grouping != Grouping::None
    }

    /// Total channels emitted by stage `i`.
    pub fn stage_channels(&self, i: usize) -> usize {
        let c = self.stages[i].channels;
        if self.is_grouped() {
            c * self.k
        } else {
            c
        }
    }

    pub fn is_recurrent_stage(&self, i: usize) -> bool {
        self.family == Family::Rcnn && i < self.recurrent_stages
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidSpec(msg));
        if self.input_channels == 0 || self.window == 0 {
            return bad("input_channels and window must be positive".into());
        }
        if self.stages.is_empty() {
            return bad("at least one convolution stage is required".into());
        }
        if self.kernel_width == 0 {
            return bad("kernel_width must be positive".into());
        }
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if !self.is_grouped() && self.k != 1 {
            return bad(format!("k = {} requires a grouping mode", self.k));
        }
        if self.grouping == Grouping::Explicit && self.k > self.input_channels {
            return bad(format!("k = {} exceeds {} input channels", self.k, self.input_channels));
        }
        if self.family == Family::Rcnn {
            if self.rcl_iterations == 0 {
                return bad("rcl_iterations must be at least 1".into());
            }
            if self.recurrent_stages > self.stages.len() {
                return bad(format!(
                    "recurrent_stages = {} exceeds {} stages",
                    self.recurrent_stages,
                    self.stages.len()
                ));
            }
            if self.recurrent_stages > 0 && self.padding != Padding::Same {
                return bad("recurrent stages need same padding".into());
            }
        }
        if self.dense.contains(&0) {
            return bad("dense widths must be positive".into());
        }
        if let Some(i) = self.stages.iter().position(|s| s.channels == 0 || s.pool == 0) {
            return bad(format!("stage {} needs positive channels and pool", i + 1));
        }
        self.geometry().map(|_| ())
    }

    /// Layer-by-layer output geometry, ending with the output unit.
    pub fn geometry(&self) -> Result<Vec<LayerGeometry>, ModelError> {
        let groups = if self.is_grouped() { self.k } else { 1 };
        let mut out = Vec::new();
        let mut width = self.window;
        if self.grouping == Grouping::Coeff {
            width = self.conv_width(width, 0)?;
            out.push(LayerGeometry {
                kind: "coeff".into(),
                channels: self.input_channels * self.k,
                width,
                groups,
            });
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.pool > 1 {
                if s.pool > width {
                    return Err(ModelError::InvalidSpec(format!(
                        "stage {}: pool {} exceeds width {width}",
                        i + 1,
                        s.pool
                    )));
                }
                width = (width - s.pool) / s.pool + 1;
            }
            width = self.conv_width(width, i + 1)?;
            let channels = self.stage_channels(i);
            let kind = if self.is_recurrent_stage(i) { "rcl" } else { "conv" };
            out.push(LayerGeometry {
                kind: kind.into(),
                channels,
                width,
                groups,
            });
        }
        for &d in self.dense.iter().chain(std::iter::once(&1)) {
            out.push(LayerGeometry {
                kind: "dense".into(),
                channels: d,
                width: 1,
                groups: 1,
            });
        }
        Ok(out)
    }

    fn conv_width(&self, width: usize, stage: usize) -> Result<usize, ModelError> {
        match self.padding {
            Padding::Same => Ok(width),
            Padding::Valid if width >= self.kernel_width => Ok(width - self.kernel_width + 1),
            Padding::Valid => Err(ModelError::InvalidSpec(format!(
                "layer {stage}: kernel width {} exceeds input width {width}",
                self.kernel_width
            ))),
        }
    }

    /// Flattened size entering the first dense layer.
    pub fn flat_features(&self) -> Result<usize, ModelError> {
        let g = self.geometry()?;
        let last = &g[g.len() - self.dense.len() - 2];
        Ok(last.channels * last.width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn widths(spec: &ModelSpec) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let g = spec.geometry().unwrap();
        let convs: Vec<_> = g.iter().filter(|l| l.kind == "conv" || l.kind == "rcl").collect();
        (
            convs.iter().map(|l| l.width).collect(),
            convs.iter().map(|l| l.channels).collect(),
            g.iter().filter(|l| l.kind == "dense").map(|l| l.channels).collect(),
        )
    }

    #[test]
    fn water_vanilla_geometry() {
        let spec = ModelSpec::preset(Preset::Water, Family::Cnn, Grouping::None);
        spec.validate().unwrap();
        assert_eq!(spec.input_channels, 87);
        assert_eq!(spec.window, 64);
        assert_eq!(widths(&spec), (vec![64, 16, 4, 1], vec![500; 4], vec![100, 1]));
    }

    #[test]
    fn grouped_presets() {
        let water = ModelSpec::preset(Preset::Water, Family::Rcnn, Grouping::Explicit);
        assert_eq!((water.k, water.stages[0].channels), (5, 100));
        let drone = ModelSpec::preset(Preset::Drone, Family::Cnn, Grouping::Explicit);
        assert_eq!((drone.k, drone.stages[0].channels), (15, 50));
        assert_eq!(widths(&drone), (vec![64, 16, 4, 1], vec![750; 4], vec![200, 1]));
        let coeff = ModelSpec::preset(Preset::Drone, Family::Cnn, Grouping::Coeff);
        let g = coeff.geometry().unwrap();
        assert_eq!(g[0].kind, "coeff");
        assert_eq!(g[0].channels, 147 * 15);
    }

    #[test]
    fn rcnn_marks_first_three_stages() {
        let spec = ModelSpec::preset(Preset::Water, Family::Rcnn, Grouping::None);
        let kinds: Vec<_> = spec.geometry().unwrap().into_iter().map(|l| l.kind).collect();
        assert_eq!(kinds, ["rcl", "rcl", "rcl", "conv", "dense", "dense"]);
    }

    #[test]
    fn rejects_inconsistent_geometry() {
        let mut spec = ModelSpec::new(4, 8, Grouping::None, 1, 3, vec![]);
        assert!(spec.validate().is_err());
        spec.stages.truncate(2);
        spec.validate().unwrap();
        spec.padding = Padding::Valid;
        spec.kernel_width = 5;
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::new(4, 64, Grouping::None, 2, 3, vec![]);
        assert!(spec.validate().is_err());
        spec.grouping = Grouping::Explicit;
        spec.validate().unwrap();
        spec.k = 5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn serde_defaults() {
        let spec: ModelSpec = serde_json::from_str(
            r#"{"input_channels":3,"window":8,"stages":[{"channels":4},{"channels":4,"pool":2}],"dense":[5]}"#,
        )
        .unwrap();
        assert_eq!(spec.kernel_width, 3);
        assert_eq!(spec.padding, Padding::Same);
        assert_eq!(spec.output_activation, Activation::Linear);
        assert_eq!(spec.flat_features().unwrap(), 16);
    }
}
