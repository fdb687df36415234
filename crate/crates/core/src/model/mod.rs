//! Network assembly from a [`ModelSpec`], parameter access and checkpoints.

mod checkpoint;
mod spec;

pub use checkpoint::{Checkpoint, NamedParam, CHECKPOINT_FORMAT};
pub use spec::{Family, Grouping, LayerGeometry, ModelSpec, Preset, StageSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::layers::{
    bind, Bound, ClusteringCoeffLayer, Conv1DLayer, ConvBlock, DenseLayer, GroupedConv1DLayer, RecurrentConvLayer,
};
use crate::spectral::GroupAssignment;
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Samples evaluated per tape in [`Model::predict_many`].
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("explicit grouping requires a group assignment")]
    MissingAssignment,
    #[error("group assignment does not fit the model: {0}")]
    AssignmentMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Coeff(ClusteringCoeffLayer),
    Conv(ConvBlock),
    Recurrent(RecurrentConvLayer),
    /// Max pooling with equal window and stride.
    Pool(usize),
    Dense(DenseLayer),
}

impl Layer {
    fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Coeff(l) => l.params(),
            Layer::Conv(l) => l.params(),
            Layer::Recurrent(l) => l.inner.params(),
            Layer::Pool(_) => Vec::new(),
            Layer::Dense(l) => l.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Coeff(l) => l.params_mut(),
            Layer::Conv(l) => l.params_mut(),
            Layer::Recurrent(l) => l.inner.params_mut(),
            Layer::Pool(_) => Vec::new(),
            Layer::Dense(l) => l.params_mut(),
        }
    }

    fn param_names(&self) -> Vec<String> {
        match self {
            Layer::Coeff(l) => l.param_names(),
            Layer::Conv(l) => l.param_names(),
            Layer::Recurrent(l) => l.inner.param_names(),
            Layer::Pool(_) => Vec::new(),
            Layer::Dense(l) => l.param_names(),
        }
    }

    fn forward(&self, tape: &mut Tape, p: &mut Bound<'_>, x: Var) -> Result<Var, TensorError> {
        match self {
            Layer::Coeff(l) => l.forward(tape, p, x),
            Layer::Conv(l) => l.forward(tape, p, x),
            Layer::Recurrent(l) => l.forward(tape, p, x),
            Layer::Pool(w) => tape.maxpool1d(x, *w, *w),
            Layer::Dense(l) => l.forward(tape, p, x),
        }
    }
}

/// A built network: the spec it came from, the seed used to initialize
/// it, and the layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub assignment: Option<GroupAssignment>,
    pub seed: u64,
    /// Layers in execution order with their checkpoint name prefixes.
    pub layers: Vec<(String, Layer)>,
}

/// Builds and initializes the network described by `spec`. Explicit
/// grouping takes its first-stage groups from `assignment`.
pub fn build_model(spec: &ModelSpec, assignment: Option<&GroupAssignment>, seed: u64) -> Result<Model, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (kw, pad, act) = (spec.kernel_width, spec.padding, spec.hidden_activation);
    let k = spec.k;
    let members = match spec.grouping {
        Grouping::Explicit => Some(explicit_members(spec, assignment)?),
        _ => None,
    };

    let mut layers = Vec::new();
    let mut in_channels = spec.input_channels;
    let mut in_per_group = spec.input_channels;
    if spec.grouping == Grouping::Coeff {
        let l = ClusteringCoeffLayer::new(spec.input_channels, k, kw, pad, spec.coeff_activation, &mut rng);
        layers.push(("coeff".to_string(), Layer::Coeff(l)));
        in_channels = spec.input_channels * k;
    }

    let conv = |rng: &mut ChaCha8Rng, stage: usize, cin: usize, cin_pg: usize, cout_pg: usize| -> Result<ConvBlock, ModelError> {
        Ok(match (spec.grouping, &members) {
            (Grouping::None, _) => ConvBlock::Plain(Conv1DLayer::new(cin, cout_pg, kw, pad, act, rng)),
            (Grouping::Explicit, Some(m)) if stage == 0 && cin == spec.input_channels => {
                ConvBlock::Grouped(GroupedConv1DLayer::new(cin, m.clone(), cout_pg, kw, pad, act, rng)?)
            }
            _ => ConvBlock::Grouped(GroupedConv1DLayer::chained(k, cin_pg, cout_pg, kw, pad, act, rng)?),
        })
    };

    for (i, stage) in spec.stages.iter().enumerate() {
        let n = i + 1;
        if stage.pool > 1 {
            layers.push((format!("pool{n}"), Layer::Pool(stage.pool)));
        }
        let out_pg = stage.channels;
        let out = spec.stage_channels(i);
        if spec.is_recurrent_stage(i) {
            // explicit input groups are not contiguous, so they always get a projection
            if in_channels != out || (i == 0 && spec.grouping == Grouping::Explicit) {
                let proj = conv(&mut rng, i, in_channels, in_per_group, out_pg)?;
                layers.push((format!("proj{n}"), Layer::Conv(proj)));
            }
            let inner = conv(&mut rng, i + 1, out, out_pg, out_pg)?;
            let rcl = RecurrentConvLayer::new(inner, spec.rcl_iterations)?;
            layers.push((format!("rcl{n}"), Layer::Recurrent(rcl)));
        } else {
            let c = conv(&mut rng, i, in_channels, in_per_group, out_pg)?;
            layers.push((format!("conv{n}"), Layer::Conv(c)));
        }
        in_channels = out;
        in_per_group = out_pg;
    }

    let mut width = spec.flat_features()?;
    for (d, &units) in spec.dense.iter().enumerate() {
        let l = DenseLayer::new(width, units, spec.hidden_activation, &mut rng);
        layers.push((format!("dense{}", d + 1), Layer::Dense(l)));
        width = units;
    }
    let out = DenseLayer::new(width, 1, spec.output_activation, &mut rng);
    layers.push(("output".to_string(), Layer::Dense(out)));

    Ok(Model {
        spec: spec.clone(),
        assignment: assignment.cloned(),
        seed,
        layers,
    })
}

fn explicit_members(spec: &ModelSpec, assignment: Option<&GroupAssignment>) -> Result<Vec<Vec<usize>>, ModelError> {
    let a = assignment.ok_or(ModelError::MissingAssignment)?;
    if a.len() != spec.input_channels {
        return Err(ModelError::AssignmentMismatch(format!(
            "{} labels for {} input channels",
            a.len(),
            spec.input_channels
        )));
    }
    if a.k() != spec.k {
        return Err(ModelError::AssignmentMismatch(format!("{} groups, spec has k = {}", a.k(), spec.k)));
    }
    let members: Vec<Vec<usize>> = (0..a.k()).map(|g| a.members(g)).collect();
    if let Some(g) = members.iter().position(Vec::is_empty) {
        return Err(ModelError::AssignmentMismatch(format!("group {} is empty", g + 1)));
    }
    Ok(members)
}

impl Model {
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|(_, l)| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|(_, l)| l.params_mut()).collect()
    }

    /// Dotted names aligned with [`Model::params`].
    pub fn param_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .flat_map(|(prefix, l)| l.param_names().into_iter().map(move |n| format!("{prefix}.{n}")))
            .collect()
    }

    /// Number of trainable scalars, biases and membership logits included.
    pub fn count_params(&self) -> usize {
        self.params().iter().map(|t| t.numel()).sum()
    }

    /// Current membership matrix of a coeff-mode model.
    pub fn coefficients(&self) -> Option<Tensor> {
        self.layers.iter().find_map(|(_, l)| match l {
            Layer::Coeff(c) => Some(c.coefficients()),
            _ => None,
        })
    }

    /// Registers all parameters as trainable leaves.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        bind(tape, self.params())
    }

    /// Activations entering the first dense layer for one sample `x` [C×T].
    pub fn forward_features(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var, TensorError> {
        let mut p = Bound::new(vars);
        let mut h = x;
        for (_, l) in self.layers.iter().take_while(|(_, l)| !matches!(l, Layer::Dense(_))) {
            h = l.forward(tape, &mut p, h)?;
        }
        Ok(h)
    }

    /// Scalar prediction [1] for one sample `x` [C×T].
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var, TensorError> {
        let shape = tape.value(x).shape();
        if shape != [self.spec.input_channels, self.spec.window] {
            return Err(TensorError::ShapeMismatch {
                op: "model_input",
                left: vec![self.spec.input_channels, self.spec.window],
                right: shape.to_vec(),
            });
        }
        let mut p = Bound::new(vars);
        let mut h = x;
        for (_, l) in &self.layers {
            h = l.forward(tape, &mut p, h)?;
        }
        Ok(h)
    }

    pub fn predict(&self, x: &Tensor) -> Result<f64, TensorError> {
        Ok(self.predict_many(std::slice::from_ref(x))?[0])
    }

    pub fn predict_many(&self, inputs: &[Tensor]) -> Result<Vec<f64>, TensorError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(PREDICT_CHUNK) {
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            for x in chunk {
                let xv = tape.constant(x.clone());
                let y = self.forward(&mut tape, &vars, xv)?;
                out.push(tape.value(y).data()[0]);
            }
        }
        Ok(out)
    }

    /// Output geometry of every layer, as planned by the spec.
    pub fn geometry(&self) -> Result<Vec<LayerGeometry>, ModelError> {
        self.spec.geometry()
    }
}

/// Number of trainable scalars of `model`.
pub fn count_params(model: &Model) -> usize {
    model.count_params()
}
