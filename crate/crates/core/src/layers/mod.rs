//! Network layers built on the gradient tape.
//!
//! Each layer owns its parameter tensors. To run a layer, bind its
//! parameters onto a tape with [`bind`] and pass the resulting [`Bound`]
//! cursor to `forward`; the cursor yields vars in the order of `params()`.

mod coeff;
mod conv;
mod dense;
mod toy;

pub use coeff::ClusteringCoeffLayer;
pub use conv::{Conv1DLayer, ConvBlock, ConvGroup, GroupedConv1DLayer, RecurrentConvLayer};
pub use dense::DenseLayer;
pub use toy::ToyGroupedDense;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Parameter vars handed out in registration order.
#[derive(Debug)]
pub struct Bound<'a> {
    vars: &'a [Var],
    pos: usize,
}

impl<'a> Bound<'a> {
    pub fn new(vars: &'a [Var]) -> Self {
        Bound { vars, pos: 0 }
    }

    pub fn next_var(&mut self) -> Result<Var, TensorError> {
        let v = self.vars.get(self.pos).copied().ok_or(TensorError::InvalidArgument {
            op: "bind",
            msg: "parameter list exhausted".into(),
        })?;
        self.pos += 1;
        Ok(v)
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

/// Registers every tensor as a trainable leaf.
pub fn bind<'t>(tape: &mut Tape, params: impl IntoIterator<Item = &'t Tensor>) -> Vec<Var> {
    params.into_iter().map(|t| tape.param(t.clone())).collect()
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// `U(−1/√fan_in, 1/√fan_in)` weights.
pub(crate) fn fan_in_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    uniform(rng, shape, 1.0 / (fan_in as f64).sqrt())
}
