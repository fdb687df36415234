use rand_chacha::ChaCha8Rng;

use crate::tensor::{Activation, Tape, Tensor, TensorError, Var};

use super::{fan_in_uniform, Bound};

/// Fully connected layer; inputs of any shape are flattened first.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// [out×in]
    pub weight: Tensor,
    /// [out]
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        DenseLayer {
            weight: fan_in_uniform(rng, &[outputs, inputs], inputs),
            bias: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn param_names(&self) -> Vec<String> {
        vec!["weight".into(), "bias".into()]
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Bound<'_>, x: Var) -> Result<Var, TensorError> {
        let (w, b) = (p.next_var()?, p.next_var()?);
        let col = tape.reshape(x, &[self.inputs(), 1])?;
        let y = tape.matmul(w, col)?;
        let y = tape.add_bias(y, b)?;
        let y = tape.reshape(y, &[self.outputs()])?;
        Ok(tape.activation(y, self.activation))
    }
}
