use rand_chacha::ChaCha8Rng;

use crate::tensor::{softmax, Activation, Padding, Tape, Tensor, TensorError, Var};

use super::{fan_in_uniform, uniform, Bound};

/// Initial logits are drawn from `U(−LOGIT_NOISE, LOGIT_NOISE)`.
const LOGIT_NOISE: f64 = 0.01;

/// Soft grouping layer. Each of the K groups convolves every input
/// variable with the group's shared kernel, scaled by the variable's
/// membership `u_{i,k}`:
///
/// ```text
/// h_{k,i} = σ(u_{i,k} · (W^k ∗ x_i) + b^k)
/// ```
///
/// `U` is the row-wise softmax of free logits, so each row is a point on
/// the probability simplex. Output channels are group-major: `k·N + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringCoeffLayer {
    /// [N×K]
    pub logits: Tensor,
    /// K kernels of shape [1×1×kw]
    pub kernels: Vec<Tensor>,
    /// K biases of shape [1]
    pub biases: Vec<Tensor>,
    pub padding: Padding,
    pub activation: Activation,
}

impl ClusteringCoeffLayer {
    pub fn new(n: usize, k: usize, kw: usize, padding: Padding, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let logits = uniform(rng, &[n, k], LOGIT_NOISE);
        let kernels = (0..k).map(|_| fan_in_uniform(rng, &[1, 1, kw], kw)).collect();
        ClusteringCoeffLayer {
            logits,
            kernels,
            biases: vec![Tensor::zeros(&[1]); k],
            padding,
            activation,
        }
    }

    pub fn n(&self) -> usize {
        self.logits.shape()[0]
    }

    pub fn k(&self) -> usize {
        self.logits.shape()[1]
    }

    /// Current membership matrix `U` [N×K].
    pub fn coefficients(&self) -> Tensor {
        let k = self.k();
        let data = self.logits.data().chunks(k).flat_map(softmax).collect();
        Tensor::from_parts(self.logits.shape().to_vec(), data)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = vec![&self.logits];
        for (k, b) in self.kernels.iter().zip(&self.biases) {
            p.push(k);
            p.push(b);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = vec![&mut self.logits];
        for (k, b) in self.kernels.iter_mut().zip(self.biases.iter_mut()) {
            p.push(k);
            p.push(b);
        }
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["logits".to_string()];
        for g in 1..=self.k() {
            names.push(format!("group{g}.kernel"));
            names.push(format!("group{g}.bias"));
        }
        names
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Bound<'_>, x: Var) -> Result<Var, TensorError> {
        let n = tape.value(x).shape()[0];
        if n != self.n() {
            return Err(TensorError::InvalidArgument {
                op: "coeff_layer",
                msg: format!("layer has {} variables, input has {n}", self.n()),
            });
        }
        let logits = p.next_var()?;
        let u = tape.softmax_rows(logits)?;
        let ut = tape.transpose(u)?;
        let kw = self.kernels[0].numel();
        let mut outs = Vec::with_capacity(self.k());
        for g in 0..self.k() {
            let (kernel, bias) = (p.next_var()?, p.next_var()?);
            let ug = tape.select_rows(ut, &[g])?;
            let ug = tape.reshape(ug, &[n])?;
            let kv = tape.reshape(kernel, &[kw])?;
            let h = tape.depthwise_conv1d(x, kv, self.padding)?;
            let h = tape.scale_rows(h, ug)?;
            outs.push(tape.add_bias(h, bias)?);
        }
        let y = tape.concat_rows(&outs)?;
        Ok(tape.activation(y, self.activation))
    }
}
