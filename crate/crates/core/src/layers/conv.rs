use rand_chacha::ChaCha8Rng;

use crate::tensor::{Activation, Padding, Tape, Tensor, TensorError, Var};

use super::{fan_in_uniform, Bound};

/// Full-depth 1-D convolution followed by an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1DLayer {
    /// [Cout×Cin×kw]
    pub kernel: Tensor,
    /// [Cout]
    pub bias: Tensor,
    pub padding: Padding,
    pub activation: Activation,
}

impl Conv1DLayer {
    pub fn new(
        cin: usize,
        cout: usize,
        kw: usize,
        padding: Padding,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Conv1DLayer {
            kernel: fan_in_uniform(rng, &[cout, cin, kw], cin * kw),
            bias: Tensor::zeros(&[cout]),
            padding,
            activation,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.kernel, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernel, &mut self.bias]
    }

    pub fn param_names(&self) -> Vec<String> {
        vec!["kernel".into(), "bias".into()]
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Bound<'_>, x: Var) -> Result<Var, TensorError> {
        let (k, b) = (p.next_var()?, p.next_var()?);
        let y = tape.conv1d(x, k, Some(b), self.padding)?;
        Ok(tape.activation(y, self.activation))
    }
}

/// One group of a grouped convolution: which input channels it reads and
/// its own kernel and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGroup {
    pub members: Vec<usize>,
    /// [Gout×Gin×kw], Gin = members.len()
    pub kernel: Tensor,
    /// [Gout]
    pub bias: Tensor,
}

/// Convolution where each group sees only its member channels. Group
/// outputs are concatenated in group order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedConv1DLayer {
    pub groups: Vec<ConvGroup>,
    pub padding: Padding,
    pub activation: Activation,
}

impl GroupedConv1DLayer {
    /// `members[k]` lists group k's input channels; each group emits
    /// `out_per_group` channels. The member lists must partition
    /// `0..in_channels`.
    pub fn new(
        in_channels: usize,
        members: Vec<Vec<usize>>,
        out_per_group: usize,
        kw: usize,
        padding: Padding,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, TensorError> {
        check_partition(in_channels, &members)?;
        let groups = members
            .into_iter()
            .map(|m| {
                let gin = m.len();
                ConvGroup {
                    kernel: fan_in_uniform(rng, &[out_per_group, gin, kw], gin * kw),
                    bias: Tensor::zeros(&[out_per_group]),
                    members: m,
                }
            })
            .collect();
        Ok(GroupedConv1DLayer {
            groups,
            padding,
            activation,
        })
    }

    /// Interior grouped layer: group k reads the `in_per_group` channels
    /// produced by group k of the previous layer.
    pub fn chained(
        k: usize,
        in_per_group: usize,
        out_per_group: usize,
        kw: usize,
        padding: Padding,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, TensorError> {
        let members = (0..k)
            .map(|g| (g * in_per_group..(g + 1) * in_per_group).collect())
            .collect();
        Self::new(k * in_per_group, members, out_per_group, kw, padding, activation, rng)
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn in_channels(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }

    pub fn out_channels(&self) -> usize {
        self.groups.iter().map(|g| g.kernel.shape()[0]).sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.groups.iter().flat_map(|g| [&g.kernel, &g.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.groups
            .iter_mut()
            .flat_map(|g| [&mut g.kernel, &mut g.bias])
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.k())
            .flat_map(|g| [format!("group{}.kernel", g + 1), format!("group{}.bias", g + 1)])
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Bound<'_>, x: Var) -> Result<Var, TensorError> {
        let cin = tape.value(x).shape()[0];
        if cin != self.in_channels() {
            return Err(TensorError::InvalidArgument {
                op: "grouped_conv",
                msg: format!("layer expects {} channels, got {cin}", self.in_channels()),
            });
        }
        let mut outs = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let (k, b) = (p.next_var()?, p.next_var()?);
            let xs = tape.select_rows(x, &g.members)?;
            outs.push(tape.conv1d(xs, k, Some(b), self.padding)?);
        }
        let y = tape.concat_rows(&outs)?;
        Ok(tape.activation(y, self.activation))
    }
}

fn check_partition(n: usize, members: &[Vec<usize>]) -> Result<(), TensorError> {
    let mut seen = vec![false; n];
    for (g, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(TensorError::InvalidArgument {
                op: "grouped_conv",
                msg: format!("group {} is empty", g + 1),
            });
        }
        for &c in m {
            if c >= n || seen[c] {
                return Err(TensorError::InvalidArgument {
                    op: "grouped_conv",
                    msg: format!("channel {c} is out of range or in two groups"),
                });
            }
            seen[c] = true;
        }
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(TensorError::InvalidArgument {
            op: "grouped_conv",
            msg: format!("channel {c} belongs to no group"),
        });
    }
    Ok(())
}

/// Plain or grouped convolution, as used inside a recurrent layer.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvBlock {
    Plain(Conv1DLayer),
    Grouped(GroupedConv1DLayer),
}

impl ConvBlock {
    pub fn in_channels(&self) -> usize {
        match self {
            ConvBlock::Plain(c) => c.in_channels(),
            ConvBlock::Grouped(g) => g.in_channels(),
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            ConvBlock::Plain(c) => c.out_channels(),
            ConvBlock::Grouped(g) => g.out_channels(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            ConvBlock::Plain(c) => c.params(),
            ConvBlock::Grouped(g) => g.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            ConvBlock::Plain(c) => c.params_mut(),
            ConvBlock::Grouped(g) => g.params_mut(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            ConvBlock::Plain(c) => c.param_names(),
            ConvBlock::Grouped(g) => g.param_names(),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Bound<'_>, x: Var) -> Result<Var, TensorError> {
        match self {
            ConvBlock::Plain(c) => c.forward(tape, p, x),
            ConvBlock::Grouped(g) => g.forward(tape, p, x),
        }
    }
}

/// `l` applications of one convolution sharing a single parameter set:
/// `z₁ = σ(W∗x)`, `z_m = σ(W∗(x + z_{m−1}))`, output `z_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentConvLayer {
    pub inner: ConvBlock,
    pub iterations: usize,
}

impl RecurrentConvLayer {
    pub fn new(inner: ConvBlock, iterations: usize) -> Result<Self, TensorError> {
        if iterations == 0 {
            return Err(TensorError::InvalidArgument {
                op: "rcl",
                msg: "iterations must be at least 1".into(),
            });
        }
        if inner.in_channels() != inner.out_channels() {
            return Err(TensorError::InvalidArgument {
                op: "rcl",
                msg: format!(
                    "skip sum needs equal channels, got {} → {}",
                    inner.in_channels(),
                    inner.out_channels()
                ),
            });
        }
        let same = match &inner {
            ConvBlock::Plain(c) => c.padding == Padding::Same,
            ConvBlock::Grouped(g) => g.padding == Padding::Same,
        };
        if !same {
            return Err(TensorError::InvalidArgument {
                op: "rcl",
                msg: "recurrent convolution needs same padding".into(),
            });
        }
        Ok(RecurrentConvLayer { inner, iterations })
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Bound<'_>, x: Var) -> Result<Var, TensorError> {
        let start = p.consumed();
        let mut z = self.inner.forward(tape, p, x)?;
        let used = p.consumed() - start;
        for _ in 1..self.iterations {
            let s = tape.add(x, z)?;
            // replay the same parameter vars
            let shared = &p.vars[start..start + used];
            z = self.inner.forward(tape, &mut Bound::new(shared), s)?;
        }
        Ok(z)
    }
}
