use rand_chacha::ChaCha8Rng;

use crate::tensor::{Activation, Tape, Tensor, TensorError, Var};

use super::{fan_in_uniform, Bound};

/// Two-layer network over N grouped input vectors of dimension D:
///
/// ```text
/// h_j = σ(Σ_i u_{i,j} · x_iᵀ w¹_{i,j} + b¹_j)      j = 1..K
/// y   = σ(Σ_j h_j · w²_j + b²)
/// ```
///
/// Used to check the membership gradient `∂Err/∂u_{i,j}` numerically.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGroupedDense {
    /// [N×K×D]: `w¹_{i,j}` is the D-vector at `(i, j)`.
    pub w1: Tensor,
    /// [K]
    pub b1: Tensor,
    /// [K×1]
    pub w2: Tensor,
    /// [1]
    pub b2: Tensor,
    pub activation: Activation,
}

impl ToyGroupedDense {
    pub fn new(n: usize, k: usize, d: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        ToyGroupedDense {
            w1: fan_in_uniform(rng, &[n, k, d], d),
            b1: fan_in_uniform(rng, &[k], 1),
            w2: fan_in_uniform(rng, &[k, 1], k),
            b2: fan_in_uniform(rng, &[1], 1),
            activation,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    /// Hidden activations `h` [K] and output `y` [1] for inputs `x` [N×D]
    /// and memberships `u` [N×K].
    pub fn forward(&self, tape: &mut Tape, p: &mut Bound<'_>, x: Var, u: Var) -> Result<(Var, Var), TensorError> {
        let (w1, b1, w2, b2) = (p.next_var()?, p.next_var()?, p.next_var()?, p.next_var()?);
        let (n, k, d) = (self.w1.shape()[0], self.w1.shape()[1], self.w1.shape()[2]);
        let (xs, us) = (tape.value(x).shape().to_vec(), tape.value(u).shape().to_vec());
        if xs != [n, d] || us != [n, k] {
            return Err(TensorError::InvalidArgument {
                op: "toy_grouped_dense",
                msg: format!("expected x [{n}×{d}] and U [{n}×{k}], got {xs:?} and {us:?}"),
            });
        }
        // row i·K + j of the repeated input is x_i
        let rows: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect();
        let xr = tape.select_rows(x, &rows)?;
        let w1r = tape.reshape(w1, &[n * k, d])?;
        let prod = tape.mul(xr, w1r)?;
        let dots = tape.sum_rows(prod)?;
        let dots = tape.reshape(dots, &[n, k])?;
        let weighted = tape.mul(u, dots)?;
        let by_group = tape.transpose(weighted)?;
        let pre_h = tape.sum_rows(by_group)?;
        let pre_h = tape.add(pre_h, b1)?;
        let h = tape.activation(pre_h, self.activation);
        let hr = tape.reshape(h, &[1, k])?;
        let y = tape.matmul(hr, w2)?;
        let y = tape.reshape(y, &[1])?;
        let y = tape.add(y, b2)?;
        Ok((h, tape.activation(y, self.activation)))
    }

    /// `½(y − t)²`
    pub fn error(&self, tape: &mut Tape, y: Var, target: f64) -> Result<Var, TensorError> {
        let t = tape.constant(Tensor::scalar(target));
        let d = tape.sub(y, t)?;
        let sq = tape.mul(d, d)?;
        Ok(tape.mul_scalar(sq, 0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{bind, uniform};
    use rand::SeedableRng;

    fn eval(net: &ToyGroupedDense, x: &Tensor, u: &Tensor) -> (Tensor, f64) {
        let mut tape = Tape::new();
        let vars = bind(&mut tape, net.params());
        let (xv, uv) = (tape.constant(x.clone()), tape.constant(u.clone()));
        let (h, y) = net.forward(&mut tape, &mut Bound::new(&vars), xv, uv).unwrap();
        (tape.value(h).clone(), tape.value(y).data()[0])
    }

    #[test]
    fn hard_assignment_isolates_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = ToyGroupedDense::new(4, 2, 3, Activation::Linear, &mut rng);
        let x = uniform(&mut rng, &[4, 3], 1.0);
        // variables 0,1 → group 0; 2,3 → group 1
        let u = Tensor::new(&[4, 2], vec![1., 0., 1., 0., 0., 1., 0., 1.]).unwrap();
        let (h, _) = eval(&net, &x, &u);
        let mut x2 = x.clone();
        for v in &mut x2.data_mut()[6..] {
            *v += 5.0;
        }
        let (h2, _) = eval(&net, &x2, &u);
        assert_eq!(h.data()[0], h2.data()[0]);
        assert_ne!(h.data()[1], h2.data()[1]);

        let direct: f64 = (0..2)
            .map(|i| (0..3).map(|e| x.at2(i, e) * net.w1.data()[(i * 2) * 3 + e]).sum::<f64>())
            .sum::<f64>()
            + net.b1.data()[0];
        assert!((h.data()[0] - direct).abs() < 1e-14);
    }

    #[test]
    fn zero_first_layer_weights_give_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = ToyGroupedDense::new(3, 2, 4, Activation::Tanh, &mut rng);
        net.w1 = Tensor::zeros(&[3, 2, 4]);
        let x = uniform(&mut rng, &[3, 4], 3.0);
        let u = Tensor::new(&[3, 2], vec![0.2, 0.8, 0.5, 0.5, 0.9, 0.1]).unwrap();
        let (h, _) = eval(&net, &x, &u);
        for j in 0..2 {
            assert_eq!(h.data()[j], net.b1.data()[j].tanh());
        }
    }
}
