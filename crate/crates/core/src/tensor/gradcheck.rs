use super::{Tape, Tensor, TensorError, Var};

/// Floor on the denominator of [`relative_error`]; keeps near-zero gradients
/// from turning rounding noise into large ratios.
const REL_FLOOR: f64 = 1e-2;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares tape gradients of the scalar `f` against central differences
/// `(f(x+h) − f(x−h)) / 2h` for every element of every input, and returns
/// the worst relative error. All `inputs` are registered as trainable leaves.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |values: &[Tensor]| -> Result<(Tape, Vec<Var>, Var), TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.param(v.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };
    let scalar = |values: &[Tensor]| -> Result<f64, TensorError> {
        let (tape, _, out) = eval(values)?;
        let v = tape.value(out);
        v.item().ok_or_else(|| TensorError::NonScalarLoss(v.shape().to_vec()))
    };

    let (tape, vars, out) = eval(inputs)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (slot, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("inputs are trainable leaves");
        for i in 0..inputs[slot].numel() {
            let orig = inputs[slot].data()[i];
            probe[slot].data_mut()[i] = orig + h;
            let plus = scalar(&probe)?;
            probe[slot].data_mut()[i] = orig - h;
            let minus = scalar(&probe)?;
            probe[slot].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Activation, Padding};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_function_is_near_exact() {
        let x = Tensor::new(&[3], vec![0.3, -1.2, 2.0]).unwrap();
        let err = grad_check(
            |tape, v| {
                let s = tape.mul_scalar(v[0], 3.5);
                Ok(tape.sum(s))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn relu_away_from_kinks() {
        let x = Tensor::new(&[4], vec![0.5, -0.7, 1.3, -2.0]).unwrap();
        let err = grad_check(
            |tape, v| {
                let r = tape.activation(v[0], Activation::Relu);
                let sq = tape.mul(r, r)?;
                Ok(tape.sum(sq))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn tanh_matches_one_minus_square() {
        let x = Tensor::new(&[3], vec![0.1, -0.8, 1.7]).unwrap();
        let err = grad_check(
            |tape, v| {
                let y = tape.activation(v[0], Activation::Tanh);
                Ok(tape.sum(y))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn matmul_and_conv_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 2]);
        let err = grad_check(
            |tape, v| {
                let p = tape.matmul(v[0], v[1])?;
                let sq = tape.mul(p, p)?;
                Ok(tape.sum(sq))
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");

        let x = random(&mut rng, &[2, 8]);
        let k = random(&mut rng, &[3, 2, 3]);
        let bias = random(&mut rng, &[3]);
        for padding in [Padding::Same, Padding::Valid] {
            let err = grad_check(
                |tape, v| {
                    let y = tape.conv1d(v[0], v[1], Some(v[2]), padding)?;
                    let sq = tape.mul(y, y)?;
                    Ok(tape.sum(sq))
                },
                &[x.clone(), k.clone(), bias.clone()],
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "{padding:?}: {err}");
        }
    }
}
