//! Dense fp64 tensors and a reverse-mode gradient tape.

mod gradcheck;
mod tape;

pub use gradcheck::{grad_check, relative_error};
pub use tape::{Activation, ElementwiseOp, Gradients, Padding, Tape, Var};
pub(crate) use tape::softmax;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("shape {0:?} has a zero dimension")]
    EmptyDimension(Vec<usize>),
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
}

/// Dense row-major fp64 array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting empty dimensions, length mismatches and
    /// non-finite entries.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        check_shape(shape)?;
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        let t = Tensor {
            shape: shape.to_vec(),
            data,
        };
        t.validate()?;
        Ok(t)
    }

    /// Internal constructor for values produced by finite arithmetic on
    /// validated operands.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![0.0; n])
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_parts(vec![1], vec![value])
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self, TensorError> {
        let n = data.len();
        Tensor::new(&[n], data)
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(TensorError::InvalidArgument {
                op: "from_rows",
                msg: "ragged rows".into(),
            });
        }
        Tensor::new(&[r, c], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    /// Element of a 2-D tensor.
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    /// Reports the first NaN or infinite element.
    pub fn validate(&self) -> Result<(), TensorError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(TensorError::NonFinite {
                index,
                value: self.data[index],
            }),
            None => Ok(()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        check_shape(shape)?;
        if shape.iter().product::<usize>() != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape.clone(),
                right: shape.to_vec(),
            });
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub(crate) fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<(), TensorError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::EmptyDimension(shape.to_vec()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_bad_lengths() {
        assert!(matches!(
            Tensor::new(&[2], vec![1.0, f64::NAN]),
            Err(TensorError::NonFinite { index: 1, .. })
        ));
        assert!(matches!(
            Tensor::new(&[2, 2], vec![1.0; 3]),
            Err(TensorError::LengthMismatch { .. })
        ));
        assert!(Tensor::new(&[0], vec![]).is_err());
    }

    #[test]
    fn validate_flags_mutated_infinity() {
        let mut t = Tensor::zeros(&[3]);
        assert!(t.validate().is_ok());
        t.data_mut()[2] = f64::INFINITY;
        assert!(!t.is_finite());
        assert!(t.validate().is_err());
    }

    #[test]
    fn reshape_keeps_data() {
        let t = Tensor::new(&[2, 3], (0..6).map(f64::from).collect()).unwrap();
        let r = t.reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[4]).is_err());
    }
}
