//! Dense tensors, the computation tape, and the parameter store.
//!
//! Values are row-major with explicit dims. Gradient tracking lives on the
//! [`ParamStore`]: a [`Tape`] records operations over copies of the stored
//! parameters and hands back [`Gradients`] that the store accumulates.

mod gradcheck;
mod kernels;
mod params;
mod real;
pub mod stt;
mod tape;

pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckConfig, GradCheckReport, GradProbe, Stencil};
pub use kernels::{conv_out_len, gelu, gelu_grad};
pub use params::{init, ParamId, ParamStore};
pub use real::{DType, Real};
pub use tape::{matmul, softmax_rows, AttentionMask, Gradients, Tape, Var};

use crate::error::{Error, Result};

/// Dense row-major array with an optional gradient buffer.
///
/// `requires_grad` is represented by the presence of the gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F = f32> {
    dims: Vec<usize>,
    data: Vec<F>,
    grad: Option<Vec<F>>,
}

impl<F: Real> Tensor<F> {
    pub fn new(dims: impl Into<Vec<usize>>, data: Vec<F>) -> Result<Self> {
        let dims = dims.into();
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                lhs: dims,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            dims,
            data,
            grad: None,
        })
    }

    pub fn from_f64(dims: impl Into<Vec<usize>>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&x| F::of(x)).collect())
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Self {
        let dims = dims.into();
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![F::zero(); n],
            grad: None,
        }
    }

    pub fn full(dims: impl Into<Vec<usize>>, value: F) -> Self {
        let mut t = Self::zeros(dims);
        t.data.iter_mut().for_each(|v| *v = value);
        t
    }

    pub fn from_fn(dims: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> F) -> Self {
        let dims = dims.into();
        let n: usize = dims.iter().product();
        Tensor {
            dims,
            data: (0..n).map(&mut f).collect(),
            grad: None,
        }
    }

    pub fn scalar(value: F) -> Self {
        Tensor {
            dims: vec![1],
            data: vec![value],
            grad: None,
        }
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn([n, n], |i| if i / n == i % n { F::one() } else { F::zero() })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    /// Enables or disables gradient tracking. Enabling allocates a zeroed buffer.
    pub fn set_requires_grad(&mut self, on: bool) {
        match (on, self.grad.is_some()) {
            (true, false) => self.grad = Some(vec![F::zero(); self.data.len()]),
            (false, true) => self.grad = None,
            _ => {}
        }
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [F]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = F::zero());
        }
    }

    pub fn reshape(mut self, dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.dims,
                rhs: dims,
            });
        }
        self.dims = dims;
        Ok(self)
    }

    /// Element at a multi-index.
    pub fn at(&self, index: &[usize]) -> F {
        debug_assert_eq!(index.len(), self.dims.len());
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.dims) {
            debug_assert!(i < d);
            flat = flat * d + i;
        }
        self.data[flat]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts to another precision. Gradient buffers are not carried over.
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| G::of(v.as_f64())).collect(),
            grad: None,
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Bitwise equality of dims and values.
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_numel() {
        assert!(Tensor::<f32>::new([2, 3], vec![0.0; 6]).is_ok());
        let err = Tensor::<f32>::new([2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn grad_buffer_follows_flag() {
        let mut t = Tensor::<f64>::zeros([2, 2]);
        assert!(t.grad().is_none());
        t.set_requires_grad(true);
        assert_eq!(t.grad().unwrap().len(), 4);
        t.set_requires_grad(false);
        assert!(t.grad().is_none());
    }

    #[test]
    fn multi_index_is_row_major() {
        let t = Tensor::<f32>::from_fn([2, 3, 4], |i| i as f32);
        assert_eq!(t.at(&[1, 2, 3]), 23.0);
        assert_eq!(t.at(&[0, 1, 0]), 4.0);
    }
}
