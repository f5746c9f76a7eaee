//! Dense tensors with a small reverse-mode tape.
//!
//! Only the operations the surrogate model needs are provided. There is no
//! broadcasting: binary elementwise ops require identical shapes, and the
//! few broadcast patterns the model uses (per-channel scaling, pooling over
//! spatial axes) are explicit ops.

pub mod conv;
pub mod fft;
pub mod optim;
pub mod params;
pub mod tape;

use crate::error::{Error, Result};

pub use fft::{fft2, ifft2, ifft2_real};
pub use optim::{adam_step, step_decay, AdamState, LrSchedule};
pub use params::{Param, ParamId, ParamSet};
pub use tape::{Tape, Var};

/// Row-major dense array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Interpret as `c × H × W`.
    pub(crate) fn dims3(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Rank {
                op,
                expected: 3,
                got: self.shape.clone(),
            }),
        }
    }
}

/// Complex array stored as separate real and imaginary parts of equal shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    pub re: Tensor,
    pub im: Tensor,
}

impl ComplexTensor {
    pub fn new(re: Tensor, im: Tensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::InvalidArgument(format!(
                "real shape {:?} differs from imaginary shape {:?}",
                re.shape(),
                im.shape()
            )));
        }
        Ok(ComplexTensor { re, im })
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    /// Pack into a `[2, ...shape]` real tensor, the layout used on the tape.
    pub fn to_packed(&self) -> Tensor {
        let mut shape = vec![2];
        shape.extend_from_slice(self.re.shape());
        let mut data = Vec::with_capacity(2 * self.re.numel());
        data.extend_from_slice(self.re.data());
        data.extend_from_slice(self.im.data());
        Tensor { shape, data }
    }

    pub fn from_packed(packed: &Tensor) -> Result<Self> {
        if packed.shape().first() != Some(&2) {
            return Err(Error::InvalidArgument(format!(
                "packed complex tensor needs leading dimension 2, got {:?}",
                packed.shape()
            )));
        }
        let shape = packed.shape()[1..].to_vec();
        let half = packed.numel() / 2;
        Ok(ComplexTensor {
            re: Tensor::new(shape.clone(), packed.data()[..half].to_vec())?,
            im: Tensor::new(shape, packed.data()[half..].to_vec())?,
        })
    }
}
