//! Dense row-major tensors and a reverse-mode differentiation tape.

mod scalar;
mod tape;

pub use scalar::{Dual, Real};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },
    #[error("index {index} out of range for extent {extent}")]
    Index { index: usize, extent: usize },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("tape already consumed by a previous backward pass")]
    StaleTape,
    #[error("variable {0} is not on this tape")]
    UnknownVar(usize),
}

pub(crate) fn dim_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Dimension {
        op,
        detail: detail.into(),
    }
}

/// A dense row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(dim_err(
                "tensor",
                format!("shape {shape:?} needs {n} elements, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(x: T) -> Self {
        Self {
            shape: vec![],
            data: vec![x],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a 2-D tensor from equally long rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(dim_err("from_rows", "ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(dim_err(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Primal part as `f64`.
    pub fn re(&self) -> Tensor<f64> {
        self.map(|x| x.re())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.re().is_finite())
    }
}

impl Tensor<f64> {
    pub fn lift<T: Real>(&self) -> Tensor<T> {
        self.map(T::from_f64)
    }

    pub fn max_abs_diff(&self, other: &Tensor<f64>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Tensor<Dual> {
    /// Tangent part.
    pub fn eps(&self) -> Tensor<f64> {
        self.map(|x| x.eps)
    }
}
