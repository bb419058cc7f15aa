use crate::error::{Error, Result};

/// Dense n-dimensional `f64` value.
///
/// Invariant: `shape.iter().product() == data.len()`, enforced at every
/// constructor. Scalars use shape `[1]`. The `requires_grad` flag only has
/// meaning once the tensor is placed on a [`crate::autodiff::Tape`] as a
/// leaf; gradients live on the tape, not here.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.is_empty() {
            return Err(Error::invalid(format!(
                "tensor shape {:?} does not describe {} values",
                shape,
                data.len()
            )));
        }
        Ok(Tensor { shape, data, requires_grad: false })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel], requires_grad: false }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value], requires_grad: false }
    }

    /// Row-major matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::invalid("ragged rows in matrix constructor"));
            }
            data.extend_from_slice(row);
        }
        Tensor::from_vec(vec![n, d], data)
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::invalid(format!("item() on tensor of shape {:?}", self.shape)))
        }
    }

    /// Rows `[start, start+len)` of a matrix, as a new matrix.
    pub fn rows(&self, start: usize, len: usize) -> Result<Tensor> {
        let [n, d] = self.dims2()?;
        if start + len > n {
            return Err(Error::invalid(format!(
                "row range {}..{} out of bounds for {} rows",
                start,
                start + len,
                n
            )));
        }
        Tensor::from_vec(vec![len, d], self.data[start * d..(start + len) * d].to_vec())
    }

    /// One row of a matrix, as a `[1, d]` matrix.
    pub fn row(&self, index: usize) -> Result<Tensor> {
        self.rows(index, 1)
    }

    /// Shape as `[rows, cols]`, or an error if not 2-d.
    pub fn dims2(&self) -> Result<[usize; 2]> {
        match *self.shape.as_slice() {
            [n, d] => Ok([n, d]),
            _ => Err(Error::invalid(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
