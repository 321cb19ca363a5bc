use std::sync::Arc;

use super::{NumericsError, Result};

/// Immutable dense tensor: a shape and row-major f64 storage.
///
/// Clones are cheap (the buffer is shared). All constructors reject
/// non-finite entries, so a `Tensor` always holds finite data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(NumericsError::Invalid(format!(
                "zero extent in shape {shape:?}"
            )));
        }
        if numel != data.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "new",
                detail: format!("shape {shape:?} needs {numel} entries, got {}", data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(NumericsError::NonFinite { op: "new" });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(vec![1], vec![v])
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape,
            data: Arc::new(vec![0.0; numel]),
        }
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape,
            data: Arc::new(vec![1.0; numel]),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(NumericsError::Invalid("from_rows: no rows".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::ShapeMismatch {
                op: "from_rows",
                detail: "ragged rows".into(),
            });
        }
        Self::new(
            vec![rows.len(), cols],
            rows.iter().flatten().copied().collect(),
        )
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(NumericsError::ShapeMismatch {
                op: "item",
                detail: format!("expected one element, shape {:?}", self.shape),
            });
        }
        Ok(self.data[0])
    }

    /// Rank-2 accessor; row-major.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Extract row `i` of a rank-2 tensor as a plain vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        self.data[i * cols..(i + 1) * cols].to_vec()
    }

    /// Reinterpret the same storage under a new shape with equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(NumericsError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {shape:?}", self.shape),
            });
        }
        Ok(Self {
            shape,
            data: Arc::clone(&self.data),
        })
    }

    /// Replace one entry, returning a new tensor. Used by the
    /// finite-difference oracle to probe single coordinates.
    pub fn with_entry(&self, idx: usize, v: f64) -> Result<Self> {
        let mut data = self.data.as_ref().clone();
        data[idx] = v;
        Self::new(self.shape.clone(), data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// numpy-style broadcast of two shapes, trailing-aligned.
pub(crate) fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let ea = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let eb = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if ea == eb {
            ea
        } else if ea == 1 {
            eb
        } else if eb == 1 {
            ea
        } else {
            return None;
        };
    }
    Some(out)
}

/// Strides (in elements) mapping an output coordinate of `out_shape` back
/// into a tensor of `in_shape`; broadcast dimensions get stride 0.
pub(crate) fn broadcast_strides(in_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let offset = out_shape.len() - in_shape.len();
    let mut native = vec![0usize; in_shape.len()];
    let mut acc = 1usize;
    for i in (0..in_shape.len()).rev() {
        native[i] = acc;
        acc *= in_shape[i];
    }
    let mut out = vec![0usize; out_shape.len()];
    for i in 0..out_shape.len() {
        if i >= offset && in_shape[i - offset] != 1 {
            out[i] = native[i - offset];
        }
    }
    out
}

/// Iterate an output shape while tracking the linear index into a
/// broadcast input. Calls `f(out_idx, in_idx)` once per output element.
pub(crate) fn for_each_broadcast(
    out_shape: &[usize],
    strides: &[usize],
    mut f: impl FnMut(usize, usize),
) {
    let numel: usize = out_shape.iter().product();
    let rank = out_shape.len();
    let mut coord = vec![0usize; rank];
    let mut in_idx = 0usize;
    for out_idx in 0..numel {
        f(out_idx, in_idx);
        for d in (0..rank).rev() {
            coord[d] += 1;
            in_idx += strides[d];
            if coord[d] < out_shape[d] {
                break;
            }
            in_idx -= strides[d] * out_shape[d];
            coord[d] = 0;
        }
    }
}

/// Sum `grad` (shaped `from`) down to `to`, inverting a broadcast.
pub(crate) fn reduce_to_shape(grad: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    let to_numel: usize = to.iter().product();
    let mut out = vec![0.0; to_numel];
    let strides = broadcast_strides(to, from);
    for_each_broadcast(from, &strides, |from_idx, to_idx| {
        out[to_idx] += grad[from_idx];
    });
    out
}
