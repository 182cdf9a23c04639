//! Dense row-major tensors and the two kernels everything else is built on:
//! grouped 2-D cross-correlation and batched matrix multiplication.
//!
//! Both kernels accumulate every output element in a fixed sequential order,
//! so results are reproducible bit-for-bit from run to run.

mod bmm;
mod conv;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

use crate::error::{Error, Result};

pub use bmm::bmm;
pub use conv::{conv2d, conv_output_extent};

/// On-disk element type tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Scalar types a [`Tensor`] can hold.
pub trait Element: Float + Sum + Default + Debug + Send + Sync + 'static {
    const DTYPE: DType;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::F64;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// A contiguous row-major array with an explicit shape.
///
/// An empty shape denotes a scalar holding exactly one element.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.data.len() <= 32 {
            f.debug_struct("Tensor")
                .field("shape", &self.shape)
                .field("data", &self.data)
                .finish()
        } else {
            f.debug_struct("Tensor")
                .field("shape", &self.shape)
                .field("len", &self.data.len())
                .finish_non_exhaustive()
        }
    }
}

fn checked_numel(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if let Some(axis) = shape.iter().position(|&d| d == 0) {
            return Err(Error::invalid(
                "Tensor::new",
                format!("axis {axis} of shape {shape:?} has zero extent"),
            ));
        }
        let expected = checked_numel(shape).ok_or_else(|| {
            Error::invalid("Tensor::new", format!("shape {shape:?} overflows usize"))
        })?;
        if expected != data.len() {
            return Err(Error::ElementCount {
                shape: shape.to_vec(),
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = checked_numel(shape).expect("shape overflows usize");
        Self::new(shape, vec![value; n]).expect("valid shape")
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Self {
        let n = checked_numel(shape).expect("shape overflows usize");
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for axis in (0..shape.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < shape[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Self::new(shape, data).expect("valid shape")
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

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .zip(self.strides())
            .map(|((&i, &d), s)| {
                assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
                i * s
            })
            .sum()
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        match checked_numel(shape) {
            Some(n) if n == self.data.len() => Self::new(shape, self.data),
            _ => Err(Error::invalid(
                "reshape",
                format!(
                    "cannot view {} elements of shape {:?} as {:?}",
                    self.data.len(),
                    self.shape,
                    shape
                ),
            )),
        }
    }

    /// Materializes a transposition: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank
            || axes
                .iter()
                .any(|&a| a >= rank || std::mem::replace(&mut seen[a], true))
        {
            return Err(Error::invalid(
                "permute",
                format!("{axes:?} is not a permutation of 0..{rank}"),
            ));
        }
        let in_strides = self.strides();
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();

        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; rank];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[src]);
            for axis in (0..rank).rev() {
                idx[axis] += 1;
                src += src_strides[axis];
                if idx[axis] < out_shape[axis] {
                    break;
                }
                src -= src_strides[axis] * out_shape[axis];
                idx[axis] = 0;
            }
        }
        Self::new(&out_shape, data)
    }

    /// Copies out the sub-tensor at position `i` of the leading axis.
    pub fn index_outer(&self, i: usize) -> Self {
        assert!(
            self.rank() >= 1 && i < self.shape[0],
            "outer index out of range"
        );
        let inner: usize = self.shape[1..].iter().product();
        Self {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        }
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("stack", "nothing to stack"))?;
        let mut data = Vec::with_capacity(first.numel() * parts.len());
        for p in parts {
            if p.shape != first.shape {
                return Err(Error::invalid(
                    "stack",
                    format!("shape {:?} differs from {:?}", p.shape, first.shape),
                ));
            }
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first.shape);
        Self::new(&shape, data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::invalid(
                "zip_map",
                format!("shapes {:?} and {:?} differ", self.shape, other.shape),
            ));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Largest absolute elementwise difference, computed in f64.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub(crate) fn expect_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.rank() == rank {
            Ok(())
        } else {
            Err(Error::Rank {
                op,
                expected: rank,
                got: self.rank(),
            })
        }
    }
}

pub(crate) fn expect_extent(
    op: &'static str,
    axis: &'static str,
    expected: usize,
    got: usize,
) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op,
            axis,
            expected,
            got,
        })
    }
}

pub(crate) fn expect_divisible(
    op: &'static str,
    what: &'static str,
    value: usize,
    divisor: usize,
) -> Result<()> {
    if divisor != 0 && value.is_multiple_of(divisor) {
        Ok(())
    } else {
        Err(Error::NotDivisible {
            op,
            what,
            value,
            divisor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_buffers() {
        assert!(matches!(
            Tensor::<f32>::new(&[2, 3], vec![0.0; 5]),
            Err(Error::ElementCount {
                expected: 6,
                got: 5,
                ..
            })
        ));
        assert!(Tensor::<f32>::new(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn scalar_has_one_element() {
        let s = Tensor::scalar(1.5f32);
        assert_eq!(s.rank(), 0);
        assert_eq!(s.numel(), 1);
    }

    #[test]
    fn permute_matches_index_mapping() {
        let t = Tensor::<f64>::from_fn(&[2, 3, 4], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64);
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        for a in 0..4 {
            for b in 0..2 {
                for c in 0..3 {
                    assert_eq!(p.at(&[a, b, c]), t.at(&[b, c, a]));
                }
            }
        }
        assert!(t.permute(&[0, 0, 1]).is_err());
        assert!(t.permute(&[0, 1]).is_err());
    }

    #[test]
    fn reshape_keeps_element_count() {
        let t = Tensor::<f32>::zeros(&[4, 6]);
        assert_eq!(t.clone().reshape(&[2, 3, 4]).unwrap().shape(), &[2, 3, 4]);
        assert!(t.reshape(&[5, 5]).is_err());
    }

    #[test]
    fn stack_and_index_outer_invert() {
        let a = Tensor::<f32>::from_fn(&[2, 2], |i| (i[0] + 2 * i[1]) as f32);
        let b = a.scale(3.0);
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2]);
        assert_eq!(s.index_outer(0), a);
        assert_eq!(s.index_outer(1), b);
    }
}
