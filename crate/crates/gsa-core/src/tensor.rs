//! Minimal dense tensor: a shape vector over contiguous row-major storage.
//!
//! Rank is almost always 1 or 2 here; the time axis is axis 0. Kernels and
//! layers work on raw rows via [`Tensor::row`] and the primitives in
//! [`crate::linalg`], so this type stays a thin container with shape checks
//! at the API boundary.

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Rng;
use crate::scalar::{exp_slice, sigmoid, swish, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Tensor<T> {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::ZERO; len],
        }
    }

    pub fn full(shape: &[usize], v: T) -> Tensor<T> {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Tensor<T>> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Test convenience: build from f64 literals at any width.
    pub fn from_f64s(shape: &[usize], vals: &[f64]) -> Result<Tensor<T>> {
        Tensor::from_vec(shape, vals.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    /// Rows of a rank-2 tensor (axis 0).
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    /// Columns of a rank-2 tensor (axis 1).
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
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

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        let w = self.shape[self.rank() - 1];
        &self.data[i * w..(i + 1) * w]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.shape[self.rank() - 1];
        &mut self.data[i * w..(i + 1) * w]
    }

    #[inline]
    pub fn get2(&self, i: usize, j: usize) -> T {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: T) {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j] = v;
    }

    /// Rank-2 transpose (copies).
    pub fn t(&self) -> Tensor<T> {
        debug_assert_eq!(self.rank(), 2);
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = Tensor::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        out
    }

    /// self[m x k] . rhs[k x n]
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_mm(rhs, self.cols_for_mm()?, rhs.rows_for_mm()?)?;
        let (m, k, n) = (self.shape[0], self.shape[1], rhs.shape[1]);
        let mut out = Tensor::zeros(&[m, n]);
        // The fresh buffer is already zero, so accumulate mode gives the
        // same result while skipping the redundant clearing pass.
        linalg::gemm_nn(m, k, n, &self.data, &rhs.data, &mut out.data, true);
        Ok(out)
    }

    /// self[m x k] . rhs[n x k]^T
    pub fn matmul_nt(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_mm(rhs, self.cols_for_mm()?, rhs.cols_for_mm()?)?;
        let (m, k, n) = (self.shape[0], self.shape[1], rhs.shape[0]);
        let mut out = Tensor::zeros(&[m, n]);
        linalg::gemm_nt(m, k, n, &self.data, &rhs.data, &mut out.data, true);
        Ok(out)
    }

    /// self[m x k]^T . rhs[m x n]
    pub fn matmul_tn(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_mm(rhs, self.rows_for_mm()?, rhs.rows_for_mm()?)?;
        let (m, k, n) = (self.shape[0], self.shape[1], rhs.shape[1]);
        let mut out = Tensor::zeros(&[k, n]);
        linalg::gemm_tn(m, k, n, &self.data, &rhs.data, &mut out.data, true);
        Ok(out)
    }

    fn cols_for_mm(&self) -> Result<usize> {
        if self.rank() != 2 {
            return Err(Error::shape(format!(
                "matmul needs rank-2 operands, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.shape[1])
    }

    fn rows_for_mm(&self) -> Result<usize> {
        if self.rank() != 2 {
            return Err(Error::shape(format!(
                "matmul needs rank-2 operands, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.shape[0])
    }

    fn check_mm(&self, rhs: &Tensor<T>, inner_l: usize, inner_r: usize) -> Result<()> {
        if inner_l != inner_r {
            return Err(Error::shape(format!(
                "matmul inner dims disagree: {:?} vs {:?}",
                self.shape, rhs.shape
            )));
        }
        Ok(())
    }

    /// Row-wise softmax with max shift; rows sum to 1 within a few ulps and
    /// the result is invariant to adding a constant to a row.
    pub fn softmax_rows(&self) -> Tensor<T> {
        debug_assert!(self.rank() == 2 || self.rank() == 1);
        let w = self.shape[self.rank() - 1];
        let nrows = self.len() / w.max(1);
        let mut out = self.clone();
        for i in 0..nrows {
            softmax_row(&mut out.data[i * w..(i + 1) * w]);
        }
        out
    }

    /// Inclusive prefix sums along axis 0 (time). `reversed` sums suffixes
    /// instead; the two directions are exact mirrors, so reversing the input
    /// and output of one gives bitwise the other.
    pub fn cumsum(&self, reversed: bool) -> Tensor<T> {
        debug_assert_eq!(self.rank(), 2);
        let (t, w) = (self.shape[0], self.shape[1]);
        let mut out = self.clone();
        if t <= 1 {
            return out;
        }
        if !reversed {
            for i in 1..t {
                let (prev, cur) = out.data.split_at_mut(i * w);
                let prev = &prev[(i - 1) * w..];
                for (c, p) in cur[..w].iter_mut().zip(prev.iter()) {
                    *c = *p + *c;
                }
            }
        } else {
            for i in (0..t - 1).rev() {
                let (cur, next) = out.data.split_at_mut((i + 1) * w);
                let cur = &mut cur[i * w..];
                for (c, nx) in cur.iter_mut().zip(next[..w].iter()) {
                    *c = *nx + *c;
                }
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, rhs: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        if self.shape != rhs.shape {
            return Err(Error::shape(format!(
                "elementwise shapes disagree: {:?} vs {:?}",
                self.shape, rhs.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_map(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_map(rhs, |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_map(rhs, |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Tensor<T> {
        self.map(|x| x * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0f64, |m, x| m.max(x.to_f64().abs()))
    }

    pub fn max_abs_diff(&self, rhs: &Tensor<T>) -> f64 {
        debug_assert_eq!(self.shape, rhs.shape);
        self.data
            .iter()
            .zip(rhs.data.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a.to_f64() - b.to_f64()).abs()))
    }

    pub fn validate_finite(&self, ctx: &str) -> Result<()> {
        for (i, x) in self.data.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::non_finite(format!(
                    "{ctx}: element {i} of shape {:?} is {x}",
                    self.shape
                )));
            }
        }
        Ok(())
    }

    pub fn fill_uniform(&mut self, rng: &mut Rng, lo: f64, hi: f64) {
        for x in self.data.iter_mut() {
            *x = T::from_f64(rng.uniform(lo, hi));
        }
    }

    pub fn fill_normal(&mut self, rng: &mut Rng, mean: f64, std: f64) {
        for x in self.data.iter_mut() {
            *x = T::from_f64(mean + std * rng.normal());
        }
    }

    /// Elementwise in-place sum; shapes must match.
    pub fn accumulate(&mut self, rhs: &Tensor<T>) -> Result<()> {
        if self.shape != rhs.shape {
            return Err(Error::shape(format!(
                "accumulate shapes differ: {:?} vs {:?}",
                self.shape, rhs.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a = *a + b;
        }
        Ok(())
    }

    /// Copy of rows [r0, r1) of a rank-2 tensor.
    pub fn slice_rows(&self, r0: usize, r1: usize) -> Tensor<T> {
        debug_assert_eq!(self.rank(), 2);
        debug_assert!(r0 <= r1 && r1 <= self.shape[0]);
        let w = self.shape[1];
        Tensor { shape: vec![r1 - r0, w], data: self.data[r0 * w..r1 * w].to_vec() }
    }

    /// Write `src` into rows starting at r0.
    pub fn set_rows(&mut self, r0: usize, src: &Tensor<T>) {
        debug_assert_eq!(self.rank(), 2);
        debug_assert_eq!(self.shape[1], src.shape[1]);
        debug_assert!(r0 + src.shape[0] <= self.shape[0]);
        let w = self.shape[1];
        self.data[r0 * w..r0 * w + src.data.len()].copy_from_slice(&src.data);
    }

    /// Copy of columns [c0, c1) of a rank-2 tensor.
    pub fn slice_cols(&self, c0: usize, c1: usize) -> Tensor<T> {
        debug_assert_eq!(self.rank(), 2);
        debug_assert!(c0 <= c1 && c1 <= self.shape[1]);
        let (t, w) = (self.shape[0], self.shape[1]);
        let mut out = Tensor::zeros(&[t, c1 - c0]);
        for i in 0..t {
            out.data[i * (c1 - c0)..(i + 1) * (c1 - c0)]
                .copy_from_slice(&self.data[i * w + c0..i * w + c1]);
        }
        out
    }

    /// Write `src` into columns starting at c0.
    pub fn set_cols(&mut self, c0: usize, src: &Tensor<T>) {
        debug_assert_eq!(self.rank(), 2);
        debug_assert_eq!(self.shape[0], src.shape[0]);
        let (t, w, sw) = (self.shape[0], self.shape[1], src.shape[1]);
        debug_assert!(c0 + sw <= w);
        for i in 0..t {
            self.data[i * w + c0..i * w + c0 + sw]
                .copy_from_slice(&src.data[i * sw..(i + 1) * sw]);
        }
    }

    /// Convert between widths through f64.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::from_f64(x.to_f64())).collect(),
        }
    }
}

/// In-place stable softmax of one row.
pub fn softmax_row<T: Scalar>(row: &mut [T]) {
    if row.is_empty() {
        return;
    }
    let mut mx = row[0];
    for &x in row.iter() {
        if x > mx {
            mx = x;
        }
    }
    for x in row.iter_mut() {
        *x -= mx;
    }
    exp_slice(row);
    let mut sum = T::ZERO;
    for &x in row.iter() {
        sum += x;
    }
    let inv = T::ONE / sum;
    for x in row.iter_mut() {
        *x *= inv;
    }
}

/// Jacobian-vector product of softmax: given y = softmax(x) and dy, returns
/// dx = y . (dy - <y, dy>).
pub fn softmax_vjp_row<T: Scalar>(y: &[T], dy: &[T], dx: &mut [T]) {
    debug_assert_eq!(y.len(), dy.len());
    debug_assert_eq!(y.len(), dx.len());
    let s = linalg::dot(y, dy);
    for ((dxv, &yv), &dyv) in dx.iter_mut().zip(y.iter()).zip(dy.iter()) {
        *dxv = yv * (dyv - s);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Sigmoid,
    Swish,
    Relu,
    Relu2,
    Exp,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

pub fn ew_unary<T: Scalar>(op: UnaryOp, x: &Tensor<T>) -> Result<Tensor<T>> {
    if op == UnaryOp::Log {
        for (i, v) in x.data().iter().enumerate() {
            if *v <= T::ZERO {
                return Err(Error::domain(format!(
                    "log of non-positive value {v} at element {i}"
                )));
            }
        }
    }
    Ok(match op {
        UnaryOp::Sigmoid => x.map(sigmoid),
        UnaryOp::Swish => x.map(swish),
        UnaryOp::Relu => x.map(|v| if v > T::ZERO { v } else { T::ZERO }),
        UnaryOp::Relu2 => x.map(|v| {
            if v > T::ZERO {
                v * v
            } else {
                T::ZERO
            }
        }),
        UnaryOp::Exp => x.map(|v| v.exp_std()),
        UnaryOp::Log => x.map(|v| v.ln()),
    })
}

/// Elementwise binary op. Accepted layouts: identical shapes, scalar rhs
/// (length 1), or rank-1 rhs broadcast across the rows of a rank-2 lhs.
pub fn ew_binary<T: Scalar>(op: BinaryOp, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let f = |x: T, y: T| match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
    };
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    if b.len() == 1 {
        let s = b.data()[0];
        return Ok(a.map(|x| f(x, s)));
    }
    if a.rank() == 2 && b.rank() == 1 && b.len() == a.cols() {
        let mut out = a.clone();
        let w = a.cols();
        for i in 0..a.rows() {
            for (o, bv) in out.data_mut()[i * w..(i + 1) * w]
                .iter_mut()
                .zip(b.data().iter())
            {
                *o = f(*o, *bv);
            }
        }
        return Ok(out);
    }
    Err(Error::shape(format!(
        "no broadcast between shapes {:?} and {:?}",
        a.shape(),
        b.shape()
    )))
}
