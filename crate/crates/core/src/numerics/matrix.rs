use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point element type for parameters and activations.
///
/// Models run in `f32`; gradient checks instantiate the same code at `f64`.
/// Reductions always accumulate in `f64` regardless of the element type.
pub trait Real:
    Float + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn of(x: f64) -> Self;
    fn wide(self) -> f64;
}

impl Real for f32 {
    #[inline(always)]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline(always)]
    fn wide(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline(always)]
    fn of(x: f64) -> Self {
        x
    }
    #[inline(always)]
    fn wide(self) -> f64 {
        self
    }
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)
    }
}

impl<T> Default for Matrix<T> {
    fn default() -> Self {
        Self {
            rows: 0,
            cols: 0,
            data: Vec::new(),
        }
    }
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                (rows, cols),
                data.len(),
                "matrix data length must equal rows * cols",
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::shape(cols, r.len(), "ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// A single-row matrix holding `v`.
    pub fn row_vector(v: Vec<T>) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::of(x.wide())).collect(),
        }
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sum of squares accumulated in 64 bits.
    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x.wide() * x.wide()).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(self.shape(), other.shape(), "add_assign"));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a = *a * s;
        }
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::shape(self.shape(), rhs.shape(), "matmul"));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        gemm(&self.data, &rhs.data, self.rows, self.cols, rhs.cols, &mut out.data);
        Ok(out)
    }

    /// `selfᵀ · rhs`.
    pub fn matmul_tn(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::shape(self.shape(), rhs.shape(), "matmul_tn"));
        }
        self.transpose().matmul(rhs)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_nt(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::shape(self.shape(), rhs.shape(), "matmul_nt"));
        }
        self.matmul(&rhs.transpose())
    }
}

/// `out = a · b` for row-major `a: m×k`, `b: k×n`.
///
/// Each output element is accumulated in `f64` over ascending `k`, so a row
/// computed alone is bitwise identical to the same row computed in a batch.
pub(crate) fn gemm<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let mut acc = vec![0f64; n];
    for i in 0..m {
        acc.fill(0.0);
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            let aip = aip.wide();
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in acc.iter_mut().zip(brow) {
                *o += aip * bv.wide();
            }
        }
        for (o, &v) in out[i * n..(i + 1) * n].iter_mut().zip(&acc) {
            *o = T::of(v);
        }
    }
}

/// `acc += aᵀ · b` for row-major `a: m×k`, `b: m×n`, accumulating into a `k×n` buffer.
pub(crate) fn gemm_tn_acc<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, acc: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(acc.len(), k * n);
    let mut wide = vec![0f64; k * n];
    for r in 0..m {
        let arow = &a[r * k..(r + 1) * k];
        let brow = &b[r * n..(r + 1) * n];
        for (p, &ap) in arow.iter().enumerate() {
            let ap = ap.wide();
            if ap == 0.0 {
                continue;
            }
            for (o, &bv) in wide[p * n..(p + 1) * n].iter_mut().zip(brow) {
                *o += ap * bv.wide();
            }
        }
    }
    for (o, &w) in acc.iter_mut().zip(&wide) {
        *o = T::of(o.wide() + w);
    }
}

/// Dot product with 64-bit accumulation in ascending index order.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    let mut s = 0f64;
    for (&x, &y) in a.iter().zip(b) {
        s += x.wide() * y.wide();
    }
    s
}
