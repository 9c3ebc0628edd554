//! Dense channel-major tensors and the scalar abstraction shared by the
//! network engine.
//!
//! Every image, feature map and saliency map moves through the crate as a
//! `Tensor<T>` laid out as `[channels][height][width]`. Training runs in
//! `f32`; gradient checks run the very same code paths in `f64`.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating point element type usable by the engine.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// `c <- a * b + beta * c` for row/column strided operands.
    ///
    /// # Safety
    /// Strides and extents must address memory inside the given slices; the
    /// safe wrapper [`gemm`] checks this.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// A strided view of a matrix stored in a slice.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a, T> {
    pub data: &'a [T],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major `rows x cols` matrix.
    pub fn rows(data: &'a [T], cols: usize) -> Self {
        Self { data, row_stride: cols, col_stride: 1 }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [T], cols: usize) -> Self {
        Self { data, row_stride: 1, col_stride: cols }
    }

    fn fits(&self, rows: usize, cols: usize) -> bool {
        rows == 0
            || cols == 0
            || (rows - 1) * self.row_stride + (cols - 1) * self.col_stride < self.data.len()
    }
}

/// `c (m x n, row-major) <- a (m x k) * b (k x n) + beta * c`.
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    beta: T,
    c: &mut [T],
) {
    assert!(a.fits(m, k) && b.fits(k, n) && c.len() >= m * n, "gemm operand out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v = *v * beta;
        }
        return;
    }
    // SAFETY: extents checked above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Channel-major 3-D tensor `[channels][height][width]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T = f32> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "buffer of {} elements cannot hold {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[T] {
        let hw = self.height * self.width;
        &self.data[channel * hw..(channel + 1) * hw]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(self, channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::from_vec(channels, height, width, self.data)
    }

    /// Stack tensors of equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.height != h || p.width != w {
                return Err(Error::Shape(format!(
                    "cannot concatenate {}x{} with {h}x{w}",
                    p.height, p.width
                )));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(Self { channels, height: h, width: w, data })
    }

    /// Split off leading channel groups of the given sizes.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Self>> {
        if sizes.iter().sum::<usize>() != self.channels {
            return Err(Error::Shape(format!(
                "channel split {sizes:?} does not cover {} channels",
                self.channels
            )));
        }
        let hw = self.height * self.width;
        let mut start = 0;
        Ok(sizes
            .iter()
            .map(|&c| {
                let part = Self {
                    channels: c,
                    height: self.height,
                    width: self.width,
                    data: self.data[start * hw..(start + c) * hw].to_vec(),
                };
                start += c;
                part
            })
            .collect())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize(self.len().max(1)).unwrap()
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    pub fn clamp(&self, lo: T, hi: T) -> Self {
        self.map(|v| v.max(lo).min(hi))
    }

    pub fn l2_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }
}
