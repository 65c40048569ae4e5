use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Strided view of a matrix operand for [`Real::gemm`].
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub offset: usize,
    pub row_stride: isize,
    pub col_stride: isize,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major `rows x cols` matrix.
    pub fn rows(data: &'a [T], cols: usize) -> Self {
        MatRef {
            data,
            offset: 0,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// Transpose of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [T], cols: usize) -> Self {
        MatRef {
            data,
            offset: 0,
            row_stride: 1,
            col_stride: cols as isize,
        }
    }

    pub fn strided(data: &'a [T], offset: usize, row_stride: isize, col_stride: isize) -> Self {
        MatRef {
            data,
            offset,
            row_stride,
            col_stride,
        }
    }
}

/// Strided mutable output matrix for [`Real::gemm`].
#[derive(Debug)]
pub struct MatMut<'a, T> {
    pub data: &'a mut [T],
    pub offset: usize,
    pub row_stride: isize,
    pub col_stride: isize,
}

impl<'a, T> MatMut<'a, T> {
    pub fn rows(data: &'a mut [T], cols: usize) -> Self {
        MatMut {
            data,
            offset: 0,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    pub fn strided(data: &'a mut [T], offset: usize, row_stride: isize, col_stride: isize) -> Self {
        MatMut {
            data,
            offset,
            row_stride,
            col_stride,
        }
    }
}

/// Floating-point element type of a [`Tensor`](super::Tensor).
///
/// Implemented for `f32` (training and inference) and `f64` (gradient
/// checking).
pub trait Real:
    Float
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn lit(v: f64) -> Self;

    fn to_f64(self) -> f64;

    /// `c = a * b + beta * c` with `a: m x k`, `b: k x n`, `c: m x n`.
    /// `beta` is either 0 (overwrite) or 1 (accumulate).
    fn gemm(m: usize, k: usize, n: usize, a: MatRef<'_, Self>, b: MatRef<'_, Self>, beta: Self, c: MatMut<'_, Self>);
}

fn check_extent<T>(data_len: usize, offset: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = offset as isize + (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(
        rs >= 0 && cs >= 0 && (last as usize) < data_len,
        "gemm operand out of bounds: len {data_len}, offset {offset}, {rows}x{cols}, strides ({rs}, {cs}) for {}",
        std::any::type_name::<T>()
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn lit(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            fn gemm(m: usize, k: usize, n: usize, a: MatRef<'_, Self>, b: MatRef<'_, Self>, beta: Self, c: MatMut<'_, Self>) {
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    if beta == 0.0 {
                        for i in 0..m {
                            for j in 0..n {
                                let idx = c.offset as isize + i as isize * c.row_stride + j as isize * c.col_stride;
                                c.data[idx as usize] = 0.0;
                            }
                        }
                    }
                    return;
                }
                check_extent::<$t>(a.data.len(), a.offset, m, k, a.row_stride, a.col_stride);
                check_extent::<$t>(b.data.len(), b.offset, k, n, b.row_stride, b.col_stride);
                check_extent::<$t>(c.data.len(), c.offset, m, n, c.row_stride, c.col_stride);
                // SAFETY: every operand extent was bounds-checked above, and `c`
                // is an exclusive borrow so it cannot alias `a` or `b`.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.data.as_ptr().add(a.offset),
                        a.row_stride,
                        a.col_stride,
                        b.data.as_ptr().add(b.offset),
                        b.row_stride,
                        b.col_stride,
                        beta,
                        c.data.as_mut_ptr().add(c.offset),
                        c.row_stride,
                        c.col_stride,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);
