//! Slice-level kernels behind the graph operators. All buffers are
//! row-major and batched along the leading axis.

use super::real::{MatMut, MatRef};
use super::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv2dGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Conv2dGeom {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col_2d<T: Real>(x: &[T], g: &Conv2dGeom, cols: &mut [T]) {
    let plane = g.out_plane();
    for ci in 0..g.cin {
        let chan = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &chan[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_2d<T: Real>(cols: &[T], g: &Conv2dGeom, dx: &mut [T]) {
    let plane = g.out_plane();
    for ci in 0..g.cin {
        let chan = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let line = &src[oy * g.ow..(oy + 1) * g.ow];
                    let dst = &mut chan[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, &v) in line.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(x: &[T], weight: &[T], bias: &[T], g: &Conv2dGeom) -> Vec<T> {
    let (patch, plane) = (g.patch(), g.out_plane());
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * plane;
    let mut out = vec![T::zero(); g.batch * out_len];
    let mut cols = vec![T::zero(); patch * plane];
    for b in 0..g.batch {
        im2col_2d(&x[b * in_len..(b + 1) * in_len], g, &mut cols);
        let dst = &mut out[b * out_len..(b + 1) * out_len];
        for (co, row) in dst.chunks_exact_mut(plane).enumerate() {
            row.fill(bias[co]);
        }
        T::gemm(
            g.cout,
            patch,
            plane,
            MatRef::rows(weight, patch),
            MatRef::rows(&cols, plane),
            T::one(),
            MatMut::rows(dst, plane),
        );
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub(crate) fn conv2d_backward<T: Real>(
    x: &[T],
    weight: &[T],
    dout: &[T],
    g: &Conv2dGeom,
    need: [bool; 3],
) -> ConvGrads<T> {
    let (patch, plane) = (g.patch(), g.out_plane());
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * plane;
    let mut dx = need[0].then(|| vec![T::zero(); g.batch * in_len]);
    let mut dw = need[1].then(|| vec![T::zero(); g.cout * patch]);
    let db = need[2].then(|| {
        let mut db = vec![T::zero(); g.cout];
        for b in 0..g.batch {
            for (co, row) in dout[b * out_len..(b + 1) * out_len].chunks_exact(plane).enumerate() {
                db[co] += row.iter().copied().sum::<T>();
            }
        }
        db
    });
    let mut cols = vec![T::zero(); patch * plane];
    for b in 0..g.batch {
        let dy = &dout[b * out_len..(b + 1) * out_len];
        if let Some(dw) = dw.as_mut() {
            im2col_2d(&x[b * in_len..(b + 1) * in_len], g, &mut cols);
            T::gemm(
                g.cout,
                plane,
                patch,
                MatRef::rows(dy, plane),
                MatRef::transposed(&cols, plane),
                T::one(),
                MatMut::rows(dw, patch),
            );
        }
        if let Some(dx) = dx.as_mut() {
            T::gemm(
                patch,
                g.cout,
                plane,
                MatRef::transposed(weight, patch),
                MatRef::rows(dy, plane),
                T::zero(),
                MatMut::rows(&mut cols, plane),
            );
            col2im_2d(&cols, g, &mut dx[b * in_len..(b + 1) * in_len]);
        }
    }
    ConvGrads { dx, dw, db }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv1dGeom {
    pub batch: usize,
    pub cin: usize,
    pub t: usize,
    pub cout: usize,
    pub k: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub tout: usize,
}

fn im2col_1d<T: Real>(x: &[T], g: &Conv1dGeom, cols: &mut [T]) {
    for ci in 0..g.cin {
        let chan = &x[ci * g.t..(ci + 1) * g.t];
        for j in 0..g.k {
            let row = ci * g.k + j;
            let dst = &mut cols[row * g.tout..(row + 1) * g.tout];
            for (t, v) in dst.iter_mut().enumerate() {
                let src = (t + j) as isize - g.pad_left as isize;
                *v = if src < 0 || src >= g.t as isize {
                    T::zero()
                } else {
                    chan[src as usize]
                };
            }
        }
    }
}

fn col2im_1d<T: Real>(cols: &[T], g: &Conv1dGeom, dx: &mut [T]) {
    for ci in 0..g.cin {
        let chan = &mut dx[ci * g.t..(ci + 1) * g.t];
        for j in 0..g.k {
            let row = ci * g.k + j;
            for (t, &v) in cols[row * g.tout..(row + 1) * g.tout].iter().enumerate() {
                let dst = (t + j) as isize - g.pad_left as isize;
                if dst >= 0 && dst < g.t as isize {
                    chan[dst as usize] += v;
                }
            }
        }
    }
}

pub(crate) fn conv1d_forward<T: Real>(x: &[T], weight: &[T], bias: &[T], g: &Conv1dGeom) -> Vec<T> {
    let patch = g.cin * g.k;
    let in_len = g.cin * g.t;
    let out_len = g.cout * g.tout;
    let mut out = vec![T::zero(); g.batch * out_len];
    let mut cols = vec![T::zero(); patch * g.tout];
    for b in 0..g.batch {
        im2col_1d(&x[b * in_len..(b + 1) * in_len], g, &mut cols);
        let dst = &mut out[b * out_len..(b + 1) * out_len];
        for (co, row) in dst.chunks_exact_mut(g.tout).enumerate() {
            row.fill(bias[co]);
        }
        T::gemm(
            g.cout,
            patch,
            g.tout,
            MatRef::rows(weight, patch),
            MatRef::rows(&cols, g.tout),
            T::one(),
            MatMut::rows(dst, g.tout),
        );
    }
    out
}

pub(crate) fn conv1d_backward<T: Real>(
    x: &[T],
    weight: &[T],
    dout: &[T],
    g: &Conv1dGeom,
    need: [bool; 3],
) -> ConvGrads<T> {
    let patch = g.cin * g.k;
    let in_len = g.cin * g.t;
    let out_len = g.cout * g.tout;
    let mut dx = need[0].then(|| vec![T::zero(); g.batch * in_len]);
    let mut dw = need[1].then(|| vec![T::zero(); g.cout * patch]);
    let db = need[2].then(|| {
        let mut db = vec![T::zero(); g.cout];
        for b in 0..g.batch {
            for (co, row) in dout[b * out_len..(b + 1) * out_len].chunks_exact(g.tout).enumerate() {
                db[co] += row.iter().copied().sum::<T>();
            }
        }
        db
    });
    let mut cols = vec![T::zero(); patch * g.tout];
    for b in 0..g.batch {
        let dy = &dout[b * out_len..(b + 1) * out_len];
        if let Some(dw) = dw.as_mut() {
            im2col_1d(&x[b * in_len..(b + 1) * in_len], g, &mut cols);
            T::gemm(
                g.cout,
                g.tout,
                patch,
                MatRef::rows(dy, g.tout),
                MatRef::transposed(&cols, g.tout),
                T::one(),
                MatMut::rows(dw, patch),
            );
        }
        if let Some(dx) = dx.as_mut() {
            T::gemm(
                patch,
                g.cout,
                g.tout,
                MatRef::transposed(weight, patch),
                MatRef::rows(dy, g.tout),
                T::zero(),
                MatMut::rows(&mut cols, g.tout),
            );
            col2im_1d(&cols, g, &mut dx[b * in_len..(b + 1) * in_len]);
        }
    }
    ConvGrads { dx, dw, db }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct DeconvGeom {
    pub batch: usize,
    pub cin: usize,
    pub t: usize,
    pub cout: usize,
}

/// Kernel-2, stride-2 transposed convolution:
/// `out[co, 2t + j] = sum_ci w[co, ci, j] * x[ci, t] + b[co]`.
pub(crate) fn deconv1d_forward<T: Real>(x: &[T], weight: &[T], bias: Option<&[T]>, g: &DeconvGeom) -> Vec<T> {
    let in_len = g.cin * g.t;
    let tout = 2 * g.t;
    let out_len = g.cout * tout;
    let mut out = vec![T::zero(); g.batch * out_len];
    for b in 0..g.batch {
        let dst = &mut out[b * out_len..(b + 1) * out_len];
        if let Some(bias) = bias {
            for (co, row) in dst.chunks_exact_mut(tout).enumerate() {
                row.fill(bias[co]);
            }
        }
        let xs = &x[b * in_len..(b + 1) * in_len];
        for j in 0..2 {
            T::gemm(
                g.cout,
                g.cin,
                g.t,
                MatRef::strided(weight, j, 2 * g.cin as isize, 2),
                MatRef::rows(xs, g.t),
                T::one(),
                MatMut::strided(dst, j, tout as isize, 2),
            );
        }
    }
    out
}

pub(crate) fn deconv1d_backward<T: Real>(
    x: &[T],
    weight: &[T],
    dout: &[T],
    g: &DeconvGeom,
    need: [bool; 3],
) -> ConvGrads<T> {
    let in_len = g.cin * g.t;
    let tout = 2 * g.t;
    let out_len = g.cout * tout;
    let mut dx = need[0].then(|| vec![T::zero(); g.batch * in_len]);
    let mut dw = need[1].then(|| vec![T::zero(); g.cout * g.cin * 2]);
    let db = need[2].then(|| {
        let mut db = vec![T::zero(); g.cout];
        for b in 0..g.batch {
            for (co, row) in dout[b * out_len..(b + 1) * out_len].chunks_exact(tout).enumerate() {
                db[co] += row.iter().copied().sum::<T>();
            }
        }
        db
    });
    for b in 0..g.batch {
        let dy = &dout[b * out_len..(b + 1) * out_len];
        let xs = &x[b * in_len..(b + 1) * in_len];
        for j in 0..2 {
            if let Some(dx) = dx.as_mut() {
                T::gemm(
                    g.cin,
                    g.cout,
                    g.t,
                    MatRef::strided(weight, j, 2, 2 * g.cin as isize),
                    MatRef::strided(dy, j, tout as isize, 2),
                    T::one(),
                    MatMut::rows(&mut dx[b * in_len..(b + 1) * in_len], g.t),
                );
            }
            if let Some(dw) = dw.as_mut() {
                T::gemm(
                    g.cout,
                    g.t,
                    g.cin,
                    MatRef::strided(dy, j, tout as isize, 2),
                    MatRef::transposed(xs, g.t),
                    T::one(),
                    MatMut::strided(dw, j, 2 * g.cin as isize, 2),
                );
            }
        }
    }
    ConvGrads { dx, dw, db }
}
