//! Direct-loop 2-D convolution kernels.
//!
//! Three primitives cover both convolution directions and their gradients:
//!
//! * [`gather`]: `y[co] = Σ w[co, ci] ⋆ x[ci]` (forward convolution),
//! * [`scatter`]: the adjoint of `gather` with respect to its input
//!   (forward transposed convolution, and the input gradient of `gather`),
//! * [`weight_grad`]: the adjoint of `gather` with respect to its kernel.
//!
//! Kernels are laid out `[c_a, c_b, k, k]` where `c_a` indexes the channels of
//! the *strided* (smaller) side and `c_b` the dense side. Loop order is fixed,
//! so results are bit-reproducible.

use crate::scalar::Scalar;
use crate::tensor::Shape;

/// Geometry of one strided window pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    /// `floor((len + 2·pad − k)/stride) + 1`, or `None` when the window does not fit.
    pub fn conv_out(&self, len: usize) -> Option<usize> {
        let padded = len + 2 * self.pad;
        if self.stride == 0 || padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    /// `(len − 1)·stride − 2·pad + k + output_pad`, or `None` if non-positive.
    pub fn transpose_out(&self, len: usize, output_pad: usize) -> Option<usize> {
        if self.stride == 0 || len == 0 {
            return None;
        }
        let full = (len - 1) * self.stride + self.kernel + output_pad;
        full.checked_sub(2 * self.pad).filter(|&v| v > 0)
    }

    /// Output positions `o` with `o·stride + tap − pad` inside `[0, dense_len)`.
    #[inline]
    fn valid_range(&self, tap: usize, dense_len: usize, strided_len: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if self.pad > tap {
            (self.pad - tap).div_ceil(s)
        } else {
            0
        };
        let limit = dense_len + self.pad;
        let hi = if limit > tap {
            ((limit - tap - 1) / s + 1).min(strided_len)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

/// Forward convolution. `x` is dense (`xs`), output is `[n, c_a, out_h, out_w]`.
pub fn gather<S: Scalar>(
    x: &[S],
    xs: Shape,
    w: &[S],
    c_a: usize,
    geo: ConvGeometry,
    out_h: usize,
    out_w: usize,
) -> Vec<S> {
    let [nb, c_b, h, wd] = xs.0;
    let k = geo.kernel;
    let ys = Shape::new(nb, c_a, out_h, out_w);
    let mut y = vec![S::zero(); ys.numel()];
    for n in 0..nb {
        for co in 0..c_a {
            let y_plane = &mut y[ys.index(n, co, 0, 0)..][..out_h * out_w];
            for ci in 0..c_b {
                let x_plane = &x[xs.index(n, ci, 0, 0)..][..h * wd];
                for kh in 0..k {
                    let (oh_lo, oh_hi) = geo.valid_range(kh, h, out_h);
                    for kw in 0..k {
                        let wv = w[((co * c_b + ci) * k + kh) * k + kw];
                        let (ow_lo, ow_hi) = geo.valid_range(kw, wd, out_w);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * geo.stride + kh - geo.pad;
                            let x_row = &x_plane[ih * wd..][..wd];
                            let y_row = &mut y_plane[oh * out_w..][..out_w];
                            for ow in ow_lo..ow_hi {
                                let iw = ow * geo.stride + kw - geo.pad;
                                y_row[ow] += wv * x_row[iw];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Adjoint of [`gather`] in its input: `y` is strided (`ys`), output is dense
/// `[n, c_b, out_h, out_w]`.
pub fn scatter<S: Scalar>(
    y: &[S],
    ys: Shape,
    w: &[S],
    c_b: usize,
    geo: ConvGeometry,
    out_h: usize,
    out_w: usize,
) -> Vec<S> {
    let [nb, c_a, h, wd] = ys.0;
    let k = geo.kernel;
    let xs = Shape::new(nb, c_b, out_h, out_w);
    let mut x = vec![S::zero(); xs.numel()];
    for n in 0..nb {
        for ca in 0..c_a {
            let y_plane = &y[ys.index(n, ca, 0, 0)..][..h * wd];
            for cb in 0..c_b {
                let x_plane = &mut x[xs.index(n, cb, 0, 0)..][..out_h * out_w];
                for kh in 0..k {
                    let (oh_lo, oh_hi) = geo.valid_range(kh, out_h, h);
                    for kw in 0..k {
                        let wv = w[((ca * c_b + cb) * k + kh) * k + kw];
                        let (ow_lo, ow_hi) = geo.valid_range(kw, out_w, wd);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * geo.stride + kh - geo.pad;
                            let y_row = &y_plane[oh * wd..][..wd];
                            let x_row = &mut x_plane[ih * out_w..][..out_w];
                            for ow in ow_lo..ow_hi {
                                let iw = ow * geo.stride + kw - geo.pad;
                                x_row[iw] += wv * y_row[ow];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Kernel gradient `[c_a, c_b, k, k]` for dense `x` and strided `gy`.
pub fn weight_grad<S: Scalar>(
    x: &[S],
    xs: Shape,
    gy: &[S],
    ys: Shape,
    geo: ConvGeometry,
) -> Vec<S> {
    let [nb, c_b, h, wd] = xs.0;
    let [_, c_a, out_h, out_w] = ys.0;
    let k = geo.kernel;
    let mut gw = vec![S::zero(); c_a * c_b * k * k];
    for n in 0..nb {
        for co in 0..c_a {
            let gy_plane = &gy[ys.index(n, co, 0, 0)..][..out_h * out_w];
            for ci in 0..c_b {
                let x_plane = &x[xs.index(n, ci, 0, 0)..][..h * wd];
                for kh in 0..k {
                    let (oh_lo, oh_hi) = geo.valid_range(kh, h, out_h);
                    for kw in 0..k {
                        let (ow_lo, ow_hi) = geo.valid_range(kw, wd, out_w);
                        let mut acc = S::zero();
                        for oh in oh_lo..oh_hi {
                            let ih = oh * geo.stride + kh - geo.pad;
                            let x_row = &x_plane[ih * wd..][..wd];
                            let g_row = &gy_plane[oh * out_w..][..out_w];
                            for ow in ow_lo..ow_hi {
                                let iw = ow * geo.stride + kw - geo.pad;
                                acc += g_row[ow] * x_row[iw];
                            }
                        }
                        gw[((co * c_b + ci) * k + kh) * k + kw] += acc;
                    }
                }
            }
        }
    }
    gw
}
