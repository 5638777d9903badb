//! Raw numeric kernels over flat row-major buffers.

use super::Real;

/// `c = op(a) @ op(b) + beta * c` where `op(a)` is `m x k` and `op(b)` is `k x n`.
///
/// With `ta` set, `a` is stored as `k x m`; with `tb` set, `b` is stored as `n x k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    ta: bool,
    b: &[F],
    tb: bool,
    beta: F,
    c: &mut [F],
) {
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    F::gemm(m, k, n, a, rsa, csa, b, rsb, csb, beta, c);
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of the Gaussian error linear unit.
#[inline]
pub fn gelu<F: Real>(x: F) -> F {
    let c = F::of(GELU_C);
    let a = F::of(GELU_A);
    let half = F::of(0.5);
    half * x * (F::one() + (c * (x + a * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<F: Real>(x: F) -> F {
    let c = F::of(GELU_C);
    let a = F::of(GELU_A);
    let half = F::of(0.5);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (F::one() + F::of(3.0) * a * x * x);
    half * (F::one() + t) + half * x * (F::one() - t * t) * du
}

/// Output length of a strided convolution along one axis.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Geometry of a 2-D convolution over a `C x H x W` input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv2dGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Conv2dGeom {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad_h: usize,
        pad_w: usize,
    ) -> Option<Self> {
        Some(Conv2dGeom {
            channels,
            height,
            width,
            kh,
            kw,
            stride,
            pad_h,
            pad_w,
            out_h: conv_out_len(height, kh, stride, pad_h)?,
            out_w: conv_out_len(width, kw, stride, pad_w)?,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Unfolds the input into a `patch_len x positions` column matrix.
    pub fn im2col<F: Real>(&self, x: &[F]) -> Vec<F> {
        let pos = self.positions();
        let mut cols = vec![F::zero(); self.patch_len() * pos];
        for c in 0..self.channels {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * pos..(row + 1) * pos];
                    for oi in 0..self.out_h {
                        let ii = (oi * self.stride + ki) as isize - self.pad_h as isize;
                        if ii < 0 || ii as usize >= self.height {
                            continue;
                        }
                        for oj in 0..self.out_w {
                            let jj = (oj * self.stride + kj) as isize - self.pad_w as isize;
                            if jj < 0 || jj as usize >= self.width {
                                continue;
                            }
                            dst[oi * self.out_w + oj] =
                                x[(c * self.height + ii as usize) * self.width + jj as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters column gradients back onto the input.
    pub fn col2im_add<F: Real>(&self, cols: &[F], dx: &mut [F]) {
        let pos = self.positions();
        for c in 0..self.channels {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * pos..(row + 1) * pos];
                    for oi in 0..self.out_h {
                        let ii = (oi * self.stride + ki) as isize - self.pad_h as isize;
                        if ii < 0 || ii as usize >= self.height {
                            continue;
                        }
                        for oj in 0..self.out_w {
                            let jj = (oj * self.stride + kj) as isize - self.pad_w as isize;
                            if jj < 0 || jj as usize >= self.width {
                                continue;
                            }
                            dx[(c * self.height + ii as usize) * self.width + jj as usize] +=
                                src[oi * self.out_w + oj];
                        }
                    }
                }
            }
        }
    }
}
