//! Raw numeric kernels over row-major slices.

use super::Scalar;

/// Convolution forward algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConvAlgo {
    /// Loop-nest cross-correlation.
    Direct,
    /// Unfold patches into columns and multiply.
    #[default]
    Im2col,
}

/// Output extent of a sliding window along one axis.
pub fn window_out(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if kernel == 0 || stride == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// `c[m×n] += a[m×k] · b[k×n]`.
pub fn gemm_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_ip * b_pj;
            }
        }
    }
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`.
pub fn gemm_tn_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            if a_pi == T::zero() {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_pi * b_pj;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`.
pub fn gemm_nt_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let bt = transpose(b, n, k);
    gemm_acc(a, &bt, c, m, k, n);
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Geometry of a single-sample 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    ) -> Option<Self> {
        Some(ConvGeometry {
            channels,
            height,
            width,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h: window_out(height, kernel_h, stride, padding)?,
            out_w: window_out(width, kernel_w, stride, padding)?,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate for output position `o` and kernel tap `k`, if inside.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Unfolds one `[C,H,W]` sample into a `[C·kh·kw, H'·W']` column matrix.
pub fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let cols_n = g.out_len();
    let mut cols = vec![T::zero(); g.patch_len() * cols_n];
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut cols[row * cols_n..(row + 1) * cols_n];
                for oh in 0..g.out_h {
                    let Some(ih) = g.source(oh, ki, g.height) else {
                        continue;
                    };
                    for ow in 0..g.out_w {
                        if let Some(iw) = g.source(ow, kj, g.width) {
                            dst[oh * g.out_w + ow] = plane[ih * g.width + iw];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Folds a column matrix back onto a `[C,H,W]` sample, summing overlaps.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let cols_n = g.out_len();
    let mut x = vec![T::zero(); g.channels * g.height * g.width];
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &cols[row * cols_n..(row + 1) * cols_n];
                for oh in 0..g.out_h {
                    let Some(ih) = g.source(oh, ki, g.height) else {
                        continue;
                    };
                    for ow in 0..g.out_w {
                        if let Some(iw) = g.source(ow, kj, g.width) {
                            plane[ih * g.width + iw] += src[oh * g.out_w + ow];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Direct loop-nest cross-correlation of one sample; returns `[F, H'·W']`.
pub fn conv2d_direct_sample<T: Scalar>(
    x: &[T],
    kernels: &[T],
    bias: &[T],
    filters: usize,
    g: &ConvGeometry,
) -> Vec<T> {
    let mut out = vec![T::zero(); filters * g.out_len()];
    for f in 0..filters {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let mut acc = bias[f];
                for c in 0..g.channels {
                    for ki in 0..g.kernel_h {
                        let Some(ih) = g.source(oh, ki, g.height) else {
                            continue;
                        };
                        for kj in 0..g.kernel_w {
                            let Some(iw) = g.source(ow, kj, g.width) else {
                                continue;
                            };
                            let w = kernels[((f * g.channels + c) * g.kernel_h + ki) * g.kernel_w + kj];
                            acc += w * x[(c * g.height + ih) * g.width + iw];
                        }
                    }
                }
                out[(f * g.out_h + oh) * g.out_w + ow] = acc;
            }
        }
    }
    out
}

/// im2col + GEMM convolution of one sample; returns `([F, H'·W'], columns)`.
pub fn conv2d_gemm_sample<T: Scalar>(
    x: &[T],
    kernels: &[T],
    bias: &[T],
    filters: usize,
    g: &ConvGeometry,
) -> (Vec<T>, Vec<T>) {
    let cols = im2col(x, g);
    let p = g.out_len();
    let mut out = vec![T::zero(); filters * p];
    for (f, row) in out.chunks_mut(p).enumerate() {
        row.fill(bias[f]);
    }
    gemm_acc(kernels, &cols, &mut out, filters, g.patch_len(), p);
    (out, cols)
}
