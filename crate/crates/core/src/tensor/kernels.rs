//! Raw numeric kernels: GEMM dispatch, im2col/col2im and bilinear tables.

use super::Precision;

/// Row-major matrix view description: `(rows, cols, row_stride, col_stride)`.
#[derive(Clone, Copy)]
pub(crate) struct MatView {
    pub rows: usize,
    pub cols: usize,
    pub rs: isize,
    pub cs: isize,
}

impl MatView {
    pub fn dense(rows: usize, cols: usize) -> Self {
        MatView {
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn transposed(self) -> Self {
        MatView {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// `c = a · b + beta · c`, where `c` is dense row-major.
pub(crate) fn gemm(
    precision: Precision,
    a: &[f64],
    av: MatView,
    b: &[f64],
    bv: MatView,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(av.cols, bv.rows);
    let (m, k, n) = (av.rows, av.cols, bv.cols);
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v *= beta;
        }
        return;
    }
    match precision {
        Precision::F64 => unsafe {
            // SAFETY: strides describe in-bounds views of `a`, `b` and the
            // dense `m x n` prefix of `c`; the slices outlive the call.
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                av.rs,
                av.cs,
                b.as_ptr(),
                bv.rs,
                bv.cs,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        },
        Precision::F32 => {
            let a32: Vec<f32> = a.iter().map(|&v| v as f32).collect();
            let b32: Vec<f32> = b.iter().map(|&v| v as f32).collect();
            let mut c32: Vec<f32> = c[..m * n].iter().map(|&v| v as f32).collect();
            unsafe {
                // SAFETY: same layout as the f64 branch on converted copies.
                matrixmultiply::sgemm(
                    m,
                    k,
                    n,
                    1.0,
                    a32.as_ptr(),
                    av.rs,
                    av.cs,
                    b32.as_ptr(),
                    bv.rs,
                    bv.cs,
                    beta as f32,
                    c32.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            for (dst, src) in c.iter_mut().zip(&c32) {
                *dst = *src as f64;
            }
        }
    }
}

/// Geometry of one 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    /// A 1x1 stride-1 unpadded conv reads its input directly as the column matrix.
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0
    }

    /// Output index range along one axis for which `o*stride + k - pad` is in `0..len`.
    fn valid_range(&self, k: usize, len: usize, out: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.padding as isize);
        let k = k as isize;
        // o*s + k - p >= 0  =>  o >= ceil((p - k) / s)
        let lo = if p - k > 0 { (p - k + s - 1) / s } else { 0 };
        // o*s + k - p <= len - 1  =>  o <= floor((len - 1 + p - k) / s)
        let top = len as isize - 1 + p - k;
        let hi = if top < 0 { 0 } else { (top / s + 1).min(out as isize) };
        (lo.min(out as isize) as usize, hi.max(0) as usize)
    }
}

/// Unfolds one `[C, H, W]` image into a `[C*kh*kw, out_h*out_w]` column matrix.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let p_len = g.out_len();
    let (s, pad) = (g.stride, g.padding);
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_range(ky, g.height, g.out_h);
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p_len..(row + 1) * p_len];
                let (ox_lo, ox_hi) = g.valid_range(kx, g.width, g.out_w);
                for oy in 0..g.out_h {
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if oy < oy_lo || oy >= oy_hi || ox_lo >= ox_hi {
                        line.fill(0.0);
                        continue;
                    }
                    let iy = oy * s + ky - pad;
                    let src = &plane[iy * g.width..(iy + 1) * g.width];
                    line[..ox_lo].fill(0.0);
                    line[ox_hi..].fill(0.0);
                    if s == 1 {
                        let ix0 = ox_lo + kx - pad;
                        line[ox_lo..ox_hi].copy_from_slice(&src[ix0..ix0 + (ox_hi - ox_lo)]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            line[ox] = src[ox * s + kx - pad];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into `[C, H, W]`.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, x: &mut [f64]) {
    let p_len = g.out_len();
    let (s, pad) = (g.stride, g.padding);
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_range(ky, g.height, g.out_h);
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p_len..(row + 1) * p_len];
                let (ox_lo, ox_hi) = g.valid_range(kx, g.width, g.out_w);
                if ox_lo >= ox_hi {
                    continue;
                }
                for oy in oy_lo..oy_hi {
                    let iy = oy * s + ky - pad;
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    let dst = &mut plane[iy * g.width..(iy + 1) * g.width];
                    for ox in ox_lo..ox_hi {
                        dst[ox * s + kx - pad] += line[ox];
                    }
                }
            }
        }
    }
}

/// One output coordinate of a bilinear resize: two source taps and weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub w0: f64,
    pub w1: f64,
}

/// Sampling taps for resizing an axis of length `src` to `dst`.
///
/// Half-pixel centres (align-corners = false): output `o` samples source
/// coordinate `(o + 0.5) * src / dst - 0.5`, clamped to `[0, src - 1]`.
pub(crate) fn bilinear_taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            let frac = pos - i0 as f64;
            Tap {
                i0,
                i1,
                w0: 1.0 - frac,
                w1: frac,
            }
        })
        .collect()
}

/// Resizes one `[H, W]` plane.
pub(crate) fn resize_plane(src: &[f64], w_in: usize, rows: &[Tap], cols: &[Tap], dst: &mut [f64]) {
    let w_out = cols.len();
    for (oy, ry) in rows.iter().enumerate() {
        let r0 = &src[ry.i0 * w_in..(ry.i0 + 1) * w_in];
        let r1 = &src[ry.i1 * w_in..(ry.i1 + 1) * w_in];
        let out = &mut dst[oy * w_out..(oy + 1) * w_out];
        for (ox, cx) in cols.iter().enumerate() {
            let top = r0[cx.i0] * cx.w0 + r0[cx.i1] * cx.w1;
            let bot = r1[cx.i0] * cx.w0 + r1[cx.i1] * cx.w1;
            out[ox] = top * ry.w0 + bot * ry.w1;
        }
    }
}

/// Transpose of [`resize_plane`], accumulating into `grad_src`.
pub(crate) fn resize_plane_adjoint(
    grad_dst: &[f64],
    w_in: usize,
    rows: &[Tap],
    cols: &[Tap],
    grad_src: &mut [f64],
) {
    let w_out = cols.len();
    for (oy, ry) in rows.iter().enumerate() {
        let g = &grad_dst[oy * w_out..(oy + 1) * w_out];
        for (ox, cx) in cols.iter().enumerate() {
            let v = g[ox];
            grad_src[ry.i0 * w_in + cx.i0] += v * ry.w0 * cx.w0;
            grad_src[ry.i0 * w_in + cx.i1] += v * ry.w0 * cx.w1;
            grad_src[ry.i1 * w_in + cx.i0] += v * ry.w1 * cx.w0;
            grad_src[ry.i1 * w_in + cx.i1] += v * ry.w1 * cx.w1;
        }
    }
}
