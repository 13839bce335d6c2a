//! Raw numeric loops behind the tape operations. No shape validation here;
//! callers in `tape` check shapes first.

use std::ops::Range;

/// `c[m×n] = a[m×k] · b[k×n]`
pub fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0.0f32; m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `g[m×n] · b[k×n]ᵀ`, gradient of `a·b` w.r.t. `a`.
pub fn matmul_grad_a(g: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a[m×k]ᵀ · g[m×n]`, gradient of `a·b` w.r.t. `b`.
pub fn matmul_grad_b(a: &[f32], g: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

/// Geometry of a 2-D convolution. For a transposed convolution the roles of
/// `in_*` and `out_*` describe the equivalent forward convolution, i.e. the
/// transpose reads from the "out" grid and scatters into the "in" grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn in_len(&self) -> usize {
        self.batch * self.in_ch * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.batch * self.out_ch * self.out_h * self.out_w
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kh * self.kw
    }
}

/// Output positions `o` with `0 <= o*stride + k_off - padding < in_len`.
fn valid_range(k_off: usize, stride: usize, padding: usize, in_len: usize, out_len: usize) -> Range<usize> {
    let lo = if k_off >= padding {
        0
    } else {
        (padding - k_off).div_ceil(stride)
    };
    let hi = if in_len + padding <= k_off {
        0
    } else {
        ((in_len + padding - k_off - 1) / stride + 1).min(out_len)
    };
    lo.min(hi)..hi
}

/// Visits every (input index, output index, weight index) triple of a convolution.
/// Weight layout is `[out_ch, in_ch, kh, kw]`.
#[inline]
fn for_each_tap(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize, usize)) {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    for n in 0..g.batch {
        for o in 0..g.out_ch {
            let out_base = (n * g.out_ch + o) * out_plane;
            for c in 0..g.in_ch {
                let in_base = (n * g.in_ch + c) * in_plane;
                for ky in 0..g.kh {
                    let ys = valid_range(ky, g.stride, g.padding, g.in_h, g.out_h);
                    for kx in 0..g.kw {
                        let xs = valid_range(kx, g.stride, g.padding, g.in_w, g.out_w);
                        let widx = ((o * g.in_ch + c) * g.kh + ky) * g.kw + kx;
                        for oy in ys.clone() {
                            let iy = oy * g.stride + ky - g.padding;
                            let irow = in_base + iy * g.in_w;
                            let orow = out_base + oy * g.out_w;
                            // `count` lets the closure run a contiguous inner loop.
                            let ox0 = xs.start;
                            let count = xs.len();
                            if count > 0 {
                                f(irow + ox0 * g.stride + kx - g.padding, orow + ox0, widx, count);
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(x: &[f32], w: &[f32], g: &ConvGeom) -> Vec<f32> {
    let mut out = vec![0.0f32; g.out_len()];
    let s = g.stride;
    for_each_tap(g, |i0, o0, wi, count| {
        let wv = w[wi];
        for t in 0..count {
            out[o0 + t] += wv * x[i0 + t * s];
        }
    });
    out
}

/// Returns (grad wrt input, grad wrt weight).
pub fn conv2d_backward(x: &[f32], w: &[f32], gout: &[f32], g: &ConvGeom) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0f32; g.in_len()];
    let mut gw = vec![0.0f32; g.weight_len()];
    let s = g.stride;
    for_each_tap(g, |i0, o0, wi, count| {
        let wv = w[wi];
        let mut acc = 0.0f32;
        for t in 0..count {
            let go = gout[o0 + t];
            gx[i0 + t * s] += wv * go;
            acc += x[i0 + t * s] * go;
        }
        gw[wi] += acc;
    });
    (gx, gw)
}

/// Transposed convolution: the adjoint of `conv2d_forward` with respect to its input.
/// `g` describes the forward convolution mapping the transpose's output grid (as "in")
/// to its input grid (as "out"); weights are indexed `[out_ch, in_ch, ..]` of that
/// forward convolution, which is the `[C_in, C_out, kh, kw]` layout of the transpose.
pub fn conv_transpose_forward(x: &[f32], w: &[f32], g: &ConvGeom) -> Vec<f32> {
    let mut out = vec![0.0f32; g.in_len()];
    let s = g.stride;
    for_each_tap(g, |i0, o0, wi, count| {
        let wv = w[wi];
        for t in 0..count {
            out[i0 + t * s] += wv * x[o0 + t];
        }
    });
    out
}

pub fn conv_transpose_backward(x: &[f32], w: &[f32], gout: &[f32], g: &ConvGeom) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0.0f32; g.out_len()];
    let mut gw = vec![0.0f32; g.weight_len()];
    let s = g.stride;
    for_each_tap(g, |i0, o0, wi, count| {
        let wv = w[wi];
        let mut acc = 0.0f32;
        for t in 0..count {
            let go = gout[i0 + t * s];
            gx[o0 + t] += wv * go;
            acc += x[o0 + t] * go;
        }
        gw[wi] += acc;
    });
    (gx, gw)
}

/// Splits `shape` around `axis` into (outer, axis_len, inner).
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn softmax(x: &[f32], shape: &[usize], axis: usize, log: bool) -> Vec<f32> {
    let (outer, len, inner) = axis_split(shape, axis);
    let mut out = vec![0.0f32; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * len + j) * inner + i;
            let max = (0..len).map(|j| x[idx(j)]).fold(f32::NEG_INFINITY, f32::max);
            let denom: f32 = (0..len).map(|j| (x[idx(j)] - max).exp()).sum();
            let log_denom = denom.ln();
            for j in 0..len {
                let shifted = x[idx(j)] - max;
                out[idx(j)] = if log {
                    shifted - log_denom
                } else {
                    shifted.exp() / denom
                };
            }
        }
    }
    out
}
