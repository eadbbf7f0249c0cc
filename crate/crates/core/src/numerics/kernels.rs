//! Raw forward/backward kernels on flat slices. Shape checking lives in the
//! tape layer; these assume conforming inputs.
//!
//! Layouts: images are `[C, H, W]` row-major, conv weights `[Co, Ci, K, K]`,
//! affine weights `[Out, In]`.

use super::tensor::Real;

/// Output spatial side for a same-padded conv: `(h + 2*(k/2) - k) / stride + 1`.
pub fn conv_out_side(h: usize, k: usize, stride: usize) -> usize {
    (h + 2 * (k / 2) - k) / stride + 1
}

/// Same-padded 2-D convolution (correlation), stride 1 or 2.
pub fn conv2d<E: Real>(
    x: &[E],
    w: &[E],
    b: Option<&[E]>,
    ci: usize,
    co: usize,
    h: usize,
    wd: usize,
    k: usize,
    stride: usize,
) -> Vec<E> {
    let pad = k / 2;
    let oh = conv_out_side(h, k, stride);
    let ow = conv_out_side(wd, k, stride);
    let mut out = vec![E::zero(); co * oh * ow];
    if let Some(b) = b {
        for c in 0..co {
            let row = &mut out[c * oh * ow..(c + 1) * oh * ow];
            for v in row.iter_mut() {
                *v = b[c];
            }
        }
    }
    for c_out in 0..co {
        for c_in in 0..ci {
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w[((c_out * ci + c_in) * k + ky) * k + kx];
                    if wv == E::zero() {
                        continue;
                    }
                    // oy*stride + ky - pad must land in [0, h)
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let xrow = &x[(c_in * h + iy as usize) * wd..][..wd];
                        let orow = &mut out[(c_out * oh + oy) * ow..][..ow];
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            orow[ox] = orow[ox] + wv * xrow[ix as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient of `conv2d` w.r.t. its input.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_grad_input<E: Real>(
    g: &[E],
    w: &[E],
    ci: usize,
    co: usize,
    h: usize,
    wd: usize,
    k: usize,
    stride: usize,
) -> Vec<E> {
    let pad = k / 2;
    let oh = conv_out_side(h, k, stride);
    let ow = conv_out_side(wd, k, stride);
    let mut dx = vec![E::zero(); ci * h * wd];
    for c_out in 0..co {
        for c_in in 0..ci {
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w[((c_out * ci + c_in) * k + ky) * k + kx];
                    if wv == E::zero() {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let grow = &g[(c_out * oh + oy) * ow..][..ow];
                        let drow = &mut dx[(c_in * h + iy as usize) * wd..][..wd];
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            drow[ix as usize] = drow[ix as usize] + wv * grow[ox];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of `conv2d` w.r.t. its weight.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_grad_weight<E: Real>(
    g: &[E],
    x: &[E],
    ci: usize,
    co: usize,
    h: usize,
    wd: usize,
    k: usize,
    stride: usize,
) -> Vec<E> {
    let pad = k / 2;
    let oh = conv_out_side(h, k, stride);
    let ow = conv_out_side(wd, k, stride);
    let mut dw = vec![E::zero(); co * ci * k * k];
    for c_out in 0..co {
        for c_in in 0..ci {
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = E::zero();
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let grow = &g[(c_out * oh + oy) * ow..][..ow];
                        let xrow = &x[(c_in * h + iy as usize) * wd..][..wd];
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            acc = acc + grow[ox] * xrow[ix as usize];
                        }
                    }
                    dw[((c_out * ci + c_in) * k + ky) * k + kx] = acc;
                }
            }
        }
    }
    dw
}

/// Gradient of `conv2d` w.r.t. its bias: per-channel sum of `g`.
pub fn conv2d_grad_bias<E: Real>(g: &[E], co: usize, oh: usize, ow: usize) -> Vec<E> {
    let mut db = vec![E::zero(); co];
    for c in 0..co {
        let mut acc = E::zero();
        for v in &g[c * oh * ow..(c + 1) * oh * ow] {
            acc = acc + *v;
        }
        db[c] = acc;
    }
    db
}

/// Nearest-neighbour 2x upsample: `[C,H,W] -> [C,2H,2W]`.
pub fn upsample2x<E: Real>(x: &[E], c: usize, h: usize, w: usize) -> Vec<E> {
    let mut out = vec![E::zero(); c * 4 * h * w];
    let (oh, ow) = (2 * h, 2 * w);
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let v = x[(ch * h + y) * w + xx];
                let base = ch * oh * ow;
                out[base + (2 * y) * ow + 2 * xx] = v;
                out[base + (2 * y) * ow + 2 * xx + 1] = v;
                out[base + (2 * y + 1) * ow + 2 * xx] = v;
                out[base + (2 * y + 1) * ow + 2 * xx + 1] = v;
            }
        }
    }
    out
}

pub fn upsample2x_grad<E: Real>(g: &[E], c: usize, h: usize, w: usize) -> Vec<E> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = vec![E::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let base = ch * oh * ow;
                let s = g[base + (2 * y) * ow + 2 * xx]
                    + g[base + (2 * y) * ow + 2 * xx + 1]
                    + g[base + (2 * y + 1) * ow + 2 * xx]
                    + g[base + (2 * y + 1) * ow + 2 * xx + 1];
                dx[(ch * h + y) * w + xx] = s;
            }
        }
    }
    dx
}

#[inline]
pub fn sigmoid<E: Real>(x: E) -> E {
    E::one() / (E::one() + (-x).exp())
}

pub fn silu<E: Real>(x: &[E]) -> Vec<E> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

/// d silu / dx = sigma(x) * (1 + x * (1 - sigma(x)))
pub fn silu_grad<E: Real>(g: &[E], x: &[E]) -> Vec<E> {
    g.iter()
        .zip(x)
        .map(|(&gv, &xv)| {
            let s = sigmoid(xv);
            gv * s * (E::one() + xv * (E::one() - s))
        })
        .collect()
}

/// Fully connected map `y = W x + b`, `W: [out, in]`.
pub fn affine<E: Real>(x: &[E], w: &[E], b: &[E], n_in: usize, n_out: usize) -> Vec<E> {
    let mut y = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let row = &w[o * n_in..(o + 1) * n_in];
        let mut acc = b[o];
        for (wv, xv) in row.iter().zip(x) {
            acc = acc + *wv * *xv;
        }
        y.push(acc);
    }
    y
}

pub fn affine_grad_input<E: Real>(g: &[E], w: &[E], n_in: usize, n_out: usize) -> Vec<E> {
    let mut dx = vec![E::zero(); n_in];
    for o in 0..n_out {
        let row = &w[o * n_in..(o + 1) * n_in];
        let gv = g[o];
        for (d, wv) in dx.iter_mut().zip(row) {
            *d = *d + *wv * gv;
        }
    }
    dx
}

pub fn affine_grad_weight<E: Real>(g: &[E], x: &[E], n_in: usize, n_out: usize) -> Vec<E> {
    let mut dw = vec![E::zero(); n_out * n_in];
    for o in 0..n_out {
        let gv = g[o];
        let row = &mut dw[o * n_in..(o + 1) * n_in];
        for (d, xv) in row.iter_mut().zip(x) {
            *d = gv * *xv;
        }
    }
    dw
}
