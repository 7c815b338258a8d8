//! Forward kernels and their hand-derived vector-Jacobian products.
//!
//! Layout conventions, used everywhere in this crate:
//! * images are channels-last: `[H, W, C]` or batched `[N, H, W, C]`;
//! * convolution filters are `[kh, kw, in_c, out_c]`;
//! * transpose-convolution filters are `[kh, kw, out_c, in_c]`.
//!
//! `conv2d` computes cross-correlation (no kernel flip). `Same` padding pads
//! symmetrically with zeros, the extra row/column (odd totals) going to the
//! bottom/right, and yields `ceil(extent / stride)` outputs; `Valid` pads
//! nothing and yields `floor((extent - window) / stride) + 1`.
//!
//! Transpose convolution is *defined* as the adjoint of `conv2d` with the
//! same filters, stride and padding: `conv2d_transpose_forward(x, f)` equals
//! the gradient of `conv2d_forward` with respect to its input, evaluated with
//! cotangent `x`. With `Same` padding the output extent is exactly
//! `extent * stride`; with `Valid` it is `(extent - 1) * stride + window`.
//! Because the three shared kernels below ([`conv2d_forward`],
//! [`conv2d_input_vjp`], [`conv2d_filter_vjp`]) interpret one filter buffer
//! consistently, the adjoint identity `<T(x, f), y> = <x, C(y, f)>` holds to
//! rounding error by construction, and is asserted in tests.

use crate::error::{NumError, Result};
use crate::tensor::{at4, Real, Tensor};

/// Zero-padding rule for convolution-family ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Pad so the output extent is `ceil(input / stride)`; extra pad goes
    /// bottom/right when the total is odd.
    Same,
    /// No padding; window positions must fit entirely inside the input.
    Valid,
}

/// Output extent of a convolution along one axis.
pub fn conv_out_dim(extent: usize, window: usize, stride: usize, padding: Padding) -> Result<usize> {
    if stride == 0 {
        return Err(NumError::NonPositive {
            context: "conv_out_dim",
            what: "stride",
        });
    }
    if window == 0 {
        return Err(NumError::NonPositive {
            context: "conv_out_dim",
            what: "window",
        });
    }
    match padding {
        Padding::Same => Ok((extent + stride - 1) / stride),
        Padding::Valid => {
            if window > extent {
                return Err(NumError::WindowTooLarge {
                    window,
                    window2: window,
                    extent,
                });
            }
            Ok((extent - window) / stride + 1)
        }
    }
}

/// Leading (top/left) zero pad for `Same` convolution along one axis.
pub fn same_pad_before(extent: usize, window: usize, stride: usize) -> usize {
    let out = (extent + stride - 1) / stride;
    let total = ((out - 1) * stride + window).saturating_sub(extent);
    total / 2
}

fn pad_before(extent: usize, window: usize, stride: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => same_pad_before(extent, window, stride),
        Padding::Valid => 0,
    }
}

/// Split `[H,W,C]` / `[N,H,W,C]` into (batch, h, w, c), remembering whether
/// the batch axis was implicit.
fn image_dims(shape: &[usize], context: &'static str) -> Result<(usize, usize, usize, usize, bool)> {
    match *shape {
        [h, w, c] => Ok((1, h, w, c, false)),
        [n, h, w, c] => Ok((n, h, w, c, true)),
        _ => Err(NumError::BadRank {
            context,
            rank: shape.len(),
            expected: "3 ([H,W,C]) or 4 ([N,H,W,C])",
        }),
    }
}

fn restore_batch<E: Real>(t: Tensor<E>, batched: bool) -> Tensor<E> {
    if batched {
        t
    } else {
        let s = t.shape().to_vec();
        t.reshaped(&s[1..]).expect("restore_batch")
    }
}

/// Filter dims `[kh, kw, ci, co]` with positivity checks.
fn filter_dims(shape: &[usize], context: &'static str) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [kh, kw, ci, co] => {
            if kh == 0 || kw == 0 || ci == 0 || co == 0 {
                return Err(NumError::NonPositive {
                    context,
                    what: "filter dimension",
                });
            }
            Ok((kh, kw, ci, co))
        }
        _ => Err(NumError::BadRank {
            context,
            rank: shape.len(),
            expected: "4 ([kh,kw,in_c,out_c])",
        }),
    }
}

/// Strided cross-correlation of a channels-last image with a filter bank.
pub fn conv2d_forward<E: Real>(
    input: &Tensor<E>,
    filters: &Tensor<E>,
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor<E>> {
    let (n, h, w, c, batched) = image_dims(input.shape(), "conv2d_forward")?;
    let (kh, kw, ci, co) = filter_dims(filters.shape(), "conv2d_forward")?;
    if ci != c {
        return Err(NumError::ShapeMismatch {
            context: "conv2d_forward channels",
            expected: vec![kh, kw, c, co],
            got: filters.shape().to_vec(),
        });
    }
    let (sh, sw) = stride;
    let ho = conv_out_dim(h, kh, sh, padding)?;
    let wo = conv_out_dim(w, kw, sw, padding)?;
    let pt = pad_before(h, kh, sh, padding);
    let pl = pad_before(w, kw, sw, padding);

    let x = input.data();
    let f = filters.data();
    let in_dims = [n, h, w, c];
    let fil_dims = [kh, kw, ci, co];
    let mut out = vec![E::zero(); n * ho * wo * co];
    let mut acc = vec![E::zero(); co];

    for b in 0..n {
        for oy in 0..ho {
            let iy0 = (oy * sh) as isize - pt as isize;
            for ox in 0..wo {
                let ix0 = (ox * sw) as isize - pl as isize;
                acc.iter_mut().for_each(|a| *a = E::zero());
                for ky in 0..kh {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let xbase = at4(&in_dims, b, iy as usize, ix as usize, 0);
                        for cin in 0..c {
                            let xv = x[xbase + cin];
                            let fbase = at4(&fil_dims, ky, kx, cin, 0);
                            let frow = &f[fbase..fbase + co];
                            for (a, &fv) in acc.iter_mut().zip(frow) {
                                *a = *a + xv * fv;
                            }
                        }
                    }
                }
                let obase = ((b * ho + oy) * wo + ox) * co;
                out[obase..obase + co].copy_from_slice(&acc);
            }
        }
    }
    let t = Tensor::from_vec(&[n, ho, wo, co], out)?;
    Ok(restore_batch(t, batched))
}

/// Gradient of [`conv2d_forward`] with respect to its input: scatters
/// `grad_out` (shape `[.., Ho, Wo, Co]`) back onto an input of spatial size
/// `input_hw` and `ci` channels.
pub fn conv2d_input_vjp<E: Real>(
    grad_out: &Tensor<E>,
    filters: &Tensor<E>,
    stride: (usize, usize),
    padding: Padding,
    input_hw: (usize, usize),
) -> Result<Tensor<E>> {
    let (n, ho, wo, co_g, batched) = image_dims(grad_out.shape(), "conv2d_input_vjp")?;
    let (kh, kw, ci, co) = filter_dims(filters.shape(), "conv2d_input_vjp")?;
    if co_g != co {
        return Err(NumError::ShapeMismatch {
            context: "conv2d_input_vjp channels",
            expected: vec![kh, kw, ci, co_g],
            got: filters.shape().to_vec(),
        });
    }
    let (h, w) = input_hw;
    let (sh, sw) = stride;
    if conv_out_dim(h, kh, sh, padding)? != ho || conv_out_dim(w, kw, sw, padding)? != wo {
        return Err(NumError::ShapeMismatch {
            context: "conv2d_input_vjp output extent",
            expected: vec![conv_out_dim(h, kh, sh, padding)?, conv_out_dim(w, kw, sw, padding)?],
            got: vec![ho, wo],
        });
    }
    let pt = pad_before(h, kh, sh, padding);
    let pl = pad_before(w, kw, sw, padding);

    let g = grad_out.data();
    let f = filters.data();
    let fil_dims = [kh, kw, ci, co];
    let xg_dims = [n, h, w, ci];
    let mut xg = vec![E::zero(); n * h * w * ci];

    for b in 0..n {
        for oy in 0..ho {
            let iy0 = (oy * sh) as isize - pt as isize;
            for ox in 0..wo {
                let ix0 = (ox * sw) as isize - pl as isize;
                let gbase = ((b * ho + oy) * wo + ox) * co;
                let grow = &g[gbase..gbase + co];
                for ky in 0..kh {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let xbase = at4(&xg_dims, b, iy as usize, ix as usize, 0);
                        for cin in 0..ci {
                            let fbase = at4(&fil_dims, ky, kx, cin, 0);
                            let frow = &f[fbase..fbase + co];
                            let mut s = E::zero();
                            for (&gv, &fv) in grow.iter().zip(frow) {
                                s = s + gv * fv;
                            }
                            xg[xbase + cin] = xg[xbase + cin] + s;
                        }
                    }
                }
            }
        }
    }
    let t = Tensor::from_vec(&[n, h, w, ci], xg)?;
    Ok(restore_batch(t, batched))
}

/// Gradient of [`conv2d_forward`] with respect to its filters.
pub fn conv2d_filter_vjp<E: Real>(
    input: &Tensor<E>,
    grad_out: &Tensor<E>,
    stride: (usize, usize),
    padding: Padding,
    filter_hw: (usize, usize),
) -> Result<Tensor<E>> {
    let (n, h, w, ci, _) = image_dims(input.shape(), "conv2d_filter_vjp")?;
    let (ng, ho, wo, co, _) = image_dims(grad_out.shape(), "conv2d_filter_vjp")?;
    if n != ng {
        return Err(NumError::ShapeMismatch {
            context: "conv2d_filter_vjp batch",
            expected: vec![n],
            got: vec![ng],
        });
    }
    let (kh, kw) = filter_hw;
    let (sh, sw) = stride;
    if conv_out_dim(h, kh, sh, padding)? != ho || conv_out_dim(w, kw, sw, padding)? != wo {
        return Err(NumError::ShapeMismatch {
            context: "conv2d_filter_vjp output extent",
            expected: vec![conv_out_dim(h, kh, sh, padding)?, conv_out_dim(w, kw, sw, padding)?],
            got: vec![ho, wo],
        });
    }
    let pt = pad_before(h, kh, sh, padding);
    let pl = pad_before(w, kw, sw, padding);

    let x = input.data();
    let g = grad_out.data();
    let in_dims = [n, h, w, ci];
    let fil_dims = [kh, kw, ci, co];
    let mut fg = vec![E::zero(); kh * kw * ci * co];

    for b in 0..n {
        for oy in 0..ho {
            let iy0 = (oy * sh) as isize - pt as isize;
            for ox in 0..wo {
                let ix0 = (ox * sw) as isize - pl as isize;
                let gbase = ((b * ho + oy) * wo + ox) * co;
                let grow = &g[gbase..gbase + co];
                for ky in 0..kh {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let xbase = at4(&in_dims, b, iy as usize, ix as usize, 0);
                        for cin in 0..ci {
                            let xv = x[xbase + cin];
                            let fbase = at4(&fil_dims, ky, kx, cin, 0);
                            let frow = &mut fg[fbase..fbase + co];
                            for (fv, &gv) in frow.iter_mut().zip(grow) {
                                *fv = *fv + xv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[kh, kw, ci, co], fg)
}

/// Fractionally-strided (transpose) convolution; see the module docs for the
/// adjoint definition. Input `[.., H, W, in_c]`, filters `[kh, kw, out_c, in_c]`.
pub fn conv2d_transpose_forward<E: Real>(
    input: &Tensor<E>,
    filters: &Tensor<E>,
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor<E>> {
    let (_, h, w, cin, _) = image_dims(input.shape(), "conv2d_transpose_forward")?;
    let (kh, kw, _cout, ci_f) = filter_dims(filters.shape(), "conv2d_transpose_forward")?;
    if ci_f != cin {
        return Err(NumError::ShapeMismatch {
            context: "conv2d_transpose_forward channels",
            expected: vec![kh, kw, _cout, cin],
            got: filters.shape().to_vec(),
        });
    }
    let (sh, sw) = stride;
    let (big_h, big_w) = transpose_out_hw((h, w), (kh, kw), (sh, sw), padding)?;
    conv2d_input_vjp(input, filters, stride, padding, (big_h, big_w))
}

/// Output spatial extent of [`conv2d_transpose_forward`].
pub fn transpose_out_hw(
    in_hw: (usize, usize),
    window: (usize, usize),
    stride: (usize, usize),
    padding: Padding,
) -> Result<(usize, usize)> {
    let one = |extent: usize, k: usize, s: usize| -> Result<usize> {
        if s == 0 {
            return Err(NumError::NonPositive {
                context: "transpose_out_hw",
                what: "stride",
            });
        }
        if extent == 0 {
            return Err(NumError::NonPositive {
                context: "transpose_out_hw",
                what: "input extent",
            });
        }
        Ok(match padding {
            Padding::Same => extent * s,
            Padding::Valid => (extent - 1) * s + k,
        })
    };
    Ok((one(in_hw.0, window.0, stride.0)?, one(in_hw.1, window.1, stride.1)?))
}

/// Max pooling with truncating (floor) semantics: output extent is
/// `floor((extent - window) / stride) + 1`, so trailing rows/columns that do
/// not fill a complete window are dropped. Returns the pooled tensor and the
/// flat input index of each selected maximum (first maximum wins on ties),
/// which the backward pass routes gradient through.
pub fn maxpool2d_forward<E: Real>(
    input: &Tensor<E>,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<E>, Vec<usize>)> {
    let (n, h, w, c, batched) = image_dims(input.shape(), "maxpool2d_forward")?;
    let (wh, ww) = window;
    let (sh, sw) = stride;
    if wh == 0 || ww == 0 {
        return Err(NumError::NonPositive {
            context: "maxpool2d_forward",
            what: "window",
        });
    }
    if sh == 0 || sw == 0 {
        return Err(NumError::NonPositive {
            context: "maxpool2d_forward",
            what: "stride",
        });
    }
    if wh > h || ww > w {
        return Err(NumError::WindowTooLarge {
            window: wh,
            window2: ww,
            extent: h.min(w),
        });
    }
    let ho = (h - wh) / sh + 1;
    let wo = (w - ww) / sw + 1;

    let x = input.data();
    let in_dims = [n, h, w, c];
    let mut out = vec![E::zero(); n * ho * wo * c];
    let mut argmax = vec![0usize; out.len()];

    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                for ch in 0..c {
                    let mut best = E::neg_infinity();
                    let mut best_at = 0usize;
                    for ky in 0..wh {
                        for kx in 0..ww {
                            let idx = at4(&in_dims, b, oy * sh + ky, ox * sw + kx, ch);
                            if x[idx] > best {
                                best = x[idx];
                                best_at = idx;
                            }
                        }
                    }
                    let o = ((b * ho + oy) * wo + ox) * c + ch;
                    out[o] = best;
                    argmax[o] = best_at;
                }
            }
        }
    }
    let t = Tensor::from_vec(&[n, ho, wo, c], out)?;
    Ok((restore_batch(t, batched), argmax))
}

/// Scatter pooled gradients back to the argmax positions.
pub fn maxpool2d_backward<E: Real>(
    grad_out: &Tensor<E>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<E>> {
    if grad_out.len() != argmax.len() {
        return Err(NumError::LengthMismatch {
            context: "maxpool2d_backward",
            shape: grad_out.shape().to_vec(),
            len: argmax.len(),
            want: grad_out.len(),
        });
    }
    let mut xg = Tensor::zeros(input_shape);
    let buf = xg.data_mut();
    for (&g, &i) in grad_out.data().iter().zip(argmax) {
        buf[i] = buf[i] + g;
    }
    Ok(xg)
}

/// Affine layer: `y = x W + b` with `x` of shape `[in]` or `[B, in]`,
/// `W` of shape `[in, out]`, `b` of shape `[out]`.
pub fn dense_forward<E: Real>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    bias: &Tensor<E>,
) -> Result<Tensor<E>> {
    let (batch, din, batched) = match *input.shape() {
        [d] => (1, d, false),
        [b, d] => (b, d, true),
        _ => {
            return Err(NumError::BadRank {
                context: "dense_forward",
                rank: input.rank(),
                expected: "1 ([in]) or 2 ([batch,in])",
            })
        }
    };
    let (wi, wo) = match *weights.shape() {
        [i, o] => (i, o),
        _ => {
            return Err(NumError::BadRank {
                context: "dense_forward weights",
                rank: weights.rank(),
                expected: "2 ([in,out])",
            })
        }
    };
    if wi != din {
        return Err(NumError::ShapeMismatch {
            context: "dense_forward weights",
            expected: vec![din, wo],
            got: weights.shape().to_vec(),
        });
    }
    if bias.shape() != [wo] {
        return Err(NumError::ShapeMismatch {
            context: "dense_forward bias",
            expected: vec![wo],
            got: bias.shape().to_vec(),
        });
    }

    let x = input.data();
    let wt = weights.data();
    let bs = bias.data();
    let mut out = vec![E::zero(); batch * wo];
    for b in 0..batch {
        let xrow = &x[b * din..(b + 1) * din];
        let orow = &mut out[b * wo..(b + 1) * wo];
        orow.copy_from_slice(bs);
        for (i, &xv) in xrow.iter().enumerate() {
            let wrow = &wt[i * wo..(i + 1) * wo];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o = *o + xv * wv;
            }
        }
    }
    let t = Tensor::from_vec(&[batch, wo], out)?;
    Ok(if batched {
        t
    } else {
        t.reshaped(&[wo]).expect("dense rank-1 output")
    })
}

/// Per-channel bias add over the trailing axis of `[.., C]`.
pub fn bias_add<E: Real>(input: &Tensor<E>, bias: &Tensor<E>) -> Result<Tensor<E>> {
    let c = *input.shape().last().ok_or(NumError::BadRank {
        context: "bias_add",
        rank: 0,
        expected: ">= 1",
    })?;
    if bias.shape() != [c] {
        return Err(NumError::ShapeMismatch {
            context: "bias_add",
            expected: vec![c],
            got: bias.shape().to_vec(),
        });
    }
    let b = bias.data();
    let mut out = input.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v = *v + b[i % c];
    }
    Ok(out)
}
