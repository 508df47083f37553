//! Image-shaped primitives: convolution, pooling, sampling, resampling.

use super::Var;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Output spatial size of a strided cross-correlation.
pub fn conv_out_size(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

fn im2col(
    x: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    col: &mut [f64],
) {
    // col is (c_in*k*k) × (ho*wo), row-major.
    for ci in 0..c_in {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let base = row * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        col[base + oy * wo..base + (oy + 1) * wo].fill(0.0);
                        continue;
                    }
                    let in_row = (ci * h + iy as usize) * w;
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        col[base + oy * wo + ox] = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            x[in_row + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im_accum(
    col: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    x_grad: &mut [f64],
) {
    for ci in 0..c_in {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let base = row * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let in_row = (ci * h + iy as usize) * w;
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            x_grad[in_row + ix as usize] += col[base + oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Strided 2-D cross-correlation with bias: weight is Cout×Cin×k×k.
pub fn conv2d(x: &Var, weight: &Var, bias: &Var, stride: usize, pad: usize) -> Result<Var> {
    let (b, c_in, h, w) = x.data().dims4()?;
    let (c_out, wc_in, k, k2) = weight.data().dims4()?;
    if k != k2 {
        return Err(Error::shape(
            "conv2d",
            format!("non-square kernel {}×{}", k, k2),
        ));
    }
    if wc_in != c_in {
        return Err(Error::shape(
            "conv2d",
            format!("input channels {} but weight expects {}", c_in, wc_in),
        ));
    }
    if bias.data().len() != c_out {
        return Err(Error::shape(
            "conv2d",
            format!("bias length {} vs {} output channels", bias.data().len(), c_out),
        ));
    }
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::shape(
            "conv2d",
            format!("spatial size {}×{} too small for kernel {}", h, w, k),
        ));
    }
    let ho = conv_out_size(h, k, stride, pad);
    let wo = conv_out_size(w, k, stride, pad);
    let ck2 = c_in * k * k;
    let mut out = vec![0.0; b * c_out * ho * wo];
    let mut col = vec![0.0; ck2 * ho * wo];
    let xd = x.data().data();
    let wd = weight.data().data();
    let bd = bias.data().data();
    for bi in 0..b {
        im2col(
            &xd[bi * c_in * h * w..(bi + 1) * c_in * h * w],
            c_in,
            h,
            w,
            k,
            stride,
            pad,
            ho,
            wo,
            &mut col,
        );
        let ob = &mut out[bi * c_out * ho * wo..(bi + 1) * c_out * ho * wo];
        gemm(c_out, ck2, ho * wo, 1.0, wd, false, &col, false, 0.0, ob);
        for co in 0..c_out {
            let off = co * ho * wo;
            for v in &mut ob[off..off + ho * wo] {
                *v += bd[co];
            }
        }
    }
    Ok(Var::from_op(
        Tensor::from_vec(&[b, c_out, ho, wo], out)?,
        vec![x.clone(), weight.clone(), bias.clone()],
        Box::new(move |g, parents| {
            let (x, weight, bias) = (&parents[0], &parents[1], &parents[2]);
            let xd = x.data().data();
            let wd = weight.data().data();
            let gd = g.data();
            let mut gx = vec![0.0; xd.len()];
            let mut gw = vec![0.0; wd.len()];
            let mut gb = vec![0.0; c_out];
            let mut col = vec![0.0; ck2 * ho * wo];
            let mut gcol = vec![0.0; ck2 * ho * wo];
            for bi in 0..b {
                let gob = &gd[bi * c_out * ho * wo..(bi + 1) * c_out * ho * wo];
                im2col(
                    &xd[bi * c_in * h * w..(bi + 1) * c_in * h * w],
                    c_in,
                    h,
                    w,
                    k,
                    stride,
                    pad,
                    ho,
                    wo,
                    &mut col,
                );
                // dW += dOut · col^T
                gemm(c_out, ho * wo, ck2, 1.0, gob, false, &col, true, 1.0, &mut gw);
                // dcol = W^T · dOut
                gemm(ck2, c_out, ho * wo, 1.0, wd, true, gob, false, 0.0, &mut gcol);
                col2im_accum(
                    &gcol,
                    c_in,
                    h,
                    w,
                    k,
                    stride,
                    pad,
                    ho,
                    wo,
                    &mut gx[bi * c_in * h * w..(bi + 1) * c_in * h * w],
                );
                for co in 0..c_out {
                    gb[co] += gob[co * ho * wo..(co + 1) * ho * wo].iter().sum::<f64>();
                }
            }
            x.accum_grad(&Tensor::from_vec(x.shape(), gx).unwrap());
            weight.accum_grad(&Tensor::from_vec(weight.shape(), gw).unwrap());
            bias.accum_grad(&Tensor::from_vec(&[c_out], gb).unwrap());
        }),
    ))
}

#[inline]
fn mirror(i: isize, n: usize) -> usize {
    // Symmetric (edge-repeating) boundary extension.
    let n = n as isize;
    let j = if i < 0 { -i - 1 } else if i >= n { 2 * n - 1 - i } else { i };
    j.clamp(0, n - 1) as usize
}

/// Per-channel (depthwise) convolution with a single shared k×k kernel and
/// symmetric boundary padding, so the spatial shape is preserved.
/// Differentiable w.r.t. both the input and the kernel.
pub fn depthwise_conv_reflect(x: &Var, kernel: &Var) -> Result<Var> {
    let (b, c, h, w) = x.data().dims4()?;
    let (k, k2) = kernel.data().dims2()?;
    if k != k2 || k % 2 == 0 {
        return Err(Error::shape(
            "depthwise_conv_reflect",
            format!("kernel must be odd square, got {}×{}", k, k2),
        ));
    }
    let half = (k / 2) as isize;
    let xd = x.data().data();
    let kd = kernel.data().data();
    let mut out = vec![0.0; xd.len()];
    for bc in 0..b * c {
        let plane = &xd[bc * h * w..(bc + 1) * h * w];
        let op = &mut out[bc * h * w..(bc + 1) * h * w];
        for y in 0..h {
            for x0 in 0..w {
                let mut acc = 0.0;
                for ki in 0..k {
                    let iy = mirror(y as isize + ki as isize - half, h);
                    for kj in 0..k {
                        let ix = mirror(x0 as isize + kj as isize - half, w);
                        acc += plane[iy * w + ix] * kd[ki * k + kj];
                    }
                }
                op[y * w + x0] = acc;
            }
        }
    }
    Ok(Var::from_op(
        Tensor::from_vec(x.shape(), out)?,
        vec![x.clone(), kernel.clone()],
        Box::new(move |g, parents| {
            let (x, kernel) = (&parents[0], &parents[1]);
            let xd = x.data().data();
            let kd = kernel.data().data();
            let gd = g.data();
            let mut gx = vec![0.0; xd.len()];
            let mut gk = vec![0.0; kd.len()];
            for bc in 0..b * c {
                let plane = &xd[bc * h * w..(bc + 1) * h * w];
                let gp = &gd[bc * h * w..(bc + 1) * h * w];
                let gxp = &mut gx[bc * h * w..(bc + 1) * h * w];
                for y in 0..h {
                    for x0 in 0..w {
                        let go = gp[y * w + x0];
                        for ki in 0..k {
                            let iy = mirror(y as isize + ki as isize - half, h);
                            for kj in 0..k {
                                let ix = mirror(x0 as isize + kj as isize - half, w);
                                gxp[iy * w + ix] += go * kd[ki * k + kj];
                                gk[ki * k + kj] += go * plane[iy * w + ix];
                            }
                        }
                    }
                }
            }
            x.accum_grad(&Tensor::from_vec(x.shape(), gx).unwrap());
            kernel.accum_grad(&Tensor::from_vec(kernel.shape(), gk).unwrap());
        }),
    ))
}

/// Per-pixel mean and max over the channel axis: B×C×H×W → B×2×H×W.
/// Channel 0 is the mean, channel 1 the max.
pub fn pool_channel_avg_max(x: &Var) -> Result<Var> {
    let (b, c, h, w) = x.data().dims4()?;
    let hw = h * w;
    let xd = x.data().data();
    let mut out = vec![0.0; b * 2 * hw];
    let mut argmax = vec![0usize; b * hw];
    for bi in 0..b {
        for i in 0..hw {
            let mut sum = 0.0;
            let mut best = f64::NEG_INFINITY;
            let mut best_c = 0;
            for ci in 0..c {
                let v = xd[(bi * c + ci) * hw + i];
                sum += v;
                if v > best {
                    best = v;
                    best_c = ci;
                }
            }
            out[(bi * 2) * hw + i] = sum / c as f64;
            out[(bi * 2 + 1) * hw + i] = best;
            argmax[bi * hw + i] = best_c;
        }
    }
    Ok(Var::from_op(
        Tensor::from_vec(&[b, 2, h, w], out)?,
        vec![x.clone()],
        Box::new(move |g, parents| {
            let gd = g.data();
            let p = &parents[0];
            let mut gx = vec![0.0; p.data().len()];
            for bi in 0..b {
                for i in 0..hw {
                    let gavg = gd[(bi * 2) * hw + i] / c as f64;
                    for ci in 0..c {
                        gx[(bi * c + ci) * hw + i] += gavg;
                    }
                    gx[(bi * c + argmax[bi * hw + i]) * hw + i] += gd[(bi * 2 + 1) * hw + i];
                }
            }
            p.accum_grad(&Tensor::from_vec(p.shape(), gx).unwrap());
        }),
    ))
}

struct SampleGeom {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    tx: f64,
    ty: f64,
    // scale of d(pixel coord)/d(normalized coord); zero when clamped
    dx_dnorm: f64,
    dy_dnorm: f64,
}

fn sample_geometry(xn: f64, yn: f64, h: usize, w: usize) -> SampleGeom {
    // Normalized convention: (−1,−1) is the center of the top-left pixel and
    // (+1,+1) the center of the bottom-right pixel; out-of-range clamps.
    let xc = xn.clamp(-1.0, 1.0);
    let yc = yn.clamp(-1.0, 1.0);
    let px = (xc + 1.0) * 0.5 * (w - 1) as f64;
    let py = (yc + 1.0) * 0.5 * (h - 1) as f64;
    let x0 = px.floor().min((w - 1) as f64).max(0.0) as usize;
    let y0 = py.floor().min((h - 1) as f64).max(0.0) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    SampleGeom {
        x0,
        x1,
        y0,
        y1,
        tx: px - x0 as f64,
        ty: py - y0 as f64,
        dx_dnorm: if xn.abs() > 1.0 { 0.0 } else { 0.5 * (w - 1) as f64 },
        dy_dnorm: if yn.abs() > 1.0 { 0.0 } else { 0.5 * (h - 1) as f64 },
    }
}

/// Bilinear sampling of a feature map at N normalized (x, y) locations, the
/// same location list applied to every batch element. Output is B×C×N.
/// Differentiable w.r.t. the feature map and the coordinates; coordinate
/// gradients vanish where the location was clamped to the boundary.
pub fn bilinear_sample(feat: &Var, coords: &Var) -> Result<Var> {
    let (b, c, h, w) = feat.data().dims4()?;
    let (n, two) = coords.data().dims2()?;
    if two != 2 {
        return Err(Error::shape(
            "bilinear_sample",
            format!("coords must be N×2, got N×{}", two),
        ));
    }
    let fd = feat.data().data();
    let cd = coords.data().data();
    let hw = h * w;
    let mut out = vec![0.0; b * c * n];
    for i in 0..n {
        let g = sample_geometry(cd[i * 2], cd[i * 2 + 1], h, w);
        let w00 = (1.0 - g.ty) * (1.0 - g.tx);
        let w01 = (1.0 - g.ty) * g.tx;
        let w10 = g.ty * (1.0 - g.tx);
        let w11 = g.ty * g.tx;
        for bi in 0..b {
            for ci in 0..c {
                let plane = &fd[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                out[(bi * c + ci) * n + i] = w00 * plane[g.y0 * w + g.x0]
                    + w01 * plane[g.y0 * w + g.x1]
                    + w10 * plane[g.y1 * w + g.x0]
                    + w11 * plane[g.y1 * w + g.x1];
            }
        }
    }
    Ok(Var::from_op(
        Tensor::from_vec(&[b, c, n], out)?,
        vec![feat.clone(), coords.clone()],
        Box::new(move |gout, parents| {
            let (feat, coords) = (&parents[0], &parents[1]);
            let fd = feat.data().data();
            let cd = coords.data().data();
            let gd = gout.data();
            let mut gf = vec![0.0; fd.len()];
            let mut gc = vec![0.0; cd.len()];
            for i in 0..n {
                let g = sample_geometry(cd[i * 2], cd[i * 2 + 1], h, w);
                let w00 = (1.0 - g.ty) * (1.0 - g.tx);
                let w01 = (1.0 - g.ty) * g.tx;
                let w10 = g.ty * (1.0 - g.tx);
                let w11 = g.ty * g.tx;
                for bi in 0..b {
                    for ci in 0..c {
                        let go = gd[(bi * c + ci) * n + i];
                        let off = (bi * c + ci) * hw;
                        gf[off + g.y0 * w + g.x0] += go * w00;
                        gf[off + g.y0 * w + g.x1] += go * w01;
                        gf[off + g.y1 * w + g.x0] += go * w10;
                        gf[off + g.y1 * w + g.x1] += go * w11;
                        let v00 = fd[off + g.y0 * w + g.x0];
                        let v01 = fd[off + g.y0 * w + g.x1];
                        let v10 = fd[off + g.y1 * w + g.x0];
                        let v11 = fd[off + g.y1 * w + g.x1];
                        let dpx = (1.0 - g.ty) * (v01 - v00) + g.ty * (v11 - v10);
                        let dpy = (1.0 - g.tx) * (v10 - v00) + g.tx * (v11 - v01);
                        gc[i * 2] += go * dpx * g.dx_dnorm;
                        gc[i * 2 + 1] += go * dpy * g.dy_dnorm;
                    }
                }
            }
            feat.accum_grad(&Tensor::from_vec(feat.shape(), gf).unwrap());
            coords.accum_grad(&Tensor::from_vec(coords.shape(), gc).unwrap());
        }),
    ))
}

/// Nearest-neighbor 2× spatial upsampling.
pub fn nearest_upsample2(x: &Var) -> Result<Var> {
    let (b, c, h, w) = x.data().dims4()?;
    let (h2, w2) = (h * 2, w * 2);
    let xd = x.data().data();
    let mut out = vec![0.0; b * c * h2 * w2];
    for bc in 0..b * c {
        let src = &xd[bc * h * w..(bc + 1) * h * w];
        let dst = &mut out[bc * h2 * w2..(bc + 1) * h2 * w2];
        for y in 0..h2 {
            for x0 in 0..w2 {
                dst[y * w2 + x0] = src[(y / 2) * w + x0 / 2];
            }
        }
    }
    Ok(Var::from_op(
        Tensor::from_vec(&[b, c, h2, w2], out)?,
        vec![x.clone()],
        Box::new(move |g, parents| {
            let gd = g.data();
            let p = &parents[0];
            let mut gx = vec![0.0; p.data().len()];
            for bc in 0..b * c {
                let gdst = &gd[bc * h2 * w2..(bc + 1) * h2 * w2];
                let gsrc = &mut gx[bc * h * w..(bc + 1) * h * w];
                for y in 0..h2 {
                    for x0 in 0..w2 {
                        gsrc[(y / 2) * w + x0 / 2] += gdst[y * w2 + x0];
                    }
                }
            }
            p.accum_grad(&Tensor::from_vec(p.shape(), gx).unwrap());
        }),
    ))
}

/// Bilinear 2× spatial upsampling (half-pixel-center mapping).
pub fn bilinear_upsample2(x: &Var) -> Result<Var> {
    let (b, c, h, w) = x.data().dims4()?;
    let (h2, w2) = (h * 2, w * 2);
    // Precompute the 1-D interpolation stencils.
    let stencil = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let sy = stencil(h2, h);
    let sx = stencil(w2, w);
    let xd = x.data().data();
    let mut out = vec![0.0; b * c * h2 * w2];
    for bc in 0..b * c {
        let src = &xd[bc * h * w..(bc + 1) * h * w];
        let dst = &mut out[bc * h2 * w2..(bc + 1) * h2 * w2];
        for (y, &(y0, y1, ty)) in sy.iter().enumerate() {
            for (x0i, &(x0, x1, tx)) in sx.iter().enumerate() {
                dst[y * w2 + x0i] = (1.0 - ty) * (1.0 - tx) * src[y0 * w + x0]
                    + (1.0 - ty) * tx * src[y0 * w + x1]
                    + ty * (1.0 - tx) * src[y1 * w + x0]
                    + ty * tx * src[y1 * w + x1];
            }
        }
    }
    Ok(Var::from_op(
        Tensor::from_vec(&[b, c, h2, w2], out)?,
        vec![x.clone()],
        Box::new(move |g, parents| {
            let gd = g.data();
            let p = &parents[0];
            let mut gx = vec![0.0; p.data().len()];
            for bc in 0..b * c {
                let gdst = &gd[bc * h2 * w2..(bc + 1) * h2 * w2];
                let gsrc = &mut gx[bc * h * w..(bc + 1) * h * w];
                for (y, &(y0, y1, ty)) in sy.iter().enumerate() {
                    for (x0i, &(x0, x1, tx)) in sx.iter().enumerate() {
                        let go = gdst[y * w2 + x0i];
                        gsrc[y0 * w + x0] += go * (1.0 - ty) * (1.0 - tx);
                        gsrc[y0 * w + x1] += go * (1.0 - ty) * tx;
                        gsrc[y1 * w + x0] += go * ty * (1.0 - tx);
                        gsrc[y1 * w + x1] += go * ty * tx;
                    }
                }
            }
            p.accum_grad(&Tensor::from_vec(p.shape(), gx).unwrap());
        }),
    ))
}

/// Extract batch element `b` as a 1×C×H×W view (copied).
pub fn batch_slice(x: &Var, b: usize) -> Result<Var> {
    let (bn, c, h, w) = x.data().dims4()?;
    if b >= bn {
        return Err(Error::shape(
            "batch_slice",
            format!("batch index {} out of {}", b, bn),
        ));
    }
    let chw = c * h * w;
    let data = Tensor::from_vec(&[1, c, h, w], x.data().data()[b * chw..(b + 1) * chw].to_vec())?;
    Ok(Var::from_op(
        data,
        vec![x.clone()],
        Box::new(move |g, parents| {
            let p = &parents[0];
            let mut gx = vec![0.0; p.data().len()];
            gx[b * chw..(b + 1) * chw].copy_from_slice(g.data());
            p.accum_grad(&Tensor::from_vec(p.shape(), gx).unwrap());
        }),
    ))
}

/// Tile-and-add: out[r·P + p] = grid[r] + off[p], for a constant R×2 grid and
/// a differentiable P×2 offset table. Backward sums offset gradients over all
/// reference points.
pub fn repeat_add_grid(off: &Var, grid: &Tensor) -> Result<Var> {
    let (p, two) = off.data().dims2()?;
    let (r, gtwo) = grid.dims2()?;
    if two != 2 || gtwo != 2 {
        return Err(Error::shape(
            "repeat_add_grid",
            format!("expected ?×2 shapes, got {:?} and {:?}", off.shape(), grid.shape()),
        ));
    }
    let od = off.data().data();
    let gd = grid.data();
    let mut out = vec![0.0; r * p * 2];
    for ri in 0..r {
        for pi in 0..p {
            out[(ri * p + pi) * 2] = gd[ri * 2] + od[pi * 2];
            out[(ri * p + pi) * 2 + 1] = gd[ri * 2 + 1] + od[pi * 2 + 1];
        }
    }
    Ok(Var::from_op(
        Tensor::from_vec(&[r * p, 2], out)?,
        vec![off.clone()],
        Box::new(move |g, parents| {
            let gd = g.data();
            let mut go = vec![0.0; p * 2];
            for ri in 0..r {
                for pi in 0..p {
                    go[pi * 2] += gd[(ri * p + pi) * 2];
                    go[pi * 2 + 1] += gd[(ri * p + pi) * 2 + 1];
                }
            }
            parents[0].accum_grad(&Tensor::from_vec(&[p, 2], go).unwrap());
        }),
    ))
}
