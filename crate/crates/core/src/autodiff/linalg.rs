//! Matrix-shaped primitives: products, softmax, layer norm, slicing.

use super::Var;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// C = A(n×k) · B(k×m).
pub fn matmul(a: &Var, b: &Var) -> Result<Var> {
    let (n, k) = a.data().dims2()?;
    let (kb, m) = b.data().dims2()?;
    if k != kb {
        return Err(Error::shape(
            "matmul",
            format!("inner dims {}×{} vs {}×{}", n, k, kb, m),
        ));
    }
    let mut out = vec![0.0; n * m];
    gemm(n, k, m, 1.0, a.data().data(), false, b.data().data(), false, 0.0, &mut out);
    Ok(Var::from_op(
        Tensor::from_vec(&[n, m], out)?,
        vec![a.clone(), b.clone()],
        Box::new(move |g, parents| {
            let (a, b) = (&parents[0], &parents[1]);
            // dA = dC · B^T ; dB = A^T · dC
            let mut ga = vec![0.0; n * k];
            gemm(n, m, k, 1.0, g.data(), false, b.data().data(), true, 0.0, &mut ga);
            let mut gb = vec![0.0; k * m];
            gemm(k, n, m, 1.0, a.data().data(), true, g.data(), false, 0.0, &mut gb);
            a.accum_grad(&Tensor::from_vec(&[n, k], ga).unwrap());
            b.accum_grad(&Tensor::from_vec(&[k, m], gb).unwrap());
        }),
    ))
}

pub fn transpose2(a: &Var) -> Result<Var> {
    let (n, m) = a.data().dims2()?;
    let ad = a.data().data();
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = ad[i * m + j];
        }
    }
    Ok(Var::from_op(
        Tensor::from_vec(&[m, n], out)?,
        vec![a.clone()],
        Box::new(move |g, parents| {
            let gd = g.data();
            let mut gt = vec![0.0; n * m];
            for j in 0..m {
                for i in 0..n {
                    gt[i * m + j] = gd[j * n + i];
                }
            }
            parents[0].accum_grad(&Tensor::from_vec(&[n, m], gt).unwrap());
        }),
    ))
}

/// Row-wise softmax of an n×m matrix.
pub fn softmax_rows(a: &Var) -> Result<Var> {
    let (n, m) = a.data().dims2()?;
    let ad = a.data().data();
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &ad[i * m..(i + 1) * m];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..m {
            let e = (row[j] - mx).exp();
            out[i * m + j] = e;
            sum += e;
        }
        for j in 0..m {
            out[i * m + j] /= sum;
        }
    }
    let saved = out.clone();
    Ok(Var::from_op(
        Tensor::from_vec(&[n, m], out)?,
        vec![a.clone()],
        Box::new(move |g, parents| {
            let gd = g.data();
            let mut gx = vec![0.0; n * m];
            for i in 0..n {
                let y = &saved[i * m..(i + 1) * m];
                let gr = &gd[i * m..(i + 1) * m];
                let dot: f64 = y.iter().zip(gr).map(|(y, g)| y * g).sum();
                for j in 0..m {
                    gx[i * m + j] = y[j] * (gr[j] - dot);
                }
            }
            parents[0].accum_grad(&Tensor::from_vec(&[n, m], gx).unwrap());
        }),
    ))
}

/// Per-token layer normalization over the channel axis of an N×C matrix,
/// followed by affine gain/shift.
pub fn layer_norm(tokens: &Var, gain: &Var, shift: &Var, eps: f64) -> Result<Var> {
    let (n, c) = tokens.data().dims2()?;
    if gain.data().len() != c || shift.data().len() != c {
        return Err(Error::shape(
            "layer_norm",
            format!(
                "gain/shift lengths {}/{} vs channel count {}",
                gain.data().len(),
                shift.data().len(),
                c
            ),
        ));
    }
    let xd = tokens.data().data();
    let gd = gain.data().data();
    let sd = shift.data().data();
    let mut out = vec![0.0; n * c];
    let mut xhat = vec![0.0; n * c];
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let row = &xd[i * c..(i + 1) * c];
        let mean: f64 = row.iter().sum::<f64>() / c as f64;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std[i] = istd;
        for j in 0..c {
            let xh = (row[j] - mean) * istd;
            xhat[i * c + j] = xh;
            out[i * c + j] = gd[j] * xh + sd[j];
        }
    }
    Ok(Var::from_op(
        Tensor::from_vec(&[n, c], out)?,
        vec![tokens.clone(), gain.clone(), shift.clone()],
        Box::new(move |g, parents| {
            let gout = g.data();
            let gaind = parents[1].data().data();
            let mut gx = vec![0.0; n * c];
            let mut ggain = vec![0.0; c];
            let mut gshift = vec![0.0; c];
            for i in 0..n {
                let xh = &xhat[i * c..(i + 1) * c];
                let go = &gout[i * c..(i + 1) * c];
                let mut mean_dxhat = 0.0;
                let mut mean_dxhat_xhat = 0.0;
                for j in 0..c {
                    let dxh = go[j] * gaind[j];
                    mean_dxhat += dxh;
                    mean_dxhat_xhat += dxh * xh[j];
                    ggain[j] += go[j] * xh[j];
                    gshift[j] += go[j];
                }
                mean_dxhat /= c as f64;
                mean_dxhat_xhat /= c as f64;
                for j in 0..c {
                    let dxh = go[j] * gaind[j];
                    gx[i * c + j] = inv_std[i] * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                }
            }
            parents[0].accum_grad(&Tensor::from_vec(&[n, c], gx).unwrap());
            parents[1].accum_grad(&Tensor::from_vec(&[c], ggain).unwrap());
            parents[2].accum_grad(&Tensor::from_vec(&[c], gshift).unwrap());
        }),
    ))
}

pub fn reshape(a: &Var, shape: &[usize]) -> Result<Var> {
    let data = a.data().clone().reshaped(shape)?;
    let old_shape = a.shape().to_vec();
    Ok(Var::from_op(
        data,
        vec![a.clone()],
        Box::new(move |g, parents| {
            let gr = g.clone().reshaped(&old_shape).unwrap();
            parents[0].accum_grad(&gr);
        }),
    ))
}

/// Contiguous row slice of a 2-D matrix.
pub fn slice_rows(a: &Var, start: usize, len: usize) -> Result<Var> {
    let (n, m) = a.data().dims2()?;
    if start + len > n {
        return Err(Error::shape(
            "slice_rows",
            format!("rows {}..{} out of {}", start, start + len, n),
        ));
    }
    let data = Tensor::from_vec(
        &[len, m],
        a.data().data()[start * m..(start + len) * m].to_vec(),
    )?;
    Ok(Var::from_op(
        data,
        vec![a.clone()],
        Box::new(move |g, parents| {
            let mut gx = vec![0.0; n * m];
            gx[start * m..(start + len) * m].copy_from_slice(g.data());
            parents[0].accum_grad(&Tensor::from_vec(&[n, m], gx).unwrap());
        }),
    ))
}

/// Column slice of a 2-D matrix.
pub fn slice_cols(a: &Var, start: usize, len: usize) -> Result<Var> {
    let (n, m) = a.data().dims2()?;
    if start + len > m {
        return Err(Error::shape(
            "slice_cols",
            format!("cols {}..{} out of {}", start, start + len, m),
        ));
    }
    let ad = a.data().data();
    let mut out = vec![0.0; n * len];
    for i in 0..n {
        out[i * len..(i + 1) * len].copy_from_slice(&ad[i * m + start..i * m + start + len]);
    }
    Ok(Var::from_op(
        Tensor::from_vec(&[n, len], out)?,
        vec![a.clone()],
        Box::new(move |g, parents| {
            let gd = g.data();
            let mut gx = vec![0.0; n * m];
            for i in 0..n {
                gx[i * m + start..i * m + start + len]
                    .copy_from_slice(&gd[i * len..(i + 1) * len]);
            }
            parents[0].accum_grad(&Tensor::from_vec(&[n, m], gx).unwrap());
        }),
    ))
}

/// Concatenate 2-D matrices with equal row counts along the column axis.
pub fn concat_cols(parts: &[Var]) -> Result<Var> {
    if parts.is_empty() {
        return Err(Error::shape("concat_cols", "empty part list".to_string()));
    }
    let (n, _) = parts[0].data().dims2()?;
    let widths: Vec<usize> = parts
        .iter()
        .map(|p| p.data().dims2().map(|(r, c)| if r == n { c } else { 0 }))
        .collect::<Result<_>>()?;
    if widths.contains(&0) && parts.iter().any(|p| p.data().dims2().unwrap().1 != 0) {
        return Err(Error::shape("concat_cols", "row count mismatch".to_string()));
    }
    let m: usize = widths.iter().sum();
    let mut out = vec![0.0; n * m];
    let mut off = 0;
    for (p, &w) in parts.iter().zip(&widths) {
        let pd = p.data().data();
        for i in 0..n {
            out[i * m + off..i * m + off + w].copy_from_slice(&pd[i * w..(i + 1) * w]);
        }
        off += w;
    }
    Ok(Var::from_op(
        Tensor::from_vec(&[n, m], out)?,
        parts.to_vec(),
        Box::new(move |g, parents| {
            let gd = g.data();
            let mut off = 0;
            for (p, &w) in parents.iter().zip(&widths) {
                let mut gp = vec![0.0; n * w];
                for i in 0..n {
                    gp[i * w..(i + 1) * w].copy_from_slice(&gd[i * m + off..i * m + off + w]);
                }
                p.accum_grad(&Tensor::from_vec(&[n, w], gp).unwrap());
                off += w;
            }
        }),
    ))
}

/// Concatenate tensors along their first axis; trailing dims must agree.
pub fn concat_first_axis(parts: &[Var]) -> Result<Var> {
    if parts.is_empty() {
        return Err(Error::shape("concat_first_axis", "empty part list".to_string()));
    }
    let tail = parts[0].shape()[1..].to_vec();
    let mut first = 0usize;
    for p in parts {
        if p.shape()[1..] != tail[..] {
            return Err(Error::shape(
                "concat_first_axis",
                format!("trailing dims {:?} vs {:?}", &p.shape()[1..], tail),
            ));
        }
        first += p.shape()[0];
    }
    let mut shape = vec![first];
    shape.extend_from_slice(&tail);
    let mut data = Vec::with_capacity(shape.iter().product());
    for p in parts {
        data.extend_from_slice(p.data().data());
    }
    let lens: Vec<usize> = parts.iter().map(|p| p.data().len()).collect();
    let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape().to_vec()).collect();
    Ok(Var::from_op(
        Tensor::from_vec(&shape, data)?,
        parts.to_vec(),
        Box::new(move |g, parents| {
            let gd = g.data();
            let mut off = 0;
            for (i, p) in parents.iter().enumerate() {
                let gp = Tensor::from_vec(&shapes[i], gd[off..off + lens[i]].to_vec()).unwrap();
                p.accum_grad(&gp);
                off += lens[i];
            }
        }),
    ))
}
