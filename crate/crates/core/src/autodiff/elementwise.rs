//! Elementwise primitives and their backward maps.

use super::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_same_shape(op: &'static str, a: &Var, b: &Var) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("operand shapes {:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

pub fn add(a: &Var, b: &Var) -> Result<Var> {
    check_same_shape("add", a, b)?;
    let mut out = a.data().clone();
    out.add_assign(b.data());
    Ok(Var::from_op(
        out,
        vec![a.clone(), b.clone()],
        Box::new(|g, parents| {
            parents[0].accum_grad(g);
            parents[1].accum_grad(g);
        }),
    ))
}

pub fn sub(a: &Var, b: &Var) -> Result<Var> {
    check_same_shape("sub", a, b)?;
    let data = Tensor::from_vec(
        a.shape(),
        a.data()
            .data()
            .iter()
            .zip(b.data().data())
            .map(|(x, y)| x - y)
            .collect(),
    )?;
    Ok(Var::from_op(
        data,
        vec![a.clone(), b.clone()],
        Box::new(|g, parents| {
            parents[0].accum_grad(g);
            let neg = Tensor::from_vec(g.shape(), g.data().iter().map(|v| -v).collect()).unwrap();
            parents[1].accum_grad(&neg);
        }),
    ))
}

pub fn mul(a: &Var, b: &Var) -> Result<Var> {
    check_same_shape("mul", a, b)?;
    let data = Tensor::from_vec(
        a.shape(),
        a.data()
            .data()
            .iter()
            .zip(b.data().data())
            .map(|(x, y)| x * y)
            .collect(),
    )?;
    Ok(Var::from_op(
        data,
        vec![a.clone(), b.clone()],
        Box::new(|g, parents| {
            let (a, b) = (&parents[0], &parents[1]);
            let ga = Tensor::from_vec(
                g.shape(),
                g.data()
                    .iter()
                    .zip(b.data().data())
                    .map(|(g, y)| g * y)
                    .collect(),
            )
            .unwrap();
            let gb = Tensor::from_vec(
                g.shape(),
                g.data()
                    .iter()
                    .zip(a.data().data())
                    .map(|(g, x)| g * x)
                    .collect(),
            )
            .unwrap();
            a.accum_grad(&ga);
            b.accum_grad(&gb);
        }),
    ))
}

pub fn div(a: &Var, b: &Var) -> Result<Var> {
    check_same_shape("div", a, b)?;
    let data = Tensor::from_vec(
        a.shape(),
        a.data()
            .data()
            .iter()
            .zip(b.data().data())
            .map(|(x, y)| x / y)
            .collect(),
    )?;
    Ok(Var::from_op(
        data,
        vec![a.clone(), b.clone()],
        Box::new(|g, parents| {
            let (a, b) = (&parents[0], &parents[1]);
            let ad = a.data().data();
            let bd = b.data().data();
            let ga =
                Tensor::from_vec(g.shape(), g.data().iter().zip(bd).map(|(g, y)| g / y).collect())
                    .unwrap();
            let gb = Tensor::from_vec(
                g.shape(),
                g.data()
                    .iter()
                    .zip(ad.iter().zip(bd))
                    .map(|(g, (x, y))| -g * x / (y * y))
                    .collect(),
            )
            .unwrap();
            a.accum_grad(&ga);
            b.accum_grad(&gb);
        }),
    ))
}

pub fn scale(a: &Var, s: f64) -> Var {
    let data =
        Tensor::from_vec(a.shape(), a.data().data().iter().map(|v| v * s).collect()).unwrap();
    Var::from_op(
        data,
        vec![a.clone()],
        Box::new(move |g, parents| {
            let gs =
                Tensor::from_vec(g.shape(), g.data().iter().map(|v| v * s).collect()).unwrap();
            parents[0].accum_grad(&gs);
        }),
    )
}

pub fn add_scalar(a: &Var, s: f64) -> Var {
    let data =
        Tensor::from_vec(a.shape(), a.data().data().iter().map(|v| v + s).collect()).unwrap();
    Var::from_op(
        data,
        vec![a.clone()],
        Box::new(|g, parents| parents[0].accum_grad(g)),
    )
}

pub fn sigmoid(a: &Var) -> Var {
    let data = Tensor::from_vec(
        a.shape(),
        a.data()
            .data()
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect(),
    )
    .unwrap();
    let saved = data.clone();
    Var::from_op(
        data,
        vec![a.clone()],
        Box::new(move |g, parents| {
            let gx = Tensor::from_vec(
                g.shape(),
                g.data()
                    .iter()
                    .zip(saved.data())
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect(),
            )
            .unwrap();
            parents[0].accum_grad(&gx);
        }),
    )
}

/// x · sigmoid(x): the smooth nonlinearity used by the backbone and head.
pub fn silu(a: &Var) -> Var {
    let data = Tensor::from_vec(
        a.shape(),
        a.data()
            .data()
            .iter()
            .map(|&x| x / (1.0 + (-x).exp()))
            .collect(),
    )
    .unwrap();
    Var::from_op(
        data,
        vec![a.clone()],
        Box::new(|g, parents| {
            let x = parents[0].data().data();
            let gx = Tensor::from_vec(
                g.shape(),
                g.data()
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| {
                        let s = 1.0 / (1.0 + (-x).exp());
                        g * s * (1.0 + x * (1.0 - s))
                    })
                    .collect(),
            )
            .unwrap();
            parents[0].accum_grad(&gx);
        }),
    )
}

/// log(1 + e^x), the smooth positive map for learnable scale parameters.
pub fn softplus(a: &Var) -> Var {
    let data = Tensor::from_vec(
        a.shape(),
        a.data()
            .data()
            .iter()
            .map(|&x| x.max(0.0) + (-x.abs()).exp().ln_1p())
            .collect(),
    )
    .unwrap();
    Var::from_op(
        data,
        vec![a.clone()],
        Box::new(|g, parents| {
            let x = parents[0].data().data();
            let gx = Tensor::from_vec(
                g.shape(),
                g.data()
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| g / (1.0 + (-x).exp()))
                    .collect(),
            )
            .unwrap();
            parents[0].accum_grad(&gx);
        }),
    )
}

/// Elementwise branch select with a frozen mask: `mask ? on_true : on_false`.
/// The mask is data, not a tape node; no gradient flows through the selection
/// itself, only through the selected branch values.
pub fn select_gate(mask: &[bool], on_true: &Var, on_false: &Var) -> Result<Var> {
    check_same_shape("select_gate", on_true, on_false)?;
    if mask.len() != on_true.data().len() {
        return Err(Error::shape(
            "select_gate",
            format!(
                "mask length {} vs tensor length {}",
                mask.len(),
                on_true.data().len()
            ),
        ));
    }
    let data = Tensor::from_vec(
        on_true.shape(),
        mask.iter()
            .zip(on_true.data().data().iter().zip(on_false.data().data()))
            .map(|(&m, (t, f))| if m { *t } else { *f })
            .collect(),
    )?;
    let mask: Vec<bool> = mask.to_vec();
    Ok(Var::from_op(
        data,
        vec![on_true.clone(), on_false.clone()],
        Box::new(move |g, parents| {
            let mut gt = vec![0.0; g.len()];
            let mut gf = vec![0.0; g.len()];
            for (i, gv) in g.data().iter().enumerate() {
                if mask[i] {
                    gt[i] = *gv;
                } else {
                    gf[i] = *gv;
                }
            }
            parents[0].accum_grad(&Tensor::from_vec(g.shape(), gt).unwrap());
            parents[1].accum_grad(&Tensor::from_vec(g.shape(), gf).unwrap());
        }),
    ))
}

/// Multiply a B×C×H×W tensor by a B×1×H×W map, broadcasting over channels.
pub fn mul_bc1hw(x: &Var, a: &Var) -> Result<Var> {
    let (b, c, h, w) = x.data().dims4()?;
    let (ab, ac, ah, aw) = a.data().dims4()?;
    if ab != b || ac != 1 || ah != h || aw != w {
        return Err(Error::shape(
            "mul_bc1hw",
            format!(
                "map shape {:?} does not broadcast over {:?}",
                a.shape(),
                x.shape()
            ),
        ));
    }
    let hw = h * w;
    let mut out = vec![0.0; b * c * hw];
    {
        let xd = x.data().data();
        let ad = a.data().data();
        for bi in 0..b {
            for ci in 0..c {
                let xoff = (bi * c + ci) * hw;
                let aoff = bi * hw;
                for i in 0..hw {
                    out[xoff + i] = xd[xoff + i] * ad[aoff + i];
                }
            }
        }
    }
    Ok(Var::from_op(
        Tensor::from_vec(x.shape(), out)?,
        vec![x.clone(), a.clone()],
        Box::new(move |g, parents| {
            let (x, a) = (&parents[0], &parents[1]);
            let xd = x.data().data();
            let ad = a.data().data();
            let gd = g.data();
            let mut gx = vec![0.0; xd.len()];
            let mut ga = vec![0.0; ad.len()];
            for bi in 0..b {
                for ci in 0..c {
                    let xoff = (bi * c + ci) * hw;
                    let aoff = bi * hw;
                    for i in 0..hw {
                        gx[xoff + i] = gd[xoff + i] * ad[aoff + i];
                        ga[aoff + i] += gd[xoff + i] * xd[xoff + i];
                    }
                }
            }
            x.accum_grad(&Tensor::from_vec(x.shape(), gx).unwrap());
            a.accum_grad(&Tensor::from_vec(a.shape(), ga).unwrap());
        }),
    ))
}
