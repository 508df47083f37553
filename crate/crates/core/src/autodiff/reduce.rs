//! Reductions and losses.

use super::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn sum_all(a: &Var) -> Var {
    let s = a.data().sum();
    Var::from_op(
        Tensor::scalar(s),
        vec![a.clone()],
        Box::new(|g, parents| {
            let gv = g.data()[0];
            let p = &parents[0];
            p.accum_grad(&Tensor::full(p.shape(), gv));
        }),
    )
}

pub fn mean_all(a: &Var) -> Var {
    let n = a.data().len() as f64;
    let s = a.data().sum() / n;
    Var::from_op(
        Tensor::scalar(s),
        vec![a.clone()],
        Box::new(move |g, parents| {
            let gv = g.data()[0] / n;
            let p = &parents[0];
            p.accum_grad(&Tensor::full(p.shape(), gv));
        }),
    )
}

/// Mean binary cross-entropy between logits and {0,1} targets, computed in the
/// numerically stable max(z,0) − z·t + log(1+e^{−|z|}) form.
pub fn bce_with_logits_mean(logits: &Var, targets: &Tensor) -> Result<Var> {
    bce_with_logits_weighted(logits, targets, 1.0)
}

/// Mean binary cross-entropy from logits with the positive-class terms scaled
/// by `pos_weight` (the usual counterweight for rare-foreground masks).
pub fn bce_with_logits_weighted(logits: &Var, targets: &Tensor, pos_weight: f64) -> Result<Var> {
    if logits.shape() != targets.shape() {
        return Err(Error::shape(
            "bce_with_logits",
            format!("logits {:?} vs targets {:?}", logits.shape(), targets.shape()),
        ));
    }
    let n = logits.data().len() as f64;
    let mut sum = 0.0;
    for (&z, &t) in logits.data().data().iter().zip(targets.data()) {
        // w·t·softplus(−z) + (1−t)·softplus(z), both softplus in stable form
        let sp_neg = (-z.abs()).exp().ln_1p() + (-z).max(0.0);
        let sp_pos = (-z.abs()).exp().ln_1p() + z.max(0.0);
        sum += pos_weight * t * sp_neg + (1.0 - t) * sp_pos;
    }
    let targets = targets.clone();
    Ok(Var::from_op(
        Tensor::scalar(sum / n),
        vec![logits.clone()],
        Box::new(move |g, parents| {
            let gv = g.data()[0] / n;
            let p = &parents[0];
            let gx = Tensor::from_vec(
                p.shape(),
                p.data()
                    .data()
                    .iter()
                    .zip(targets.data())
                    .map(|(&z, &t)| {
                        let s = 1.0 / (1.0 + (-z).exp());
                        gv * (pos_weight * t * (s - 1.0) + (1.0 - t) * s)
                    })
                    .collect(),
            )
            .unwrap();
            p.accum_grad(&gx);
        }),
    ))
}
