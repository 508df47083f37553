//! Multi-head scaled dot-product cross attention over token matrices.

use crate::autodiff::{concat_cols, matmul, scale, slice_cols, softmax_rows, transpose2, Var};
use crate::error::{Error, Result};

/// Standard multi-head cross attention: queries Nq×C attend over a shared
/// key/value token set Nk×C. All four projections are C×C; heads are column
/// groups of width C/heads.
pub fn mha_cross(
    queries: &Var,
    keyvalues: &Var,
    heads: usize,
    wq: &Var,
    wk: &Var,
    wv: &Var,
    wo: &Var,
) -> Result<Var> {
    let (_, c) = queries.data().dims2()?;
    let (nk, ck) = keyvalues.data().dims2()?;
    if ck != c {
        return Err(Error::shape(
            "mha_cross",
            format!("query channels {} vs key/value channels {}", c, ck),
        ));
    }
    if nk == 0 {
        return Err(Error::shape("mha_cross", "empty key/value set".to_string()));
    }
    check_head_split(c, heads)?;
    for (name, w) in [("Wq", wq), ("Wk", wk), ("Wv", wv), ("Wo", wo)] {
        let (r, cc) = w.data().dims2()?;
        if r != c || cc != c {
            return Err(Error::shape(
                "mha_cross",
                format!("{} must be {}×{}, got {:?}", name, c, c, w.shape()),
            ));
        }
    }
    let q = matmul(queries, wq)?;
    let k = matmul(keyvalues, wk)?;
    let v = matmul(keyvalues, wv)?;
    let d = c / heads;
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut head_outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = slice_cols(&q, h * d, d)?;
        let kh = slice_cols(&k, h * d, d)?;
        let vh = slice_cols(&v, h * d, d)?;
        let scores = scale(&matmul(&qh, &transpose2(&kh)?)?, inv_sqrt_d);
        let attn = softmax_rows(&scores)?;
        head_outs.push(matmul(&attn, &vh)?);
    }
    matmul(&concat_cols(&head_outs)?, wo)
}

pub fn check_head_split(channels: usize, heads: usize) -> Result<()> {
    if heads == 0 || channels % heads != 0 {
        return Err(Error::shape(
            "mha_cross",
            format!("channel count {} not divisible by {} heads", channels, heads),
        ));
    }
    Ok(())
}
