//! Single-level 2-D orthonormal Haar analysis and synthesis.
//!
//! Filters are (1/√2, 1/√2) low-pass and (1/√2, −1/√2) high-pass, applied
//! along W then H with stride 2, so the transform is orthogonal: round trips
//! are exact and energy is preserved. Band orientation convention: `lh` is
//! low-pass along H and high-pass along W (horizontal intensity edges), `hl`
//! the transpose, `hh` diagonal detail.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The four subbands of one analysis level, each B×C×H/2×W/2.
pub struct WaveletBands {
    pub ll: Var,
    pub lh: Var,
    pub hl: Var,
    pub hh: Var,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Band {
    Ll,
    Lh,
    Hl,
    Hh,
}

const BANDS: [Band; 4] = [Band::Ll, Band::Lh, Band::Hl, Band::Hh];

/// Signs of the (a, b, c, d) 2×2 block combination for each band, where the
/// block is (a b; c d) and every output is (±a ±b ±c ±d)/2.
fn signs(band: Band) -> [f64; 4] {
    match band {
        Band::Ll => [1.0, 1.0, 1.0, 1.0],
        Band::Lh => [1.0, -1.0, 1.0, -1.0],
        Band::Hl => [1.0, 1.0, -1.0, -1.0],
        Band::Hh => [1.0, -1.0, -1.0, 1.0],
    }
}

fn check_even(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let (b, c, h, w) = t.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            op,
            format!("odd spatial size {}×{}; enable padding or crop first", h, w),
        ));
    }
    Ok((b, c, h, w))
}

/// Tensor-level analysis: all four subbands of a B×C×H×W input.
pub fn haar_analysis(x: &Tensor) -> Result<[Tensor; 4]> {
    let (b, c, h, w) = check_even("dwt2", x)?;
    let (h2, w2) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = [
        vec![0.0; b * c * h2 * w2],
        vec![0.0; b * c * h2 * w2],
        vec![0.0; b * c * h2 * w2],
        vec![0.0; b * c * h2 * w2],
    ];
    for bc in 0..b * c {
        let plane = &xd[bc * h * w..(bc + 1) * h * w];
        for y in 0..h2 {
            for x0 in 0..w2 {
                let a = plane[(2 * y) * w + 2 * x0];
                let bb = plane[(2 * y) * w + 2 * x0 + 1];
                let cc = plane[(2 * y + 1) * w + 2 * x0];
                let d = plane[(2 * y + 1) * w + 2 * x0 + 1];
                let idx = bc * h2 * w2 + y * w2 + x0;
                for (bi, band) in BANDS.iter().enumerate() {
                    let s = signs(*band);
                    out[bi][idx] = (s[0] * a + s[1] * bb + s[2] * cc + s[3] * d) / 2.0;
                }
            }
        }
    }
    let shape = [b, c, h2, w2];
    let [o0, o1, o2, o3] = out;
    Ok([
        Tensor::from_vec(&shape, o0)?,
        Tensor::from_vec(&shape, o1)?,
        Tensor::from_vec(&shape, o2)?,
        Tensor::from_vec(&shape, o3)?,
    ])
}

/// Tensor-level synthesis from four equally-shaped subbands.
pub fn haar_synthesis(bands: &[&Tensor; 4]) -> Result<Tensor> {
    let (b, c, h2, w2) = bands[0].dims4()?;
    for t in bands.iter().skip(1) {
        if t.shape() != bands[0].shape() {
            return Err(Error::shape(
                "idwt2",
                format!("band shapes {:?} vs {:?}", t.shape(), bands[0].shape()),
            ));
        }
    }
    let (h, w) = (h2 * 2, w2 * 2);
    let mut out = vec![0.0; b * c * h * w];
    for bc in 0..b * c {
        for y in 0..h2 {
            for x0 in 0..w2 {
                let idx = bc * h2 * w2 + y * w2 + x0;
                let plane = &mut out[bc * h * w..(bc + 1) * h * w];
                // The analysis matrix is orthogonal, so synthesis applies its
                // transpose to the band vector.
                for (pos, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    let mut acc = 0.0;
                    for (bi, band) in BANDS.iter().enumerate() {
                        acc += signs(*band)[pos] * bands[bi].data()[idx];
                    }
                    plane[(2 * y + dy) * w + 2 * x0 + dx] = acc / 2.0;
                }
            }
        }
    }
    Tensor::from_vec(&[b, c, h, w], out)
}

/// Differentiable single-level 2-D Haar analysis.
pub fn dwt2(x: &Var) -> Result<WaveletBands> {
    let tensors = haar_analysis(x.data())?;
    let mut vars = Vec::with_capacity(4);
    for (bi, t) in tensors.into_iter().enumerate() {
        let band = BANDS[bi];
        vars.push(Var::from_op(
            t,
            vec![x.clone()],
            Box::new(move |g, parents| {
                // Adjoint of single-band analysis = synthesis of that band alone.
                let zero = Tensor::zeros(g.shape());
                let mut slots: [&Tensor; 4] = [&zero, &zero, &zero, &zero];
                slots[band as usize] = g;
                parents[0].accum_grad(&haar_synthesis(&slots).unwrap());
            }),
        ));
    }
    let mut it = vars.into_iter();
    Ok(WaveletBands {
        ll: it.next().unwrap(),
        lh: it.next().unwrap(),
        hl: it.next().unwrap(),
        hh: it.next().unwrap(),
    })
}

/// Differentiable synthesis, the exact inverse of [`dwt2`].
pub fn idwt2(bands: &WaveletBands) -> Result<Var> {
    let data = haar_synthesis(&[
        bands.ll.data(),
        bands.lh.data(),
        bands.hl.data(),
        bands.hh.data(),
    ])?;
    Ok(Var::from_op(
        data,
        vec![
            bands.ll.clone(),
            bands.lh.clone(),
            bands.hl.clone(),
            bands.hh.clone(),
        ],
        Box::new(|g, parents| {
            let gb = haar_analysis(g).unwrap();
            for (p, gband) in parents.iter().zip(gb.iter()) {
                p.accum_grad(gband);
            }
        }),
    ))
}

/// Symmetric-pad an image with odd spatial size up to even dimensions by
/// repeating the last row/column, returning the padded tensor and the
/// original size for cropping back.
pub fn pad_to_even(x: &Tensor) -> Result<(Tensor, (usize, usize))> {
    let (b, c, h, w) = x.dims4()?;
    let (hp, wp) = (h + h % 2, w + w % 2);
    if (hp, wp) == (h, w) {
        return Ok((x.clone(), (h, w)));
    }
    let mut out = Tensor::zeros(&[b, c, hp, wp]);
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..hp {
                for x0 in 0..wp {
                    *out.at4_mut(bi, ci, y, x0) = x.at4(bi, ci, y.min(h - 1), x0.min(w - 1));
                }
            }
        }
    }
    Ok((out, (h, w)))
}

pub fn crop(x: &Tensor, size: (usize, usize)) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let (hc, wc) = size;
    if hc > h || wc > w {
        return Err(Error::shape("crop", format!("{}×{} out of {}×{}", hc, wc, h, w)));
    }
    let mut out = Tensor::zeros(&[b, c, hc, wc]);
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..hc {
                for x0 in 0..wc {
                    *out.at4_mut(bi, ci, y, x0) = x.at4(bi, ci, y, x0);
                }
            }
        }
    }
    Ok(out)
}
