//! Spiral-aware feature sampling.
//!
//! The coarser pyramid level is sampled at reference-grid points displaced by
//! a spiral pattern plus a small shared learnable bias table, then fused into
//! the finer level through multi-head cross attention and a residual addition.
//!
//! Offsets live in coarse-map pixel units and are converted to the normalized
//! sampling convention (2/W per pixel in x, 2/H in y) at sample time, so the
//! spiral's physical extent is resolution independent. The bias table ε has
//! exactly heads·points·2 scalars regardless of resolution: it is shared
//! across every reference point and every query.

use crate::attention::check_head_split;
use crate::autodiff::{
    add, batch_slice, bilinear_sample, concat_cols, concat_first_axis, layer_norm, matmul, mul,
    repeat_add_grid, reshape, scale, slice_cols, slice_rows, softmax_rows, transpose2, Var,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpiralConfig {
    /// Attention head count H.
    pub heads: usize,
    /// Sampling points per head P.
    pub points: usize,
    /// Initial spiral radius l0, in coarse-map pixels.
    pub l0: f64,
    /// Radial step Δl between consecutive points, in coarse-map pixels.
    pub dl: f64,
    /// Reference grid stride g: one reference point per g×g coarse block.
    pub grid_stride: usize,
}

impl Default for SpiralConfig {
    fn default() -> Self {
        SpiralConfig {
            heads: 4,
            points: 8,
            l0: 0.5,
            dl: 0.5,
            grid_stride: 2,
        }
    }
}

impl SpiralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.points == 0 {
            return Err(Error::Config("spiral heads and points must be positive".into()));
        }
        if self.l0 < 0.0 || self.dl < 0.0 {
            return Err(Error::Config("spiral radii must be non-negative".into()));
        }
        if self.grid_stride == 0 {
            return Err(Error::Config("grid stride must be positive".into()));
        }
        Ok(())
    }
}

/// Differentiable parameters of one SFS edge.
pub struct SfsVars {
    /// Learnable bias table ε, stored as (heads·points)×2 in coarse pixels.
    pub eps: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub ln_q_gain: Var,
    pub ln_q_shift: Var,
    pub ln_kv_gain: Var,
    pub ln_kv_shift: Var,
}

const LN_EPS: f64 = 1e-6;

/// Spiral pattern: for 1-based head h and point k,
/// s = (l0 + k·Δl)·(cos θ, sin θ) with θ = 2πk/P + 2πh/H.
/// Returned as an (H·P)×2 tensor of (dx, dy) in coarse-pixel units.
pub fn spiral_offsets(cfg: &SpiralConfig) -> Result<Tensor> {
    cfg.validate()?;
    let (h_cnt, p_cnt) = (cfg.heads, cfg.points);
    let mut data = Vec::with_capacity(h_cnt * p_cnt * 2);
    for h in 1..=h_cnt {
        for k in 1..=p_cnt {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / p_cnt as f64
                + 2.0 * std::f64::consts::PI * h as f64 / h_cnt as f64;
            let l = cfg.l0 + k as f64 * cfg.dl;
            data.push(l * theta.cos());
            data.push(l * theta.sin());
        }
    }
    Tensor::from_vec(&[h_cnt * p_cnt, 2], data)
}

/// Uniform reference grid over an H×W coarse map with stride g: one point at
/// the center of each g×g block, in the normalized sampling convention.
/// Returned as (H_G·W_G)×2 rows of (x, y), scan order over the grid.
pub fn reference_grid(h: usize, w: usize, g: usize) -> Result<Tensor> {
    if g == 0 || g > h.min(w) {
        return Err(Error::Config(format!(
            "grid stride {} invalid for {}×{} map",
            g, h, w
        )));
    }
    let hg = h.div_ceil(g);
    let wg = w.div_ceil(g);
    let norm = |p: f64, n: usize| -> f64 {
        if n <= 1 {
            0.0
        } else {
            2.0 * p / (n - 1) as f64 - 1.0
        }
    };
    let mut data = Vec::with_capacity(hg * wg * 2);
    for m in 0..hg {
        let py = (g - 1) as f64 / 2.0 + (m * g) as f64;
        for n in 0..wg {
            let px = (g - 1) as f64 / 2.0 + (n * g) as f64;
            data.push(norm(px, w));
            data.push(norm(py, h));
        }
    }
    Tensor::from_vec(&[hg * wg, 2], data)
}

/// Normalized sampling coordinates for one head: every reference point plus
/// that head's spiral-plus-bias offsets. Differentiable w.r.t. ε.
fn head_coords(
    eps: &Var,
    spiral: &Tensor,
    grid: &Tensor,
    head: usize,
    cfg: &SpiralConfig,
    coarse_h: usize,
    coarse_w: usize,
) -> Result<Var> {
    let p = cfg.points;
    let eps_h = slice_rows(eps, head * p, p)?;
    let spiral_h = Tensor::from_vec(
        &[p, 2],
        spiral.data()[head * p * 2..(head + 1) * p * 2].to_vec(),
    )?;
    let off = add(&eps_h, &Var::constant(spiral_h))?;
    // coarse-pixel units → normalized units
    let mut sc = Vec::with_capacity(p * 2);
    for _ in 0..p {
        sc.push(2.0 / coarse_w as f64);
        sc.push(2.0 / coarse_h as f64);
    }
    let off_norm = mul(&off, &Var::constant(Tensor::from_vec(&[p, 2], sc)?))?;
    repeat_add_grid(&off_norm, grid)
}

/// Sample the coarse map for every head: head h gets a B×C×(H_G·W_G·P) tensor
/// of bilinear samples at its spiral-displaced reference points.
pub fn sfs_sample(y_next: &Var, cfg: &SpiralConfig, eps: &Var) -> Result<Vec<Var>> {
    cfg.validate()?;
    let (_, _, h, w) = y_next.data().dims4()?;
    let spiral = spiral_offsets(cfg)?;
    let grid = reference_grid(h, w, cfg.grid_stride)?;
    let mut per_head = Vec::with_capacity(cfg.heads);
    for head in 0..cfg.heads {
        let coords = head_coords(eps, &spiral, &grid, head, cfg, h, w)?;
        per_head.push(bilinear_sample(y_next, &coords)?);
    }
    Ok(per_head)
}

/// 1×C×N sample slice → N×C token matrix.
fn sample_to_tokens(sampled_b: &Var) -> Result<Var> {
    let shape = sampled_b.shape().to_vec();
    let (c, n) = (shape[1], shape[2]);
    transpose2(&reshape(sampled_b, &[c, n])?)
}

/// Cross-attention fusion of a purified fine level with spiral samples of the
/// coarser level, plus the residual: Y_i = X'_i + Attn(LN(X'_i), LN(Y'_{i+1})).
pub fn sfs_fuse(x_purified: &Var, y_next: &Var, cfg: &SpiralConfig, vars: &SfsVars) -> Result<Var> {
    cfg.validate()?;
    let (b, c, h, w) = x_purified.data().dims4()?;
    let (bn, cn, hn, wn) = y_next.data().dims4()?;
    if bn != b || cn != c {
        return Err(Error::shape(
            "sfs_fuse",
            format!("fine {:?} vs coarse {:?}", x_purified.shape(), y_next.shape()),
        ));
    }
    if hn * 2 != h || wn * 2 != w {
        return Err(Error::shape(
            "sfs_fuse",
            format!("coarse level {}×{} is not half of {}×{}", hn, wn, h, w),
        ));
    }
    check_head_split(c, cfg.heads)?;
    let d = c / cfg.heads;
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();

    let sampled = sfs_sample(y_next, cfg, &vars.eps)?;
    let n_keys = sampled[0].shape()[2];

    let mut outputs = Vec::with_capacity(b);
    for bi in 0..b {
        // queries: fine-level pixels as tokens
        let xb = batch_slice(x_purified, bi)?;
        let q_tokens = transpose2(&reshape(&xb, &[c, h * w])?)?;
        let qn = layer_norm(&q_tokens, &vars.ln_q_gain, &vars.ln_q_shift, LN_EPS)?;
        let q = matmul(&qn, &vars.wq)?;
        let mut head_outs = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            // this head's sampled tokens for batch element bi
            let s = &sampled[head];
            let sb = batch_slice(&reshape(s, &[b, c, n_keys, 1])?, bi)?;
            let tokens = sample_to_tokens(&reshape(&sb, &[1, c, n_keys])?)?;
            let kvn = layer_norm(&tokens, &vars.ln_kv_gain, &vars.ln_kv_shift, LN_EPS)?;
            let k = slice_cols(&matmul(&kvn, &vars.wk)?, head * d, d)?;
            let v = slice_cols(&matmul(&kvn, &vars.wv)?, head * d, d)?;
            let qh = slice_cols(&q, head * d, d)?;
            let attn = softmax_rows(&scale(&matmul(&qh, &transpose2(&k)?)?, inv_sqrt_d))?;
            head_outs.push(matmul(&attn, &v)?);
        }
        let fused = matmul(&concat_cols(&head_outs)?, &vars.wo)?;
        let map = reshape(&transpose2(&fused)?, &[1, c, h, w])?;
        outputs.push(add(&map, &xb)?);
    }
    concat_first_axis(&outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(heads: usize, points: usize, l0: f64, dl: f64, g: usize) -> SpiralConfig {
        SpiralConfig {
            heads,
            points,
            l0,
            dl,
            grid_stride: g,
        }
    }

    #[test]
    fn spiral_hand_table() {
        // H=2, P=2, l0=1, dl=1: head 1 {(2,0), (−3,0)}, head 2 {(−2,0), (3,0)}
        let s = spiral_offsets(&cfg(2, 2, 1.0, 1.0, 1)).unwrap();
        let d = s.data();
        let expect = [(2.0, 0.0), (-3.0, 0.0), (-2.0, 0.0), (3.0, 0.0)];
        for (i, (ex, ey)) in expect.iter().enumerate() {
            assert!((d[i * 2] - ex).abs() < 1e-12, "dx[{i}] = {}", d[i * 2]);
            assert!((d[i * 2 + 1] - ey).abs() < 1e-12, "dy[{i}] = {}", d[i * 2 + 1]);
        }
    }

    #[test]
    fn spiral_radii_and_head_rotation() {
        let c = cfg(3, 5, 0.7, 0.3, 1);
        let s = spiral_offsets(&c).unwrap();
        let d = s.data();
        for h in 0..3 {
            for k in 0..5 {
                let r = (d[(h * 5 + k) * 2].powi(2) + d[(h * 5 + k) * 2 + 1].powi(2)).sqrt();
                let expect = 0.7 + (k + 1) as f64 * 0.3;
                assert!((r - expect).abs() < 1e-12);
            }
        }
        // head h+1 offsets are head h offsets rotated by 2π/H
        let ang = 2.0 * std::f64::consts::PI / 3.0;
        let (cos, sin) = (ang.cos(), ang.sin());
        for k in 0..5 {
            let (x0, y0) = (d[k * 2], d[k * 2 + 1]);
            let (x1, y1) = (d[(5 + k) * 2], d[(5 + k) * 2 + 1]);
            assert!((x1 - (x0 * cos - y0 * sin)).abs() < 1e-12);
            assert!((y1 - (x0 * sin + y0 * cos)).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_full_and_strided() {
        let g1 = reference_grid(4, 4, 1).unwrap();
        assert_eq!(g1.shape(), &[16, 2]);
        // first point = center of pixel (0,0) = (−1, −1)
        assert!((g1.data()[0] + 1.0).abs() < 1e-12);
        assert!((g1.data()[1] + 1.0).abs() < 1e-12);
        let g2 = reference_grid(4, 4, 2).unwrap();
        assert_eq!(g2.shape(), &[4, 2]);
        // symmetric about the map center
        for i in 0..4 {
            let x = g2.data()[i * 2];
            let y = g2.data()[i * 2 + 1];
            assert!(g2
                .data()
                .chunks(2)
                .any(|p| (p[0] + x).abs() < 1e-12 && (p[1] + y).abs() < 1e-12));
        }
        // all in range
        for v in g2.data() {
            assert!(v.abs() <= 1.0);
        }
    }

    #[test]
    fn constant_map_samples_constant() {
        let y = Var::constant(Tensor::full(&[1, 3, 4, 4], 2.5));
        let eps = Var::constant(Tensor::zeros(&[8, 2]));
        let c = cfg(2, 4, 1.0, 0.5, 2);
        for head in sfs_sample(&y, &c, &eps).unwrap() {
            assert!(head.data().data().iter().all(|v| (v - 2.5).abs() < 1e-12));
        }
    }

    #[test]
    fn degenerate_spiral_repeats_reference_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = Var::constant(Tensor::randn(&[1, 2, 4, 4], 1.0, &mut rng));
        let eps = Var::constant(Tensor::zeros(&[6, 2]));
        let c = cfg(2, 3, 0.0, 0.0, 2);
        let heads = sfs_sample(&y, &c, &eps).unwrap();
        for head in heads {
            let d = head.data();
            let (_, ch, n) = (d.shape()[0], d.shape()[1], d.shape()[2]);
            assert_eq!(n, 4 * 3);
            for ci in 0..ch {
                for r in 0..4 {
                    let base = d.data()[ci * n + r * 3];
                    for p in 1..3 {
                        assert!((d.data()[ci * n + r * 3 + p] - base).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn sampling_matches_bruteforce_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = Tensor::randn(&[1, 1, 4, 4], 1.0, &mut rng);
        let c = cfg(2, 4, 0.3, 0.2, 1);
        let eps_t = Tensor::randn(&[8, 2], 0.2, &mut rng);
        let heads = sfs_sample(&Var::constant(y.clone()), &c, &Var::constant(eps_t.clone())).unwrap();
        // independent straightforward oracle
        let spiral = spiral_offsets(&c).unwrap();
        let grid = reference_grid(4, 4, 1).unwrap();
        for (h, head) in heads.iter().enumerate() {
            let d = head.data();
            let n = d.shape()[2];
            for (r, gp) in grid.data().chunks(2).enumerate() {
                for p in 0..4 {
                    let idx = h * 4 + p;
                    let xn = (gp[0] + (spiral.data()[idx * 2] + eps_t.data()[idx * 2]) * 2.0 / 4.0)
                        .clamp(-1.0, 1.0);
                    let yn = (gp[1]
                        + (spiral.data()[idx * 2 + 1] + eps_t.data()[idx * 2 + 1]) * 2.0 / 4.0)
                        .clamp(-1.0, 1.0);
                    let px = (xn + 1.0) / 2.0 * 3.0;
                    let py = (yn + 1.0) / 2.0 * 3.0;
                    let (x0, y0) = (px.floor() as usize, py.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(3), (y0 + 1).min(3));
                    let (tx, ty) = (px - x0 as f64, py - y0 as f64);
                    let val = (1.0 - ty) * (1.0 - tx) * y.at4(0, 0, y0, x0)
                        + (1.0 - ty) * tx * y.at4(0, 0, y0, x1)
                        + ty * (1.0 - tx) * y.at4(0, 0, y1, x0)
                        + ty * tx * y.at4(0, 0, y1, x1);
                    let got = d.data()[r * 4 + p];
                    assert!((got - val).abs() < 1e-12, "h{h} r{r} p{p}: {got} vs {val}");
                    let _ = n;
                }
            }
        }
    }

    #[test]
    fn zero_value_projection_reduces_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Var::constant(Tensor::randn(&[1, 4, 4, 4], 1.0, &mut rng));
        let y = Var::constant(Tensor::randn(&[1, 4, 2, 2], 1.0, &mut rng));
        let c = cfg(2, 2, 0.5, 0.5, 1);
        let vars = SfsVars {
            eps: Var::constant(Tensor::zeros(&[4, 2])),
            wq: Var::constant(Tensor::randn(&[4, 4], 0.5, &mut rng)),
            wk: Var::constant(Tensor::randn(&[4, 4], 0.5, &mut rng)),
            wv: Var::constant(Tensor::zeros(&[4, 4])),
            wo: Var::constant(Tensor::randn(&[4, 4], 0.5, &mut rng)),
            ln_q_gain: Var::constant(Tensor::full(&[4], 1.0)),
            ln_q_shift: Var::constant(Tensor::zeros(&[4])),
            ln_kv_gain: Var::constant(Tensor::full(&[4], 1.0)),
            ln_kv_shift: Var::constant(Tensor::zeros(&[4])),
        };
        let out = sfs_fuse(&x, &y, &c, &vars).unwrap();
        assert!(out.data().max_abs_diff(x.data()) < 1e-15);
    }

    #[test]
    fn constant_coarse_gives_spatially_constant_fusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Var::constant(Tensor::randn(&[1, 4, 4, 4], 1.0, &mut rng));
        let y = Var::constant(Tensor::full(&[1, 4, 2, 2], 0.9));
        let c = cfg(2, 2, 0.5, 0.5, 1);
        let vars = SfsVars {
            eps: Var::constant(Tensor::zeros(&[4, 2])),
            wq: Var::constant(Tensor::randn(&[4, 4], 0.5, &mut rng)),
            wk: Var::constant(Tensor::randn(&[4, 4], 0.5, &mut rng)),
            wv: Var::constant(Tensor::randn(&[4, 4], 0.5, &mut rng)),
            wo: Var::constant(Tensor::randn(&[4, 4], 0.5, &mut rng)),
            ln_q_gain: Var::constant(Tensor::full(&[4], 1.0)),
            ln_q_shift: Var::constant(Tensor::zeros(&[4])),
            ln_kv_gain: Var::constant(Tensor::full(&[4], 1.0)),
            ln_kv_shift: Var::constant(Tensor::zeros(&[4])),
        };
        let out = sfs_fuse(&x, &y, &c, &vars).unwrap();
        // Y − X' must be the same vector at every pixel
        let (_, ch, h, w) = out.data().dims4().unwrap();
        for ci in 0..ch {
            let r = out.data().at4(0, ci, 0, 0) - x.data().at4(0, ci, 0, 0);
            for yy in 0..h {
                for xx in 0..w {
                    let v = out.data().at4(0, ci, yy, xx) - x.data().at4(0, ci, yy, xx);
                    assert!((v - r).abs() < 1e-9);
                }
            }
        }
    }
}
