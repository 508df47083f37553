//! Shared slow reference implementations and randomized sweeps used by both
//! the focused oracle tests and the acceptance suite.

use nsfpn::attention::mha_cross;
use nsfpn::autodiff::Var;
use nsfpn::irdata::connected_components;
use nsfpn::sfs::{sfs_fuse, SfsVars, SpiralConfig};
use nsfpn::tensor::Tensor;
use nsfpn::wavelet::{haar_analysis, haar_synthesis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

fn mat(t: &Tensor) -> (usize, usize, &[f64]) {
    let (r, c) = t.dims2().unwrap();
    (r, c, t.data())
}

fn matmul_ref(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, ad) = mat(a);
    let (_, n, bd) = mat(b);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..k {
                s += ad[i * k + l] * bd[l * n + j];
            }
            out[i * n + j] = s;
        }
    }
    Tensor::from_vec(&[m, n], out).unwrap()
}

fn softmax_rows_ref(x: &mut Tensor) {
    let (r, c) = x.dims2().unwrap();
    let d = x.data_mut();
    for i in 0..r {
        let row = &mut d[i * c..(i + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn layer_norm_ref(x: &Tensor, gain: &Tensor, shift: &Tensor, eps: f64) -> Tensor {
    let (n, c) = x.dims2().unwrap();
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        let row = &x.data()[i * c..(i + 1) * c];
        let mean: f64 = row.iter().sum::<f64>() / c as f64;
        let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for j in 0..c {
            out[i * c + j] = (row[j] - mean) * inv * gain.data()[j] + shift.data()[j];
        }
    }
    Tensor::from_vec(&[n, c], out).unwrap()
}

fn slice_cols_ref(x: &Tensor, start: usize, len: usize) -> Tensor {
    let (n, c) = x.dims2().unwrap();
    let mut out = vec![0.0; n * len];
    for i in 0..n {
        out[i * len..(i + 1) * len].copy_from_slice(&x.data()[i * c + start..i * c + start + len]);
    }
    Tensor::from_vec(&[n, len], out).unwrap()
}

fn mha_ref(
    q_in: &Tensor,
    kv_in: &Tensor,
    heads: usize,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    wo: &Tensor,
) -> Tensor {
    let (n, c) = q_in.dims2().unwrap();
    let d = c / heads;
    let q = matmul_ref(q_in, wq);
    let k = matmul_ref(kv_in, wk);
    let v = matmul_ref(kv_in, wv);
    let mut concat = vec![0.0; n * c];
    for h in 0..heads {
        let qh = slice_cols_ref(&q, h * d, d);
        let kh = slice_cols_ref(&k, h * d, d);
        let vh = slice_cols_ref(&v, h * d, d);
        let m = kh.dims2().unwrap().0;
        let mut scores = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                let mut s = 0.0;
                for l in 0..d {
                    s += qh.data()[i * d + l] * kh.data()[j * d + l];
                }
                scores[i * m + j] = s / (d as f64).sqrt();
            }
        }
        let mut scores = Tensor::from_vec(&[n, m], scores).unwrap();
        softmax_rows_ref(&mut scores);
        let oh = matmul_ref(&scores, &vh);
        for i in 0..n {
            for l in 0..d {
                concat[i * c + h * d + l] = oh.data()[i * d + l];
            }
        }
    }
    matmul_ref(&Tensor::from_vec(&[n, c], concat).unwrap(), wo)
}

/// Random small attention instances against the loop reference.
/// Returns (instances checked, worst absolute difference).
pub fn mha_oracle_sweep() -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let trials = 25;
    for trial in 0..trials {
        let heads = [1, 2, 4][trial % 3];
        let c = heads * (1 + trial % 3);
        let n = 2 + trial % 5;
        let m = 1 + trial % 7;
        let q = randn(&[n, c], &mut rng);
        let kv = randn(&[m, c], &mut rng);
        let wq = randn(&[c, c], &mut rng);
        let wk = randn(&[c, c], &mut rng);
        let wv = randn(&[c, c], &mut rng);
        let wo = randn(&[c, c], &mut rng);
        let fast = mha_cross(
            &Var::constant(q.clone()),
            &Var::constant(kv.clone()),
            heads,
            &Var::constant(wq.clone()),
            &Var::constant(wk.clone()),
            &Var::constant(wv.clone()),
            &Var::constant(wo.clone()),
        )
        .unwrap();
        let slow = mha_ref(&q, &kv, heads, &wq, &wk, &wv, &wo);
        worst = worst.max(fast.data().max_abs_diff(&slow));
    }
    (trials, worst)
}

pub struct SfsRefVars {
    pub eps: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ln_q_gain: Tensor,
    pub ln_q_shift: Tensor,
    pub ln_kv_gain: Tensor,
    pub ln_kv_shift: Tensor,
}

/// Loop-only re-implementation of the spiral fusion block.
fn sfs_ref(fine: &Tensor, coarse: &Tensor, cfg: &SpiralConfig, vars: &SfsRefVars) -> Tensor {
    let (b, c, h, w) = fine.dims4().unwrap();
    let (_, _, ch, cw) = coarse.dims4().unwrap();
    let heads = cfg.heads;
    let d = c / heads;
    let g = cfg.grid_stride;
    let hg = ch.div_ceil(g);
    let wg = cw.div_ceil(g);

    // spiral offsets, 1-based indices
    let mut spiral = Vec::new();
    for hh in 1..=heads {
        for k in 1..=cfg.points {
            let theta = std::f64::consts::TAU * k as f64 / cfg.points as f64
                + std::f64::consts::TAU * hh as f64 / heads as f64;
            let l = cfg.l0 + k as f64 * cfg.dl;
            spiral.push((l * theta.cos(), l * theta.sin()));
        }
    }

    let sample = |plane: &[f64], xn: f64, yn: f64| -> f64 {
        let px = (xn.clamp(-1.0, 1.0) + 1.0) * 0.5 * (cw - 1) as f64;
        let py = (yn.clamp(-1.0, 1.0) + 1.0) * 0.5 * (ch - 1) as f64;
        let x0 = (px.floor().max(0.0) as usize).min(cw - 1);
        let y0 = (py.floor().max(0.0) as usize).min(ch - 1);
        let x1 = (x0 + 1).min(cw - 1);
        let y1 = (y0 + 1).min(ch - 1);
        let (tx, ty) = (px - x0 as f64, py - y0 as f64);
        (1.0 - ty) * ((1.0 - tx) * plane[y0 * cw + x0] + tx * plane[y0 * cw + x1])
            + ty * ((1.0 - tx) * plane[y1 * cw + x0] + tx * plane[y1 * cw + x1])
    };

    let mut out = fine.clone();
    for bi in 0..b {
        // query tokens
        let mut q_tokens = vec![0.0; h * w * c];
        for ci in 0..c {
            for p in 0..h * w {
                q_tokens[p * c + ci] = fine.data()[((bi * c) + ci) * h * w + p];
            }
        }
        let q_tokens = Tensor::from_vec(&[h * w, c], q_tokens).unwrap();
        let qn = layer_norm_ref(&q_tokens, &vars.ln_q_gain, &vars.ln_q_shift, 1e-6);
        let q = matmul_ref(&qn, &vars.wq);

        let mut concat = vec![0.0; h * w * c];
        for head in 0..heads {
            // sampled tokens for this head
            let nk = hg * wg * cfg.points;
            let mut tokens = vec![0.0; nk * c];
            let mut t = 0;
            for m in 0..hg {
                for n in 0..wg {
                    let py = (g - 1) as f64 / 2.0 + (m * g) as f64;
                    let px = (g - 1) as f64 / 2.0 + (n * g) as f64;
                    let gx = if cw <= 1 { 0.0 } else { 2.0 * px / (cw - 1) as f64 - 1.0 };
                    let gy = if ch <= 1 { 0.0 } else { 2.0 * py / (ch - 1) as f64 - 1.0 };
                    for k in 0..cfg.points {
                        let idx = head * cfg.points + k;
                        let (sx, sy) = spiral[idx];
                        let ex = vars.eps.data()[idx * 2];
                        let ey = vars.eps.data()[idx * 2 + 1];
                        let xn = gx + (sx + ex) * 2.0 / cw as f64;
                        let yn = gy + (sy + ey) * 2.0 / ch as f64;
                        for ci in 0..c {
                            let plane = &coarse.data()
                                [((bi * c) + ci) * ch * cw..((bi * c) + ci + 1) * ch * cw];
                            tokens[t * c + ci] = sample(plane, xn, yn);
                        }
                        t += 1;
                    }
                }
            }
            let tokens = Tensor::from_vec(&[nk, c], tokens).unwrap();
            let kvn = layer_norm_ref(&tokens, &vars.ln_kv_gain, &vars.ln_kv_shift, 1e-6);
            let k = slice_cols_ref(&matmul_ref(&kvn, &vars.wk), head * d, d);
            let v = slice_cols_ref(&matmul_ref(&kvn, &vars.wv), head * d, d);
            let qh = slice_cols_ref(&q, head * d, d);
            let mut scores = vec![0.0; h * w * nk];
            for i in 0..h * w {
                for j in 0..nk {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += qh.data()[i * d + l] * k.data()[j * d + l];
                    }
                    scores[i * nk + j] = s / (d as f64).sqrt();
                }
            }
            let mut scores = Tensor::from_vec(&[h * w, nk], scores).unwrap();
            softmax_rows_ref(&mut scores);
            let oh = matmul_ref(&scores, &v);
            for i in 0..h * w {
                for l in 0..d {
                    concat[i * c + head * d + l] = oh.data()[i * d + l];
                }
            }
        }
        let fused = matmul_ref(&Tensor::from_vec(&[h * w, c], concat).unwrap(), &vars.wo);
        for ci in 0..c {
            for p in 0..h * w {
                out.data_mut()[((bi * c) + ci) * h * w + p] += fused.data()[p * c + ci];
            }
        }
    }
    out
}

/// Random small fusion instances against the loop reference.
/// Returns (instances checked, worst absolute difference).
pub fn sfs_oracle_sweep() -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let trials = 22;
    for trial in 0..trials {
        let heads = [1, 2][trial % 2];
        let c = heads * (2 + trial % 2);
        let (ch, cw) = (2 + trial % 3, 2 + (trial / 2) % 3);
        let (h, w) = (ch * 2, cw * 2);
        let b = 1 + trial % 2;
        let cfg = SpiralConfig {
            heads,
            points: 1 + trial % 4,
            l0: 0.3 + 0.1 * (trial % 3) as f64,
            dl: 0.25,
            grid_stride: 1 + trial % 2,
        };
        let fine = randn(&[b, c, h, w], &mut rng);
        let coarse = randn(&[b, c, ch, cw], &mut rng);
        let rv = SfsRefVars {
            eps: Tensor::randn(&[heads * cfg.points, 2], 0.3, &mut rng),
            wq: randn(&[c, c], &mut rng),
            wk: randn(&[c, c], &mut rng),
            wv: randn(&[c, c], &mut rng),
            wo: randn(&[c, c], &mut rng),
            ln_q_gain: randn(&[c], &mut rng),
            ln_q_shift: randn(&[c], &mut rng),
            ln_kv_gain: randn(&[c], &mut rng),
            ln_kv_shift: randn(&[c], &mut rng),
        };
        let vars = SfsVars {
            eps: Var::constant(rv.eps.clone()),
            wq: Var::constant(rv.wq.clone()),
            wk: Var::constant(rv.wk.clone()),
            wv: Var::constant(rv.wv.clone()),
            wo: Var::constant(rv.wo.clone()),
            ln_q_gain: Var::constant(rv.ln_q_gain.clone()),
            ln_q_shift: Var::constant(rv.ln_q_shift.clone()),
            ln_kv_gain: Var::constant(rv.ln_kv_gain.clone()),
            ln_kv_shift: Var::constant(rv.ln_kv_shift.clone()),
        };
        let fast = sfs_fuse(
            &Var::constant(fine.clone()),
            &Var::constant(coarse.clone()),
            &cfg,
            &vars,
        )
        .unwrap();
        let slow = sfs_ref(&fine, &coarse, &cfg, &rv);
        worst = worst.max(fast.data().max_abs_diff(&slow));
    }
    (trials, worst)
}

pub fn flood_fill_regions(mask: &[bool], h: usize, w: usize) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; h * w];
    let mut regions = Vec::new();
    for start in 0..h * w {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut pixels = Vec::new();
        while let Some(idx) = queue.pop_front() {
            let (r, c) = (idx / w, idx % w);
            pixels.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let n = nr as usize * w + nc as usize;
                    if mask[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        pixels.sort_unstable();
        regions.push(pixels);
    }
    regions.sort();
    regions
}

/// Random 16×16 masks: labeled regions must match flood fill exactly.
/// Returns (masks checked, all matched).
pub fn cc_oracle_sweep() -> (usize, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    let mut ok = true;
    for density in [0.1, 0.3, 0.5, 0.7] {
        for _ in 0..300 {
            let mask: Vec<bool> = (0..256).map(|_| rng.gen_bool(density)).collect();
            let mut fast: Vec<Vec<(usize, usize)>> = connected_components(&mask, 16, 16)
                .into_iter()
                .map(|r| r.pixels)
                .collect();
            fast.sort();
            ok &= fast == flood_fill_regions(&mask, 16, 16);
            checked += 1;
        }
    }
    (checked, ok)
}

/// Analysis/synthesis roundtrip and energy preservation over random shapes.
/// Returns (shapes checked, worst relative roundtrip error, worst relative
/// energy mismatch).
pub fn wavelet_sweep() -> (usize, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut worst_rt = 0.0f64;
    let mut worst_energy = 0.0f64;
    let trials = 120;
    for trial in 0..trials {
        let b = 1 + trial % 3;
        let c = 1 + trial % 4;
        let h = 2 * (1 + rng.gen_range(0..12));
        let w = 2 * (1 + rng.gen_range(0..12));
        let x = Tensor::randn(&[b, c, h, w], 1.0 + (trial % 5) as f64, &mut rng);
        let bands = haar_analysis(&x).unwrap();
        let back = haar_synthesis(&[&bands[0], &bands[1], &bands[2], &bands[3]]).unwrap();
        assert_eq!(back.shape(), x.shape());
        let scale = x.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        worst_rt = worst_rt.max(back.max_abs_diff(&x) / scale);
        let e_in: f64 = x.data().iter().map(|v| v * v).sum();
        let e_bands: f64 = bands
            .iter()
            .flat_map(|b| b.data().iter())
            .map(|v| v * v)
            .sum();
        worst_energy = worst_energy.max((e_in - e_bands).abs() / e_in.max(1.0));
    }
    (trials, worst_rt, worst_energy)
}
