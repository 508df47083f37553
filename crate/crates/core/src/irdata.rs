//! Synthetic infrared small-target scenes, grayscale raster I/O, and the
//! segmentation metrics IoU / Pd / Fa with connected-component matching.

use crate::error::{Error, Result};
use crate::tensor::{Tensor, Tensor4};
use crate::wavelet::{crop, haar_analysis, haar_synthesis, pad_to_even};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub targets_min: usize,
    pub targets_max: usize,
    /// Peak amplitude range of each target's Gaussian profile.
    pub amp_min: f64,
    pub amp_max: f64,
    /// Radius (σ, pixels) range of the target profile.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Peak-to-peak amplitude of the low-frequency background clutter.
    pub clutter_amp: f64,
    /// Number of superposed sinusoidal clutter waves; more waves → rougher.
    pub clutter_waves: usize,
    pub noise_std: f64,
    /// Bright sub-threshold blobs that are not targets and never enter the mask.
    pub distractors: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            height: 64,
            width: 64,
            targets_min: 1,
            targets_max: 3,
            amp_min: 0.35,
            amp_max: 0.55,
            sigma_min: 1.2,
            sigma_max: 2.2,
            clutter_amp: 0.15,
            clutter_waves: 3,
            noise_std: 0.04,
            distractors: 2,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("scene size must be positive".into()));
        }
        if self.targets_min > self.targets_max {
            return Err(Error::Config("targets_min exceeds targets_max".into()));
        }
        if self.amp_min > self.amp_max || self.sigma_min > self.sigma_max {
            return Err(Error::Config("range bounds out of order".into()));
        }
        if self.amp_min <= self.noise_std {
            return Err(Error::Config(
                "target amplitude must exceed the noise standard deviation".into(),
            ));
        }
        Ok(())
    }
}

/// Half-peak radius of a Gaussian with the given σ: r where exp(-r²/2σ²) = ½.
fn half_peak_radius(sigma: f64) -> f64 {
    sigma * (2.0 * (2.0f64).ln()).sqrt()
}

/// One synthetic scene: smooth clutter + Gaussian targets + white noise +
/// distractors, clamped to [0,1]. The mask marks exactly the pixels where the
/// target-only signal exceeds half its peak; target placement keeps the
/// half-peak discs separated so mask regions equal target count.
pub fn synth_scene(seed: u64, cfg: &SceneConfig) -> Result<(Tensor4, Tensor4)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (cfg.height, cfg.width);
    let mut image = vec![0.35f64; h * w];

    for _ in 0..cfg.clutter_waves {
        let fy: f64 = rng.gen_range(0.5..2.0) / h as f64;
        let fx: f64 = rng.gen_range(0.5..2.0) / w as f64;
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp = cfg.clutter_amp / (2.0 * cfg.clutter_waves as f64);
        for r in 0..h {
            for c in 0..w {
                image[r * w + c] += amp
                    * (std::f64::consts::TAU * (fy * r as f64 + fx * c as f64) + phase).sin();
            }
        }
    }

    let count = rng.gen_range(cfg.targets_min..=cfg.targets_max);
    let margin = half_peak_radius(cfg.sigma_max) + 2.0;
    let min_sep = 2.0 * half_peak_radius(cfg.sigma_max) + 3.0;
    let mut centers: Vec<(f64, f64)> = Vec::new();
    let mut attempts = 0;
    while centers.len() < count {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Config(format!(
                "cannot place {count} separated targets on a {h}×{w} scene"
            )));
        }
        let cy = rng.gen_range(margin..(h as f64 - margin));
        let cx = rng.gen_range(margin..(w as f64 - margin));
        if centers
            .iter()
            .all(|&(y, x)| ((y - cy).powi(2) + (x - cx).powi(2)).sqrt() >= min_sep)
        {
            centers.push((cy, cx));
        }
    }

    let mut mask = vec![0.0f64; h * w];
    for &(cy, cx) in &centers {
        let amp: f64 = rng.gen_range(cfg.amp_min..=cfg.amp_max);
        let sigma: f64 = rng.gen_range(cfg.sigma_min..=cfg.sigma_max);
        let rr = half_peak_radius(sigma);
        for r in 0..h {
            for c in 0..w {
                let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                let signal = amp * (-d2 / (2.0 * sigma * sigma)).exp();
                image[r * w + c] += signal;
                if d2.sqrt() <= rr && signal > amp * 0.5 - 1e-12 {
                    mask[r * w + c] = 1.0;
                }
            }
        }
    }

    for _ in 0..cfg.distractors {
        let cy: f64 = rng.gen_range(2.0..(h as f64 - 2.0));
        let cx: f64 = rng.gen_range(2.0..(w as f64 - 2.0));
        let amp = cfg.amp_min * 0.6;
        let sigma: f64 = rng.gen_range(0.7..1.2);
        for r in 0..h {
            for c in 0..w {
                let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                image[r * w + c] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }

    for v in image.iter_mut() {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let noise = (-2.0 * u1.ln()).sqrt() * u2.cos() * cfg.noise_std;
        *v = (*v + noise).clamp(0.0, 1.0);
    }

    Ok((
        Tensor::from_vec(&[1, 1, h, w], image)?,
        Tensor::from_vec(&[1, 1, h, w], mask)?,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    /// (row, col) pixels in discovery order.
    pub pixels: Vec<(usize, usize)>,
    pub centroid: (f64, f64),
}

/// 8-connected components of a binary mask, ordered by first pixel in
/// row-major scan order.
pub fn connected_components(mask: &[bool], h: usize, w: usize) -> Vec<Region> {
    let mut seen = vec![false; h * w];
    let mut regions = Vec::new();
    for start in 0..h * w {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut pixels = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(idx) = stack.pop() {
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
                        stack.push(n);
                    }
                }
            }
        }
        pixels.sort_unstable();
        let n = pixels.len() as f64;
        let centroid = (
            pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n,
            pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n,
        );
        regions.push(Region { pixels, centroid });
    }
    regions
}

/// |pred ∩ gt| / |pred ∪ gt|; 1 when both masks are empty.
pub fn iou(pred: &[bool], gt: &[bool]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::shape(
            "iou",
            format!("mask lengths differ: {} vs {}", pred.len(), gt.len()),
        ));
    }
    let inter = pred.iter().zip(gt).filter(|(p, g)| **p && **g).count();
    let union = pred.iter().zip(gt).filter(|(p, g)| **p || **g).count();
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SegMetrics {
    pub iou: f64,
    /// Matched GT targets / total GT targets.
    pub pd: f64,
    /// False-alarm rate: unmatched predicted pixels / total pixels
    /// (region-count Fa available via `false_regions`).
    pub fa: f64,
    pub matched: usize,
    pub missed: usize,
    pub false_regions: usize,
    pub false_pixels: usize,
}

pub const DEFAULT_MATCH_RADIUS: f64 = 3.0;

/// Target-level matching: a GT region is detected when some predicted region's
/// centroid lies within `match_radius` of its centroid, matched greedily
/// nearest-first, one-to-one.
pub fn pd_fa(pred: &[bool], gt: &[bool], h: usize, w: usize, match_radius: f64) -> Result<SegMetrics> {
    if pred.len() != h * w || gt.len() != h * w {
        return Err(Error::shape(
            "pd_fa",
            format!("expected {h}×{w} masks, got {} and {}", pred.len(), gt.len()),
        ));
    }
    let pred_regions = connected_components(pred, h, w);
    let gt_regions = connected_components(gt, h, w);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in pred_regions.iter().enumerate() {
        for (gi, g) in gt_regions.iter().enumerate() {
            let d = ((p.centroid.0 - g.centroid.0).powi(2)
                + (p.centroid.1 - g.centroid.1).powi(2))
            .sqrt();
            if d <= match_radius {
                pairs.push((d, pi, gi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; pred_regions.len()];
    let mut gt_used = vec![false; gt_regions.len()];
    let mut matched = 0;
    for (_, pi, gi) in pairs {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            matched += 1;
        }
    }
    let false_pixels: usize = pred_regions
        .iter()
        .zip(&pred_used)
        .filter(|(_, used)| !**used)
        .map(|(r, _)| r.pixels.len())
        .sum();
    let false_regions = pred_used.iter().filter(|u| !**u).count();
    Ok(SegMetrics {
        iou: iou(pred, gt)?,
        pd: if gt_regions.is_empty() {
            1.0
        } else {
            matched as f64 / gt_regions.len() as f64
        },
        fa: false_pixels as f64 / (h * w) as f64,
        matched,
        missed: gt_regions.len() - matched,
        false_regions,
        false_pixels,
    })
}

// ---------------------------------------------------------------------------
// Portable graymap (P5) I/O.

fn raster_err(path: &Path, offset: usize, detail: impl Into<String>) -> Error {
    Error::Raster {
        path: path.to_path_buf(),
        offset,
        detail: detail.into(),
    }
}

struct PgmParser<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> PgmParser<'a> {
    fn skip_space(&mut self) -> Result<()> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if *b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => return Ok(()),
                None => {
                    return Err(raster_err(self.path, self.pos, "unexpected end of header"))
                }
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space()?;
        let start = self.pos;
        while matches!(self.bytes.get(self.pos), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(raster_err(self.path, start, "expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| raster_err(self.path, start, "number out of range"))
    }
}

/// Gray image in [0,1] plus its sample depth in bits.
#[derive(Debug, Clone)]
pub struct GrayImage {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
    pub depth: u8,
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut p = PgmParser {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(raster_err(path, 0, "not a binary graymap (missing P5 magic)"));
    }
    p.pos = 2;
    let w = p.number()?;
    let h = p.number()?;
    let maxval_pos = p.pos;
    let maxval = p.number()?;
    let (depth, bpp): (u8, usize) = match maxval {
        255 => (8, 1),
        65535 => (16, 2),
        _ => {
            return Err(raster_err(
                path,
                maxval_pos,
                format!("unsupported max value {maxval} (want 255 or 65535)"),
            ))
        }
    };
    match bytes.get(p.pos) {
        Some(b) if b.is_ascii_whitespace() => p.pos += 1,
        _ => return Err(raster_err(path, p.pos, "expected whitespace after max value")),
    }
    let need = h * w * bpp;
    if bytes.len() - p.pos < need {
        return Err(raster_err(
            path,
            bytes.len(),
            format!(
                "truncated payload: need {need} bytes at offset {}, have {}",
                p.pos,
                bytes.len() - p.pos
            ),
        ));
    }
    let payload = &bytes[p.pos..p.pos + need];
    let data = if bpp == 1 {
        payload.iter().map(|b| *b as f64 / 255.0).collect()
    } else {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect()
    };
    Ok(GrayImage { h, w, data, depth })
}

fn write_pgm(path: &Path, h: usize, w: usize, data: &[f64], depth: u8) -> Result<()> {
    assert_eq!(data.len(), h * w);
    let maxval: u32 = if depth == 16 { 65535 } else { 255 };
    let mut out = Vec::with_capacity(h * w * 2 + 32);
    write!(out, "P5\n{w} {h}\n{maxval}\n").unwrap();
    for v in data {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        if depth == 16 {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// 16-bit graymap: lossless for data that was read from a 16-bit graymap.
pub fn write_gray(path: &Path, h: usize, w: usize, data: &[f64]) -> Result<()> {
    write_pgm(path, h, w, data, 16)
}

/// Binary mask as an 8-bit {0, 255} graymap.
pub fn write_mask(path: &Path, h: usize, w: usize, mask: &[bool]) -> Result<()> {
    let data: Vec<f64> = mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect();
    write_pgm(path, h, w, &data, 8)
}

pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = read_pgm(path)?;
    Ok((img.h, img.w, img.data.iter().map(|v| *v >= 0.5).collect()))
}

// ---------------------------------------------------------------------------
// Dataset manifests: plain-text lines "image_path mask_path".

pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(img), Some(msk), None) => out.push((base.join(img), base.join(msk))),
            _ => {
                return Err(Error::Config(format!(
                    "{}:{}: expected \"image_path mask_path\"",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Generate `count` scenes under `dir` and write a manifest referencing them.
/// Scene i uses seed `base_seed + i`.
pub fn generate_dataset(
    dir: &Path,
    count: usize,
    base_seed: u64,
    cfg: &SceneConfig,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut manifest = String::new();
    for i in 0..count {
        let (image, mask) = synth_scene(base_seed + i as u64, cfg)?;
        let (_, _, h, w) = image.dims4()?;
        let img_name = format!("img_{i:04}.pgm");
        let msk_name = format!("msk_{i:04}.pgm");
        write_gray(&dir.join(&img_name), h, w, image.data())?;
        let bits: Vec<bool> = mask.data().iter().map(|v| *v > 0.5).collect();
        write_mask(&dir.join(&msk_name), h, w, &bits)?;
        manifest.push_str(&format!("{img_name} {msk_name}\n"));
    }
    let mpath = dir.join("manifest.txt");
    std::fs::write(&mpath, manifest)
        .map_err(|e| Error::io(format!("writing {}", mpath.display()), e))?;
    Ok(mpath)
}

// ---------------------------------------------------------------------------
// Frequency decomposition of a raw image.

/// Split an H×W image into its low-frequency part (approximation band only)
/// and high-frequency part (detail bands only). The two sum to the original.
/// Odd sizes are symmetrically padded and cropped back.
pub fn freq_decompose_image(h: usize, w: usize, data: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = Tensor::from_vec(&[1, 1, h, w], data.to_vec())?;
    let (padded, orig) = pad_to_even(&x)?;
    let [ll, lh, hl, hh] = haar_analysis(&padded)?;
    let zero = Tensor::zeros(ll.shape());
    let low = haar_synthesis(&[&ll, &zero, &zero, &zero])?;
    let high = haar_synthesis(&[&zero, &lh, &hl, &hh])?;
    let low = crop(&low, orig)?;
    let high = crop(&high, orig)?;
    Ok((low.data().to_vec(), high.data().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_determinism_and_mask_rule() {
        let cfg = SceneConfig::default();
        let (a_img, a_msk) = synth_scene(7, &cfg).unwrap();
        let (b_img, b_msk) = synth_scene(7, &cfg).unwrap();
        assert_eq!(a_img.data(), b_img.data());
        assert_eq!(a_msk.data(), b_msk.data());
        let bits: Vec<bool> = a_msk.data().iter().map(|v| *v > 0.5).collect();
        let regions = connected_components(&bits, 64, 64);
        assert!(
            (cfg.targets_min..=cfg.targets_max).contains(&regions.len()),
            "got {} regions",
            regions.len()
        );
        assert!(a_img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_targets_zero_mask() {
        let cfg = SceneConfig {
            targets_min: 0,
            targets_max: 0,
            ..SceneConfig::default()
        };
        let (_, mask) = synth_scene(1, &cfg).unwrap();
        assert!(mask.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn clean_single_target_peak() {
        let cfg = SceneConfig {
            targets_min: 1,
            targets_max: 1,
            clutter_amp: 0.0,
            clutter_waves: 0,
            noise_std: 1e-9, // amp > noise invariant
            distractors: 0,
            ..SceneConfig::default()
        };
        let (image, mask) = synth_scene(3, &cfg).unwrap();
        let data = image.data();
        let peak = data
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(mask.data()[peak] > 0.5, "mask does not cover image peak");
        let count = mask.data().iter().filter(|v| **v > 0.5).count();
        assert!(count >= 4, "half-peak blob too small: {count} px");
    }

    #[test]
    fn diagonal_pixels_one_region() {
        let mut mask = vec![false; 16];
        mask[0] = true;
        mask[5] = true; // (1,1) on a 4×4 grid
        assert_eq!(connected_components(&mask, 4, 4).len(), 1);
        assert!(connected_components(&vec![false; 16], 4, 4).is_empty());
    }

    #[test]
    fn iou_pixel_counting() {
        let gt: Vec<bool> = (0..8).map(|i| i < 4).collect();
        let half: Vec<bool> = (0..8).map(|i| i < 2).collect();
        assert_eq!(iou(&half, &gt).unwrap(), 0.5);
        let with_extra: Vec<bool> = (0..8).map(|i| i < 2 || i >= 6).collect();
        assert!((iou(&with_extra, &gt).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&vec![false; 8], &vec![false; 8]).unwrap(), 1.0);
        assert_eq!(iou(&gt, &gt).unwrap(), 1.0);
        assert!(iou(&gt, &vec![false; 4]).is_err());
    }

    #[test]
    fn pd_fa_counts() {
        let (h, w) = (100, 100);
        let mut gt = vec![false; h * w];
        let mut pred = vec![false; h * w];
        // true target at (10, 10), predicted 1 px off
        gt[10 * w + 10] = true;
        pred[10 * w + 11] = true;
        // 5-pixel spurious region far away
        for c in 50..55 {
            pred[80 * w + c] = true;
        }
        let m = pd_fa(&pred, &gt, h, w, DEFAULT_MATCH_RADIUS).unwrap();
        assert_eq!(m.pd, 1.0);
        assert_eq!(m.false_pixels, 5);
        assert!((m.fa - 5.0 / 10_000.0).abs() < 1e-15);
        assert_eq!(m.false_regions, 1);

        let exact = pd_fa(&gt, &gt, h, w, DEFAULT_MATCH_RADIUS).unwrap();
        assert_eq!((exact.pd, exact.fa, exact.iou), (1.0, 0.0, 1.0));
        let none = pd_fa(&vec![false; h * w], &gt, h, w, DEFAULT_MATCH_RADIUS).unwrap();
        assert_eq!((none.pd, none.fa), (0.0, 0.0));
    }

    #[test]
    fn pd_fa_translation_invariant() {
        let (h, w) = (32, 32);
        let place = |dy: usize, dx: usize| {
            let mut gt = vec![false; h * w];
            let mut pred = vec![false; h * w];
            gt[(10 + dy) * w + 10 + dx] = true;
            gt[(10 + dy) * w + 11 + dx] = true;
            pred[(11 + dy) * w + 10 + dx] = true;
            pred[(20 + dy) * w + 20 + dx] = true;
            pd_fa(&pred, &gt, h, w, DEFAULT_MATCH_RADIUS).unwrap()
        };
        let a = place(0, 0);
        let b = place(3, 5);
        assert_eq!((a.pd, a.fa, a.matched, a.false_pixels), (b.pd, b.fa, b.matched, b.false_pixels));
    }

    #[test]
    fn pgm_roundtrip_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..12 * 7)
            .map(|_| rng.gen_range(0u32..=65535) as f64 / 65535.0)
            .collect();
        write_gray(&path, 12, 7, &data).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!((img.h, img.w, img.depth), (12, 7, 16));
        assert_eq!(img.data, data);
    }

    #[test]
    fn mask_roundtrip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let mask: Vec<bool> = (0..64).map(|i| i % 3 == 0).collect();
        write_mask(&path, 8, 8, &mask).unwrap();
        let (h, w, back) = read_mask(&path).unwrap();
        assert_eq!((h, w), (8, 8));
        assert_eq!(back, mask);
    }

    #[test]
    fn truncated_pgm_rejected_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        write_gray(&path, 8, 8, &vec![0.5; 64]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        let err = read_pgm(&path).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
        std::fs::write(&path, b"P6\n8 8\n255\n").unwrap();
        assert!(read_pgm(&path).is_err());
    }

    #[test]
    fn manifest_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        std::fs::write(&path, "# comment\na.pgm b.pgm\n\nc.pgm d.pgm\n").unwrap();
        let entries = read_manifest(&path).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].0, dir.path().join("a.pgm"));
        std::fs::write(&path, "only_one_field\n").unwrap();
        assert!(read_manifest(&path).is_err());
    }

    #[test]
    fn decompose_constant_and_checkerboard() {
        let flat = vec![0.25; 36];
        let (low, high) = freq_decompose_image(6, 6, &flat).unwrap();
        assert!(low.iter().all(|v| (v - 0.25).abs() < 1e-12));
        assert!(high.iter().all(|v| v.abs() < 1e-12));

        let board: Vec<f64> = (0..36).map(|i| if (i / 6 + i % 6) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (low, high) = freq_decompose_image(6, 6, &board).unwrap();
        assert!(low.iter().all(|v| v.abs() < 1e-12));
        for (h, b) in high.iter().zip(&board) {
            assert!((h - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decompose_partition_random_and_odd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (h, w) in [(8, 8), (7, 9), (10, 5)] {
            let data: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (low, high) = freq_decompose_image(h, w, &data).unwrap();
            for i in 0..h * w {
                assert!((low[i] + high[i] - data[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dataset_generation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SceneConfig {
            height: 32,
            width: 32,
            ..SceneConfig::default()
        };
        let manifest = generate_dataset(dir.path(), 3, 100, &cfg).unwrap();
        let entries = read_manifest(&manifest).unwrap();
        assert_eq!(entries.len(), 3);
        for (img, msk) in entries {
            let image = read_pgm(&img).unwrap();
            assert_eq!((image.h, image.w, image.depth), (32, 32, 16));
            let (_, _, mask) = read_mask(&msk).unwrap();
            assert!(!connected_components(&mask, 32, 32).is_empty());
        }
    }
}
