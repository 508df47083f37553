//! NS-FPN assembly: tiny backbone, lateral reduction, per-level purification,
//! top-down spiral fusion, segmentation head, and the training step.
//!
//! Pyramid contract: levels X1..X4 sit at strides {2, 4, 8, 16} relative to
//! the input image and carry `channels` (default 64) features after lateral
//! reduction. LFP runs on every lateral; SFS fuses the three top-down edges
//! (Y4 has none).

use crate::autodiff::{
    add, add_scalar, bilinear_upsample2, conv2d, div, mul,
    nearest_upsample2, scale, sigmoid, silu, sum_all, Var,
};
use crate::error::{Error, Result};
use crate::lfp::{lfp_forward, LfpSettings, LfpVars};
use crate::sfs::{sfs_fuse, SfsVars, SpiralConfig};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const NUM_LEVELS: usize = 4;
pub const NUM_SFS_EDGES: usize = 3;
const BACKBONE_WIDTHS: [usize; 4] = [16, 32, 64, 64];
const HEAD_MID_CHANNELS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpnMode {
    /// Conventional FPN baseline: identity laterals, nearest-neighbor 2×
    /// upsampling plus addition in the top-down path.
    Plain,
    /// Noise-suppression FPN: LFP on all laterals, SFS on the top-down edges.
    Ns,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NsFpnConfig {
    pub channels: usize,
    pub mode: FpnMode,
    pub lfp: LfpSettings,
    /// One spiral configuration per SFS edge: [Y2→Y1, Y3→Y2, Y4→Y3].
    pub spiral: [SpiralConfig; NUM_SFS_EDGES],
}

impl Default for NsFpnConfig {
    fn default() -> Self {
        NsFpnConfig {
            channels: 64,
            mode: FpnMode::Ns,
            lfp: LfpSettings::default(),
            spiral: [SpiralConfig::default(); NUM_SFS_EDGES],
        }
    }
}

impl NsFpnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("channel count must be positive".into()));
        }
        if self.lfp.kernel_size % 2 == 0 {
            return Err(Error::Config("LFP kernel size must be odd".into()));
        }
        for s in &self.spiral {
            s.validate()?;
            if self.channels % s.heads != 0 {
                return Err(Error::Config(format!(
                    "channels {} not divisible by {} heads",
                    self.channels, s.heads
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ConvP {
    pub w: Tensor,
    pub b: Tensor,
}

impl ConvP {
    fn new(c_out: usize, c_in: usize, k: usize, rng: &mut ChaCha8Rng) -> ConvP {
        let std = (2.0 / (c_in * k * k) as f64).sqrt();
        ConvP {
            w: Tensor::randn(&[c_out, c_in, k, k], std, rng),
            b: Tensor::zeros(&[c_out]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Clone, Debug)]
pub struct LfpP {
    pub conv: ConvP,
    pub sigma_raw: Tensor,
}

#[derive(Clone, Debug)]
pub struct LnP {
    pub gain: Tensor,
    pub shift: Tensor,
}

#[derive(Clone, Debug)]
pub struct SfsP {
    pub eps: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ln_q: LnP,
    pub ln_kv: LnP,
}

#[derive(Debug)]
pub struct NsFpnModel {
    pub cfg: NsFpnConfig,
    pub backbone: Vec<ConvP>,
    pub laterals: Vec<ConvP>,
    pub lfp: Vec<LfpP>,
    pub sfs: Vec<SfsP>,
    pub head_conv: ConvP,
    pub head_out: ConvP,
}

impl NsFpnModel {
    pub fn new(cfg: NsFpnConfig, seed: u64) -> Result<NsFpnModel> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = cfg.channels;
        let mut backbone = Vec::new();
        let mut prev = 1;
        for width in BACKBONE_WIDTHS {
            backbone.push(ConvP::new(width, prev, 3, &mut rng));
            prev = width;
        }
        let laterals = BACKBONE_WIDTHS
            .iter()
            .map(|&w| ConvP::new(c, w, 1, &mut rng))
            .collect();
        let lfp = (0..NUM_LEVELS)
            .map(|_| LfpP {
                conv: ConvP::new(1, 2, 7, &mut rng),
                sigma_raw: Tensor::scalar(0.5),
            })
            .collect();
        let attn_std = 1.0 / (c as f64).sqrt();
        let sfs = cfg
            .spiral
            .iter()
            .map(|s| SfsP {
                eps: Tensor::zeros(&[s.heads * s.points, 2]),
                wq: Tensor::randn(&[c, c], attn_std, &mut rng),
                wk: Tensor::randn(&[c, c], attn_std, &mut rng),
                wv: Tensor::randn(&[c, c], attn_std, &mut rng),
                wo: Tensor::randn(&[c, c], attn_std, &mut rng),
                ln_q: LnP {
                    gain: Tensor::full(&[c], 1.0),
                    shift: Tensor::zeros(&[c]),
                },
                ln_kv: LnP {
                    gain: Tensor::full(&[c], 1.0),
                    shift: Tensor::zeros(&[c]),
                },
            })
            .collect();
        let head_conv = ConvP::new(HEAD_MID_CHANNELS, c, 3, &mut rng);
        let mut head_out = ConvP::new(1, HEAD_MID_CHANNELS, 1, &mut rng);
        // start near the background prior: small weights, negative bias, so
        // the first epochs see gradients instead of saturated logits
        for v in head_out.w.data_mut() {
            *v *= 0.1;
        }
        head_out.b.data_mut()[0] = -4.0;
        Ok(NsFpnModel {
            cfg,
            backbone,
            laterals,
            lfp,
            sfs,
            head_conv,
            head_out,
        })
    }

    /// Every learnable tensor with its canonical name, in a fixed order.
    /// This order defines the checkpoint layout and the optimizer state.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, s) in self.backbone.iter().enumerate() {
            out.push((format!("backbone.{i}.w"), &s.w));
            out.push((format!("backbone.{i}.b"), &s.b));
        }
        for (i, s) in self.laterals.iter().enumerate() {
            out.push((format!("lateral.{i}.w"), &s.w));
            out.push((format!("lateral.{i}.b"), &s.b));
        }
        for (i, l) in self.lfp.iter().enumerate() {
            out.push((format!("lfp.{i}.attn.w"), &l.conv.w));
            out.push((format!("lfp.{i}.attn.b"), &l.conv.b));
            out.push((format!("lfp.{i}.sigma_raw"), &l.sigma_raw));
        }
        for (i, s) in self.sfs.iter().enumerate() {
            out.push((format!("sfs.{i}.eps"), &s.eps));
            out.push((format!("sfs.{i}.wq"), &s.wq));
            out.push((format!("sfs.{i}.wk"), &s.wk));
            out.push((format!("sfs.{i}.wv"), &s.wv));
            out.push((format!("sfs.{i}.wo"), &s.wo));
            out.push((format!("sfs.{i}.ln_q.gain"), &s.ln_q.gain));
            out.push((format!("sfs.{i}.ln_q.shift"), &s.ln_q.shift));
            out.push((format!("sfs.{i}.ln_kv.gain"), &s.ln_kv.gain));
            out.push((format!("sfs.{i}.ln_kv.shift"), &s.ln_kv.shift));
        }
        out.push(("head.conv.w".to_string(), &self.head_conv.w));
        out.push(("head.conv.b".to_string(), &self.head_conv.b));
        out.push(("head.out.w".to_string(), &self.head_out.w));
        out.push(("head.out.b".to_string(), &self.head_out.b));
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (i, s) in self.backbone.iter_mut().enumerate() {
            out.push((format!("backbone.{i}.w"), &mut s.w));
            out.push((format!("backbone.{i}.b"), &mut s.b));
        }
        for (i, s) in self.laterals.iter_mut().enumerate() {
            out.push((format!("lateral.{i}.w"), &mut s.w));
            out.push((format!("lateral.{i}.b"), &mut s.b));
        }
        for (i, l) in self.lfp.iter_mut().enumerate() {
            out.push((format!("lfp.{i}.attn.w"), &mut l.conv.w));
            out.push((format!("lfp.{i}.attn.b"), &mut l.conv.b));
            out.push((format!("lfp.{i}.sigma_raw"), &mut l.sigma_raw));
        }
        for (i, s) in self.sfs.iter_mut().enumerate() {
            out.push((format!("sfs.{i}.eps"), &mut s.eps));
            out.push((format!("sfs.{i}.wq"), &mut s.wq));
            out.push((format!("sfs.{i}.wk"), &mut s.wk));
            out.push((format!("sfs.{i}.wv"), &mut s.wv));
            out.push((format!("sfs.{i}.wo"), &mut s.wo));
            out.push((format!("sfs.{i}.ln_q.gain"), &mut s.ln_q.gain));
            out.push((format!("sfs.{i}.ln_q.shift"), &mut s.ln_q.shift));
            out.push((format!("sfs.{i}.ln_kv.gain"), &mut s.ln_kv.gain));
            out.push((format!("sfs.{i}.ln_kv.shift"), &mut s.ln_kv.shift));
        }
        out.push(("head.conv.w".to_string(), &mut self.head_conv.w));
        out.push(("head.conv.b".to_string(), &mut self.head_conv.b));
        out.push(("head.out.w".to_string(), &mut self.head_out.w));
        out.push(("head.out.b".to_string(), &mut self.head_out.b));
        out
    }

    /// Fresh differentiable leaves for one forward/backward pass, in the same
    /// order as [`NsFpnModel::params`].
    pub fn vars(&self) -> ModelVars {
        let leaves: Vec<Var> = self
            .params()
            .iter()
            .map(|(_, t)| Var::leaf((*t).clone()))
            .collect();
        ModelVars { leaves }
    }
}

/// Leaf variables of one tape, ordered like [`NsFpnModel::params`].
pub struct ModelVars {
    leaves: Vec<Var>,
}

impl ModelVars {
    /// Rebuild from externally created leaves, ordered like
    /// [`NsFpnModel::params`]. Used by the gradient audit to perturb
    /// parameters through the same forward code.
    pub fn from_leaves(leaves: Vec<Var>) -> ModelVars {
        ModelVars { leaves }
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    fn at(&self, idx: usize) -> &Var {
        &self.leaves[idx]
    }

    pub fn gradients(&self) -> Vec<Option<Tensor>> {
        self.leaves.iter().map(|l| l.grad()).collect()
    }

    fn backbone(&self, stage: usize) -> (&Var, &Var) {
        (self.at(stage * 2), self.at(stage * 2 + 1))
    }

    fn lateral(&self, level: usize) -> (&Var, &Var) {
        let base = NUM_LEVELS * 2;
        (self.at(base + level * 2), self.at(base + level * 2 + 1))
    }

    fn lfp(&self, level: usize) -> LfpVars {
        let base = NUM_LEVELS * 4;
        LfpVars {
            conv_w: self.at(base + level * 3).clone(),
            conv_b: self.at(base + level * 3 + 1).clone(),
            sigma_raw: self.at(base + level * 3 + 2).clone(),
        }
    }

    fn sfs(&self, edge: usize) -> SfsVars {
        let base = NUM_LEVELS * 4 + NUM_LEVELS * 3;
        let o = base + edge * 9;
        SfsVars {
            eps: self.at(o).clone(),
            wq: self.at(o + 1).clone(),
            wk: self.at(o + 2).clone(),
            wv: self.at(o + 3).clone(),
            wo: self.at(o + 4).clone(),
            ln_q_gain: self.at(o + 5).clone(),
            ln_q_shift: self.at(o + 6).clone(),
            ln_kv_gain: self.at(o + 7).clone(),
            ln_kv_shift: self.at(o + 8).clone(),
        }
    }

    fn head(&self) -> ((&Var, &Var), (&Var, &Var)) {
        let base = NUM_LEVELS * 4 + NUM_LEVELS * 3 + NUM_SFS_EDGES * 9;
        (
            (self.at(base), self.at(base + 1)),
            (self.at(base + 2), self.at(base + 3)),
        )
    }
}

/// Four stride-2 conv stages with widths (16, 32, 64, 64), SiLU after each.
pub fn tiny_backbone(image: &Var, vars: &ModelVars) -> Result<Vec<Var>> {
    let (_, c, h, w) = image.data().dims4()?;
    if c != 1 {
        return Err(Error::shape(
            "tiny_backbone",
            format!("expected single-channel input, got {c} channels"),
        ));
    }
    if h % 16 != 0 || w % 16 != 0 {
        return Err(Error::shape(
            "tiny_backbone",
            format!("spatial size {h}×{w} must be divisible by 16"),
        ));
    }
    let mut feats = Vec::with_capacity(NUM_LEVELS);
    let mut cur = image.clone();
    for stage in 0..NUM_LEVELS {
        let (w, b) = vars.backbone(stage);
        cur = silu(&conv2d(&cur, w, b, 2, 1)?);
        feats.push(cur.clone());
    }
    Ok(feats)
}

/// 1×1 channel reduction of the four backbone features to the pyramid width.
pub fn lateral_reduce(feats: &[Var], vars: &ModelVars) -> Result<Vec<Var>> {
    if feats.len() != NUM_LEVELS {
        return Err(Error::shape(
            "lateral_reduce",
            format!("expected {} levels, got {}", NUM_LEVELS, feats.len()),
        ));
    }
    for i in 1..NUM_LEVELS {
        let (_, _, ph, pw) = feats[i - 1].data().dims4()?;
        let (_, _, h, w) = feats[i].data().dims4()?;
        if h * 2 != ph || w * 2 != pw {
            return Err(Error::shape(
                "lateral_reduce",
                format!(
                    "stride chain violated: level {} is {}×{}, level {} is {}×{}",
                    i - 1,
                    ph,
                    pw,
                    i,
                    h,
                    w
                ),
            ));
        }
    }
    let mut out = Vec::with_capacity(NUM_LEVELS);
    for (i, f) in feats.iter().enumerate() {
        let (w, b) = vars.lateral(i);
        out.push(conv2d(f, w, b, 1, 0)?);
    }
    Ok(out)
}

/// Top-down pyramid assembly: X′_i = LFP(X_i), Y4 = X′4, Y_i = SFS(X′_i, Y_{i+1}).
/// In plain mode LFP is the identity and SFS is nearest-neighbor upsample + add.
pub fn nsfpn_forward(laterals: &[Var], cfg: &NsFpnConfig, vars: &ModelVars) -> Result<Vec<Var>> {
    if laterals.len() != NUM_LEVELS {
        return Err(Error::shape(
            "nsfpn_forward",
            format!("expected {} laterals, got {}", NUM_LEVELS, laterals.len()),
        ));
    }
    let purified: Vec<Var> = match cfg.mode {
        FpnMode::Plain => laterals.to_vec(),
        FpnMode::Ns => {
            let mut p = Vec::with_capacity(NUM_LEVELS);
            for (i, x) in laterals.iter().enumerate() {
                p.push(lfp_forward(x, &vars.lfp(i), &cfg.lfp)?);
            }
            p
        }
    };
    let mut outputs = vec![purified[NUM_LEVELS - 1].clone()];
    for i in (0..NUM_LEVELS - 1).rev() {
        let upper = outputs.last().unwrap();
        let y = match cfg.mode {
            FpnMode::Plain => add(&purified[i], &nearest_upsample2(upper)?)?,
            FpnMode::Ns => sfs_fuse(&purified[i], upper, &cfg.spiral[i], &vars.sfs(i))?,
        };
        outputs.push(y);
    }
    outputs.reverse();
    Ok(outputs)
}

/// Mask logits from the highest-resolution pyramid level:
/// 3×3 conv → SiLU → 1×1 conv → 2× bilinear upsample to input resolution.
pub fn seg_head(y1: &Var, vars: &ModelVars) -> Result<Var> {
    let ((cw, cb), (ow, ob)) = vars.head();
    let mid = silu(&conv2d(y1, cw, cb, 1, 1)?);
    let logits = conv2d(&mid, ow, ob, 1, 0)?;
    bilinear_upsample2(&logits)
}

/// Full forward pass: image B×1×H×W → mask logits B×1×H×W.
pub fn model_forward(image: &Var, cfg: &NsFpnConfig, vars: &ModelVars) -> Result<Var> {
    let feats = tiny_backbone(image, vars)?;
    let lats = lateral_reduce(&feats, vars)?;
    let pyramid = nsfpn_forward(&lats, cfg, vars)?;
    seg_head(&pyramid[0], vars)
}

/// BCE on logits plus (1 − soft IoU) on probabilities, smoothed so empty
/// masks are well defined.
pub fn seg_loss(logits: &Var, mask: &Tensor) -> Result<Var> {
    seg_loss_weighted(logits, mask, POS_WEIGHT)
}

/// Foreground pixels are ~0.5% of a scene; the positive-class BCE weight
/// keeps their gradient from drowning in the background term.
pub const POS_WEIGHT: f64 = 16.0;

pub fn seg_loss_weighted(logits: &Var, mask: &Tensor, pos_weight: f64) -> Result<Var> {
    let bce = crate::autodiff::bce_with_logits_weighted(logits, mask, pos_weight)?;
    let probs = sigmoid(logits);
    let mask_sum: f64 = mask.sum();
    let inter = sum_all(&mul(&probs, &Var::constant(mask.clone()))?);
    let p_sum = sum_all(&probs);
    let union = add_scalar(&crate::autodiff::sub(&p_sum, &inter)?, mask_sum);
    let soft_iou = div(&add_scalar(&inter, 1.0), &add_scalar(&union, 1.0))?;
    add(&bce, &add_scalar(&scale(&soft_iou, -1.0), 1.0))
}

/// Adagrad: per-parameter accumulated squared gradients scale the step.
pub struct Adagrad {
    pub lr: f64,
    pub eps: f64,
    accum: Vec<Tensor>,
}

impl Adagrad {
    pub fn new(model: &NsFpnModel, lr: f64) -> Adagrad {
        Adagrad {
            lr,
            eps: 1e-10,
            // nonzero initial accumulator (the common framework default):
            // with a zero accumulator the first update is ±lr for every
            // parameter regardless of gradient magnitude
            accum: model
                .params()
                .iter()
                .map(|(_, t)| Tensor::full(t.shape(), 0.1))
                .collect(),
        }
    }
}

/// One optimization step over a batch of image/mask pairs. Returns the loss.
pub fn train_step(
    model: &mut NsFpnModel,
    opt: &mut Adagrad,
    images: &Tensor,
    masks: &Tensor,
) -> Result<f64> {
    let vars = model.vars();
    let cfg = model.cfg.clone();
    let logits = model_forward(&Var::constant(images.clone()), &cfg, &vars)?;
    let loss = seg_loss(&logits, masks)?;
    let loss_value = loss.data().data()[0];
    if !loss_value.is_finite() {
        return Err(Error::NonFinite("training loss".to_string()));
    }
    loss.backward()?;
    let grads = vars.gradients();
    let names: Vec<String> = model.params().iter().map(|(n, _)| n.clone()).collect();
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", names[i])));
            }
        }
    }
    let lr = opt.lr;
    let eps = opt.eps;
    for ((i, (_, param)), grad) in model.params_mut().into_iter().enumerate().zip(grads.iter()) {
        if let Some(g) = grad {
            let acc = opt.accum[i].data_mut();
            let pd = param.data_mut();
            for (j, gv) in g.data().iter().enumerate() {
                acc[j] += gv * gv;
                pd[j] -= lr * gv / (acc[j].sqrt() + eps);
            }
        }
    }
    Ok(loss_value)
}

/// Analytic parameter and multiply-accumulate counts per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentCost {
    pub params: usize,
    pub macs: usize,
}

#[derive(Debug, Clone)]
pub struct CostReport {
    pub lfp: ComponentCost,
    pub sfs: ComponentCost,
    pub rest: ComponentCost,
    /// Learnable offset scalars in all SFS edges (shared ε tables).
    pub sfs_offset_params: usize,
    /// Offset parameters a per-query-offset (DAT-style) predictor would need:
    /// a 1×1 conv from C channels to H·P·2 offsets per edge.
    pub dat_offset_params: usize,
}

impl CostReport {
    pub fn total_params(&self) -> usize {
        self.lfp.params + self.sfs.params + self.rest.params
    }
}

/// Counts are analytic: convs contribute Cout·Cin·k² (+Cout bias) parameters
/// and that times the output pixels in MACs; attention projections 4·C², with
/// MACs evaluated at the given input size.
pub fn count_params_flops(model: &NsFpnModel, input_hw: (usize, usize)) -> CostReport {
    let c = model.cfg.channels;
    let (ih, iw) = input_hw;
    let conv_cost = |p: &ConvP, out_hw: (usize, usize)| -> ComponentCost {
        let (co, ci, k, _) = p.w.dims4().unwrap();
        ComponentCost {
            params: p.param_count(),
            macs: co * ci * k * k * out_hw.0 * out_hw.1,
        }
    };
    let mut rest = ComponentCost { params: 0, macs: 0 };
    let mut hw = (ih, iw);
    for s in &model.backbone {
        hw = (hw.0 / 2, hw.1 / 2);
        let cc = conv_cost(s, hw);
        rest.params += cc.params;
        rest.macs += cc.macs;
    }
    let mut level_hw = (ih / 2, iw / 2);
    for l in &model.laterals {
        let cc = conv_cost(l, level_hw);
        rest.params += cc.params;
        rest.macs += cc.macs;
        level_hw = (level_hw.0 / 2, level_hw.1 / 2);
    }
    let head1 = conv_cost(&model.head_conv, (ih / 2, iw / 2));
    let head2 = conv_cost(&model.head_out, (ih / 2, iw / 2));
    rest.params += head1.params + head2.params;
    rest.macs += head1.macs + head2.macs;

    let mut lfp = ComponentCost { params: 0, macs: 0 };
    let mut half_hw = (ih / 4, iw / 4);
    for l in &model.lfp {
        let cc = conv_cost(&l.conv, half_hw);
        lfp.params += cc.params + 1; // + sigma
        let k = model.cfg.lfp.kernel_size;
        lfp.macs += cc.macs + 3 * c * half_hw.0 * half_hw.1 * k * k;
        half_hw = (half_hw.0 / 2, half_hw.1 / 2);
    }

    let mut sfs = ComponentCost { params: 0, macs: 0 };
    let mut sfs_offset_params = 0;
    let mut dat_offset_params = 0;
    let mut fine_hw = (ih / 2, iw / 2);
    for (edge, s) in model.sfs.iter().enumerate() {
        let spiral = &model.cfg.spiral[edge];
        sfs.params += s.eps.len()
            + 4 * c * c
            + 2 * (s.ln_q.gain.len() + s.ln_q.shift.len());
        sfs_offset_params += s.eps.len();
        dat_offset_params += c * spiral.heads * spiral.points * 2 + spiral.heads * spiral.points * 2;
        let coarse_hw = (fine_hw.0 / 2, fine_hw.1 / 2);
        let nq = fine_hw.0 * fine_hw.1;
        let refs = coarse_hw.0.div_ceil(spiral.grid_stride) * coarse_hw.1.div_ceil(spiral.grid_stride);
        let nk = refs * spiral.points;
        let d = c / spiral.heads;
        // projections + per-head score and value contractions
        sfs.macs += nq * c * c * 2 // Wq, Wo
            + spiral.heads * nk * c * c * 2 // Wk, Wv over per-head token sets
            + spiral.heads * nq * nk * d * 2;
        fine_hw = coarse_hw;
    }

    CostReport {
        lfp,
        sfs,
        rest,
        sfs_offset_params,
        dat_offset_params,
    }
}
