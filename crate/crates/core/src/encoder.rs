//! Hierarchical Swin encoder: patch partition, linear embedding, then three
//! stages of two Swin blocks and a patch merge. Each stage's output is kept
//! (before merging) as a skip connection for the decoder.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{space_to_depth, depth_to_space, LayerNorm, LayerNormCache, Linear, Mlp, MlpCache};
use crate::params::{Grads, ParamBuilder, ParamId, ParamStore};
use crate::tensor::FeatureMap;

pub const NUM_STAGES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub window_size: usize,
    pub num_heads: [usize; NUM_STAGES],
    pub mlp_ratio: f64,
    pub relative_position_bias: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            patch_size: 4,
            embed_dim: 32,
            window_size: 4,
            num_heads: [2, 4, 8],
            mlp_ratio: 4.0,
            relative_position_bias: false,
        }
    }
}

impl EncoderConfig {
    /// Channels at stage `i` (`C · 2^i`); stage 3 is the bottleneck.
    pub fn stage_channels(&self, stage: usize) -> usize {
        self.embed_dim << stage
    }

    /// Token-grid side at stage `i` for an input side `size`.
    pub fn stage_grid(&self, size: usize, stage: usize) -> usize {
        size / (self.patch_size << stage)
    }

    pub fn mlp_hidden(&self, dim: usize) -> usize {
        ((dim as f64) * self.mlp_ratio).round().max(1.0) as usize
    }

    /// Smallest input side multiple accepted by the encoder.
    pub fn size_multiple(&self) -> usize {
        self.patch_size << NUM_STAGES
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.in_channels == 0 || self.patch_size == 0 || self.embed_dim == 0 || self.window_size == 0 {
            return Err(Error::config("encoder sizes must be positive"));
        }
        if !(self.mlp_ratio > 0.0 && self.mlp_ratio.is_finite()) {
            return Err(Error::config(format!("mlp_ratio must be positive, got {}", self.mlp_ratio)));
        }
        let m = self.size_multiple();
        if height == 0 || width == 0 || !height.is_multiple_of(m) || !width.is_multiple_of(m) {
            return Err(Error::config(format!(
                "input {height}x{width} not divisible by patch_size*2^{NUM_STAGES} = {m}"
            )));
        }
        for (i, &heads) in self.num_heads.iter().enumerate() {
            let c = self.stage_channels(i);
            if heads == 0 || !c.is_multiple_of(heads) {
                return Err(Error::config(format!("stage {i}: {c} channels not divisible by {heads} heads")));
            }
        }
        Ok(())
    }
}

/// Largest window side not exceeding `window` that tiles an `h × w` grid.
pub fn fit_window(h: usize, w: usize, window: usize) -> usize {
    (1..=window.min(h).min(w)).rev().find(|d| h.is_multiple_of(*d) && w.is_multiple_of(*d)).unwrap_or(1)
}

/// Shift used by the second block of a pair; zero when one window covers the grid.
pub fn shifted_offset(h: usize, w: usize, window: usize) -> usize {
    if window >= h && window >= w {
        0
    } else {
        window / 2
    }
}

/// Splits `image` into non-overlapping `p × p` patches, one token per patch
/// with `c · p²` channels.
pub fn patch_partition(image: &FeatureMap, patch_size: usize) -> Result<FeatureMap> {
    let [_, _, h, w] = image.shape();
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return Err(Error::shape(format!("image {h}x{w} not divisible into {patch_size}x{patch_size} patches")));
    }
    space_to_depth(image, patch_size)
}

/// Patch partition followed by the linear embedding.
#[derive(Debug, Clone)]
pub struct PatchEmbed {
    pub patch_size: usize,
    pub proj: Linear,
}

impl PatchEmbed {
    pub fn new(pb: &mut ParamBuilder, in_channels: usize, patch_size: usize, embed_dim: usize) -> Self {
        let proj = Linear::new(&mut pb.scope("proj"), in_channels * patch_size * patch_size, embed_dim, true);
        Self { patch_size, proj }
    }

    pub fn forward(&self, ps: &ParamStore, image: &FeatureMap) -> Result<(FeatureMap, FeatureMap)> {
        let tokens = patch_partition(image, self.patch_size)?;
        let out = self.proj.forward(ps, &tokens)?;
        Ok((out, tokens))
    }

    pub fn backward(&self, ps: &ParamStore, tokens: &FeatureMap, dy: &FeatureMap, grads: &mut Grads) {
        let _ = self.proj.backward(ps, tokens, dy, grads);
    }
}

/// Token positions of every (cyclically shifted) window over an `h × w` grid.
#[derive(Debug, Clone)]
pub struct WindowLayout {
    pub window: usize,
    pub shift: usize,
    pub num_windows: usize,
    /// `num_windows × window²` flat grid indices (`y * w + x`) in the
    /// unshifted frame.
    pub tokens: Vec<usize>,
    /// Region label of each token in the shifted frame; tokens in one window
    /// attend to each other only when labels agree.
    pub regions: Vec<u8>,
}

impl WindowLayout {
    pub fn new(h: usize, w: usize, window: usize, shift: usize) -> Result<Self> {
        if window == 0 || !h.is_multiple_of(window) || !w.is_multiple_of(window) {
            return Err(Error::shape(format!("token grid {h}x{w} not divisible by window {window}")));
        }
        if shift >= window {
            return Err(Error::config(format!("shift {shift} must be smaller than window {window}")));
        }
        let label = |pos: usize, side: usize| -> u8 {
            if shift == 0 || pos < side - window {
                0
            } else if pos < side - shift {
                1
            } else {
                2
            }
        };
        let (nh, nw) = (h / window, w / window);
        let t = window * window;
        let mut tokens = Vec::with_capacity(nh * nw * t);
        let mut regions = Vec::with_capacity(nh * nw * t);
        for wy in 0..nh {
            for wx in 0..nw {
                for ty in 0..window {
                    for tx in 0..window {
                        // rolled frame position (r, c) holds original ((r + s) mod h, (c + s) mod w)
                        let r = wy * window + ty;
                        let c = wx * window + tx;
                        let oy = (r + shift) % h;
                        let ox = (c + shift) % w;
                        tokens.push(oy * w + ox);
                        regions.push(label(r, h) * 3 + label(c, w));
                    }
                }
            }
        }
        Ok(Self { window, shift, num_windows: nh * nw, tokens, regions })
    }

    pub fn tokens_per_window(&self) -> usize {
        self.window * self.window
    }
}

/// Multi-head self-attention inside (optionally shifted) local windows.
#[derive(Debug, Clone)]
pub struct WindowAttention {
    pub qkv: Linear,
    pub proj: Linear,
    pub dim: usize,
    pub num_heads: usize,
    pub window: usize,
    pub shift: usize,
    /// `((2w − 1)², heads)` learned bias indexed by relative offset.
    pub rel_bias: Option<ParamId>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: Array2<f64>,
    qkv: Array2<f64>,
    probs: Vec<f64>,
    context: Array2<f64>,
    layout: WindowLayout,
    batch: usize,
    height: usize,
    width: usize,
}

impl AttentionCache {
    /// Softmax weights `(window², window²)` for one batch element, window and head.
    pub fn probabilities(&self, batch: usize, window: usize, head: usize, num_heads: usize) -> ArrayView2<'_, f64> {
        let t = self.layout.tokens_per_window();
        let offset = ((batch * self.layout.num_windows + window) * num_heads + head) * t * t;
        ArrayView2::from_shape((t, t), &self.probs[offset..offset + t * t]).expect("window block")
    }

    pub fn layout(&self) -> &WindowLayout {
        &self.layout
    }
}

impl WindowAttention {
    pub fn new(
        pb: &mut ParamBuilder,
        dim: usize,
        num_heads: usize,
        window: usize,
        shift: usize,
        relative_position_bias: bool,
    ) -> Result<Self> {
        if num_heads == 0 || !dim.is_multiple_of(num_heads) {
            return Err(Error::config(format!("{dim} channels not divisible by {num_heads} heads")));
        }
        if shift >= window.max(1) {
            return Err(Error::config(format!("shift {shift} must be smaller than window {window}")));
        }
        let qkv = Linear::new(&mut pb.scope("qkv"), dim, 3 * dim, true);
        let proj = Linear::new(&mut pb.scope("proj"), dim, dim, true);
        let rel_bias = relative_position_bias.then(|| {
            let side = 2 * window - 1;
            pb.weight("relative_position_bias", &[side * side, num_heads])
        });
        Ok(Self { qkv, proj, dim, num_heads, window, shift, rel_bias })
    }

    fn head_dim(&self) -> usize {
        self.dim / self.num_heads
    }

    fn rel_index(&self, t: usize, u: usize) -> usize {
        let w = self.window;
        let (ty, tx) = (t / w, t % w);
        let (uy, ux) = (u / w, u % w);
        let dy = ty + w - 1 - uy;
        let dx = tx + w - 1 - ux;
        dy * (2 * w - 1) + dx
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, AttentionCache)> {
        let [b, c, h, w] = x.shape();
        if c != self.dim {
            return Err(Error::shape(format!("attention over {} channels, got {c}", self.dim)));
        }
        let layout = WindowLayout::new(h, w, self.window, self.shift)?;
        let input = x.rows().to_owned();
        let qkv = self.qkv.forward_rows(ps, input.view())?;
        let heads = self.num_heads;
        let d = self.head_dim();
        let t = layout.tokens_per_window();
        let scale = 1.0 / (d as f64).sqrt();
        let bias = self.rel_bias.map(|id| ps.get(id));
        let mut probs = vec![0.0; b * layout.num_windows * heads * t * t];
        let mut context = Array2::zeros((b * h * w, c));
        let mut logits = vec![0.0; t];
        let mut rows = vec![0usize; t];
        for bi in 0..b {
            for wi in 0..layout.num_windows {
                for (k, r) in rows.iter_mut().enumerate() {
                    *r = bi * h * w + layout.tokens[wi * t + k];
                }
                let regions = &layout.regions[wi * t..(wi + 1) * t];
                for hh in 0..heads {
                    let qo = hh * d;
                    let ko = c + hh * d;
                    let vo = 2 * c + hh * d;
                    let base = ((bi * layout.num_windows + wi) * heads + hh) * t * t;
                    for i in 0..t {
                        let qi = qkv.row(rows[i]);
                        let qi = &qi.as_slice().expect("row")[qo..qo + d];
                        let mut max = f64::NEG_INFINITY;
                        for j in 0..t {
                            if regions[i] != regions[j] {
                                logits[j] = f64::NEG_INFINITY;
                                continue;
                            }
                            let kj = qkv.row(rows[j]);
                            let kj = &kj.as_slice().expect("row")[ko..ko + d];
                            let mut s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                            if let Some(bias) = bias {
                                s += bias[self.rel_index(i, j) * heads + hh];
                            }
                            logits[j] = s;
                            max = max.max(s);
                        }
                        let mut total = 0.0;
                        for l in logits.iter_mut() {
                            *l = if l.is_finite() { (*l - max).exp() } else { 0.0 };
                            total += *l;
                        }
                        let p = &mut probs[base + i * t..base + (i + 1) * t];
                        for (pj, l) in p.iter_mut().zip(&logits) {
                            *pj = l / total;
                        }
                        let mut ctx_row = context.row_mut(rows[i]);
                        let ctx = &mut ctx_row.as_slice_mut().expect("row")[qo..qo + d];
                        for j in 0..t {
                            if p[j] == 0.0 {
                                continue;
                            }
                            let vj = qkv.row(rows[j]);
                            let vj = &vj.as_slice().expect("row")[vo..vo + d];
                            for (o, v) in ctx.iter_mut().zip(vj) {
                                *o += p[j] * v;
                            }
                        }
                    }
                }
            }
        }
        let out = self.proj.forward_rows(ps, context.view())?;
        let cache = AttentionCache { input, qkv, probs, context, layout, batch: b, height: h, width: w };
        Ok((FeatureMap::from_rows(out, b, h, w), cache))
    }

    pub fn backward(&self, ps: &ParamStore, cache: &AttentionCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let (b, h, w) = (cache.batch, cache.height, cache.width);
        let c = self.dim;
        let heads = self.num_heads;
        let d = self.head_dim();
        let layout = &cache.layout;
        let t = layout.tokens_per_window();
        let scale = 1.0 / (d as f64).sqrt();
        let dctx = self.proj.backward_rows(ps, cache.context.view(), dy.rows(), grads);
        let mut dqkv = Array2::<f64>::zeros(cache.qkv.dim());
        let mut dbias = self.rel_bias.map(|id| vec![0.0; ps.get(id).len()]);
        let mut rows = vec![0usize; t];
        let mut dp = vec![0.0; t];
        let qkv = cache.qkv.as_slice().expect("standard layout");
        let dctx_s = dctx.as_slice().expect("standard layout");
        let stride = 3 * c;
        let dq_s = dqkv.as_slice_mut().expect("standard layout");
        for bi in 0..b {
            for wi in 0..layout.num_windows {
                for (k, r) in rows.iter_mut().enumerate() {
                    *r = bi * h * w + layout.tokens[wi * t + k];
                }
                for hh in 0..heads {
                    let qo = hh * d;
                    let ko = c + hh * d;
                    let vo = 2 * c + hh * d;
                    let base = ((bi * layout.num_windows + wi) * heads + hh) * t * t;
                    for i in 0..t {
                        let p = &cache.probs[base + i * t..base + (i + 1) * t];
                        let go = &dctx_s[rows[i] * c + qo..rows[i] * c + qo + d];
                        // dP = dO · v, dv += P dO
                        let mut dot = 0.0;
                        for j in 0..t {
                            if p[j] == 0.0 {
                                dp[j] = 0.0;
                                continue;
                            }
                            let rj = rows[j] * stride;
                            let mut s = 0.0;
                            for e in 0..d {
                                s += go[e] * qkv[rj + vo + e];
                                dq_s[rj + vo + e] += p[j] * go[e];
                            }
                            dp[j] = s;
                            dot += p[j] * s;
                        }
                        let ri = rows[i] * stride;
                        for j in 0..t {
                            if p[j] == 0.0 {
                                continue;
                            }
                            let ds = p[j] * (dp[j] - dot);
                            if let Some(db) = dbias.as_mut() {
                                db[self.rel_index(i, j) * heads + hh] += ds;
                            }
                            let rj = rows[j] * stride;
                            let g = ds * scale;
                            for e in 0..d {
                                dq_s[ri + qo + e] += g * qkv[rj + ko + e];
                                dq_s[rj + ko + e] += g * qkv[ri + qo + e];
                            }
                        }
                    }
                }
            }
        }
        if let (Some(id), Some(db)) = (self.rel_bias, dbias) {
            grads.get_mut(id).iter_mut().zip(&db).for_each(|(g, v)| *g += v);
        }
        let dx = self.qkv.backward_rows(ps, cache.input.view(), dqkv.view(), grads);
        FeatureMap::from_rows(dx, b, h, w)
    }
}

/// Pre-norm transformer block: `x + attn(LN(x))`, then `+ mlp(LN(·))`.
#[derive(Debug, Clone)]
pub struct SwinBlock {
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct SwinBlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    mlp: MlpCache,
}

impl SwinBlockCache {
    pub fn attention(&self) -> &AttentionCache {
        &self.attn
    }
}

impl SwinBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pb: &mut ParamBuilder,
        dim: usize,
        num_heads: usize,
        window: usize,
        shift: usize,
        mlp_hidden: usize,
        relative_position_bias: bool,
    ) -> Result<Self> {
        let norm1 = LayerNorm::new(&mut pb.scope("norm1"), dim);
        let attn = WindowAttention::new(&mut pb.scope("attn"), dim, num_heads, window, shift, relative_position_bias)?;
        let norm2 = LayerNorm::new(&mut pb.scope("norm2"), dim);
        let mlp = Mlp::new(&mut pb.scope("mlp"), dim, mlp_hidden);
        Ok(Self { norm1, attn, norm2, mlp })
    }

    /// Block sized for one stage of `cfg` on an `h × w` token grid.
    pub fn for_grid(
        pb: &mut ParamBuilder,
        cfg: &EncoderConfig,
        dim: usize,
        num_heads: usize,
        h: usize,
        w: usize,
        shifted: bool,
    ) -> Result<Self> {
        let window = fit_window(h, w, cfg.window_size);
        let shift = if shifted { shifted_offset(h, w, window) } else { 0 };
        Self::new(pb, dim, num_heads, window, shift, cfg.mlp_hidden(dim), cfg.relative_position_bias)
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, SwinBlockCache)> {
        let (h1, ln1) = self.norm1.forward(ps, x)?;
        let (a, attn) = self.attn.forward(ps, &h1)?;
        let x1 = x.add(&a);
        let (h2, ln2) = self.norm2.forward_rows(ps, x1.rows())?;
        let (m, mlp) = self.mlp.forward_rows(ps, h2.view())?;
        let mut out = x1;
        out.rows_mut().zip_mut_with(&m, |o, v| *o += v);
        Ok((out, SwinBlockCache { ln1, attn, ln2, mlp }))
    }

    pub fn backward(&self, ps: &ParamStore, cache: &SwinBlockCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dh2 = self.mlp.backward_rows(ps, &cache.mlp, dy.rows(), grads);
        let dx1_ln = self.norm2.backward_rows(ps, &cache.ln2, dh2.view(), grads);
        let mut dx1 = dy.clone();
        dx1.rows_mut().zip_mut_with(&dx1_ln, |a, b| *a += b);
        let dh1 = self.attn.backward(ps, &cache.attn, &dx1, grads);
        let dx_ln = self.norm1.backward(ps, &cache.ln1, &dh1, grads);
        dx1.add_assign(&dx_ln);
        dx1
    }
}

/// 2× spatial downsampling: gather each 2×2 cell (4C), normalize, project to 2C.
#[derive(Debug, Clone)]
pub struct PatchMerging {
    pub norm: LayerNorm,
    pub reduction: Linear,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct PatchMergingCache {
    ln: LayerNormCache,
    normed: FeatureMap,
}

impl PatchMerging {
    pub fn new(pb: &mut ParamBuilder, dim: usize) -> Self {
        let norm = LayerNorm::new(&mut pb.scope("norm"), 4 * dim);
        let reduction = Linear::new(&mut pb.scope("reduction"), 4 * dim, 2 * dim, false);
        Self { norm, reduction, dim }
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, PatchMergingCache)> {
        let [_, c, h, w] = x.shape();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!("patch merging needs even dims, got {h}x{w}")));
        }
        if c != self.dim {
            return Err(Error::shape(format!("patch merging over {} channels, got {c}", self.dim)));
        }
        let gathered = space_to_depth(x, 2)?;
        let (normed, ln) = self.norm.forward(ps, &gathered)?;
        let out = self.reduction.forward(ps, &normed)?;
        Ok((out, PatchMergingCache { ln, normed }))
    }

    pub fn backward(&self, ps: &ParamStore, cache: &PatchMergingCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dn = self.reduction.backward(ps, &cache.normed, dy, grads);
        let dg = self.norm.backward(ps, &cache.ln, &dn, grads);
        depth_to_space(&dg, 2).expect("inverse of forward gather")
    }
}

/// Encoder outputs: one skip per stage plus the deepest map.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipPyramid {
    pub skips: [FeatureMap; NUM_STAGES],
    pub bottleneck: FeatureMap,
}

#[derive(Debug, Clone)]
pub struct EncoderStage {
    pub blocks: [SwinBlock; 2],
    pub merge: PatchMerging,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub embed: PatchEmbed,
    pub stages: Vec<EncoderStage>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    tokens: FeatureMap,
    blocks: Vec<[SwinBlockCache; 2]>,
    merges: Vec<PatchMergingCache>,
}

impl Encoder {
    pub fn new(pb: &mut ParamBuilder, cfg: &EncoderConfig, height: usize, width: usize) -> Result<Self> {
        cfg.validate(height, width)?;
        let embed = PatchEmbed::new(&mut pb.scope("embed"), cfg.in_channels, cfg.patch_size, cfg.embed_dim);
        let mut stages = Vec::with_capacity(NUM_STAGES);
        for i in 0..NUM_STAGES {
            let mut sp = pb.scope(&format!("stage{i}"));
            let dim = cfg.stage_channels(i);
            let (gh, gw) = (cfg.stage_grid(height, i), cfg.stage_grid(width, i));
            let heads = cfg.num_heads[i];
            let b0 = SwinBlock::for_grid(&mut sp.scope("block0"), cfg, dim, heads, gh, gw, false)?;
            let b1 = SwinBlock::for_grid(&mut sp.scope("block1"), cfg, dim, heads, gh, gw, true)?;
            let merge = PatchMerging::new(&mut sp.scope("merge"), dim);
            stages.push(EncoderStage { blocks: [b0, b1], merge });
        }
        Ok(Self { cfg: cfg.clone(), embed, stages })
    }

    pub fn forward(&self, ps: &ParamStore, image: &FeatureMap) -> Result<(SkipPyramid, EncoderCache)> {
        let [_, c, h, w] = image.shape();
        if c != self.cfg.in_channels {
            return Err(Error::shape(format!("encoder expects {} input channels, got {c}", self.cfg.in_channels)));
        }
        self.cfg.validate(h, w)?;
        let (mut x, tokens) = self.embed.forward(ps, image)?;
        let mut skips = Vec::with_capacity(NUM_STAGES);
        let mut blocks = Vec::with_capacity(NUM_STAGES);
        let mut merges = Vec::with_capacity(NUM_STAGES);
        for stage in &self.stages {
            let (y0, c0) = stage.blocks[0].forward(ps, &x)?;
            let (y1, c1) = stage.blocks[1].forward(ps, &y0)?;
            let (merged, mc) = stage.merge.forward(ps, &y1)?;
            skips.push(y1);
            blocks.push([c0, c1]);
            merges.push(mc);
            x = merged;
        }
        let skips: [FeatureMap; NUM_STAGES] = skips.try_into().expect("three stages");
        Ok((SkipPyramid { skips, bottleneck: x }, EncoderCache { tokens, blocks, merges }))
    }

    /// Backpropagates gradients arriving at every skip and at the bottleneck.
    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &EncoderCache,
        d_skips: &[FeatureMap; NUM_STAGES],
        d_bottleneck: &FeatureMap,
        grads: &mut Grads,
    ) {
        let mut d = d_bottleneck.clone();
        for i in (0..NUM_STAGES).rev() {
            let stage = &self.stages[i];
            let mut dy1 = stage.merge.backward(ps, &cache.merges[i], &d, grads);
            dy1.add_assign(&d_skips[i]);
            let dy0 = stage.blocks[1].backward(ps, &cache.blocks[i][1], &dy1, grads);
            d = stage.blocks[0].backward(ps, &cache.blocks[i][0], &dy0, grads);
        }
        self.embed.backward(ps, &cache.tokens, &d, grads);
    }
}
