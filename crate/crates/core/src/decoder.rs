//! Decoder and the assembled segmentation network.
//!
//! From the deepest stage up, every decoder stage expands the current map,
//! aggregates context on it and fuses it with the matching encoder skip. The
//! fused map is the only stream carried to the next stage. After the last
//! stage, `log2(patch_size)` further expansions reach input resolution and a
//! per-pixel linear head produces one logit channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bottleneck::{Cbe, CbeConfig, TokenizedMlpCache};
use crate::context::{Aca, AcaCache};
use crate::encoder::{Encoder, EncoderCache, EncoderConfig, SkipPyramid, NUM_STAGES};
use crate::error::{Error, Result};
use crate::fusion::{ConcatProjection, Haf, HafCache, SkipFusion};
use crate::layers::{depth_to_space, space_to_depth, Linear};
use crate::params::{Grads, ParamBuilder, ParamStore};
use crate::tensor::{BinaryMask, FeatureMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    pub encoder: EncoderConfig,
    pub cbe: CbeConfig,
    pub use_haf: bool,
    pub use_cbe: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            encoder: EncoderConfig::default(),
            cbe: CbeConfig::default(),
            use_haf: true,
            use_cbe: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate(self.image_size, self.image_size)?;
        let p = self.encoder.patch_size;
        if !p.is_power_of_two() {
            return Err(Error::config(format!("patch_size {p} must be a power of two")));
        }
        if !self.encoder.embed_dim.is_multiple_of(p) {
            return Err(Error::config(format!(
                "embed_dim {} must be divisible by patch_size {p} for the final expansions",
                self.encoder.embed_dim
            )));
        }
        if self.use_cbe {
            self.cbe.validate()?;
        }
        Ok(())
    }

    /// Channels entering the segmentation head.
    pub fn head_channels(&self) -> usize {
        self.encoder.embed_dim / self.encoder.patch_size
    }
}

/// Channel-wise linear map `C → 2C`, then a 2×2 depth-to-space rearrangement
/// to `C/2` channels at twice the resolution.
#[derive(Debug, Clone)]
pub struct PatchExpand {
    pub expand: Linear,
    pub dim: usize,
}

impl PatchExpand {
    pub fn new(pb: &mut ParamBuilder, dim: usize) -> Result<Self> {
        if !dim.is_multiple_of(2) {
            return Err(Error::shape(format!("patch expanding needs an even channel count, got {dim}")));
        }
        let expand = Linear::new(&mut pb.scope("expand"), dim, 2 * dim, false);
        Ok(Self { expand, dim })
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<FeatureMap> {
        if !x.channels().is_multiple_of(2) {
            return Err(Error::shape(format!("patch expanding needs an even channel count, got {}", x.channels())));
        }
        let y = self.expand.forward(ps, x)?;
        depth_to_space(&y, 2)
    }

    pub fn backward(&self, ps: &ParamStore, x: &FeatureMap, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let d = space_to_depth(dy, 2).expect("inverse of forward rearrangement");
        self.expand.backward(ps, x, &d, grads)
    }
}

#[derive(Debug, Clone)]
pub struct DecoderStage {
    pub expand: PatchExpand,
    pub aca: Aca,
    pub fusion: SkipFusion,
}

#[derive(Debug, Clone)]
pub struct Architecture {
    pub encoder: Encoder,
    pub cbe: Option<Cbe>,
    /// Deepest first: `stages[0]` consumes skip 2.
    pub stages: Vec<DecoderStage>,
    pub final_expands: Vec<PatchExpand>,
    pub head: Linear,
}

/// Parameter-name prefixes of the optional modules.
pub const HAF_PREFIX_MARK: &str = ".haf.";
pub const CBE_PREFIX: &str = "cbe.";

/// A configured network together with its parameters.
#[derive(Debug, Clone)]
pub struct SegModel {
    pub cfg: ModelConfig,
    pub arch: Architecture,
    pub params: ParamStore,
}

struct StageCache {
    input: FeatureMap,
    aca: AcaCache,
    fusion: HafCache,
}

/// CBE caches, decoder stage caches, final expansion inputs, head input.
type DecodeCache = (Option<Vec<TokenizedMlpCache>>, Vec<StageCache>, Vec<FeatureMap>, FeatureMap);

pub struct ForwardCache {
    encoder: EncoderCache,
    bottleneck: FeatureMap,
    cbe: Option<Vec<TokenizedMlpCache>>,
    stages: Vec<StageCache>,
    final_inputs: Vec<FeatureMap>,
    head_input: FeatureMap,
}

impl SegModel {
    /// Builds the network with parameters drawn from `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = {
            let mut pb = ParamBuilder::new(&mut params, &mut rng);
            Self::build(&mut pb, &cfg)?
        };
        Ok(Self { cfg, arch, params })
    }

    /// Rebuilds the layer graph for `cfg` around existing parameters.
    pub fn with_params(cfg: ModelConfig, params: ParamStore) -> Result<Self> {
        let template = Self::new(cfg, 0)?;
        if template.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for (a, b) in template.params.iter().zip(params.iter()) {
            if a.name != b.name || a.shape != b.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: expected {} {:?}, found {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(Self { cfg: template.cfg, arch: template.arch, params })
    }

    fn build(pb: &mut ParamBuilder, cfg: &ModelConfig) -> Result<Architecture> {
        let ec = &cfg.encoder;
        let size = cfg.image_size;
        let encoder = Encoder::new(&mut pb.scope("encoder"), ec, size, size)?;
        let bottleneck_c = ec.stage_channels(NUM_STAGES);
        let cbe = if cfg.use_cbe { Some(Cbe::new(&mut pb.scope("cbe"), &cfg.cbe, bottleneck_c)?) } else { None };
        let mut stages = Vec::with_capacity(NUM_STAGES);
        for s in (0..NUM_STAGES).rev() {
            let mut sp = pb.scope(&format!("decoder.stage{s}"));
            let in_c = ec.stage_channels(s + 1);
            let c = ec.stage_channels(s);
            let g = ec.stage_grid(size, s);
            let heads = ec.num_heads[s];
            let expand = PatchExpand::new(&mut sp.scope("expand"), in_c)?;
            let aca = Aca::new(&mut sp.scope("aca"), ec, c, heads, g, g)?;
            let fusion = if cfg.use_haf {
                SkipFusion::Haf(Haf::new(&mut sp.scope("haf"), ec, c, c, heads, g, g)?)
            } else {
                SkipFusion::Concat(ConcatProjection::new(&mut sp.scope("concat"), c, c))
            };
            stages.push(DecoderStage { expand, aca, fusion });
        }
        let mut final_expands = Vec::new();
        let mut c = ec.embed_dim;
        for i in 0..ec.patch_size.trailing_zeros() {
            final_expands.push(PatchExpand::new(&mut pb.scope(&format!("final.expand{i}")), c)?);
            c /= 2;
        }
        let head = Linear::new(&mut pb.scope("head"), c, 1, true);
        Ok(Architecture { encoder, cbe, stages, final_expands, head })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn encode(&self, image: &FeatureMap) -> Result<SkipPyramid> {
        Ok(self.arch.encoder.forward(&self.params, image)?.0)
    }

    /// Bottleneck enhancement (identity when disabled).
    pub fn enhance(&self, bottleneck: &FeatureMap) -> Result<FeatureMap> {
        match &self.arch.cbe {
            Some(cbe) => Ok(cbe.forward(&self.params, bottleneck)?.0),
            None => Ok(bottleneck.clone()),
        }
    }

    /// Decodes an encoder pyramid to logits `(B, 1, H, W)`.
    pub fn decode(&self, pyr: &SkipPyramid) -> Result<FeatureMap> {
        let (logits, _) = self.decode_cached(pyr)?;
        Ok(logits)
    }

    fn decode_cached(
        &self,
        pyr: &SkipPyramid,
    ) -> Result<(FeatureMap, DecodeCache)> {
        let ps = &self.params;
        let ec = &self.cfg.encoder;
        let expected = ec.stage_channels(NUM_STAGES);
        if pyr.bottleneck.channels() != expected {
            return Err(Error::shape(format!(
                "pyramid bottleneck has {} channels, model expects {expected}",
                pyr.bottleneck.channels()
            )));
        }
        for (i, skip) in pyr.skips.iter().enumerate() {
            if skip.channels() != ec.stage_channels(i) {
                return Err(Error::shape(format!("skip {i} has shape {:?}, channel mismatch", skip.shape())));
            }
        }
        let (mut current, cbe_cache) = match &self.arch.cbe {
            Some(cbe) => {
                let (y, c) = cbe.forward(ps, &pyr.bottleneck)?;
                (y, Some(c))
            }
            None => (pyr.bottleneck.clone(), None),
        };
        let mut stage_caches = Vec::with_capacity(NUM_STAGES);
        for (stage, skip) in self.arch.stages.iter().zip(pyr.skips.iter().rev()) {
            let expanded = stage.expand.forward(ps, &current)?;
            let (a, aca) = stage.aca.forward(ps, &expanded)?;
            let (fused, fusion) = stage.fusion.forward(ps, skip, &a)?;
            stage_caches.push(StageCache { input: current, aca, fusion });
            current = fused;
        }
        let mut final_inputs = Vec::with_capacity(self.arch.final_expands.len());
        for exp in &self.arch.final_expands {
            let next = exp.forward(ps, &current)?;
            final_inputs.push(current);
            current = next;
        }
        let logits = self.arch.head.forward(ps, &current)?;
        Ok((logits, (cbe_cache, stage_caches, final_inputs, current)))
    }

    /// Full forward pass to logits, keeping what backpropagation needs.
    pub fn forward_train(&self, image: &FeatureMap) -> Result<(FeatureMap, ForwardCache)> {
        let (pyr, encoder) = self.arch.encoder.forward(&self.params, image)?;
        let (logits, (cbe, stages, final_inputs, head_input)) = self.decode_cached(&pyr)?;
        let bottleneck = pyr.bottleneck;
        Ok((logits, ForwardCache { encoder, bottleneck, cbe, stages, final_inputs, head_input }))
    }

    pub fn forward(&self, image: &FeatureMap) -> Result<FeatureMap> {
        let pyr = self.encode(image)?;
        self.decode(&pyr)
    }

    /// Gradients of `Σ dlogits · logits` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &FeatureMap) -> Grads {
        let ps = &self.params;
        let mut grads = Grads::zeros_like(ps);
        let mut d = self.arch.head.backward(ps, &cache.head_input, dlogits, &mut grads);
        for (exp, input) in self.arch.final_expands.iter().zip(&cache.final_inputs).rev() {
            d = exp.backward(ps, input, &d, &mut grads);
        }
        let mut d_skips: Vec<FeatureMap> = Vec::with_capacity(NUM_STAGES);
        for (stage, sc) in self.arch.stages.iter().zip(&cache.stages).rev() {
            let (dskip, da) = stage.fusion.backward(ps, &sc.fusion, &d, &mut grads);
            let de = stage.aca.backward(ps, &sc.aca, &da, &mut grads);
            d = stage.expand.backward(ps, &sc.input, &de, &mut grads);
            d_skips.push(dskip);
        }
        // collected shallowest first
        let d_skips: [FeatureMap; NUM_STAGES] = d_skips.try_into().expect("three stages");
        let d_bottleneck = match (&self.arch.cbe, &cache.cbe) {
            (Some(cbe), Some(c)) => cbe.backward(ps, c, &d, &mut grads),
            _ => d,
        };
        debug_assert_eq!(d_bottleneck.shape(), cache.bottleneck.shape());
        self.arch.encoder.backward(ps, &cache.encoder, &d_skips, &d_bottleneck, &mut grads);
        grads
    }

    /// Per-image binary masks: `sigmoid(logit) ≥ threshold`.
    pub fn segment(&self, image: &FeatureMap, threshold: f64) -> Result<Vec<BinaryMask>> {
        let logits = self.forward(image)?;
        threshold_logits(&logits, threshold)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Thresholds one-channel logits into one mask per batch element. A pixel is
/// foreground when `sigmoid(logit) ≥ threshold`, so a zero logit is
/// foreground at threshold 0.5.
pub fn threshold_logits(logits: &FeatureMap, threshold: f64) -> Result<Vec<BinaryMask>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let [b, c, h, w] = logits.shape();
    if c != 1 {
        return Err(Error::shape(format!("expected one logit channel, got {c}")));
    }
    Ok((0..b)
        .map(|bi| BinaryMask::from_fn(h, w, |y, x| sigmoid(logits.get(bi, 0, y, x)) >= threshold))
        .collect())
}
