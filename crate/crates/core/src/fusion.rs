//! Skip-connection fusion. The hierarchical attention fusion refines the
//! decoder map with a Swin block, concatenates `(skip, refined)` on channels
//! and projects back with a 1×1 convolution. With fusion disabled the decoder
//! map is concatenated unrefined.

use crate::encoder::{EncoderConfig, SwinBlock, SwinBlockCache};
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::params::{Grads, ParamBuilder, ParamStore};
use crate::tensor::FeatureMap;

#[derive(Debug, Clone)]
pub struct Haf {
    pub refine: SwinBlock,
    pub proj: Linear,
    pub skip_channels: usize,
    pub dec_channels: usize,
}

#[derive(Debug, Clone)]
pub struct HafCache {
    block: Option<SwinBlockCache>,
    cat: FeatureMap,
}

fn check_inputs(skip: &FeatureMap, dec: &FeatureMap, skip_channels: usize, dec_channels: usize) -> Result<()> {
    let [bs, cs, hs, ws] = skip.shape();
    let [bd, cd, hd, wd] = dec.shape();
    if (bs, hs, ws) != (bd, hd, wd) {
        return Err(Error::shape(format!(
            "skip {:?} and decoder {:?} differ in batch or spatial size",
            skip.shape(),
            dec.shape()
        )));
    }
    if cs != skip_channels || cd != dec_channels {
        return Err(Error::shape(format!(
            "fusion expects ({skip_channels}, {dec_channels}) channels, got ({cs}, {cd})"
        )));
    }
    Ok(())
}

impl Haf {
    /// Output channels equal the decoder's; the refining block is unshifted.
    pub fn new(
        pb: &mut ParamBuilder,
        cfg: &EncoderConfig,
        skip_channels: usize,
        dec_channels: usize,
        num_heads: usize,
        h: usize,
        w: usize,
    ) -> Result<Self> {
        let refine = SwinBlock::for_grid(&mut pb.scope("swin"), cfg, dec_channels, num_heads, h, w, false)?;
        let proj = Linear::new(&mut pb.scope("proj"), skip_channels + dec_channels, dec_channels, true);
        Ok(Self { refine, proj, skip_channels, dec_channels })
    }

    pub fn forward(&self, ps: &ParamStore, skip: &FeatureMap, dec: &FeatureMap) -> Result<(FeatureMap, HafCache)> {
        check_inputs(skip, dec, self.skip_channels, self.dec_channels)?;
        let (refined, block) = self.refine.forward(ps, dec)?;
        let cat = FeatureMap::concat_channels(skip, &refined)?;
        let out = self.proj.forward(ps, &cat)?;
        Ok((out, HafCache { block: Some(block), cat }))
    }

    /// Returns `(d_skip, d_decoder)`.
    pub fn backward(&self, ps: &ParamStore, cache: &HafCache, dy: &FeatureMap, grads: &mut Grads) -> (FeatureMap, FeatureMap) {
        let dcat = self.proj.backward(ps, &cache.cat, dy, grads);
        let (dskip, drefined) = dcat.split_channels(self.skip_channels);
        let block = cache.block.as_ref().expect("haf cache carries block state");
        let ddec = self.refine.backward(ps, block, &drefined, grads);
        (dskip, ddec)
    }
}

/// `Conv1x1(Concat(skip, decoder))` without refinement.
#[derive(Debug, Clone)]
pub struct ConcatProjection {
    pub proj: Linear,
    pub skip_channels: usize,
    pub dec_channels: usize,
}

impl ConcatProjection {
    pub fn new(pb: &mut ParamBuilder, skip_channels: usize, dec_channels: usize) -> Self {
        let proj = Linear::new(&mut pb.scope("proj"), skip_channels + dec_channels, dec_channels, true);
        Self { proj, skip_channels, dec_channels }
    }

    pub fn forward(&self, ps: &ParamStore, skip: &FeatureMap, dec: &FeatureMap) -> Result<(FeatureMap, HafCache)> {
        check_inputs(skip, dec, self.skip_channels, self.dec_channels)?;
        let cat = FeatureMap::concat_channels(skip, dec)?;
        let out = self.proj.forward(ps, &cat)?;
        Ok((out, HafCache { block: None, cat }))
    }

    pub fn backward(&self, ps: &ParamStore, cache: &HafCache, dy: &FeatureMap, grads: &mut Grads) -> (FeatureMap, FeatureMap) {
        let dcat = self.proj.backward(ps, &cache.cat, dy, grads);
        dcat.split_channels(self.skip_channels)
    }
}

/// Skip fusion used by one decoder stage.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum SkipFusion {
    Haf(Haf),
    Concat(ConcatProjection),
}

impl SkipFusion {
    pub fn forward(&self, ps: &ParamStore, skip: &FeatureMap, dec: &FeatureMap) -> Result<(FeatureMap, HafCache)> {
        match self {
            SkipFusion::Haf(h) => h.forward(ps, skip, dec),
            SkipFusion::Concat(c) => c.forward(ps, skip, dec),
        }
    }

    pub fn backward(&self, ps: &ParamStore, cache: &HafCache, dy: &FeatureMap, grads: &mut Grads) -> (FeatureMap, FeatureMap) {
        match self {
            SkipFusion::Haf(h) => h.backward(ps, cache, dy, grads),
            SkipFusion::Concat(c) => c.backward(ps, cache, dy, grads),
        }
    }
}
