//! Contextual bottleneck enhancer: stacked tokenized-MLP blocks with axial
//! channel-group shifts and a depth-wise convolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{gelu, gelu_grad, DepthwiseConv3x3, LayerNorm, LayerNormCache, Linear};
use crate::params::{Grads, ParamBuilder, ParamStore};
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftAxis {
    Width,
    Height,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbeConfig {
    /// Token width; `None` uses the bottleneck channel count.
    pub token_dim: Option<usize>,
    pub shift_amount: i64,
    /// Requested number of channel groups; reduced to the largest divisor of
    /// the token width that does not exceed it.
    pub shift_partitions: usize,
    pub depth: usize,
}

impl Default for CbeConfig {
    fn default() -> Self {
        Self { token_dim: None, shift_amount: 1, shift_partitions: 5, depth: 1 }
    }
}

impl CbeConfig {
    pub fn resolved_token_dim(&self, channels: usize) -> usize {
        self.token_dim.unwrap_or(channels)
    }

    pub fn resolved_partitions(&self, token_dim: usize) -> usize {
        largest_divisor_at_most(token_dim, self.shift_partitions.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("cbe depth must be positive"));
        }
        if self.token_dim == Some(0) {
            return Err(Error::config("cbe token_dim must be positive"));
        }
        if self.shift_partitions == 0 {
            return Err(Error::config("cbe shift_partitions must be positive"));
        }
        Ok(())
    }
}

fn largest_divisor_at_most(n: usize, cap: usize) -> usize {
    (1..=cap.min(n)).rev().find(|d| n.is_multiple_of(*d)).unwrap_or(1)
}

/// Offsets for `partitions` groups spaced by `amount`, centered on zero:
/// `-amount·⌊P/2⌋, …, amount·(⌈P/2⌉ − 1)`.
pub fn group_offsets(partitions: usize, amount: i64) -> Vec<i64> {
    let start = -amount * (partitions / 2) as i64;
    (0..partitions).map(|g| start + g as i64 * amount).collect()
}

/// Translates each equal channel group by its own offset along `axis`;
/// vacated positions are zero. A positive offset moves content toward higher
/// indices (`out[i] = in[i − offset]`).
pub fn shift_groups(x: &FeatureMap, axis: ShiftAxis, offsets: &[i64]) -> Result<FeatureMap> {
    let [b, c, h, w] = x.shape();
    let groups = offsets.len();
    if groups == 0 || c % groups != 0 {
        return Err(Error::shape(format!("{c} channels cannot be split into {groups} shift groups")));
    }
    let per = c / groups;
    let src = x.nhwc();
    let mut out = FeatureMap::zeros(b, c, h, w);
    let dst = out.nhwc_mut();
    for (g, &off) in offsets.iter().enumerate() {
        for bi in 0..b {
            for y in 0..h {
                for xx in 0..w {
                    let (sy, sx) = match axis {
                        ShiftAxis::Width => (y as i64, xx as i64 - off),
                        ShiftAxis::Height => (y as i64 - off, xx as i64),
                    };
                    if sy < 0 || sy >= h as i64 || sx < 0 || sx >= w as i64 {
                        continue;
                    }
                    for ci in g * per..(g + 1) * per {
                        dst[[bi, y, xx, ci]] = src[[bi, sy as usize, sx as usize, ci]];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Centered group shift with `partitions` groups spaced by `shift_amount`.
pub fn spatial_shift(x: &FeatureMap, axis: ShiftAxis, shift_amount: i64, partitions: usize) -> Result<FeatureMap> {
    shift_groups(x, axis, &group_offsets(partitions, shift_amount))
}

fn negate(offsets: &[i64]) -> Vec<i64> {
    offsets.iter().map(|o| -o).collect()
}

/// Width shift → width MLP → depth-wise conv + GELU → height shift → height
/// MLP, with a residual to the tokens and a closing layer norm. The tokens
/// are a linear projection of the input and the result is projected back to
/// the input width.
#[derive(Debug, Clone)]
pub struct TokenizedMlpBlock {
    pub tokenize: Linear,
    pub mlp_w: Linear,
    pub dwconv: DepthwiseConv3x3,
    pub mlp_h: Linear,
    pub norm: LayerNorm,
    pub detokenize: Linear,
    pub offsets: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct TokenizedMlpCache {
    input: FeatureMap,
    shifted_w: FeatureMap,
    t_w: FeatureMap,
    pre_act: FeatureMap,
    shifted_h: FeatureMap,
    ln: LayerNormCache,
    z: FeatureMap,
}

impl TokenizedMlpBlock {
    pub fn new(pb: &mut ParamBuilder, cfg: &CbeConfig, channels: usize) -> Self {
        let d = cfg.resolved_token_dim(channels);
        let partitions = cfg.resolved_partitions(d);
        Self {
            tokenize: Linear::new(&mut pb.scope("tokenize"), channels, d, true),
            mlp_w: Linear::new(&mut pb.scope("mlp_w"), d, d, true),
            dwconv: DepthwiseConv3x3::new(&mut pb.scope("dwconv"), d),
            mlp_h: Linear::new(&mut pb.scope("mlp_h"), d, d, true),
            norm: LayerNorm::new(&mut pb.scope("norm"), d),
            detokenize: Linear::new(&mut pb.scope("detokenize"), d, channels, true),
            offsets: group_offsets(partitions, cfg.shift_amount),
        }
    }

    /// Returns the block output and `Z` (the normalized tokens).
    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, TokenizedMlpCache)> {
        let t = self.tokenize.forward(ps, x)?;
        let shifted_w = shift_groups(&t, ShiftAxis::Width, &self.offsets)?;
        let t_w = self.mlp_w.forward(ps, &shifted_w)?;
        let pre_act = self.dwconv.forward(ps, &t_w)?;
        let y = pre_act.map(gelu);
        let shifted_h = shift_groups(&y, ShiftAxis::Height, &self.offsets)?;
        let mut sum = self.mlp_h.forward(ps, &shifted_h)?;
        sum.add_assign(&t);
        let (z, ln) = self.norm.forward(ps, &sum)?;
        let out = self.detokenize.forward(ps, &z)?;
        let cache = TokenizedMlpCache { input: x.clone(), shifted_w, t_w, pre_act, shifted_h, ln, z };
        Ok((out, cache))
    }

    pub fn backward(&self, ps: &ParamStore, cache: &TokenizedMlpCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dz = self.detokenize.backward(ps, &cache.z, dy, grads);
        let dsum = self.norm.backward(ps, &cache.ln, &dz, grads);
        // residual branch
        let mut dt = dsum.clone();
        let dshift_h = self.mlp_h.backward(ps, &cache.shifted_h, &dsum, grads);
        let dyv = shift_groups(&dshift_h, ShiftAxis::Height, &negate(&self.offsets)).expect("same grouping");
        let mut dpre = dyv;
        dpre.as_mut_slice()
            .iter_mut()
            .zip(cache.pre_act.as_slice())
            .for_each(|(d, &z)| *d *= gelu_grad(z));
        let dt_w = self.dwconv.backward(ps, &cache.t_w, &dpre, grads);
        let dshift_w = self.mlp_w.backward(ps, &cache.shifted_w, &dt_w, grads);
        let dt_shift = shift_groups(&dshift_w, ShiftAxis::Width, &negate(&self.offsets)).expect("same grouping");
        dt.add_assign(&dt_shift);
        self.tokenize.backward(ps, &cache.input, &dt, grads)
    }
}

#[derive(Debug, Clone)]
pub struct Cbe {
    pub blocks: Vec<TokenizedMlpBlock>,
}

impl Cbe {
    pub fn new(pb: &mut ParamBuilder, cfg: &CbeConfig, channels: usize) -> Result<Self> {
        cfg.validate()?;
        let blocks = (0..cfg.depth)
            .map(|i| TokenizedMlpBlock::new(&mut pb.scope(&format!("block{i}")), cfg, channels))
            .collect();
        Ok(Self { blocks })
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, Vec<TokenizedMlpCache>)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(ps, &h)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    pub fn backward(&self, ps: &ParamStore, caches: &[TokenizedMlpCache], dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let mut d = dy.clone();
        for (block, cache) in self.blocks.iter().zip(caches).rev() {
            d = block.backward(ps, cache, &d, grads);
        }
        d
    }
}
