//! Adaptive context aggregation: a Swin block (global) and a deformable 3×3
//! convolution (local) run in parallel on the decoder map; their outputs are
//! concatenated `(swin, deform)` and fused by a 1×1 convolution.

use ndarray::Array2;

use crate::encoder::{EncoderConfig, SwinBlock, SwinBlockCache};
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::params::{Grads, ParamBuilder, ParamStore};
use crate::tensor::FeatureMap;

pub const KERNEL_TAPS: usize = 9;

/// Offsets of the 3×3 taps, row-major: `(dy, dx)`.
fn tap(k: usize) -> (i64, i64) {
    ((k / 3) as i64 - 1, (k % 3) as i64 - 1)
}

/// Columns `(positions, 9·C)` for a zero-padded 3×3 neighborhood; column
/// `k·C + c` holds channel `c` at tap `k`.
fn im2col3x3(x: &FeatureMap) -> Array2<f64> {
    let [b, c, h, w] = x.shape();
    let src = x.as_slice();
    let mut cols = Array2::zeros((b * h * w, KERNEL_TAPS * c));
    let dst = cols.as_slice_mut().expect("standard layout");
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let row = ((bi * h + y) * w + xx) * KERNEL_TAPS * c;
                for k in 0..KERNEL_TAPS {
                    let (dy, dx) = tap(k);
                    let (sy, sx) = (y as i64 + dy, xx as i64 + dx);
                    if sy < 0 || sy >= h as i64 || sx < 0 || sx >= w as i64 {
                        continue;
                    }
                    let s = ((bi * h + sy as usize) * w + sx as usize) * c;
                    dst[row + k * c..row + (k + 1) * c].copy_from_slice(&src[s..s + c]);
                }
            }
        }
    }
    cols
}

fn col2im3x3(dcols: &Array2<f64>, b: usize, c: usize, h: usize, w: usize) -> FeatureMap {
    let mut dx = FeatureMap::zeros(b, c, h, w);
    let src = dcols.as_slice().expect("standard layout");
    let dst = dx.as_mut_slice();
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let row = ((bi * h + y) * w + xx) * KERNEL_TAPS * c;
                for k in 0..KERNEL_TAPS {
                    let (dy, dxo) = tap(k);
                    let (sy, sx) = (y as i64 + dy, xx as i64 + dxo);
                    if sy < 0 || sy >= h as i64 || sx < 0 || sx >= w as i64 {
                        continue;
                    }
                    let s = ((bi * h + sy as usize) * w + sx as usize) * c;
                    for ci in 0..c {
                        dst[s + ci] += src[row + k * c + ci];
                    }
                }
            }
        }
    }
    dx
}

/// Dense 3×3 convolution, stride 1, zero padding 1.
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    /// weight `(9·C_in, C_out)`
    pub lin: Linear,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv3x3 {
    pub fn new(pb: &mut ParamBuilder, in_channels: usize, out_channels: usize) -> Self {
        let lin = Linear::new(pb, KERNEL_TAPS * in_channels, out_channels, true);
        Self { lin, in_channels, out_channels }
    }

    /// Zero-initialized variant.
    pub fn zeros(pb: &mut ParamBuilder, in_channels: usize, out_channels: usize) -> Self {
        let weight = pb.zeros("weight", &[KERNEL_TAPS * in_channels, out_channels]);
        let bias = Some(pb.zeros("bias", &[out_channels]));
        let lin = Linear { weight, bias, in_dim: KERNEL_TAPS * in_channels, out_dim: out_channels };
        Self { lin, in_channels, out_channels }
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, Array2<f64>)> {
        if x.channels() != self.in_channels {
            return Err(Error::shape(format!("conv expects {} channels, got {}", self.in_channels, x.channels())));
        }
        let cols = im2col3x3(x);
        let y = self.lin.forward_rows(ps, cols.view())?;
        Ok((FeatureMap::from_rows(y, x.batch(), x.height(), x.width()), cols))
    }

    pub fn backward(&self, ps: &ParamStore, cols: &Array2<f64>, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dcols = self.lin.backward_rows(ps, cols.view(), dy.rows(), grads);
        col2im3x3(&dcols, dy.batch(), self.in_channels, dy.height(), dy.width())
    }
}

/// 3×3 deformable convolution with a single offset group and no modulation.
///
/// A zero-initialized 3×3 convolution predicts `2·9` offset channels from the
/// input: channel `2k` is the horizontal and `2k + 1` the vertical offset of
/// tap `k`. Each tap samples the input bilinearly at its displaced location,
/// treating everything outside the map as zero.
#[derive(Debug, Clone)]
pub struct DeformableConv {
    pub offsets: Conv3x3,
    /// weight `(9·C, C)` in tap-major order, plus bias
    pub kernel: Linear,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct DeformableConvCache {
    input: FeatureMap,
    offset_cols: Array2<f64>,
    offsets: FeatureMap,
    cols: Array2<f64>,
}

/// Bilinear corner weights and indices for a fractional location.
struct Bilinear {
    y0: i64,
    x0: i64,
    fy: f64,
    fx: f64,
}

impl Bilinear {
    fn at(py: f64, px: f64) -> Self {
        let y0 = py.floor();
        let x0 = px.floor();
        Self { y0: y0 as i64, x0: x0 as i64, fy: py - y0, fx: px - x0 }
    }

    /// `(weight, d weight/d py, d weight/d px, y, x)` per corner.
    fn corners(&self) -> [(f64, f64, f64, i64, i64); 4] {
        let (fy, fx) = (self.fy, self.fx);
        [
            ((1.0 - fy) * (1.0 - fx), -(1.0 - fx), -(1.0 - fy), self.y0, self.x0),
            ((1.0 - fy) * fx, -fx, 1.0 - fy, self.y0, self.x0 + 1),
            (fy * (1.0 - fx), 1.0 - fx, -fy, self.y0 + 1, self.x0),
            (fy * fx, fx, fy, self.y0 + 1, self.x0 + 1),
        ]
    }
}

impl DeformableConv {
    pub fn new(pb: &mut ParamBuilder, channels: usize) -> Self {
        let offsets = Conv3x3::zeros(&mut pb.scope("offset"), channels, 2 * KERNEL_TAPS);
        let kernel = Linear::new(&mut pb.scope("kernel"), KERNEL_TAPS * channels, channels, true);
        Self { offsets, kernel, channels }
    }

    fn sample_columns(x: &FeatureMap, offsets: &FeatureMap) -> Array2<f64> {
        let [b, c, h, w] = x.shape();
        let src = x.as_slice();
        let off = offsets.as_slice();
        let mut cols = Array2::zeros((b * h * w, KERNEL_TAPS * c));
        let dst = cols.as_slice_mut().expect("standard layout");
        for bi in 0..b {
            for y in 0..h {
                for xx in 0..w {
                    let pos = (bi * h + y) * w + xx;
                    for k in 0..KERNEL_TAPS {
                        let (dy, dx) = tap(k);
                        let ox = off[pos * 2 * KERNEL_TAPS + 2 * k];
                        let oy = off[pos * 2 * KERNEL_TAPS + 2 * k + 1];
                        let bl = Bilinear::at(y as f64 + dy as f64 + oy, xx as f64 + dx as f64 + ox);
                        let out = &mut dst[pos * KERNEL_TAPS * c + k * c..pos * KERNEL_TAPS * c + (k + 1) * c];
                        for (wgt, _, _, cy, cx) in bl.corners() {
                            if wgt == 0.0 || cy < 0 || cy >= h as i64 || cx < 0 || cx >= w as i64 {
                                continue;
                            }
                            let s = ((bi * h + cy as usize) * w + cx as usize) * c;
                            for (o, v) in out.iter_mut().zip(&src[s..s + c]) {
                                *o += wgt * v;
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, DeformableConvCache)> {
        if x.channels() != self.channels {
            return Err(Error::shape(format!("deformable conv expects {} channels, got {}", self.channels, x.channels())));
        }
        let (offsets, offset_cols) = self.offsets.forward(ps, x)?;
        let cols = Self::sample_columns(x, &offsets);
        let y = self.kernel.forward_rows(ps, cols.view())?;
        let out = FeatureMap::from_rows(y, x.batch(), x.height(), x.width());
        Ok((out, DeformableConvCache { input: x.clone(), offset_cols, offsets, cols }))
    }

    /// Offsets predicted during the forward pass, `(B, 18, H, W)`.
    pub fn offsets_of<'a>(&self, cache: &'a DeformableConvCache) -> &'a FeatureMap {
        &cache.offsets
    }

    pub fn backward(&self, ps: &ParamStore, cache: &DeformableConvCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let x = &cache.input;
        let [b, c, h, w] = x.shape();
        let dcols = self.kernel.backward_rows(ps, cache.cols.view(), dy.rows(), grads);
        let dc = dcols.as_slice().expect("standard layout");
        let src = x.as_slice();
        let off = cache.offsets.as_slice();
        let mut dx = FeatureMap::zeros(b, c, h, w);
        let mut doff = FeatureMap::zeros(b, 2 * KERNEL_TAPS, h, w);
        {
            let dxs = dx.as_mut_slice();
            let dos = doff.as_mut_slice();
            for bi in 0..b {
                for y in 0..h {
                    for xx in 0..w {
                        let pos = (bi * h + y) * w + xx;
                        for k in 0..KERNEL_TAPS {
                            let (ty, tx) = tap(k);
                            let ox = off[pos * 2 * KERNEL_TAPS + 2 * k];
                            let oy = off[pos * 2 * KERNEL_TAPS + 2 * k + 1];
                            let bl = Bilinear::at(y as f64 + ty as f64 + oy, xx as f64 + tx as f64 + ox);
                            let g = &dc[pos * KERNEL_TAPS * c + k * c..pos * KERNEL_TAPS * c + (k + 1) * c];
                            let (mut gy, mut gx) = (0.0, 0.0);
                            for (wgt, dwy, dwx, cy, cx) in bl.corners() {
                                if cy < 0 || cy >= h as i64 || cx < 0 || cx >= w as i64 {
                                    continue;
                                }
                                let s = ((bi * h + cy as usize) * w + cx as usize) * c;
                                let mut dot = 0.0;
                                for ci in 0..c {
                                    dot += g[ci] * src[s + ci];
                                    dxs[s + ci] += wgt * g[ci];
                                }
                                gy += dwy * dot;
                                gx += dwx * dot;
                            }
                            dos[pos * 2 * KERNEL_TAPS + 2 * k] += gx;
                            dos[pos * 2 * KERNEL_TAPS + 2 * k + 1] += gy;
                        }
                    }
                }
            }
        }
        let dx_off = self.offsets.backward(ps, &cache.offset_cols, &doff, grads);
        dx.add_assign(&dx_off);
        dx
    }
}

#[derive(Debug, Clone)]
pub struct Aca {
    pub swin: SwinBlock,
    pub deform: DeformableConv,
    pub fuse: Linear,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct AcaCache {
    swin: SwinBlockCache,
    deform: DeformableConvCache,
    cat: FeatureMap,
}

impl Aca {
    pub fn new(pb: &mut ParamBuilder, cfg: &EncoderConfig, channels: usize, num_heads: usize, h: usize, w: usize) -> Result<Self> {
        let swin = SwinBlock::for_grid(&mut pb.scope("swin"), cfg, channels, num_heads, h, w, false)?;
        let deform = DeformableConv::new(&mut pb.scope("deform"), channels);
        let fuse = Linear::new(&mut pb.scope("fuse"), 2 * channels, channels, true);
        Ok(Self { swin, deform, fuse, channels })
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, AcaCache)> {
        let (global, swin) = self.swin.forward(ps, x)?;
        let (local, deform) = self.deform.forward(ps, x)?;
        let cat = FeatureMap::concat_channels(&global, &local)?;
        let out = self.fuse.forward(ps, &cat)?;
        Ok((out, AcaCache { swin, deform, cat }))
    }

    pub fn backward(&self, ps: &ParamStore, cache: &AcaCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dcat = self.fuse.backward(ps, &cache.cat, dy, grads);
        let (dg, dl) = dcat.split_channels(self.channels);
        let mut dx = self.swin.backward(ps, &cache.swin, &dg, grads);
        dx.add_assign(&self.deform.backward(ps, &cache.deform, &dl, grads));
        dx
    }
}
