//! Differentiable building blocks with hand-written backward passes.
//!
//! Each layer's `forward` returns its output together with whatever the
//! matching `backward` needs; `backward` accumulates parameter gradients into
//! a [`Grads`] buffer and returns the gradient with respect to its input.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};
use crate::params::{Grads, ParamBuilder, ParamId, ParamStore};
use crate::tensor::FeatureMap;

/// Channel-wise affine map `y = x W + b`, weight stored `(in, out)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, in_dim: usize, out_dim: usize, bias: bool) -> Self {
        let weight = pb.weight("weight", &[in_dim, out_dim]);
        let bias = bias.then(|| pb.zeros("bias", &[out_dim]));
        Self { weight, bias, in_dim, out_dim }
    }

    fn weight_view<'a>(&self, ps: &'a ParamStore) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.in_dim, self.out_dim), ps.get(self.weight)).expect("weight shape")
    }

    pub fn forward_rows(&self, ps: &ParamStore, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim {
            return Err(Error::shape(format!(
                "linear expects {} input channels, got {}",
                self.in_dim,
                x.ncols()
            )));
        }
        let mut y = x.dot(&self.weight_view(ps));
        if let Some(b) = self.bias {
            let b = ndarray::ArrayView1::from(ps.get(b));
            y += &b;
        }
        Ok(y)
    }

    /// Accumulates `dW += xᵀ dy`, `db += Σ dy` and returns `dy Wᵀ`.
    pub fn backward_rows(
        &self,
        ps: &ParamStore,
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        {
            let mut gw = ArrayViewMut2::from_shape((self.in_dim, self.out_dim), grads.get_mut(self.weight))
                .expect("weight shape");
            general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut gw);
        }
        if let Some(b) = self.bias {
            let gb = grads.get_mut(b);
            for row in dy.rows() {
                gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
        }
        dy.dot(&self.weight_view(ps).t())
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<FeatureMap> {
        let rows = self.forward_rows(ps, x.rows())?;
        Ok(FeatureMap::from_rows(rows, x.batch(), x.height(), x.width()))
    }

    pub fn backward(&self, ps: &ParamStore, x: &FeatureMap, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dx = self.backward_rows(ps, x.rows(), dy.rows(), grads);
        FeatureMap::from_rows(dx, x.batch(), x.height(), x.width())
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalizes each position's channel vector, then applies scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Array2<f64>,
    rstd: Vec<f64>,
}

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder, dim: usize) -> Self {
        let gamma = pb.ones("gamma", &[dim]);
        let beta = pb.zeros("beta", &[dim]);
        Self { gamma, beta, dim }
    }

    pub fn forward_rows(&self, ps: &ParamStore, x: ArrayView2<f64>) -> Result<(Array2<f64>, LayerNormCache)> {
        if x.ncols() != self.dim {
            return Err(Error::shape(format!("layer norm over {} channels, got {}", self.dim, x.ncols())));
        }
        let gamma = ps.get(self.gamma);
        let beta = ps.get(self.beta);
        let n = self.dim as f64;
        let mut normalized = Array2::zeros(x.dim());
        let mut out = Array2::zeros(x.dim());
        let mut rstd = Vec::with_capacity(x.nrows());
        for ((row, mut nrow), mut orow) in x.rows().into_iter().zip(normalized.rows_mut()).zip(out.rows_mut()) {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd.push(r);
            for (j, &v) in row.iter().enumerate() {
                let xh = (v - mean) * r;
                nrow[j] = xh;
                orow[j] = xh * gamma[j] + beta[j];
            }
        }
        Ok((out, LayerNormCache { normalized, rstd }))
    }

    pub fn backward_rows(
        &self,
        ps: &ParamStore,
        cache: &LayerNormCache,
        dy: ArrayView2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let gamma = ps.get(self.gamma);
        let n = self.dim as f64;
        let mut dgamma = vec![0.0; self.dim];
        let mut dbeta = vec![0.0; self.dim];
        let mut dx = Array2::zeros(dy.dim());
        let mut dxhat = vec![0.0; self.dim];
        for (i, (drow, mut dxrow)) in dy.rows().into_iter().zip(dx.rows_mut()).enumerate() {
            let xh = cache.normalized.row(i);
            let mut mean_d = 0.0;
            let mut mean_dx = 0.0;
            for j in 0..self.dim {
                dgamma[j] += drow[j] * xh[j];
                dbeta[j] += drow[j];
                dxhat[j] = drow[j] * gamma[j];
                mean_d += dxhat[j];
                mean_dx += dxhat[j] * xh[j];
            }
            mean_d /= n;
            mean_dx /= n;
            let r = cache.rstd[i];
            for j in 0..self.dim {
                dxrow[j] = r * (dxhat[j] - mean_d - xh[j] * mean_dx);
            }
        }
        grads.get_mut(self.gamma).iter_mut().zip(&dgamma).for_each(|(g, d)| *g += d);
        grads.get_mut(self.beta).iter_mut().zip(&dbeta).for_each(|(g, d)| *g += d);
        dx
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, LayerNormCache)> {
        let (rows, cache) = self.forward_rows(ps, x.rows())?;
        Ok((FeatureMap::from_rows(rows, x.batch(), x.height(), x.width()), cache))
    }

    pub fn backward(&self, ps: &ParamStore, cache: &LayerNormCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dx = self.backward_rows(ps, cache, dy.rows(), grads);
        FeatureMap::from_rows(dx, dy.batch(), dy.height(), dy.width())
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Two-layer perceptron `fc2(gelu(fc1(x)))` applied per position.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Array2<f64>,
    pre_act: Array2<f64>,
    hidden: Array2<f64>,
}

impl Mlp {
    pub fn new(pb: &mut ParamBuilder, dim: usize, hidden: usize) -> Self {
        let fc1 = Linear::new(&mut pb.scope("fc1"), dim, hidden, true);
        let fc2 = Linear::new(&mut pb.scope("fc2"), hidden, dim, true);
        Self { fc1, fc2 }
    }

    pub fn forward_rows(&self, ps: &ParamStore, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        let pre_act = self.fc1.forward_rows(ps, x)?;
        let hidden = pre_act.mapv(gelu);
        let out = self.fc2.forward_rows(ps, hidden.view())?;
        Ok((out, MlpCache { input: x.to_owned(), pre_act, hidden }))
    }

    pub fn backward_rows(&self, ps: &ParamStore, cache: &MlpCache, dy: ArrayView2<f64>, grads: &mut Grads) -> Array2<f64> {
        let mut dh = self.fc2.backward_rows(ps, cache.hidden.view(), dy, grads);
        dh.zip_mut_with(&cache.pre_act, |d, &z| *d *= gelu_grad(z));
        self.fc1.backward_rows(ps, cache.input.view(), dh.view(), grads)
    }
}

/// Moves each `factor × factor` spatial cell into channels, row-major within
/// the cell: output channel `(dy * factor + dx) * C + c`.
pub fn space_to_depth(x: &FeatureMap, factor: usize) -> Result<FeatureMap> {
    let [b, c, h, w] = x.shape();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::shape(format!("spatial dims {h}x{w} not divisible by {factor}")));
    }
    let (oh, ow) = (h / factor, w / factor);
    let src = x.nhwc();
    let mut out = FeatureMap::zeros(b, c * factor * factor, oh, ow);
    let dst = out.nhwc_mut();
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                for dy in 0..factor {
                    for dx in 0..factor {
                        let base = (dy * factor + dx) * c;
                        for ci in 0..c {
                            dst[[bi, oy, ox, base + ci]] = src[[bi, oy * factor + dy, ox * factor + dx, ci]];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`space_to_depth`].
pub fn depth_to_space(x: &FeatureMap, factor: usize) -> Result<FeatureMap> {
    let [b, c, h, w] = x.shape();
    let cell = factor * factor;
    if factor == 0 || c % cell != 0 {
        return Err(Error::shape(format!("{c} channels not divisible by {cell}")));
    }
    let oc = c / cell;
    let src = x.nhwc();
    let mut out = FeatureMap::zeros(b, oc, h * factor, w * factor);
    let dst = out.nhwc_mut();
    for bi in 0..b {
        for y in 0..h {
            for x0 in 0..w {
                for dy in 0..factor {
                    for dx in 0..factor {
                        let base = (dy * factor + dx) * oc;
                        for ci in 0..oc {
                            dst[[bi, y * factor + dy, x0 * factor + dx, ci]] = src[[bi, y, x0, base + ci]];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-channel 3×3 convolution with zero padding 1 and a bias.
#[derive(Debug, Clone)]
pub struct DepthwiseConv3x3 {
    /// `(3, 3, C)`
    pub weight: ParamId,
    pub bias: ParamId,
    pub channels: usize,
}

impl DepthwiseConv3x3 {
    pub fn new(pb: &mut ParamBuilder, channels: usize) -> Self {
        let weight = pb.weight("weight", &[3, 3, channels]);
        let bias = pb.zeros("bias", &[channels]);
        Self { weight, bias, channels }
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<FeatureMap> {
        let [b, c, h, w] = x.shape();
        if c != self.channels {
            return Err(Error::shape(format!("depthwise conv over {} channels, got {c}", self.channels)));
        }
        let k = ps.get(self.weight);
        let bias = ps.get(self.bias);
        let src = x.nhwc();
        let mut out = FeatureMap::zeros(b, c, h, w);
        let dst = out.nhwc_mut();
        for bi in 0..b {
            for y in 0..h {
                for xx in 0..w {
                    for ci in 0..c {
                        dst[[bi, y, xx, ci]] = bias[ci];
                    }
                    for ky in 0..3 {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let sx = xx as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let tap = &k[(ky * 3 + kx) * c..(ky * 3 + kx + 1) * c];
                            for ci in 0..c {
                                dst[[bi, y, xx, ci]] += tap[ci] * src[[bi, sy as usize, sx as usize, ci]];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&self, ps: &ParamStore, x: &FeatureMap, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let [b, c, h, w] = x.shape();
        let k = ps.get(self.weight);
        let src = x.nhwc();
        let d = dy.nhwc();
        let mut dk = vec![0.0; 9 * c];
        let mut db = vec![0.0; c];
        let mut dx = FeatureMap::zeros(b, c, h, w);
        let dxa = dx.nhwc_mut();
        for bi in 0..b {
            for y in 0..h {
                for xx in 0..w {
                    for ci in 0..c {
                        db[ci] += d[[bi, y, xx, ci]];
                    }
                    for ky in 0..3 {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let sx = xx as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let t = (ky * 3 + kx) * c;
                            for ci in 0..c {
                                let g = d[[bi, y, xx, ci]];
                                dk[t + ci] += g * src[[bi, sy as usize, sx as usize, ci]];
                                dxa[[bi, sy as usize, sx as usize, ci]] += g * k[t + ci];
                            }
                        }
                    }
                }
            }
        }
        grads.get_mut(self.weight).iter_mut().zip(&dk).for_each(|(g, v)| *g += v);
        grads.get_mut(self.bias).iter_mut().zip(&db).for_each(|(g, v)| *g += v);
        dx
    }
}
