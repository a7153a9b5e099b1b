//! Check routines shared by the core test targets and the acceptance target.
//! Each returns a measured error so callers choose how to report it.
#![allow(dead_code, clippy::needless_range_loop)]

use hafunet::bottleneck::{CbeConfig, TokenizedMlpBlock};
use hafunet::context::{Aca, DeformableConv};
use hafunet::encoder::{EncoderConfig, SwinBlock, WindowAttention};
use hafunet::fusion::Haf;
use hafunet::gradcheck::{inner, random_map, randomize_params, GradCheck, GradCheckReport};
use hafunet::layers::Linear;
use hafunet::losses::{dice_loss, loss_from_logits, total_loss, total_loss_grad, LossConfig};
use hafunet::metrics::{iou, IOU_EPSILON};
use hafunet::params::{Grads, ParamBuilder, ParamStore};
use hafunet::{BinaryMask, FeatureMap, ModelConfig, SegModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MODULE_TOL: f64 = 1e-4;
pub const END_TO_END_TOL: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-pixel `x · W + b` with `W` stored `(in, out)` row-major.
pub fn naive_linear(ps: &ParamStore, lin: &Linear, x: &FeatureMap) -> FeatureMap {
    let [b, cin, h, w] = x.shape();
    let wt = ps.get(lin.weight);
    let bias = lin.bias.map(|id| ps.get(id));
    let cout = lin.out_dim;
    FeatureMap::from_fn([b, cout, h, w], |[bi, o, y, xx]| {
        let mut s = bias.map_or(0.0, |bb| bb[o]);
        for i in 0..cin {
            s += x.get(bi, i, y, xx) * wt[i * cout + o];
        }
        s
    })
}

pub fn naive_layer_norm(gamma: &[f64], beta: &[f64], x: &FeatureMap) -> FeatureMap {
    let [b, c, h, w] = x.shape();
    let mut out = FeatureMap::zeros(b, c, h, w);
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let v: Vec<f64> = (0..c).map(|ci| x.get(bi, ci, y, xx)).collect();
                let mean = v.iter().sum::<f64>() / c as f64;
                let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / c as f64;
                for ci in 0..c {
                    out.set(bi, ci, y, xx, (v[ci] - mean) / (var + 1e-5).sqrt() * gamma[ci] + beta[ci]);
                }
            }
        }
    }
    out
}

pub fn concat(a: &FeatureMap, b: &FeatureMap) -> FeatureMap {
    let [n, ca, h, w] = a.shape();
    let cb = b.channels();
    FeatureMap::from_fn([n, ca + cb, h, w], |[bi, c, y, x]| if c < ca { a.get(bi, c, y, x) } else { b.get(bi, c - ca, y, x) })
}

/// Attention of `tokens` among themselves, `allowed(i, j)` selecting visible keys.
pub fn attend(
    ps: &ParamStore,
    attn: &WindowAttention,
    x: &FeatureMap,
    bi: usize,
    tokens: &[(usize, usize)],
    allowed: impl Fn(usize, usize) -> bool,
    ctx: &mut FeatureMap,
) {
    let c = attn.dim;
    let heads = attn.num_heads;
    let d = c / heads;
    let wq = ps.get(attn.qkv.weight);
    let bq = ps.get(attn.qkv.bias.unwrap());
    let proj = |t: (usize, usize), o: usize| -> f64 {
        let mut s = bq[o];
        for i in 0..c {
            s += x.get(bi, i, t.0, t.1) * wq[i * 3 * c + o];
        }
        s
    };
    let n = tokens.len();
    for hh in 0..heads {
        let q: Vec<Vec<f64>> = tokens.iter().map(|&t| (0..d).map(|k| proj(t, hh * d + k)).collect()).collect();
        let kk: Vec<Vec<f64>> = tokens.iter().map(|&t| (0..d).map(|k| proj(t, c + hh * d + k)).collect()).collect();
        let v: Vec<Vec<f64>> = tokens.iter().map(|&t| (0..d).map(|k| proj(t, 2 * c + hh * d + k)).collect()).collect();
        for i in 0..n {
            let scores: Vec<Option<f64>> = (0..n)
                .map(|j| allowed(i, j).then(|| q[i].iter().zip(&kk[j]).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt()))
                .collect();
            let m = scores.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let e: Vec<f64> = scores.iter().map(|s| s.map_or(0.0, |s| (s - m).exp())).collect();
            let z: f64 = e.iter().sum();
            for k in 0..d {
                let val: f64 = (0..n).map(|j| e[j] / z * v[j][k]).sum();
                ctx.set(bi, hh * d + k, tokens[i].0, tokens[i].1, val);
            }
        }
    }
}

pub fn output_projection(ps: &ParamStore, attn: &WindowAttention, ctx: &FeatureMap) -> FeatureMap {
    naive_linear(ps, &attn.proj, ctx)
}

pub fn attention_fixture(seed: u64, dim: usize, heads: usize, window: usize, shift: usize) -> (WindowAttention, ParamStore, ChaCha8Rng) {
    let mut store = ParamStore::new();
    let mut r = rng(seed);
    let attn = WindowAttention::new(&mut ParamBuilder::new(&mut store, &mut r), dim, heads, window, shift, false).unwrap();
    randomize_params(&mut store, &mut r, 0.4);
    (attn, store, r)
}

pub fn naive_conv3x3(ps: &ParamStore, kernel: &Linear, x: &FeatureMap) -> FeatureMap {
    let [b, c, h, w] = x.shape();
    let wt = ps.get(kernel.weight);
    let bias = ps.get(kernel.bias.unwrap());
    let cout = kernel.out_dim;
    FeatureMap::from_fn([b, cout, h, w], |[bi, o, y, xx]| {
        let mut s = bias[o];
        for ky in 0..3 {
            for kx in 0..3 {
                let (sy, sx) = (y as i64 + ky as i64 - 1, xx as i64 + kx as i64 - 1);
                if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                    continue;
                }
                for ci in 0..c {
                    s += x.get(bi, ci, sy as usize, sx as usize) * wt[((ky * 3 + kx) * c + ci) * cout + o];
                }
            }
        }
        s
    })
}

pub fn random_mask(r: &mut ChaCha8Rng, p: f64) -> BinaryMask {
    BinaryMask::from_fn(16, 16, |_, _| r.gen_bool(p))
}

pub fn count_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut inter, mut union) = (0.0, 0.0);
    for y in 0..16 {
        for x in 0..16 {
            let (u, v) = (a.get(y, x), b.get(y, x));
            if u && v {
                inter += 1.0;
            }
            if u || v {
                union += 1.0;
            }
        }
    }
    inter / (union + IOU_EPSILON)
}

pub fn tiny_config() -> ModelConfig {
    let encoder = EncoderConfig { patch_size: 2, embed_dim: 8, window_size: 2, num_heads: [1, 2, 2], ..EncoderConfig::default() };
    ModelConfig { image_size: 16, encoder, ..ModelConfig::default() }
}

pub fn grad_swin_block() -> GradCheckReport {
    let mut store = ParamStore::new();
    let mut r = rng(1);
    let block = SwinBlock::new(&mut ParamBuilder::new(&mut store, &mut r), 8, 2, 2, 1, 16, true).unwrap();
    randomize_params(&mut store, &mut r, 0.3);
    let x = random_map([2, 8, 4, 4], &mut r, 1.0);
    let (y, cache) = block.forward(&store, &x).unwrap();
    let cot = random_map(y.shape(), &mut r, 1.0);
    let mut grads = Grads::zeros_like(&store);
    let dx = block.backward(&store, &cache, &cot, &mut grads);
    let gc = GradCheck::default();
    let p = gc.check_params(&mut store, &grads, &mut r, |ps| inner(&block.forward(ps, &x).unwrap().0, &cot));
    let i = gc.check_input(&x, &dx, &mut r, |xi| inner(&block.forward(&store, xi).unwrap().0, &cot));
    p.merge(i)
}

pub fn grad_tokenized_mlp_block() -> GradCheckReport {
    let mut store = ParamStore::new();
    let mut r = rng(2);
    let cfg = CbeConfig::default();
    let block = TokenizedMlpBlock::new(&mut ParamBuilder::new(&mut store, &mut r), &cfg, 10);
    randomize_params(&mut store, &mut r, 0.3);
    let x = random_map([2, 10, 4, 3], &mut r, 1.0);
    let (y, cache) = block.forward(&store, &x).unwrap();
    let cot = random_map(y.shape(), &mut r, 1.0);
    let mut grads = Grads::zeros_like(&store);
    let dx = block.backward(&store, &cache, &cot, &mut grads);
    let gc = GradCheck::default();
    let p = gc.check_params(&mut store, &grads, &mut r, |ps| inner(&block.forward(ps, &x).unwrap().0, &cot));
    let i = gc.check_input(&x, &dx, &mut r, |xi| inner(&block.forward(&store, xi).unwrap().0, &cot));
    p.merge(i)
}

pub fn grad_haf_fuse() -> GradCheckReport {
    let mut store = ParamStore::new();
    let mut r = rng(3);
    let cfg = EncoderConfig { window_size: 2, ..EncoderConfig::default() };
    let haf = Haf::new(&mut ParamBuilder::new(&mut store, &mut r), &cfg, 6, 4, 2, 4, 4).unwrap();
    randomize_params(&mut store, &mut r, 0.3);
    let skip = random_map([1, 6, 4, 4], &mut r, 1.0);
    let dec = random_map([1, 4, 4, 4], &mut r, 1.0);
    let (y, cache) = haf.forward(&store, &skip, &dec).unwrap();
    let cot = random_map(y.shape(), &mut r, 1.0);
    let mut grads = Grads::zeros_like(&store);
    let (dskip, ddec) = haf.backward(&store, &cache, &cot, &mut grads);
    let gc = GradCheck::default();
    let p = gc.check_params(&mut store, &grads, &mut r, |ps| inner(&haf.forward(ps, &skip, &dec).unwrap().0, &cot));
    let s = gc.check_input(&skip, &dskip, &mut r, |si| inner(&haf.forward(&store, si, &dec).unwrap().0, &cot));
    let d = gc.check_input(&dec, &ddec, &mut r, |di| inner(&haf.forward(&store, &skip, di).unwrap().0, &cot));
    p.merge(s).merge(d)
}

pub fn grad_deformable_conv() -> GradCheckReport {
    let mut store = ParamStore::new();
    let mut r = rng(4);
    let conv = DeformableConv::new(&mut ParamBuilder::new(&mut store, &mut r), 3);
    // scale 0.3 over 27 inputs puts predicted offsets around ±1 px, away from
    // the integer lattice where bilinear sampling has kinks
    randomize_params(&mut store, &mut r, 0.3);
    let x = random_map([1, 3, 5, 5], &mut r, 1.0);
    let (y, cache) = conv.forward(&store, &x).unwrap();
    let offsets = conv.offsets_of(&cache);
    assert!(offsets.as_slice().iter().any(|o| o.abs() > 0.1), "offsets should be non-trivial");
    let cot = random_map(y.shape(), &mut r, 1.0);
    let mut grads = Grads::zeros_like(&store);
    let dx = conv.backward(&store, &cache, &cot, &mut grads);
    let gc = GradCheck { samples_per_tensor: 16, ..GradCheck::default() };
    let p = gc.check_params(&mut store, &grads, &mut r, |ps| inner(&conv.forward(ps, &x).unwrap().0, &cot));
    let i = gc.check_input(&x, &dx, &mut r, |xi| inner(&conv.forward(&store, xi).unwrap().0, &cot));
    p.merge(i)
}

pub fn grad_aca() -> GradCheckReport {
    let mut store = ParamStore::new();
    let mut r = rng(5);
    let cfg = EncoderConfig { window_size: 2, ..EncoderConfig::default() };
    let aca = Aca::new(&mut ParamBuilder::new(&mut store, &mut r), &cfg, 4, 2, 4, 4).unwrap();
    randomize_params(&mut store, &mut r, 0.3);
    let x = random_map([1, 4, 4, 4], &mut r, 1.0);
    let (y, cache) = aca.forward(&store, &x).unwrap();
    let cot = random_map(y.shape(), &mut r, 1.0);
    let mut grads = Grads::zeros_like(&store);
    let dx = aca.backward(&store, &cache, &cot, &mut grads);
    let gc = GradCheck::default();
    let p = gc.check_params(&mut store, &grads, &mut r, |ps| inner(&aca.forward(ps, &x).unwrap().0, &cot));
    let i = gc.check_input(&x, &dx, &mut r, |xi| inner(&aca.forward(&store, xi).unwrap().0, &cot));
    p.merge(i)
}

/// Largest relative error of the loss gradient over 50 random pixels.
pub fn grad_total_loss() -> f64 {
    let mut r = rng(6);
    let cfg = LossConfig::default();
    let y: Vec<f64> = (0..50).map(|_| f64::from(u8::from(r.gen_bool(0.4)))).collect();
    let p: Vec<f64> = (0..50).map(|_| r.gen_range(0.05..0.95)).collect();
    let (_, g) = total_loss_grad(&y, &p, &cfg).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let mut up = p.clone();
        up[i] += h;
        let mut down = p.clone();
        down[i] -= h;
        let n = (total_loss(&y, &up, &cfg).unwrap() - total_loss(&y, &down, &cfg).unwrap()) / (2.0 * h);
        worst = worst.max((g[i] - n).abs() / g[i].abs().max(n.abs()).max(1e-7));
    }
    worst
}

/// Whole tiny model through the compound loss.
pub fn grad_end_to_end() -> GradCheckReport {
    let mut r = rng(7);
    let mut model = SegModel::new(tiny_config(), 7).unwrap();
    randomize_params(&mut model.params, &mut r, 0.2);
    let image = random_map([2, 1, 16, 16], &mut r, 1.0);
    let target: Vec<f64> = image.as_slice().iter().map(|&v| f64::from(u8::from(v > 0.3))).collect();
    let cfg = LossConfig::default();
    let (logits, cache) = model.forward_train(&image).unwrap();
    let (_, dlogits) = loss_from_logits(&target, logits.as_slice(), &cfg).unwrap();
    let mut dl = logits.clone();
    dl.as_mut_slice().copy_from_slice(&dlogits);
    let grads = model.backward(&cache, &dl);
    let cfg_model = model.cfg.clone();
    let arch = model.arch.clone();
    let objective = |ps: &ParamStore| {
        let m = SegModel { cfg: cfg_model.clone(), arch: arch.clone(), params: ps.clone() };
        let z = m.forward(&image).unwrap();
        loss_from_logits(&target, z.as_slice(), &cfg).unwrap().0.total
    };
    let gc = GradCheck { samples_per_tensor: 2, ..GradCheck::default() };
    gc.check_params(&mut model.params, &grads, &mut r, objective)
}

/// Tiny model with HAF and CBE switched off, against a random cotangent.
pub fn grad_end_to_end_without_modules() -> GradCheckReport {
    let mut r = rng(8);
    let cfg = ModelConfig { use_haf: false, use_cbe: false, ..tiny_config() };
    let mut model = SegModel::new(cfg, 8).unwrap();
    randomize_params(&mut model.params, &mut r, 0.2);
    let image = random_map([1, 1, 16, 16], &mut r, 1.0);
    let (logits, cache) = model.forward_train(&image).unwrap();
    let cot: FeatureMap = random_map(logits.shape(), &mut r, 1.0);
    let grads = model.backward(&cache, &cot);
    let (c, a) = (model.cfg.clone(), model.arch.clone());
    let gc = GradCheck { samples_per_tensor: 2, ..GradCheck::default() };
    gc.check_params(&mut model.params, &grads, &mut r, |ps| {
        let m = SegModel { cfg: c.clone(), arch: a.clone(), params: ps.clone() };
        inner(&m.forward(&image).unwrap(), &cot)
    })
}

/// One window covering the whole grid against dense attention over all tokens.
pub fn single_window_vs_dense() -> f64 {
    let (attn, store, mut r) = attention_fixture(10, 8, 2, 4, 0);
    let x = random_map([2, 8, 4, 4], &mut r, 1.0);
    let (got, _) = attn.forward(&store, &x).unwrap();
    let mut ctx = FeatureMap::zeros(2, 8, 4, 4);
    let all: Vec<(usize, usize)> = (0..16).map(|i| (i / 4, i % 4)).collect();
    for bi in 0..2 {
        attend(&store, &attn, &x, bi, &all, |_, _| true, &mut ctx);
    }
    got.max_abs_diff(&output_projection(&store, &attn, &ctx))
}

/// Cyclic roll by `−shift`, window partition, slice-based region masks, roll back.
pub fn shifted_vs_roll_and_mask() -> f64 {
    let (h, w, win, s) = (8, 4, 4, 2);
    let (attn, store, mut r) = attention_fixture(11, 6, 3, win, s);
    let x = random_map([1, 6, h, w], &mut r, 1.0);
    let (got, _) = attn.forward(&store, &x).unwrap();
    // rolled[y][x] = x[(y + s) % h][(x + s) % w]; positions below are original coordinates
    let region = |p: usize, side: usize| -> usize {
        let q = (p + side - s) % side; // rolled coordinate of original p
        if q < side - win {
            0
        } else if q < side - s {
            1
        } else {
            2
        }
    };
    let mut ctx = FeatureMap::zeros(1, 6, h, w);
    for wy in 0..h / win {
        for wx in 0..w / win {
            let tokens: Vec<(usize, usize)> = (0..win * win)
                .map(|i| {
                    let (ry, rx) = (wy * win + i / win, wx * win + i % win);
                    ((ry + s) % h, (rx + s) % w)
                })
                .collect();
            let label = |t: (usize, usize)| (region(t.0, h), region(t.1, w));
            attend(&store, &attn, &x, 0, &tokens, |i, j| label(tokens[i]) == label(tokens[j]), &mut ctx);
        }
    }
    got.max_abs_diff(&output_projection(&store, &attn, &ctx))
}

pub fn zero_offset_deformable_vs_conv() -> f64 {
    let mut store = ParamStore::new();
    let mut r = rng(12);
    let conv = DeformableConv::new(&mut ParamBuilder::new(&mut store, &mut r), 3);
    randomize_params(&mut store, &mut r, 0.5);
    store.zero_prefix("offset.");
    let x = random_map([2, 3, 5, 6], &mut r, 1.0);
    let (got, cache) = conv.forward(&store, &x).unwrap();
    assert!(conv.offsets_of(&cache).as_slice().iter().all(|&o| o == 0.0));
    got.max_abs_diff(&naive_conv3x3(&store, &conv.kernel, &x))
}

/// Input and output of a swin block whose residual branches end in zeroed projections.
pub fn zeroed_swin_block() -> (FeatureMap, FeatureMap) {
    let mut store = ParamStore::new();
    let mut r = rng(14);
    let block = SwinBlock::new(&mut ParamBuilder::new(&mut store, &mut r), 8, 2, 2, 1, 32, true).unwrap();
    randomize_params(&mut store, &mut r, 0.5);
    let ids = [block.attn.proj.weight, block.attn.proj.bias.unwrap(), block.mlp.fc2.weight, block.mlp.fc2.bias.unwrap()];
    for id in ids {
        store.get_mut(id).fill(0.0);
    }
    let x = random_map([1, 8, 4, 4], &mut r, 1.0);
    let (y, _) = block.forward(&store, &x).unwrap();
    (x, y)
}

/// With both token MLPs zeroed the block reduces to detokenize(LayerNorm(tokenize(x))).
pub fn cbe_zeroed_mlps_vs_layer_norm() -> f64 {
    let mut store = ParamStore::new();
    let mut r = rng(15);
    let block = TokenizedMlpBlock::new(&mut ParamBuilder::new(&mut store, &mut r), &CbeConfig::default(), 10);
    randomize_params(&mut store, &mut r, 0.5);
    for lin in [&block.mlp_w, &block.mlp_h] {
        store.get_mut(lin.weight).fill(0.0);
        store.get_mut(lin.bias.unwrap()).fill(0.0);
    }
    let x = random_map([1, 10, 3, 3], &mut r, 1.0);
    let (got, _) = block.forward(&store, &x).unwrap();
    let t = naive_linear(&store, &block.tokenize, &x);
    let z = naive_layer_norm(store.get(block.norm.gamma), store.get(block.norm.beta), &t);
    got.max_abs_diff(&naive_linear(&store, &block.detokenize, &z))
}

/// Largest IoU and Dice deviations from pixel counting over 100 random 16×16 pairs.
pub fn metric_oracle_max_diff() -> (f64, f64) {
    let mut r = rng(18);
    let cfg = LossConfig::default();
    let (mut worst_iou, mut worst_dice): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let (pa, pb) = (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0));
        let a = random_mask(&mut r, pa);
        let b = random_mask(&mut r, pb);
        worst_iou = worst_iou.max((iou(&a, &b, IOU_EPSILON).unwrap() - count_iou(&a, &b)).abs());
        let (mut both, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (u, v) in a.iter().zip(b.iter()) {
            both += f64::from(u8::from(u && v));
            na += f64::from(u8::from(u));
            nb += f64::from(u8::from(v));
        }
        let want = 1.0 - (2.0 * both + cfg.epsilon) / (na + nb + cfg.epsilon);
        worst_dice = worst_dice.max((dice_loss(&a.to_f64_vec(), &b.to_f64_vec(), &cfg).unwrap() - want).abs());
    }
    (worst_iou, worst_dice)
}
