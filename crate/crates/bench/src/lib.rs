//! Deterministic inputs shared by the benchmarks.

use hafunet::gradcheck::random_map;
use hafunet::{EncoderConfig, FeatureMap, ModelConfig, SegModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn input(shape: [usize; 4], seed: u64) -> FeatureMap {
    random_map(shape, &mut rng(seed), 1.0)
}

/// Desk-scale model: patch 4, embed 32, window 4.
pub fn desk_model(image_size: usize, use_haf: bool, use_cbe: bool) -> SegModel {
    let cfg = ModelConfig { image_size, encoder: EncoderConfig::default(), use_haf, use_cbe, ..ModelConfig::default() };
    SegModel::new(cfg, 0).expect("valid desk config")
}

/// Binary target with a centred square of foreground.
pub fn square_target(batch: usize, size: usize) -> Vec<f64> {
    let (lo, hi) = (size / 4, 3 * size / 4);
    (0..batch * size * size)
        .map(|i| {
            let (y, x) = ((i / size) % size, i % size);
            f64::from(u8::from((lo..hi).contains(&y) && (lo..hi).contains(&x)))
        })
        .collect()
}
