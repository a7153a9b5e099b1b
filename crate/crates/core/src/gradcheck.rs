//! Central finite-difference checks of analytic gradients.
//!
//! A scalar objective is formed as `⟨f(x), r⟩` for a fixed random cotangent
//! `r`, so every output element contributes with a distinct weight.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::params::{Grads, ParamStore};
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    /// Entries probed per tensor; tensors smaller than this are probed fully.
    pub samples_per_tensor: usize,
    /// Denominator floor of the relative error. Gradients below it are held
    /// to an absolute `tol · floor` instead, since the difference quotient of
    /// an exactly-zero gradient is pure round-off.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self { step: 1e-5, samples_per_tensor: 8, floor: 1e-5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    fn record(&mut self, what: impl FnOnce() -> String, rel: f64) {
        self.checked += 1;
        if rel > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = self.max_rel_error.max(rel);
            self.worst = what();
        }
    }

    pub fn merge(mut self, other: GradCheckReport) -> Self {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn probe_indices(len: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    if len <= k {
        (0..len).collect()
    } else {
        sample(rng, len, k).into_vec()
    }
}

impl GradCheck {
    /// Compares `grads` against difference quotients of `f` over sampled
    /// entries of every parameter tensor.
    pub fn check_params(
        &self,
        store: &mut ParamStore,
        grads: &Grads,
        rng: &mut impl Rng,
        mut f: impl FnMut(&ParamStore) -> f64,
    ) -> GradCheckReport {
        let mut report = GradCheckReport::default();
        for id in store.ids().collect::<Vec<_>>() {
            let len = store.get(id).len();
            for i in probe_indices(len, self.samples_per_tensor, rng) {
                let orig = store.get(id)[i];
                store.get_mut(id)[i] = orig + self.step;
                let up = f(store);
                store.get_mut(id)[i] = orig - self.step;
                let down = f(store);
                store.get_mut(id)[i] = orig;
                let numeric = (up - down) / (2.0 * self.step);
                let analytic = grads.get(id)[i];
                let rel = relative_error(analytic, numeric, self.floor);
                report.record(|| format!("{}[{i}] analytic {analytic:e} numeric {numeric:e}", store.param(id).name), rel);
            }
        }
        report
    }

    /// Compares the input gradient `dx` against difference quotients of `f`.
    pub fn check_input(
        &self,
        x: &FeatureMap,
        dx: &FeatureMap,
        rng: &mut impl Rng,
        mut f: impl FnMut(&FeatureMap) -> f64,
    ) -> GradCheckReport {
        let mut report = GradCheckReport::default();
        let mut probe = x.clone();
        let n = x.as_slice().len();
        for i in probe_indices(n, 4 * self.samples_per_tensor, rng) {
            let orig = probe.as_slice()[i];
            probe.as_mut_slice()[i] = orig + self.step;
            let up = f(&probe);
            probe.as_mut_slice()[i] = orig - self.step;
            let down = f(&probe);
            probe.as_mut_slice()[i] = orig;
            let numeric = (up - down) / (2.0 * self.step);
            let analytic = dx.as_slice()[i];
            report.record(|| format!("input[{i}] analytic {analytic:e} numeric {numeric:e}"), relative_error(analytic, numeric, self.floor));
        }
        report
    }
}

/// Overwrites every parameter with `N(0, std²)` draws, so gradient checks
/// exercise the nonlinear regime instead of the near-zero initialization.
pub fn randomize_params(store: &mut ParamStore, rng: &mut impl Rng, std: f64) {
    for p in store.iter_mut() {
        for v in &mut p.data {
            let z: f64 = StandardNormal.sample(rng);
            *v = std * z;
        }
    }
}

pub fn random_map(shape: [usize; 4], rng: &mut impl Rng, std: f64) -> FeatureMap {
    FeatureMap::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

/// `Σ aᵢ bᵢ` over two maps of equal shape.
pub fn inner(a: &FeatureMap, b: &FeatureMap) -> f64 {
    assert_eq!(a.shape(), b.shape(), "inner product of mismatched maps");
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}
