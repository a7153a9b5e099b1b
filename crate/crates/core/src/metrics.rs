//! IoU, per-class mean IoU and sample-weighted mean IoU.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::tensor::BinaryMask;

pub const IOU_EPSILON: f64 = 1e-6;

/// `|y ∧ ŷ| / (|y| + |ŷ| − |y ∧ ŷ| + ε)` on flat 0/1 slices.
pub fn iou_slices(y: &[u8], yhat: &[u8], epsilon: f64) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::shape(format!("masks have {} and {} pixels", y.len(), yhat.len())));
    }
    let (mut inter, mut sy, mut sp) = (0usize, 0usize, 0usize);
    for (&a, &b) in y.iter().zip(yhat) {
        if a > 1 || b > 1 {
            return Err(Error::NonBinary(format!("mask value {}", a.max(b))));
        }
        inter += usize::from(a & b);
        sy += usize::from(a);
        sp += usize::from(b);
    }
    let inter = inter as f64;
    Ok(inter / (sy as f64 + sp as f64 - inter + epsilon))
}

pub fn iou(y: &BinaryMask, yhat: &BinaryMask, epsilon: f64) -> Result<f64> {
    if y.dims() != yhat.dims() {
        return Err(Error::shape(format!("mask shapes {:?} and {:?} differ", y.dims(), yhat.dims())));
    }
    let a = y.values();
    let b = yhat.values();
    match (a.as_slice(), b.as_slice()) {
        (Some(a), Some(b)) => iou_slices(a, b, epsilon),
        _ => iou_slices(&a.iter().copied().collect::<Vec<_>>(), &b.iter().copied().collect::<Vec<_>>(), epsilon),
    }
}

/// Running `(sum, count)` of per-sample IoU for each class. Merging is
/// associative, so workers can accumulate independently.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IouAccumulator {
    sums: BTreeMap<Label, (f64, usize)>,
}

impl IouAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: Label, iou: f64) {
        let e = self.sums.entry(label).or_insert((0.0, 0));
        e.0 += iou;
        e.1 += 1;
    }

    pub fn merge(&mut self, other: &IouAccumulator) {
        for (&label, &(s, n)) in &other.sums {
            let e = self.sums.entry(label).or_insert((0.0, 0));
            e.0 += s;
            e.1 += n;
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.sums.get(&label).map_or(0, |e| e.1)
    }

    /// Mean IoU per tumor class, in percent.
    pub fn finish(&self) -> Result<BTreeMap<Label, f64>> {
        Label::TUMORS
            .into_iter()
            .map(|label| match self.sums.get(&label) {
                Some(&(s, n)) if n > 0 => Ok((label, 100.0 * s / n as f64)),
                _ => Err(Error::EmptyClass(label.to_string())),
            })
            .collect()
    }
}

/// Mean per-sample IoU within each tumor class, ×100. Every tumor class must
/// have at least one sample.
pub fn per_class_miou(results: &[(Label, f64)]) -> Result<BTreeMap<Label, f64>> {
    let mut acc = IouAccumulator::new();
    for &(label, v) in results {
        acc.push(label, v);
    }
    acc.finish()
}

/// Per-class sample counts used to weight class means.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalWeights {
    counts: BTreeMap<Label, u64>,
}

impl EvalWeights {
    pub fn new(counts: impl IntoIterator<Item = (Label, u64)>) -> Result<Self> {
        let counts: BTreeMap<Label, u64> = counts.into_iter().collect();
        for (&label, &n) in &counts {
            if !label.is_tumor() {
                return Err(Error::config(format!("weight given for non-tumor class {label}")));
            }
            if n == 0 {
                return Err(Error::config(format!("weight for {label} must be positive")));
            }
        }
        Ok(Self { counts })
    }

    /// Glioma, meningioma, pituitary in that order.
    pub fn from_tumor_counts(counts: [u64; 3]) -> Result<Self> {
        Self::new(Label::TUMORS.into_iter().zip(counts))
    }

    /// Test-split tumor counts of the reference corpus.
    pub fn reference_counts() -> Self {
        Self::from_tumor_counts([254, 306, 300]).expect("positive counts")
    }

    pub fn get(&self, label: Label) -> Option<u64> {
        self.counts.get(&label).copied()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// `Σ n_c · m_c / Σ n_c` over the classes present in `per_class`.
pub fn weighted_miou(per_class: &BTreeMap<Label, f64>, weights: &EvalWeights) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::config("no class means to weight"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&label, &m) in per_class {
        let n = weights.get(label).ok_or_else(|| Error::MissingWeight(label.to_string()))? as f64;
        num += n * m;
        den += n;
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub use_haf: bool,
    pub use_cbe: bool,
    pub per_class_miou: BTreeMap<Label, f64>,
    pub weighted_miou: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "model,use_haf,use_cbe,miou_glioma,miou_meningioma,miou_pituitary,weighted_miou";

    pub fn new(
        model_name: impl Into<String>,
        use_haf: bool,
        use_cbe: bool,
        per_class_miou: BTreeMap<Label, f64>,
        weights: &EvalWeights,
    ) -> Result<Self> {
        let weighted_miou = weighted_miou(&per_class_miou, weights)?;
        Ok(Self { model_name: model_name.into(), use_haf, use_cbe, per_class_miou, weighted_miou })
    }

    pub fn class_miou(&self, label: Label) -> f64 {
        self.per_class_miou.get(&label).copied().unwrap_or(f64::NAN)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4}",
            self.model_name,
            u8::from(self.use_haf),
            u8::from(self.use_cbe),
            self.class_miou(Label::Glioma),
            self.class_miou(Label::Meningioma),
            self.class_miou(Label::Pituitary),
            self.weighted_miou
        )
    }

    pub fn to_csv(reports: &[EvalReport]) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}
