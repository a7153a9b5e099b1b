//! Training loop, evaluation and the HAF × CBE ablation grid.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::{OptimizerKind, TrainConfig};
use crate::dataset::{load_dataset, load_sample_resized, DatasetIndex, Label, Sample, Split};
use crate::decoder::SegModel;
use crate::error::{Error, Result};
use crate::losses::{loss_from_logits, LossBreakdown, LossConfig};
use crate::metrics::{iou, EvalReport, EvalWeights, IouAccumulator, IOU_EPSILON};
use crate::params::{Grads, ParamStore};
use crate::tensor::{BinaryMask, FeatureMap};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const SGD_MOMENTUM: f64 = 0.9;

/// First-order optimizer state, one buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.data.len()]).collect::<Vec<_>>();
        let v = if kind == OptimizerKind::Adam { zeros() } else { Vec::new() };
        Self { kind, lr, step: 0, m: zeros(), v }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - ADAM_BETA1.powi(t), 1.0 - ADAM_BETA2.powi(t));
        for (i, (p, g)) in params.iter_mut().zip(grads.tensors()).enumerate() {
            let m = &mut self.m[i];
            match self.kind {
                OptimizerKind::Adam => {
                    let v = &mut self.v[i];
                    for j in 0..g.len() {
                        m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                        v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                        p.data[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
                    }
                }
                OptimizerKind::Sgd => {
                    for j in 0..g.len() {
                        m[j] = SGD_MOMENTUM * m[j] + g[j];
                        p.data[j] -= self.lr * m[j];
                    }
                }
            }
        }
    }
}

/// Images and flattened targets resized to the model input size.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub images: Vec<FeatureMap>,
    pub targets: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl TrainingSet {
    pub fn load(index: &DatasetIndex, size: usize, include_no_tumor: bool) -> Result<Self> {
        let mut set = TrainingSet { images: Vec::new(), targets: Vec::new(), labels: Vec::new() };
        for entry in index.entries.iter().filter(|e| include_no_tumor || e.label.is_tumor()) {
            let s = load_sample_resized(entry, size)?;
            set.images.push(s.image);
            set.targets.push(s.mask.to_f64_vec());
            set.labels.push(s.label);
        }
        if set.images.is_empty() {
            return Err(Error::Layout(format!("no training images under {}", index.root.display())));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> Result<(FeatureMap, Vec<f64>)> {
        let images: Vec<FeatureMap> = idx.iter().map(|&i| self.images[i].clone()).collect();
        let targets = idx.iter().flat_map(|&i| self.targets[i].iter().copied()).collect();
        Ok((FeatureMap::stack(&images)?, targets))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: LossBreakdown,
}

pub const LOG_HEADER: &str = "step,bce,dice,total";

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{:.8},{:.8},{:.8}", r.step, r.loss.bce, r.loss.dice, r.loss.total);
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
    /// Loss over the whole training set with the final parameters.
    pub final_loss: LossBreakdown,
}

/// Loss over `set`, everything flattened into one prediction.
pub fn dataset_loss(model: &SegModel, set: &TrainingSet, loss: &LossConfig, chunk: usize) -> Result<LossBreakdown> {
    let mut logits = Vec::new();
    let mut targets = Vec::new();
    let idx: Vec<usize> = (0..set.len()).collect();
    for part in idx.chunks(chunk.max(1)) {
        let (x, y) = set.batch(part)?;
        logits.extend_from_slice(model.forward(&x)?.as_slice());
        targets.extend(y);
    }
    Ok(loss_from_logits(&targets, &logits, loss)?.0)
}

/// Trains on an already loaded set. Batches follow a seeded per-epoch shuffle.
pub fn train_on(cfg: &TrainConfig, set: &TrainingSet) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = SegModel::new(cfg.model.clone(), cfg.seed)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &model.params);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let batch = cfg.batch_size.min(set.len());
    let mut order: Vec<usize> = Vec::new();
    let mut log = Vec::with_capacity(cfg.steps);
    let started = Instant::now();
    for step in 1..=cfg.steps {
        if order.len() < batch {
            let mut epoch: Vec<usize> = (0..set.len()).collect();
            epoch.shuffle(&mut order_rng);
            order.extend(epoch);
        }
        let idx: Vec<usize> = order.drain(..batch).collect();
        let (x, y) = set.batch(&idx)?;
        let (logits, cache) = model.forward_train(&x)?;
        let (loss, dlogits) = loss_from_logits(&y, logits.as_slice(), &cfg.loss)?;
        if !loss.total.is_finite() {
            return Err(Error::Numeric(format!("step {step}: loss became non-finite ({loss:?})")));
        }
        let mut d = logits;
        d.as_mut_slice().copy_from_slice(&dlogits);
        let grads = model.backward(&cache, &d);
        if !grads.is_finite() {
            return Err(Error::Numeric(format!("step {step}: non-finite gradient")));
        }
        opt.step(&mut model.params, &grads);
        log.push(LogRow { step, loss });
        if step % 50 == 0 || step == cfg.steps {
            log::info!(
                "step {step}/{}: bce {:.4} dice {:.4} total {:.4} ({:.1}s)",
                cfg.steps,
                loss.bce,
                loss.dice,
                loss.total,
                started.elapsed().as_secs_f64()
            );
        }
    }
    let final_loss = dataset_loss(&model, set, &cfg.loss, cfg.batch_size)?;
    Ok(TrainOutcome { checkpoint: Checkpoint::new(cfg.model_name.clone(), model), log, final_loss })
}

/// Loads the training split, trains, and writes the checkpoint and log.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let index = load_dataset(&cfg.data_root, Split::Train)?;
    let set = TrainingSet::load(&index, cfg.model.image_size, cfg.include_no_tumor)?;
    let outcome = train_on(cfg, &set)?;
    outcome.checkpoint.save(&cfg.checkpoint_out)?;
    if let Some(path) = &cfg.log_out {
        fs::write(path, log_csv(&outcome.log)).map_err(|e| Error::io(path, e))?;
    }
    Ok(outcome)
}

/// `test` when the root has a test split, else `train`.
pub fn default_eval_split(root: &Path) -> Split {
    if root.join(Split::Test.as_str()).is_dir() {
        Split::Test
    } else {
        Split::Train
    }
}

/// Scores `predict` on every tumor sample of `index`. Class means are
/// weighted by the number of evaluated samples per class unless `weights`
/// is given.
pub fn evaluate_with<F>(
    index: &DatasetIndex,
    size: usize,
    name: &str,
    flags: (bool, bool),
    weights: Option<&EvalWeights>,
    mut predict: F,
) -> Result<EvalReport>
where
    F: FnMut(&Sample) -> Result<BinaryMask>,
{
    let mut acc = IouAccumulator::new();
    for entry in index.entries.iter().filter(|e| e.label.is_tumor()) {
        let sample = load_sample_resized(entry, size)?;
        let pred = predict(&sample)?;
        acc.push(entry.label, iou(&sample.mask, &pred, IOU_EPSILON)?);
    }
    let per_class = acc.finish()?;
    let counted;
    let weights = match weights {
        Some(w) => w,
        None => {
            counted = EvalWeights::new(Label::TUMORS.map(|l| (l, acc.count(l) as u64)))?;
            &counted
        }
    };
    EvalReport::new(name, flags.0, flags.1, per_class, weights)
}

pub fn evaluate_model(model: &SegModel, name: &str, index: &DatasetIndex, threshold: f64) -> Result<EvalReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let flags = (model.cfg.use_haf, model.cfg.use_cbe);
    evaluate_with(index, model.cfg.image_size, name, flags, None, |s| {
        Ok(model.segment(&s.image, threshold)?.remove(0))
    })
}

pub fn evaluate(ck: &Checkpoint, data_root: &Path, split: Split, threshold: f64) -> Result<EvalReport> {
    let index = load_dataset(data_root, split)?;
    evaluate_model(&ck.model, &ck.model_name, &index, threshold)
}

/// `(use_haf, use_cbe)` in table order.
pub const ABLATION_GRID: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub report: EvalReport,
    pub num_parameters: usize,
    pub final_loss: LossBreakdown,
}

pub fn variant_name(base: &str, use_haf: bool, use_cbe: bool) -> String {
    let mut s = base.to_string();
    if use_haf {
        s.push_str("+haf");
    }
    if use_cbe {
        s.push_str("+cbe");
    }
    s
}

fn variant_path(path: &Path, use_haf: bool, use_cbe: bool) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "checkpoint".into());
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}_haf{}_cbe{}{ext}", u8::from(use_haf), u8::from(use_cbe)))
}

/// Trains and evaluates the four HAF/CBE combinations with a shared seed.
pub fn ablation_run(base: &TrainConfig) -> Result<Vec<AblationRow>> {
    base.validate()?;
    let train_index = load_dataset(&base.data_root, Split::Train)?;
    let set = TrainingSet::load(&train_index, base.model.image_size, base.include_no_tumor)?;
    let split = base.eval_split.unwrap_or_else(|| default_eval_split(&base.data_root));
    let eval_index = if split == Split::Train { train_index.clone() } else { load_dataset(&base.data_root, split)? };
    let mut rows = Vec::with_capacity(ABLATION_GRID.len());
    for (use_haf, use_cbe) in ABLATION_GRID {
        let mut cfg = base.clone();
        cfg.model.use_haf = use_haf;
        cfg.model.use_cbe = use_cbe;
        cfg.model_name = variant_name(&base.model_name, use_haf, use_cbe);
        cfg.checkpoint_out = variant_path(&base.checkpoint_out, use_haf, use_cbe);
        log::info!("ablation: training {}", cfg.model_name);
        let outcome = train_on(&cfg, &set)?;
        outcome.checkpoint.save(&cfg.checkpoint_out)?;
        let model = &outcome.checkpoint.model;
        let report = evaluate_model(model, &cfg.model_name, &eval_index, cfg.threshold)?;
        rows.push(AblationRow { report, num_parameters: model.num_parameters(), final_loss: outcome.final_loss });
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    EvalReport::to_csv(&rows.iter().map(|r| r.report.clone()).collect::<Vec<_>>())
}

pub const PARAMS_HEADER: &str = "model,use_haf,use_cbe,parameters";

pub fn ablation_params_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(PARAMS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.report.model_name, u8::from(r.report.use_haf), u8::from(r.report.use_cbe), r.num_parameters);
    }
    s
}
