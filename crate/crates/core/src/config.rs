//! Training configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! data_root = data/synth
//! image_size = 64
//! steps = 500
//! use_haf = true
//! num_heads = 2,4,8
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Split;
use crate::decoder::ModelConfig;
use crate::error::{Error, Result};
use crate::losses::LossConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    /// Plain gradient descent with heavy-ball momentum 0.9.
    Sgd,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::config(format!("unknown optimizer {other:?} (expected adam or sgd)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model_name: String,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub data_root: PathBuf,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub checkpoint_out: PathBuf,
    /// Per-step CSV log; `None` keeps the log in memory only.
    pub log_out: Option<PathBuf>,
    /// Train on empty-mask images as all-background targets.
    pub include_no_tumor: bool,
    pub threshold: f64,
    /// Split evaluated by the ablation grid; `None` picks `test` when present.
    pub eval_split: Option<Split>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model_name: "hafunet".into(),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            data_root: PathBuf::from("data"),
            batch_size: 4,
            steps: 500,
            learning_rate: 1e-3,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            checkpoint_out: PathBuf::from("checkpoint.bin"),
            log_out: None,
            include_no_tumor: false,
            threshold: 0.5,
            eval_split: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        if self.steps == 0 {
            return Err(Error::config("steps must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_relative() { base.join(p) } else { p }
        };
        let enc = &mut self.model.encoder;
        match key {
            "model_name" => self.model_name = value.to_string(),
            "data_root" => self.data_root = path(value),
            "checkpoint_out" => self.checkpoint_out = path(value),
            "log_out" => self.log_out = Some(path(value)),
            "image_size" => self.model.image_size = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "include_no_tumor" => self.include_no_tumor = parse_bool(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "eval_split" => self.eval_split = Some(value.parse()?),
            "use_haf" => self.model.use_haf = parse_bool(key, value)?,
            "use_cbe" => self.model.use_cbe = parse_bool(key, value)?,
            "in_channels" => enc.in_channels = parse(key, value)?,
            "patch_size" => enc.patch_size = parse(key, value)?,
            "embed_dim" => enc.embed_dim = parse(key, value)?,
            "window_size" => enc.window_size = parse(key, value)?,
            "mlp_ratio" => enc.mlp_ratio = parse(key, value)?,
            "relative_position_bias" => enc.relative_position_bias = parse_bool(key, value)?,
            "num_heads" => {
                let heads: Vec<usize> = value.split(',').map(|h| parse(key, h.trim())).collect::<Result<_>>()?;
                enc.num_heads = heads
                    .try_into()
                    .map_err(|v: Vec<usize>| Error::config(format!("num_heads needs 3 entries, got {}", v.len())))?;
            }
            "cbe_token_dim" => self.model.cbe.token_dim = Some(parse(key, value)?),
            "cbe_shift_amount" => self.model.cbe.shift_amount = parse(key, value)?,
            "cbe_shift_partitions" => self.model.cbe.shift_partitions = parse(key, value)?,
            "cbe_depth" => self.model.cbe.depth = parse(key, value)?,
            "dice_epsilon" => self.loss.epsilon = parse(key, value)?,
            "probability_clip" => self.loss.probability_clip = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses config text; `base` anchors relative paths.
    pub fn parse_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: Error| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("invalid configuration: ")));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
            }
            cfg.set(key, value, base).map_err(at)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Renders the config in the file format; paths are written as given.
    pub fn to_config_string(&self) -> String {
        let e = &self.model.encoder;
        let c = &self.model.cbe;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model_name", self.model_name.clone());
        kv("data_root", self.data_root.display().to_string());
        kv("checkpoint_out", self.checkpoint_out.display().to_string());
        if let Some(p) = &self.log_out {
            kv("log_out", p.display().to_string());
        }
        kv("image_size", self.model.image_size.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("steps", self.steps.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("seed", self.seed.to_string());
        kv("optimizer", if self.optimizer == OptimizerKind::Adam { "adam" } else { "sgd" }.into());
        kv("include_no_tumor", self.include_no_tumor.to_string());
        kv("threshold", self.threshold.to_string());
        if let Some(sp) = self.eval_split {
            kv("eval_split", sp.to_string());
        }
        kv("use_haf", self.model.use_haf.to_string());
        kv("use_cbe", self.model.use_cbe.to_string());
        kv("in_channels", e.in_channels.to_string());
        kv("patch_size", e.patch_size.to_string());
        kv("embed_dim", e.embed_dim.to_string());
        kv("window_size", e.window_size.to_string());
        kv("num_heads", e.num_heads.map(|h| h.to_string()).join(","));
        kv("mlp_ratio", e.mlp_ratio.to_string());
        kv("relative_position_bias", e.relative_position_bias.to_string());
        if let Some(d) = c.token_dim {
            kv("cbe_token_dim", d.to_string());
        }
        kv("cbe_shift_amount", c.shift_amount.to_string());
        kv("cbe_shift_partitions", c.shift_partitions.to_string());
        kv("cbe_depth", c.depth.to_string());
        kv("dice_epsilon", self.loss.epsilon.to_string());
        kv("probability_clip", self.loss.probability_clip.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let text = "# tiny\nimage_size = 32\nsteps=10\nnum_heads = 1, 2, 4\nuse_cbe = false\ndata_root = synth\noptimizer = sgd\n";
        let cfg = TrainConfig::parse_str(text, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.model.image_size, 32);
        assert_eq!(cfg.steps, 10);
        assert_eq!(cfg.model.encoder.num_heads, [1, 2, 4]);
        assert!(!cfg.model.use_cbe);
        assert_eq!(cfg.data_root, PathBuf::from("/cfg/synth"));
        assert_eq!(cfg.optimizer, OptimizerKind::Sgd);
        assert_eq!(cfg.learning_rate, 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        let err = TrainConfig::parse_str("steps = 3\nwarmup = 5\n", base).unwrap_err();
        assert!(err.to_string().contains("line 2") && err.to_string().contains("warmup"), "{err}");
        assert!(TrainConfig::parse_str("steps = 0\n", base).is_err());
        assert!(TrainConfig::parse_str("steps\n", base).is_err());
        assert!(TrainConfig::parse_str("steps = 1\nsteps = 2\n", base).is_err());
        assert!(TrainConfig::parse_str("image_size = 48\n", base).is_err());
        assert!(TrainConfig::parse_str("use_haf = maybe\n", base).is_err());
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = TrainConfig { steps: 7, eval_split: Some(Split::Train), ..TrainConfig::default() };
        cfg.model.cbe.token_dim = Some(64);
        cfg.data_root = PathBuf::from("/abs/data");
        cfg.checkpoint_out = PathBuf::from("/abs/ck.bin");
        let back = TrainConfig::parse_str(&cfg.to_config_string(), Path::new("/")).unwrap();
        assert_eq!(back, cfg);
    }
}
