use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hafunet::dataset::{self, generate_synthetic_dataset, load_dataset, summarize_distribution};
use hafunet::table::{self, DEFAULT_TOLERANCE};
use hafunet::{overlay, train, Checkpoint, Error, EvalReport, EvalWeights, Split, SynthSpec, TrainConfig};

/// Exit code 1 for bad inputs, 2 for failures while computing or writing.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "hafunet", version, about = "Brain tumor segmentation harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a deterministic synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Images per class.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value = "train")]
        split: Split,
        /// Side multiple required by the model (patch_size * 8).
        #[arg(long, default_value_t = dataset::DEFAULT_SIZE_MULTIPLE)]
        size_multiple: usize,
    },
    /// Train a model from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `test` when present, else `train`.
        #[arg(long)]
        split: Option<Split>,
    },
    /// Train and evaluate the four HAF/CBE combinations.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Parameter counts per variant; defaults to `<out stem>_params.csv`.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
    /// Recompute weighted mIoU of each row of a results table.
    VerifyTable {
        #[arg(long)]
        csv: PathBuf,
        /// Per-class sample counts: glioma,meningioma,pituitary.
        #[arg(long, default_value = "254,306,300")]
        counts: String,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Render original | mask | prediction overlay.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class, per-plane image counts.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "train")]
        split: Split,
    },
}

fn write(path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn parse_counts(text: &str) -> Result<EvalWeights, Failure> {
    let parts: Vec<u64> = text
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| Failure::Validation(format!("--counts: {p:?} is not a count"))))
        .collect::<Result<_, _>>()?;
    let counts: [u64; 3] =
        parts.try_into().map_err(|_| Failure::Validation("--counts needs three values: glioma,meningioma,pituitary".into()))?;
    Ok(EvalWeights::from_tumor_counts(counts)?)
}

fn params_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "ablation".into());
    out.with_file_name(format!("{stem}_params.csv"))
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Synth { out, n, size, seed, noise, split, size_multiple } => {
            let spec = SynthSpec { n_per_class: n, image_size: size, seed, noise_level: noise, split };
            let index = generate_synthetic_dataset(&spec, &out, Some(size_multiple))?;
            println!("wrote {} images to {}", index.len(), out.join(split.as_str()).display());
        }
        Command::Train { config } => {
            let cfg = TrainConfig::from_file(&config)?;
            let outcome = train::train(&cfg)?;
            let l = outcome.final_loss;
            println!("final train loss: bce {:.6} dice {:.6} total {:.6}", l.bce, l.dice, l.total);
            println!("checkpoint: {}", cfg.checkpoint_out.display());
        }
        Command::Eval { checkpoint, data, threshold, out, split } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let split = split.unwrap_or_else(|| train::default_eval_split(&data));
            let report = train::evaluate(&ck, &data, split, threshold)?;
            let csv = EvalReport::to_csv(std::slice::from_ref(&report));
            write(&out, &csv)?;
            print!("{csv}");
        }
        Command::Ablate { config, out, params_out } => {
            let cfg = TrainConfig::from_file(&config)?;
            let rows = train::ablation_run(&cfg)?;
            write(&out, &train::ablation_csv(&rows))?;
            write(&params_out.unwrap_or_else(|| params_path(&out)), &train::ablation_params_csv(&rows))?;
            print!("{}", train::ablation_csv(&rows));
        }
        Command::VerifyTable { csv, counts, tolerance } => {
            if !(tolerance >= 0.0 && tolerance.is_finite()) {
                return Err(Failure::Validation(format!("--tolerance must be nonnegative, got {tolerance}")));
            }
            let weights = parse_counts(&counts)?;
            let check = table::verify_table(&csv, &weights, tolerance)?;
            print!("{}", check.summary());
            if !check.all_pass() {
                return Err(Failure::Validation(format!(
                    "{} of {} rows disagree with their recomputed weighted mIoU",
                    check.rows.len() - check.passed(),
                    check.rows.len()
                )));
            }
        }
        Command::Overlay { image, gt, pred, out } => {
            let img = dataset::read_gray(&image)?;
            let gt = dataset::read_mask(&gt)?;
            let pred = dataset::read_mask(&pred)?;
            overlay::render_overlay(&img, &gt, &pred, &out)?;
            println!("wrote {} ({} predicted pixels)", out.display(), pred.count());
        }
        Command::Stats { data, out, split } => {
            let index = load_dataset(&data, split)?;
            let csv = summarize_distribution(&index).to_csv();
            write(&out, &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}
