//! Swin-transformer U-shaped segmentation network with hierarchical attention
//! fusion, a tokenized-MLP bottleneck and deformable context aggregation,
//! written on plain `ndarray` with hand-derived gradients.

pub mod bottleneck;
pub mod checkpoint;
pub mod config;
pub mod context;
pub mod dataset;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod overlay;
pub mod params;
pub mod table;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{OptimizerKind, TrainConfig};
pub use dataset::{DatasetIndex, Label, Plane, SampleEntry, Split, SynthSpec};
pub use decoder::{ModelConfig, SegModel};
pub use encoder::{EncoderConfig, SkipPyramid};
pub use error::{Error, Result};
pub use losses::{LossBreakdown, LossConfig};
pub use metrics::{EvalReport, EvalWeights};
pub use params::{Grads, ParamStore};
pub use tensor::{BinaryMask, FeatureMap};
