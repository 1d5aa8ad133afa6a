//! Chart auto-encoder: a shared encoder, one encoder/decoder pair per chart,
//! a chart predictor and a shared decoder.

mod config;
mod losses;
mod mlp;
mod model;
mod prune;

pub use config::{CaeConfig, OrientationReg, PredictorInput, Preset};
pub use losses::{loss, pca_frame, PcaFrame, POWER_ITERS, PROB_FLOOR};
pub use mlp::{Activation, Mlp};
pub use model::{
    sidecar_path, CaeLayers, CaeModel, ChartReference, ForwardResult, ForwardVars, Layers,
};
pub use prune::{ChartHealth, DEFAULT_PRUNE_THRESHOLD};
