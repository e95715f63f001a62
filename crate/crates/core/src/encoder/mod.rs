//! The hybrid attention encoder and its prediction head.

pub mod attention;
pub mod autocorr;
pub mod block;
mod config;
pub mod model;
pub mod ops;
mod params;

pub use autocorr::{roll_rows, DelayReport, HeadLags};
pub use block::fea_block;
pub use config::ModelConfig;
pub use model::{predict_scores, predict_scores_backward, readout_position, Encoder, Forward, LagSet};
pub use params::{FeaLayerParams, LayerNormParams, ModelParams, INIT_STD};
