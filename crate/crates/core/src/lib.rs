//! Robustness evaluation for frame-level video watermarks.
//!
//! The crate provides a pluggable per-frame codec contract with a
//! differentiable spread-spectrum reference codec, seven strategies for
//! aggregating per-frame detections into a video verdict, exact binomial
//! threshold selection, common perturbations, white-box and black-box
//! attacks, and a benchmark harness.

pub mod aggregate;
pub mod attack;
pub mod codec;
pub mod container;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod perturb;
pub mod plot;
pub mod synth;
pub mod threshold;
pub mod video;
pub mod watermark;

pub use aggregate::{
    detect, AggregationStrategy, DetectionResult, LogitMatrix, StrategyKind, Verdict,
};
pub use codec::{Activation, CarrierLayout, CodecKey, CodecParams, WatermarkCodec};
pub use error::{Error, Result};
pub use perturb::{Perturbation, PerturbationKind};
pub use synth::{synth_video, Motion, SynthSpec};
pub use threshold::{select_k, select_tau, Tau};
pub use video::{Frame, FrameShape, Video};
pub use watermark::{bitwise_accuracy, round_logits, Watermark};
