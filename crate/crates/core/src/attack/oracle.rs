use std::sync::atomic::{AtomicU64, Ordering};

use crate::aggregate::{detect, AggregationStrategy, DetectionResult, Verdict};
use crate::codec::WatermarkCodec;
use crate::error::Result;
use crate::video::Video;
use crate::watermark::Watermark;

/// Query access to a detector's aggregated score.
pub trait ScoreOracle: Sync {
    /// Aggregated bitwise accuracy, or the number of detected frames for
    /// detection-level strategies.
    fn score(&self, video: &Video) -> Result<f64>;

    /// Number of evaluations so far.
    fn queries(&self) -> u64;
}

/// Query access to a detector's verdict only.
pub trait LabelOracle: Sync {
    fn label(&self, video: &Video) -> Result<Verdict>;

    fn queries(&self) -> u64;
}

/// A codec, a ground-truth watermark and a strategy, with a query counter.
/// Every evaluation through either oracle trait or [`Detector::evaluate`]
/// counts as one query.
pub struct Detector<'a> {
    codec: &'a dyn WatermarkCodec,
    wg: Watermark,
    strategy: AggregationStrategy,
    counter: AtomicU64,
}

impl<'a> Detector<'a> {
    pub fn new(codec: &'a dyn WatermarkCodec, wg: Watermark, strategy: AggregationStrategy) -> Self {
        Self {
            codec,
            wg,
            strategy,
            counter: AtomicU64::new(0),
        }
    }

    pub fn strategy(&self) -> &AggregationStrategy {
        &self.strategy
    }

    pub fn watermark(&self) -> &Watermark {
        &self.wg
    }

    pub fn codec(&self) -> &'a dyn WatermarkCodec {
        self.codec
    }

    pub fn evaluate(&self, video: &Video) -> Result<DetectionResult> {
        self.counter.fetch_add(1, Ordering::Relaxed);
        let logits = self.codec.decode_video(video)?;
        detect(&logits, &self.wg, &self.strategy)
    }
}

impl ScoreOracle for Detector<'_> {
    fn score(&self, video: &Video) -> Result<f64> {
        Ok(self.evaluate(video)?.statistic)
    }

    fn queries(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }
}

impl LabelOracle for Detector<'_> {
    fn label(&self, video: &Video) -> Result<Verdict> {
        Ok(self.evaluate(video)?.verdict)
    }

    fn queries(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }
}
