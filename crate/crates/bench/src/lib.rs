//! Shared fixtures for the criterion benchmarks.

use vmark_core::{synth_video, CodecKey, CodecParams, FrameShape, Motion, SynthSpec, Video, Watermark, WatermarkCodec};

pub struct Fixture {
    pub key: CodecKey,
    pub wg: Watermark,
    pub clean: Video,
    pub marked: Video,
}

/// A watermarked synthetic clip of `frames` square frames with three channels.
pub fn fixture(side: usize, frames: usize) -> Fixture {
    let shape = FrameShape::new(side, side, 3).expect("valid shape");
    let key = CodecKey::new(CodecParams::default(), shape).expect("valid codec");
    let wg = Watermark::random(32, 1).expect("valid watermark");
    let clean = synth_video(&SynthSpec::new(frames, side, side, 3, Motion::Slow), 0).expect("valid spec");
    let marked = key.embed(&clean, &wg).expect("embed");
    Fixture { key, wg, clean, marked }
}
