//! Starting points for label-only attacks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabelOracle;
use crate::aggregate::Verdict;
use crate::codec::WatermarkCodec;
use crate::error::{Error, Result};
use crate::perturb::{apply, Perturbation, PerturbationKind};
use crate::video::{Frame, FrameShape, Video};
use crate::watermark::Watermark;

pub const INIT_SIGMA_START: f64 = 0.02;
pub const INIT_SIGMA_GROWTH: f64 = 1.5;
pub const INIT_SIGMA_CAP: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianInit {
    pub video: Video,
    /// Noise level that first flipped the label.
    pub sigma: f64,
}

/// Adds Gaussian noise of growing strength (`0.02, 0.03, 0.045, ...` up to
/// 2.0) until the oracle stops labelling the video as watermarked.
pub fn removal_init_gaussian(video: &Video, oracle: &dyn LabelOracle, seed: u64) -> Result<GaussianInit> {
    if oracle.label(video)? != Verdict::Watermarked {
        return Err(Error::Initialization(
            "removal needs a video the detector labels as watermarked".into(),
        ));
    }
    let mut sigma = INIT_SIGMA_START;
    let mut level = 0u64;
    while sigma <= INIT_SIGMA_CAP {
        let noise = Perturbation::new(PerturbationKind::GaussianNoise, sigma)?.with_seed(seed.wrapping_add(level));
        let noisy = apply(&noise, video)?;
        if oracle.label(&noisy)? == Verdict::Unwatermarked {
            return Ok(GaussianInit { video: noisy, sigma });
        }
        sigma *= INIT_SIGMA_GROWTH;
        level += 1;
    }
    Err(Error::Initialization(format!(
        "Gaussian noise up to sigma = {INIT_SIGMA_CAP} never removed the watermark"
    )))
}

/// Uniform random video of the requested shape with `wg` embedded by `codec`.
pub fn forgery_init_unrelated(
    shape: FrameShape,
    frames: usize,
    codec: &dyn WatermarkCodec,
    wg: &Watermark,
    seed: u64,
) -> Result<Video> {
    if frames == 0 {
        return Err(Error::param("video needs at least one frame"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (0..frames)
        .map(|_| Frame::from_fn(shape, |_, _, _| rng.gen::<f64>()))
        .collect();
    codec.embed(&Video::new(noise)?, wg)
}
