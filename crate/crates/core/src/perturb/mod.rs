//! Common perturbations. Image-based kinds are applied to every frame on its
//! own; video-based kinds act on the frame sequence.

mod jpeg;
mod mpeg4;
mod spatial;
mod temporal;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::Video;

pub use jpeg::{jpeg, quant_table};
pub use mpeg4::{mpeg4_external, qscale, EncoderCommand};
pub use spatial::{crop, gaussian_blur, gaussian_kernel, gaussian_noise};
pub use temporal::{frame_average, frame_removal, frame_swap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    Jpeg,
    GaussianNoise,
    GaussianBlur,
    Crop,
    Mpeg4,
    FrameAverage,
    FrameSwap,
    FrameRemoval,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 8] = [
        PerturbationKind::Jpeg,
        PerturbationKind::GaussianNoise,
        PerturbationKind::GaussianBlur,
        PerturbationKind::Crop,
        PerturbationKind::Mpeg4,
        PerturbationKind::FrameAverage,
        PerturbationKind::FrameSwap,
        PerturbationKind::FrameRemoval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::Jpeg => "jpeg",
            PerturbationKind::GaussianNoise => "gaussian-noise",
            PerturbationKind::GaussianBlur => "gaussian-blur",
            PerturbationKind::Crop => "crop",
            PerturbationKind::Mpeg4 => "mpeg4",
            PerturbationKind::FrameAverage => "frame-average",
            PerturbationKind::FrameSwap => "frame-swap",
            PerturbationKind::FrameRemoval => "frame-removal",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            PerturbationKind::GaussianNoise | PerturbationKind::FrameSwap | PerturbationKind::FrameRemoval
        )
    }

    fn validate(self, parameter: f64) -> Result<()> {
        let ok = match self {
            PerturbationKind::Jpeg | PerturbationKind::Mpeg4 => (1.0..=100.0).contains(&parameter),
            PerturbationKind::GaussianNoise | PerturbationKind::GaussianBlur => {
                parameter >= 0.0 && parameter.is_finite()
            }
            PerturbationKind::Crop => parameter > 0.0 && parameter <= 1.0,
            PerturbationKind::FrameAverage => {
                parameter >= 1.0 && parameter.fract() == 0.0 && parameter % 2.0 == 1.0
            }
            PerturbationKind::FrameSwap | PerturbationKind::FrameRemoval => {
                (0.0..=1.0).contains(&parameter)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid {self} parameter {parameter}")))
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalised = s.replace('_', "-");
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.name() == normalised)
            .ok_or_else(|| Error::param(format!("unknown perturbation {s:?}")))
    }
}

/// One perturbation with its parameter: JPEG/MPEG-4 quality `Q`, noise or
/// blur `sigma`, crop area fraction `c`, window `N`, or probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub parameter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Perturbation {
    pub fn new(kind: PerturbationKind, parameter: f64) -> Result<Self> {
        kind.validate(parameter)?;
        Ok(Self {
            kind,
            parameter,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate(self.parameter)
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.parameter)
    }
}

/// Parses `kind:parameter`, e.g. `jpeg:50` or `gaussian-noise:0.1`.
impl FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, param) = s
            .split_once(':')
            .ok_or_else(|| Error::param(format!("perturbation must look like kind:param, got {s:?}")))?;
        let parameter = param
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::param(format!("bad perturbation parameter {param:?}: {e}")))?;
        Perturbation::new(kind.trim().parse()?, parameter)
    }
}

pub fn apply(perturbation: &Perturbation, video: &Video) -> Result<Video> {
    apply_with_encoder(perturbation, video, None)
}

/// Like [`apply`], with the encoder command used by the `mpeg4` kind.
pub fn apply_with_encoder(
    perturbation: &Perturbation,
    video: &Video,
    encoder: Option<&EncoderCommand>,
) -> Result<Video> {
    perturbation.validate()?;
    let param = perturbation.parameter;
    let seed = perturbation.seed.unwrap_or(0);
    match perturbation.kind {
        PerturbationKind::Jpeg => video.map_frames(|f| jpeg(f, param)),
        PerturbationKind::GaussianNoise => {
            let mut index = 0u64;
            video.map_frames(|f| {
                let out = spatial::gaussian_noise_stream(f, param, seed, index);
                index += 1;
                out
            })
        }
        PerturbationKind::GaussianBlur => video.map_frames(|f| gaussian_blur(f, param)),
        PerturbationKind::Crop => video.map_frames(|f| crop(f, param)),
        PerturbationKind::Mpeg4 => mpeg4_external(video, param, encoder),
        PerturbationKind::FrameAverage => frame_average(video, param as usize),
        PerturbationKind::FrameSwap => frame_swap(video, param, seed),
        PerturbationKind::FrameRemoval => frame_removal(video, param, seed),
    }
}
