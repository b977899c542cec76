//! Procedural test videos: a translating sinusoidal gradient plus
//! band-limited noise, both moving along one random direction.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{Frame, FrameShape, Video};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Motion {
    #[default]
    Slow,
    Fast,
}

impl Motion {
    /// Per-frame displacement in pixels.
    pub fn speed(self) -> f64 {
        match self {
            Motion::Slow => 0.6,
            Motion::Fast => 3.0,
        }
    }
}

impl std::str::FromStr for Motion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slow" => Ok(Motion::Slow),
            "fast" => Ok(Motion::Fast),
            other => Err(Error::param(format!("unknown motion {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub motion: Motion,
}

impl SynthSpec {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, motion: Motion) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
            motion,
        }
    }

    pub fn shape(&self) -> Result<FrameShape> {
        FrameShape::new(self.height, self.width, self.channels)
    }
}

const NOISE_GRID: usize = 8;
const WAVE_AMPLITUDE: f64 = 0.2;
const NOISE_AMPLITUDE: f64 = 0.08;

pub fn synth_video(spec: &SynthSpec, seed: u64) -> Result<Video> {
    if spec.frames == 0 {
        return Err(Error::param("synthetic video needs at least one frame"));
    }
    let shape = spec.shape()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle: f64 = rng.gen_range(0.0..TAU);
    let (dir_x, dir_y) = (angle.cos(), angle.sin());
    let periods: f64 = rng.gen_range(0.6..1.8);
    let phases: Vec<f64> = (0..shape.channels).map(|_| rng.gen_range(0.0..TAU)).collect();
    let grids: Vec<Vec<f64>> = (0..shape.channels)
        .map(|_| {
            (0..NOISE_GRID * NOISE_GRID)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    let scale = shape.height.max(shape.width) as f64;
    let speed = spec.motion.speed();
    let frames = (0..spec.frames)
        .map(|t| {
            let shift = t as f64 * speed;
            let (ox, oy) = (shift * dir_x, shift * dir_y);
            let frame = Frame::from_fn(shape, |y, x, c| {
                let px = x as f64 + ox;
                let py = y as f64 + oy;
                let along = (px * dir_x + py * dir_y) / scale;
                let wave = (TAU * periods * along + phases[c]).sin();
                let noise = periodic_bilinear(
                    &grids[c],
                    px / shape.width as f64 * NOISE_GRID as f64,
                    py / shape.height as f64 * NOISE_GRID as f64,
                );
                0.5 + WAVE_AMPLITUDE * wave + NOISE_AMPLITUDE * noise
            });
            let mut frame = frame;
            frame.clamp_in_place();
            frame
        })
        .collect();
    Video::new(frames)
}

fn periodic_bilinear(grid: &[f64], u: f64, v: f64) -> f64 {
    let g = NOISE_GRID as f64;
    let u = u.rem_euclid(g);
    let v = v.rem_euclid(g);
    let (i0, j0) = (v.floor() as usize % NOISE_GRID, u.floor() as usize % NOISE_GRID);
    let (i1, j1) = ((i0 + 1) % NOISE_GRID, (j0 + 1) % NOISE_GRID);
    let (fv, fu) = (v - v.floor(), u - u.floor());
    let at = |i: usize, j: usize| grid[i * NOISE_GRID + j];
    at(i0, j0) * (1.0 - fv) * (1.0 - fu)
        + at(i1, j0) * fv * (1.0 - fu)
        + at(i0, j1) * (1.0 - fv) * fu
        + at(i1, j1) * fv * fu
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(frames: usize, motion: Motion) -> SynthSpec {
        SynthSpec::new(frames, 16, 20, 3, motion)
    }

    #[test]
    fn deterministic_in_seed() {
        let a = synth_video(&spec(4, Motion::Slow), 7).unwrap();
        let b = synth_video(&spec(4, Motion::Slow), 7).unwrap();
        assert_eq!(a, b);
        let c = synth_video(&spec(4, Motion::Slow), 8).unwrap();
        assert_ne!(a.pixel_sum(), c.pixel_sum());
    }

    #[test]
    fn single_frame_and_zero_dims() {
        assert_eq!(synth_video(&spec(1, Motion::Fast), 0).unwrap().num_frames(), 1);
        assert!(synth_video(&spec(0, Motion::Fast), 0).is_err());
        assert!(synth_video(&SynthSpec::new(2, 0, 4, 1, Motion::Slow), 0).is_err());
    }

    #[test]
    fn fast_motion_changes_frames_more() {
        let mean_step = |m: Motion| {
            let v = synth_video(&spec(6, m), 3).unwrap();
            let mut total = 0.0;
            for w in v.frames().windows(2) {
                let d: f64 = w[0].data().iter().zip(w[1].data()).map(|(a, b)| (a - b).abs()).sum();
                total += d;
            }
            total
        };
        assert!(mean_step(Motion::Fast) > mean_step(Motion::Slow));
    }

    #[test]
    fn pixels_in_range() {
        let v = synth_video(&spec(3, Motion::Fast), 99).unwrap();
        assert!(v.frames().iter().all(Frame::is_valid));
    }
}
