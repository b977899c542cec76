//! Gradient attacks against a differentiable codec.
//!
//! Scenario 1 ([`pgd_bounded`]) perturbs every frame inside an ℓ∞ ball using
//! signed gradient steps on the mean binary cross-entropy between the decoded
//! logits and the target watermark. Scenario 2 ([`subset_arbitrary`]) leaves
//! most frames untouched and drives the remaining ones with unbounded
//! perturbations on the sign-weighted logit sum.

use serde::{Deserialize, Serialize};

use super::AttackMode;
use crate::aggregate::{detect, AggregationStrategy, frame_accuracies};
use crate::codec::WatermarkCodec;
use crate::error::{Error, Result};
use crate::video::{Frame, Video};
use crate::watermark::Watermark;

pub const PGD_DEFAULT_STEPS: usize = 200;
pub const SUBSET_DEFAULT_STEPS: usize = 500;
pub const SUBSET_STEP_SIZE: f64 = 0.05;

/// Logits are clipped this far from 0 and 1 before taking logarithms.
const LOGIT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhiteboxConfig {
    pub mode: AttackMode,
    /// ℓ∞ bound for scenario 1; ignored by scenario 2.
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    /// Attackable frames for scenario 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_mask: Option<Vec<bool>>,
}

impl WhiteboxConfig {
    /// Scenario 1 defaults: 200 steps of size `2.5 * epsilon / steps`.
    pub fn pgd(mode: AttackMode, epsilon: f64) -> Self {
        Self::pgd_with_steps(mode, epsilon, PGD_DEFAULT_STEPS)
    }

    pub fn pgd_with_steps(mode: AttackMode, epsilon: f64, steps: usize) -> Self {
        Self {
            mode,
            epsilon,
            steps,
            step_size: 2.5 * epsilon / steps.max(1) as f64,
            frame_mask: None,
        }
    }

    /// Scenario 2 defaults: 500 steps of 0.05 in pixel units.
    pub fn subset(mode: AttackMode, frame_mask: Vec<bool>) -> Self {
        Self {
            mode,
            epsilon: 1.0,
            steps: SUBSET_DEFAULT_STEPS,
            step_size: SUBSET_STEP_SIZE,
            frame_mask: Some(frame_mask),
        }
    }

    fn check_step_size(&self) -> Result<()> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::param(format!("step size must be >= 0, got {}", self.step_size)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdOutcome {
    pub video: Video,
    /// Bitwise accuracy of each attacked frame against the target watermark.
    pub frame_accuracies: Vec<f64>,
}

/// `dl/dy_j` for the mean binary cross-entropy against `wg`.
fn bce_weights(logits: &[f64], wg: &Watermark) -> Vec<f64> {
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(wg.bits())
        .map(|(&y, &bit)| {
            let y = y.clamp(LOGIT_FLOOR, 1.0 - LOGIT_FLOOR);
            let t = if bit { 1.0 } else { 0.0 };
            (y - t) / (n * y * (1.0 - y))
        })
        .collect()
}

fn bce(logits: &[f64], wg: &Watermark) -> f64 {
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(wg.bits())
        .map(|(&y, &bit)| {
            let y = y.clamp(LOGIT_FLOOR, 1.0 - LOGIT_FLOOR);
            if bit {
                -y.ln()
            } else {
                -(1.0 - y).ln()
            }
        })
        .sum::<f64>()
        / n
}

/// The quantity PGD minimises for `mode`: the negated cross-entropy for
/// removal, the cross-entropy itself for forgery.
pub fn attack_loss(codec: &dyn WatermarkCodec, frame: &Frame, wg: &Watermark, mode: AttackMode) -> Result<f64> {
    let l = bce(&codec.decode_frame(frame)?, wg);
    Ok(match mode {
        AttackMode::Removal => -l,
        AttackMode::Forgery => l,
    })
}

fn check_inputs(video: &Video, codec: &dyn WatermarkCodec, wg: &Watermark) -> Result<()> {
    if video.shape() != codec.frame_shape() {
        return Err(Error::dims(codec.frame_shape(), video.shape()));
    }
    if wg.len() != codec.bit_len() {
        return Err(Error::dims(format!("{} bits", codec.bit_len()), format!("{} bits", wg.len())));
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn pgd_frame(codec: &dyn WatermarkCodec, frame: &Frame, wg: &Watermark, cfg: &WhiteboxConfig) -> Result<Frame> {
    let shape = frame.shape();
    let origin = frame.data();
    // ascend the cross-entropy for removal, descend it for forgery
    let direction = cfg.mode.descent_sign();
    let mut current = frame.clone();
    for _ in 0..cfg.steps {
        let logits = codec.decode_frame(&current)?;
        let grad = codec.decoder_gradient(&current, &bce_weights(&logits, wg))?;
        let data = current.data_mut();
        for ((x, &x0), &g) in data.iter_mut().zip(origin).zip(&grad) {
            let stepped = *x + direction * cfg.step_size * sign(g);
            *x = stepped.clamp(x0 - cfg.epsilon, x0 + cfg.epsilon).clamp(0.0, 1.0);
        }
    }
    Frame::new(shape, current.into_data())
}

/// Scenario 1: ℓ∞-bounded PGD applied to every frame independently.
pub fn pgd_bounded(
    video: &Video,
    codec: &dyn WatermarkCodec,
    wg: &Watermark,
    cfg: &WhiteboxConfig,
) -> Result<PgdOutcome> {
    check_inputs(video, codec, wg)?;
    if cfg.frame_mask.is_some() {
        return Err(Error::param("PGD attacks every frame; use subset_arbitrary for a frame mask"));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be > 0, got {}", cfg.epsilon)));
    }
    if cfg.steps == 0 {
        return Err(Error::param("PGD needs at least one step"));
    }
    cfg.check_step_size()?;
    let attacked = video.map_frames(|f| pgd_frame(codec, f, wg, cfg))?;
    let accuracies = frame_accuracies(&codec.decode_video(&attacked)?, wg)?;
    Ok(PgdOutcome {
        video: attacked,
        frame_accuracies: accuracies,
    })
}

/// Scenario 2: unbounded signed-gradient steps on the masked frames only.
///
/// Removal minimises `sum_j s_j y_j` with `s_j = ±1` from `wg`; forgery
/// maximises it. The objective is only informative for codecs whose logits
/// are not squashed, such as the identity-activation reference codec.
pub fn subset_arbitrary(
    video: &Video,
    codec: &dyn WatermarkCodec,
    wg: &Watermark,
    cfg: &WhiteboxConfig,
) -> Result<Video> {
    check_inputs(video, codec, wg)?;
    let mask = cfg
        .frame_mask
        .as_ref()
        .ok_or_else(|| Error::param("subset attack needs a frame mask"))?;
    if mask.len() != video.num_frames() {
        return Err(Error::dims(
            format!("mask of {} frames", video.num_frames()),
            format!("{} entries", mask.len()),
        ));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::param("frame mask selects no frames"));
    }
    cfg.check_step_size()?;
    let weights: Vec<f64> = wg.signs().collect();
    let direction = -cfg.mode.descent_sign();
    let frames = video
        .frames()
        .iter()
        .zip(mask)
        .map(|(frame, &attack)| {
            if !attack {
                return Ok(frame.clone());
            }
            let mut current = frame.clone();
            for _ in 0..cfg.steps {
                let grad = codec.decoder_gradient(&current, &weights)?;
                for (x, &g) in current.data_mut().iter_mut().zip(&grad) {
                    *x = (*x + direction * cfg.step_size * sign(g)).clamp(0.0, 1.0);
                }
            }
            Ok(current)
        })
        .collect::<Result<Vec<_>>>()?;
    Video::new(frames)
}

/// Parses a frame list such as `0-2,7` into a mask of `frames` entries.
pub fn parse_frame_mask(expr: &str, frames: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; frames];
    let index = |s: &str| -> Result<usize> {
        let i = s
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::param(format!("bad frame index {s:?}: {e}")))?;
        if i >= frames {
            return Err(Error::param(format!("frame {i} out of range for {frames} frames")));
        }
        Ok(i)
    };
    for part in expr.split(',').filter(|p| !p.trim().is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (index(a)?, index(b)?);
                if a > b {
                    return Err(Error::param(format!("empty frame range {part:?}")));
                }
                mask[a..=b].iter_mut().for_each(|m| *m = true);
            }
            None => mask[index(part)?] = true,
        }
    }
    Ok(mask)
}

/// `points` geometrically spaced values from `min` to `max` inclusive.
pub fn epsilon_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && points >= 1) {
        return Err(Error::param(format!("invalid epsilon grid {min}..{max} with {points} points")));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let ratio = (max / min).powf(1.0 / (points - 1) as f64);
    Ok((0..points).map(|i| if i + 1 == points { max } else { min * ratio.powi(i as i32) }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinEpsilon {
    /// Smallest successful grid value, or the grid maximum when `found` is false.
    pub epsilon: f64,
    pub found: bool,
    pub grid_index: usize,
    /// Number of PGD runs performed.
    pub evaluations: usize,
}

/// Smallest ε on `grid` for which [`pgd_bounded`] reaches the mode's goal
/// verdict under `strategy`. Success is assumed monotone in ε, so the grid is
/// bisected after checking its largest value.
pub fn min_epsilon_search(
    video: &Video,
    codec: &dyn WatermarkCodec,
    wg: &Watermark,
    mode: AttackMode,
    strategy: &AggregationStrategy,
    steps: usize,
    grid: &[f64],
) -> Result<MinEpsilon> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("epsilon grid must be non-empty and strictly increasing"));
    }
    let mut evaluations = 0;
    let mut succeeds = |eps: f64| -> Result<bool> {
        evaluations += 1;
        let out = pgd_bounded(video, codec, wg, &WhiteboxConfig::pgd_with_steps(mode, eps, steps))?;
        let verdict = detect(&codec.decode_video(&out.video)?, wg, strategy)?.verdict;
        Ok(verdict == mode.goal())
    };
    let last = grid.len() - 1;
    if !succeeds(grid[last])? {
        return Ok(MinEpsilon {
            epsilon: grid[last],
            found: false,
            grid_index: last,
            evaluations,
        });
    }
    let hi = if succeeds(grid[0])? {
        0
    } else {
        let (mut lo, mut hi) = (0, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if succeeds(grid[mid])? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    Ok(MinEpsilon {
        epsilon: grid[hi],
        found: true,
        grid_index: hi,
        evaluations,
    })
}
