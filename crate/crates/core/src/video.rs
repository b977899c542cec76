//! Frame and video containers.
//!
//! Pixels are stored as `f64` in row-major, channel-interleaved order
//! (`(y * width + x) * channels + c`). A valid video has at least one frame,
//! every frame shares the same shape, and every pixel is finite and lies in
//! `[0, 1]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl FrameShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::param(format!(
                "frame dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::param(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
        })
    }

    /// Number of scalar values in one frame.
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }
}

impl fmt::Display for FrameShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    shape: FrameShape,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(shape: FrameShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::dims(
                format!("{} values for {shape}", shape.len()),
                data.len(),
            ));
        }
        Ok(Self { shape, data })
    }

    /// Builds a frame, clamping every value into `[0, 1]`.
    pub fn clamped(shape: FrameShape, mut data: Vec<f64>) -> Result<Self> {
        clamp_unit(&mut data);
        Self::new(shape, data)
    }

    pub fn filled(shape: FrameShape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_fn(shape: FrameShape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                for c in 0..shape.channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> FrameShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.shape.index(y, x, c)]
    }

    pub fn is_valid(&self) -> bool {
        self.data
            .iter()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }

    pub fn clamp_in_place(&mut self) {
        clamp_unit(&mut self.data);
    }

    /// Largest absolute per-pixel difference.
    pub fn linf_distance(&self, other: &Frame) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub(crate) fn clamp_unit(values: &mut [f64]) {
    for v in values.iter_mut() {
        // NaN maps to 0 so a clamped buffer is always valid.
        *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    shape: FrameShape,
    frames: Vec<Frame>,
}

impl Video {
    /// Validates frame count, shape agreement and the pixel range.
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let video = Self::from_frames_unchecked(frames)?;
        if let Some(i) = video.frames.iter().position(|f| !f.is_valid()) {
            return Err(Error::InvalidVideo(format!(
                "frame {i} has pixels outside [0, 1] or non-finite"
            )));
        }
        Ok(video)
    }

    /// Checks shape agreement only, clamping pixel values into range.
    pub fn clamped(mut frames: Vec<Frame>) -> Result<Self> {
        for f in &mut frames {
            f.clamp_in_place();
        }
        Self::from_frames_unchecked(frames)
    }

    fn from_frames_unchecked(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidVideo("a video needs at least one frame".into()))?;
        let shape = first.shape();
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.shape() != shape) {
            return Err(Error::dims(
                format!("frame shape {shape}"),
                format!("frame {i} with shape {}", f.shape()),
            ));
        }
        Ok(Self { shape, frames })
    }

    pub fn shape(&self) -> FrameShape {
        self.shape
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    /// Total number of scalar values across all frames.
    pub fn len(&self) -> usize {
        self.frames.len() * self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies `f` to every frame, producing a new video.
    pub fn map_frames(&self, mut f: impl FnMut(&Frame) -> Result<Frame>) -> Result<Video> {
        let frames = self.frames.iter().map(&mut f).collect::<Result<Vec<_>>>()?;
        Video::clamped(frames)
    }

    /// Flattened copy of all pixels, frame-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for f in &self.frames {
            out.extend_from_slice(f.data());
        }
        out
    }

    /// Inverse of [`Video::to_flat`]; pixels are clamped into `[0, 1]`.
    pub fn from_flat(shape: FrameShape, num_frames: usize, flat: &[f64]) -> Result<Video> {
        if flat.len() != shape.len() * num_frames {
            return Err(Error::dims(
                format!("{} values", shape.len() * num_frames),
                flat.len(),
            ));
        }
        let frames = flat
            .chunks_exact(shape.len())
            .map(|c| Frame::clamped(shape, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Video::clamped(frames)
    }

    pub fn linf_distance(&self, other: &Video) -> f64 {
        self.frames
            .iter()
            .zip(&other.frames)
            .fold(0.0_f64, |m, (a, b)| m.max(a.linf_distance(b)))
    }

    pub fn pixel_sum(&self) -> f64 {
        self.frames.iter().flat_map(|f| f.data()).sum()
    }
}
