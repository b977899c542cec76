//! The watermark codec contract and the built-in spread-spectrum codec.
//!
//! The reference codec adds `strength * sum_j s_j * carrier_j` to every frame,
//! where `s_j = ±1` follows the watermark bit and each carrier is a
//! pseudo-random ±1 pattern. Decoding correlates the centred frame with each
//! carrier and passes the result through an activation:
//!
//! ```text
//! z_j   = gain * <frame - 0.5, carrier_j> / (H * W * C)
//! y_j   = sigmoid(z_j)        (Activation::Sigmoid)
//! y_j   = 0.5 + z_j           (Activation::Identity, unbounded)
//! ```
//!
//! Both activations share the rounding boundary `y_j >= 0.5`, so the two
//! variants always decode the same bits.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::LogitMatrix;
use crate::error::{Error, Result};
use crate::video::{Frame, FrameShape, Video};
use crate::watermark::Watermark;

/// A per-frame watermark encoder/decoder.
///
/// Implementations must be deterministic and safe to share across threads.
pub trait WatermarkCodec: Send + Sync {
    fn bit_len(&self) -> usize;

    fn frame_shape(&self) -> FrameShape;

    fn embed_frame(&self, frame: &Frame, wm: &Watermark) -> Result<Frame>;

    /// Decoded logits for one frame, length [`WatermarkCodec::bit_len`].
    fn decode_frame(&self, frame: &Frame) -> Result<Vec<f64>>;

    /// Gradient of `sum_j bit_weights[j] * logit_j` with respect to the frame
    /// pixels, laid out like [`Frame::data`].
    fn decoder_gradient(&self, frame: &Frame, bit_weights: &[f64]) -> Result<Vec<f64>>;

    fn embed(&self, video: &Video, wm: &Watermark) -> Result<Video> {
        video.map_frames(|f| self.embed_frame(f, wm))
    }

    fn decode_video(&self, video: &Video) -> Result<LogitMatrix> {
        let rows = video
            .frames()
            .iter()
            .map(|f| self.decode_frame(f))
            .collect::<Result<Vec<_>>>()?;
        LogitMatrix::new(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// Logits in (0, 1).
    #[default]
    Sigmoid,
    /// Unbounded logits centred on 0.5.
    Identity,
}

/// Spatial structure of the ±1 carriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierLayout {
    /// Independent sign per pixel and channel.
    #[default]
    Pixel,
    /// Horizontal pairs `(+s, -s)`: zero response to locally flat content, so
    /// decoding is dominated by high-frequency energy such as additive noise.
    Dipole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecParams {
    pub seed: u64,
    pub bits: usize,
    /// Embedding amplitude per carrier.
    pub strength: f64,
    /// Decoder gain applied to the normalised correlation.
    pub gain: f64,
    pub activation: Activation,
    pub layout: CarrierLayout,
}

impl CodecParams {
    pub const DEFAULT_STRENGTH: f64 = 0.006;
    pub const DEFAULT_GAIN: f64 = 50.0;

    /// Weak variant used to study noise-like black-box perturbations.
    pub fn noise_sensitive() -> Self {
        Self {
            strength: 0.0012,
            layout: CarrierLayout::Dipole,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 {
            return Err(Error::param("watermark length must be at least 1"));
        }
        if !(self.strength.is_finite() && self.strength >= 0.0) {
            return Err(Error::param(format!(
                "strength must be finite and non-negative, got {}",
                self.strength
            )));
        }
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(Error::param(format!(
                "gain must be positive, got {}",
                self.gain
            )));
        }
        Ok(())
    }
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            seed: 0,
            bits: 32,
            strength: Self::DEFAULT_STRENGTH,
            gain: Self::DEFAULT_GAIN,
            activation: Activation::Sigmoid,
            layout: CarrierLayout::Pixel,
        }
    }
}

/// Key material of the reference codec: parameters plus the carriers
/// generated for one frame shape.
#[derive(Clone)]
pub struct CodecKey {
    params: CodecParams,
    shape: FrameShape,
    carriers: Arc<[f32]>,
}

impl std::fmt::Debug for CodecKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CodecKey")
            .field("params", &self.params)
            .field("shape", &self.shape)
            .finish_non_exhaustive()
    }
}

impl CodecKey {
    pub fn new(params: CodecParams, shape: FrameShape) -> Result<Self> {
        params.validate()?;
        let len = shape.len();
        let mut carriers = Vec::with_capacity(params.bits * len);
        for j in 0..params.bits {
            carriers.extend(generate_carrier(&params, shape, j));
        }
        Ok(Self {
            params,
            shape,
            carriers: carriers.into(),
        })
    }

    pub fn params(&self) -> &CodecParams {
        &self.params
    }

    pub fn shape(&self) -> FrameShape {
        self.shape
    }

    pub fn strength(&self) -> f64 {
        self.params.strength
    }

    pub fn carrier(&self, j: usize) -> &[f32] {
        let len = self.shape.len();
        &self.carriers[j * len..(j + 1) * len]
    }

    /// Same carriers with a different activation.
    pub fn with_activation(&self, activation: Activation) -> Self {
        Self {
            params: CodecParams {
                activation,
                ..self.params
            },
            ..self.clone()
        }
    }

    /// Largest `|<c_i, c_j>| / (H*W*C)` over distinct carrier pairs.
    pub fn max_cross_correlation(&self) -> f64 {
        let n = self.params.bits;
        let len = self.shape.len() as f64;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let dot: f64 = self
                    .carrier(i)
                    .iter()
                    .zip(self.carrier(j))
                    .map(|(&a, &b)| f64::from(a * b))
                    .sum();
                worst = worst.max((dot / len).abs());
            }
        }
        worst
    }

    fn check_frame(&self, frame: &Frame) -> Result<()> {
        if frame.shape() != self.shape {
            return Err(Error::dims(
                format!("frame {}", self.shape),
                format!("frame {}", frame.shape()),
            ));
        }
        Ok(())
    }

    fn check_watermark(&self, wm: &Watermark) -> Result<()> {
        if wm.len() != self.params.bits {
            return Err(Error::dims(
                format!("{}-bit watermark", self.params.bits),
                format!("{}-bit watermark", wm.len()),
            ));
        }
        Ok(())
    }

    /// `sum_j s_j * carrier_j` for the watermark's sign vector.
    fn pattern(&self, wm: &Watermark) -> Vec<f64> {
        let mut pattern = vec![0.0; self.shape.len()];
        for (j, s) in wm.signs().enumerate() {
            for (p, &c) in pattern.iter_mut().zip(self.carrier(j)) {
                *p += s * f64::from(c);
            }
        }
        pattern
    }

    /// Pre-activation responses `z_j`.
    pub fn responses(&self, frame: &Frame) -> Result<Vec<f64>> {
        self.check_frame(frame)?;
        let centred: Vec<f64> = frame.data().iter().map(|v| v - 0.5).collect();
        let scale = self.params.gain / self.shape.len() as f64;
        Ok((0..self.params.bits)
            .map(|j| {
                let dot: f64 = centred
                    .iter()
                    .zip(self.carrier(j))
                    .map(|(&x, &c)| x * f64::from(c))
                    .sum();
                scale * dot
            })
            .collect())
    }

    fn activate(&self, z: f64) -> f64 {
        match self.params.activation {
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => 0.5 + z,
        }
    }

    fn activation_slope(&self, z: f64) -> f64 {
        match self.params.activation {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    fn add_pattern(&self, frame: &Frame, pattern: &[f64]) -> Result<Frame> {
        let alpha = self.params.strength;
        let data = frame
            .data()
            .iter()
            .zip(pattern)
            .map(|(&x, &p)| x + alpha * p)
            .collect();
        Frame::clamped(self.shape, data)
    }
}

impl WatermarkCodec for CodecKey {
    fn bit_len(&self) -> usize {
        self.params.bits
    }

    fn frame_shape(&self) -> FrameShape {
        self.shape
    }

    fn embed_frame(&self, frame: &Frame, wm: &Watermark) -> Result<Frame> {
        self.check_frame(frame)?;
        self.check_watermark(wm)?;
        self.add_pattern(frame, &self.pattern(wm))
    }

    fn decode_frame(&self, frame: &Frame) -> Result<Vec<f64>> {
        Ok(self
            .responses(frame)?
            .into_iter()
            .map(|z| self.activate(z))
            .collect())
    }

    fn decoder_gradient(&self, frame: &Frame, bit_weights: &[f64]) -> Result<Vec<f64>> {
        if bit_weights.len() != self.params.bits {
            return Err(Error::dims(
                format!("{} bit weights", self.params.bits),
                bit_weights.len(),
            ));
        }
        let z = self.responses(frame)?;
        let scale = self.params.gain / self.shape.len() as f64;
        let mut grad = vec![0.0; self.shape.len()];
        for (j, (&w, &zj)) in bit_weights.iter().zip(&z).enumerate() {
            let coef = w * self.activation_slope(zj) * scale;
            if coef == 0.0 {
                continue;
            }
            for (g, &c) in grad.iter_mut().zip(self.carrier(j)) {
                *g += coef * f64::from(c);
            }
        }
        Ok(grad)
    }

    fn embed(&self, video: &Video, wm: &Watermark) -> Result<Video> {
        self.check_watermark(wm)?;
        if video.shape() != self.shape {
            return Err(Error::dims(
                format!("frame {}", self.shape),
                format!("frame {}", video.shape()),
            ));
        }
        let pattern = self.pattern(wm);
        video.map_frames(|f| self.add_pattern(f, &pattern))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Carrier `j` as ±1 values. Each bit index draws from its own ChaCha stream
/// keyed on the codec seed, so carriers do not depend on the bit count.
fn generate_carrier(params: &CodecParams, shape: FrameShape, j: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(j as u64);
    let mut bits = BitSource::new(rng);
    let mut out = vec![0.0_f32; shape.len()];
    match params.layout {
        CarrierLayout::Pixel => {
            for v in out.iter_mut() {
                *v = bits.sign();
            }
        }
        CarrierLayout::Dipole => {
            for y in 0..shape.height {
                for x in (0..shape.width).step_by(2) {
                    for c in 0..shape.channels {
                        let s = bits.sign();
                        out[shape.index(y, x, c)] = s;
                        if x + 1 < shape.width {
                            out[shape.index(y, x + 1, c)] = -s;
                        }
                    }
                }
            }
        }
    }
    out
}

struct BitSource {
    rng: ChaCha8Rng,
    word: u64,
    left: u32,
}

impl BitSource {
    fn new(rng: ChaCha8Rng) -> Self {
        Self {
            rng,
            word: 0,
            left: 0,
        }
    }

    fn sign(&mut self) -> f32 {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let bit = self.word & 1;
        self.word >>= 1;
        self.left -= 1;
        if bit == 1 {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::watermark::round_logits;

    fn key(params: CodecParams) -> CodecKey {
        CodecKey::new(params, FrameShape::new(64, 64, 3).unwrap()).unwrap()
    }

    #[test]
    fn zero_strength_is_identity() {
        let k = key(CodecParams {
            strength: 0.0,
            ..Default::default()
        });
        let f = Frame::from_fn(k.shape(), |y, x, c| ((y + 2 * x + c) % 7) as f64 / 7.0);
        let wm = Watermark::random(32, 1).unwrap();
        assert_eq!(k.embed_frame(&f, &wm).unwrap(), f);
    }

    #[test]
    fn gray_frame_round_trip() {
        let k = key(CodecParams {
            strength: 0.02,
            ..Default::default()
        });
        let gray = Frame::filled(k.shape(), 0.5);
        for seed in 0..5 {
            let wm = Watermark::random(32, seed).unwrap();
            let marked = k.embed_frame(&gray, &wm).unwrap();
            let logits = k.decode_frame(&marked).unwrap();
            assert_eq!(round_logits(&logits), wm.bits());
        }
    }

    #[test]
    fn gray_frame_decodes_to_half() {
        let k = key(CodecParams::default());
        let logits = k.decode_frame(&Frame::filled(k.shape(), 0.5)).unwrap();
        assert!(logits.iter().all(|&y| y == 0.5));
    }

    #[test]
    fn self_correlation_is_positive() {
        let k = key(CodecParams::default());
        let alpha = 0.02;
        for j in [0, 7, 31] {
            let f = Frame::new(
                k.shape(),
                k.carrier(j)
                    .iter()
                    .map(|&c| 0.5 + alpha * f64::from(c))
                    .collect(),
            )
            .unwrap();
            assert!(k.decode_frame(&f).unwrap()[j] > 0.5);
        }
    }

    #[test]
    fn embedding_is_deterministic() {
        let k1 = key(CodecParams::default());
        let k2 = key(CodecParams::default());
        let f = Frame::filled(k1.shape(), 0.3);
        let wm = Watermark::random(32, 9).unwrap();
        assert_eq!(
            k1.embed_frame(&f, &wm).unwrap(),
            k2.embed_frame(&f, &wm).unwrap()
        );
        assert_eq!(k1.decode_frame(&f).unwrap(), k2.decode_frame(&f).unwrap());
    }

    #[test]
    fn carriers_are_nearly_orthogonal() {
        for layout in [CarrierLayout::Pixel, CarrierLayout::Dipole] {
            let k = key(CodecParams {
                layout,
                ..Default::default()
            });
            let worst = k.max_cross_correlation();
            assert!(worst <= 0.05, "{layout:?}: {worst}");
        }
    }

    #[test]
    fn dipole_ignores_flat_content() {
        let k = key(CodecParams::noise_sensitive());
        let flat = Frame::filled(k.shape(), 0.8);
        let z = k.responses(&flat).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let k = key(CodecParams::default());
        let f = Frame::filled(k.shape(), 0.4);
        let g = k.decoder_gradient(&f, &[0.0; 32]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_at_gray_frame_points_along_carrier() {
        let k = key(CodecParams::default());
        let gray = Frame::filled(k.shape(), 0.5);
        let j = 5;
        let mut w = vec![0.0; 32];
        w[j] = 1.0;
        let g = k.decoder_gradient(&gray, &w).unwrap();
        let c: Vec<f64> = k.carrier(j).iter().map(|&v| f64::from(v)).collect();
        let dot: f64 = g.iter().zip(&c).map(|(a, b)| a * b).sum();
        let ng: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nc: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(dot / (ng * nc) > 0.999);
    }

    #[test]
    fn dimension_errors() {
        let k = key(CodecParams::default());
        let small = Frame::filled(FrameShape::new(8, 8, 3).unwrap(), 0.5);
        assert!(matches!(
            k.decode_frame(&small),
            Err(Error::Dimension { .. })
        ));
        let f = Frame::filled(k.shape(), 0.5);
        assert!(k.decoder_gradient(&f, &[1.0; 3]).is_err());
        assert!(k.embed_frame(&f, &Watermark::random(8, 0).unwrap()).is_err());
    }

    #[test]
    fn identity_activation_shares_rounding() {
        let k = key(CodecParams::default());
        let id = k.with_activation(Activation::Identity);
        let wm = Watermark::random(32, 4).unwrap();
        let f = k
            .embed_frame(&Frame::filled(k.shape(), 0.45), &wm)
            .unwrap();
        assert_eq!(
            round_logits(&k.decode_frame(&f).unwrap()),
            round_logits(&id.decode_frame(&f).unwrap())
        );
    }
}
