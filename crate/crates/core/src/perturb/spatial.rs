//! Per-frame perturbations: additive Gaussian noise, Gaussian blur and
//! centre crop with bilinear resize.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::video::Frame;

/// Adds i.i.d. `N(0, sigma^2)` noise and clamps.
pub fn gaussian_noise(frame: &Frame, sigma: f64, seed: u64) -> Result<Frame> {
    gaussian_noise_stream(frame, sigma, seed, 0)
}

/// Noise drawn from stream `stream` of the seeded generator, so each frame of
/// a video gets independent noise from one seed.
pub(crate) fn gaussian_noise_stream(frame: &Frame, sigma: f64, seed: u64, stream: u64) -> Result<Frame> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(frame.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    let data = frame
        .data()
        .iter()
        .map(|&v| v + normal.sample(&mut rng))
        .collect();
    Frame::clamped(frame.shape(), data)
}

/// Sampled Gaussian with radius `ceil(3 sigma)`, normalised to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Mirror index without repeating the edge sample: `... c b | a b c d | c b ...`.
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m >= n as i64 { period - m } else { m }) as usize
}

pub fn gaussian_blur(frame: &Frame, sigma: f64) -> Result<Frame> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("blur sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(frame.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let shape = frame.shape();
    let (h, w, ch) = (shape.height, shape.width, shape.channels);

    let mut horiz = vec![0.0; shape.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                horiz[shape.index(y, x, c)] = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * frame.get(y, reflect(x as i64 + t as i64 - radius, w), c))
                    .sum();
            }
        }
    }
    let mut out = vec![0.0; shape.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                out[shape.index(y, x, c)] = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * horiz[shape.index(reflect(y as i64 + t as i64 - radius, h), x, c)])
                    .sum();
            }
        }
    }
    Frame::clamped(shape, out)
}

/// Keeps the central region covering fraction `c` of the frame area (side
/// factor `sqrt(c)`) and resizes it back to the full frame bilinearly.
pub fn crop(frame: &Frame, c: f64) -> Result<Frame> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::param(format!("crop fraction must lie in (0, 1], got {c}")));
    }
    let shape = frame.shape();
    let (h, w) = (shape.height, shape.width);
    let side = c.sqrt();
    let ch = ((h as f64 * side).round() as usize).clamp(1, h);
    let cw = ((w as f64 * side).round() as usize).clamp(1, w);
    if ch == h && cw == w {
        return Ok(frame.clone());
    }
    let top = (h - ch) / 2;
    let left = (w - cw) / 2;

    let source = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };

    let out = Frame::from_fn(shape, |y, x, k| {
        let (y0, y1, fy) = source(y, ch, h);
        let (x0, x1, fx) = source(x, cw, w);
        let at = |yy: usize, xx: usize| frame.get(top + yy, left + xx, k);
        (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1))
    });
    Frame::clamped(shape, out.into_data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::FrameShape;

    #[test]
    fn zero_sigma_is_identity() {
        let f = Frame::from_fn(FrameShape::new(5, 6, 3).unwrap(), |y, x, c| ((y + x + c) % 4) as f64 / 4.0);
        assert_eq!(gaussian_noise(&f, 0.0, 3).unwrap(), f);
        assert_eq!(gaussian_blur(&f, 0.0).unwrap(), f);
        assert_eq!(crop(&f, 1.0).unwrap(), f);
    }

    #[test]
    fn noise_variance() {
        let shape = FrameShape::new(256, 256, 1).unwrap();
        let f = Frame::filled(shape, 0.5);
        let out = gaussian_noise(&f, 0.1, 11).unwrap();
        let diffs: Vec<f64> = out.data().iter().map(|v| v - 0.5).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        assert!((var / 0.01 - 1.0).abs() < 0.05, "variance {var}");
        assert_eq!(out, gaussian_noise(&f, 0.1, 11).unwrap());
    }

    #[test]
    fn blur_keeps_constants_and_matches_kernel() {
        let shape = FrameShape::new(21, 21, 1).unwrap();
        let flat = Frame::filled(shape, 0.3);
        assert!(gaussian_blur(&flat, 1.7).unwrap().linf_distance(&flat) < 1e-12);

        let sigma = 1.2;
        let mut impulse = Frame::filled(shape, 0.0);
        impulse.data_mut()[shape.index(10, 10, 0)] = 1.0;
        let out = gaussian_blur(&impulse, sigma).unwrap();
        let g = |d: i64| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-4..=4).map(g).sum();
        for dy in -4i64..=4 {
            for dx in -4i64..=4 {
                let expected = g(dy) * g(dx) / (norm * norm);
                let got = out.get((10 + dy) as usize, (10 + dx) as usize, 0);
                assert!((got - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 4), 1);
        assert_eq!(reflect(-2, 4), 2);
        assert_eq!(reflect(4, 4), 2);
        assert_eq!(reflect(5, 4), 1);
        assert_eq!(reflect(-3, 1), 0);
    }

    #[test]
    fn crop_of_centered_block_is_constant() {
        let shape = FrameShape::new(16, 16, 3).unwrap();
        let f = Frame::from_fn(shape, |y, x, _| {
            if (4..12).contains(&y) && (4..12).contains(&x) {
                0.7
            } else {
                0.1
            }
        });
        let out = crop(&f, 0.25).unwrap();
        assert_eq!(out.shape(), shape);
        assert!(out.data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn invalid_parameters() {
        let f = Frame::filled(FrameShape::new(4, 4, 1).unwrap(), 0.5);
        assert!(gaussian_noise(&f, -1.0, 0).is_err());
        assert!(gaussian_blur(&f, f64::NAN).is_err());
        assert!(crop(&f, 0.0).is_err());
        assert!(crop(&f, 1.5).is_err());
    }
}
