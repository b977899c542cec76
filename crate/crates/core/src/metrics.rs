//! Visual-quality metrics and the significance test used in reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::video::{Frame, Video};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check_same_shape(a: &Video, b: &Video) -> Result<()> {
    if a.shape() != b.shape() || a.num_frames() != b.num_frames() {
        return Err(Error::dims(
            format!("{} frames of {}", a.num_frames(), a.shape()),
            format!("{} frames of {}", b.num_frames(), b.shape()),
        ));
    }
    Ok(())
}

pub fn mse(a: &Video, b: &Video) -> Result<f64> {
    check_same_shape(a, b)?;
    let mut sum = 0.0;
    for (fa, fb) in a.frames().iter().zip(b.frames()) {
        sum += fa
            .data()
            .iter()
            .zip(fb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    Ok(sum / a.len() as f64)
}

/// `10 log10(1 / MSE)` with peak 1.0; identical videos give `f64::INFINITY`.
pub fn psnr(a: &Video, b: &Video) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * m.log10()
    })
}

/// Normalised 1-D Gaussian taps for the SSIM window of `size` samples.
pub fn ssim_window(size: usize) -> Vec<f64> {
    let centre = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - centre;
            (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Window side actually used: 11, or the largest odd size that fits.
pub fn ssim_window_size(height: usize, width: usize) -> usize {
    let fit = height.min(width).min(SSIM_WINDOW);
    if fit.is_multiple_of(2) {
        fit - 1
    } else {
        fit
    }
}

/// Valid-mode separable filtering of one channel plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().enumerate().map(|(t, c)| c * plane[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(t, c)| c * horiz[(y + t) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM of one channel over all fully contained window positions.
fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, taps: &[f64]) -> f64 {
    let prod = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(x, y)| x * y).collect() };
    let (mu_a, _, _) = filter_valid(a, h, w, taps);
    let (mu_b, _, _) = filter_valid(b, h, w, taps);
    let (aa, _, _) = filter_valid(&prod(a, a), h, w, taps);
    let (bb, _, _) = filter_valid(&prod(b, b), h, w, taps);
    let (ab, oh, ow) = filter_valid(&prod(a, b), h, w, taps);
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    total / (oh * ow) as f64
}

fn channel(frame: &Frame, c: usize) -> Vec<f64> {
    let ch = frame.shape().channels;
    frame.data().iter().skip(c).step_by(ch).copied().collect()
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
/// frames and channels. Frames smaller than the window use the largest odd
/// window that fits.
pub fn ssim(a: &Video, b: &Video) -> Result<f64> {
    check_same_shape(a, b)?;
    let shape = a.shape();
    let taps = ssim_window(ssim_window_size(shape.height, shape.width));
    let mut total = 0.0;
    for (fa, fb) in a.frames().iter().zip(b.frames()) {
        for c in 0..shape.channels {
            total += ssim_plane(&channel(fa, c), &channel(fb, c), shape.height, shape.width, &taps);
        }
    }
    Ok(total / (a.num_frames() * shape.channels) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-tailed Welch t-test with Welch-Satterthwaite degrees of freedom.
pub fn two_tailed_t_test(xs: &[f64], ys: &[f64]) -> Result<WelchTest> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::param(format!(
            "t-test needs at least two samples per group, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let moments = |s: &[f64]| {
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (n, mean, var)
    };
    let (nx, mx, vx) = moments(xs);
    let (ny, my, vy) = moments(ys);
    let (sx, sy) = (vx / nx, vy / ny);
    let se2 = sx + sy;
    if se2.is_nan() || se2 <= 0.0 {
        return Err(Error::param("t-test undefined: both samples have zero variance"));
    }
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::param(e.to_string()))?;
    let p_value = if t == 0.0 {
        1.0
    } else {
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(WelchTest { t, df, p_value })
}
