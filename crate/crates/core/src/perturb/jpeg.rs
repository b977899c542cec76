//! Baseline-JPEG style quantisation: 8x8 block DCT, quality-scaled luminance
//! table, dequantisation and inverse DCT, applied to each channel on its own.
//! Entropy coding and chroma subsampling are skipped.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::video::Frame;

const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Luminance quantisation table scaled with the IJG quality mapping.
pub fn quant_table(quality: u8) -> [f64; 64] {
    let q = u32::from(quality.clamp(1, 100));
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &base) in out.iter_mut().zip(LUMA_TABLE.iter()) {
        *o = ((u32::from(base) * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

/// `COS[x][u] = c(u) / 2 * cos((2x + 1) u pi / 16)`, the orthonormal 8-point basis.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (x, row) in b.iter_mut().enumerate() {
            for (u, v) in row.iter_mut().enumerate() {
                let cu = if u == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
                *v = cu / 2.0 * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| block[y * 8 + x] * b[x][u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| tmp[y * 8 + u] * b[y][v]).sum();
        }
    }
    out
}

fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| coef[v * 8 + u] * b[x][u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| tmp[v * 8 + x] * b[y][v]).sum();
        }
    }
    out
}

pub fn jpeg(frame: &Frame, quality: f64) -> Result<Frame> {
    if !(1.0..=100.0).contains(&quality) {
        return Err(Error::param(format!(
            "JPEG quality must lie in [1, 100], got {quality}"
        )));
    }
    let table = quant_table(quality.round() as u8);
    let shape = frame.shape();
    let (h, w, ch) = (shape.height, shape.width, shape.channels);
    let mut out = vec![0.0; shape.len()];

    for c in 0..ch {
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                let mut block = [0.0; 64];
                for y in 0..8 {
                    for x in 0..8 {
                        // partial edge blocks replicate the last row/column
                        let sy = (by + y).min(h - 1);
                        let sx = (bx + x).min(w - 1);
                        let level = (frame.get(sy, sx, c).clamp(0.0, 1.0) * 255.0).round();
                        block[y * 8 + x] = level - 128.0;
                    }
                }
                let mut coef = fdct(&block);
                for (k, q) in coef.iter_mut().zip(table.iter()) {
                    *k = (*k / q).round() * q;
                }
                let rec = idct(&coef);
                for y in 0..8.min(h - by) {
                    for x in 0..8.min(w - bx) {
                        let level = (rec[y * 8 + x] + 128.0).round().clamp(0.0, 255.0);
                        out[shape.index(by + y, bx + x, c)] = level / 255.0;
                    }
                }
            }
        }
    }
    Frame::clamped(shape, out)
}
