//! Frame-level aggregation: seven ways to turn an `F x n` logit matrix into a
//! single watermarked/unwatermarked verdict.
//!
//! Every threshold comparison is done on integer match counts against the
//! fractional threshold, so `BA >= tau` never suffers from float rounding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::threshold::Tau;
use crate::watermark::{matching_bits, round_logits, Watermark};

/// Row-major `F x n` matrix of decoded logits, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    frames: usize,
    bits: usize,
    data: Vec<f64>,
}

impl LogitMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let bits = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::param("logit matrix needs at least one row"))?;
        if bits == 0 {
            return Err(Error::param("logit rows must be non-empty"));
        }
        let frames = rows.len();
        let mut data = Vec::with_capacity(frames * bits);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != bits {
                return Err(Error::dims(
                    format!("{bits} logits per row"),
                    format!("{} in row {i}", row.len()),
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::param(format!("row {i} has non-finite logits")));
            }
            data.extend(row);
        }
        Ok(Self { frames, bits, data })
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn num_bits(&self) -> usize {
        self.bits
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.bits..(i + 1) * self.bits]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.bits)
    }

    /// Copy with rows reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        Self::new(order.iter().map(|&i| self.row(i).to_vec()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    LogitMean,
    LogitMedian,
    BitMedian,
    BaMean,
    BaMedian,
    DetectionMedian,
    DetectionThreshold,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::LogitMean,
        StrategyKind::LogitMedian,
        StrategyKind::BitMedian,
        StrategyKind::BaMean,
        StrategyKind::BaMedian,
        StrategyKind::DetectionMedian,
        StrategyKind::DetectionThreshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::LogitMean => "logit-mean",
            StrategyKind::LogitMedian => "logit-median",
            StrategyKind::BitMedian => "bit-median",
            StrategyKind::BaMean => "ba-mean",
            StrategyKind::BaMedian => "ba-median",
            StrategyKind::DetectionMedian => "detection-median",
            StrategyKind::DetectionThreshold => "detection-threshold",
        }
    }

    /// Strategies whose statistic is a count of detected frames.
    pub fn is_detection_level(self) -> bool {
        matches!(
            self,
            StrategyKind::DetectionMedian | StrategyKind::DetectionThreshold
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param(format!("unknown aggregation strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationStrategy {
    pub kind: StrategyKind,
    pub tau: Tau,
    /// Frame-count threshold, present only for `detection-threshold`.
    pub k: Option<usize>,
}

impl AggregationStrategy {
    pub fn new(kind: StrategyKind, tau: Tau, k: Option<usize>) -> Result<Self> {
        match (kind, k) {
            (StrategyKind::DetectionThreshold, None) => {
                Err(Error::param("detection-threshold requires a frame count k"))
            }
            (StrategyKind::DetectionThreshold, Some(0)) => Err(Error::param("k must be >= 1")),
            (StrategyKind::DetectionThreshold, Some(_)) => Ok(Self { kind, tau, k }),
            (_, Some(_)) => Err(Error::param(format!(
                "k is only meaningful for detection-threshold, not {kind}"
            ))),
            (_, None) => Ok(Self { kind, tau, k }),
        }
    }

    /// Convenience constructor that ignores `k` for strategies that do not use it.
    pub fn with_default_k(kind: StrategyKind, tau: Tau, k: usize) -> Result<Self> {
        let k = (kind == StrategyKind::DetectionThreshold).then_some(k);
        Self::new(kind, tau, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Watermarked,
    Unwatermarked,
}

impl Verdict {
    pub fn from_bool(watermarked: bool) -> Self {
        if watermarked {
            Verdict::Watermarked
        } else {
            Verdict::Unwatermarked
        }
    }

    pub fn is_watermarked(self) -> bool {
        self == Verdict::Watermarked
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Watermarked => "watermarked",
            Verdict::Unwatermarked => "unwatermarked",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub verdict: Verdict,
    /// Aggregated bitwise accuracy, or the number of detected frames for
    /// detection-level strategies.
    pub statistic: f64,
    pub per_frame_decisions: Option<Vec<bool>>,
    pub strategy: StrategyKind,
}

/// Column-wise arithmetic mean of the logits.
pub fn logit_mean(logits: &LogitMatrix) -> Vec<f64> {
    let f = logits.num_frames() as f64;
    let mut sum = vec![0.0; logits.num_bits()];
    for row in logits.rows() {
        for (s, &v) in sum.iter_mut().zip(row) {
            *s += v;
        }
    }
    sum.into_iter().map(|s| s / f).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMedian {
    pub point: Vec<f64>,
    /// Sum of Euclidean distances from `point` to the inputs.
    pub objective: f64,
    pub iterations: usize,
}

pub const GEOMEDIAN_TOL: f64 = 1e-9;
pub const GEOMEDIAN_MAX_ITER: usize = 1000;
const WEISZFELD_FLOOR: f64 = 1e-12;

/// Sum of Euclidean distances from `z` to every point.
pub fn distance_sum<P: AsRef<[f64]>>(z: &[f64], points: &[P]) -> f64 {
    points.iter().map(|p| euclidean(z, p.as_ref())).sum()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Geometric median by Weiszfeld iteration with floored denominators.
///
/// Starts from the arithmetic mean and stops once an iteration lowers the
/// objective by less than `tol`. The best input point is also considered, so
/// optima sitting on a data point are returned exactly.
pub fn geometric_median<P: AsRef<[f64]>>(
    points: &[P],
    tol: f64,
    max_iter: usize,
) -> Result<GeometricMedian> {
    let first = points
        .first()
        .ok_or_else(|| Error::param("geometric median of an empty set"))?
        .as_ref();
    let dim = first.len();
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::dims(format!("{dim} coordinates"), format!("{} in point {i}", p.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::param(format!("point {i} has non-finite coordinates")));
        }
    }
    if points.len() == 1 {
        return Ok(GeometricMedian {
            point: first.to_vec(),
            objective: 0.0,
            iterations: 0,
        });
    }

    let mut z = vec![0.0; dim];
    for p in points {
        for (zi, &v) in z.iter_mut().zip(p.as_ref()) {
            *zi += v;
        }
    }
    let count = points.len() as f64;
    z.iter_mut().for_each(|v| *v /= count);
    let mut objective = distance_sum(&z, points);
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        for p in points {
            let p = p.as_ref();
            let w = 1.0 / euclidean(&z, p).max(WEISZFELD_FLOOR);
            den += w;
            for (n, &v) in num.iter_mut().zip(p) {
                *n += w * v;
            }
        }
        let next: Vec<f64> = num.into_iter().map(|n| n / den).collect();
        let next_obj = distance_sum(&next, points);
        if next_obj < objective {
            let gain = objective - next_obj;
            z = next;
            objective = next_obj;
            if gain < tol {
                break;
            }
        } else {
            break;
        }
    }

    // Weiszfeld crawls towards optima located on a data point.
    for p in points {
        let p = p.as_ref();
        let obj = distance_sum(p, points);
        if obj < objective {
            objective = obj;
            z = p.to_vec();
        }
    }

    Ok(GeometricMedian {
        point: z,
        objective,
        iterations,
    })
}

/// Per-bit majority vote over rounded frames; ties (`sum == F/2`) vote 1.
pub fn bit_median(logits: &LogitMatrix) -> Vec<bool> {
    let f = logits.num_frames();
    let mut ones = vec![0usize; logits.num_bits()];
    for row in logits.rows() {
        for (o, b) in ones.iter_mut().zip(round_logits(row)) {
            *o += usize::from(b);
        }
    }
    ones.into_iter().map(|o| 2 * o >= f).collect()
}

fn check_bits(logits: &LogitMatrix, wg: &Watermark) -> Result<()> {
    if logits.num_bits() != wg.len() {
        return Err(Error::dims(
            format!("{} logits per frame", wg.len()),
            logits.num_bits(),
        ));
    }
    Ok(())
}

/// Matching-bit count of every rounded frame against `wg`.
pub fn frame_matches(logits: &LogitMatrix, wg: &Watermark) -> Result<Vec<usize>> {
    check_bits(logits, wg)?;
    logits
        .rows()
        .map(|row| matching_bits(&round_logits(row), wg.bits()))
        .collect()
}

/// Per-frame bitwise accuracies.
pub fn frame_accuracies(logits: &LogitMatrix, wg: &Watermark) -> Result<Vec<f64>> {
    let n = wg.len() as f64;
    Ok(frame_matches(logits, wg)?
        .into_iter()
        .map(|m| m as f64 / n)
        .collect())
}

pub fn ba_mean(logits: &LogitMatrix, wg: &Watermark) -> Result<f64> {
    let acc = frame_accuracies(logits, wg)?;
    Ok(acc.iter().sum::<f64>() / acc.len() as f64)
}

/// Statistical median of per-frame accuracies; even counts average the two
/// middle order statistics.
pub fn ba_median(logits: &LogitMatrix, wg: &Watermark) -> Result<f64> {
    let (lo, hi) = median_match_pair(&frame_matches(logits, wg)?);
    Ok((lo + hi) as f64 / (2 * wg.len()) as f64)
}

/// The two middle order statistics (equal for odd counts).
fn median_match_pair(matches: &[usize]) -> (usize, usize) {
    let mut sorted = matches.to_vec();
    sorted.sort_unstable();
    let f = sorted.len();
    if f % 2 == 1 {
        (sorted[f / 2], sorted[f / 2])
    } else {
        (sorted[f / 2 - 1], sorted[f / 2])
    }
}

/// `d_i = 1` iff frame `i` has `BA >= tau`.
pub fn frame_decisions(logits: &LogitMatrix, wg: &Watermark, tau: Tau) -> Result<Vec<bool>> {
    let n = wg.len();
    Ok(frame_matches(logits, wg)?
        .into_iter()
        .map(|m| tau.accepts(m as u64, n as u64))
        .collect())
}

/// Applies `strategy` to a logit matrix.
pub fn detect(
    logits: &LogitMatrix,
    wg: &Watermark,
    strategy: &AggregationStrategy,
) -> Result<DetectionResult> {
    check_bits(logits, wg)?;
    let n = wg.len() as u64;
    let f = logits.num_frames();
    let tau = strategy.tau;

    let aggregated_bits = |bits: Vec<bool>| -> Result<(bool, f64)> {
        let m = matching_bits(&bits, wg.bits())? as u64;
        Ok((tau.accepts(m, n), m as f64 / n as f64))
    };

    let (watermarked, statistic, decisions) = match strategy.kind {
        StrategyKind::LogitMean => {
            let (w, s) = aggregated_bits(round_logits(&logit_mean(logits)))?;
            (w, s, None)
        }
        StrategyKind::LogitMedian => {
            let rows: Vec<&[f64]> = logits.rows().collect();
            let gm = geometric_median(&rows, GEOMEDIAN_TOL, GEOMEDIAN_MAX_ITER)?;
            let (w, s) = aggregated_bits(round_logits(&gm.point))?;
            (w, s, None)
        }
        StrategyKind::BitMedian => {
            let (w, s) = aggregated_bits(bit_median(logits))?;
            (w, s, None)
        }
        StrategyKind::BaMean => {
            let matches = frame_matches(logits, wg)?;
            let total: u64 = matches.iter().map(|&m| m as u64).sum();
            let w = tau.accepts(total, n * f as u64);
            (w, total as f64 / (n * f as u64) as f64, None)
        }
        StrategyKind::BaMedian => {
            let (lo, hi) = median_match_pair(&frame_matches(logits, wg)?);
            let sum = (lo + hi) as u64;
            (tau.accepts(sum, 2 * n), sum as f64 / (2 * n) as f64, None)
        }
        StrategyKind::DetectionMedian => {
            let d = frame_decisions(logits, wg, tau)?;
            let count = d.iter().filter(|&&x| x).count();
            (2 * count >= f, count as f64, Some(d))
        }
        StrategyKind::DetectionThreshold => {
            let k = strategy
                .k
                .ok_or_else(|| Error::param("detection-threshold requires k"))?;
            if k == 0 || k > f {
                return Err(Error::param(format!(
                    "detection threshold k = {k} must lie in [1, {f}]"
                )));
            }
            let d = frame_decisions(logits, wg, tau)?;
            let count = d.iter().filter(|&&x| x).count();
            (count >= k, count as f64, Some(d))
        }
    };

    Ok(DetectionResult {
        verdict: Verdict::from_bool(watermarked),
        statistic,
        per_frame_decisions: decisions,
        strategy: strategy.kind,
    })
}
