//! Video-level perturbations that act on the frame sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::video::{Frame, Video};

/// Replaces frame `i` by the mean of the `n` frames centred on it, with the
/// window clipped at both ends of the video.
pub fn frame_average(video: &Video, n: usize) -> Result<Video> {
    if n == 0 || n.is_multiple_of(2) {
        return Err(Error::param(format!("frame window must be odd and >= 1, got {n}")));
    }
    if n == 1 {
        return Ok(video.clone());
    }
    let half = n / 2;
    let count = video.num_frames();
    let shape = video.shape();
    let frames = (0..count)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(count - 1);
            let mut acc = vec![0.0; shape.len()];
            for f in &video.frames()[lo..=hi] {
                for (a, &v) in acc.iter_mut().zip(f.data()) {
                    *a += v;
                }
            }
            let len = (hi - lo + 1) as f64;
            acc.iter_mut().for_each(|a| *a /= len);
            Frame::clamped(shape, acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Video::new(frames)
}

/// Sweeps left to right; with probability `p` frame `i` is exchanged with a
/// uniformly chosen existing neighbour.
pub fn frame_swap(video: &Video, p: f64, seed: u64) -> Result<Video> {
    check_probability(p)?;
    let mut frames = video.frames().to_vec();
    let count = frames.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        if rng.gen::<f64>() >= p {
            continue;
        }
        let neighbours: Vec<usize> = [i.checked_sub(1), (i + 1 < count).then_some(i + 1)]
            .into_iter()
            .flatten()
            .collect();
        if neighbours.is_empty() {
            continue;
        }
        let j = neighbours[rng.gen_range(0..neighbours.len())];
        frames.swap(i, j);
    }
    Video::new(frames)
}

/// Drops each frame independently with probability `p`; keeps the first
/// frame if every frame would be dropped.
pub fn frame_removal(video: &Video, p: f64, seed: u64) -> Result<Video> {
    check_probability(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<Frame> = video
        .frames()
        .iter()
        .filter(|_| rng.gen::<f64>() >= p)
        .cloned()
        .collect();
    if kept.is_empty() {
        kept.push(video.frame(0).clone());
    }
    Video::new(kept)
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::FrameShape;

    fn ramp(frames: usize) -> Video {
        let shape = FrameShape::new(2, 3, 1).unwrap();
        Video::new(
            (0..frames)
                .map(|t| Frame::filled(shape, t as f64 / frames as f64))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn average_window() {
        let v = ramp(6);
        assert_eq!(frame_average(&v, 1).unwrap(), v);
        let out = frame_average(&v, 3).unwrap();
        let expected = (1.0 + 2.0 + 3.0) / 3.0 / 6.0;
        assert!((out.frame(2).get(0, 0, 0) - expected).abs() < 1e-12);
        // clipped window at the start averages frames 0 and 1
        assert!((out.frame(0).get(0, 0, 0) - 0.5 / 6.0).abs() < 1e-12);
        assert!(frame_average(&v, 2).is_err());
    }

    #[test]
    fn swap_preserves_multiset() {
        let v = ramp(9);
        assert_eq!(frame_swap(&v, 0.0, 1).unwrap(), v);
        let out = frame_swap(&v, 0.7, 5).unwrap();
        let mut a: Vec<f64> = out.frames().iter().map(|f| f.get(0, 0, 0)).collect();
        let mut b: Vec<f64> = v.frames().iter().map(|f| f.get(0, 0, 0)).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert_eq!(out, frame_swap(&v, 0.7, 5).unwrap());
    }

    #[test]
    fn removal_edges() {
        let v = ramp(5);
        assert_eq!(frame_removal(&v, 0.0, 2).unwrap(), v);
        let one = frame_removal(&v, 1.0, 2).unwrap();
        assert_eq!(one.num_frames(), 1);
        assert_eq!(one.frame(0), v.frame(0));
        assert!(frame_removal(&v, 1.1, 0).is_err());
    }

    #[test]
    fn removal_count_within_binomial_bounds() {
        // total retained over all seeds is Binomial(40 * 200, 1 - p)
        let v = ramp(40);
        let p = 0.3;
        let trials = 40.0 * 200.0;
        let kept: usize = (0..200)
            .map(|seed| frame_removal(&v, p, seed).unwrap().num_frames())
            .sum();
        let mean = trials * (1.0 - p);
        let sd = (trials * p * (1.0 - p)).sqrt();
        assert!((kept as f64 - mean).abs() <= 3.0 * sd, "{kept} vs {mean}");
    }
}
