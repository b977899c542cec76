//! Score-based random search over ±ε square patches (Square Attack), with a
//! video treated as a batch of frames that share one spatial perturbation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttackFailure, AttackMode, AttackTrace, ScoreOracle, TracePoint};
use crate::error::{Error, Result};
use crate::video::{Frame, Video};

/// Fractions of the query budget after which the square side is halved.
pub const HALVING_POINTS: [f64; 4] = [0.1, 0.25, 0.5, 0.75];
const SIDE_AREA_FRACTION: f64 = 0.8;
const SIDE_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareConfig {
    pub mode: AttackMode,
    pub epsilon: f64,
    pub max_queries: u64,
    pub seed: u64,
    /// Draw an independent perturbation for every frame instead of one
    /// shared across the video.
    #[serde(default)]
    pub per_frame: bool,
    /// Overrides the initial square side `ceil(sqrt(0.8 H W) * 0.1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_side: Option<usize>,
}

impl SquareConfig {
    pub fn new(mode: AttackMode, epsilon: f64, max_queries: u64, seed: u64) -> Self {
        Self {
            mode,
            epsilon,
            max_queries,
            seed,
            per_frame: false,
            initial_side: None,
        }
    }

    pub fn initial_side_for(&self, height: usize, width: usize) -> usize {
        let side = self
            .initial_side
            .unwrap_or_else(|| ((SIDE_AREA_FRACTION * (height * width) as f64).sqrt() * SIDE_SCALE).ceil() as usize);
        side.clamp(1, height.min(width))
    }
}

/// Square side after `used` of `budget` queries.
pub fn square_side(initial: usize, used: u64, budget: u64) -> usize {
    let fraction = used as f64 / budget as f64;
    let halvings = HALVING_POINTS.iter().filter(|&&p| fraction >= p).count();
    (initial >> halvings).max(1)
}

struct Search<'a> {
    origin: &'a Video,
    layers: usize,
}

impl Search<'_> {
    fn candidate(&self, delta: &[Vec<f64>]) -> Result<Video> {
        let frames = self
            .origin
            .frames()
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let d = &delta[if self.layers == 1 { 0 } else { i }];
                let data = f.data().iter().zip(d).map(|(x, dx)| x + dx).collect();
                Frame::clamped(f.shape(), data)
            })
            .collect::<Result<Vec<_>>>()?;
        Video::new(frames)
    }
}

/// Runs Square Attack against `oracle`.
///
/// The first query scores the unmodified input and the second a vertical
/// stripe initialisation. Every later query moves one square window of one
/// perturbation layer to a fresh random sign per channel. A candidate
/// replaces the current best only if it strictly improves the score in the
/// mode's direction (down for removal, up for forgery). The recorded history
/// holds the best score after each query.
pub fn square_attack(
    video: &Video,
    oracle: &dyn ScoreOracle,
    cfg: &SquareConfig,
) -> std::result::Result<AttackTrace, AttackFailure> {
    let mut trace = AttackTrace {
        best_video: video.clone(),
        history: Vec::new(),
        queries_used: 0,
    };
    let start = oracle.queries();
    let outcome = run(video, oracle, cfg, &mut trace, start);
    trace.queries_used = oracle.queries() - start;
    match outcome {
        Ok(()) => Ok(trace),
        Err(error) => Err(AttackFailure {
            error,
            partial: Box::new(trace),
        }),
    }
}

fn run(video: &Video, oracle: &dyn ScoreOracle, cfg: &SquareConfig, trace: &mut AttackTrace, start: u64) -> Result<()> {
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be > 0, got {}", cfg.epsilon)));
    }
    if cfg.max_queries == 0 {
        return Err(Error::param("Square Attack needs at least one query"));
    }
    let shape = video.shape();
    let (h, w, ch) = (shape.height, shape.width, shape.channels);
    let layers = if cfg.per_frame { video.num_frames() } else { 1 };
    let search = Search { origin: video, layers };
    let direction = cfg.mode.descent_sign();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best_score = oracle.score(video)?;
    trace.history.push(TracePoint {
        query_index: oracle.queries() - start,
        value: best_score,
    });
    if cfg.max_queries == 1 {
        return Ok(());
    }

    // vertical stripes: one random sign per column and channel
    let stripes: Vec<Vec<f64>> = (0..layers)
        .map(|_| {
            let columns: Vec<f64> = (0..w * ch)
                .map(|_| if rng.gen::<bool>() { cfg.epsilon } else { -cfg.epsilon })
                .collect();
            (0..h).flat_map(|_| columns.iter().copied()).collect()
        })
        .collect();
    let mut accept = |candidate_delta: Vec<Vec<f64>>, delta: &mut Vec<Vec<f64>>, trace: &mut AttackTrace| -> Result<()> {
        let candidate = search.candidate(&candidate_delta)?;
        let score = oracle.score(&candidate)?;
        if direction * score < direction * best_score {
            best_score = score;
            *delta = candidate_delta;
            trace.best_video = candidate;
        }
        trace.history.push(TracePoint {
            query_index: oracle.queries() - start,
            value: best_score,
        });
        Ok(())
    };
    let mut delta = vec![vec![0.0; shape.len()]; layers];
    accept(stripes, &mut delta, trace)?;

    let initial = cfg.initial_side_for(h, w);
    for used in 2..cfg.max_queries {
        let side = square_side(initial, used, cfg.max_queries);
        let layer = rng.gen_range(0..layers);
        let top = rng.gen_range(0..=h - side);
        let left = rng.gen_range(0..=w - side);
        let signs: Vec<f64> = (0..ch)
            .map(|_| if rng.gen::<bool>() { cfg.epsilon } else { -cfg.epsilon })
            .collect();
        let mut proposal = delta.clone();
        for y in top..top + side {
            for x in left..left + side {
                for (c, &s) in signs.iter().enumerate() {
                    proposal[layer][shape.index(y, x, c)] = s;
                }
            }
        }
        accept(proposal, &mut delta, trace)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn side_schedule() {
        assert_eq!(square_side(6, 0, 1000), 6);
        assert_eq!(square_side(6, 99, 1000), 6);
        assert_eq!(square_side(6, 100, 1000), 3);
        assert_eq!(square_side(6, 250, 1000), 1);
        assert_eq!(square_side(6, 999, 1000), 1);
        let cfg = SquareConfig::new(AttackMode::Removal, 0.05, 10, 0);
        assert_eq!(cfg.initial_side_for(64, 64), 6);
        assert_eq!(cfg.initial_side_for(32, 32), 3);
        assert_eq!(cfg.initial_side_for(2, 2), 1);
    }
}
