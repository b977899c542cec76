//! Label-only Triangle Attack on a video flattened to one long vector.
//!
//! After a binary line search between the target and the initial adversarial
//! video, each iteration rotates the current perturbation `d` by an angle
//! `theta` inside the plane spanned by `d` and a random direction `u`:
//!
//! ```text
//! candidate = target + |d| cos(theta) (cos(theta) d/|d| + sin(theta) u)
//! ```
//!
//! Candidates are clipped to the current ℓ∞ ball around the target, so the
//! accepted ℓ∞ distance never grows. An accepted rotation is followed by one
//! attempt to scale the perturbation by `cos(theta)` toward the target.
//! `theta` grows after an accepted rotation and shrinks after two rejected
//! ones (`u` and `-u`).

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttackFailure, AttackTrace, LabelOracle, TracePoint};
use crate::aggregate::Verdict;
use crate::error::{Error, Result};
use crate::video::Video;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriangleConfig {
    pub max_queries: u64,
    pub seed: u64,
    #[serde(default = "default_angle")]
    pub initial_angle: f64,
    #[serde(default = "default_grow")]
    pub grow: f64,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    /// Queries spent on the initial binary line search.
    #[serde(default = "default_line_steps")]
    pub line_search_steps: u64,
}

fn default_angle() -> f64 {
    PI / 6.0
}
fn default_grow() -> f64 {
    1.1
}
fn default_shrink() -> f64 {
    0.9
}
fn default_line_steps() -> u64 {
    10
}

const MIN_ANGLE: f64 = 1e-4;
const MAX_ANGLE: f64 = 0.45 * PI;

impl TriangleConfig {
    pub fn new(max_queries: u64, seed: u64) -> Self {
        Self {
            max_queries,
            seed,
            initial_angle: default_angle(),
            grow: default_grow(),
            shrink: default_shrink(),
            line_search_steps: default_line_steps(),
        }
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct State<'a> {
    target: &'a [f64],
    video: &'a Video,
    oracle: &'a dyn LabelOracle,
    desired: Verdict,
    start: u64,
    budget: u64,
    current: Vec<f64>,
    radius: f64,
}

impl State<'_> {
    fn used(&self) -> u64 {
        self.oracle.queries() - self.start
    }

    fn exhausted(&self) -> bool {
        self.used() >= self.budget
    }

    /// Queries the candidate and moves to it when it keeps the desired label
    /// and does not increase the ℓ∞ distance.
    fn try_move(&mut self, candidate: Vec<f64>, trace: &mut AttackTrace) -> Result<bool> {
        let shape = self.video.shape();
        let video = Video::from_flat(shape, self.video.num_frames(), &candidate)?;
        let ok = self.oracle.label(&video)? == self.desired;
        let dist = linf(&candidate, self.target);
        let accepted = ok && dist <= self.radius;
        if accepted {
            self.current = candidate;
            self.radius = dist;
            trace.best_video = video;
        }
        trace.history.push(TracePoint {
            query_index: self.used(),
            value: self.radius,
        });
        Ok(accepted)
    }

    fn towards_target(&self, t: f64) -> Vec<f64> {
        self.target
            .iter()
            .zip(&self.current)
            .map(|(x, c)| x + t * (c - x))
            .collect()
    }
}

/// Runs Triangle Attack from `init`, which must already carry `desired`.
/// Running out of queries is not an error: the best iterate so far is
/// returned.
pub fn triangle_attack(
    target: &Video,
    oracle: &dyn LabelOracle,
    init: &Video,
    desired: Verdict,
    cfg: &TriangleConfig,
) -> std::result::Result<AttackTrace, AttackFailure> {
    let mut trace = AttackTrace {
        best_video: init.clone(),
        history: Vec::new(),
        queries_used: 0,
    };
    let start = oracle.queries();
    let outcome = run(target, oracle, init, desired, cfg, &mut trace, start);
    trace.queries_used = oracle.queries() - start;
    match outcome {
        Ok(()) => Ok(trace),
        Err(error) => Err(AttackFailure {
            error,
            partial: Box::new(trace),
        }),
    }
}

fn run(
    target: &Video,
    oracle: &dyn LabelOracle,
    init: &Video,
    desired: Verdict,
    cfg: &TriangleConfig,
    trace: &mut AttackTrace,
    start: u64,
) -> Result<()> {
    if target.shape() != init.shape() || target.num_frames() != init.num_frames() {
        return Err(Error::dims(
            format!("{} frames of {}", target.num_frames(), target.shape()),
            format!("{} frames of {}", init.num_frames(), init.shape()),
        ));
    }
    if cfg.max_queries == 0 {
        return Err(Error::param("Triangle Attack needs at least one query"));
    }
    if !(cfg.initial_angle > 0.0 && cfg.initial_angle < PI / 2.0) {
        return Err(Error::param(format!("initial angle must lie in (0, pi/2), got {}", cfg.initial_angle)));
    }
    let target_flat = target.to_flat();
    let init_flat = init.to_flat();
    let label = oracle.label(init)?;
    if label != desired {
        return Err(Error::Initialization(format!(
            "initial video is labelled {label}, expected {desired}"
        )));
    }
    let mut state = State {
        target: &target_flat,
        video: target,
        oracle,
        desired,
        start,
        budget: cfg.max_queries,
        radius: linf(&init_flat, &target_flat),
        current: init_flat,
    };
    trace.history.push(TracePoint {
        query_index: state.used(),
        value: state.radius,
    });
    if state.radius == 0.0 {
        return Ok(());
    }

    // binary search on the segment between the target (t = 0) and the
    // current iterate (t = 1)
    let (mut lo, mut hi) = (0.0, 1.0);
    let anchor = state.current.clone();
    for _ in 0..cfg.line_search_steps {
        if state.exhausted() {
            return Ok(());
        }
        let mid = 0.5 * (lo + hi);
        let candidate: Vec<f64> = target_flat
            .iter()
            .zip(&anchor)
            .map(|(x, a)| x + mid * (a - x))
            .collect();
        if state.try_move(candidate, trace)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = cfg.initial_angle;
    while !state.exhausted() {
        let d: Vec<f64> = state.current.iter().zip(&target_flat).map(|(c, x)| c - x).collect();
        let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            break;
        }
        let d_hat: Vec<f64> = d.iter().map(|v| v / r).collect();
        // random sign direction, orthogonal to d
        let mut u: Vec<f64> = (0..d.len()).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let proj: f64 = u.iter().zip(&d_hat).map(|(a, b)| a * b).sum();
        u.iter_mut().zip(&d_hat).for_each(|(a, b)| *a -= proj * b);
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        u.iter_mut().for_each(|v| *v /= norm);

        let mut rotated = false;
        for side in [1.0, -1.0] {
            if state.exhausted() {
                return Ok(());
            }
            let (c, s) = (theta.cos(), theta.sin());
            let radius = state.radius;
            let candidate: Vec<f64> = target_flat
                .iter()
                .zip(d_hat.iter().zip(&u))
                .map(|(x, (dh, uh))| {
                    let step = (r * c * (c * dh + side * s * uh)).clamp(-radius, radius);
                    (x + step).clamp(0.0, 1.0)
                })
                .collect();
            if state.try_move(candidate, trace)? {
                rotated = true;
                break;
            }
        }
        if rotated {
            theta = (theta * cfg.grow).min(MAX_ANGLE);
            if state.exhausted() {
                return Ok(());
            }
            let shrunk = state.towards_target(theta.cos());
            state.try_move(shrunk, trace)?;
        } else {
            theta = (theta * cfg.shrink).max(MIN_ANGLE);
        }
    }
    Ok(())
}
