//! Watermark removal and forgery attacks.
//!
//! White-box attacks use the codec's analytic gradient. Black-box attacks
//! only see a detector through [`ScoreOracle`] or [`LabelOracle`].

mod init;
mod oracle;
mod square;
mod trace;
mod triangle;
mod whitebox;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregate::Verdict;
use crate::error::{Error, Result};

pub use init::{forgery_init_unrelated, removal_init_gaussian, GaussianInit, INIT_SIGMA_CAP, INIT_SIGMA_GROWTH, INIT_SIGMA_START};
pub use oracle::{Detector, LabelOracle, ScoreOracle};
pub use square::{square_attack, SquareConfig};
pub use trace::{AttackFailure, AttackTrace, TracePoint, TraceSummary};
pub use triangle::{triangle_attack, TriangleConfig};
pub use whitebox::{
    attack_loss, epsilon_grid, min_epsilon_search, parse_frame_mask, pgd_bounded, subset_arbitrary, MinEpsilon,
    PgdOutcome, WhiteboxConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMode {
    /// Make a watermarked video read as unwatermarked.
    Removal,
    /// Make an unwatermarked video read as watermarked.
    Forgery,
}

impl AttackMode {
    /// The verdict the attacker is trying to reach.
    pub fn goal(self) -> Verdict {
        match self {
            AttackMode::Removal => Verdict::Unwatermarked,
            AttackMode::Forgery => Verdict::Watermarked,
        }
    }

    /// `+1` when the attack wants the detector score to fall, `-1` otherwise.
    pub(crate) fn descent_sign(self) -> f64 {
        match self {
            AttackMode::Removal => 1.0,
            AttackMode::Forgery => -1.0,
        }
    }
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackMode::Removal => "removal",
            AttackMode::Forgery => "forgery",
        })
    }
}

impl FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "removal" => Ok(AttackMode::Removal),
            "forgery" => Ok(AttackMode::Forgery),
            other => Err(Error::param(format!("unknown attack mode {other:?}"))),
        }
    }
}
