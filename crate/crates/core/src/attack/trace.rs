use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregate::Verdict;
use crate::error::{Error, Result};
use crate::video::Video;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// 1-based index of the oracle query.
    pub query_index: u64,
    /// Best score so far (Square) or accepted ℓ∞ distance (Triangle).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    pub best_video: Video,
    pub history: Vec<TracePoint>,
    pub queries_used: u64,
}

impl AttackTrace {
    pub fn final_value(&self) -> Option<f64> {
        self.history.last().map(|p| p.value)
    }

    /// Last recorded value at or before `query_index`.
    pub fn value_at(&self, query_index: u64) -> Option<f64> {
        self.history
            .iter()
            .take_while(|p| p.query_index <= query_index)
            .last()
            .map(|p| p.value)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["query_index", "value"])?;
        for p in &self.history {
            w.write_record([p.query_index.to_string(), p.value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::at_path(path, e))?;
        self.write_csv(file)
    }
}

/// JSON summary written next to the trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub attack: String,
    pub mode: String,
    pub final_verdict: Verdict,
    pub queries: u64,
    pub final_linf: f64,
    pub final_value: Option<f64>,
}

/// An attack error together with everything recorded before it happened.
#[derive(Debug)]
pub struct AttackFailure {
    pub error: Error,
    pub partial: Box<AttackTrace>,
}

impl fmt::Display for AttackFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (after {} queries)",
            self.error, self.partial.queries_used
        )
    }
}

impl std::error::Error for AttackFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<AttackFailure> for Error {
    fn from(f: AttackFailure) -> Self {
        f.error
    }
}
