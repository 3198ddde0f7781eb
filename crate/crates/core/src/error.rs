use std::fmt;
use std::path::PathBuf;

use crate::tensor::Scenario;

/// Location of one cell in an eigen-gain grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellIndex {
    pub position: u32,
    pub scenario: Scenario,
    pub snapshot: usize,
    pub subcarrier: usize,
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(u={}, s={}, i={}, k={})",
            self.position, self.scenario, self.snapshot, self.subcarrier
        )
    }
}

fn list_cells(cells: &[CellIndex]) -> String {
    const SHOWN: usize = 8;
    let mut out: Vec<String> = cells.iter().take(SHOWN).map(|c| c.to_string()).collect();
    if cells.len() > SHOWN {
        out.push(format!("... {} more", cells.len() - SHOWN));
    }
    out.join(", ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A ratio metric hit a zero (or non-positive) denominator cell.
    #[error("degenerate grid: {} zero cell(s) {}", .cells.len(), list_cells(.cells))]
    DegenerateCells { cells: Vec<CellIndex> },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap with the pipeline stage that produced the error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
