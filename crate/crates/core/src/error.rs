//! Crate-wide error type.
//!
//! Construction and verification never guess: every infeasibility or contract
//! breach surfaces as a distinct variant carrying the offending coordinates.

use thiserror::Error;

use crate::model::Violation;
use crate::richness::RichnessReport;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// The system breaks a structural invariant; all violations are listed.
    #[error("invalid system: {}", summarize(.0))]
    Validation(Vec<Violation>),

    /// Text input could not be parsed.
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    /// A partition cell covers no mass.
    #[error("cell {cell} has zero measure")]
    ZeroCell { cell: u32 },

    /// A rotation breakpoint does not land on the orbit grid.
    #[error("breakpoint {breakpoint} does not lie on the 1/{q} grid")]
    BreakpointOffGrid { breakpoint: String, q: u64 },

    /// No supplied convergent produced a rich system.
    #[error("no supplied convergent is rich; last height tried was {last_q}")]
    Exhausted { last_q: u64 },

    /// Some column repeats a cell fewer than the required number of times.
    #[error("system is not rich enough: {report}")]
    NotRich { report: RichnessReport },

    /// A column is too short to hold both staircases and a middle region.
    #[error("column {column} height {height} is too short for N={n}; needs at least {required}")]
    TooShort {
        column: String,
        height: u32,
        n: u32,
        required: u32,
    },

    /// A base split fraction came out negative.
    #[error("base fraction for cell {cell} is negative (numerator {numerator})")]
    NegativeMass { cell: u32, numerator: String },

    /// The outer staircases already over-skip a cell.
    #[error(
        "column {column} block {block}: outer regions net-skip cell {cell} {outer} times, over the target {target}"
    )]
    QuotaNegative {
        column: String,
        block: u32,
        cell: u32,
        outer: i64,
        target: u64,
    },

    /// The middle scan ran out of skippable levels for a cell.
    #[error("column {column} block {block}: {remaining} skips of cell {cell} could not be placed")]
    QuotaUnmet {
        column: String,
        block: u32,
        cell: u32,
        remaining: u64,
    },

    /// Internal guard: the assembled selection failed its own gap audit.
    #[error("column {column} block {block}: selection audit failed: {detail}")]
    MisalignedHandoff {
        column: String,
        block: u32,
        detail: String,
    },

    /// The sweep could not place every required off-base rung.
    #[error(
        "column {column} block {block}: {remaining} marked rungs of cell {cell} could not be placed"
    )]
    AQuotaUnmet {
        column: String,
        block: u32,
        cell: u32,
        remaining: u64,
    },

    /// The brute-force grid would exceed the configured atom budget.
    #[error("grid needs {atoms} atoms, over the limit of {limit}")]
    GridTooLarge { atoms: String, limit: u64 },

    /// A selection does not match the system it is being checked against.
    #[error("selection does not match the system: {0}")]
    SelectionMismatch(String),

    /// Malformed report or argument text.
    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

fn summarize(violations: &[Violation]) -> String {
    let shown: Vec<String> = violations.iter().take(3).map(|v| v.to_string()).collect();
    if violations.len() > 3 {
        format!(
            "{} (and {} more)",
            shown.join("; "),
            violations.len() - 3
        )
    } else {
        shown.join("; ")
    }
}
