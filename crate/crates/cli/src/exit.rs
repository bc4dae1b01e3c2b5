//! Process exit codes by error category.
//!
//! | code | meaning |
//! |---|---|
//! | 1 | anything else |
//! | 2 | bad config or usage |
//! | 3 | file system I/O |
//! | 4 | malformed data, checkpoint, report or CSV |
//! | 5 | training diverged |
//! | 6 | internal contract violation |

use softtarget_core::Error;

pub const OTHER: i32 = 1;
pub const USAGE: i32 = 2;
pub const IO: i32 = 3;
pub const DATA: i32 = 4;
pub const DIVERGED: i32 = 5;
pub const CONTRACT: i32 = 6;

/// Raised by the CLI itself for bad argument combinations.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) => USAGE,
                Error::Io { .. } => IO,
                Error::Idx(_) | Error::Checkpoint(_) | Error::Json(_) | Error::Csv(_) => DATA,
                Error::Diverged { .. } => DIVERGED,
                Error::Contract(_) | Error::ShapeMismatch { .. } => CONTRACT,
            };
        }
        if cause.is::<std::io::Error>() {
            return IO;
        }
    }
    OTHER
}
