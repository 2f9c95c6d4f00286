//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an input value or shape was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// No frame triplet with the required relative phases could be found.
    #[error("no qualifying frame triplet: {0}")]
    TripletNotFound(TripletSearch),

    /// A binary file failed to parse; `offset` is the byte position of the failure.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A numerical stage failed to produce a finite result.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Diagnostic payload for a failed triplet search: the closest candidates
/// per phase target, if any frame came near.
#[derive(Debug, Clone, Default)]
pub struct TripletSearch {
    /// Index of the zeroth (reference) frame, when one was established.
    pub zeroth: Option<usize>,
    /// Closest candidate to the 120-degree target: (frame index, relative phase).
    pub best_120: Option<(usize, f64)>,
    /// Closest candidate to the 240-degree target.
    pub best_240: Option<(usize, f64)>,
    /// Number of frames that passed the contrast floor.
    pub usable_frames: usize,
}

impl std::fmt::Display for TripletSearch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.zeroth {
            Some(z) => write!(f, "zeroth frame {z}, {} usable frames", self.usable_frames)?,
            None => write!(f, "no discernible zeroth frame")?,
        }
        match self.best_120 {
            Some((i, p)) => write!(f, "; best 120\u{b0} candidate: frame {i} at {p:.1}\u{b0}")?,
            None => write!(f, "; no candidate near 120\u{b0}")?,
        }
        match self.best_240 {
            Some((i, p)) => write!(f, "; best 240\u{b0} candidate: frame {i} at {p:.1}\u{b0}")?,
            None => write!(f, "; no candidate near 240\u{b0}")?,
        }
        Ok(())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
