//! Measuring results: surface error maps, print time, the slope limit of the
//! method, and synthetic test parts.

mod error_map;
pub mod fixtures;
mod time;

pub use error_map::{error_map, tracks_from_program, ErrorMap, ErrorSample, ErrorSummary, PrintedTrack, TrackIndex, VIS_CLAMP};
pub use fixtures::{make_fixture, Fixture, FixtureKind};
pub use time::{estimate_print_time, estimate_print_time_text};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no printed tracks to measure against")]
    EmptyTracks,
    #[error("line {line}: move of {length} mm at zero feedrate")]
    ZeroFeedrate { line: usize, length: f64 },
    #[error("invalid fixture: {0}")]
    BadFixture(String),
    #[error("sampling density must be positive")]
    BadDensity,
}

/// Steepest surface slope, in radians, that tracks `w` apart can still
/// follow within one layer of thickness `h`.
pub fn critical_angle(h: f64, w: f64) -> f64 {
    (h / w).atan()
}
