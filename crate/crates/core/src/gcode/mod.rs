//! G-code ingestion and emission.
//!
//! Deposition runs (consecutive `G1` moves that extrude while moving in XY)
//! become [`Toolpath`]s grouped into layers; every other line is kept as an
//! item in its original position so untouched content round-trips exactly.

mod emit;
mod parse;
mod profile;
mod types;

pub use emit::emit_gcode;
pub use parse::parse_gcode;
pub use profile::{PrinterProfile, ProfileError};
pub use types::*;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GcodeError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: arc moves (G2/G3) are not supported; linearize arcs in the slicer")]
    Arc { line: usize },
}

/// Per-layer view over the parsed toolpaths.
pub fn extract_paths(program: &PrintProgram) -> Vec<&[Toolpath]> {
    program.layers.iter().map(|l| l.paths.as_slice()).collect()
}
