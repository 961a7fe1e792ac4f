//! Sub-layer anti-aliasing for flat-sliced FFF toolpaths.
//!
//! Vertices of flat-sliced paths are pushed up or down by at most part of a
//! layer so that top surfaces follow the model instead of stepping, flow
//! and feedrate are rescaled to match, and neighboring paths are re-ordered
//! so that the nozzle never drags across already printed, higher tracks.

pub mod antialias;
pub mod evaluate;
pub mod gcode;
pub mod geometry;
pub mod ordering;
pub mod pipeline;
