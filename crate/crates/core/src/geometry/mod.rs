//! Reference surface handling: STL ingestion, the triangle mesh, and the
//! vertical ray index used to measure sub-layer distances from toolpath
//! vertices to the model surface.

mod index;
mod mesh;
mod stl;

pub use index::VerticalRayIndex;
pub use mesh::{Facing, LoadReport, SurfaceHit, TriangleMesh, DEGENERATE_AREA, HIT_DEDUP_TOL};
pub use stl::{detect_format, load_mesh, write_stl_ascii, write_stl_binary, StlFormat};

use thiserror::Error;

pub type Point = nalgebra::Point3<f64>;
pub type Vector = nalgebra::Vector3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("STL parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("mesh has no usable triangles ({degenerate} degenerate, {non_finite} non-finite dropped)")]
    Empty { degenerate: usize, non_finite: usize },
}

/// Casts a vertical line through `query` and returns the surface crossing
/// closest to `query.z`, using the index to limit candidate triangles.
pub fn cast_vertical(index: &VerticalRayIndex, mesh: &TriangleMesh, query: &Point) -> Option<SurfaceHit> {
    index.cast(mesh, query)
}
