//! Print ordering that keeps the nozzle away from neighboring tracks already
//! printed higher, while placing as few (and as well hidden) seams as possible.

mod graph;
mod relink;
mod search;
mod split;

pub use graph::{build_constraint_graph, ConstraintGraph};
pub use relink::{order_layer, relink_travels, LayerOrderReport};
pub use search::{enumerate_orders, evaluate_order, order_paths, OrderResult, DEFAULT_BUDGET};
pub use split::{closest_approach, find_neighbors, split_paths, SubPath};

use std::f64::consts::{PI, TAU};

use log::warn;
use thiserror::Error;

use crate::gcode::{PrinterProfile, Toolpath};

/// Height differences below this are ties.
pub const HEIGHT_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum OrderingError {
    #[error("nozzle side inclination must be in (0, 90] degrees, got {0} rad")]
    BadAngle(f64),
    #[error("constraint graph has a cycle through subpaths {0:?}")]
    Cycle(Vec<usize>),
}

/// Horizontal distance below which two paths can collide with the nozzle:
/// half the nozzle plus half the track, widened by the flange slope over a
/// height difference `dh`.
pub fn interference_threshold(profile: &PrinterProfile, dh: f64) -> Result<f64, OrderingError> {
    let a = profile.alpha;
    if !(a > 0.0 && a <= PI / 2.0 + 1e-12) {
        return Err(OrderingError::BadAngle(a));
    }
    let cot = if (a - PI / 2.0).abs() < 1e-12 { 0.0 } else { 1.0 / a.tan() };
    Ok((profile.tau + profile.d) / 2.0 + dh * cot)
}

/// Visibility weight of a seam opening by `theta` to the outside.
pub fn gap_cost(theta: f64) -> f64 {
    let t = if (0.0..=TAU).contains(&theta) {
        theta
    } else {
        warn!("gap angle {theta} outside [0, 2pi], clamped");
        theta.clamp(0.0, TAU)
    };
    1.0 + t / TAU
}

fn signed_area(path: &Toolpath) -> f64 {
    let v = &path.vertices;
    (0..v.len()).map(|i| {
        let (a, b) = (&v[i], &v[(i + 1) % v.len()]);
        a.x * b.y - b.x * a.y
    })
    .sum::<f64>()
        / 2.0
}

/// Angle at vertex `i` that opens away from the material. Material is taken
/// to lie left of the travel direction, or right of it for clockwise loops.
/// Open path ends give `pi`.
pub fn exterior_angle(path: &Toolpath, i: usize) -> f64 {
    let v = &path.vertices;
    let n = v.len();
    let (prev, next) = if path.closed {
        // the closing vertex duplicates the first
        let m = n - 1;
        let k = i % m;
        (v[(k + m - 1) % m], v[(k + 1) % m])
    } else if i == 0 || i + 1 >= n {
        return PI;
    } else {
        (v[i - 1], v[i + 1])
    };
    let c = v[i];
    let (ax, ay) = (c.x - prev.x, c.y - prev.y);
    let (bx, by) = (next.x - c.x, next.y - c.y);
    if ax.hypot(ay) < 1e-12 || bx.hypot(by) < 1e-12 {
        return PI;
    }
    let turn = (ax * by - ay * bx).atan2(ax * bx + ay * by);
    let ccw = !path.closed || signed_area(path) >= 0.0;
    if ccw {
        PI + turn
    } else {
        PI - turn
    }
}
