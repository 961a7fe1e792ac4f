//! Vertex displacement toward the true surface, with the matching flow and
//! speed corrections.

mod overlap;

pub use overlap::{box_overlap_volume, reduce_overlap_flow, OverlapRecord, OverlapReport, SegmentRef, TrackBox};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::gcode::{PathVertex, PrintProgram, PrinterProfile, Toolpath};
use crate::geometry::{Facing, Point, TriangleMesh, VerticalRayIndex};

/// Slack on the window bounds for hits that land on them up to rounding.
const WINDOW_SLACK: f64 = 1e-9;
/// Surface offsets below this are single-precision STL noise; they also
/// vanish at the five decimals the G-code is written with.
const ON_SURFACE: f64 = 5e-6;

#[derive(Debug, Error, PartialEq)]
pub enum AntialiasError {
    #[error("local thickness {z} + displacement {delta} is not positive")]
    InvalidThickness { z: f64, delta: f64 },
}

/// Splits every segment longer than `w` into equal pieces no longer than `w`.
pub fn resample_path(path: &Toolpath, w: f64) -> Toolpath {
    let mut vertices = Vec::with_capacity(path.len());
    let mut comments = Vec::with_capacity(path.len());
    vertices.push(path.vertices[0]);
    comments.push(path.comments[0].clone());
    for i in 1..path.len() {
        let (a, b) = (path.vertices[i - 1], path.vertices[i]);
        let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2) + (b.z - a.z).powi(2)).sqrt();
        let n = if len > w { ((len / w) - 1e-9).ceil().max(1.0) as usize } else { 1 };
        for k in 1..n {
            let t = k as f64 / n as f64;
            let lerp = |p: f64, q: f64| p + (q - p) * t;
            vertices.push(PathVertex {
                x: lerp(a.x, b.x),
                y: lerp(a.y, b.y),
                z: lerp(a.z, b.z),
                e: b.e / n as f64,
                f: b.f,
                delta: lerp(a.delta, b.delta),
            });
            comments.push(None);
        }
        vertices.push(PathVertex { e: b.e / n as f64, ..b });
        comments.push(path.comments[i].clone());
    }
    Toolpath { vertices, comments, ..path.clone() }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Histogram { lo, hi, counts: vec![0; bins] }
    }

    pub fn add(&mut self, v: f64) {
        let n = self.counts.len();
        let span = (self.hi - self.lo).max(f64::MIN_POSITIVE);
        let k = (((v - self.lo) / span) * n as f64).floor();
        self.counts[(k.max(0.0) as usize).min(n - 1)] += 1;
    }

    fn merge(&mut self, o: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DisplaceStats {
    pub vertices_total: u64,
    pub displaced: u64,
    pub skipped_miss: u64,
    pub skipped_bottom_facing: u64,
    pub skipped_out_of_window: u64,
    pub min_delta: f64,
    pub max_delta: f64,
    pub delta_histogram: Histogram,
    pub per_layer_histograms: Vec<Histogram>,
}

impl DisplaceStats {
    fn empty(profile: &PrinterProfile) -> Self {
        let (lo, hi) = profile.window();
        DisplaceStats { delta_histogram: Histogram::new(lo, hi, 12), ..Default::default() }
    }

    fn absorb(&mut self, o: DisplaceStats) {
        if o.displaced > 0 {
            if self.displaced == 0 {
                self.min_delta = o.min_delta;
                self.max_delta = o.max_delta;
            } else {
                self.min_delta = self.min_delta.min(o.min_delta);
                self.max_delta = self.max_delta.max(o.max_delta);
            }
        }
        self.vertices_total += o.vertices_total;
        self.displaced += o.displaced;
        self.skipped_miss += o.skipped_miss;
        self.skipped_bottom_facing += o.skipped_bottom_facing;
        self.skipped_out_of_window += o.skipped_out_of_window;
        self.delta_histogram.merge(&o.delta_histogram);
        self.per_layer_histograms.push(o.delta_histogram);
    }
}

/// Moves each vertex onto the surface straight above or below it when that
/// surface faces up and lies within the displacement window. Vertices already
/// on the surface stay put, so a second pass changes nothing.
pub fn displace_layer(
    paths: &mut [Toolpath],
    index: &VerticalRayIndex,
    mesh: &TriangleMesh,
    profile: &PrinterProfile,
) -> DisplaceStats {
    let (lo, hi) = profile.window();
    let mut st = DisplaceStats::empty(profile);
    for path in paths.iter_mut() {
        for v in path.vertices.iter_mut() {
            st.vertices_total += 1;
            let Some(hit) = index.cast(mesh, &Point::new(v.x, v.y, v.top())) else {
                st.skipped_miss += 1;
                continue;
            };
            if hit.facing == Facing::Bottom {
                st.skipped_bottom_facing += 1;
                continue;
            }
            let total = v.delta + hit.delta;
            if total < lo - WINDOW_SLACK || total > hi + WINDOW_SLACK {
                st.skipped_out_of_window += 1;
                continue;
            }
            if hit.delta.abs() <= ON_SURFACE {
                continue;
            }
            v.delta = total.clamp(lo, hi);
            if st.displaced == 0 {
                st.min_delta = v.delta;
                st.max_delta = v.delta;
            }
            st.min_delta = st.min_delta.min(v.delta);
            st.max_delta = st.max_delta.max(v.delta);
            st.displaced += 1;
            st.delta_histogram.add(v.delta);
        }
        path.modified = path.vertices.iter().any(|v| v.delta != 0.0);
    }
    st
}

/// Displaces every layer in parallel.
pub fn displace_program(
    program: &mut PrintProgram,
    index: &VerticalRayIndex,
    mesh: &TriangleMesh,
    profile: &PrinterProfile,
) -> DisplaceStats {
    let per_layer: Vec<DisplaceStats> = program
        .layers
        .par_iter_mut()
        .map(|l| displace_layer(&mut l.paths, index, mesh, profile))
        .collect();
    let mut st = DisplaceStats::empty(profile);
    for l in per_layer {
        st.absorb(l);
    }
    st
}

/// Flow for a track of thickness `z` raised or lowered by `delta`.
pub fn adjust_extrusion(e: f64, z: f64, delta: f64) -> Result<f64, AntialiasError> {
    if !(z > 0.0) || !(z + delta > 0.0) {
        return Err(AntialiasError::InvalidThickness { z, delta });
    }
    Ok(e * (z + delta) / z)
}

/// Speed for a segment whose endpoints are displaced by `d1` and `d2`,
/// slowing linearly toward `f_min` as the slope across it grows.
pub fn adjust_feedrate(d1: f64, d2: f64, h: f64, f_ini: f64, f_min: f64) -> f64 {
    let f = f_ini + (d1 - d2).abs() / h * (f_min - f_ini);
    f.clamp(f_min, f_ini)
}

/// Nominal thickness of every layer: distance to the previous layer that
/// holds paths, or the base height for the first one.
pub fn layer_thickness(program: &PrintProgram) -> Vec<f64> {
    let mut prev: Option<f64> = None;
    program
        .layers
        .iter()
        .map(|l| {
            let t = l.base_z - prev.unwrap_or(0.0);
            if !l.paths.is_empty() {
                prev = Some(l.base_z);
            }
            t
        })
        .collect()
}

/// Rescales flow by local thickness and scales speed by the slope factor on
/// every modified path.
pub fn apply_flow_and_feed(
    path: &mut Toolpath,
    thickness: f64,
    profile: &PrinterProfile,
) -> Result<(), AntialiasError> {
    if !path.modified {
        return Ok(());
    }
    for i in 1..path.len() {
        let prev = path.vertices[i - 1].delta;
        let v = &mut path.vertices[i];
        v.e = adjust_extrusion(v.e, thickness, v.delta)?;
        v.f *= adjust_feedrate(prev, v.delta, profile.h, profile.f_ini, profile.f_min) / profile.f_ini;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AntialiasReport {
    pub displacement: DisplaceStats,
    pub overlap: OverlapReport,
    pub min_thickness: f64,
    pub max_thickness: f64,
}

/// Resamples, displaces, rescales flow and speed, and removes overlap volume
/// on every layer. Paths that end up without any displaced vertex are left
/// exactly as parsed.
pub fn antialias_program(
    program: &mut PrintProgram,
    index: &VerticalRayIndex,
    mesh: &TriangleMesh,
    profile: &PrinterProfile,
    compensate_overlap: bool,
) -> Result<AntialiasReport, AntialiasError> {
    let thickness = layer_thickness(program);
    let originals: Vec<Vec<Toolpath>> = program.layers.iter().map(|l| l.paths.clone()).collect();
    program.layers.par_iter_mut().for_each(|l| {
        for p in l.paths.iter_mut() {
            *p = resample_path(p, profile.w);
        }
    });
    let displacement = displace_program(program, index, mesh, profile);
    let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (li, layer) in program.layers.iter_mut().enumerate() {
        for (pi, p) in layer.paths.iter_mut().enumerate() {
            if !p.modified {
                *p = originals[li][pi].clone();
                continue;
            }
            apply_flow_and_feed(p, thickness[li], profile)?;
            for v in &p.vertices {
                tmin = tmin.min(thickness[li] + v.delta);
                tmax = tmax.max(thickness[li] + v.delta);
            }
        }
    }
    let overlap = if compensate_overlap {
        reduce_overlap_flow(program, profile, &thickness, true)
    } else {
        OverlapReport::default()
    };
    if !tmin.is_finite() {
        (tmin, tmax) = (0.0, 0.0);
    }
    Ok(AntialiasReport { displacement, overlap, min_thickness: tmin, max_thickness: tmax })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub s: f64,
    pub overlap_volume: f64,
}

/// Total overlap volume for each slicing-plane position, each computed on a
/// scratch copy of `program`.
pub fn sweep_slicing_plane(
    program: &PrintProgram,
    index: &VerticalRayIndex,
    mesh: &TriangleMesh,
    profile: &PrinterProfile,
    s_values: &[f64],
) -> Result<Vec<SweepRow>, AntialiasError> {
    s_values
        .iter()
        .map(|&s| {
            let mut scratch = program.clone();
            let p = profile.with_s(s);
            let rep = antialias_program(&mut scratch, index, mesh, &p, false)?;
            let thickness = layer_thickness(&scratch);
            let ov = if rep.displacement.displaced > 0 {
                reduce_overlap_flow(&mut scratch, &p, &thickness, false).total_volume
            } else {
                0.0
            };
            Ok(SweepRow { s, overlap_volume: ov })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcode::PathKind;

    fn line(len: f64, e: f64) -> Toolpath {
        Toolpath::new(vec![PathVertex::new(0., 0., 0.6, 0., 20.), PathVertex::new(len, 0., 0.6, e, 20.)], PathKind::Unknown, 0)
    }

    #[test]
    fn resample_splits_into_equal_pieces() {
        let r = resample_path(&line(2.0, 0.9), 0.8);
        assert_eq!(r.len(), 4);
        for k in 1..4 {
            assert!((r.vertices[k].x - r.vertices[k - 1].x - 2.0 / 3.0).abs() < 1e-12);
            assert!((r.vertices[k].e - 0.3).abs() < 1e-12);
        }
        assert_eq!(resample_path(&line(0.5, 0.1), 0.8), line(0.5, 0.1));
    }

    #[test]
    fn resample_square_keeps_closure() {
        let pts = [(0., 0.), (4., 0.), (4., 4.), (0., 4.), (0., 0.)];
        let vs = pts.iter().map(|&(x, y)| PathVertex::new(x, y, 0.6, 1.0, 20.)).collect();
        let sq = Toolpath::new(vs, PathKind::Perimeter, 0);
        let r = resample_path(&sq, 0.8);
        assert_eq!(r.len(), 21);
        assert!(r.closed);
    }

    #[test]
    fn extrusion_scaling() {
        assert_eq!(adjust_extrusion(2.0, 0.6, 0.0), Ok(2.0));
        assert!((adjust_extrusion(2.0, 0.6, 0.3).unwrap() - 3.0).abs() < 1e-12);
        assert!((adjust_extrusion(2.0, 0.6, -0.3).unwrap() - 1.0).abs() < 1e-12);
        assert!(adjust_extrusion(2.0, 0.6, -0.6).is_err());
    }

    #[test]
    fn feedrate_interpolation() {
        assert_eq!(adjust_feedrate(0.1, 0.1, 0.6, 20.0, 13.0), 20.0);
        assert_eq!(adjust_feedrate(-0.3, 0.3, 0.6, 20.0, 13.0), 13.0);
        assert_eq!(adjust_feedrate(0.0, 0.3, 0.6, 20.0, 13.0), 16.5);
        assert_eq!(adjust_feedrate(0.0, 5.0, 0.6, 20.0, 13.0), 13.0);
    }

    #[test]
    fn histogram_clamps_edges() {
        let mut h = Histogram::new(-0.3, 0.3, 6);
        h.add(-0.3);
        h.add(0.3);
        h.add(0.0);
        assert_eq!(h.counts, vec![1, 0, 0, 1, 0, 1]);
    }
}
