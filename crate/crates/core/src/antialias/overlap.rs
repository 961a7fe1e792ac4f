//! Volume shared by raised lower tracks and the tracks printed on top of
//! them. Tracks are modeled as boxes of width `d` around the segment, with
//! vertical sides, a flat bottom at the nominal track bottom, and a top that
//! follows the displaced heights linearly along the segment.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::gcode::{PrintProgram, PrinterProfile, Toolpath};

type P2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SegmentRef {
    pub layer: usize,
    pub path: usize,
    /// Index of the segment's first vertex.
    pub segment: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapRecord {
    pub lower: SegmentRef,
    pub upper: SegmentRef,
    pub volume: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OverlapReport {
    pub records: Vec<OverlapRecord>,
    pub total_volume: f64,
    /// Upper segments whose flow would have gone negative.
    pub clamped: Vec<SegmentRef>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackBox {
    pub a: P2,
    pub b: P2,
    pub width: f64,
    pub bottom: f64,
    pub top_a: f64,
    pub top_b: f64,
}

/// Affine function `c[0]·x + c[1]·y + c[2]`.
#[derive(Debug, Clone, Copy)]
struct Affine([f64; 3]);

impl Affine {
    fn at(&self, p: P2) -> f64 {
        self.0[0] * p[0] + self.0[1] * p[1] + self.0[2]
    }

    fn sub(&self, o: &Affine) -> Affine {
        Affine([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl TrackBox {
    fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }

    fn corners(&self) -> Vec<P2> {
        let l = self.length();
        let (ux, uy) = ((self.b[0] - self.a[0]) / l, (self.b[1] - self.a[1]) / l);
        let (nx, ny) = (-uy * self.width / 2.0, ux * self.width / 2.0);
        vec![
            [self.a[0] - nx, self.a[1] - ny],
            [self.b[0] - nx, self.b[1] - ny],
            [self.b[0] + nx, self.b[1] + ny],
            [self.a[0] + nx, self.a[1] + ny],
        ]
    }

    fn top(&self) -> Affine {
        let l2 = (self.b[0] - self.a[0]).powi(2) + (self.b[1] - self.a[1]).powi(2);
        let g = (self.top_b - self.top_a) / l2;
        let (gx, gy) = (g * (self.b[0] - self.a[0]), g * (self.b[1] - self.a[1]));
        Affine([gx, gy, self.top_a - gx * self.a[0] - gy * self.a[1]])
    }

    pub fn xy_bounds(&self) -> (P2, P2) {
        let r = self.width / 2.0;
        (
            [self.a[0].min(self.b[0]) - r, self.a[1].min(self.b[1]) - r],
            [self.a[0].max(self.b[0]) + r, self.a[1].max(self.b[1]) + r],
        )
    }
}

/// Keeps the part of a convex polygon where `f >= 0`.
fn clip(poly: &[P2], f: &Affine) -> Vec<P2> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (fp, fq) = (f.at(p), f.at(q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let t = fp / (fp - fq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

fn area_centroid(poly: &[P2]) -> (f64, P2) {
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let cr = p[0] * q[1] - q[0] * p[1];
        a += cr;
        cx += (p[0] + q[0]) * cr;
        cy += (p[1] + q[1]) * cr;
    }
    if a.abs() < 1e-300 {
        return (0.0, [0.0, 0.0]);
    }
    (a / 2.0, [cx / (3.0 * a), cy / (3.0 * a)])
}

/// Integral of max(f, 0) over a convex polygon.
fn integrate_positive(poly: &[P2], f: &Affine) -> f64 {
    let piece = clip(poly, f);
    if piece.len() < 3 {
        return 0.0;
    }
    let (area, c) = area_centroid(&piece);
    (area.abs() * f.at(c)).max(0.0)
}

/// Exact volume shared by two track boxes.
pub fn box_overlap_volume(p: &TrackBox, q: &TrackBox) -> f64 {
    if p.length() < 1e-12 || q.length() < 1e-12 {
        return 0.0;
    }
    let mut poly = p.corners();
    if area_centroid(&poly).0 < 0.0 {
        poly.reverse();
    }
    let qc = {
        let mut c = q.corners();
        if area_centroid(&c).0 < 0.0 {
            c.reverse();
        }
        c
    };
    for i in 0..qc.len() {
        let (a, b) = (qc[i], qc[(i + 1) % qc.len()]);
        // inside of a counter-clockwise edge is to its left
        let edge = Affine([-(b[1] - a[1]), b[0] - a[0], (b[1] - a[1]) * a[0] - (b[0] - a[0]) * a[1]]);
        poly = clip(&poly, &edge);
        if poly.len() < 3 {
            return 0.0;
        }
    }
    let base = p.bottom.max(q.bottom);
    let (tp, tq) = (p.top(), q.top());
    let lift = |t: &Affine| Affine([t.0[0], t.0[1], t.0[2] - base]);
    // the lower of the two tops bounds the shared height
    let p_lower = clip(&poly, &tq.sub(&tp));
    let q_lower = clip(&poly, &tp.sub(&tq));
    let vp = if p_lower.len() >= 3 { integrate_positive(&p_lower, &lift(&tp)) } else { 0.0 };
    let vq = if q_lower.len() >= 3 { integrate_positive(&q_lower, &lift(&tq)) } else { 0.0 };
    // identical tops put the whole polygon in both pieces
    let on_both = {
        let both = clip(&p_lower, &tp.sub(&tq));
        if both.len() >= 3 {
            integrate_positive(&both, &lift(&tp))
        } else {
            0.0
        }
    };
    (vp + vq - on_both).max(0.0)
}

fn segment_box(path: &Toolpath, i: usize, thickness: f64, width: f64) -> TrackBox {
    let (a, b) = (&path.vertices[i], &path.vertices[i + 1]);
    TrackBox {
        a: [a.x, a.y],
        b: [b.x, b.y],
        width,
        bottom: a.z.min(b.z) - thickness,
        top_a: a.top(),
        top_b: b.top(),
    }
}

/// Finds overlaps between each layer holding paths and the next one, and,
/// when `apply` is set, takes the shared volume out of the upper tracks.
pub fn reduce_overlap_flow(
    program: &mut PrintProgram,
    profile: &PrinterProfile,
    thickness: &[f64],
    apply: bool,
) -> OverlapReport {
    let filled: Vec<usize> = (0..program.layers.len()).filter(|&l| !program.layers[l].paths.is_empty()).collect();
    let cell = profile.d.max(profile.w);
    let d = profile.d;
    let layers = &program.layers;

    let mut records: Vec<OverlapRecord> = filled
        .par_windows(2)
        .flat_map_iter(|pair| {
            let (lo, up) = (pair[0], pair[1]);
            let mut grid: HashMap<(i64, i64), Vec<(usize, usize)>> = HashMap::new();
            let key = |x: f64, y: f64| ((x / cell).floor() as i64, (y / cell).floor() as i64);
            for (pi, p) in layers[up].paths.iter().enumerate() {
                for i in 0..p.len() - 1 {
                    let (mn, mx) = segment_box(p, i, thickness[up], d).xy_bounds();
                    let (i0, j0) = key(mn[0], mn[1]);
                    let (i1, j1) = key(mx[0], mx[1]);
                    for gx in i0..=i1 {
                        for gy in j0..=j1 {
                            grid.entry((gx, gy)).or_default().push((pi, i));
                        }
                    }
                }
            }
            let mut out = Vec::new();
            for (pi, p) in layers[lo].paths.iter().enumerate() {
                for i in 0..p.len() - 1 {
                    if p.vertices[i].delta.max(p.vertices[i + 1].delta) <= 0.0 {
                        continue;
                    }
                    let bl = segment_box(p, i, thickness[lo], d);
                    let (mn, mx) = bl.xy_bounds();
                    let (i0, j0) = key(mn[0], mn[1]);
                    let (i1, j1) = key(mx[0], mx[1]);
                    let mut cands: Vec<(usize, usize)> = Vec::new();
                    for gx in i0..=i1 {
                        for gy in j0..=j1 {
                            if let Some(v) = grid.get(&(gx, gy)) {
                                cands.extend_from_slice(v);
                            }
                        }
                    }
                    cands.sort_unstable();
                    cands.dedup();
                    for (qi, j) in cands {
                        let bu = segment_box(&layers[up].paths[qi], j, thickness[up], d);
                        let v = box_overlap_volume(&bl, &bu);
                        if v > 1e-12 {
                            out.push(OverlapRecord {
                                lower: SegmentRef { layer: lo, path: pi, segment: i },
                                upper: SegmentRef { layer: up, path: qi, segment: j },
                                volume: v,
                            });
                        }
                    }
                }
            }
            out
        })
        .collect();
    records.sort_by(|a, b| a.upper.cmp(&b.upper).then(a.lower.cmp(&b.lower)));

    let total_volume = records.iter().map(|r| r.volume).fold(0.0, |a, v| a + v);
    let mut clamped = Vec::new();
    if apply {
        let area = profile.filament_area();
        let mut per_segment: Vec<(SegmentRef, f64)> = Vec::new();
        for r in &records {
            match per_segment.last_mut() {
                Some((s, v)) if *s == r.upper => *v += r.volume,
                _ => per_segment.push((r.upper, r.volume)),
            }
        }
        for (s, v) in per_segment {
            let vert = &mut program.layers[s.layer].paths[s.path].vertices[s.segment + 1];
            let e = vert.e - v / area;
            if e < 0.0 {
                clamped.push(s);
            }
            vert.e = e.max(0.0);
            program.layers[s.layer].paths[s.path].modified = true;
        }
    }
    OverlapReport { records, total_volume, clamped }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tb(a: P2, b: P2, bottom: f64, top_a: f64, top_b: f64) -> TrackBox {
        TrackBox { a, b, width: 0.8, bottom, top_a, top_b }
    }

    /// Midpoint-rule integration of the shared height over a fine grid.
    fn numeric(p: &TrackBox, q: &TrackBox, n: usize) -> f64 {
        let inside = |t: &TrackBox, x: f64, y: f64| -> Option<f64> {
            let l = t.length();
            let (ux, uy) = ((t.b[0] - t.a[0]) / l, (t.b[1] - t.a[1]) / l);
            let (rx, ry) = (x - t.a[0], y - t.a[1]);
            let s = rx * ux + ry * uy;
            let c = -rx * uy + ry * ux;
            (s >= 0.0 && s <= l && c.abs() <= t.width / 2.0).then(|| t.top_a + (t.top_b - t.top_a) * s / l)
        };
        let (mn, mx) = p.xy_bounds();
        let (dx, dy) = ((mx[0] - mn[0]) / n as f64, (mx[1] - mn[1]) / n as f64);
        let mut v = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (mn[0] + (i as f64 + 0.5) * dx, mn[1] + (j as f64 + 0.5) * dy);
                if let (Some(tp), Some(tq)) = (inside(p, x, y), inside(q, x, y)) {
                    v += (tp.min(tq) - p.bottom.max(q.bottom)).max(0.0) * dx * dy;
                }
            }
        }
        v
    }

    #[test]
    fn raised_lower_track_under_upper() {
        let lower = tb([0., 0.], [10., 0.], 0.0, 0.8, 0.8);
        let upper = tb([0., 0.], [10., 0.], 0.6, 1.2, 1.2);
        assert!((box_overlap_volume(&lower, &upper) - 1.6).abs() < 1e-12);
        assert!((box_overlap_volume(&upper, &lower) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn disjoint_boxes() {
        let lower = tb([0., 0.], [10., 0.], 0.0, 0.8, 0.8);
        let far = tb([0., 5.], [10., 5.], 0.6, 1.2, 1.2);
        assert_eq!(box_overlap_volume(&lower, &far), 0.0);
        let flat = tb([0., 0.], [10., 0.], 0.0, 0.6, 0.6);
        let above = tb([0., 0.], [10., 0.], 0.6, 1.2, 1.2);
        assert_eq!(box_overlap_volume(&flat, &above), 0.0);
    }

    #[test]
    fn sloped_tops_match_numeric_integration() {
        let lower = tb([0., 0.], [4., 1.], 0.0, 0.3, 0.9);
        let upper = tb([1., -0.5], [3., 1.5], 0.6, 1.0, 0.7);
        let exact = box_overlap_volume(&lower, &upper);
        let approx = numeric(&lower, &upper, 1500);
        assert!(exact > 0.0);
        assert!((exact - approx).abs() < 2e-3 * exact.max(1e-3), "{exact} vs {approx}");
    }

    #[test]
    fn crossing_tops_match_numeric_integration() {
        let lower = tb([0., 0.], [4., 0.], 0.0, 0.6, 1.1);
        let upper = tb([0., 0.2], [4., 0.2], 0.6, 1.2, 0.65);
        let exact = box_overlap_volume(&lower, &upper);
        let approx = numeric(&lower, &upper, 1500);
        assert!((exact - approx).abs() < 2e-3 * exact, "{exact} vs {approx}");
    }
}
