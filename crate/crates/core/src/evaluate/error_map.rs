use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::EvalError;
use crate::antialias::layer_thickness;
use crate::gcode::{PrintProgram, PrinterProfile};
use crate::geometry::{Point, TriangleMesh, Vector};

/// Upper end of the visualization color ramp, mm.
pub const VIS_CLAMP: f64 = 0.3;

/// Deposited track: vertical-sided box of width `width` around the segment,
/// with bottom and top heights varying linearly between the endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrintedTrack {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub width: f64,
    pub bottom: [f64; 2],
    pub top: [f64; 2],
}

impl PrintedTrack {
    /// Euclidean distance from `q` to the solid track, 0 inside.
    pub fn distance(&self, q: &Point) -> f64 {
        let (dx, dy) = (self.b[0] - self.a[0], self.b[1] - self.a[1]);
        let len = dx.hypot(dy);
        let (rx, ry) = (q.x - self.a[0], q.y - self.a[1]);
        let (u, v) = if len < 1e-12 { (0.0, rx.hypot(ry)) } else { ((rx * dx + ry * dy) / len, (-rx * dy + ry * dx) / len) };
        let dv = (v.abs() - self.width / 2.0).max(0.0);
        // cross-section along the segment is a quadrilateral in (u, z)
        let quad = [(0.0, self.bottom[0]), (len, self.bottom[1]), (len, self.top[1]), (0.0, self.top[0])];
        let du = dist_to_quad(&quad, (u, q.z));
        (dv * dv + du * du).sqrt()
    }

    fn xy_bounds(&self) -> ([f64; 2], [f64; 2]) {
        let r = self.width / 2.0;
        (
            [self.a[0].min(self.b[0]) - r, self.a[1].min(self.b[1]) - r],
            [self.a[0].max(self.b[0]) + r, self.a[1].max(self.b[1]) + r],
        )
    }
}

fn dist_to_quad(q: &[(f64, f64); 4], p: (f64, f64)) -> f64 {
    let mut inside = true;
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (a, b) = (q[i], q[(i + 1) % 4]);
        let (ex, ey) = (b.0 - a.0, b.1 - a.1);
        let cross = ex * (p.1 - a.1) - ey * (p.0 - a.0);
        if cross < 0.0 {
            inside = false;
        }
        let l2 = ex * ex + ey * ey;
        let t = if l2 < 1e-24 { 0.0 } else { (((p.0 - a.0) * ex + (p.1 - a.1) * ey) / l2).clamp(0.0, 1.0) };
        best = best.min((a.0 + t * ex - p.0).hypot(a.1 + t * ey - p.1));
    }
    if inside {
        0.0
    } else {
        best
    }
}

/// Tracks of every deposition segment, from each layer's nominal bottom to
/// the displaced top.
pub fn tracks_from_program(program: &PrintProgram, profile: &PrinterProfile) -> Vec<PrintedTrack> {
    let thickness = layer_thickness(program);
    let mut out = Vec::new();
    for (li, layer) in program.layers.iter().enumerate() {
        for p in &layer.paths {
            for w in p.vertices.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                if b.e <= 0.0 {
                    continue;
                }
                out.push(PrintedTrack {
                    a: [a.x, a.y],
                    b: [b.x, b.y],
                    width: profile.d,
                    bottom: [a.z - thickness[li], b.z - thickness[li]],
                    top: [a.top(), b.top()],
                });
            }
        }
    }
    out
}

/// XY grid over track footprints for nearest-track queries.
pub struct TrackIndex<'a> {
    tracks: &'a [PrintedTrack],
    cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
    lo: (i64, i64),
    hi: (i64, i64),
}

impl<'a> TrackIndex<'a> {
    pub fn new(tracks: &'a [PrintedTrack], cell: f64) -> Self {
        let key = |x: f64, y: f64| ((x / cell).floor() as i64, (y / cell).floor() as i64);
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        let (mut lo, mut hi) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
        for (k, t) in tracks.iter().enumerate() {
            let (mn, mx) = t.xy_bounds();
            let (i0, j0) = key(mn[0], mn[1]);
            let (i1, j1) = key(mx[0], mx[1]);
            lo = (lo.0.min(i0), lo.1.min(j0));
            hi = (hi.0.max(i1), hi.1.max(j1));
            for i in i0..=i1 {
                for j in j0..=j1 {
                    cells.entry((i, j)).or_default().push(k as u32);
                }
            }
        }
        TrackIndex { tracks, cell, cells, lo, hi }
    }

    /// Distance to the nearest track, searching rings of cells outward until
    /// no farther ring can hold anything closer.
    pub fn distance(&self, q: &Point) -> f64 {
        let (ci, cj) = ((q.x / self.cell).floor() as i64, (q.y / self.cell).floor() as i64);
        let reach = (ci - self.lo.0).abs().max((ci - self.hi.0).abs()).max((cj - self.lo.1).abs()).max((cj - self.hi.1).abs());
        let mut best = f64::INFINITY;
        for r in 0..=reach {
            for i in ci - r..=ci + r {
                for j in cj - r..=cj + r {
                    if (i - ci).abs() != r && (j - cj).abs() != r {
                        continue;
                    }
                    if let Some(v) = self.cells.get(&(i, j)) {
                        for &k in v {
                            best = best.min(self.tracks[k as usize].distance(q));
                        }
                    }
                }
            }
            if best <= r as f64 * self.cell {
                break;
            }
        }
        best
    }

    pub fn distance_brute_force(&self, q: &Point) -> f64 {
        self.tracks.iter().map(|t| t.distance(q)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSample {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub triangle: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub samples: usize,
    pub density_per_mm2: f64,
    pub seed: u64,
    pub mean: f64,
    pub max: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    /// Ten bins over [0, 0.3] mm plus one overflow bin.
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorMap {
    pub samples: Vec<ErrorSample>,
    pub density_per_mm2: f64,
    pub seed: u64,
}

impl ErrorMap {
    pub fn subset(&self, keep: impl Fn(&ErrorSample) -> bool) -> ErrorMap {
        ErrorMap { samples: self.samples.iter().filter(|s| keep(s)).copied().collect(), ..*self }
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().map(|s| s.distance).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> ErrorSummary {
        let mut d: Vec<f64> = self.samples.iter().map(|s| s.distance).collect();
        d.sort_by(f64::total_cmp);
        let pct = |p: f64| if d.is_empty() { 0.0 } else { d[((d.len() - 1) as f64 * p).round() as usize] };
        let mut histogram = vec![0usize; 11];
        for &v in &d {
            histogram[((v / VIS_CLAMP * 10.0).floor() as usize).min(10)] += 1;
        }
        ErrorSummary {
            samples: d.len(),
            density_per_mm2: self.density_per_mm2,
            seed: self.seed,
            mean: if d.is_empty() { 0.0 } else { d.iter().sum::<f64>() / d.len() as f64 },
            max: d.last().copied().unwrap_or(0.0),
            p50: pct(0.5),
            p90: pct(0.9),
            p99: pct(0.99),
            histogram,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,z,distance_mm\n");
        for p in &self.samples {
            let _ = writeln!(s, "{:.6},{:.6},{:.6},{:.6}", p.point[0], p.point[1], p.point[2], p.distance);
        }
        s
    }

    /// ASCII PLY point cloud colored on a linear ramp from blue at 0 mm to
    /// red at the clamp distance.
    pub fn to_ply(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "ply\nformat ascii 1.0\ncomment colormap linear blue(0.0 mm) to red({VIS_CLAMP} mm), clamped\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty float distance\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
            self.samples.len()
        );
        for p in &self.samples {
            let t = (p.distance / VIS_CLAMP).clamp(0.0, 1.0);
            let r = (255.0 * t).round() as u8;
            let _ = writeln!(s, "{:.6} {:.6} {:.6} {:.6} {} 0 {}", p.point[0], p.point[1], p.point[2], p.distance, r, 255 - r);
        }
        s
    }
}

/// Samples the mesh surface uniformly by area and records each sample's
/// distance to the printed tracks. Distances are stored unclamped.
pub fn error_map(mesh: &TriangleMesh, tracks: &[PrintedTrack], samples_per_mm2: f64, seed: u64) -> Result<ErrorMap, EvalError> {
    if tracks.is_empty() {
        return Err(EvalError::EmptyTracks);
    }
    if !(samples_per_mm2 > 0.0) {
        return Err(EvalError::BadDensity);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<(Point, Vector, usize)> = Vec::new();
    for t in 0..mesh.len() {
        let expected = mesh.area(t) * samples_per_mm2;
        let mut n = expected.floor() as usize;
        if rng.gen::<f64>() < expected - n as f64 {
            n += 1;
        }
        let [a, b, c] = mesh.triangle(t);
        for _ in 0..n {
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            let p = a + (b - a) * (s * (1.0 - r2)) + (c - a) * (s * r2);
            pts.push((p, mesh.normals()[t], t));
        }
    }
    let cell = tracks.iter().map(|t| t.width).fold(0.0, f64::max).max(0.5);
    let index = TrackIndex::new(tracks, cell);
    let samples = pts
        .par_iter()
        .map(|(p, n, t)| ErrorSample { point: [p.x, p.y, p.z], normal: [n.x, n.y, n.z], triangle: *t, distance: index.distance(p) })
        .collect();
    Ok(ErrorMap { samples, density_per_mm2: samples_per_mm2, seed })
}
