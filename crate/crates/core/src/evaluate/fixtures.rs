//! Deterministic synthetic parts and flat-sliced programs for them.

use std::f64::consts::PI;
use std::fmt::Write as _;

use super::EvalError;
use crate::gcode::{PathKind, PathVertex, PrinterProfile, Toolpath};
use crate::geometry::{Point, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixtureKind {
    /// Prism over `[0, length] x [0, width]` whose top rises as
    /// `z = x tan(angle)`.
    Wedge { angle_deg: f64, length: f64, width: f64 },
    /// Hemisphere of radius `radius` centered at (radius, radius, 0).
    Dome { radius: f64, segments: usize },
    FlatBox { x: f64, y: f64, z: f64 },
    /// Three displaced, mutually close wavy paths (labelled 1 to 3).
    ThreePaths,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub mesh: Option<TriangleMesh>,
    pub paths: Option<Vec<Toolpath>>,
}

fn mesh(tris: Vec<[Point; 3]>) -> TriangleMesh {
    TriangleMesh::from_triangles(tris).expect("fixture triangles are valid").0
}

pub fn make_fixture(kind: FixtureKind) -> Result<Fixture, EvalError> {
    let positive = |vals: &[f64]| vals.iter().all(|v| v.is_finite() && *v > 0.0);
    match kind {
        FixtureKind::Wedge { angle_deg, length, width } => {
            if !positive(&[angle_deg, length, width]) || angle_deg >= 90.0 {
                return Err(EvalError::BadFixture(format!("wedge {angle_deg} deg {length} x {width}")));
            }
            Ok(Fixture { mesh: Some(wedge_mesh(angle_deg, length, width)), paths: None })
        }
        FixtureKind::Dome { radius, segments } => {
            if !positive(&[radius]) || segments < 3 {
                return Err(EvalError::BadFixture(format!("dome r={radius} n={segments}")));
            }
            Ok(Fixture { mesh: Some(dome_mesh(radius, segments)), paths: None })
        }
        FixtureKind::FlatBox { x, y, z } => {
            if !positive(&[x, y, z]) {
                return Err(EvalError::BadFixture(format!("box {x} x {y} x {z}")));
            }
            Ok(Fixture { mesh: Some(box_mesh(Point::origin(), Point::new(x, y, z))), paths: None })
        }
        FixtureKind::ThreePaths => Ok(Fixture { mesh: None, paths: Some(three_paths()) }),
    }
}

pub fn wedge_mesh(angle_deg: f64, length: f64, width: f64) -> TriangleMesh {
    let h = length * angle_deg.to_radians().tan();
    let p = |x: f64, y: f64, z: f64| Point::new(x, y, z);
    let (a, b, c) = (p(0., 0., 0.), p(length, 0., 0.), p(length, 0., h));
    let (d, e, f) = (p(0., width, 0.), p(length, width, 0.), p(length, width, h));
    mesh(vec![
        [a, d, e],
        [a, e, b],
        [b, e, f],
        [b, f, c],
        [a, c, f],
        [a, f, d],
        [a, b, c],
        [d, f, e],
    ])
}

pub fn box_mesh(lo: Point, hi: Point) -> TriangleMesh {
    let v = |i: usize| Point::new(if i & 1 == 0 { lo.x } else { hi.x }, if i & 2 == 0 { lo.y } else { hi.y }, if i & 4 == 0 { lo.z } else { hi.z });
    // outward-wound quads as corner index lists
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    mesh(quads.iter().flat_map(|q| [[v(q[0]), v(q[1]), v(q[2])], [v(q[0]), v(q[2]), v(q[3])]]).collect())
}

/// Closed hemisphere: latitude rings over a flat disk bottom.
pub fn dome_mesh(radius: f64, segments: usize) -> TriangleMesh {
    let rings = segments.max(3);
    let c = Point::new(radius, radius, 0.0);
    let at = |lat: usize, lon: usize| {
        let phi = PI / 2.0 * lat as f64 / rings as f64;
        let th = 2.0 * PI * (lon % (2 * rings)) as f64 / (2 * rings) as f64;
        Point::new(c.x + radius * phi.cos() * th.cos(), c.y + radius * phi.cos() * th.sin(), radius * phi.sin())
    };
    let top = Point::new(c.x, c.y, radius);
    let lons = 2 * rings;
    let mut tris = Vec::new();
    for lat in 0..rings {
        for lon in 0..lons {
            if lat + 1 == rings {
                tris.push([at(lat, lon), at(lat, lon + 1), top]);
            } else {
                tris.push([at(lat, lon), at(lat, lon + 1), at(lat + 1, lon + 1)]);
                tris.push([at(lat, lon), at(lat + 1, lon + 1), at(lat + 1, lon)]);
            }
        }
        let _ = lat;
    }
    for lon in 0..lons {
        tris.push([c, at(0, lon + 1), at(0, lon)]);
    }
    mesh(tris)
}

/// X intervals where the horizontal line at (`y`, `z`) is inside `mesh`.
fn line_intervals(mesh: &TriangleMesh, y: f64, z: f64) -> Vec<(f64, f64)> {
    let mut xs = Vec::new();
    for t in 0..mesh.len() {
        let tri = mesh.triangle(t);
        // edge crossings of the plane z = const
        let mut pts = Vec::new();
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if (a.z - z) * (b.z - z) < 0.0 {
                let s = (z - a.z) / (b.z - a.z);
                pts.push((a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)));
            }
        }
        if pts.len() != 2 {
            continue;
        }
        let ((x0, y0), (x1, y1)) = (pts[0], pts[1]);
        if (y0 <= y) != (y1 <= y) {
            xs.push(x0 + (y - y0) / (y1 - y0) * (x1 - x0));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.chunks_exact(2).map(|c| (c[0], c[1])).filter(|(a, b)| b - a > 1e-9).collect()
}

/// Flat-layer raster program for `mesh`: layers of thickness `h` contoured
/// at their mid-plane, lines along X spaced by the track width and printed
/// back and forth at `f_ini`.
pub fn flat_raster_gcode(mesh: &TriangleMesh, profile: &PrinterProfile) -> String {
    let (lo, hi) = mesh.bounds();
    let area = profile.filament_area();
    let mut s = String::from("; flat raster fixture\nM82\nG92 E0\n");
    let _ = writeln!(s, "G0 F{:.5}", profile.f_ini * 60.0);
    let mut e = 0.0;
    let layers = ((hi.z - lo.z) / profile.h).ceil() as usize;
    let lines = ((hi.y - lo.y) / profile.d).round().max(1.0) as usize;
    let pitch = (hi.y - lo.y) / lines as f64;
    for k in 0..layers {
        let top = lo.z + (k + 1) as f64 * profile.h;
        let mid = top - profile.h / 2.0;
        if mid >= hi.z {
            break;
        }
        let _ = writeln!(s, ";LAYER:{k}\n;TYPE:FILL");
        let _ = writeln!(s, "G0 Z{top:.5}");
        let mut forward = true;
        for j in 0..lines {
            let y = lo.y + pitch * (j as f64 + 0.5);
            for (x0, x1) in line_intervals(mesh, y, mid) {
                let (a, b) = if forward { (x0, x1) } else { (x1, x0) };
                e += (x1 - x0) * profile.d * profile.h / area;
                let _ = writeln!(s, "G0 X{a:.5} Y{y:.5}");
                let _ = writeln!(s, "G1 X{b:.5} Y{y:.5} E{e:.5}");
                forward = !forward;
            }
        }
    }
    let _ = writeln!(s, "G0 Z{:.5}\nM84", hi.z + 5.0);
    s
}

fn vertices(points: &[(f64, f64, f64)]) -> Vec<PathVertex> {
    points
        .iter()
        .map(|&(x, y, top)| PathVertex { delta: top - 0.6, ..PathVertex::new(x, y, 0.6, 0.05, 20.0) })
        .collect()
}

/// Tops of path 2 along its bottom edge and of path 3 below it. The two
/// cross at x = 12 with mirrored slopes.
fn crossing_top(x: f64, rising: bool) -> f64 {
    let t = [(11.0, 0.65), (11.5, 0.625), (12.0, 0.6), (12.5, 0.575), (13.0, 0.55)];
    let k = t.iter().position(|&(tx, _)| tx == x);
    let v = match k {
        Some(k) => t[k].1,
        None if x < 12.0 => 0.65,
        None => 0.55,
    };
    if rising {
        1.2 - v
    } else {
        v
    }
}

/// Three displaced paths in one layer, all vertices listed (x, y, top).
/// Path 2 is an almost closed loop; path 3 passes under its bottom edge,
/// crossing its height once, and path 1 runs inside, below the right edge
/// and above the left one. Paths 1 and 3 stay far apart.
pub fn three_paths_control() -> [Vec<(f64, f64, f64)>; 3] {
    let p1 = vec![
        (20.0, 13.0, 0.45),
        (27.0, 13.0, 0.45),
        (28.8, 11.0, 0.45),
        (28.8, 8.0, 0.45),
        (28.8, 5.0, 0.45),
        (2.4, 6.2, 0.575),
        (1.2, 7.5, 0.7),
        (2.4, 8.8, 0.7),
    ];
    let bottom = [2.0, 4.0, 6.0, 8.0, 10.0, 11.0, 11.5, 12.0, 12.5, 13.0, 14.0, 16.0, 18.0, 20.0, 22.0, 24.0, 26.0, 28.0, 30.0];
    let mut p2: Vec<_> = bottom.iter().map(|&x| (x, 0.0, crossing_top(x, false))).collect();
    for (x, y) in [(30.0, 3.0), (30.0, 5.0), (30.0, 8.0), (30.0, 11.0), (30.0, 12.5), (30.0, 16.0), (20.0, 16.0), (0.0, 16.0), (0.0, 10.0), (0.0, 7.5), (0.0, 5.0), (0.0, 2.0)] {
        p2.push((x, y, 0.55));
    }
    let p3 = bottom[2..15].iter().map(|&x| (x, -1.2, crossing_top(x, true))).collect();
    [p1, p2, p3]
}

pub fn three_paths() -> Vec<Toolpath> {
    three_paths_control()
        .iter()
        .map(|c| {
            let mut p = Toolpath::new(vertices(c), PathKind::Perimeter, 0);
            p.modified = true;
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wedge_is_closed_with_expected_volume() {
        let m = wedge_mesh(10.0, 20.0, 9.6);
        assert!(m.is_closed());
        let h = 20.0 * 10f64.to_radians().tan();
        assert!((m.volume() - 20.0 * h / 2.0 * 9.6).abs() < 1e-9);
        assert!(m.normals().iter().any(|n| (n.z - 10f64.to_radians().cos()).abs() < 1e-12));
    }

    #[test]
    fn box_and_dome_are_closed() {
        let b = box_mesh(Point::origin(), Point::new(10., 10., 1.2));
        assert!(b.is_closed());
        assert!((b.volume() - 120.0).abs() < 1e-9);
        let d = dome_mesh(5.0, 16);
        assert!(d.is_closed());
        let exact = 2.0 / 3.0 * PI * 125.0;
        assert!(d.volume() > 0.95 * exact && d.volume() < exact);
    }

    #[test]
    fn fixtures_are_deterministic() {
        let k = FixtureKind::Wedge { angle_deg: 10.0, length: 20.0, width: 9.6 };
        assert_eq!(make_fixture(k).unwrap(), make_fixture(k).unwrap());
        assert!(make_fixture(FixtureKind::FlatBox { x: -1.0, y: 1.0, z: 1.0 }).is_err());
    }

    #[test]
    fn three_paths_split_into_seven_with_four_edges() {
        use crate::ordering::*;
        let mut paths = three_paths();
        let eps = interference_threshold(&PrinterProfile::default(), 0.6).unwrap();
        let pairs = find_neighbors(&paths, eps);
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        let subs = split_paths(&mut paths, &pairs, eps);
        let parents: Vec<_> = subs.iter().map(|s| s.parent).collect();
        assert_eq!(parents, vec![0, 0, 1, 1, 1, 2, 2]);
        let g = build_constraint_graph(&paths, subs, eps).unwrap();
        let mut e = g.edges.clone();
        e.sort();
        assert_eq!(e, vec![(0, 3), (3, 6), (4, 1), (5, 2)]);
        let r = order_paths(&g, 3.2, false, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.cost, 3.0);
    }

    #[test]
    fn raster_of_box_has_two_layers() {
        let m = box_mesh(Point::origin(), Point::new(10., 9.6, 1.2));
        let g = flat_raster_gcode(&m, &PrinterProfile::default());
        let p = crate::gcode::parse_gcode(&g).unwrap();
        assert_eq!(p.layers.len(), 2);
        assert_eq!(p.layers[0].paths.len(), 12);
        let vol = p.deposited_e() * PrinterProfile::default().filament_area();
        assert!((vol - 115.2).abs() < 1e-2);
    }
}
