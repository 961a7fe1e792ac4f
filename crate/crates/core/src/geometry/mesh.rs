use std::collections::HashMap;

use serde::Serialize;

use super::{MeshError, Point, Vector};

/// Triangles with an area below this (mm²) are dropped at load.
pub const DEGENERATE_AREA: f64 = 1e-9;

/// Vertical hits closer than this (mm) are treated as the same crossing.
pub const HIT_DEDUP_TOL: f64 = 1e-9;

/// Barycentric slack so that rays grazing a shared edge hit both triangles.
const EDGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Facing {
    Top,
    Bottom,
}

/// Crossing of a vertical line with the mesh surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub point: Point,
    /// Surface z minus query z.
    pub delta: f64,
    pub facing: Facing,
    pub triangle: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub facets_read: usize,
    pub degenerate_dropped: usize,
    pub non_finite_dropped: usize,
}

impl LoadReport {
    pub fn summary(&self) -> String {
        format!(
            "{} facets read, {} degenerate dropped, {} non-finite dropped",
            self.facets_read, self.degenerate_dropped, self.non_finite_dropped
        )
    }
}

/// Indexed triangle mesh with per-triangle unit normals derived from the
/// winding order. Vertices shared bit-for-bit between facets are welded.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<Vector>,
}

fn key(p: &Point) -> [u64; 3] {
    // fold -0.0 onto 0.0 so mirrored coordinates weld
    let k = |v: f64| if v == 0.0 { 0u64 } else { v.to_bits() };
    [k(p.x), k(p.y), k(p.z)]
}

impl TriangleMesh {
    pub fn from_triangles<I>(facets: I) -> Result<(Self, LoadReport), MeshError>
    where
        I: IntoIterator<Item = [Point; 3]>,
    {
        let mut report = LoadReport::default();
        let mut lookup: HashMap<[u64; 3], u32> = HashMap::new();
        let mut mesh = TriangleMesh { vertices: Vec::new(), triangles: Vec::new(), normals: Vec::new() };
        for facet in facets {
            report.facets_read += 1;
            if facet.iter().any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite())) {
                report.non_finite_dropped += 1;
                continue;
            }
            let cross = (facet[1] - facet[0]).cross(&(facet[2] - facet[0]));
            let area = 0.5 * cross.norm();
            if !(area >= DEGENERATE_AREA) {
                report.degenerate_dropped += 1;
                continue;
            }
            let mut tri = [0u32; 3];
            for (slot, p) in tri.iter_mut().zip(facet.iter()) {
                let next = mesh.vertices.len() as u32;
                *slot = *lookup.entry(key(p)).or_insert_with(|| {
                    mesh.vertices.push(*p);
                    next
                });
            }
            mesh.triangles.push(tri);
            mesh.normals.push(cross / cross.norm());
        }
        if mesh.triangles.is_empty() {
            return Err(MeshError::Empty {
                degenerate: report.degenerate_dropped,
                non_finite: report.non_finite_dropped,
            });
        }
        Ok((mesh, report))
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vector] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.len()).map(|i| self.area(i)).sum()
    }

    /// Enclosed volume by the divergence theorem. Only meaningful for closed,
    /// consistently oriented meshes; outward winding gives a positive value.
    pub fn volume(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.values().all(|&n| n == 2)
    }

    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    pub fn facing(&self, tri: usize) -> Facing {
        if self.normals[tri].z > 0.0 {
            Facing::Top
        } else {
            Facing::Bottom
        }
    }

    /// z where the vertical line through (x, y) crosses triangle `tri`, if it
    /// does. Edges and vertices count as hits; vertical triangles never hit.
    pub fn vertical_crossing(&self, tri: usize, x: f64, y: f64) -> Option<f64> {
        let [a, b, c] = self.triangle(tri);
        let orient = |p: &Point, q: &Point, rx: f64, ry: f64| (q.x - p.x) * (ry - p.y) - (q.y - p.y) * (rx - p.x);
        let det = orient(&a, &b, c.x, c.y);
        if det.abs() <= 1e-14 {
            return None;
        }
        let wa = orient(&b, &c, x, y) / det;
        let wb = orient(&c, &a, x, y) / det;
        let wc = orient(&a, &b, x, y) / det;
        if wa < -EDGE_SLACK || wb < -EDGE_SLACK || wc < -EDGE_SLACK {
            return None;
        }
        Some(wa * a.z + wb * b.z + wc * c.z)
    }

    /// Reference query over every triangle; the index must agree with this.
    pub fn cast_vertical_brute_force(&self, query: &Point) -> Option<SurfaceHit> {
        let mut hits: Vec<(f64, usize)> = (0..self.len())
            .filter_map(|t| self.vertical_crossing(t, query.x, query.y).map(|z| (z, t)))
            .collect();
        resolve_hits(self, &mut hits, query)
    }
}

/// Deduplicates crossings along the vertical line and keeps the one closest
/// to the query, preferring the crossing above on exact ties.
pub(crate) fn resolve_hits(mesh: &TriangleMesh, hits: &mut Vec<(f64, usize)>, query: &Point) -> Option<SurfaceHit> {
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best: Option<(f64, usize)> = None;
    let mut last_kept: Option<f64> = None;
    for &(z, tri) in hits.iter() {
        if let Some(prev) = last_kept {
            if z - prev <= HIT_DEDUP_TOL {
                continue;
            }
        }
        last_kept = Some(z);
        let d = (z - query.z).abs();
        match best {
            Some((bz, _)) if (bz - query.z).abs() < d => {}
            // hits arrive in ascending z, so an exact tie resolves upward
            _ => best = Some((z, tri)),
        }
    }
    best.map(|(z, tri)| SurfaceHit {
        point: Point::new(query.x, query.y, z),
        delta: z - query.z,
        facing: mesh.facing(tri),
        triangle: tri,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Point {
        Point::new(x, y, z)
    }

    #[test]
    fn normal_follows_winding() {
        let (m, _) = TriangleMesh::from_triangles([[p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.)]]).unwrap();
        assert!((m.normals()[0] - Vector::new(0., 0., 1.)).norm() < 1e-12);
        assert_eq!(m.facing(0), Facing::Top);
        let (m, _) = TriangleMesh::from_triangles([[p(0., 0., 0.), p(0., 1., 0.), p(1., 0., 0.)]]).unwrap();
        assert_eq!(m.facing(0), Facing::Bottom);
    }

    #[test]
    fn degenerate_and_non_finite_are_dropped() {
        let good = [p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.)];
        let sliver = [p(0., 0., 0.), p(1., 0., 0.), p(2., 0., 0.)];
        let nan = [p(f64::NAN, 0., 0.), p(1., 0., 0.), p(0., 1., 0.)];
        let (m, r) = TriangleMesh::from_triangles([good, sliver, nan]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(r.degenerate_dropped, 1);
        assert_eq!(r.non_finite_dropped, 1);
        assert!(matches!(TriangleMesh::from_triangles([sliver]), Err(MeshError::Empty { degenerate: 1, .. })));
    }

    #[test]
    fn crossing_on_shared_edge_hits_both() {
        let (m, _) = TriangleMesh::from_triangles([
            [p(0., 0., 1.), p(1., 0., 1.), p(1., 1., 1.)],
            [p(0., 0., 1.), p(1., 1., 1.), p(0., 1., 1.)],
        ])
        .unwrap();
        assert_eq!(m.vertical_crossing(0, 0.5, 0.5), Some(1.0));
        assert_eq!(m.vertical_crossing(1, 0.5, 0.5), Some(1.0));
        // deduplicated into one crossing
        let hit = m.cast_vertical_brute_force(&p(0.5, 0.5, 0.0)).unwrap();
        assert_eq!(hit.delta, 1.0);
        assert_eq!(hit.triangle, 0);
    }

    #[test]
    fn tie_prefers_hit_above() {
        let (m, _) = TriangleMesh::from_triangles([
            [p(0., 0., 0.), p(0., 4., 0.), p(4., 0., 0.)],
            [p(0., 0., 2.), p(4., 0., 2.), p(0., 4., 2.)],
        ])
        .unwrap();
        let hit = m.cast_vertical_brute_force(&p(1., 1., 1.)).unwrap();
        assert_eq!(hit.delta, 1.0);
        assert_eq!(hit.facing, Facing::Top);
    }
}
