use super::mesh::resolve_hits;
use super::{Point, SurfaceHit, TriangleMesh};

/// Uniform XY grid over triangle footprints. Each triangle is registered in
/// every cell its bounding box touches, so a vertical line only needs the
/// triangles of the one cell containing it.
#[derive(Debug, Clone)]
pub struct VerticalRayIndex {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    offsets: Vec<u32>,
    items: Vec<u32>,
}

impl VerticalRayIndex {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let (lo, hi) = mesh.bounds();
        let (w, h) = ((hi.x - lo.x).max(1e-9), (hi.y - lo.y).max(1e-9));
        let n = mesh.len().max(1) as f64;
        let mut cell = (w * h / n).sqrt().max(w.max(h) / 2048.0);
        // keep the grid at most a few cells per triangle
        while (w / cell).ceil() * (h / cell).ceil() > 4.0 * n + 16.0 {
            cell *= 1.25;
        }
        let nx = ((w / cell).floor() as usize + 1).max(1);
        let ny = ((h / cell).floor() as usize + 1).max(1);
        let mut idx = VerticalRayIndex { x0: lo.x, y0: lo.y, cell, nx, ny, offsets: Vec::new(), items: Vec::new() };

        let ranges: Vec<_> = (0..mesh.len())
            .map(|t| {
                let tri = mesh.triangle(t);
                let (mut ax, mut ay, mut bx, mut by) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
                for p in &tri {
                    ax = ax.min(p.x);
                    ay = ay.min(p.y);
                    bx = bx.max(p.x);
                    by = by.max(p.y);
                }
                // pad by a hair so edge hits with slack are never missed
                let pad = 1e-9 * (1.0 + w.max(h));
                let (i0, j0) = idx.cell_of(ax - pad, ay - pad);
                let (i1, j1) = idx.cell_of(bx + pad, by + pad);
                (i0, j0, i1, j1)
            })
            .collect();
        let mut counts = vec![0u32; nx * ny + 1];
        for &(i0, j0, i1, j1) in &ranges {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * nx + i + 1] += 1;
                }
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let mut fill = counts.clone();
        idx.items = vec![0; *counts.last().unwrap() as usize];
        for (t, &(i0, j0, i1, j1)) in ranges.iter().enumerate() {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = j * nx + i;
                    idx.items[fill[c] as usize] = t as u32;
                    fill[c] += 1;
                }
            }
        }
        idx.offsets = counts;
        idx
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let clamp = |v: f64, n: usize| {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v.floor() as usize).min(n - 1)
            }
        };
        (clamp((x - self.x0) / self.cell, self.nx), clamp((y - self.y0) / self.cell, self.ny))
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Triangles registered in the cell containing (x, y).
    pub fn candidates(&self, x: f64, y: f64) -> &[u32] {
        let (i, j) = self.cell_of(x, y);
        let c = j * self.nx + i;
        &self.items[self.offsets[c] as usize..self.offsets[c + 1] as usize]
    }

    pub fn cast(&self, mesh: &TriangleMesh, query: &Point) -> Option<SurfaceHit> {
        let mut hits: Vec<(f64, usize)> = self
            .candidates(query.x, query.y)
            .iter()
            .filter_map(|&t| mesh.vertical_crossing(t as usize, query.x, query.y).map(|z| (z, t as usize)))
            .collect();
        resolve_hits(mesh, &mut hits, query)
    }
}
