use std::collections::{BTreeSet, HashMap};

use super::{exterior_angle, HEIGHT_TOL};
use crate::gcode::{PathVertex, Toolpath};
use crate::geometry::Point;

/// Contiguous vertex range `start..=end` of a parent path. Neighboring
/// subpaths of one parent share their boundary vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct SubPath {
    pub parent: usize,
    pub start: usize,
    pub end: usize,
    pub entry: Point,
    pub exit: Point,
    /// Mean displaced height over the range.
    pub height: f64,
    pub modified: bool,
    pub entry_theta: f64,
    pub exit_theta: f64,
}

impl SubPath {
    pub fn from_range(paths: &[Toolpath], parent: usize, start: usize, end: usize) -> Self {
        let p = &paths[parent];
        let v = &p.vertices[start..=end];
        let pt = |k: usize| Point::new(p.vertices[k].x, p.vertices[k].y, p.vertices[k].top());
        SubPath {
            parent,
            start,
            end,
            entry: pt(start),
            exit: pt(end),
            height: v.iter().map(|x| x.top()).sum::<f64>() / v.len() as f64,
            modified: p.modified,
            entry_theta: exterior_angle(p, start),
            exit_theta: exterior_angle(p, end),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

type P2 = [f64; 2];

fn seg_point(a: P2, b: P2, p: P2) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 < 1e-24 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / l2).clamp(0.0, 1.0) };
    ((a[0] + t * dx - p[0]).hypot(a[1] + t * dy - p[1]), t)
}

fn seg_seg(a: P2, b: P2, c: P2, d: P2) -> f64 {
    let cross = |o: P2, p: P2, q: P2| (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0]);
    let (d1, d2, d3, d4) = (cross(c, d, a), cross(c, d, b), cross(a, b, c), cross(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return 0.0;
    }
    seg_point(c, d, a).0.min(seg_point(c, d, b).0).min(seg_point(a, b, c).0).min(seg_point(a, b, d).0)
}

fn xy(p: &Toolpath, i: usize) -> P2 {
    [p.vertices[i].x, p.vertices[i].y]
}

/// Minimum XY distance between vertex ranges of two paths.
pub fn closest_approach(p: &Toolpath, pr: (usize, usize), q: &Toolpath, qr: (usize, usize)) -> f64 {
    let segs = |t: &Toolpath, (s, e): (usize, usize)| -> Vec<(P2, P2)> {
        if s == e {
            vec![(xy(t, s), xy(t, s))]
        } else {
            (s..e).map(|i| (xy(t, i), xy(t, i + 1))).collect()
        }
    };
    let (sp, sq) = (segs(p, pr), segs(q, qr));
    let mut best = f64::INFINITY;
    for &(a, b) in &sp {
        for &(c, d) in &sq {
            best = best.min(seg_seg(a, b, c, d));
        }
    }
    best
}

/// Nearest point on a vertex range of `q` to `at`: (distance, top height).
pub(crate) fn nearest_top(q: &Toolpath, (s, e): (usize, usize), at: P2) -> (f64, f64) {
    if s == e {
        let v = &q.vertices[s];
        return ((v.x - at[0]).hypot(v.y - at[1]), v.top());
    }
    let mut best = (f64::INFINITY, 0.0);
    for i in s..e {
        let (d, t) = seg_point(xy(q, i), xy(q, i + 1), at);
        if d < best.0 {
            let (za, zb) = (q.vertices[i].top(), q.vertices[i + 1].top());
            best = (d, za + t * (zb - za));
        }
    }
    best
}

/// Unordered path pairs, `i < j`, that come closer than `eps` in XY and of
/// which at least one was displaced.
pub fn find_neighbors(paths: &[Toolpath], eps: f64) -> Vec<(usize, usize)> {
    let cell = eps.max(1e-6);
    let key = |x: f64, y: f64| ((x / cell).floor() as i64, (y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<(usize, usize)>> = HashMap::new();
    for (pi, p) in paths.iter().enumerate() {
        for i in 0..p.len().saturating_sub(1) {
            let (a, b) = (xy(p, i), xy(p, i + 1));
            let (i0, j0) = key(a[0].min(b[0]), a[1].min(b[1]));
            let (i1, j1) = key(a[0].max(b[0]), a[1].max(b[1]));
            for gx in i0..=i1 {
                for gy in j0..=j1 {
                    grid.entry((gx, gy)).or_default().push((pi, i));
                }
            }
        }
    }
    let mut best: HashMap<(usize, usize), f64> = HashMap::new();
    for (pi, p) in paths.iter().enumerate() {
        for i in 0..p.len().saturating_sub(1) {
            let (a, b) = (xy(p, i), xy(p, i + 1));
            let (i0, j0) = key(a[0].min(b[0]) - eps, a[1].min(b[1]) - eps);
            let (i1, j1) = key(a[0].max(b[0]) + eps, a[1].max(b[1]) + eps);
            for gx in i0..=i1 {
                for gy in j0..=j1 {
                    for &(qi, j) in grid.get(&(gx, gy)).map(|v| v.as_slice()).unwrap_or(&[]) {
                        if qi <= pi || !(p.modified || paths[qi].modified) {
                            continue;
                        }
                        let d = seg_seg(a, b, xy(&paths[qi], j), xy(&paths[qi], j + 1));
                        let e = best.entry((pi, qi)).or_insert(f64::INFINITY);
                        *e = e.min(d);
                    }
                }
            }
        }
    }
    let mut out: Vec<(usize, usize)> = best.into_iter().filter(|&(_, d)| d < eps).map(|(k, _)| k).collect();
    out.sort_unstable();
    out
}

fn sign(d: f64) -> i8 {
    if d > HEIGHT_TOL {
        1
    } else if d < -HEIGHT_TOL {
        -1
    } else {
        0
    }
}

/// Vertex ranges between consecutive cuts.
pub(crate) fn pieces(len: usize, cuts: &BTreeSet<usize>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut s = 0;
    for &c in cuts {
        out.push((s, c));
        s = c;
    }
    out.push((s, len - 1));
    out
}

enum Cut {
    At(usize),
    /// New vertex a fraction `t` along the segment ending at vertex `k`.
    Insert { k: usize, t: f64 },
}

/// Cuts needed in `p` so each of its pieces stays on one side of `q_range`.
/// Interior cut vertices are ignored since they belong to two pieces.
fn find_cuts(p: &Toolpath, cuts: &BTreeSet<usize>, q: &Toolpath, q_range: (usize, usize), eps: f64) -> Vec<Cut> {
    let mut out = Vec::new();
    for (a, b) in pieces(p.len(), cuts) {
        let mut last: Option<(i8, usize, f64)> = None;
        for k in a..=b {
            if cuts.contains(&k) {
                continue;
            }
            let (d, z) = nearest_top(q, q_range, xy(p, k));
            if d >= eps {
                continue;
            }
            let diff = p.vertices[k].top() - z;
            let s = sign(diff);
            if s == 0 {
                continue;
            }
            match last {
                Some((ls, li, ld)) if ls != s => {
                    if k - li > 1 {
                        // mid-way through the stretch without a defined side
                        out.push(Cut::At((li + k) / 2));
                    } else {
                        out.push(Cut::Insert { k, t: ld / (ld - diff) });
                    }
                }
                _ => {}
            }
            last = Some((s, k, diff));
        }
    }
    out
}

fn insert_vertex(p: &mut Toolpath, k: usize, t: f64) {
    let (a, b) = (p.vertices[k - 1], p.vertices[k]);
    let lerp = |u: f64, v: f64| u + (v - u) * t;
    let v = PathVertex { x: lerp(a.x, b.x), y: lerp(a.y, b.y), z: lerp(a.z, b.z), e: b.e * t, f: b.f, delta: lerp(a.delta, b.delta) };
    p.vertices[k].e = b.e * (1.0 - t);
    p.vertices.insert(k, v);
    p.comments.insert(k, None);
}

pub(crate) fn split_with_cuts(paths: &mut [Toolpath], pairs: &[(usize, usize)], eps: f64, cuts: &mut [BTreeSet<usize>]) {
    let directed: Vec<(usize, usize)> = pairs.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
    for (p, q) in directed {
        // vertices inserted into q leave its geometry unchanged, so one pass
        // against the whole neighbor is enough
        let whole = (0, paths[q].len() - 1);
        let mut new = find_cuts(&paths[p], &cuts[p], &paths[q], whole, eps);
        let key = |c: &Cut| match c {
            Cut::At(k) | Cut::Insert { k, .. } => *k,
        };
        new.sort_by_key(|c| std::cmp::Reverse(key(c)));
        for c in new {
            let k = match c {
                Cut::At(k) => k,
                Cut::Insert { k, t } => {
                    let seg = paths[p].vertices[k - 1].xy_dist(&paths[p].vertices[k]);
                    if t * seg < 1e-6 {
                        k - 1
                    } else if (1.0 - t) * seg < 1e-6 {
                        k
                    } else {
                        insert_vertex(&mut paths[p], k, t);
                        cuts[p] = cuts[p].iter().map(|&c| if c >= k { c + 1 } else { c }).collect();
                        k
                    }
                }
            };
            if k > 0 && k + 1 < paths[p].len() {
                cuts[p].insert(k);
            }
        }
    }
}

pub(crate) fn subpaths_from_cuts(paths: &[Toolpath], cuts: &[BTreeSet<usize>]) -> Vec<SubPath> {
    let mut out = Vec::new();
    for (pi, p) in paths.iter().enumerate() {
        for (s, e) in pieces(p.len(), &cuts[pi]) {
            out.push(SubPath::from_range(paths, pi, s, e));
        }
    }
    out
}

/// Cuts each path wherever its height relative to a neighbor changes side,
/// so every piece lies above, below or level with each neighboring path.
/// Where heights cross between two vertices a vertex is inserted at the
/// crossing. Paths without neighbors stay whole.
pub fn split_paths(paths: &mut [Toolpath], pairs: &[(usize, usize)], eps: f64) -> Vec<SubPath> {
    let mut cuts = vec![BTreeSet::new(); paths.len()];
    split_with_cuts(paths, pairs, eps, &mut cuts);
    subpaths_from_cuts(paths, &cuts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcode::PathKind;

    fn line(y: f64, zs: &[f64]) -> Toolpath {
        let vs = zs.iter().enumerate().map(|(i, &z)| PathVertex { delta: z - 0.6, ..PathVertex::new(i as f64 * 0.5, y, 0.6, 0.1, 20.) });
        let mut p = Toolpath::new(vs.collect(), PathKind::Unknown, 0);
        p.modified = true;
        p
    }

    #[test]
    fn parallel_lines_are_neighbors() {
        let a = line(0.0, &[0.6; 5]);
        let b = line(0.8, &[0.7; 5]);
        let c = line(5.8, &[0.7; 5]);
        assert_eq!(find_neighbors(&[a, b, c], 1.625), vec![(0, 1)]);
    }

    #[test]
    fn unmodified_pairs_are_skipped() {
        let mut a = line(0.0, &[0.6; 5]);
        let mut b = line(0.8, &[0.6; 5]);
        a.modified = false;
        b.modified = false;
        assert!(find_neighbors(&[a, b], 1.625).is_empty());
    }

    #[test]
    fn constant_offset_needs_no_split() {
        let mut paths = [line(0.0, &[0.6; 6]), line(0.8, &[0.8; 6])];
        let subs = split_paths(&mut paths, &[(0, 1)], 1.625);
        assert_eq!(subs.len(), 2);
    }

    #[test]
    fn crossing_heights_split_both() {
        let mut paths = [line(0.0, &[0.5, 0.5, 0.5, 0.8, 0.8, 0.8]), line(0.8, &[0.7; 6])];
        let e_before = paths[0].total_e();
        let subs = split_paths(&mut paths, &[(0, 1)], 1.625);
        let ranges: Vec<(usize, usize, usize)> = subs.iter().map(|s| (s.parent, s.start, s.end)).collect();
        assert_eq!(ranges, vec![(0, 0, 3), (0, 3, 6), (1, 0, 3), (1, 3, 6)]);
        // crossing at two thirds of the way from x=1.0 to x=1.5, on both paths
        for p in &paths {
            let v = p.vertices[3];
            assert!((v.x - 4.0 / 3.0).abs() < 1e-12 && (v.top() - 0.7).abs() < 1e-12);
        }
        assert!((paths[0].total_e() - e_before).abs() < 1e-12);
    }

    #[test]
    fn closest_approach_of_crossing_segments() {
        let a = line(0.0, &[0.6; 3]);
        let mut b = line(0.0, &[0.6; 3]);
        for (k, v) in b.vertices.iter_mut().enumerate() {
            v.x = 0.5;
            v.y = -1.0 + k as f64;
        }
        assert_eq!(closest_approach(&a, (0, 2), &b, (0, 2)), 0.0);
    }
}
