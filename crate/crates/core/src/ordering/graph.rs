use std::collections::BTreeSet;

use super::split::{closest_approach, nearest_top, subpaths_from_cuts, SubPath};
use super::{OrderingError, HEIGHT_TOL};
use crate::gcode::Toolpath;

/// "Print before" relation over subpaths: an edge `u -> v` means `u` is the
/// lower of two neighbors and must be printed first.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGraph {
    pub nodes: Vec<SubPath>,
    pub edges: Vec<(usize, usize)>,
}

impl ConstraintGraph {
    pub fn new(nodes: Vec<SubPath>, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        ConstraintGraph { nodes, edges }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut s = vec![Vec::new(); self.nodes.len()];
        for &(u, v) in &self.edges {
            s[u].push(v);
        }
        s
    }

    /// Some cycle as a node sequence, if the graph has one.
    pub fn find_cycle(&self) -> Option<Vec<usize>> {
        let succ = self.successors();
        let n = self.nodes.len();
        let mut color = vec![0u8; n];
        let mut parent = vec![usize::MAX; n];
        for root in 0..n {
            if color[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            color[root] = 1;
            while let Some(&mut (u, ref mut next)) = stack.last_mut() {
                if *next < succ[u].len() {
                    let v = succ[u][*next];
                    *next += 1;
                    match color[v] {
                        0 => {
                            color[v] = 1;
                            parent[v] = u;
                            stack.push((v, 0));
                        }
                        1 => {
                            let mut cyc = vec![u];
                            let mut w = u;
                            while w != v {
                                w = parent[w];
                                cyc.push(w);
                            }
                            cyc.reverse();
                            return Some(cyc);
                        }
                        _ => {}
                    }
                } else {
                    color[u] = 2;
                    stack.pop();
                }
            }
        }
        None
    }

    /// Every edge goes forward in `order`.
    pub fn respects(&self, order: &[usize]) -> bool {
        let mut pos = vec![usize::MAX; self.nodes.len()];
        for (i, &n) in order.iter().enumerate() {
            pos[n] = i;
        }
        order.len() == self.nodes.len() && self.edges.iter().all(|&(u, v)| pos[u] < pos[v])
    }
}

/// Mean height of `s` over `t` across nearest-point pairs closer than `eps`,
/// sampled from both sides. `None` when they never come that close.
fn relation(paths: &[Toolpath], s: &SubPath, t: &SubPath, eps: f64) -> Option<f64> {
    let (ps, pt) = (&paths[s.parent], &paths[t.parent]);
    if closest_approach(ps, (s.start, s.end), pt, (t.start, t.end)) >= eps {
        return None;
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, ar, b, br, sgn) in [(ps, (s.start, s.end), pt, (t.start, t.end), 1.0), (pt, (t.start, t.end), ps, (s.start, s.end), -1.0)] {
        for k in ar.0..=ar.1 {
            let v = &a.vertices[k];
            let (d, z) = nearest_top(b, br, [v.x, v.y]);
            if d < eps {
                sum += sgn * (v.top() - z);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn edges_for(paths: &[Toolpath], nodes: &[SubPath], eps: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if nodes[i].parent == nodes[j].parent {
                continue;
            }
            if let Some(m) = relation(paths, &nodes[i], &nodes[j], eps) {
                if m > HEIGHT_TOL {
                    out.push((j, i, m));
                } else if m < -HEIGHT_TOL {
                    out.push((i, j, -m));
                }
            }
        }
    }
    out
}

/// Links every pair of neighboring subpaths from different parents, lower to
/// higher. A cycle left by near-ties is broken by cutting the subpath on its
/// weakest edge at the vertex farthest from its neighbor's height, and if
/// that keeps failing, by dropping the weakest edge.
pub fn build_constraint_graph(paths: &[Toolpath], subpaths: Vec<SubPath>, eps: f64) -> Result<ConstraintGraph, OrderingError> {
    let mut nodes = subpaths;
    for _attempt in 0..16 {
        let weighted = edges_for(paths, &nodes, eps);
        let g = ConstraintGraph::new(nodes.clone(), weighted.iter().map(|&(u, v, _)| (u, v)).collect());
        let Some(cycle) = g.find_cycle() else {
            return Ok(g);
        };
        let strength = |u: usize, v: usize| weighted.iter().find(|e| e.0 == u && e.1 == v).map_or(f64::INFINITY, |e| e.2);
        let (u, v) = (0..cycle.len())
            .map(|k| (cycle[k], cycle[(k + 1) % cycle.len()]))
            .min_by(|a, b| strength(a.0, a.1).total_cmp(&strength(b.0, b.1)))
            .unwrap();
        let mut cut = None;
        for (a, b) in [(u, v), (v, u)] {
            let (s, t) = (&nodes[a], &nodes[b]);
            let best = (s.start + 1..s.end)
                .map(|k| {
                    let vx = &paths[s.parent].vertices[k];
                    let (_, z) = nearest_top(&paths[t.parent], (t.start, t.end), [vx.x, vx.y]);
                    (k, (vx.top() - z).abs())
                })
                .max_by(|x, y| x.1.total_cmp(&y.1));
            if let Some((k, _)) = best {
                cut = Some((s.parent, k));
                break;
            }
        }
        let Some((parent, k)) = cut else {
            break;
        };
        let mut cuts: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); paths.len()];
        for n in &nodes {
            if n.start > 0 {
                cuts[n.parent].insert(n.start);
            }
        }
        cuts[parent].insert(k);
        let keep: BTreeSet<usize> = nodes.iter().map(|n| n.parent).collect();
        nodes = subpaths_from_cuts(paths, &cuts).into_iter().filter(|n| keep.contains(&n.parent)).collect();
    }
    // cutting did not settle it: drop the weakest edge of each cycle left
    let mut weighted = edges_for(paths, &nodes, eps);
    loop {
        let g = ConstraintGraph::new(nodes.clone(), weighted.iter().map(|&(u, v, _)| (u, v)).collect());
        let Some(cycle) = g.find_cycle() else {
            return Ok(g);
        };
        let on_cycle = |e: &(usize, usize, f64)| (0..cycle.len()).any(|k| cycle[k] == e.0 && cycle[(k + 1) % cycle.len()] == e.1);
        let Some(weakest) = weighted.iter().enumerate().filter(|(_, e)| on_cycle(e)).min_by(|a, b| a.1 .2.total_cmp(&b.1 .2)).map(|(i, _)| i) else {
            return Err(OrderingError::Cycle(cycle));
        };
        let (u, v, m) = weighted.remove(weakest);
        log::warn!("height cycle {cycle:?} left after splitting; dropped edge {u}->{v} ({m:.4} mm)");
    }
}

#[cfg(test)]
mod tests {
    use super::super::split::split_paths;
    use super::*;
    use crate::gcode::{PathKind, PathVertex};

    fn line(y: f64, top: f64) -> Toolpath {
        let vs = (0..6).map(|i| PathVertex { delta: top - 0.6, ..PathVertex::new(i as f64 * 0.5, y, 0.6, 0.1, 20.) });
        let mut p = Toolpath::new(vs.collect(), PathKind::Unknown, 0);
        p.modified = true;
        p
    }

    #[test]
    fn lower_points_to_higher() {
        let mut paths = [line(0.0, 0.8), line(0.8, 0.6), line(10.0, 0.9)];
        let subs = split_paths(&mut paths, &[(0, 1)], 1.625);
        let g = build_constraint_graph(&paths, subs, 1.625).unwrap();
        assert_eq!(g.edges, vec![(1, 0)]);
        assert!(g.respects(&[1, 0, 2]));
        assert!(!g.respects(&[0, 1, 2]));
    }

    #[test]
    fn ties_are_independent() {
        let paths = [line(0.0, 0.6), line(0.8, 0.6 + 5e-7)];
        let subs = vec![SubPath::from_range(&paths, 0, 0, 5), SubPath::from_range(&paths, 1, 0, 5)];
        let g = build_constraint_graph(&paths, subs, 1.625).unwrap();
        assert!(g.edges.is_empty());
    }

    #[test]
    fn finds_cycles() {
        let paths = [line(0.0, 0.6)];
        let nodes: Vec<SubPath> = (0..3).map(|_| SubPath::from_range(&paths, 0, 0, 5)).collect();
        let g = ConstraintGraph::new(nodes, vec![(0, 1), (1, 2), (2, 0)]);
        let c = g.find_cycle().unwrap();
        assert_eq!(c.len(), 3);
        let g = ConstraintGraph::new(g.nodes, vec![(0, 1), (1, 2), (0, 2)]);
        assert!(g.find_cycle().is_none());
    }
}
