use serde::Serialize;

use super::{build_constraint_graph, find_neighbors, interference_threshold, order_paths, split_paths, ConstraintGraph, OrderingError};
use crate::gcode::{fmt_num, Item, Layer, MotionLine, PrinterProfile, Toolpath};

const SAME_POS: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LayerOrderReport {
    pub layer: usize,
    pub subpaths: usize,
    pub edges: usize,
    pub explored_orders: u64,
    pub expansions: u64,
    pub best_cost: f64,
    pub gap_locations: Vec<[f64; 3]>,
    pub suboptimal: bool,
}

fn link(x: f64, y: f64, z: f64) -> MotionLine {
    let mut m = MotionLine::travel(Some(x), Some(y), Some(z));
    m.rapid = false;
    m.text.replace_range(0..2, "G1");
    m
}

/// Drops the XY part of a travel, keeping its height and speed.
fn strip_travel(it: Item) -> Option<Item> {
    let Item::Motion(m) = &it else {
        return Some(it);
    };
    if m.e.is_some() || (m.x.is_none() && m.y.is_none()) {
        return Some(it);
    }
    if m.z.is_none() && m.f.is_none() {
        return None;
    }
    let mut t = MotionLine::travel(None, None, m.z);
    if let Some(f) = m.f {
        t.text.push_str(" F");
        t.text.push_str(&fmt_num(f * 60.0));
        t.f = Some(f);
    }
    t.rapid = m.rapid;
    if !m.rapid {
        t.text.replace_range(0..2, "G1");
    }
    Some(Item::Motion(t))
}

/// Replaces the displaced paths of `layer` by the subpaths of `graph` in
/// `order`, placed after the last path of the layer so that untouched paths
/// keep their place ahead of them, and the travels that led to the displaced
/// paths are dropped. Separate subpaths closer than `eps_gap`
/// are joined by a plain move; farther ones get a travel at the higher of the
/// two heights.
pub fn relink_travels(layer: &mut Layer, graph: &ConstraintGraph, order: &[usize], eps_gap: f64) {
    let old = std::mem::take(&mut layer.paths);
    let mut remap = vec![None; old.len()];
    for (i, p) in old.iter().enumerate() {
        if !p.modified {
            remap[i] = Some(layer.paths.len());
            layer.paths.push(p.clone());
        }
    }
    let mut tail: Vec<Item> = Vec::new();
    let mut prev: Option<[f64; 3]> = None;
    for &n in order {
        let s = &graph.nodes[n];
        let parent = &old[s.parent];
        let mut vertices = parent.vertices[s.start..=s.end].to_vec();
        vertices[0].e = 0.0;
        let mut tp = Toolpath::new(vertices, parent.kind, parent.layer);
        tp.comments = parent.comments[s.start..=s.end].to_vec();
        tp.comments[0] = None;
        tp.modified = parent.modified;
        let entry = [s.entry.x, s.entry.y, s.entry.z];
        if let Some(p) = prev {
            let d = ((p[0] - entry[0]).powi(2) + (p[1] - entry[1]).powi(2) + (p[2] - entry[2]).powi(2)).sqrt();
            if d <= eps_gap {
                if d > SAME_POS {
                    tail.push(Item::Motion(link(entry[0], entry[1], entry[2])));
                }
            } else {
                let top = p[2].max(entry[2]);
                if top > p[2] + SAME_POS {
                    tail.push(Item::Motion(MotionLine::travel(None, None, Some(top))));
                }
                tail.push(Item::Motion(MotionLine::travel(Some(entry[0]), Some(entry[1]), None)));
                if entry[2] < top - SAME_POS {
                    tail.push(Item::Motion(MotionLine::travel(None, None, Some(entry[2]))));
                }
            }
        }
        prev = Some([s.exit.x, s.exit.y, s.exit.z]);
        tail.push(Item::Path(layer.paths.len()));
        layer.paths.push(tp);
    }
    let last_path = layer.items.iter().rposition(|it| matches!(it, Item::Path(_)));
    let mut items = Vec::with_capacity(layer.items.len() + tail.len());
    let mut pending: Vec<Item> = Vec::new();
    let mut tail = Some(tail);
    for (k, it) in std::mem::take(&mut layer.items).into_iter().enumerate() {
        match it {
            Item::Path(i) => match remap[i] {
                Some(j) => {
                    items.append(&mut pending);
                    items.push(Item::Path(j));
                }
                // the travel that used to position this path is obsolete
                None => items.extend(pending.drain(..).filter_map(strip_travel)),
            },
            other => pending.push(other),
        }
        if Some(k) == last_path {
            items.append(&mut pending);
            items.extend(tail.take().unwrap());
        }
    }
    items.append(&mut pending);
    if let Some(t) = tail {
        items.extend(t);
    }
    layer.items = items;
}

/// Splits, constrains, orders and relinks the displaced paths of one layer.
pub fn order_layer(
    layer: &mut Layer,
    layer_index: usize,
    profile: &PrinterProfile,
    weighted: bool,
    budget: u64,
) -> Result<LayerOrderReport, OrderingError> {
    let eps = interference_threshold(profile, profile.h)?;
    let mut report = LayerOrderReport { layer: layer_index, ..Default::default() };
    if !layer.paths.iter().any(|p| p.modified) {
        return Ok(report);
    }
    let pairs: Vec<(usize, usize)> = find_neighbors(&layer.paths, eps)
        .into_iter()
        .filter(|&(i, j)| layer.paths[i].modified && layer.paths[j].modified)
        .collect();
    let subs: Vec<_> = split_paths(&mut layer.paths, &pairs, eps).into_iter().filter(|s| s.modified).collect();
    let graph = build_constraint_graph(&layer.paths, subs, eps)?;
    let res = order_paths(&graph, 4.0 * profile.w, weighted, budget)?;
    relink_travels(layer, &graph, &res.order, 4.0 * profile.w);
    report.subpaths = graph.len();
    report.edges = graph.edges.len();
    report.explored_orders = res.explored_orders;
    report.expansions = res.expansions;
    report.best_cost = res.cost;
    report.gap_locations = res.gaps;
    report.suboptimal = res.suboptimal;
    Ok(report)
}
