use std::f64::consts::{PI, TAU};

use aa_core::antialias::{adjust_feedrate, displace_layer, resample_path};
use aa_core::evaluate::fixtures::{dome_mesh, flat_raster_gcode, make_fixture, wedge_mesh, FixtureKind};
use aa_core::evaluate::{error_map, estimate_print_time_text, tracks_from_program};
use aa_core::gcode::{emit_gcode, parse_gcode, PathKind, PathVertex, PrinterProfile, Toolpath};
use aa_core::geometry::{Point, TriangleMesh, VerticalRayIndex};
use aa_core::ordering::{
    build_constraint_graph, enumerate_orders, evaluate_order, find_neighbors, order_paths, split_paths, ConstraintGraph, SubPath,
};
use proptest::prelude::*;

/// Height field over a `n x n` grid of 1 mm cells.
fn terrain(n: usize, heights: &[f64]) -> TriangleMesh {
    let p = |i: usize, j: usize| Point::new(i as f64, j as f64, heights[i * (n + 1) + j]);
    let mut tris = Vec::new();
    for i in 0..n {
        for j in 0..n {
            tris.push([p(i, j), p(i + 1, j), p(i + 1, j + 1)]);
            tris.push([p(i, j), p(i + 1, j + 1), p(i, j + 1)]);
        }
    }
    TriangleMesh::from_triangles(tris).unwrap().0
}

fn mesh_strategy() -> impl Strategy<Value = TriangleMesh> {
    prop_oneof![
        (1.0..40.0f64, 5.0..30.0f64).prop_map(|(a, l)| wedge_mesh(a, l, 8.0)),
        (2.0..10.0f64, 3usize..20).prop_map(|(r, s)| dome_mesh(r, s)),
        (2usize..12).prop_flat_map(|n| prop::collection::vec(0.0..5.0f64, (n + 1) * (n + 1)).prop_map(move |h| terrain(n, &h))),
    ]
}

fn simple_path(points: &[(f64, f64, f64)]) -> Toolpath {
    let vs = points.iter().map(|&(x, y, top)| PathVertex { delta: top - 0.6, ..PathVertex::new(x, y, 0.6, 0.05, 20.0) });
    let mut p = Toolpath::new(vs.collect(), PathKind::Unknown, 0);
    p.modified = true;
    p
}

fn graph_strategy() -> impl Strategy<Value = ConstraintGraph> {
    (1usize..=7).prop_flat_map(|n| {
        let spot = (0u8..4, 0u8..3, 0.0..1.0f64).prop_map(|(i, j, f)| Point::new(i as f64 * 4.0 + f, j as f64 * 4.0, 0.6));
        let node = (spot.clone(), spot, 0.0..TAU, 0.0..TAU);
        (prop::collection::vec(node, n), prop::collection::vec(any::<bool>(), n * n), Just(n))
    })
    .prop_map(|(nodes, bits, n)| {
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, (entry, exit, a, b))| SubPath {
                parent: i,
                start: 0,
                end: 1,
                entry,
                exit,
                height: 0.6,
                modified: true,
                entry_theta: a,
                exit_theta: b,
            })
            .collect();
        // forward edges only, so the graph is acyclic
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| bits[i * n + j]).collect();
        ConstraintGraph::new(nodes, edges)
    })
}

/// Distance to, interpolated top of and fractional vertex index of the
/// closest point of `q`.
fn nearest(q: &Toolpath, x: f64, y: f64) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..q.len() - 1 {
        let (a, b) = (&q.vertices[i], &q.vertices[i + 1]);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let l2 = dx * dx + dy * dy;
        let t = if l2 == 0.0 { 0.0 } else { (((x - a.x) * dx + (y - a.y) * dy) / l2).clamp(0.0, 1.0) };
        let d = (a.x + t * dx - x).hypot(a.y + t * dy - y);
        if d < best.0 {
            best = (d, a.top() + t * (b.top() - a.top()), i as f64 + t);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn index_matches_brute_force(mesh in mesh_strategy(), qs in prop::collection::vec((-2.0..42.0f64, -2.0..22.0f64, -1.0..8.0f64), 200)) {
        let index = VerticalRayIndex::build(&mesh);
        for (x, y, z) in qs {
            let q = Point::new(x, y, z);
            let (a, b) = (index.cast(&mesh, &q), mesh.cast_vertical_brute_force(&q));
            match (a, b) {
                (None, None) => {}
                (Some(a), Some(b)) => prop_assert!(a.triangle == b.triangle || (a.point.z - b.point.z).abs() <= 1e-9),
                _ => prop_assert!(false, "index {a:?} brute force {b:?}"),
            }
        }
    }

    #[test]
    fn unmodified_round_trip(
        moves in prop::collection::vec((0u8..5, 0.0..200.0f64, 0.0..200.0f64, 0.001..0.5f64), 1..200),
        relative in any::<bool>(),
    ) {
        let mut text = String::from(if relative { "M83\nG92 E0\nG1 Z0.2 F1200\n" } else { "M82\nG92 E0\nG1 Z0.2 F1200\n" });
        let mut e = 0.0;
        for (kind, x, y, de) in moves {
            e += de;
            let ev = if relative { de } else { e };
            let line = match kind {
                0 | 1 => format!("G1 X{x:.3} Y{y:.3} E{ev:.5}"),
                2 => format!("G0 X{x:.3} Y{y:.3}"),
                3 => format!("G1 F{:.0} X{x:.2} Y{y:.2} E{ev:.5} ; c", 600.0 + x),
                _ => format!(";TYPE:{}", if x > 100.0 { "FILL" } else { "WALL-OUTER" }),
            };
            text.push_str(&line);
            text.push('\n');
        }
        let p = parse_gcode(&text).unwrap();
        let out = emit_gcode(&p);
        prop_assert_eq!(&out, &text);
        let again = parse_gcode(&out).unwrap();
        prop_assert_eq!(&again, &p);
        prop_assert!((again.total_e() - p.total_e()).abs() < 1e-6);
    }

    #[test]
    fn displacement_window_and_idempotence(angle in 2.0..35.0f64, s in 0.05..0.6f64) {
        let p = PrinterProfile::default().with_s(s);
        let mesh = wedge_mesh(angle, 20.0, 4.8);
        let index = VerticalRayIndex::build(&mesh);
        let mut prog = parse_gcode(&flat_raster_gcode(&mesh, &p)).unwrap();
        for l in prog.layers.iter_mut() {
            for path in l.paths.iter_mut() {
                *path = resample_path(path, p.w);
            }
            displace_layer(&mut l.paths, &index, &mesh, &p);
        }
        for v in prog.paths().flat_map(|p| p.vertices.iter()) {
            prop_assert!(v.delta >= s - p.h - 1e-12 && v.delta <= s + 1e-12, "delta {}", v.delta);
        }
        let mut again = prog.clone();
        for l in again.layers.iter_mut() {
            displace_layer(&mut l.paths, &index, &mesh, &p);
        }
        for (a, b) in prog.paths().flat_map(|p| p.vertices.iter()).zip(again.paths().flat_map(|p| p.vertices.iter())) {
            prop_assert!((a.top() - b.top()).abs() <= 1e-9);
        }
    }

    #[test]
    fn feedrate_is_monotone(d1 in -0.6..0.6f64, a in 0.0..1.2f64, b in 0.0..1.2f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let f_lo = adjust_feedrate(d1, d1 + lo, 0.6, 20.0, 13.0);
        let f_hi = adjust_feedrate(d1, d1 + hi, 0.6, 20.0, 13.0);
        prop_assert!(f_hi <= f_lo);
        prop_assert!((13.0..=20.0).contains(&f_hi));
    }

    #[test]
    fn search_matches_enumeration(g in graph_strategy(), weighted in any::<bool>()) {
        let r = order_paths(&g, 3.2, weighted, u64::MAX).unwrap();
        prop_assert!(g.respects(&r.order));
        let mut best = f64::INFINITY;
        enumerate_orders(&g, |o| best = best.min(evaluate_order(&g, o, 3.2, weighted).0));
        prop_assert!((r.cost - best).abs() < 1e-9, "search {} enumeration {}", r.cost, best);
        prop_assert!(!r.suboptimal);
    }

    #[test]
    fn weighted_cost_dominance(g in graph_strategy(), node in 0usize..7, exit in any::<bool>(), shrink in 0.0..1.0f64) {
        let order = order_paths(&g, 3.2, false, u64::MAX).unwrap().order;
        let (w, _) = evaluate_order(&g, &order, 3.2, true);
        let (u, _) = evaluate_order(&g, &order, 3.2, false);
        prop_assert!(w >= u - 1e-12 && w <= 2.0 * u + 1e-12);
        let mut h = g.clone();
        let n = &mut h.nodes[node % g.len()];
        let t = if exit { &mut n.exit_theta } else { &mut n.entry_theta };
        *t *= shrink;
        prop_assert!(evaluate_order(&h, &order, 3.2, true).0 <= w + 1e-12);
    }

    #[test]
    fn split_keeps_height_sign_per_pair(
        gap in 0.3..1.5f64,
        n in 6usize..30,
        a in (0.0..0.3f64, 0.2..2.0f64, 0.0..TAU),
        b in (0.0..0.3f64, 0.2..2.0f64, 0.0..TAU),
    ) {
        let eps = 1.625;
        let wave = |y: f64, (amp, k, ph): (f64, f64, f64)| {
            (0..n).map(|i| {
                let x = i as f64 * 0.7;
                (x, y, 0.6 + amp * (k * x + ph).sin())
            }).collect::<Vec<_>>()
        };
        let mut paths = vec![simple_path(&wave(0.0, a)), simple_path(&wave(gap, b))];
        let pairs = find_neighbors(&paths, eps);
        let subs = split_paths(&mut paths, &pairs, eps);
        for parent in 0..2 {
            let mine: Vec<&SubPath> = subs.iter().filter(|s| s.parent == parent).collect();
            prop_assert_eq!(mine[0].start, 0);
            prop_assert_eq!(mine.last().unwrap().end, paths[parent].len() - 1);
            prop_assert!(mine.windows(2).all(|w| w[0].end == w[1].start));
        }
        for s in subs.iter().filter(|s| s.parent == 0) {
            for t in subs.iter().filter(|t| t.parent == 1) {
                let (mut pos, mut neg) = (false, false);
                for (a, b, sign) in [(s, t, 1.0), (t, s, -1.0)] {
                    let (pa, pb) = (&paths[a.parent], &paths[b.parent]);
                    for v in &pa.vertices[a.start..=a.end] {
                        // a nearest-point pair belongs to the overlap of the two pieces
                        let (d, z, at) = nearest(pb, v.x, v.y);
                        if d < eps && (b.start as f64..=b.end as f64).contains(&at) {
                            let diff = sign * (v.top() - z);
                            pos |= diff > 1e-6;
                            neg |= diff < -1e-6;
                        }
                    }
                }
                prop_assert!(!(pos && neg), "subpaths {:?} and {:?} swap order", (s.start, s.end), (t.start, t.end));
            }
        }
        let g = build_constraint_graph(&paths, subs, eps).unwrap();
        prop_assert!(g.find_cycle().is_none());
    }

    #[test]
    fn more_tracks_never_increase_distance(angle in 3.0..30.0f64, keep in 0.1..0.9f64, seed in 0u64..1000) {
        let p = PrinterProfile::default();
        let mesh = wedge_mesh(angle, 12.0, 4.8);
        let prog = parse_gcode(&flat_raster_gcode(&mesh, &p)).unwrap();
        let all = tracks_from_program(&prog, &p);
        let some: Vec<_> = all.iter().copied().take(((all.len() as f64 * keep) as usize).max(1)).collect();
        let (m_all, m_some) = (error_map(&mesh, &all, 4.0, seed).unwrap(), error_map(&mesh, &some, 4.0, seed).unwrap());
        for (x, y) in m_all.samples.iter().zip(&m_some.samples) {
            prop_assert_eq!(x.point, y.point);
            prop_assert!(x.distance <= y.distance);
        }
    }

    #[test]
    fn doubling_feedrates_halves_time(angle in 3.0..30.0f64) {
        let p = PrinterProfile::default();
        let text = flat_raster_gcode(&wedge_mesh(angle, 15.0, 4.8), &p);
        let doubled = text.replace(&format!("F{:.5}", p.f_ini * 60.0), &format!("F{:.5}", p.f_ini * 120.0));
        prop_assert_ne!(&doubled, &text);
        let (t1, t2) = (estimate_print_time_text(&text).unwrap(), estimate_print_time_text(&doubled).unwrap());
        prop_assert!((t1 - 2.0 * t2).abs() <= 1e-9 * t1);
    }

    #[test]
    fn fixtures_are_bit_identical(angle in 1.0..60.0f64, r in 1.0..10.0f64, segs in 3usize..24) {
        for k in [FixtureKind::Wedge { angle_deg: angle, length: 20.0, width: 9.6 }, FixtureKind::Dome { radius: r, segments: segs }, FixtureKind::ThreePaths] {
            prop_assert_eq!(make_fixture(k).unwrap(), make_fixture(k).unwrap());
        }
        let m = wedge_mesh(angle, 20.0, 9.6);
        prop_assert_eq!(flat_raster_gcode(&m, &PrinterProfile::default()), flat_raster_gcode(&m, &PrinterProfile::default()));
    }
}

#[test]
fn straight_gap_is_worth_more_than_a_concave_one() {
    assert!(aa_core::ordering::gap_cost(PI) > aa_core::ordering::gap_cost(PI / 2.0));
}
