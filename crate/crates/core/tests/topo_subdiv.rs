mod common;

use common::*;
use trussforge::topo_subdiv::{bezier_midpoint, compute_tc_field, extract_cells, subdivide, subdivide_with, CellKind};
use trussforge::{Point, Truss};

fn with_densities(mut t: Truss, w: &[f64]) -> Truss {
    for (b, &x) in t.bars.iter_mut().zip(w) {
        b.force_densities[0] = x;
    }
    t
}

fn unit_square(diagonal: bool) -> Truss {
    let mut bars = vec![(0, 1), (1, 2), (2, 3), (3, 0)];
    if diagonal {
        bars.push((0, 2));
    }
    truss2(
        vec![free(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(1.0, 1.0)), free(3, p2(0.0, 1.0))],
        &bars,
    )
}

#[test]
fn tc_field_examples() {
    let t = with_densities(
        truss2(vec![free(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(0.0, 1.0))], &[(0, 1), (0, 2)]),
        &[1.0, 1.0],
    );
    let f = compute_tc_field(&t);
    let expect = p2(1.0, 1.0) / 2f64.sqrt();
    assert!((f.tension[0].unwrap() - expect).norm() < 1e-15);
    assert!(f.compression[0].is_none());

    let t = with_densities(truss2(vec![free(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0))], &[(0, 1)]), &[-2.0]);
    let f = compute_tc_field(&t);
    assert_eq!(f.compression[0], Some(p2(1.0, 0.0)));
    assert!(f.tension[0].is_none() && f.tension[1].is_none());
    assert!(f.compression.iter().flatten().all(|v| (v.norm() - 1.0).abs() < 1e-15));
}

/// Cubic Bézier at t = 1/2 in Bernstein form.
fn bernstein_mid(c: [Point; 4]) -> Point {
    (c[0] + c[1] * 3.0 + c[2] * 3.0 + c[3]) / 8.0
}

#[test]
fn bezier_midpoints() {
    let (pi, pj) = (p2(0.0, 0.0), p2(1.0, 0.0));
    let chord = p2(1.0, 0.0);
    assert_eq!(bezier_midpoint(&pi, &pj, &chord, &chord).unwrap(), p2(0.5, 0.0));
    // Axial directions: a reversed tangent is the same direction.
    assert_eq!(bezier_midpoint(&pi, &pj, &-chord, &chord).unwrap(), p2(0.5, 0.0));

    let s = 2f64.sqrt() / 2.0;
    let (vi, vj) = (p2(s, s), p2(s, -s));
    let m = bezier_midpoint(&pi, &pj, &vi, &vj).unwrap();
    let oracle = bernstein_mid([pi, pi + vi / 3.0, pj - vj / 3.0, pj]);
    assert!((m - oracle).norm() < 1e-15);
    assert!((m.x - 0.5).abs() < 1e-15);
    assert!((m.y - s / 4.0).abs() < 1e-15, "{}", m.y);

    assert!(bezier_midpoint(&pi, &pi, &vi, &vj).is_err());
}

#[test]
fn cells_of_small_graphs() {
    let tri = truss2(vec![free(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(0.0, 1.0))], &[(0, 1), (1, 2), (2, 0)]);
    let cells = extract_cells(&tri);
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].kind, CellKind::Triangle);

    let cells = extract_cells(&unit_square(true));
    assert_eq!(cells.iter().filter(|c| c.kind == CellKind::Triangle).count(), 2);
    assert_eq!(cells.iter().filter(|c| c.kind == CellKind::Quad).count(), 0);

    let sq = unit_square(false);
    let cells = extract_cells(&sq);
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].kind, CellKind::Quad);
    // Cycle edges are bars.
    let c = &cells[0];
    for k in 0..4 {
        let (a, b) = (c.joints[k], c.joints[(k + 1) % 4]);
        assert_eq!(sq.bars[c.bars[k]].key(), (a.min(b), a.max(b)));
    }
}

#[test]
fn alternating_quad_splits_into_four() {
    let t = with_densities(unit_square(false), &[1.0, -1.0, 1.0, -1.0]);
    let spec = spec2(Vec::new());
    let out = subdivide(&t, &spec).unwrap();
    assert_eq!(out.joints.len(), 4 + 5);
    assert_eq!(out.bars.len(), 12);
    assert_eq!(&out.joints[..4], &t.joints[..]);
    assert!(out.check().is_ok());
    // The face joint sits at the mean of the four edge joints.
    let edge_mean = out.joints[4..8].iter().map(|j| j.position).sum::<Point>() / 4.0;
    assert!((out.joints[8].position - edge_mean).norm() < 1e-15);
}

#[test]
fn mixed_triangle_gets_one_connector() {
    let t = with_densities(
        truss2(vec![free(0, p2(0.0, 0.0)), free(1, p2(2.0, 0.0)), free(2, p2(1.0, 1.5))], &[(0, 1), (1, 2), (2, 0)]),
        &[1.0, -1.0, -1.0],
    );
    let out = subdivide(&t, &spec2(Vec::new())).unwrap();
    assert_eq!(out.joints.len(), 4);
    assert_eq!(out.bars.len(), 5);
    // The new joint splits the odd tension bar and meets the opposite vertex.
    assert!(out.find_bar(0, 1).is_none());
    assert!(out.find_bar(3, 2).is_some());
    assert!(out.find_bar(0, 3).is_some() && out.find_bar(3, 1).is_some());
}

#[test]
fn uniform_sign_trusses_are_left_alone() {
    let t = with_densities(unit_square(true), &[1.0; 5]);
    assert_eq!(subdivide(&t, &spec2(Vec::new())).unwrap(), t);
    let t = with_densities(unit_square(false), &[-1.0; 4]);
    assert_eq!(subdivide(&t, &spec2(Vec::new())).unwrap(), t);
}

#[test]
fn concave_quad_is_not_subdivided() {
    let t = with_densities(
        truss2(
            vec![free(0, p2(0.0, 0.0)), free(1, p2(2.0, 1.0)), free(2, p2(0.0, 2.0)), free(3, p2(0.5, 1.0))],
            &[(0, 1), (1, 2), (2, 3), (3, 0)],
        ),
        &[1.0, -1.0, 1.0, -1.0],
    );
    assert_eq!(subdivide(&t, &spec2(Vec::new())).unwrap(), t);
}

#[test]
fn shared_edge_is_split_once() {
    // Two unit squares side by side; horizontal bars in tension, vertical in
    // compression.
    let joints = vec![
        free(0, p2(0.0, 0.0)),
        free(1, p2(1.0, 0.0)),
        free(2, p2(2.0, 0.0)),
        free(3, p2(0.0, 1.0)),
        free(4, p2(1.0, 1.0)),
        free(5, p2(2.0, 1.0)),
    ];
    let bars = [(0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5)];
    let t = with_densities(truss2(joints, &bars), &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0]);
    let out = subdivide(&t, &spec2(Vec::new())).unwrap();
    assert_eq!(out.joints.len(), 6 + 7 + 2);
    assert_eq!(out.bars.len(), 14 + 8);
    assert_eq!(&out.joints[..6], &t.joints[..]);
    assert!(out.check().is_ok());
    // Every new joint is distinct.
    for a in 6..out.joints.len() {
        for b in a + 1..out.joints.len() {
            assert!((out.joints[a].position - out.joints[b].position).norm() > 1e-9);
        }
    }
}

#[test]
fn straight_subdivision_uses_chord_midpoints() {
    let t = with_densities(unit_square(false), &[1.0, -1.0, 1.0, -1.0]);
    let (out, stats) = subdivide_with(&t, &spec2(Vec::new()), false).unwrap();
    assert_eq!((stats.quads, stats.triangles, stats.split_bars), (1, 0, 4));
    let mids: Vec<Point> = out.joints[4..8].iter().map(|j| j.position).collect();
    for m in [p2(0.5, 0.0), p2(1.0, 0.5), p2(0.5, 1.0), p2(0.0, 0.5)] {
        assert!(mids.iter().any(|x| (x - m).norm() < 1e-15), "{m:?} missing");
    }
}

#[test]
fn halves_keep_area_and_axial_force() {
    let t = with_densities(unit_square(false), &[1.0, -1.0, 1.0, -1.0]);
    let (out, _) = subdivide_with(&t, &spec2(Vec::new()), false).unwrap();
    for (i, b) in out.bars.iter().enumerate() {
        let (a, c) = b.ends;
        if a < 4 || c < 4 {
            // A half of an original bar: area 1, axial force ±1.
            let s = b.force_densities[0] * out.bar_length(i);
            assert!((s.abs() - 1.0).abs() < 1e-12);
            assert_eq!(b.area, 1.0);
        }
    }
}
