mod common;

use common::*;
use trussforge::gsm::{apply_alg_a, solve_alg_a};
use trussforge::pipeline::{drop_unused_bars, init_truss};
use trussforge::topo_local::{
    apply_local_pass, fix_narrow_triangles, fix_t_junctions, merge_close_joints, prune_thin_bars, remove_orphans,
    remove_valence_two, split_intersections, LocalPassConfig,
};
use trussforge::{equilibrium_residual, Error, JointKind, Point, Truss};

/// Proper crossings between bars that share no endpoint, by brute force.
fn crossings(t: &Truss) -> usize {
    let orient = |a: Point, b: Point, c: Point| (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let mut n = 0;
    for i in 0..t.bars.len() {
        for j in i + 1..t.bars.len() {
            let (a, b) = t.bars[i].ends;
            let (c, d) = t.bars[j].ends;
            if a == c || a == d || b == c || b == d {
                continue;
            }
            let p = |k: usize| t.joints[k].position;
            let (d1, d2) = (orient(p(a), p(b), p(c)), orient(p(a), p(b), p(d)));
            let (d3, d4) = (orient(p(c), p(d), p(a)), orient(p(c), p(d), p(b)));
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                n += 1;
            }
        }
    }
    n
}

#[test]
fn prune_removes_thin_bars_only() {
    let mut t = truss2(
        vec![support(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(0.0, 1.0))],
        &[(0, 1), (0, 2)],
    );
    t.bars[1].area = 1e-9;
    let threshold = 0.002 * t.mean_area();
    assert_eq!(prune_thin_bars(&mut t, threshold), 1);
    assert_eq!(t.bars.len(), 1);
    assert_eq!(t.joints.len(), 3);

    let mut same = truss2(vec![support(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0))], &[(0, 1)]);
    let threshold = 0.002 * same.mean_area();
    assert_eq!(prune_thin_bars(&mut same, threshold), 0);
}

#[test]
fn pruning_a_ground_structure_shrinks_it() {
    let spec = fixture("bridge_k2");
    let mut t = init_truss(&spec, 3).unwrap();
    let r = solve_alg_a(&t, spec.sigma).unwrap();
    apply_alg_a(&mut t, &r);
    let before = t.bars.len();
    let threshold = spec.params.prune_factor * t.mean_area();
    prune_thin_bars(&mut t, threshold);
    assert!(t.bars.len() < before);
}

#[test]
fn orphans_are_intermediate_only() {
    let mut t = truss2(
        vec![support(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(5.0, 5.0)), loaded(3, p2(3.0, 3.0), p2(1.0, 0.0))],
        &[(0, 1)],
    );
    assert_eq!(remove_orphans(&mut t), 1);
    assert_eq!(t.joints.iter().map(|j| j.id).collect::<Vec<_>>(), vec![0, 1, 3]);
    // The isolated loaded joint stays and cannot be carried.
    assert!(solve_alg_a(&t, 1.0).is_err());
    assert_eq!(remove_orphans(&mut t), 0);
}

#[test]
fn merge_examples() {
    let mut t = truss2(
        vec![support(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(1.0, 1e-6))],
        &[(0, 1), (0, 2)],
    );
    t.bars[1].area = 3.0;
    assert_eq!(merge_close_joints(&mut t, 0.01).unwrap(), 1);
    assert_eq!(t.joints.len(), 2);
    assert_eq!(t.joints[1].position, p2(1.0, 0.5e-6));
    assert_eq!(t.bars.len(), 1);
    assert_eq!(t.bars[0].area, 3.0);

    let mut t = truss2(vec![support(0, p2(0.0, 0.0)), free(1, p2(0.001, 0.0)), free(2, p2(1.0, 0.0))], &[(1, 2), (0, 1)]);
    assert_eq!(merge_close_joints(&mut t, 0.01).unwrap(), 1);
    assert_eq!(t.joints[0].position, p2(0.0, 0.0));
    assert_eq!(t.joints[0].kind, JointKind::Support);
    assert_eq!(t.bars.len(), 1);
}

#[test]
fn merging_is_transitive() {
    // a~b and b~c but a and c are farther apart than the distance.
    let xs = [0.0, 0.008, 0.016];
    let mut t = truss2(
        vec![support(0, p2(-1.0, 0.0)), free(1, p2(xs[0], 1.0)), free(2, p2(xs[1], 1.0)), free(3, p2(xs[2], 1.0))],
        &[(0, 1), (0, 2), (0, 3)],
    );
    assert_eq!(merge_close_joints(&mut t, 0.01).unwrap(), 2);
    assert_eq!(t.joints.len(), 2);
    assert!((t.joints[1].position - p2(0.008, 1.0)).norm() < 1e-15);
    assert_eq!(t.bars.len(), 1);
}

#[test]
fn spec_joints_never_merge() {
    let mut t = truss2(vec![support(4, p2(0.0, 0.0)), loaded(9, p2(0.001, 0.0), p2(1.0, 0.0))], &[(0, 1)]);
    assert!(matches!(merge_close_joints(&mut t, 0.01), Err(Error::SpecJointsWouldMerge(4, 9))));
}

#[test]
fn crossing_bars_are_split() {
    let mut t = truss2(
        vec![free(0, p2(0.0, 0.0)), free(1, p2(1.0, 1.0)), free(2, p2(0.0, 1.0)), free(3, p2(1.0, 0.0))],
        &[(0, 1), (2, 3)],
    );
    for b in &mut t.bars {
        b.force_densities[0] = 2.0;
    }
    assert_eq!(split_intersections(&mut t), 1);
    assert_eq!(t.joints.len(), 5);
    assert_eq!(t.bars.len(), 4);
    assert_eq!(t.joints[4].position, p2(0.5, 0.5));
    // Halves keep the axial force, so the density doubles.
    assert!(t.bars.iter().all(|b| (b.force_densities[0] - 4.0).abs() < 1e-12 && b.area == 1.0));

    let mut shared = truss2(vec![free(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(0.0, 1.0))], &[(0, 1), (0, 2)]);
    assert_eq!(split_intersections(&mut shared), 0);
}

#[test]
fn three_mutual_crossings() {
    let mut t = truss2(
        vec![
            free(0, p2(0.0, 0.0)),
            free(1, p2(4.0, 1.0)),
            free(2, p2(0.0, 2.0)),
            free(3, p2(4.0, 0.5)),
            free(4, p2(1.0, -1.0)),
            free(5, p2(2.5, 3.0)),
        ],
        &[(0, 1), (2, 3), (4, 5)],
    );
    let before = crossings(&t);
    assert_eq!(before, 3);
    assert_eq!(split_intersections(&mut t), 3);
    assert_eq!(crossings(&t), 0);
    assert_eq!(t.joints.len(), 9);
    assert_eq!(t.bars.len(), 9);
}

#[test]
fn t_junction_gets_a_foot_and_connector() {
    let mut t = truss2(
        vec![support(0, p2(0.0, 0.0)), support(1, p2(1.0, 0.0)), free(2, p2(0.5, 1e-4)), loaded(3, p2(0.5, 1.0), p2(1.0, 0.0))],
        &[(0, 1), (2, 3)],
    );
    assert_eq!(fix_t_junctions(&mut t, 0.01), 1);
    assert_eq!(t.joints.len(), 5);
    assert_eq!(t.joints[4].position, p2(0.5, 0.0));
    assert_eq!(t.bars.len(), 4);
    for (a, b) in [(0, 4), (4, 1), (2, 4), (2, 3)] {
        assert!(t.find_bar(a, b).is_some(), "missing bar {a}-{b}");
    }
}

#[test]
fn t_junction_no_action_cases() {
    let mut at_end = truss2(
        vec![support(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(1.0, 1.0))],
        &[(0, 1), (1, 2)],
    );
    let before = at_end.clone();
    assert_eq!(fix_t_junctions(&mut at_end, 0.01), 0);
    assert_eq!(at_end, before);

    let mut far = truss2(
        vec![support(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(0.5, 0.5)), free(3, p2(0.5, 1.0))],
        &[(0, 1), (2, 3)],
    );
    let before = far.clone();
    assert_eq!(fix_t_junctions(&mut far, 0.01), 0);
    assert_eq!(far, before);
}

#[test]
fn narrow_triangles() {
    let mut eq = truss2(
        vec![free(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(0.5, 3f64.sqrt() / 2.0))],
        &[(0, 1), (1, 2), (0, 2)],
    );
    assert_eq!(fix_narrow_triangles(&mut eq, 0.1), 0);

    let mut thin = truss2(
        vec![free(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(0.5, 1e-4))],
        &[(0, 1), (1, 2), (0, 2)],
    );
    assert_eq!(fix_narrow_triangles(&mut thin, 0.1), 1);
    assert!(thin.find_bar(0, 1).is_none());
    assert_eq!(thin.bars.len(), 2);
}

#[test]
fn narrow_triangles_sharing_their_longest_edge() {
    let mut t = truss2(
        vec![free(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(0.5, 1e-3)), free(3, p2(0.4, -1e-3))],
        &[(0, 1), (1, 2), (0, 2), (1, 3), (0, 3)],
    );
    // Enumerate the triangles by hand: both use 0-1 as their longest edge.
    let longest: Vec<(usize, usize)> = [[0, 1, 2], [0, 1, 3]]
        .iter()
        .map(|tri| {
            let pairs = [(tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])];
            *pairs
                .iter()
                .max_by(|x, y| {
                    let l = |p: &(usize, usize)| (t.joints[p.0].position - t.joints[p.1].position).norm();
                    l(x).total_cmp(&l(y))
                })
                .unwrap()
        })
        .collect();
    assert_eq!(longest, vec![(0, 1), (0, 1)]);
    assert_eq!(fix_narrow_triangles(&mut t, 0.1), 1);
    assert_eq!(t.bars.len(), 4);
    assert!(t.find_bar(0, 1).is_none());
}

#[test]
fn valence_two_examples() {
    let mut chain = truss2(
        vec![support(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), loaded(2, p2(2.0, 0.0), p2(1.0, 0.0))],
        &[(0, 1), (1, 2)],
    );
    chain.bars[1].area = 2.0;
    assert_eq!(remove_valence_two(&mut chain, 5.0), 1);
    assert_eq!(chain.joints.len(), 2);
    assert_eq!(chain.bars.len(), 1);
    assert_eq!(chain.bars[0].area, 2.0);

    let mut corner = truss2(
        vec![support(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), loaded(2, p2(1.0, 1.0), p2(1.0, 0.0))],
        &[(0, 1), (1, 2)],
    );
    assert_eq!(remove_valence_two(&mut corner, 5.0), 0);
    assert_eq!(corner.joints.len(), 3);

    let mut long = truss2(
        vec![
            support(0, p2(0.0, 0.0)),
            free(1, p2(1.0, 0.0)),
            free(2, p2(2.0, 0.01)),
            free(3, p2(3.0, 0.0)),
            loaded(4, p2(4.0, 0.0), p2(1.0, 0.0)),
        ],
        &[(0, 1), (1, 2), (2, 3), (3, 4)],
    );
    assert_eq!(remove_valence_two(&mut long, 5.0), 3);
    assert_eq!(long.bars.len(), 1);
    assert_eq!(long.bars[0].key(), (0, 1));
}

#[test]
fn valence_two_removal_keeps_equilibrium() {
    let mut t = truss2(
        vec![support(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), loaded(2, p2(3.0, 0.0), p2(1.0, 0.0))],
        &[(0, 1), (1, 2)],
    );
    let r = solve_alg_a(&t, 1.0).unwrap();
    apply_alg_a(&mut t, &r);
    remove_valence_two(&mut t, 5.0);
    assert!(equilibrium_residual(&t, 0).unwrap() < 1e-12);
}

#[test]
fn clean_truss_is_a_fixpoint() {
    let spec = fixture("two_bar_fan");
    let mut t = init_truss(&spec, 1).unwrap();
    let r = solve_alg_a(&t, 1.0).unwrap();
    apply_alg_a(&mut t, &r);
    let t = drop_unused_bars(&t);
    assert_eq!(t.bars.len(), 2);
    let (out, stats) = apply_local_pass(&t, &LocalPassConfig::for_spec(&spec)).unwrap();
    assert_eq!(out, t);
    assert_eq!(stats.passes, 1);
    assert_eq!(stats.total(), 0);
}

#[test]
fn local_pass_shrinks_ground_structures_and_keeps_spec_joints() {
    for name in fixture_names() {
        let spec = fixture(&name);
        let mut t = init_truss(&spec, spec.params.grid_n.unwrap_or(4)).unwrap();
        let r = solve_alg_a(&t, spec.sigma).unwrap();
        apply_alg_a(&mut t, &r);
        let (out, _) = apply_local_pass(&t, &LocalPassConfig::for_spec(&spec)).unwrap();
        if t.bars.len() > spec.joints.len() * (spec.joints.len() - 1) / 2 {
            assert!(out.bars.len() < t.bars.len(), "{name}");
        }
        for j in &spec.joints {
            let k = out.joint_index(j.id).unwrap_or_else(|| panic!("{name}: joint {} lost", j.id));
            assert_eq!(out.joints[k].position, j.position);
            assert_eq!(out.joints[k].kind, j.kind);
        }
        assert!(out.check().is_ok());
    }
}
