mod common;

use common::*;
use trussforge::gsm::{apply_alg_a, solve_alg_a};
use trussforge::stability::{check_external_stability, counting_condition, stabilize};
use trussforge::{Error, Joint, Truss};

/// Pratt-like cantilever off a wall at x = 0: bottom chord x = 0..=7, top
/// chord x = 0..=6, verticals and one diagonal per panel. 15 joints, 26 bars.
fn pratt() -> Truss {
    let mut joints: Vec<Joint> = Vec::new();
    for x in 0..=7 {
        let p = p2(x as f64, 0.0);
        joints.push(if x == 0 { support(x, p) } else if x == 7 { loaded(x, p, p2(0.0, -1.0)) } else { free(x, p) });
    }
    for x in 0..=6 {
        let p = p2(x as f64, 1.0);
        joints.push(if x == 0 { support(8 + x, p) } else { free(8 + x, p) });
    }
    let top = |x: usize| 8 + x;
    let mut bars = Vec::new();
    for x in 0..7 {
        bars.push((x, x + 1));
    }
    for x in 0..6 {
        bars.push((top(x), top(x + 1)));
    }
    for x in 1..=6 {
        bars.push((x, top(x)));
    }
    for x in 0..6 {
        bars.push((top(x), x + 1));
    }
    bars.push((top(6), 7));
    truss2(joints, &bars)
}

/// The same with one more top joint hanging off a single bar.
fn pratt_b1() -> Truss {
    let mut t = pratt();
    t.joints.push(free(15, p2(7.0, 1.0)));
    let n = t.joints.len();
    t.bars.push(trussforge::Bar { area: 1.0, ..trussforge::Bar::new(8 + 6, n - 1, 1) });
    t
}

#[test]
fn counting_triples() {
    assert_eq!((counting_condition(26, 4, 15, 2).stable, counting_condition(26, 4, 15, 2).deficit), (true, 0));
    assert_eq!((counting_condition(27, 4, 16, 2).stable, counting_condition(27, 4, 16, 2).deficit), (false, 1));
    assert_eq!((counting_condition(28, 4, 16, 2).stable, counting_condition(28, 4, 16, 2).deficit), (true, 0));
}

#[test]
fn pratt_layouts_count_as_built() {
    let a = pratt();
    assert_eq!((a.bars.len(), a.num_supports(), a.joints.len()), (26, 2, 15));
    assert!(a.check().is_ok());
    assert!(check_external_stability(&a).stable);

    let b1 = pratt_b1();
    assert_eq!((b1.bars.len(), b1.joints.len()), (27, 16));
    let c = check_external_stability(&b1);
    assert_eq!((c.stable, c.deficit), (false, 1));
}

#[test]
fn stabilize_adds_exactly_the_missing_bar() {
    let b1 = pratt_b1();
    let spec = spec2(b1.joints.iter().filter(|j| j.kind.is_fixed()).cloned().collect());
    let out = stabilize(&b1, &spec, 0.01).unwrap();
    assert_eq!(out.bars.len(), 28);
    assert!(check_external_stability(&out).stable);
    assert_eq!(&out.bars[..27], &b1.bars[..]);
    // The hanging joint gets its vertical.
    let added = &out.bars[27];
    assert_eq!(added.key(), (7, 15));
    assert_eq!((added.area, added.min_area), (0.01, 0.01));
    assert!(added.force_densities.iter().all(|&w| w == 0.0));
}

#[test]
fn stabilize_costs_at_most_the_added_minimum_areas() {
    let b1 = pratt_b1();
    let spec = spec2(b1.joints.iter().filter(|j| j.kind.is_fixed()).cloned().collect());
    let before = solve_alg_a(&b1, 1.0).unwrap().volume;
    let a_min = 0.002;
    let mut out = stabilize(&b1, &spec, a_min).unwrap();
    let r = solve_alg_a(&out, 1.0).unwrap();
    apply_alg_a(&mut out, &r);
    let extra: f64 = (27..out.bars.len()).map(|i| a_min * out.bar_length(i)).sum();
    assert!(r.volume <= before + extra + 1e-9, "{} > {} + {extra}", r.volume, before);
    assert!(out.bars[27].area >= a_min - 1e-12);
}

#[test]
fn stable_truss_is_unchanged() {
    let a = pratt();
    let spec = spec2(Vec::new());
    assert_eq!(stabilize(&a, &spec, 0.01).unwrap(), a);
}

#[test]
fn sparse_chain_takes_the_shortest_candidates() {
    let t = truss2(
        vec![support(0, p2(0.0, 0.0)), support(1, p2(0.0, 1.0)), free(2, p2(1.0, 0.0)), loaded(3, p2(2.0, 0.0), p2(0.0, -1.0))],
        &[(0, 2), (2, 3)],
    );
    let c = check_external_stability(&t);
    assert_eq!(c.deficit, 2);
    // Candidates by hand: not two supports, not existing, not through a third
    // joint (0-3 passes through 2), sorted by length.
    let mut cands: Vec<(f64, (usize, usize))> = [(1, 2), (1, 3)]
        .iter()
        .map(|&(a, b)| ((t.joints[a].position - t.joints[b].position).norm(), (a, b)))
        .collect();
    cands.sort_by(|x, y| x.0.total_cmp(&y.0));
    let out = stabilize(&t, &spec2(Vec::new()), 0.1).unwrap();
    assert_eq!(out.bars.len(), 4);
    let added: Vec<(usize, usize)> = out.bars[2..].iter().map(|b| b.key()).collect();
    assert_eq!(added, cands.iter().map(|c| c.1).collect::<Vec<_>>());
    assert!(check_external_stability(&out).stable);
}

#[test]
fn exhausted_candidates_are_an_error() {
    let t = truss2(vec![support(0, p2(0.0, 0.0)), free(1, p2(1.0, 0.0)), free(2, p2(2.0, 0.0))], &[(0, 1), (1, 2)]);
    assert!(matches!(stabilize(&t, &spec2(Vec::new()), 0.1), Err(Error::NoStabilizingCandidate(_))));
}
