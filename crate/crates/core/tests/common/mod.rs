#![allow(dead_code)]

use std::path::PathBuf;

use trussforge::{Bar, FunctionalSpec, Joint, JointKind, PipelineParams, Point, Truss};

pub fn p2(x: f64, y: f64) -> Point {
    Point::new(x, y, 0.0)
}

pub fn support(id: u32, p: Point) -> Joint {
    Joint { id, position: p, kind: JointKind::Support, loads: vec![Point::zeros()] }
}

pub fn loaded(id: u32, p: Point, f: Point) -> Joint {
    Joint { id, position: p, kind: JointKind::Loaded, loads: vec![f] }
}

pub fn free(id: u32, p: Point) -> Joint {
    Joint::intermediate(id, p, 1)
}

pub fn spec2(joints: Vec<Joint>) -> FunctionalSpec {
    let load_cases = joints.first().map_or(1, |j| j.loads.len());
    FunctionalSpec {
        dim: 2,
        joints,
        load_cases,
        region: Default::default(),
        sigma: 1.0,
        params: PipelineParams::default(),
    }
}

/// Truss over `joints` with unit-area bars between the given index pairs.
pub fn truss2(joints: Vec<Joint>, bars: &[(usize, usize)]) -> Truss {
    let k = joints.first().map_or(1, |j| j.loads.len());
    Truss {
        dim: 2,
        load_cases: k,
        joints,
        bars: bars
            .iter()
            .map(|&(a, b)| Bar { area: 1.0, ..Bar::new(a, b, k) })
            .collect(),
    }
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> FunctionalSpec {
    trussforge::io::parse_spec(&fixture_dir().join(format!("{name}.json"))).expect("fixture parses")
}

pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

/// Single-case copy of a multi-case truss.
pub fn only_case(truss: &Truss, k: usize) -> Truss {
    let mut t = truss.clone();
    t.load_cases = 1;
    for j in &mut t.joints {
        j.loads = vec![j.loads[k]];
    }
    for b in &mut t.bars {
        b.force_densities = vec![b.force_densities[k]];
        b.governing_case = 0;
    }
    t
}
