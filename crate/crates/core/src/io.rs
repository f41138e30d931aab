//! JSON spec and truss files, SVG and OBJ export.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    validate_spec, Aabb, Bar, DesignRegion, FunctionalSpec, Joint, JointKind, PipelineParams, Point, Truss,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxFile {
    /// `null` leaves that side open.
    pub min: Vec<Option<f64>>,
    pub max: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoxFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<BoxFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointFile {
    pub id: u32,
    pub pos: Vec<f64>,
    pub kind: JointKind,
    /// One force per load case; may be omitted for unloaded joints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loads: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub dimension: usize,
    pub joints: Vec<JointFile>,
    #[serde(default = "one")]
    pub load_cases: usize,
    #[serde(default)]
    pub region: RegionFile,
    #[serde(default = "unit")]
    pub sigma: f64,
    #[serde(default)]
    pub params: PipelineParams,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn point(v: &[f64], dim: usize, what: &str) -> Result<Point> {
    if v.len() != dim {
        return Err(Error::Schema(format!("{what}: expected {dim} coordinates, found {}", v.len())));
    }
    let mut p = Point::zeros();
    for (a, x) in v.iter().enumerate() {
        p[a] = *x;
    }
    Ok(p)
}

fn coords(p: &Point, dim: usize) -> Vec<f64> {
    p.iter().take(dim).copied().collect()
}

fn box_from_file(b: &BoxFile, dim: usize, what: &str) -> Result<Aabb> {
    if b.min.len() != dim || b.max.len() != dim {
        return Err(Error::Schema(format!("{what}: expected {dim} coordinates per corner")));
    }
    let mut out = Aabb::unbounded();
    for a in 0..dim {
        out.min[a] = b.min[a].unwrap_or(f64::NEG_INFINITY);
        out.max[a] = b.max[a].unwrap_or(f64::INFINITY);
    }
    Ok(out)
}

fn box_to_file(b: &Aabb, dim: usize) -> BoxFile {
    let side = |v: &[f64]| v[..dim].iter().map(|x| x.is_finite().then_some(*x)).collect();
    BoxFile { min: side(&b.min), max: side(&b.max) }
}

fn joint_from_file(j: &JointFile, dim: usize, cases: usize) -> Result<Joint> {
    let what = format!("joint {}", j.id);
    let loads = match &j.loads {
        None => vec![Point::zeros(); cases],
        Some(ls) => {
            if ls.len() != cases {
                return Err(Error::Schema(format!("{what}: {} loads for {cases} load cases", ls.len())));
            }
            ls.iter().map(|l| point(l, dim, &what)).collect::<Result<_>>()?
        }
    };
    Ok(Joint { id: j.id, position: point(&j.pos, dim, &what)?, kind: j.kind, loads })
}

fn joint_to_file(j: &Joint, dim: usize) -> JointFile {
    let loads =
        (j.loads.iter().any(|l| *l != Point::zeros())).then(|| j.loads.iter().map(|l| coords(l, dim)).collect());
    JointFile { id: j.id, pos: coords(&j.position, dim), kind: j.kind, loads }
}

impl SpecFile {
    /// Schema-level conversion; the semantic checks are [`validate_spec`].
    pub fn to_spec(&self) -> Result<FunctionalSpec> {
        let dim = self.dimension;
        if dim != 2 && dim != 3 {
            return Err(Error::Schema(format!("dimension must be 2 or 3, found {dim}")));
        }
        if self.load_cases == 0 {
            return Err(Error::Schema("load_cases must be at least 1".into()));
        }
        let joints = self
            .joints
            .iter()
            .map(|j| joint_from_file(j, dim, self.load_cases))
            .collect::<Result<Vec<_>>>()?;
        let bounds = match &self.region.bounds {
            Some(b) => box_from_file(b, dim, "region bounds")?,
            None => Aabb::unbounded(),
        };
        let obstacles = self
            .region
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| box_from_file(o, dim, &format!("obstacle {i}")))
            .collect::<Result<_>>()?;
        Ok(FunctionalSpec {
            dim,
            joints,
            load_cases: self.load_cases,
            region: DesignRegion { bounds, obstacles },
            sigma: self.sigma,
            params: self.params.clone(),
        })
    }

    pub fn from_spec(spec: &FunctionalSpec) -> Self {
        let d = spec.dim;
        let bounds = (spec.region.bounds != Aabb::unbounded()).then(|| box_to_file(&spec.region.bounds, d));
        SpecFile {
            dimension: d,
            joints: spec.joints.iter().map(|j| joint_to_file(j, d)).collect(),
            load_cases: spec.load_cases,
            region: RegionFile { bounds, obstacles: spec.region.obstacles.iter().map(|o| box_to_file(o, d)).collect() },
            sigma: spec.sigma,
            params: spec.params.clone(),
        }
    }
}

/// Parses and validates a spec document.
pub fn parse_spec_str(text: &str) -> Result<FunctionalSpec> {
    let file: SpecFile = serde_json::from_str(text)
        .map_err(|e| Error::Schema(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    let spec = file.to_spec()?;
    let violations = validate_spec(&spec);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations));
    }
    Ok(spec)
}

pub fn parse_spec(path: &Path) -> Result<FunctionalSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_spec_str(&text).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Hex SHA-256 of the canonical JSON form of a spec.
pub fn spec_hash(spec: &FunctionalSpec) -> String {
    let canonical = serde_json::to_string(&SpecFile::from_spec(spec)).expect("spec serializes");
    Sha256::digest(canonical.as_bytes()).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarFile {
    /// Joint ids.
    pub ends: [u32; 2],
    pub area: f64,
    pub force_densities: Vec<f64>,
    pub governing_case: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub min_area: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub spec_hash: String,
    pub params: PipelineParams,
    pub phase: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrussFile {
    pub dimension: usize,
    pub load_cases: usize,
    pub joints: Vec<JointFile>,
    pub bars: Vec<BarFile>,
    pub volume: f64,
    pub provenance: Provenance,
}

impl TrussFile {
    pub fn new(truss: &Truss, spec: &FunctionalSpec, phase: &str) -> Self {
        let d = truss.dim;
        let bars = truss
            .bars
            .iter()
            .map(|b| BarFile {
                ends: [truss.joints[b.ends.0].id, truss.joints[b.ends.1].id],
                area: b.area,
                force_densities: b.force_densities.clone(),
                governing_case: b.governing_case,
                min_area: b.min_area,
            })
            .collect();
        TrussFile {
            dimension: d,
            load_cases: truss.load_cases,
            joints: truss.joints.iter().map(|j| joint_to_file(j, d)).collect(),
            bars,
            volume: truss.total_volume(),
            provenance: Provenance { spec_hash: spec_hash(spec), params: spec.params.clone(), phase: phase.to_string() },
        }
    }

    pub fn to_truss(&self) -> Result<Truss> {
        let dim = self.dimension;
        if dim != 2 && dim != 3 {
            return Err(Error::Schema(format!("dimension must be 2 or 3, found {dim}")));
        }
        let joints = self
            .joints
            .iter()
            .map(|j| joint_from_file(j, dim, self.load_cases))
            .collect::<Result<Vec<_>>>()?;
        let index: std::collections::HashMap<u32, usize> = joints.iter().enumerate().map(|(i, j)| (j.id, i)).collect();
        if index.len() != joints.len() {
            return Err(Error::Schema("duplicate joint id".into()));
        }
        let mut bars = Vec::with_capacity(self.bars.len());
        for (i, b) in self.bars.iter().enumerate() {
            let end = |id: u32| index.get(&id).copied().ok_or_else(|| Error::Schema(format!("bar {i}: unknown joint {id}")));
            if b.force_densities.len() != self.load_cases || b.governing_case >= self.load_cases {
                return Err(Error::Schema(format!("bar {i}: force densities do not match {} load cases", self.load_cases)));
            }
            bars.push(Bar {
                ends: (end(b.ends[0])?, end(b.ends[1])?),
                area: b.area,
                force_densities: b.force_densities.clone(),
                governing_case: b.governing_case,
                min_area: b.min_area,
            });
        }
        let truss = Truss { dim, load_cases: self.load_cases, joints, bars };
        truss.check()?;
        Ok(truss)
    }
}

pub fn truss_to_json(truss: &Truss, spec: &FunctionalSpec, phase: &str) -> String {
    let mut s = serde_json::to_string_pretty(&TrussFile::new(truss, spec, phase)).expect("truss serializes");
    s.push('\n');
    s
}

pub fn read_truss(path: &Path) -> Result<Truss> {
    let text = std::fs::read_to_string(path)?;
    let file: TrussFile = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column())))?;
    file.to_truss()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvgOptions {
    /// Canvas width in pixels; the height follows the aspect ratio.
    pub width: f64,
    /// Stroke width of the thickest bar as a fraction of the drawing extent.
    pub max_stroke: f64,
    pub joint_radius: f64,
}

impl Default for SvgOptions {
    fn default() -> Self {
        SvgOptions { width: 800.0, max_stroke: 0.03, joint_radius: 0.008 }
    }
}

const TENSION: &str = "#1f4fd8";
const COMPRESSION: &str = "#d62728";
const UNLOADED: &str = "#888888";

fn joint_color(kind: JointKind) -> &'static str {
    match kind {
        JointKind::Support => "#d62728",
        JointKind::Loaded => "#1f4fd8",
        JointKind::Intermediate => "#f2c80f",
    }
}

/// Planar drawing: tension bars blue, compression red, stroke width
/// proportional to √area; zero-area bars are left out.
pub fn export_svg(truss: &Truss, opts: &SvgOptions) -> Result<String> {
    if truss.dim != 2 {
        return Err(Error::Dimension { expected: 2, found: truss.dim });
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for j in &truss.joints {
        for a in 0..2 {
            lo[a] = lo[a].min(j.position[a]);
            hi[a] = hi[a].max(j.position[a]);
        }
    }
    if truss.joints.is_empty() {
        (lo, hi) = ([0.0; 2], [1.0; 2]);
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let margin = 0.05 * extent;
    let (w, h) = (hi[0] - lo[0] + 2.0 * margin, hi[1] - lo[1] + 2.0 * margin);
    let px = opts.width;
    let py = opts.width * h / w;
    let amax = truss.bars.iter().map(|b| b.area).fold(0.0, f64::max);
    let stroke = |a: f64| if amax > 0.0 { opts.max_stroke * extent * (a / amax).sqrt() } else { 0.0 };
    // Flip y so that up is up.
    let tx = |p: &Point| (p.x - lo[0] + margin, hi[1] + margin - p.y);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{px:.0}" height="{py:.0}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<g stroke-linecap="round">"#);
    let tol = 1e-9 * truss.bars.iter().map(|b| b.governing_density().abs()).fold(0.0, f64::max);
    for (i, b) in truss.bars.iter().enumerate() {
        if b.area <= 0.0 {
            continue;
        }
        let w = b.governing_density();
        let color = if w > tol {
            TENSION
        } else if w < -tol {
            COMPRESSION
        } else {
            UNLOADED
        };
        let (x1, y1) = tx(&truss.joints[b.ends.0].position);
        let (x2, y2) = tx(&truss.joints[b.ends.1].position);
        let _ = writeln!(
            out,
            r#"<line data-bar="{i}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="{color}" stroke-width="{}"/>"#,
            stroke(b.area)
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "<g>");
    for j in &truss.joints {
        let (x, y) = tx(&j.position);
        let _ = writeln!(
            out,
            r#"<circle data-joint="{}" cx="{x}" cy="{y}" r="{}" fill="{}"/>"#,
            j.id,
            opts.joint_radius * extent,
            joint_color(j.kind)
        );
    }
    let _ = writeln!(out, "</g>\n</svg>");
    Ok(out)
}

/// Joints as vertices and bars as line elements.
pub fn export_obj(truss: &Truss) -> Result<String> {
    if truss.dim != 3 {
        return Err(Error::Dimension { expected: 3, found: truss.dim });
    }
    let mut out = String::from("# trussforge truss\n");
    for j in &truss.joints {
        let p = j.position;
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for b in &truss.bars {
        let _ = writeln!(out, "l {} {}", b.ends.0 + 1, b.ends.1 + 1);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjBarData {
    /// 1-based vertex indices, as in the OBJ file.
    pub vertices: [usize; 2],
    pub area: f64,
    pub force_densities: Vec<f64>,
}

/// Sidecar JSON with the per-bar data an OBJ file cannot hold.
pub fn export_obj_sidecar(truss: &Truss) -> String {
    let data: Vec<ObjBarData> = truss
        .bars
        .iter()
        .map(|b| ObjBarData {
            vertices: [b.ends.0 + 1, b.ends.1 + 1],
            area: b.area,
            force_densities: b.force_densities.clone(),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&data).expect("bar data serializes");
    s.push('\n');
    s
}
