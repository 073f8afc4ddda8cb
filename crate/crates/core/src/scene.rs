//! Declarative scenes, embedded presets, and the generate / analyze pipeline behind the CLI.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meshkit::{self, Diagnostics, TriMesh};
use crate::polytope::{self, GreatArc, Orientation, PolytopeKind};
use crate::quat::{Quaternion, UnitQuaternion};
use crate::s3geom::{frame_from_pole, geodesic_distance, ProjectionFrame};
use crate::surfaces::{self, CogSpec, ShellSpec, SurfaceSpec};
use crate::tubes::{self, TubeSpec};

/// Printability floor for walls, struts and gaps, in millimeters.
pub const MIN_FEATURE_MM: f64 = 1.0;
pub const DEFAULT_WELD_TOLERANCE_MM: f64 = 1e-6;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_POLE: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub design: Design,
    #[serde(default)]
    pub frame: FrameSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tube: Option<TubeSpec>,
    pub target_bbox_mm: [f64; 3],
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Design {
    Polytope {
        kind: PolytopeKind,
        orientation: Orientation,
        #[serde(default)]
        half: bool,
    },
    Surface {
        surface: SurfaceSpec,
        shell: ShellSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cog: Option<CogSpec>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub pole: [f64; 4],
    /// Left rotation applied to the design before projection.
    #[serde(default = "identity4")]
    pub extra_rotation: [f64; 4],
}

fn identity4() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            pole: [0.0, 0.0, 0.0, 1.0],
            extra_rotation: identity4(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Stl,
    Obj,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Stl => "stl",
            Format::Obj => "obj",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn quaternion_from(v: [f64; 4], what: &str) -> Result<UnitQuaternion> {
    UnitQuaternion::normalize(Quaternion::new(v[0], v[1], v[2], v[3]))
        .map_err(|_| Error::Schema(format!("{what} must be a nonzero, finite quaternion")))
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Scene> {
        let scene: Scene = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scene> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scene::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// Structural checks that need no geometry.
    pub fn validate(&self) -> Result<()> {
        self.frame()?;
        if self.target_bbox_mm.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Schema("target_bbox_mm entries must be positive".into()));
        }
        let schema = |e: Error| match e {
            Error::InvalidSpec(msg) => Error::Schema(msg),
            other => other,
        };
        match &self.design {
            Design::Polytope { .. } => {
                let tube = self
                    .tube
                    .ok_or_else(|| Error::Schema("polytope designs need a tube".into()))?;
                tube.validate().map_err(schema)?;
            }
            Design::Surface { surface, shell, cog } => {
                surface.validate().map_err(schema)?;
                shell.validate().map_err(schema)?;
                if let Some(c) = cog {
                    c.validate(shell).map_err(schema)?;
                }
            }
        }
        Ok(())
    }

    pub fn frame(&self) -> Result<ProjectionFrame> {
        let pole = quaternion_from(self.frame.pole, "frame.pole")?;
        let extra = quaternion_from(self.frame.extra_rotation, "frame.extra_rotation")?;
        Ok(frame_from_pole(pole)?.with_design_rotation(extra))
    }

    fn tube_spec(&self) -> Result<TubeSpec> {
        self.tube
            .ok_or_else(|| Error::Schema("polytope designs need a tube".into()))
    }
}

/// The skeleton arcs of a polytope design after orientation and the optional half cut.
pub fn design_arcs(
    kind: PolytopeKind,
    orientation: Orientation,
    half: bool,
    f: &ProjectionFrame,
) -> Result<Vec<GreatArc>> {
    let p = polytope::orient(&polytope::build(kind), orientation, f)?;
    let arcs = polytope::skeleton_arcs(&p)?;
    Ok(if half { polytope::half_cut(&arcs, f) } else { arcs })
}

/// Geodesic distance from the design's core curves to the pole.
fn arcs_pole_distance(arcs: &[GreatArc], f: &ProjectionFrame) -> f64 {
    let top = arcs
        .iter()
        .map(|a| a.height_range(f).1)
        .fold(f64::NEG_INFINITY, f64::max);
    top.clamp(-1.0, 1.0).acos()
}

fn refuse_infinite(detail: &str) -> Error {
    Error::PoleCollision(format!("{detail}; its projection would have infinite volume"))
}

/// Builds the unscaled mesh for a scene.
pub fn build_mesh(scene: &Scene) -> Result<TriMesh> {
    let f = scene.frame()?;
    match &scene.design {
        Design::Polytope {
            kind,
            orientation,
            half,
        } => {
            let tube = scene.tube_spec()?;
            let arcs = design_arcs(*kind, *orientation, *half, &f)?;
            if !half && arcs_pole_distance(&arcs, &f) <= tube.radius_s3 + tubes::POLE_CLEARANCE {
                return Err(refuse_infinite("the full design passes through the projection point"));
            }
            tubes::mesh_design(&arcs, &tube, &f)
        }
        Design::Surface { surface, shell, cog } => surfaces::mesh_shell(surface, shell, &f, cog.as_ref()),
    }
}

/// Result of the in-memory pipeline: the scaled mesh and its diagnostics.
#[derive(Clone, Debug)]
pub struct Generated {
    pub mesh: TriMesh,
    pub diagnostics: Diagnostics,
    /// Human-readable reasons the mesh fails validation; empty when printable.
    pub failures: Vec<String>,
}

impl Generated {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// build → weld → scale → validate, without touching the file system.
pub fn generate(scene: &Scene, weld_tolerance_mm: f64) -> Result<Generated> {
    let raw = build_mesh(scene)?;
    let longest = raw.extents().into_iter().fold(0.0, f64::max);
    let target = scene.target_bbox_mm.into_iter().fold(0.0, f64::max);
    let mm_per_unit = if longest > 0.0 { target / longest } else { 1.0 };
    let welded = meshkit::weld(&raw, weld_tolerance_mm / mm_per_unit);
    let mesh = meshkit::scale_to(&welded, scene.target_bbox_mm);
    let diagnostics = meshkit::validate(&mesh);
    let failures = check(&mesh, &diagnostics);
    Ok(Generated {
        mesh,
        diagnostics,
        failures,
    })
}

fn check(mesh: &TriMesh, d: &Diagnostics) -> Vec<String> {
    let mut out = Vec::new();
    for (i, shell) in mesh.shells.iter().enumerate() {
        if !d.watertight[i] {
            out.push(format!("shell {i} is not watertight"));
        }
        if let Some(expected) = shell.expected_euler {
            if expected != d.euler_characteristic[i] {
                out.push(format!(
                    "shell {i} has Euler characteristic {} where {expected} was predicted",
                    d.euler_characteristic[i]
                ));
            }
        }
    }
    match d.min_feature_mm {
        Some(m) if m < MIN_FEATURE_MM => out.push(format!(
            "minimum feature {m:.3} mm is below the {MIN_FEATURE_MM} mm floor"
        )),
        _ => {}
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub weld_tolerance_mm: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub generated: Generated,
    pub mesh_path: PathBuf,
    pub diagnostics_path: PathBuf,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.generated.passed() {
            EXIT_OK
        } else {
            EXIT_VALIDATION
        }
    }
}

fn output_path(scene: &Scene, opts: &RunOptions, format: Format) -> PathBuf {
    if let Some(p) = &opts.out {
        return p.clone();
    }
    if let Some(p) = &scene.output.path {
        return p.clone();
    }
    let stem = scene.name.as_deref().unwrap_or("scene");
    PathBuf::from(format!("{stem}.{}", format.extension()))
}

/// Full pipeline including export of the mesh and a diagnostics JSON beside it.
pub fn run(scene: &Scene, opts: &RunOptions) -> Result<Outcome> {
    let format = opts.format.unwrap_or(scene.output.format);
    let generated = generate(scene, opts.weld_tolerance_mm.unwrap_or(DEFAULT_WELD_TOLERANCE_MM))?;
    let mesh_path = output_path(scene, opts, format);
    match format {
        Format::Stl => meshkit::export_stl(&generated.mesh, &mesh_path)?,
        Format::Obj => meshkit::export_obj(&generated.mesh, &mesh_path)?,
    }
    let diagnostics_path = mesh_path.with_extension("diagnostics.json");
    fs::write(&diagnostics_path, generated.diagnostics.to_json()).map_err(|e| Error::io(&diagnostics_path, e))?;
    Ok(Outcome {
        generated,
        mesh_path,
        diagnostics_path,
    })
}

/// Printability estimate computed from the design alone.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Analysis {
    pub feature_ratio: f64,
    /// Projected extents in model units.
    pub bbox: [f64; 3],
    /// Smallest wall, strut or gap in model units.
    pub min_feature: f64,
    /// Millimeters per model unit that bring the smallest feature up to the floor.
    pub min_scale_mm_per_unit: f64,
    pub bbox_at_min_scale_mm: [f64; 3],
    /// Millimeters per model unit at the scene's target bounding box.
    pub target_scale_mm_per_unit: f64,
    pub min_feature_at_target_mm: f64,
}

impl Analysis {
    fn new(feature_ratio: f64, bbox: [f64; 3], min_feature: f64, target_bbox_mm: [f64; 3]) -> Self {
        let min_scale = MIN_FEATURE_MM / min_feature;
        let longest = bbox.into_iter().fold(0.0, f64::max);
        let target = target_bbox_mm.into_iter().fold(0.0, f64::max);
        let target_scale = target / longest;
        Analysis {
            feature_ratio,
            bbox,
            min_feature,
            min_scale_mm_per_unit: min_scale,
            bbox_at_min_scale_mm: bbox.map(|x| x * min_scale),
            target_scale_mm_per_unit: target_scale,
            min_feature_at_target_mm: min_feature * target_scale,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("analysis serializes")
    }
}

const ANALYSIS_SAMPLES: usize = 16;

fn polytope_bbox(arcs: &[GreatArc], tube: &TubeSpec, f: &ProjectionFrame) -> Result<[f64; 3]> {
    let mut lo = crate::s3geom::PointR3::repeat(f64::INFINITY);
    let mut hi = crate::s3geom::PointR3::repeat(f64::NEG_INFINITY);
    for arc in arcs {
        for k in 0..=ANALYSIS_SAMPLES {
            let t = arc.t_start + (arc.t_end - arc.t_start) * k as f64 / ANALYSIS_SAMPLES as f64;
            let ring = tubes::tube_circle(arc, t, tube);
            for m in 0..ANALYSIS_SAMPLES {
                let s = std::f64::consts::TAU * m as f64 / ANALYSIS_SAMPLES as f64;
                let y = f.project_vec(&ring.point(s))?;
                lo = lo.inf(&y);
                hi = hi.sup(&y);
            }
        }
    }
    let d = hi - lo;
    Ok([d.x, d.y, d.z])
}

/// Feature ratio, projected bounding box and the scale needed for printability, without meshing.
pub fn analyze(scene: &Scene) -> Result<Analysis> {
    let f = scene.frame()?;
    match &scene.design {
        Design::Polytope {
            kind,
            orientation,
            half,
        } => {
            let tube = scene.tube_spec()?;
            let arcs = design_arcs(*kind, *orientation, *half, &f)?;
            if arcs.is_empty() {
                return Err(Error::InvalidSpec("design has no arcs left to analyze".into()));
            }
            if arcs_pole_distance(&arcs, &f) <= tube.radius_s3 + tubes::POLE_CLEARANCE {
                return Err(refuse_infinite("the design passes through the projection point"));
            }
            let ratio = tubes::euclidean_tube_ratio(&arcs, &tube, &f)?;
            let mut min_feature = arcs
                .iter()
                .map(|a| 2.0 * tube.radius_s3.sin() / (1.0 - a.height_range(&f).0))
                .fold(f64::INFINITY, f64::min);
            if let Some(c) = tubes::strut_clearance(&arcs, &tube, &f)? {
                min_feature = min_feature.min(c);
            }
            Ok(Analysis::new(
                ratio,
                polytope_bbox(&arcs, &tube, &f)?,
                min_feature,
                scene.target_bbox_mm,
            ))
        }
        Design::Surface { surface, shell, cog } => {
            let a = surfaces::analyze_shell(surface, shell, &f, cog.as_ref()).map_err(|e| match e {
                Error::PoleCollision(msg) => refuse_infinite(&msg),
                other => other,
            })?;
            Ok(Analysis::new(
                a.feature_ratio,
                a.extents,
                a.min_feature,
                scene.target_bbox_mm,
            ))
        }
    }
}

/// Maps an error to the CLI exit code.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::PoleCollision(_) | Error::AtPole { .. } => EXIT_POLE,
        Error::Schema(_)
        | Error::InvalidSpec(_)
        | Error::NotUnit { .. }
        | Error::ZeroQuaternion
        | Error::OutOfDomain { .. } => EXIT_SCHEMA,
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

pub struct Preset {
    pub name: &'static str,
    pub provenance: &'static str,
    json: &'static str,
}

impl Preset {
    pub fn scene(&self) -> Scene {
        Scene::from_json(self.json).expect("embedded preset is valid")
    }
}

pub const PRESETS: [Preset; 7] = [
    Preset {
        name: "24-cell",
        provenance: "24-cell skeleton, full design, projected from a cell center; 9.0 x 9.0 x 9.0 cm target",
        json: include_str!("../presets/24-cell.json"),
    },
    Preset {
        name: "half-120-cell",
        provenance: "southern half of the cell-centered 120-cell skeleton; 9.9 x 9.9 x 9.9 cm target",
        json: include_str!("../presets/half-120-cell.json"),
    },
    Preset {
        name: "half-600-cell",
        provenance: "southern half of the vertex-centered 600-cell skeleton; 9.9 x 9.9 x 9.9 cm target",
        json: include_str!("../presets/half-600-cell.json"),
    },
    Preset {
        name: "clifford-torus",
        provenance:
            "perforated Clifford torus through the projection point 1, punctured there; 10.8 x 10.8 x 3.4 cm target",
        json: include_str!("../presets/clifford-torus.json"),
    },
    Preset {
        name: "mobius",
        provenance: "round Sudanese Moebius strip projected from -j, punctured there; 15.2 x 10.9 x 6.2 cm target",
        json: include_str!("../presets/mobius.json"),
    },
    Preset {
        name: "klein",
        provenance: "round Klein bottle projected from -j, punctured at both preimages; 15.2 x 15.2 x 10.9 cm target",
        json: include_str!("../presets/klein.json"),
    },
    Preset {
        name: "knotted-cog",
        provenance: "trefoil torus-knot band with truncated-pyramid teeth; 3.8 x 3.4 x 1.3 cm target",
        json: include_str!("../presets/knotted-cog.json"),
    },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn list_presets() -> String {
    let width = PRESETS.iter().map(|p| p.name.len()).max().unwrap_or(0);
    PRESETS
        .iter()
        .map(|p| format!("{:width$}  {}\n", p.name, p.provenance))
        .collect()
}

/// Largest-first extents, the order used to compare against target boxes.
pub fn sorted_extents(e: [f64; 3]) -> [f64; 3] {
    let mut v = e;
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Geodesic distance between two points of S³ given as 4-vectors.
pub fn s3_distance(a: &nalgebra::Vector4<f64>, b: &nalgebra::Vector4<f64>) -> f64 {
    geodesic_distance(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_are_named_consistently() {
        assert_eq!(PRESETS.len(), 7);
        for p in &PRESETS {
            let s = p.scene();
            assert_eq!(s.name.as_deref(), Some(p.name));
        }
        assert!(list_presets().contains("half-120-cell"));
        assert!(list_presets().contains("clifford-torus"));
        assert_eq!(list_presets().lines().count(), 7);
    }

    #[test]
    fn scene_round_trips_through_json() {
        for p in &PRESETS {
            let s = p.scene();
            assert_eq!(Scene::from_json(&s.to_json()).unwrap(), s);
        }
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(Scene::from_json("{"), Err(Error::Schema(_))));
        let mut s = preset("24-cell").unwrap().scene();
        s.tube = None;
        assert!(matches!(Scene::from_json(&s.to_json()), Err(Error::Schema(_))));
        let mut s = preset("24-cell").unwrap().scene();
        s.frame.pole = [0.0; 4];
        assert!(matches!(Scene::from_json(&s.to_json()), Err(Error::Schema(_))));
        let text = preset("mobius")
            .unwrap()
            .json
            .replace("\"target_bbox_mm\"", "\"unknown\": 1, \"target_bbox_mm\"");
        assert!(matches!(Scene::from_json(&text), Err(Error::Schema(_))));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code_for(&Error::PoleCollision(String::new())), EXIT_POLE);
        assert_eq!(exit_code_for(&Error::Schema(String::new())), EXIT_SCHEMA);
        assert_eq!(exit_code_for(&Error::io("x", std::io::Error::other("boom"))), EXIT_IO);
    }

    #[test]
    fn full_design_through_pole_is_refused() {
        let mut s = preset("half-600-cell").unwrap().scene();
        if let Design::Polytope { half, .. } = &mut s.design {
            *half = false;
        }
        let err = analyze(&s).unwrap_err();
        assert!(matches!(err, Error::PoleCollision(_)));
        assert!(err.to_string().contains("infinite volume"));
    }

    #[test]
    fn torus_without_puncture_is_refused() {
        let mut s = preset("clifford-torus").unwrap().scene();
        if let Design::Surface { shell, .. } = &mut s.design {
            shell.punctures.clear();
        }
        let err = analyze(&s).unwrap_err();
        assert!(err.to_string().contains("infinite volume"));
    }
}
