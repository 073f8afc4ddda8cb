//! Parameterized surfaces in S³ and their thickened, perforated shells.
//!
//! Every surface here has the form
//! `p(θ, φ) = (cos θ cos φ, cos θ sin φ, sin θ cos rφ, sin θ sin rφ)`:
//! `r = 1` is the Clifford torus `e^{iφ}e^{jθ}`, `r = 2` the Sudanese Möbius
//! strip (θ ∈ [0, π)) and the Klein bottle (θ ∈ [0, 2π)), and a fraction
//! `r = num/den` with θ held near a constant is a torus-knot band.
//!
//! Shells are the ε-neighbourhood `cos ψ·p + sin ψ·n`, `|ψ| ≤ ε`, cut into a
//! grid of struts. They are meshed on a tensor lattice in (θ, φ) whose cells
//! are either solid or empty; the boundary of the solid cells (top, bottom
//! and side walls) is the output surface.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_8, PI, TAU};

use nalgebra::{Matrix3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meshkit::TriMesh;
use crate::quat::Quaternion;
use crate::s3geom::{geodesic_distance, PointR3, PointS3, ProjectionFrame};
use crate::tubes::CHORD_ERROR;

const DOMAIN_SLACK: f64 = 1e-9;
const IDENTIFICATION_TOL: f64 = 1e-9;
const MAX_SUBDIVISION: usize = 64;
/// Geodesic clearance kept between solid material and the pole.
const POLE_CLEARANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfaceKind {
    CliffordTorus,
    SudaneseMobius,
    KleinBottle,
    TorusKnotBand {
        num: i64,
        den: i64,
        theta0: f64,
        half_width: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurfaceRepr", into = "SurfaceKind")]
pub struct SurfaceSpec {
    pub kind: SurfaceKind,
}

/// Flat wire form, so that stray keys are rejected for every kind.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SurfaceRepr {
    kind: String,
    num: Option<i64>,
    den: Option<i64>,
    theta0: Option<f64>,
    half_width: Option<f64>,
}

impl TryFrom<SurfaceRepr> for SurfaceSpec {
    type Error = String;

    fn try_from(r: SurfaceRepr) -> std::result::Result<Self, String> {
        let knot_fields = [
            r.num.is_some(),
            r.den.is_some(),
            r.theta0.is_some(),
            r.half_width.is_some(),
        ];
        let kind = match r.kind.as_str() {
            "torus-knot-band" => match (r.num, r.den, r.theta0, r.half_width) {
                (Some(num), Some(den), Some(theta0), Some(half_width)) => SurfaceKind::TorusKnotBand {
                    num,
                    den,
                    theta0,
                    half_width,
                },
                _ => return Err("torus-knot-band needs num, den, theta0 and half_width".into()),
            },
            other => {
                if knot_fields.contains(&true) {
                    return Err(format!("{other} takes no parameters"));
                }
                match other {
                    "clifford-torus" => SurfaceKind::CliffordTorus,
                    "sudanese-mobius" => SurfaceKind::SudaneseMobius,
                    "klein-bottle" => SurfaceKind::KleinBottle,
                    _ => return Err(format!("unknown surface kind '{other}'")),
                }
            }
        };
        Ok(SurfaceSpec { kind })
    }
}

impl From<SurfaceKind> for SurfaceSpec {
    fn from(kind: SurfaceKind) -> Self {
        SurfaceSpec { kind }
    }
}

impl From<SurfaceSpec> for SurfaceKind {
    fn from(s: SurfaceSpec) -> Self {
        s.kind
    }
}

/// Closed parameter rectangle `[θ_lo, θ_hi] × [φ_lo, φ_hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub theta: (f64, f64),
    pub phi: (f64, f64),
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl SurfaceSpec {
    pub fn new(kind: SurfaceKind) -> Result<Self> {
        let s = SurfaceSpec { kind };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if let SurfaceKind::TorusKnotBand {
            num,
            den,
            theta0,
            half_width,
        } = self.kind
        {
            if num <= 0 || den <= 0 || gcd(num, den) != 1 {
                return Err(Error::InvalidSpec(format!(
                    "knot fraction {num}/{den} must be positive and reduced"
                )));
            }
            if !(half_width > 0.0 && theta0 - half_width > 0.0 && theta0 + half_width < FRAC_PI_2) {
                return Err(Error::InvalidSpec("knot band must lie strictly inside (0, π/2)".into()));
            }
        }
        Ok(())
    }

    /// The multiplier `r` of φ in the last two coordinates.
    pub fn rate(&self) -> f64 {
        match self.kind {
            SurfaceKind::CliffordTorus => 1.0,
            SurfaceKind::SudaneseMobius | SurfaceKind::KleinBottle => 2.0,
            SurfaceKind::TorusKnotBand { num, den, .. } => num as f64 / den as f64,
        }
    }

    pub fn domain(&self) -> Domain {
        match self.kind {
            SurfaceKind::CliffordTorus | SurfaceKind::KleinBottle => Domain {
                theta: (0.0, TAU),
                phi: (0.0, PI),
            },
            SurfaceKind::SudaneseMobius => Domain {
                theta: (0.0, PI),
                phi: (0.0, PI),
            },
            SurfaceKind::TorusKnotBand {
                den,
                theta0,
                half_width,
                ..
            } => Domain {
                theta: (theta0 - half_width, theta0 + half_width),
                phi: (0.0, TAU * den as f64),
            },
        }
    }

    fn check_domain(&self, theta: f64, phi: f64) -> Result<()> {
        let d = self.domain();
        let inside = |x: f64, (lo, hi): (f64, f64)| x >= lo - DOMAIN_SLACK && x <= hi + DOMAIN_SLACK;
        if inside(theta, d.theta) && inside(phi, d.phi) && theta.is_finite() && phi.is_finite() {
            Ok(())
        } else {
            Err(Error::OutOfDomain { theta, phi })
        }
    }

    fn theta_periodic(&self) -> bool {
        matches!(self.kind, SurfaceKind::CliffordTorus | SurfaceKind::KleinBottle)
    }

    /// Where the φ = φ_hi edge is glued onto φ = φ_lo: θ ↦ g(θ), and whether the normal flips.
    fn phi_gluing(&self) -> (fn(f64) -> f64, bool) {
        match self.kind {
            SurfaceKind::CliffordTorus => (|t| (t + PI).rem_euclid(TAU), false),
            SurfaceKind::SudaneseMobius => (|t| PI - t, true),
            SurfaceKind::KleinBottle => (|t| (PI - t).rem_euclid(TAU), true),
            SurfaceKind::TorusKnotBand { .. } => (|t| t, false),
        }
    }

    /// χ of the closed (unpunctured, unperforated) parameter surface.
    pub fn euler_characteristic(&self) -> i64 {
        0
    }
}

/// `p(θ, φ)` without a domain check.
pub fn surface_point(spec: &SurfaceSpec, theta: f64, phi: f64) -> Vector4<f64> {
    let r = spec.rate();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (sr, cr) = (r * phi).sin_cos();
    Vector4::new(ct * cp, ct * sp, st * cr, st * sr)
}

fn partials_raw(spec: &SurfaceSpec, theta: f64, phi: f64) -> (Vector4<f64>, Vector4<f64>) {
    let r = spec.rate();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (sr, cr) = (r * phi).sin_cos();
    (
        Vector4::new(-st * cp, -st * sp, ct * cr, ct * sr),
        Vector4::new(-ct * sp, ct * cp, -r * st * sr, r * st * cr),
    )
}

pub fn eval_p(spec: &SurfaceSpec, theta: f64, phi: f64) -> Result<PointS3> {
    spec.check_domain(theta, phi)?;
    Ok(PointS3::new_unchecked(surface_point(spec, theta, phi)))
}

/// Analytic `(∂p/∂θ, ∂p/∂φ)`.
pub fn eval_partials(spec: &SurfaceSpec, theta: f64, phi: f64) -> Result<(Vector4<f64>, Vector4<f64>)> {
    spec.check_domain(theta, phi)?;
    Ok(partials_raw(spec, theta, phi))
}

/// Formal determinant of the matrix with rows `a`, `b`, `c` and `(1, i, j, k)`,
/// expanded along the last row and read back as a vector of R⁴.
pub fn formal_determinant(a: &Vector4<f64>, b: &Vector4<f64>, c: &Vector4<f64>) -> Vector4<f64> {
    Vector4::from_fn(|col, _| {
        let cols: Vec<usize> = (0..4).filter(|&k| k != col).collect();
        let minor = Matrix3::from_fn(|r, s| {
            let row = [a, b, c][r];
            row[cols[s]]
        });
        let sign = if (3 + col) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor.determinant()
    })
}

fn cramer_raw(spec: &SurfaceSpec, theta: f64, phi: f64) -> Result<Vector4<f64>> {
    let p = surface_point(spec, theta, phi);
    let (dt, dp) = partials_raw(spec, theta, phi);
    let n = formal_determinant(&p, &dt, &dp);
    let len = n.norm();
    if len < 1e-10 {
        return Err(Error::DegenerateTangent { theta, phi });
    }
    // The raw expansion already agrees in sign with the closed forms at (π/4, π/4).
    Ok(n / len)
}

/// Unit normal to the surface inside S³, orthogonal to `p`, `∂θp` and `∂φp`.
pub fn normal_cramer(spec: &SurfaceSpec, theta: f64, phi: f64) -> Result<Vector4<f64>> {
    spec.check_domain(theta, phi)?;
    cramer_raw(spec, theta, phi)
}

fn alt_normal_raw(spec: &SurfaceSpec, theta: f64, phi: f64) -> Vector4<f64> {
    let r = spec.rate();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (sr, cr) = (r * phi).sin_cos();
    Vector4::new(-st * sp, st * cp, ct * sr, -ct * cr)
}

/// The sheared "alternative" normal used for knot bands: unit and orthogonal to `p`,
/// but generally not to `∂φp`.
pub fn knot_alt_normal(spec: &SurfaceSpec, theta: f64, phi: f64) -> Result<Vector4<f64>> {
    spec.check_domain(theta, phi)?;
    Ok(alt_normal_raw(spec, theta, phi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormalMode {
    #[default]
    Cramer,
    KnotAlternative,
}

fn normal_raw(spec: &SurfaceSpec, theta: f64, phi: f64, mode: NormalMode) -> Result<Vector4<f64>> {
    match mode {
        NormalMode::Cramer => cramer_raw(spec, theta, phi),
        NormalMode::KnotAlternative => Ok(alt_normal_raw(spec, theta, phi)),
    }
}

fn offset_raw(spec: &SurfaceSpec, theta: f64, phi: f64, psi: f64, mode: NormalMode) -> Result<Vector4<f64>> {
    let p = surface_point(spec, theta, phi);
    let n = normal_raw(spec, theta, phi, mode)?;
    Ok(p * psi.cos() + n * psi.sin())
}

/// `r(θ, φ, ψ) = cos ψ·p(θ, φ) + sin ψ·n(θ, φ)`: distance |ψ| from the surface along the normal geodesic.
pub fn offset_r(spec: &SurfaceSpec, theta: f64, phi: f64, psi: f64, mode: NormalMode) -> Result<PointS3> {
    spec.check_domain(theta, phi)?;
    if psi.abs() >= FRAC_PI_2 && psi.abs() != FRAC_PI_2 {
        return Err(Error::InvalidSpec(format!("offset {psi} beyond π/2")));
    }
    let v = offset_raw(spec, theta, phi, psi, mode)?;
    Ok(PointS3::new_unchecked(v / v.norm()))
}

/// `(1/√2)(e^{iα} + e^{iβ}·j)`, the product parameterization of the Clifford torus.
pub fn clifford_product_form(alpha: f64, beta: f64) -> Quaternion {
    (Quaternion::exp_i(alpha) + Quaternion::exp_i(beta) * Quaternion::J).scale(FRAC_1_SQRT_2)
}

/// `q = (1/√2)(1 - j)`, the right factor that carries `(1/√2)(1 + j)` to `1`.
pub fn clifford_repositioning() -> Quaternion {
    Quaternion::new(FRAC_1_SQRT_2, 0.0, -FRAC_1_SQRT_2, 0.0)
}

/// Rectangle in (θ, φ) given by center and half-extents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Puncture {
    pub center: [f64; 2],
    pub half_size: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellSpec {
    /// Half-thickness ε of the shell in S³, radians.
    pub thickness_s3: f64,
    pub grid_theta: usize,
    pub grid_phi: usize,
    pub strut_fraction: f64,
    #[serde(default)]
    pub punctures: Vec<Puncture>,
    /// Perforate grid cells; a solid band otherwise.
    #[serde(default = "default_true")]
    pub holes: bool,
    #[serde(default)]
    pub normal_mode: NormalMode,
}

fn default_true() -> bool {
    true
}

impl ShellSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.thickness_s3 > 0.0 && self.thickness_s3 < FRAC_PI_8) {
            return Err(Error::InvalidSpec(format!(
                "shell thickness {} outside (0, π/8)",
                self.thickness_s3
            )));
        }
        if self.grid_theta < 2 || self.grid_phi < 2 {
            return Err(Error::InvalidSpec("grid counts must be at least 2".into()));
        }
        if !(0.1..=0.9).contains(&self.strut_fraction) {
            return Err(Error::InvalidSpec(format!(
                "strut fraction {} outside [0.1, 0.9]",
                self.strut_fraction
            )));
        }
        for p in &self.punctures {
            if p.half_size.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
                return Err(Error::InvalidSpec("puncture half-sizes must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CogSpec {
    pub tooth_count: usize,
    /// Added ψ extent of each tooth, radians.
    pub tooth_height: f64,
    pub top_fraction: f64,
    pub base_fraction: f64,
}

impl CogSpec {
    pub fn validate(&self, shell: &ShellSpec) -> Result<()> {
        let frac = |x: f64| x > 0.0 && x < 1.0;
        if self.tooth_count < 3 || !frac(self.top_fraction) || !frac(self.base_fraction) || self.tooth_height <= 0.0 {
            return Err(Error::InvalidSpec("cog parameters out of range".into()));
        }
        if self.tooth_height + shell.thickness_s3 >= FRAC_PI_8 {
            return Err(Error::InvalidSpec(
                "tooth height plus shell half-thickness must stay below π/8".into(),
            ));
        }
        Ok(())
    }
}

/// Parameter points where the surface passes through the frame's pole.
pub fn pole_preimages(spec: &SurfaceSpec, f: &ProjectionFrame) -> Vec<(f64, f64)> {
    let pole = f.pole_in_design();
    let d = spec.domain();
    let (nt, np) = (240, 240);
    let mut found: Vec<(f64, f64)> = Vec::new();
    let dist = |t: f64, p: f64| (surface_point(spec, t, p) - pole).norm();
    let step_t = (d.theta.1 - d.theta.0) / nt as f64;
    let step_p = (d.phi.1 - d.phi.0) / np as f64;
    for i in 0..nt {
        for j in 0..np {
            let (mut t, mut p) = (
                d.theta.0 + (i as f64 + 0.5) * step_t,
                d.phi.0 + (j as f64 + 0.5) * step_p,
            );
            if dist(t, p) > 2.0 * (step_t + step_p) * spec.rate().max(1.0) {
                continue;
            }
            // Gauss-Newton on |p(θ, φ) - pole|².
            for _ in 0..50 {
                let res = surface_point(spec, t, p) - pole;
                let (dt, dp) = partials_raw(spec, t, p);
                let (a, b, c) = (dt.dot(&dt), dt.dot(&dp), dp.dot(&dp));
                let (g0, g1) = (dt.dot(&res), dp.dot(&res));
                let det = a * c - b * b;
                if det.abs() < 1e-300 {
                    break;
                }
                t -= (c * g0 - b * g1) / det;
                p -= (a * g1 - b * g0) / det;
            }
            if dist(t, p) > 1e-9 {
                continue;
            }
            let (t, p) = canonical_param(spec, t, p);
            // Compare in parameter space: distinct preimages may share an image on a double curve.
            let same = |&(a, b): &(f64, f64)| {
                puncture_images(spec, a, b)
                    .iter()
                    .any(|&(x, y)| (x - t).abs() < 1e-6 && (y - p).abs() < 1e-6)
            };
            if !found.iter().any(same) {
                found.push((t, p));
            }
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    found
}

/// Brings a parameter pair into the fundamental domain using the surface's identifications.
fn canonical_param(spec: &SurfaceSpec, mut t: f64, mut p: f64) -> (f64, f64) {
    let d = spec.domain();
    let (g, _) = spec.phi_gluing();
    let span = d.phi.1 - d.phi.0;
    let mut guard = 0;
    while (p < d.phi.0 - 1e-12 || p >= d.phi.1 - 1e-12) && guard < 16 {
        if p >= d.phi.1 - 1e-12 {
            p -= span;
            t = g(t);
        } else {
            p += span;
            t = inverse_gluing(spec, t);
        }
        guard += 1;
    }
    if spec.theta_periodic() {
        t = t.rem_euclid(TAU);
    }
    (t, p)
}

fn inverse_gluing(spec: &SurfaceSpec, t: f64) -> f64 {
    match spec.kind {
        SurfaceKind::CliffordTorus => (t - PI).rem_euclid(TAU),
        // Reflections are involutions.
        SurfaceKind::SudaneseMobius => PI - t,
        SurfaceKind::KleinBottle => (PI - t).rem_euclid(TAU),
        SurfaceKind::TorusKnotBand { .. } => t,
    }
}

/// Default punctures: one grid cell centered on each pole preimage.
pub fn default_punctures(spec: &SurfaceSpec, shell: &ShellSpec, f: &ProjectionFrame) -> Vec<Puncture> {
    let d = spec.domain();
    let cell = [
        (d.theta.1 - d.theta.0) / shell.grid_theta as f64,
        (d.phi.1 - d.phi.0) / shell.grid_phi as f64,
    ];
    pole_preimages(spec, f)
        .into_iter()
        .map(|(t, p)| Puncture {
            center: [t, p],
            half_size: [0.5 * cell[0], 0.5 * cell[1]],
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CellState {
    Solid,
    Hole,
    Puncture,
}

/// The tensor lattice in (θ, φ), its identifications, and a solid/empty flag per cell.
struct Lattice {
    thetas: Vec<f64>,
    phis: Vec<f64>,
    /// ψ levels from -ε to +ε.
    psis: Vec<f64>,
    theta_periodic: bool,
    flip: bool,
    /// Image under the φ gluing of each θ node index.
    glue: Vec<usize>,
    cells: Vec<CellState>,
}

impl Lattice {
    fn ni(&self) -> usize {
        self.thetas.len() - 1
    }

    fn nj(&self) -> usize {
        self.phis.len() - 1
    }

    fn state(&self, i: usize, j: usize) -> CellState {
        self.cells[j * self.ni() + i]
    }

    fn canonical_node(&self, mut i: usize, mut j: usize, mut l: usize) -> (usize, usize, usize) {
        if j == self.nj() {
            i = self.glue[i];
            j = 0;
            if self.flip {
                l = self.psis.len() - 1 - l;
            }
        }
        if self.theta_periodic && i == self.ni() {
            i = 0;
        }
        (i, j, l)
    }

    fn theta_neighbor(&self, i: usize, j: usize, forward: bool) -> Option<(usize, usize)> {
        let ni = self.ni();
        match (forward, i) {
            (true, i) if i + 1 < ni => Some((i + 1, j)),
            (false, i) if i > 0 => Some((i - 1, j)),
            _ if self.theta_periodic => Some((if forward { 0 } else { ni - 1 }, j)),
            _ => None,
        }
    }

    /// Cell across the φ seam from the bottom row cell `(i, nj-1)` upward.
    fn across_up(&self, i: usize) -> usize {
        let ni = self.ni();
        let a = self.canon_theta(self.glue[i]);
        let b = self.canon_theta(self.glue[i + 1]);
        if b == (a + 1) % (ni + usize::from(!self.theta_periodic)) || (b == a + 1) {
            a
        } else {
            b
        }
    }

    fn canon_theta(&self, i: usize) -> usize {
        if self.theta_periodic && i == self.ni() {
            0
        } else {
            i
        }
    }

    fn phi_neighbor(&self, i: usize, j: usize, forward: bool) -> (usize, usize) {
        let nj = self.nj();
        if forward {
            if j + 1 < nj {
                (i, j + 1)
            } else {
                (self.across_up(i), 0)
            }
        } else if j > 0 {
            (i, j - 1)
        } else {
            let k = (0..self.ni())
                .find(|&k| self.across_up(k) == i)
                .expect("gluing is a bijection on cells");
            (k, nj - 1)
        }
    }

    fn is_solid(&self, cell: Option<(usize, usize)>) -> bool {
        cell.is_some_and(|(i, j)| self.state(i, j) == CellState::Solid)
    }
}

fn dedup_sorted(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        if out.last().is_none_or(|&l| x - l > tol) {
            out.push(x);
        }
    }
    out
}

struct GridGeometry {
    lo: [f64; 2],
    cell: [f64; 2],
    counts: [usize; 2],
    free_theta: bool,
    strut: f64,
}

impl GridGeometry {
    /// Hole interval of grid cell `k` along `axis`.
    fn hole(&self, axis: usize, k: usize) -> (f64, f64) {
        let c = self.cell[axis];
        let start = self.lo[axis] + c * k as f64;
        let half = 0.5 * self.strut * c;
        let mut lo = start + half;
        let mut hi = start + c - half;
        if axis == 0 && self.free_theta {
            if k == 0 {
                lo = start + 2.0 * half;
            }
            if k + 1 == self.counts[0] {
                hi = start + c - 2.0 * half;
            }
        }
        (lo, hi)
    }

    fn cell_index(&self, axis: usize, x: f64) -> usize {
        (((x - self.lo[axis]) / self.cell[axis]).floor().max(0.0) as usize).min(self.counts[axis] - 1)
    }
}

fn puncture_images(spec: &SurfaceSpec, t: f64, p: f64) -> Vec<(f64, f64)> {
    let d = spec.domain();
    let span = d.phi.1 - d.phi.0;
    let (g, _) = spec.phi_gluing();
    let mut out = vec![(t, p), (g(t), p - span), (inverse_gluing(spec, t), p + span)];
    if spec.theta_periodic() {
        let base = out.clone();
        for (a, b) in base {
            out.push((a + TAU, b));
            out.push((a - TAU, b));
        }
    }
    out
}

fn in_rect(t: f64, p: f64, r: &Puncture, grow: f64) -> bool {
    (t - r.center[0]).abs() < r.half_size[0] + grow && (p - r.center[1]).abs() < r.half_size[1] + grow
}

fn hits_puncture(spec: &SurfaceSpec, punctures: &[Puncture], t: f64, p: f64, grow: f64) -> bool {
    puncture_images(spec, t, p)
        .into_iter()
        .any(|(a, b)| punctures.iter().any(|r| in_rect(a, b, r, grow)))
}

/// Projected chord deviation of a parameter segment relative to the local feature target.
fn chord_ratio(
    spec: &SurfaceSpec,
    shell: &ShellSpec,
    f: &ProjectionFrame,
    a: (f64, f64),
    b: (f64, f64),
) -> Option<f64> {
    let mid = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
    let pm = surface_point(spec, mid.0, mid.1);
    let gap = 1.0 - f.height(&pm);
    if gap < 1e-3 {
        return None;
    }
    let ya = f.project_vec(&surface_point(spec, a.0, a.1)).ok()?;
    let yb = f.project_vec(&surface_point(spec, b.0, b.1)).ok()?;
    let ym = f.project_vec(&pm).ok()?;
    let target = CHORD_ERROR * 2.0 * shell.thickness_s3.sin() / gap;
    Some((ym - (ya + yb) * 0.5).norm() / target)
}

/// Splits each interval so the projected chord error is within target along that axis.
fn refine_axis(breaks: &[f64], samples: &[f64], chord: impl Fn(f64, f64, f64) -> Option<f64>) -> Vec<f64> {
    let mut out = vec![breaks[0]];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let worst = samples.iter().filter_map(|&s| chord(a, b, s)).fold(0.0, f64::max);
        // Chord error falls off with the square of the segment count.
        let n = (worst.sqrt().ceil() as usize).clamp(1, MAX_SUBDIVISION);
        for k in 1..n {
            out.push(a + (b - a) * k as f64 / n as f64);
        }
        out.push(b);
    }
    out
}

fn build_lattice(spec: &SurfaceSpec, shell: &ShellSpec, f: &ProjectionFrame) -> Result<Lattice> {
    let d = spec.domain();
    let geo = GridGeometry {
        lo: [d.theta.0, d.phi.0],
        cell: [
            (d.theta.1 - d.theta.0) / shell.grid_theta as f64,
            (d.phi.1 - d.phi.0) / shell.grid_phi as f64,
        ],
        counts: [shell.grid_theta, shell.grid_phi],
        free_theta: !spec.theta_periodic(),
        strut: shell.strut_fraction,
    };
    let (g, flip) = spec.phi_gluing();
    let theta_span = d.theta.1 - d.theta.0;
    let phi_span = d.phi.1 - d.phi.0;

    let mut tb = vec![d.theta.0, d.theta.1];
    let mut pb = vec![d.phi.0, d.phi.1];
    for k in 0..=shell.grid_theta {
        tb.push(d.theta.0 + geo.cell[0] * k as f64);
    }
    for k in 0..=shell.grid_phi {
        pb.push(d.phi.0 + geo.cell[1] * k as f64);
    }
    if shell.holes {
        for k in 0..shell.grid_theta {
            let (a, b) = geo.hole(0, k);
            tb.extend([a, b]);
        }
        for k in 0..shell.grid_phi {
            let (a, b) = geo.hole(1, k);
            pb.extend([a, b]);
        }
    }
    for r in &shell.punctures {
        for st in [-1.0, 1.0] {
            for (t, p) in puncture_images(spec, r.center[0] + st * r.half_size[0], r.center[1]) {
                tb.push(t);
                let _ = p;
            }
        }
        for sp in [-1.0, 1.0] {
            let p = r.center[1] + sp * r.half_size[1];
            pb.push(d.phi.0 + (p - d.phi.0).rem_euclid(phi_span));
        }
    }
    let clamp_theta = |v: Vec<f64>| -> Vec<f64> {
        v.into_iter()
            .filter(|t| *t >= d.theta.0 - 1e-12 && *t <= d.theta.1 + 1e-12)
            .map(|t| t.clamp(d.theta.0, d.theta.1))
            .collect()
    };
    let symmetrize = |v: Vec<f64>| -> Vec<f64> {
        let mut all = v.clone();
        all.extend(v.iter().map(|&t| g(t)));
        all.extend(v.iter().map(|&t| inverse_gluing(spec, t)));
        if spec.theta_periodic() {
            let extra: Vec<f64> = all
                .iter()
                .map(|t| if *t <= d.theta.0 + 1e-12 { d.theta.1 } else { *t })
                .collect();
            all.extend(extra);
        }
        dedup_sorted(clamp_theta(all), 1e-9)
    };
    let tb = symmetrize(tb);
    let pb = dedup_sorted(
        pb.into_iter()
            .filter(|p| *p >= d.phi.0 - 1e-12 && *p <= d.phi.1 + 1e-12)
            .map(|p| p.clamp(d.phi.0, d.phi.1))
            .collect(),
        1e-9,
    );

    // Adaptive refinement, sampled along a coarse set of cross-lines.
    let coarse_t: Vec<f64> = (0..=48)
        .map(|k| d.theta.0 + theta_span * (k as f64 + 0.5) / 49.0)
        .collect();
    let coarse_p: Vec<f64> = (0..=64).map(|k| d.phi.0 + phi_span * (k as f64 + 0.5) / 65.0).collect();
    let thetas = symmetrize(refine_axis(&tb, &coarse_p, |a, b, p| {
        chord_ratio(spec, shell, f, (a, p), (b, p))
    }));
    let phis = refine_axis(&pb, &coarse_t, |a, b, t| chord_ratio(spec, shell, f, (t, a), (t, b)));

    // ψ levels: enough to keep the wall chord error on target.
    let eps = shell.thickness_s3;
    let wall_ratio = (eps * eps / 2.0) / (CHORD_ERROR * 2.0 * eps.sin());
    let levels = (wall_ratio.sqrt().ceil() as usize).clamp(1, 16);
    let psis: Vec<f64> = (0..=levels)
        .map(|k| -eps + 2.0 * eps * k as f64 / levels as f64)
        .collect();

    let find = |x: f64| -> Option<usize> {
        let k = thetas.partition_point(|&t| t < x - 1e-7);
        (k < thetas.len() && (thetas[k] - x).abs() < 1e-7).then_some(k)
    };
    let glue: Vec<usize> = thetas
        .iter()
        .map(|&t| {
            let mut gt = g(t);
            if spec.theta_periodic() && gt >= d.theta.1 - 1e-7 {
                gt -= TAU;
            }
            find(gt).ok_or(Error::BadIdentification { mismatch: f64::NAN })
        })
        .collect::<Result<_>>()?;

    let ni = thetas.len() - 1;
    let nj = phis.len() - 1;
    let grow = shell.strut_fraction * geo.cell[0].min(geo.cell[1]);
    let mut cells = Vec::with_capacity(ni * nj);
    for j in 0..nj {
        let pc = 0.5 * (phis[j] + phis[j + 1]);
        for i in 0..ni {
            let tc = 0.5 * (thetas[i] + thetas[i + 1]);
            let state = if hits_puncture(spec, &shell.punctures, tc, pc, 0.0) {
                CellState::Puncture
            } else if shell.holes {
                let (kt, kp) = (geo.cell_index(0, tc), geo.cell_index(1, pc));
                let (ht, hp) = (geo.hole(0, kt), geo.hole(1, kp));
                let in_hole = tc > ht.0 && tc < ht.1 && pc > hp.0 && pc < hp.1;
                // Holes crowding a puncture are filled to leave a rim.
                let filled = in_hole && {
                    let corners = [(ht.0, hp.0), (ht.1, hp.0), (ht.0, hp.1), (ht.1, hp.1), (tc, pc)];
                    corners
                        .iter()
                        .any(|&(a, b)| hits_puncture(spec, &shell.punctures, a, b, grow))
                        || shell.punctures.iter().any(|r| {
                            puncture_images(spec, r.center[0], r.center[1])
                                .iter()
                                .any(|&(a, b)| a > ht.0 - grow && a < ht.1 + grow && b > hp.0 - grow && b < hp.1 + grow)
                        })
                };
                if in_hole && !filled {
                    CellState::Hole
                } else {
                    CellState::Solid
                }
            } else {
                CellState::Solid
            };
            cells.push(state);
        }
    }
    let _ = flip;
    Ok(Lattice {
        thetas,
        phis,
        psis,
        theta_periodic: spec.theta_periodic(),
        flip,
        glue,
        cells,
    })
}

fn check_identification(spec: &SurfaceSpec, shell: &ShellSpec, lat: &Lattice) -> Result<()> {
    let nj = lat.nj();
    let last = lat.psis.len() - 1;
    for i in 0..lat.thetas.len() {
        for l in [0, last] {
            let (ci, cj, cl) = lat.canonical_node(i, nj, l);
            let a = offset_raw(spec, lat.thetas[i], lat.phis[nj], lat.psis[l], shell.normal_mode)?;
            let b = offset_raw(spec, lat.thetas[ci], lat.phis[cj], lat.psis[cl], shell.normal_mode)?;
            let mismatch = (a - b).norm();
            if mismatch > IDENTIFICATION_TOL {
                return Err(Error::BadIdentification { mismatch });
            }
        }
    }
    Ok(())
}

/// χ predicted from the cell pattern alone: twice χ of the perforated surface.
fn predicted_euler(spec: &SurfaceSpec, lat: &Lattice) -> i64 {
    let (ni, nj) = (lat.ni(), lat.nj());
    let mut seen = vec![false; ni * nj];
    let mut interior_holes = 0i64;
    for start in 0..ni * nj {
        if seen[start] || lat.cells[start] == CellState::Solid {
            continue;
        }
        let mut touches_boundary = false;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(c) = queue.pop_front() {
            let (i, j) = (c % ni, c / ni);
            let mut nbrs = Vec::with_capacity(4);
            for fwd in [true, false] {
                match lat.theta_neighbor(i, j, fwd) {
                    Some(n) => nbrs.push(n),
                    None => touches_boundary = true,
                }
                nbrs.push(lat.phi_neighbor(i, j, fwd));
            }
            for (a, b) in nbrs {
                let k = b * ni + a;
                if !seen[k] && lat.cells[k] != CellState::Solid {
                    seen[k] = true;
                    queue.push_back(k);
                }
            }
        }
        if !touches_boundary {
            interior_holes += 1;
        }
    }
    2 * (spec.euler_characteristic() - interior_holes)
}

/// Projected widths of solid and empty runs along lattice rows and columns, plus wall thickness.
fn shell_features(spec: &SurfaceSpec, shell: &ShellSpec, lat: &Lattice, f: &ProjectionFrame) -> Result<f64> {
    let (ni, nj) = (lat.ni(), lat.nj());
    let proj = |t: f64, p: f64| f.project_vec(&surface_point(spec, t, p));
    let mut best = f64::INFINITY;

    // Rows: runs in θ at each cell row.
    for j in 0..nj {
        let pc = 0.5 * (lat.phis[j] + lat.phis[j + 1]);
        let states: Vec<CellState> = (0..ni).map(|i| lat.state(i, j)).collect();
        let lengths: Vec<f64> = (0..ni)
            .map(|i| Ok((proj(lat.thetas[i + 1], pc)? - proj(lat.thetas[i], pc)?).norm()))
            .collect::<Result<_>>()?;
        best = best.min(min_run(&states, &lengths, lat.theta_periodic));
    }
    // Columns: runs in φ, following the seam gluing.
    let mut visited = vec![false; ni * nj];
    for i0 in 0..ni {
        if visited[i0] {
            continue;
        }
        let mut states = Vec::new();
        let mut lengths = Vec::new();
        let (mut i, mut j) = (i0, 0);
        loop {
            visited[j * ni + i] = true;
            let tc = 0.5 * (lat.thetas[i] + lat.thetas[i + 1]);
            states.push(lat.state(i, j));
            lengths.push((proj(tc, lat.phis[j + 1])? - proj(tc, lat.phis[j])?).norm());
            (i, j) = lat.phi_neighbor(i, j, true);
            if (i, j) == (i0, 0) || visited[j * ni + i] {
                break;
            }
        }
        best = best.min(min_run(&states, &lengths, true));
    }
    // Wall thickness at lattice nodes of solid cells.
    let eps = shell.thickness_s3;
    for j in 0..nj {
        for i in 0..ni {
            if lat.state(i, j) != CellState::Solid {
                continue;
            }
            let (t, p) = (lat.thetas[i], lat.phis[j]);
            let top = f.project_vec(&offset_raw(spec, t, p, eps, shell.normal_mode)?)?;
            let bottom = f.project_vec(&offset_raw(spec, t, p, -eps, shell.normal_mode)?)?;
            best = best.min((top - bottom).norm());
        }
    }
    Ok(best)
}

/// Shortest run of equal non-puncture states in a (possibly cyclic) sequence.
fn min_run(states: &[CellState], lengths: &[f64], cyclic: bool) -> f64 {
    let n = states.len();
    let start = if cyclic {
        match (0..n).find(|&k| states[k] != states[(k + n - 1) % n]) {
            Some(k) => k,
            None => return f64::INFINITY,
        }
    } else {
        0
    };
    let mut best = f64::INFINITY;
    let mut k = 0;
    while k < n {
        let s = states[(start + k) % n];
        let mut len = 0.0;
        let mut m = k;
        while m < n && states[(start + m) % n] == s {
            len += lengths[(start + m) % n];
            m += 1;
        }
        if s != CellState::Puncture {
            best = best.min(len);
        }
        k = m;
    }
    best
}

struct ShellBuilder<'a> {
    lat: &'a Lattice,
    ids: HashMap<(usize, usize, usize), u32>,
    nodes: Vec<(usize, usize, usize)>,
    tris: Vec<[u32; 3]>,
}

impl ShellBuilder<'_> {
    fn id(&mut self, i: usize, j: usize, l: usize) -> u32 {
        let key = self.lat.canonical_node(i, j, l);
        let next = self.nodes.len() as u32;
        let id = *self.ids.entry(key).or_insert(next);
        if id == next {
            self.nodes.push(key);
        }
        id
    }

    /// Quad with corners given as lattice nodes, wound counter-clockwise seen from outside.
    fn quad(&mut self, q: [(usize, usize, usize); 4]) {
        let [a, b, c, d] = q.map(|(i, j, l)| self.id(i, j, l));
        self.tris.push([a, b, c]);
        self.tris.push([a, c, d]);
    }
}

fn mesh_lattice(spec: &SurfaceSpec, shell: &ShellSpec, lat: &Lattice, f: &ProjectionFrame) -> Result<TriMesh> {
    let (ni, nj) = (lat.ni(), lat.nj());
    let top = lat.psis.len() - 1;
    let mut sb = ShellBuilder {
        lat,
        ids: HashMap::new(),
        nodes: Vec::new(),
        tris: Vec::new(),
    };
    for j in 0..nj {
        for i in 0..ni {
            if lat.state(i, j) != CellState::Solid {
                continue;
            }
            let (i1, j1) = (i + 1, j + 1);
            sb.quad([(i, j, top), (i1, j, top), (i1, j1, top), (i, j1, top)]);
            sb.quad([(i, j, 0), (i, j1, 0), (i1, j1, 0), (i1, j, 0)]);
            let left = !lat.is_solid(lat.theta_neighbor(i, j, false));
            let right = !lat.is_solid(lat.theta_neighbor(i, j, true));
            let down = !lat.is_solid(Some(lat.phi_neighbor(i, j, false)));
            let up = !lat.is_solid(Some(lat.phi_neighbor(i, j, true)));
            for l in 0..top {
                let l1 = l + 1;
                if left {
                    sb.quad([(i, j, l), (i, j, l1), (i, j1, l1), (i, j1, l)]);
                }
                if right {
                    sb.quad([(i1, j, l), (i1, j1, l), (i1, j1, l1), (i1, j, l1)]);
                }
                if down {
                    sb.quad([(i, j, l), (i1, j, l), (i1, j, l1), (i, j, l1)]);
                }
                if up {
                    sb.quad([(i, j1, l), (i, j1, l1), (i1, j1, l1), (i1, j1, l)]);
                }
            }
        }
    }
    let vertices: Vec<PointR3> = sb
        .nodes
        .iter()
        .map(|&(i, j, l)| {
            let v = offset_raw(spec, lat.thetas[i], lat.phis[j], lat.psis[l], shell.normal_mode)?;
            f.project_vec(&v)
        })
        .collect::<Result<_>>()?;
    let mut mesh = TriMesh::new();
    mesh.push_shell(&vertices, &sb.tris, Some(predicted_euler(spec, lat)));
    mesh.orient_outward();
    Ok(mesh)
}

fn check_pole_clearance(spec: &SurfaceSpec, shell: &ShellSpec, lat: &Lattice, f: &ProjectionFrame) -> Result<()> {
    let pole = f.pole_in_design();
    for (t, p) in pole_preimages(spec, f) {
        let i = lat.thetas.partition_point(|&x| x <= t).clamp(1, lat.ni()) - 1;
        let j = lat.phis.partition_point(|&x| x <= p).clamp(1, lat.nj()) - 1;
        if lat.state(i, j) != CellState::Puncture {
            return Err(Error::PoleCollision(format!(
                "surface meets the pole at (θ, φ) = ({t:.6}, {p:.6}) outside every puncture"
            )));
        }
    }
    // Every solid cell corner must stay clear of the pole by more than the shell thickness.
    let eps = shell.thickness_s3;
    for j in 0..lat.nj() {
        for i in 0..lat.ni() {
            if lat.state(i, j) != CellState::Solid {
                continue;
            }
            for (a, b) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                let x = surface_point(spec, lat.thetas[a], lat.phis[b]);
                if geodesic_distance(&x, &pole) - eps <= POLE_CLEARANCE {
                    return Err(Error::PoleCollision(format!(
                        "solid shell material reaches the pole near (θ, φ) = ({:.6}, {:.6})",
                        lat.thetas[a], lat.phis[b]
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Truncated pyramid in (θ, φ, ψ) coordinates, meshed as a closed shell.
fn mesh_tooth(
    spec: &SurfaceSpec,
    shell: &ShellSpec,
    f: &ProjectionFrame,
    center: (f64, f64),
    base: (f64, f64),
    cog: &CogSpec,
    side: f64,
) -> Result<TriMesh> {
    let eps = shell.thickness_s3;
    // Root sunk halfway into the band, base at the band surface, top at ε + height.
    let levels = [(0.5 * eps, 1.0), (eps, 1.0), (eps + cog.tooth_height, cog.top_fraction)];
    let res = 6usize;
    let map = |a: f64, b: f64, c: f64| -> Result<PointR3> {
        // c in [0, 2] walks the piecewise-linear ψ profile.
        let (k, s) = if c <= 1.0 { (0, c) } else { (1, c - 1.0) };
        let psi = levels[k].0 + (levels[k + 1].0 - levels[k].0) * s;
        let w = levels[k].1 + (levels[k + 1].1 - levels[k].1) * s;
        let t = center.0 + (a - 0.5) * base.0 * w;
        let p = center.1 + (b - 0.5) * base.1 * w;
        f.project_vec(&offset_raw(spec, t, p, side * psi, shell.normal_mode)?)
    };
    let (vertices, tris) = box_surface(res, res, 2 * res, |a, b, c| map(a, b, 2.0 * c))?;
    let mut m = TriMesh::new();
    m.push_shell(&vertices, &tris, Some(2));
    m.orient_outward();
    // Narrowest top edge, as a feature size.
    let (a, b, c) = (map(0.0, 0.5, 2.0)?, map(1.0, 0.5, 2.0)?, map(0.5, 0.0, 2.0)?);
    let d = map(0.5, 1.0, 2.0)?;
    m.min_feature = Some((a - b).norm().min((c - d).norm()));
    Ok(m)
}

/// Surface of the unit cube sampled on an `na × nb × nc` lattice and mapped through `map`.
fn box_surface(
    na: usize,
    nb: usize,
    nc: usize,
    map: impl Fn(f64, f64, f64) -> Result<PointR3>,
) -> Result<(Vec<PointR3>, Vec<[u32; 3]>)> {
    let mut ids: HashMap<(usize, usize, usize), u32> = HashMap::new();
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    let dims = [na, nb, nc];
    let mut id = |p: [usize; 3], verts: &mut Vec<PointR3>| -> Result<u32> {
        if let Some(&k) = ids.get(&(p[0], p[1], p[2])) {
            return Ok(k);
        }
        let k = verts.len() as u32;
        verts.push(map(
            p[0] as f64 / na as f64,
            p[1] as f64 / nb as f64,
            p[2] as f64 / nc as f64,
        )?);
        ids.insert((p[0], p[1], p[2]), k);
        Ok(k)
    };
    // Each face: fixed axis at 0 or its max, spanning the two other axes.
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for high in [false, true] {
            for a in 0..dims[u] {
                for b in 0..dims[v] {
                    let corner = |da: usize, db: usize| {
                        let mut p = [0usize; 3];
                        p[axis] = if high { dims[axis] } else { 0 };
                        p[u] = a + da;
                        p[v] = b + db;
                        p
                    };
                    let mut q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                    if !high {
                        q.reverse();
                    }
                    let k = [
                        id(q[0], &mut verts)?,
                        id(q[1], &mut verts)?,
                        id(q[2], &mut verts)?,
                        id(q[3], &mut verts)?,
                    ];
                    tris.push([k[0], k[1], k[2]]);
                    tris.push([k[0], k[2], k[3]]);
                }
            }
        }
    }
    Ok((verts, tris))
}

/// Meshes the perforated ε-shell of a surface, plus optional cog teeth as extra closed shells.
pub fn mesh_shell(
    spec: &SurfaceSpec,
    shell: &ShellSpec,
    f: &ProjectionFrame,
    cogs: Option<&CogSpec>,
) -> Result<TriMesh> {
    spec.validate()?;
    shell.validate()?;
    let d = spec.domain();
    for r in &shell.punctures {
        let (t, p) = (r.center[0], r.center[1]);
        if !(t >= d.theta.0 - DOMAIN_SLACK
            && t <= d.theta.1 + DOMAIN_SLACK
            && p >= d.phi.0 - DOMAIN_SLACK
            && p <= d.phi.1 + DOMAIN_SLACK)
        {
            return Err(Error::InvalidSpec(format!(
                "puncture center ({t}, {p}) outside the domain"
            )));
        }
    }
    let lat = build_lattice(spec, shell, f)?;
    check_identification(spec, shell, &lat)?;
    check_pole_clearance(spec, shell, &lat, f)?;
    let mut mesh = mesh_lattice(spec, shell, &lat, f)?;
    mesh.min_feature = Some(shell_features(spec, shell, &lat, f)?);
    mesh.feature_ratio = Some(lattice_feature_ratio(spec, &lat, f));

    if let Some(cog) = cogs {
        for tooth in mesh_teeth(spec, shell, f, cog)? {
            mesh.append(tooth);
        }
    }
    Ok(mesh)
}

/// One closed shell per tooth, on both faces of the band, at equal φ spacing.
fn mesh_teeth(spec: &SurfaceSpec, shell: &ShellSpec, f: &ProjectionFrame, cog: &CogSpec) -> Result<Vec<TriMesh>> {
    cog.validate(shell)?;
    let d = spec.domain();
    let theta_mid = 0.5 * (d.theta.0 + d.theta.1);
    let spacing = (d.phi.1 - d.phi.0) / cog.tooth_count as f64;
    let base = ((d.theta.1 - d.theta.0) * cog.base_fraction, spacing * cog.base_fraction);
    let mut teeth = Vec::with_capacity(2 * cog.tooth_count);
    for k in 0..cog.tooth_count {
        let center = (theta_mid, d.phi.0 + spacing * (k as f64 + 0.5));
        for side in [1.0, -1.0] {
            teeth.push(mesh_tooth(spec, shell, f, center, base, cog, side)?);
        }
    }
    Ok(teeth)
}

/// Printability numbers for a shell, computed from its lattice without meshing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShellAnalysis {
    /// Extents of the projected shell in model units.
    pub extents: [f64; 3],
    pub min_feature: f64,
    pub feature_ratio: f64,
}

/// Lattice-level analysis: pole checks, feature sizes and the projected bounding box.
pub fn analyze_shell(
    spec: &SurfaceSpec,
    shell: &ShellSpec,
    f: &ProjectionFrame,
    cogs: Option<&CogSpec>,
) -> Result<ShellAnalysis> {
    spec.validate()?;
    shell.validate()?;
    let lat = build_lattice(spec, shell, f)?;
    check_pole_clearance(spec, shell, &lat, f)?;
    let mut lo = PointR3::repeat(f64::INFINITY);
    let mut hi = PointR3::repeat(f64::NEG_INFINITY);
    for j in 0..lat.nj() {
        for i in 0..lat.ni() {
            if lat.state(i, j) != CellState::Solid {
                continue;
            }
            for (a, b) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                for psi in [lat.psis[0], lat.psis[lat.psis.len() - 1]] {
                    let y = f.project_vec(&offset_raw(spec, lat.thetas[a], lat.phis[b], psi, shell.normal_mode)?)?;
                    lo = lo.inf(&y);
                    hi = hi.sup(&y);
                }
            }
        }
    }
    let mut min_feature = shell_features(spec, shell, &lat, f)?;
    if let Some(cog) = cogs {
        for tooth in mesh_teeth(spec, shell, f, cog)? {
            for v in &tooth.vertices {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
            min_feature = min_feature.min(tooth.min_feature.unwrap_or(f64::INFINITY));
        }
    }
    let d = hi - lo;
    Ok(ShellAnalysis {
        extents: [d.x, d.y, d.z],
        min_feature,
        feature_ratio: lattice_feature_ratio(spec, &lat, f),
    })
}

fn lattice_feature_ratio(spec: &SurfaceSpec, lat: &Lattice, f: &ProjectionFrame) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for j in 0..lat.nj() {
        for i in 0..lat.ni() {
            if lat.state(i, j) != CellState::Solid {
                continue;
            }
            let x = surface_point(spec, lat.thetas[i], lat.phis[j]);
            let lambda = 1.0 / (1.0 - f.height(&x));
            lo = lo.min(lambda);
            hi = hi.max(lambda);
        }
    }
    hi / lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshkit::validate;
    use crate::quat::UnitQuaternion;
    use crate::s3geom::frame_from_pole;
    use std::f64::consts::FRAC_PI_4;

    fn torus() -> SurfaceSpec {
        SurfaceSpec::new(SurfaceKind::CliffordTorus).unwrap()
    }

    fn mobius() -> SurfaceSpec {
        SurfaceSpec::new(SurfaceKind::SudaneseMobius).unwrap()
    }

    fn klein() -> SurfaceSpec {
        SurfaceSpec::new(SurfaceKind::KleinBottle).unwrap()
    }

    fn trefoil() -> SurfaceSpec {
        SurfaceSpec::new(SurfaceKind::TorusKnotBand {
            num: 3,
            den: 2,
            theta0: FRAC_PI_4,
            half_width: 0.1,
        })
        .unwrap()
    }

    fn off_torus_frame() -> ProjectionFrame {
        frame_from_pole(UnitQuaternion::normalize(Quaternion::new(1.0, 0.0, 0.0, 1.0)).unwrap()).unwrap()
    }

    fn shell(eps: f64) -> ShellSpec {
        ShellSpec {
            thickness_s3: eps,
            grid_theta: 8,
            grid_phi: 4,
            strut_fraction: 0.5,
            punctures: vec![],
            holes: true,
            normal_mode: NormalMode::Cramer,
        }
    }

    #[test]
    fn torus_meets_one() {
        let p = eval_p(&torus(), 0.0, 0.0).unwrap();
        assert_eq!(*p.coords(), Vector4::new(1.0, 0.0, 0.0, 0.0));
        let (dt, dp) = eval_partials(&torus(), 0.0, 0.0).unwrap();
        assert_eq!(dt, Vector4::new(0.0, 0.0, 1.0, 0.0));
        assert_eq!(dp, Vector4::new(0.0, 1.0, 0.0, 0.0));
        let n = normal_cramer(&torus(), 0.0, 0.0).unwrap();
        assert!((n - Vector4::new(0.0, 0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn partials_match_finite_differences() {
        let h = 1e-6;
        for s in [torus(), mobius(), klein(), trefoil()] {
            let d = s.domain();
            for k in 1..8 {
                let t = d.theta.0 + (d.theta.1 - d.theta.0) * k as f64 / 8.0;
                let p = d.phi.0 + (d.phi.1 - d.phi.0) * k as f64 / 9.0;
                let (dt, dp) = eval_partials(&s, t, p).unwrap();
                let ft = (surface_point(&s, t + h, p) - surface_point(&s, t - h, p)) / (2.0 * h);
                let fp = (surface_point(&s, t, p + h) - surface_point(&s, t, p - h)) / (2.0 * h);
                assert!((dt - ft).norm() < 1e-8 && (dp - fp).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn cramer_normal_is_orthonormal_to_the_frame() {
        for s in [torus(), mobius(), klein(), trefoil()] {
            let d = s.domain();
            for k in 1..10 {
                let t = d.theta.0 + (d.theta.1 - d.theta.0) * k as f64 / 10.0;
                let p = d.phi.0 + (d.phi.1 - d.phi.0) * k as f64 / 11.0;
                let n = normal_cramer(&s, t, p).unwrap();
                let x = surface_point(&s, t, p);
                let (dt, dp) = partials_raw(&s, t, p);
                assert!((n.norm() - 1.0).abs() < 1e-12);
                assert!(n.dot(&x).abs() < 1e-12 && n.dot(&dt).abs() < 1e-12 && n.dot(&dp).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_form_repositions_onto_torus() {
        let q = clifford_repositioning();
        assert!((clifford_product_form(0.0, 0.0) * q).approx_eq(Quaternion::ONE, 1e-15));
        for (alpha, beta) in [(0.3, 1.1), (2.0, -0.7), (5.5, 4.0)] {
            let a = (clifford_product_form(alpha, beta) * q).to_vector();
            let (t, p) = (0.5 * (alpha + beta), 0.5 * (alpha - beta));
            let b = surface_point(&torus(), t, p);
            // Same point up to a coordinate permutation with one sign change.
            assert!((Vector4::new(a[0], -a[3], a[1], a[2]) - b).norm() < 1e-14);
        }
    }

    #[test]
    fn mobius_boundary_is_a_great_circle() {
        for k in 0..16 {
            let phi = PI * k as f64 / 16.0;
            let p = eval_p(&mobius(), 0.0, phi).unwrap();
            assert!((p.coords() - Vector4::new(phi.cos(), phi.sin(), 0.0, 0.0)).norm() < 1e-15);
        }
        let (_, dp) = eval_partials(&mobius(), 0.0, 0.0).unwrap();
        assert_eq!(dp, Vector4::new(0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn domain_is_enforced() {
        assert!(matches!(eval_p(&mobius(), 3.5, 0.0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(eval_p(&trefoil(), 0.2, 0.0), Err(Error::OutOfDomain { .. })));
        assert!(SurfaceSpec::new(SurfaceKind::TorusKnotBand {
            num: 4,
            den: 2,
            theta0: FRAC_PI_4,
            half_width: 0.1
        })
        .is_err());
    }

    #[test]
    fn sign_convention_at_quarter_point() {
        let (t, p) = (FRAC_PI_4, FRAC_PI_4);
        let n = normal_cramer(&torus(), t, p).unwrap();
        let printed = Vector4::new(
            -t.sin() * p.sin(),
            t.sin() * p.cos(),
            t.cos() * p.sin(),
            -t.cos() * p.cos(),
        );
        assert!(n.dot(&printed) > 0.0);
        let n = normal_cramer(&mobius(), t, p).unwrap();
        let printed = Vector4::new(
            -2.0 * t.sin() * p.sin(),
            2.0 * t.sin() * p.cos(),
            t.cos() * (2.0 * p).sin(),
            -t.cos() * (2.0 * p).cos(),
        );
        assert!(n.dot(&printed) > 0.0);
    }

    #[test]
    fn alt_normal_matches_torus_normal_at_rate_one() {
        let band = SurfaceSpec::new(SurfaceKind::TorusKnotBand {
            num: 1,
            den: 1,
            theta0: FRAC_PI_4,
            half_width: 0.2,
        })
        .unwrap();
        for (t, p) in [(0.7, 0.3), (0.9, 4.0), (0.6, 6.0)] {
            let a = knot_alt_normal(&band, t, p).unwrap();
            let b = normal_cramer(&band, t, p).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn trefoil_alt_normal_shears() {
        let s = trefoil();
        let mut sheared = false;
        for k in 0..100 {
            let phi = 4.0 * PI * k as f64 / 100.0;
            let n = knot_alt_normal(&s, FRAC_PI_4, phi).unwrap();
            let p = eval_p(&s, FRAC_PI_4, phi).unwrap();
            assert!((n.norm() - 1.0).abs() < 1e-12);
            assert!(n.dot(p.coords()).abs() < 1e-12);
            let (_, dp) = eval_partials(&s, FRAC_PI_4, phi).unwrap();
            sheared |= n.dot(&dp).abs() > 1e-3;
        }
        assert!(sheared);
    }

    #[test]
    fn offset_endpoints() {
        let s = torus();
        let p = eval_p(&s, 0.4, 0.9).unwrap();
        let n = normal_cramer(&s, 0.4, 0.9).unwrap();
        let r0 = offset_r(&s, 0.4, 0.9, 0.0, NormalMode::Cramer).unwrap();
        let r1 = offset_r(&s, 0.4, 0.9, FRAC_PI_2, NormalMode::Cramer).unwrap();
        assert!((r0.coords() - p.coords()).norm() < 1e-15);
        assert!((r1.coords() - n).norm() < 1e-15);
    }

    #[test]
    fn gluing_maps_are_consistent() {
        for s in [torus(), mobius(), klein()] {
            let lat = build_lattice(&s, &shell(0.05), &frame_from_pole(UnitQuaternion::K).unwrap()).unwrap();
            check_identification(&s, &shell(0.05), &lat).unwrap();
        }
    }

    #[test]
    fn klein_bottle_has_two_pole_preimages() {
        let f = frame_from_pole(-UnitQuaternion::J).unwrap();
        assert_eq!(
            pole_preimages(&klein(), &f).len(),
            2,
            "{:?}",
            pole_preimages(&klein(), &f)
        );
        assert_eq!(pole_preimages(&mobius(), &f).len(), 1);
        let f = frame_from_pole(UnitQuaternion::IDENTITY).unwrap();
        assert_eq!(pole_preimages(&torus(), &f), vec![(0.0, 0.0)]);
    }

    #[test]
    fn unpunctured_torus_through_pole_is_refused() {
        let f = frame_from_pole(UnitQuaternion::IDENTITY).unwrap();
        let r = mesh_shell(&torus(), &shell(0.05), &f, None);
        assert!(matches!(r, Err(Error::PoleCollision(_))));
    }

    #[test]
    fn solid_torus_shell_has_torus_topology() {
        let f = off_torus_frame();
        let spec = ShellSpec {
            holes: false,
            ..shell(0.05)
        };
        let m = mesh_shell(&torus(), &spec, &f, None).unwrap();
        let d = validate(&m);
        assert_eq!(d.watertight, vec![true]);
        assert_eq!(d.euler_characteristic, vec![0]);
        assert!(d.volume_mm3 > 0.0);
    }

    #[test]
    fn perforated_shells_match_grid_count() {
        let f = off_torus_frame();
        let m = mesh_shell(&torus(), &shell(0.05), &f, None).unwrap();
        let d = validate(&m);
        assert_eq!(d.watertight, vec![true]);
        assert_eq!(d.euler_characteristic, vec![-2 * 32]);
        assert_eq!(m.shells[0].expected_euler, Some(-64));
    }

    #[test]
    fn mobius_and_klein_shells_close_up() {
        let f = frame_from_pole(-UnitQuaternion::J).unwrap();
        for s in [mobius(), klein()] {
            let mut sh = shell(0.05);
            sh.punctures = default_punctures(&s, &sh, &f);
            let m = mesh_shell(&s, &sh, &f, None).unwrap();
            let d = validate(&m);
            assert_eq!(d.watertight, vec![true], "{:?}", s.kind);
            assert_eq!(
                Some(d.euler_characteristic[0]),
                m.shells[0].expected_euler,
                "{:?}",
                s.kind
            );
        }
    }

    #[test]
    fn cog_teeth_are_closed() {
        let f = ProjectionFrame::canonical();
        let sh = ShellSpec {
            holes: false,
            normal_mode: NormalMode::KnotAlternative,
            ..shell(0.08)
        };
        let cog = CogSpec {
            tooth_count: 6,
            tooth_height: 0.1,
            top_fraction: 0.6,
            base_fraction: 0.7,
        };
        let m = mesh_shell(&trefoil(), &sh, &f, Some(&cog)).unwrap();
        assert_eq!(m.shells.len(), 13);
        let d = validate(&m);
        assert!(d.all_watertight());
        assert_eq!(d.euler_characteristic[0], 0);
        assert!(d.euler_characteristic[1..].iter().all(|&e| e == 2));
    }
}
