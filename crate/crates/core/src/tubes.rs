//! Geodesic tubes around great arcs, built from small circles of S³.
//!
//! The tube of radius ε around a great circle spanned by `u`, `v` is swept by
//! the small circles `cos ε·p(t) + sin ε·(cos s·w₁ + sin s·w₂)`, where `w₁`,
//! `w₂` span the orthogonal complement of `u`, `v`. Each such ring projects to
//! an exact circle in R³, so the mesh rings are concyclic by construction.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use nalgebra::Vector4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meshkit::{min_option, TriMesh};
use crate::polytope::GreatArc;
use crate::s3geom::{project_circle, CircleS3, PointR3, ProjectionFrame};

/// Clearance kept between the tube surface and the projection pole.
pub const POLE_CLEARANCE: f64 = 1e-6;

/// Allowed projected chord error along the core, as a fraction of the local diameter.
pub const CHORD_ERROR: f64 = 0.002;

const MAX_SEGMENTS_ALONG: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CapStyle {
    #[default]
    SphericalCap,
    FlatDisk,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSpec {
    /// Geodesic radius ε of the tube in S³, radians.
    pub radius_s3: f64,
    pub segments_along: usize,
    pub segments_around: usize,
    #[serde(default)]
    pub cap_style: CapStyle,
}

impl TubeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_s3 > 0.0 && self.radius_s3 < FRAC_PI_4) {
            return Err(Error::InvalidSpec(format!(
                "tube radius {} outside (0, π/4)",
                self.radius_s3
            )));
        }
        if self.segments_along < 2 || self.segments_around < 3 {
            return Err(Error::InvalidSpec(
                "tube needs segments_along ≥ 2 and segments_around ≥ 3".into(),
            ));
        }
        Ok(())
    }
}

/// Orthonormal basis of the 2-plane orthogonal to the plane of a great circle.
fn normal_plane(c: &CircleS3) -> (Vector4<f64>, Vector4<f64>) {
    let mut basis: Vec<Vector4<f64>> = Vec::with_capacity(2);
    let mut candidates: Vec<Vector4<f64>> = (0..4)
        .map(|i| {
            let mut e = Vector4::zeros();
            e[i] = 1.0;
            e
        })
        .collect();
    // Prefer the axes least aligned with the circle plane.
    candidates.sort_by(|a, b| {
        let wa = a.dot(&c.u).powi(2) + a.dot(&c.v).powi(2);
        let wb = b.dot(&c.u).powi(2) + b.dot(&c.v).powi(2);
        wa.total_cmp(&wb)
    });
    for e in candidates {
        let mut w = e - c.u * e.dot(&c.u) - c.v * e.dot(&c.v);
        for b in &basis {
            w -= b * w.dot(b);
        }
        let n = w.norm();
        if n > 1e-6 {
            basis.push(w / n);
            if basis.len() == 2 {
                break;
            }
        }
    }
    (basis[0], basis[1])
}

/// The ring of points at geodesic distance `radius_s3` from the arc point at `t`.
pub fn tube_circle(arc: &GreatArc, t: f64, spec: &TubeSpec) -> CircleS3 {
    let (w1, w2) = normal_plane(&arc.circle);
    let eps = spec.radius_s3;
    CircleS3 {
        plane_center: arc.point(t) * eps.cos(),
        u: w1,
        v: w2,
        radius: eps.sin(),
    }
}

/// Geodesic distance from the pole to the closest point of the arc.
fn pole_distance(arc: &GreatArc, f: &ProjectionFrame) -> f64 {
    let (_, hi) = arc.height_range(f);
    hi.clamp(-1.0, 1.0).acos()
}

fn check_pole(arc: &GreatArc, spec: &TubeSpec, f: &ProjectionFrame) -> Result<()> {
    let d = pole_distance(arc, f);
    if d - spec.radius_s3 <= POLE_CLEARANCE {
        return Err(Error::PoleCollision(format!(
            "tube core passes within {d:.3e} rad of the pole (radius {})",
            spec.radius_s3
        )));
    }
    Ok(())
}

/// Number of uniform segments keeping the projected core chord error within [`CHORD_ERROR`].
fn segments_along(arc: &GreatArc, spec: &TubeSpec, f: &ProjectionFrame) -> Result<usize> {
    let mut n = spec.segments_along.max(2);
    let diameter_scale = 2.0 * spec.radius_s3.sin();
    loop {
        let dt = arc.length() / n as f64;
        let mut ok = true;
        let mut prev = f.project_vec(&arc.point(arc.t_start))?;
        for i in 0..n {
            let t0 = arc.t_start + dt * i as f64;
            let next = f.project_vec(&arc.point(t0 + dt))?;
            let mid_point = arc.point(t0 + 0.5 * dt);
            let mid = f.project_vec(&mid_point)?;
            let lambda = 1.0 / (1.0 - f.height(&mid_point));
            if (mid - (prev + next) * 0.5).norm() > CHORD_ERROR * diameter_scale * lambda {
                ok = false;
                break;
            }
            prev = next;
        }
        if ok || n >= MAX_SEGMENTS_ALONG {
            return Ok(n);
        }
        n = (n * 3).div_ceil(2);
    }
}

struct RingBuilder {
    points: Vec<Vector4<f64>>,
    /// Start index of each ring of `around` points; apexes are single points.
    rings: Vec<(usize, bool)>,
    around: usize,
}

impl RingBuilder {
    fn ring(&mut self, pts: impl Iterator<Item = Vector4<f64>>) {
        let start = self.points.len();
        self.points.extend(pts);
        debug_assert_eq!(self.points.len() - start, self.around);
        self.rings.push((start, false));
    }

    fn apex(&mut self, p: Vector4<f64>) {
        self.rings.push((self.points.len(), true));
        self.points.push(p);
    }

    fn triangles(&self) -> Vec<[u32; 3]> {
        let m = self.around;
        let mut tris = Vec::new();
        for w in self.rings.windows(2) {
            let ((a, a_apex), (b, b_apex)) = (w[0], w[1]);
            for j in 0..m {
                let jn = (j + 1) % m;
                match (a_apex, b_apex) {
                    (true, false) => tris.push([a, b + jn, b + j]),
                    (false, true) => tris.push([a + j, a + jn, b]),
                    (false, false) => {
                        tris.push([a + j, a + jn, b + jn]);
                        tris.push([a + j, b + jn, b + j]);
                    }
                    (true, true) => unreachable!("adjacent apexes"),
                }
            }
        }
        tris.into_iter().map(|t| t.map(|i| i as u32)).collect()
    }
}

fn ring_points(
    center: Vector4<f64>,
    radial: impl Fn(f64) -> Vector4<f64>,
    m: usize,
) -> impl Iterator<Item = Vector4<f64>> {
    (0..m).map(move |j| center + radial(TAU * j as f64 / m as f64))
}

/// Closed, outward-oriented triangle mesh of one capped tube.
pub fn mesh_tube(arc: &GreatArc, spec: &TubeSpec, f: &ProjectionFrame) -> Result<TriMesh> {
    spec.validate()?;
    check_pole(arc, spec, f)?;
    let n = segments_along(arc, spec, f)?;
    let m = spec.segments_around;
    let (w1, w2) = normal_plane(&arc.circle);
    let eps = spec.radius_s3;
    let (ce, se) = (eps.cos(), eps.sin());
    let around = move |s: f64| w1 * s.cos() + w2 * s.sin();
    let cap_rings = m.div_ceil(4).max(2);

    let mut rb = RingBuilder {
        points: Vec::new(),
        rings: Vec::new(),
        around: m,
    };

    // (core point, outward tangent, style) for each end.
    let style_at = |end: Option<usize>| {
        if end.is_some() {
            spec.cap_style
        } else {
            CapStyle::FlatDisk
        }
    };
    let start_p = arc.start();
    let start_out = -arc.circle.tangent(arc.t_start);
    let end_p = arc.end();
    let end_out = arc.circle.tangent(arc.t_end);

    let cap = |rb: &mut RingBuilder, p: Vector4<f64>, out: Vector4<f64>, style: CapStyle, leading: bool| {
        // Polar angle a runs from the apex (0) to the tube ring (π/2), exclusive at both ends.
        let levels: Vec<usize> = if leading {
            (1..cap_rings).collect()
        } else {
            (1..cap_rings).rev().collect()
        };
        let apex = match style {
            CapStyle::SphericalCap => p * ce + out * se,
            CapStyle::FlatDisk => p,
        };
        if leading {
            rb.apex(apex);
        }
        for k in levels {
            let frac = k as f64 / cap_rings as f64;
            match style {
                CapStyle::SphericalCap => {
                    let a = FRAC_PI_2 * frac;
                    let center = p * ce + out * (se * a.cos());
                    rb.ring(ring_points(center, |s| around(s) * (se * a.sin()), m));
                }
                CapStyle::FlatDisk => {
                    let r = eps * frac;
                    let center = p * r.cos();
                    rb.ring(ring_points(center, |s| around(s) * r.sin(), m));
                }
            }
        }
        if !leading {
            rb.apex(apex);
        }
    };

    cap(&mut rb, start_p, start_out, style_at(arc.ends[0]), true);
    let dt = arc.length() / n as f64;
    for i in 0..=n {
        let t = if i == n { arc.t_end } else { arc.t_start + dt * i as f64 };
        rb.ring(ring_points(arc.point(t) * ce, |s| around(s) * se, m));
    }
    cap(&mut rb, end_p, end_out, style_at(arc.ends[1]), false);

    let vertices: Vec<PointR3> = rb.points.iter().map(|p| f.project_vec(p)).collect::<Result<_>>()?;
    let mut mesh = TriMesh::new();
    mesh.push_shell(&vertices, &rb.triangles(), Some(2));
    mesh.orient_outward();

    let mut min_diameter = f64::INFINITY;
    for i in 0..=n {
        let t = arc.t_start + dt * i as f64;
        if let Some(r) = project_circle(&tube_circle(arc, t, spec), f)?.radius() {
            min_diameter = min_diameter.min(2.0 * r);
        }
    }
    mesh.min_feature = Some(min_diameter);
    Ok(mesh)
}

/// Thickness variation a constant-radius Euclidean tube would have to span:
/// the largest projected S³-tube diameter over the smallest, i.e. max λ / min λ.
pub fn euclidean_tube_ratio(design: &[GreatArc], spec: &TubeSpec, f: &ProjectionFrame) -> Result<f64> {
    if design.is_empty() {
        return Err(Error::InvalidSpec("empty design".into()));
    }
    let d = 2.0 * spec.radius_s3.sin();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for arc in design {
        let (hmin, hmax) = arc.height_range(f);
        let gap = 1.0 - hmax;
        if gap <= crate::s3geom::POLE_GAP {
            return Err(Error::AtPole { gap });
        }
        hi = hi.max(d / gap);
        lo = lo.min(d / (1.0 - hmin));
    }
    Ok(hi / lo)
}

/// Projected ring centers and radii sampled along an arc, for clearance checks.
fn ring_samples(arc: &GreatArc, spec: &TubeSpec, f: &ProjectionFrame, count: usize) -> Result<Vec<(PointR3, f64)>> {
    (0..=count)
        .map(|i| {
            let t = arc.t_start + arc.length() * i as f64 / count as f64;
            match project_circle(&tube_circle(arc, t, spec), f)? {
                crate::s3geom::Circline::Circle { center, radius, .. } => Ok((center, radius)),
                crate::s3geom::Circline::Line { .. } => Err(Error::PoleCollision("tube ring through the pole".into())),
            }
        })
        .collect()
}

/// Smallest gap between tubes of arcs that share no polytope vertex.
pub fn strut_clearance(design: &[GreatArc], spec: &TubeSpec, f: &ProjectionFrame) -> Result<Option<f64>> {
    let samples: Vec<Vec<(PointR3, f64)>> = design
        .par_iter()
        .map(|arc| {
            let count = segments_along(arc, spec, f)?.clamp(4, 64);
            ring_samples(arc, spec, f, count)
        })
        .collect::<Result<_>>()?;
    let bounds: Vec<(PointR3, f64)> = samples
        .iter()
        .map(|s| {
            let c = s.iter().map(|(p, _)| p).sum::<PointR3>() / s.len() as f64;
            let r = s.iter().map(|(p, r)| (p - c).norm() + r).fold(0.0, f64::max);
            (c, r)
        })
        .collect();
    let shares_vertex =
        |a: &GreatArc, b: &GreatArc| a.ends.iter().flatten().any(|v| b.ends.iter().flatten().any(|w| v == w));
    let best = (0..design.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in i + 1..design.len() {
                if shares_vertex(&design[i], &design[j]) {
                    continue;
                }
                let (ci, ri) = bounds[i];
                let (cj, rj) = bounds[j];
                if (ci - cj).norm() - ri - rj >= best {
                    continue;
                }
                for (pa, ra) in &samples[i] {
                    for (pb, rb) in &samples[j] {
                        best = best.min((pa - pb).norm() - ra - rb);
                    }
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best.is_finite().then_some(best))
}

/// Meshes every arc of a design as its own closed shell, in input order.
pub fn mesh_design(design: &[GreatArc], spec: &TubeSpec, f: &ProjectionFrame) -> Result<TriMesh> {
    spec.validate()?;
    let shells: Vec<TriMesh> = design
        .par_iter()
        .map(|arc| mesh_tube(arc, spec, f))
        .collect::<Result<_>>()?;
    let mut mesh = TriMesh::new();
    for s in shells {
        mesh.append(s);
    }
    mesh.min_feature = min_option(mesh.min_feature, strut_clearance(design, spec, f)?);
    mesh.feature_ratio = Some(euclidean_tube_ratio(design, spec, f)?);
    Ok(mesh)
}
