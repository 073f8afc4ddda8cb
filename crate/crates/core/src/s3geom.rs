//! Stereographic projection from S³ to R³, circles of S³ and their images.
//!
//! Projection from an arbitrary pole is realized by first rotating the design
//! so the pole lands on the canonical north pole `k = (0, 0, 0, 1)` and then
//! applying `ρ(x) = (x0, x1, x2) / (1 - x3)`.

use std::f64::consts::PI;

use nalgebra::{Vector3, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quat::{mover, Quaternion, UnitQuaternion, UNIT_TOL};

pub type PointR3 = Vector3<f64>;

/// Minimum `1 - x3` for a point to be projectable.
pub const POLE_GAP: f64 = 1e-12;

/// Chordal distance below which a circle is treated as meeting the pole.
pub const LINE_THRESHOLD: f64 = 1e-9;

const FIT_CHECK_SAMPLES: usize = 64;
const FIT_CHECK_TOL: f64 = 1e-7;

const FRAME_TOL: f64 = 1e-12;

/// A point of the unit 3-sphere in R⁴.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(into = "[f64; 4]")]
pub struct PointS3(Vector4<f64>);

impl PointS3 {
    pub fn new(v: Vector4<f64>) -> Result<Self> {
        let deviation = v.norm_squared() - 1.0;
        if !v.iter().all(|c| c.is_finite()) || deviation.abs() > UNIT_TOL {
            return Err(Error::NotUnit { deviation });
        }
        Ok(PointS3(v))
    }

    pub fn from_components(x0: f64, x1: f64, x2: f64, x3: f64) -> Result<Self> {
        Self::new(Vector4::new(x0, x1, x2, x3))
    }

    /// Radial projection onto S³.
    pub fn normalize(v: Vector4<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n <= 1e-300 {
            return Err(Error::ZeroQuaternion);
        }
        Ok(PointS3(v / n))
    }

    pub(crate) fn new_unchecked(v: Vector4<f64>) -> Self {
        PointS3(v)
    }

    pub fn coords(&self) -> &Vector4<f64> {
        &self.0
    }

    pub fn x3(&self) -> f64 {
        self.0[3]
    }

    pub fn dot(&self, o: &PointS3) -> f64 {
        self.0.dot(&o.0)
    }

    /// Geodesic (great-circle) distance on S³.
    pub fn distance(&self, o: &PointS3) -> f64 {
        geodesic_distance(&self.0, &o.0)
    }

    pub fn antipode(&self) -> Self {
        PointS3(-self.0)
    }

    pub fn as_quaternion(&self) -> UnitQuaternion {
        UnitQuaternion::new_unchecked(Quaternion::from_vector(&self.0))
    }
}

impl From<UnitQuaternion> for PointS3 {
    fn from(q: UnitQuaternion) -> Self {
        PointS3(q.to_vector())
    }
}

impl From<PointS3> for [f64; 4] {
    fn from(p: PointS3) -> [f64; 4] {
        [p.0[0], p.0[1], p.0[2], p.0[3]]
    }
}

/// `acos⟨x, y⟩` for unit vectors, computed via `atan2` for accuracy near 0 and π.
pub fn geodesic_distance(x: &Vector4<f64>, y: &Vector4<f64>) -> f64 {
    let cos = x.dot(y);
    let sin = (x - y * cos).norm();
    sin.atan2(cos)
}

/// Left multiplication of an R⁴ vector by a unit quaternion (a linear isometry).
pub fn rotate(q: UnitQuaternion, x: &Vector4<f64>) -> Vector4<f64> {
    (q.quaternion() * Quaternion::from_vector(x)).to_vector()
}

/// Canonical stereographic projection from `k = (0, 0, 0, 1)`.
pub fn stereo(x: &PointS3) -> Result<PointR3> {
    stereo_vec(x.coords())
}

pub(crate) fn stereo_vec(x: &Vector4<f64>) -> Result<PointR3> {
    let gap = 1.0 - x[3];
    if gap <= POLE_GAP {
        return Err(Error::AtPole { gap });
    }
    Ok(Vector3::new(x[0], x[1], x[2]) / gap)
}

pub fn stereo_inv(y: &PointR3) -> PointS3 {
    let s = y.norm_squared();
    let d = 1.0 + s;
    PointS3(Vector4::new(
        2.0 * y[0] / d,
        2.0 * y[1] / d,
        2.0 * y[2] / d,
        (s - 1.0) / d,
    ))
}

/// Differential of the canonical projection at `x`, applied to a tangent vector.
pub(crate) fn stereo_differential(x: &Vector4<f64>, t: &Vector4<f64>) -> PointR3 {
    let gap = 1.0 - x[3];
    Vector3::new(t[0], t[1], t[2]) / gap + Vector3::new(x[0], x[1], x[2]) * (t[3] / (gap * gap))
}

/// Where the projection point sits, and how designs are carried to the canonical frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProjectionFrame {
    pub pole: UnitQuaternion,
    /// Maps `pole` to `k`.
    pub pre_rotation: UnitQuaternion,
    /// Left isometry applied to the design before the frame change; identity by default.
    pub design_rotation: UnitQuaternion,
}

impl ProjectionFrame {
    pub fn canonical() -> Self {
        frame_from_pole(UnitQuaternion::K).expect("k is unit")
    }

    pub fn with_design_rotation(mut self, q: UnitQuaternion) -> Self {
        self.design_rotation = q;
        self
    }

    fn total_rotation(&self) -> UnitQuaternion {
        self.pre_rotation * self.design_rotation
    }

    /// Carries a vector of R⁴ (point or tangent) into the canonical frame.
    pub fn to_canonical(&self, x: &Vector4<f64>) -> Vector4<f64> {
        rotate(self.total_rotation(), x)
    }

    /// Pole of the frame expressed in design coordinates.
    pub fn pole_in_design(&self) -> Vector4<f64> {
        rotate(self.total_rotation().inverse(), &Vector4::new(0.0, 0.0, 0.0, 1.0))
    }

    pub fn project(&self, x: &PointS3) -> Result<PointR3> {
        stereo_vec(&self.to_canonical(x.coords()))
    }

    pub fn project_vec(&self, x: &Vector4<f64>) -> Result<PointR3> {
        stereo_vec(&self.to_canonical(x))
    }

    /// Height of `x` along the pole direction, `⟨x_rot, k⟩`.
    pub fn height(&self, x: &Vector4<f64>) -> f64 {
        self.to_canonical(x)[3]
    }

    /// Image of a tangent vector `t` at `x` under projection.
    pub fn push_tangent(&self, x: &Vector4<f64>, t: &Vector4<f64>) -> PointR3 {
        stereo_differential(&self.to_canonical(x), &self.to_canonical(t))
    }
}

pub fn frame_from_pole(pole: UnitQuaternion) -> Result<ProjectionFrame> {
    let pre_rotation = mover(pole.quaternion(), Quaternion::K)?;
    let check = (pre_rotation * pole).quaternion();
    debug_assert!(check.approx_eq(Quaternion::K, FRAME_TOL));
    Ok(ProjectionFrame {
        pole,
        pre_rotation,
        design_rotation: UnitQuaternion::IDENTITY,
    })
}

/// `λ(x) = 1 / (1 - ⟨x_rot, k⟩)`, the local length magnification of projection.
pub fn conformal_scale(x: &PointS3, f: &ProjectionFrame) -> Result<f64> {
    conformal_scale_vec(x.coords(), f)
}

pub(crate) fn conformal_scale_vec(x: &Vector4<f64>, f: &ProjectionFrame) -> Result<f64> {
    let gap = 1.0 - f.height(x);
    if gap <= POLE_GAP {
        return Err(Error::AtPole { gap });
    }
    Ok(1.0 / gap)
}

/// A circle on S³: `center + radius·(cos t·u + sin t·v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CircleS3 {
    pub plane_center: Vector4<f64>,
    pub u: Vector4<f64>,
    pub v: Vector4<f64>,
    pub radius: f64,
}

impl CircleS3 {
    pub fn new(plane_center: Vector4<f64>, u: Vector4<f64>, v: Vector4<f64>, radius: f64) -> Result<Self> {
        let c = CircleS3 {
            plane_center,
            u,
            v,
            radius,
        };
        c.validate()?;
        Ok(c)
    }

    /// Great circle spanned by orthonormal `u`, `v`.
    pub fn great(u: Vector4<f64>, v: Vector4<f64>) -> Result<Self> {
        Self::new(Vector4::zeros(), u, v, 1.0)
    }

    /// The unique great circle through non-antipodal `a` and `b`, parameterized from `a` toward `b`.
    pub fn great_through(a: &PointS3, b: &PointS3) -> Result<Self> {
        let a = *a.coords();
        let w = b.coords() - a * a.dot(b.coords());
        let n = w.norm();
        if n <= 1e-12 {
            return Err(Error::DegenerateCircle { radius: n });
        }
        Self::great(a, w / n)
    }

    fn validate(&self) -> Result<()> {
        let tol = 1e-10;
        let bad = |what: &str| Error::InvalidSpec(format!("circle frame: {what}"));
        if self.radius <= 1e-12 {
            return Err(Error::DegenerateCircle { radius: self.radius });
        }
        if self.radius > 1.0 + tol {
            return Err(bad("radius exceeds 1"));
        }
        if (self.u.norm() - 1.0).abs() > tol || (self.v.norm() - 1.0).abs() > tol {
            return Err(bad("directions not unit"));
        }
        if self.u.dot(&self.v).abs() > tol
            || self.plane_center.dot(&self.u).abs() > tol
            || self.plane_center.dot(&self.v).abs() > tol
        {
            return Err(bad("directions not orthogonal"));
        }
        if (self.plane_center.norm_squared() + self.radius * self.radius - 1.0).abs() > tol {
            return Err(bad("circle does not lie on S3"));
        }
        Ok(())
    }

    pub fn is_great(&self) -> bool {
        (self.radius - 1.0).abs() <= 1e-12 && self.plane_center.norm() <= 1e-12
    }

    pub fn point(&self, t: f64) -> Vector4<f64> {
        self.plane_center + (self.u * t.cos() + self.v * t.sin()) * self.radius
    }

    pub fn tangent(&self, t: f64) -> Vector4<f64> {
        (self.v * t.cos() - self.u * t.sin()) * self.radius
    }

    /// Parameter of the circle point closest to `x`.
    pub fn parameter_of(&self, x: &Vector4<f64>) -> f64 {
        let d = x - self.plane_center;
        d.dot(&self.v).atan2(d.dot(&self.u))
    }

    /// Chordal distance in R⁴ from `x` to the circle.
    pub fn distance_to(&self, x: &Vector4<f64>) -> f64 {
        let d = x - self.plane_center;
        let (pu, pv) = (d.dot(&self.u), d.dot(&self.v));
        let along = (pu * pu + pv * pv).sqrt();
        if along <= f64::MIN_POSITIVE {
            return (d.norm_squared() + self.radius * self.radius).sqrt();
        }
        (d - (self.u * pu + self.v * pv) * (self.radius / along)).norm()
    }

    pub fn transformed(&self, q: UnitQuaternion) -> CircleS3 {
        CircleS3 {
            plane_center: rotate(q, &self.plane_center),
            u: rotate(q, &self.u),
            v: rotate(q, &self.v),
            radius: self.radius,
        }
    }
}

/// A circle or a straight line in R³.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Circline {
    Circle {
        center: PointR3,
        radius: f64,
        plane_normal: Vector3<f64>,
    },
    Line {
        base: PointR3,
        direction: Vector3<f64>,
    },
}

impl Circline {
    /// Distance from `y` to the circline.
    pub fn residual(&self, y: &PointR3) -> f64 {
        match self {
            Circline::Circle {
                center,
                radius,
                plane_normal,
            } => {
                let d = y - center;
                let off_plane = d.dot(plane_normal);
                let in_plane = (d - plane_normal * off_plane).norm();
                ((in_plane - radius).powi(2) + off_plane * off_plane).sqrt()
            }
            Circline::Line { base, direction } => {
                let d = y - base;
                (d - direction * d.dot(direction)).norm()
            }
        }
    }

    /// Unit tangent direction at a point `y` on the circline (sign arbitrary).
    pub fn tangent_at(&self, y: &PointR3) -> Vector3<f64> {
        match self {
            Circline::Circle {
                center, plane_normal, ..
            } => plane_normal.cross(&(y - center)).normalize(),
            Circline::Line { direction, .. } => *direction,
        }
    }

    pub fn is_line(&self) -> bool {
        matches!(self, Circline::Line { .. })
    }

    pub fn radius(&self) -> Option<f64> {
        match self {
            Circline::Circle { radius, .. } => Some(*radius),
            Circline::Line { .. } => None,
        }
    }
}

/// Circle through three points of R³.
pub fn circumcircle(a: &PointR3, b: &PointR3, c: &PointR3) -> Option<Circline> {
    let u = b - a;
    let w = c - a;
    let n = u.cross(&w);
    let n2 = n.norm_squared();
    if n2 <= f64::EPSILON * u.norm_squared() * w.norm_squared() {
        return None;
    }
    let offset = (n.cross(&u) * w.norm_squared() + w.cross(&n) * u.norm_squared()) / (2.0 * n2);
    Some(Circline::Circle {
        center: a + offset,
        radius: offset.norm(),
        plane_normal: n / n2.sqrt(),
    })
}

/// Image of a circle of S³ under projection in frame `f`.
pub fn project_circle(c: &CircleS3, f: &ProjectionFrame) -> Result<Circline> {
    if c.radius <= 1e-12 {
        return Err(Error::DegenerateCircle { radius: c.radius });
    }
    let rot = f.pre_rotation * f.design_rotation;
    let cc = c.transformed(rot);
    let pole = Vector4::new(0.0, 0.0, 0.0, 1.0);
    // Sample away from the pole: start at the circle point farthest from it.
    let t_far = cc.parameter_of(&pole) + PI;
    if cc.distance_to(&pole) <= LINE_THRESHOLD {
        let a = stereo_vec(&cc.point(t_far))?;
        let b = stereo_vec(&cc.point(t_far + PI / 2.0))?;
        let dir = b - a;
        return Ok(Circline::Line {
            base: a,
            direction: dir.normalize(),
        });
    }
    let samples: Vec<PointR3> = (0..3)
        .map(|i| stereo_vec(&cc.point(t_far + 2.0 * PI * i as f64 / 3.0)))
        .collect::<Result<_>>()?;
    let fit =
        circumcircle(&samples[0], &samples[1], &samples[2]).ok_or(Error::DegenerateCircle { radius: c.radius })?;
    let scale = match fit {
        Circline::Circle { center, radius, .. } => center.norm() + radius,
        Circline::Line { .. } => unreachable!(),
    };
    for i in 0..FIT_CHECK_SAMPLES {
        let y = stereo_vec(&cc.point(2.0 * PI * i as f64 / FIT_CHECK_SAMPLES as f64))?;
        if fit.residual(&y) > FIT_CHECK_TOL * (1.0 + scale) {
            return Err(Error::DegenerateCircle { radius: c.radius });
        }
    }
    Ok(fit)
}

fn unsigned_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

fn unsigned_angle4(a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
    let cos = a.dot(b);
    let sin = (a.norm_squared() * b.norm_squared() - cos * cos).max(0.0).sqrt();
    sin.atan2(cos)
}

/// Angle between two circles at a common point, measured in S³ and again after projection.
pub fn angle_check(c1: &CircleS3, c2: &CircleS3, at: &PointS3, f: &ProjectionFrame) -> Result<(f64, f64)> {
    let x = at.coords();
    for c in [c1, c2] {
        let distance = c.distance_to(x);
        if distance > 1e-9 {
            return Err(Error::NotIncident { distance });
        }
    }
    let y = f.project(at)?;
    let t1 = c1.tangent(c1.parameter_of(x));
    let t2 = c2.tangent(c2.parameter_of(x));
    let in_s3 = unsigned_angle4(&t1, &t2);

    // Tangents of the projected circlines, oriented by the direction of travel.
    let oriented = |c: &CircleS3| -> Result<Vector3<f64>> {
        let line = project_circle(c, f)?;
        let t = c.parameter_of(x);
        let h = 1e-6;
        let fwd = f.project_vec(&c.point(t + h))? - f.project_vec(&c.point(t - h))?;
        let dir = line.tangent_at(&y);
        Ok(if dir.dot(&fwd) < 0.0 { -dir } else { dir })
    };
    let in_r3 = unsigned_angle(&oriented(c1)?, &oriented(c2)?);
    Ok((in_s3, in_r3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn p(x0: f64, x1: f64, x2: f64, x3: f64) -> PointS3 {
        PointS3::from_components(x0, x1, x2, x3).unwrap()
    }

    fn e(i: usize) -> Vector4<f64> {
        let mut v = Vector4::zeros();
        v[i] = 1.0;
        v
    }

    #[test]
    fn stereo_examples() {
        assert_eq!(stereo(&p(0.0, 0.0, 0.0, -1.0)).unwrap(), Vector3::zeros());
        assert_eq!(stereo(&p(1.0, 0.0, 0.0, 0.0)).unwrap(), Vector3::new(1.0, 0.0, 0.0));
        let y = stereo(&p(0.0, 0.0, 0.6, 0.8)).unwrap();
        assert!((y - Vector3::new(0.0, 0.0, 3.0)).norm() < 1e-14);
        assert!(matches!(stereo(&p(0.0, 0.0, 0.0, 1.0)), Err(Error::AtPole { .. })));
    }

    #[test]
    fn stereo_inverse_examples() {
        assert_eq!(stereo_inv(&Vector3::zeros()), p(0.0, 0.0, 0.0, -1.0));
        assert_eq!(stereo_inv(&Vector3::new(1.0, 0.0, 0.0)), p(1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn frames() {
        let f = frame_from_pole(UnitQuaternion::K).unwrap();
        assert_eq!(f.pre_rotation, UnitQuaternion::IDENTITY);

        let f = frame_from_pole(-UnitQuaternion::IDENTITY).unwrap();
        let y = f.project(&p(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(y.norm() < 1e-15);
    }

    #[test]
    fn line_through_pole() {
        let c = CircleS3::great(e(3), e(0)).unwrap();
        let l = project_circle(&c, &ProjectionFrame::canonical()).unwrap();
        match l {
            Circline::Line { base, direction } => {
                assert!((base - direction * base.dot(&direction)).norm() < 1e-12);
                assert!((direction.x.abs() - 1.0).abs() < 1e-12);
            }
            _ => panic!("expected a line, got {l:?}"),
        }
    }

    #[test]
    fn equator_is_fixed() {
        let c = CircleS3::great(e(0), e(1)).unwrap();
        match project_circle(&c, &ProjectionFrame::canonical()).unwrap() {
            Circline::Circle {
                center,
                radius,
                plane_normal,
            } => {
                assert!(center.norm() < 1e-12);
                assert!((radius - 1.0).abs() < 1e-12);
                assert!((plane_normal.z.abs() - 1.0).abs() < 1e-12);
            }
            l => panic!("expected a circle, got {l:?}"),
        }
    }

    #[test]
    fn conformal_scale_examples() {
        let f = ProjectionFrame::canonical();
        assert!((conformal_scale(&p(0.0, 0.0, 0.0, -1.0), &f).unwrap() - 0.5).abs() < 1e-15);
        assert!((conformal_scale(&p(0.0, 1.0, 0.0, 0.0), &f).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_great_circles_at_one() {
        let c1 = CircleS3::great(e(0), e(1)).unwrap();
        let c2 = CircleS3::great(e(0), e(2)).unwrap();
        let (a, b) = angle_check(&c1, &c2, &p(1.0, 0.0, 0.0, 0.0), &ProjectionFrame::canonical()).unwrap();
        assert!((a - FRAC_PI_2).abs() < 1e-12);
        assert!((b - FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn angle_check_rejects_non_incident() {
        let c1 = CircleS3::great(e(0), e(1)).unwrap();
        let c2 = CircleS3::great(e(2), e(3)).unwrap();
        let r = angle_check(&c1, &c2, &p(1.0, 0.0, 0.0, 0.0), &ProjectionFrame::canonical());
        assert!(matches!(r, Err(Error::NotIncident { .. })));
    }

    #[test]
    fn small_circle_validation() {
        let r: f64 = 0.6;
        let c = CircleS3::new(e(3) * 0.8, e(0), e(1), r).unwrap();
        assert!(!c.is_great());
        assert!(CircleS3::new(e(3) * 0.5, e(0), e(1), r).is_err());
        assert!(matches!(
            CircleS3::new(e(3), e(0), e(1), 0.0),
            Err(Error::DegenerateCircle { .. })
        ));
    }

    #[test]
    fn circumcircle_of_right_triangle() {
        let c = circumcircle(
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(0.0, 1.0, 0.0),
            &Vector3::new(-1.0, 0.0, 0.0),
        )
        .unwrap();
        assert_eq!(c.radius(), Some(1.0));
        assert!(circumcircle(&Vector3::zeros(), &Vector3::x(), &(Vector3::x() * 2.0)).is_none());
    }
}
