//! Property tests for the quaternion, projection and surface kernels.

use std::f64::consts::{PI, TAU};

use approx::assert_relative_eq;
use nalgebra::{Vector3, Vector4};
use proptest::prelude::*;

use s3forge::meshkit::{self, TriMesh};
use s3forge::quat::{mover, mover_right, Quaternion, UnitQuaternion};
use s3forge::s3geom::{
    conformal_scale, frame_from_pole, geodesic_distance, project_circle, rotate, stereo, stereo_inv, CircleS3, PointS3,
};
use s3forge::surfaces::{normal_cramer, offset_r, surface_point, NormalMode, SurfaceKind, SurfaceSpec};

fn quaternion() -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-3.0..3.0f64).prop_map(|[a, b, c, d]| Quaternion::new(a, b, c, d))
}

fn unit() -> impl Strategy<Value = UnitQuaternion> {
    prop::array::uniform4(-1.0..1.0f64)
        .prop_filter("away from zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 0.01)
        .prop_map(|[a, b, c, d]| UnitQuaternion::normalize(Quaternion::new(a, b, c, d)).unwrap())
}

fn v(q: UnitQuaternion) -> Vector4<f64> {
    q.to_vector()
}

proptest! {
    #[test]
    fn norm_is_multiplicative(p in quaternion(), q in quaternion()) {
        assert_relative_eq!((p * q).norm(), p.norm() * q.norm(), max_relative = 1e-12, epsilon = 1e-12);
    }

    #[test]
    fn product_is_associative(p in quaternion(), q in quaternion(), r in quaternion()) {
        prop_assert!(((p * q) * r).approx_eq(p * (q * r), 1e-10));
    }

    #[test]
    fn left_and_right_multiplication_preserve_dot(q in unit(), x in unit(), y in unit()) {
        let (x, y) = (v(x), v(y));
        assert_relative_eq!(rotate(q, &x).dot(&rotate(q, &y)), x.dot(&y), epsilon = 1e-12);
        let right = |a: Vector4<f64>| (Quaternion::from_vector(&a) * q.quaternion()).to_vector();
        assert_relative_eq!(right(x).dot(&right(y)), x.dot(&y), epsilon = 1e-12);
    }

    #[test]
    fn movers_carry_a_to_b(a in unit(), b in unit()) {
        let l = mover(a.quaternion(), b.quaternion()).unwrap();
        prop_assert!((l * a).quaternion().approx_eq(b.quaternion(), 1e-12));
        let r = mover_right(a.quaternion(), b.quaternion()).unwrap();
        prop_assert!((a * r).quaternion().approx_eq(b.quaternion(), 1e-12));
    }

    #[test]
    fn stereo_round_trip(y in prop::array::uniform3(-50.0..50.0f64)) {
        let y = Vector3::from(y);
        let back = stereo(&stereo_inv(&y)).unwrap();
        prop_assert!((back - y).norm() <= 1e-12 * (1.0 + y.norm_squared()));
    }

    #[test]
    fn inverse_round_trip(x in unit()) {
        prop_assume!(v(x)[3] < 0.99);
        let p = PointS3::new(v(x)).unwrap();
        let back = stereo_inv(&stereo(&p).unwrap());
        prop_assert!((back.coords() - p.coords()).norm() < 1e-12);
    }

    #[test]
    fn frames_send_their_pole_to_infinity(pole in unit(), x in unit()) {
        let f = frame_from_pole(pole).unwrap();
        prop_assert!((f.height(&v(pole)) - 1.0).abs() < 1e-12);
        prop_assert!((f.pole_in_design() - v(pole)).norm() < 1e-12);
        let d = geodesic_distance(&v(x), &v(pole));
        prop_assert!((f.height(&v(x)) - d.cos()).abs() < 1e-12);
    }

    /// λ agrees with the stretch of a short chord in any tangent direction.
    #[test]
    fn conformal_scale_matches_chord_stretch(pole in unit(), x in unit(), t in unit()) {
        let f = frame_from_pole(pole).unwrap();
        let x = v(x);
        prop_assume!(f.height(&x) < 0.9);
        let t = v(t) - x * x.dot(&v(t));
        prop_assume!(t.norm() > 0.1);
        let t = t.normalize();
        let h: f64 = 1e-6;
        let a = f.project_vec(&(x * h.cos() + t * h.sin())).unwrap();
        let b = f.project_vec(&(x * h.cos() - t * h.sin())).unwrap();
        let lambda = conformal_scale(&PointS3::new(x).unwrap(), &f).unwrap();
        assert_relative_eq!((a - b).norm() / (2.0 * h), lambda, max_relative = 1e-6);
    }

    #[test]
    fn circles_project_to_circlines(u in unit(), w in unit(), c in unit(), r in 0.05..1.0f64, pole in unit()) {
        let (u, w, c) = (v(u), v(w), v(c));
        let w = w - u * u.dot(&w);
        prop_assume!(w.norm() > 0.1);
        let w = w.normalize();
        let c = c - u * u.dot(&c) - w * w.dot(&c);
        prop_assume!(c.norm() > 0.1);
        let circle = CircleS3::new(c.normalize() * (1.0 - r * r).sqrt(), u, w, r).unwrap();
        let f = frame_from_pole(pole).unwrap();
        prop_assume!(circle.distance_to(&f.pole_in_design()) > 1e-3);
        let image = project_circle(&circle, &f).unwrap();
        for k in 0..16 {
            let x = circle.point(TAU * k as f64 / 16.0);
            let y = f.project_vec(&x).unwrap();
            prop_assert!(image.residual(&y) <= 1e-9 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn offsets_stay_on_the_sphere(th in 0.0..PI, ph in 0.0..PI, psi in -1.0..1.0f64) {
        for kind in [SurfaceKind::CliffordTorus, SurfaceKind::SudaneseMobius, SurfaceKind::KleinBottle] {
            let spec = SurfaceSpec::new(kind).unwrap();
            let r = offset_r(&spec, th, ph, psi, NormalMode::Cramer).unwrap();
            prop_assert!((r.coords().norm() - 1.0).abs() < 1e-12);
            let d = geodesic_distance(r.coords(), &surface_point(&spec, th, ph));
            prop_assert!((d - psi.abs()).abs() < 1e-10);
        }
    }

    /// The φ seam: the far edge is the near edge moved by the gluing map, with the normal flipped for one-sided surfaces.
    #[test]
    fn seam_gluing(th in 0.0..PI) {
        let cases = [
            (SurfaceKind::CliffordTorus, PI, th + PI, 1.0),
            (SurfaceKind::SudaneseMobius, PI, PI - th, -1.0),
            (SurfaceKind::KleinBottle, PI, PI - th, -1.0),
        ];
        for (kind, phi_hi, g, sign) in cases {
            let spec = SurfaceSpec::new(kind).unwrap();
            let far = surface_point(&spec, th, phi_hi);
            prop_assert!((far - surface_point(&spec, g.rem_euclid(TAU), 0.0)).norm() < 1e-12);
            let n_far = normal_cramer(&spec, th, phi_hi).unwrap();
            let n_near = normal_cramer(&spec, g.rem_euclid(TAU), 0.0).unwrap();
            prop_assert!((n_far - n_near * sign).norm() < 1e-12);
        }
        let knot = SurfaceSpec::new(SurfaceKind::TorusKnotBand { num: 3, den: 2, theta0: 0.7, half_width: 0.6 }).unwrap();
        let t = 0.1 + th / PI * 1.2;
        prop_assert!((surface_point(&knot, t, 2.0 * TAU) - surface_point(&knot, t, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn scale_to_hits_the_longest_target(s in 0.1..10.0f64, t in prop::array::uniform3(1.0..200.0f64)) {
        let cube = {
            let mut m = TriMesh::new();
            let p = |x: f64, y: f64, z: f64| Vector3::new(x, y, z) * s;
            let verts = [p(0., 0., 0.), p(1., 0., 0.), p(1., 1., 0.), p(0., 1., 0.), p(0., 0., 2.), p(1., 0., 2.), p(1., 1., 2.), p(0., 1., 2.)];
            let tris = [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]];
            m.push_shell(&verts, &tris, Some(2));
            m
        };
        let scaled = meshkit::scale_to(&cube, t);
        let longest = t.into_iter().fold(0.0, f64::max);
        assert_relative_eq!(scaled.extents()[2], longest, max_relative = 1e-12);
        let d = meshkit::validate(&scaled);
        prop_assert!(d.all_watertight());
        prop_assert_eq!(d.euler_characteristic, vec![2]);
        assert_relative_eq!(d.volume_mm3, 2.0 * (longest / 2.0).powi(3), max_relative = 1e-9);
    }
}
