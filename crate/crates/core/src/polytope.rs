//! The six regular 4-polytopes, their edge graphs, and great-arc skeletons on S³.
//!
//! Vertex sets use the standard coordinates, pushed radially onto the unit
//! sphere. Edges are the vertex pairs at minimal distance. Cells are recovered
//! from supporting hyperplanes through a vertex and three of its neighbours.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{mover, UnitQuaternion};
use crate::s3geom::{geodesic_distance, rotate, CircleS3, PointS3, ProjectionFrame};

/// Tolerance for grouping equal distances.
const DIST_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolytopeKind {
    #[serde(rename = "5-cell")]
    Simplex5,
    #[serde(rename = "8-cell")]
    Tesseract8,
    #[serde(rename = "16-cell")]
    Cross16,
    #[serde(rename = "24-cell")]
    Cell24,
    #[serde(rename = "120-cell")]
    Cell120,
    #[serde(rename = "600-cell")]
    Cell600,
}

impl PolytopeKind {
    pub const ALL: [PolytopeKind; 6] = [
        PolytopeKind::Simplex5,
        PolytopeKind::Tesseract8,
        PolytopeKind::Cross16,
        PolytopeKind::Cell24,
        PolytopeKind::Cell120,
        PolytopeKind::Cell600,
    ];

    /// Number of 3-dimensional cells.
    pub fn cell_count(self) -> usize {
        match self {
            PolytopeKind::Simplex5 => 5,
            PolytopeKind::Tesseract8 => 8,
            PolytopeKind::Cross16 => 16,
            PolytopeKind::Cell24 => 24,
            PolytopeKind::Cell120 => 120,
            PolytopeKind::Cell600 => 600,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Polytope4 {
    pub kind: PolytopeKind,
    pub vertices: Vec<PointS3>,
    pub edges: Vec<(usize, usize)>,
}

/// Arc of a great circle, `circle.point(t)` for `t` in `[t_start, t_end]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GreatArc {
    pub circle: CircleS3,
    pub t_start: f64,
    pub t_end: f64,
    /// Polytope vertex at each end; `None` where the arc was cut.
    pub ends: [Option<usize>; 2],
}

impl GreatArc {
    pub fn length(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn point(&self, t: f64) -> Vector4<f64> {
        self.circle.point(t)
    }

    pub fn start(&self) -> Vector4<f64> {
        self.circle.point(self.t_start)
    }

    pub fn end(&self) -> Vector4<f64> {
        self.circle.point(self.t_end)
    }

    pub fn midpoint(&self) -> Vector4<f64> {
        self.circle.point(0.5 * (self.t_start + self.t_end))
    }

    /// Minimum and maximum of the pole height `⟨x_rot, k⟩` along the arc.
    ///
    /// The height is `R cos(t - δ)` along a great circle, so the extremes are
    /// found in closed form.
    pub fn height_range(&self, f: &ProjectionFrame) -> (f64, f64) {
        let (a, b) = self.height_coefficients(f);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut visit = |t: f64| {
            let h = a * t.cos() + b * t.sin();
            lo = lo.min(h);
            hi = hi.max(h);
        };
        visit(self.t_start);
        visit(self.t_end);
        let delta = b.atan2(a);
        for base in [delta, delta + PI] {
            for k in -2..=2 {
                let t = base + 2.0 * PI * k as f64;
                if t > self.t_start && t < self.t_end {
                    visit(t);
                }
            }
        }
        (lo, hi)
    }

    fn height_coefficients(&self, f: &ProjectionFrame) -> (f64, f64) {
        let c = &self.circle;
        debug_assert!(c.is_great());
        (f.height(&c.u), f.height(&c.v))
    }

    pub fn transformed(&self, q: UnitQuaternion) -> GreatArc {
        GreatArc {
            circle: self.circle.transformed(q),
            ..*self
        }
    }
}

fn normalize_all(raw: Vec<Vector4<f64>>) -> Vec<PointS3> {
    raw.into_iter()
        .map(|v| PointS3::normalize(v).expect("nonzero canonical vertex"))
        .collect()
}

fn sign_patterns(v: [f64; 4]) -> Vec<Vector4<f64>> {
    let mut out: Vec<Vector4<f64>> = Vec::new();
    for mask in 0..16u32 {
        let mut w = Vector4::from(v);
        let mut skip = false;
        for i in 0..4 {
            if mask & (1 << i) != 0 {
                if v[i] == 0.0 {
                    skip = true;
                }
                w[i] = -w[i];
            }
        }
        if !skip {
            out.push(w);
        }
    }
    out
}

fn permutations(even_only: bool) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct = (0..4).all(|i| (i + 1..4).all(|j| p[i] != p[j]));
                    if !distinct {
                        continue;
                    }
                    let inversions = (0..4)
                        .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
                        .filter(|&(i, j)| p[i] > p[j])
                        .count();
                    if !even_only || inversions % 2 == 0 {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

fn dedup_points(points: Vec<Vector4<f64>>) -> Vec<Vector4<f64>> {
    let mut out: Vec<Vector4<f64>> = Vec::new();
    for p in points {
        if !out.iter().any(|q| (q - p).norm() < 1e-9) {
            out.push(p);
        }
    }
    out
}

fn permuted_sign_orbit(base: [f64; 4], even_only: bool) -> Vec<Vector4<f64>> {
    let mut pts = Vec::new();
    for perm in permutations(even_only) {
        let permuted = [base[perm[0]], base[perm[1]], base[perm[2]], base[perm[3]]];
        pts.extend(sign_patterns(permuted));
    }
    dedup_points(pts)
}

fn simplex_vertices() -> Vec<Vector4<f64>> {
    // Standard basis of R⁵ expressed in an orthonormal basis of the hyperplane Σx = 0.
    let helmert: Vec<[f64; 5]> = (1..5)
        .map(|k| {
            let s = ((k * (k + 1)) as f64).sqrt();
            let mut h = [0.0; 5];
            for hi in h.iter_mut().take(k) {
                *hi = 1.0 / s;
            }
            h[k] = -(k as f64) / s;
            h
        })
        .collect();
    (0..5)
        .map(|i| {
            let mut e = [-0.2; 5];
            e[i] += 1.0;
            Vector4::from_iterator(helmert.iter().map(|h| h.iter().zip(e).map(|(a, b)| a * b).sum::<f64>()))
        })
        .collect()
}

fn tesseract_vertices() -> Vec<Vector4<f64>> {
    sign_patterns([0.5; 4])
}

fn cross_vertices() -> Vec<Vector4<f64>> {
    permuted_sign_orbit([1.0, 0.0, 0.0, 0.0], false)
}

fn cell24_vertices() -> Vec<Vector4<f64>> {
    permuted_sign_orbit([1.0, 1.0, 0.0, 0.0], false)
}

fn cell600_vertices() -> Vec<Vector4<f64>> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v = cross_vertices();
    v.extend(tesseract_vertices());
    v.extend(
        permuted_sign_orbit([phi, 1.0, 1.0 / phi, 0.0], true)
            .into_iter()
            .map(|w| w * 0.5),
    );
    v
}

/// Index pairs at the minimal inter-vertex distance.
fn min_distance_edges(vertices: &[PointS3]) -> Vec<(usize, usize)> {
    let n = vertices.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            best = best.min((vertices[i].coords() - vertices[j].coords()).norm());
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = (vertices[i].coords() - vertices[j].coords()).norm();
            if d - best <= DIST_TOL {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj
}

/// Cells as sets of vertex indices lying on a common supporting hyperplane.
pub fn find_cells(vertices: &[PointS3], edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let adj = adjacency(vertices.len(), edges);
    let mut cells: BTreeSet<Vec<usize>> = BTreeSet::new();
    for (v0, nbrs) in adj.iter().enumerate() {
        for a in 0..nbrs.len() {
            for b in a + 1..nbrs.len() {
                for c in b + 1..nbrs.len() {
                    let pts = [v0, nbrs[a], nbrs[b], nbrs[c]];
                    if let Some(cell) = supporting_cell(vertices, pts) {
                        cells.insert(cell);
                    }
                }
            }
        }
    }
    cells.into_iter().collect()
}

fn supporting_cell(vertices: &[PointS3], idx: [usize; 4]) -> Option<Vec<usize>> {
    // Hyperplane ⟨n, x⟩ = 1 through the four points.
    let m = Matrix4::from_rows(&[
        vertices[idx[0]].coords().transpose(),
        vertices[idx[1]].coords().transpose(),
        vertices[idx[2]].coords().transpose(),
        vertices[idx[3]].coords().transpose(),
    ]);
    let normal = m.lu().solve(&Vector4::repeat(1.0))?;
    if !normal.iter().all(|c| c.is_finite()) {
        return None;
    }
    let mut on = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        let s = normal.dot(v.coords());
        if s > 1.0 + 1e-9 {
            return None;
        }
        if (s - 1.0).abs() <= 1e-9 {
            on.push(i);
        }
    }
    Some(on)
}

/// Unit centroid directions of the cells.
pub fn cell_centers(p: &Polytope4) -> Vec<PointS3> {
    find_cells(&p.vertices, &p.edges)
        .iter()
        .map(|cell| {
            let sum: Vector4<f64> = cell.iter().map(|&i| p.vertices[i].coords()).sum();
            PointS3::normalize(sum).expect("cell centroid is off the origin")
        })
        .collect()
}

pub fn build(kind: PolytopeKind) -> Polytope4 {
    let vertices = match kind {
        PolytopeKind::Simplex5 => normalize_all(simplex_vertices()),
        PolytopeKind::Tesseract8 => normalize_all(tesseract_vertices()),
        PolytopeKind::Cross16 => normalize_all(cross_vertices()),
        PolytopeKind::Cell24 => normalize_all(cell24_vertices()),
        PolytopeKind::Cell600 => normalize_all(cell600_vertices()),
        PolytopeKind::Cell120 => {
            let dual = build(PolytopeKind::Cell600);
            cell_centers(&dual)
        }
    };
    let edges = min_distance_edges(&vertices);
    Polytope4 { kind, vertices, edges }
}

impl Polytope4 {
    pub fn transformed(&self, q: UnitQuaternion) -> Polytope4 {
        Polytope4 {
            kind: self.kind,
            vertices: self
                .vertices
                .iter()
                .map(|v| PointS3::new_unchecked(rotate(q, v.coords())))
                .collect(),
            edges: self.edges.clone(),
        }
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let (a, b) = self.edges[e];
        self.vertices[a].distance(&self.vertices[b])
    }
}

pub fn skeleton_arcs(p: &Polytope4) -> Result<Vec<GreatArc>> {
    p.edges
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| {
            let (va, vb) = (&p.vertices[a], &p.vertices[b]);
            if va.dot(vb) <= -1.0 + 1e-12 {
                return Err(Error::AntipodalEdge(e));
            }
            let circle = CircleS3::great_through(va, vb)?;
            Ok(GreatArc {
                circle,
                t_start: 0.0,
                t_end: geodesic_distance(va.coords(), vb.coords()),
                ends: [Some(a), Some(b)],
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Orientation {
    VertexCentered,
    CellCentered,
    Generic { q: [f64; 4] },
}

fn nearest(points: &[PointS3], target: &Vector4<f64>) -> PointS3 {
    *points
        .iter()
        .max_by(|a, b| a.coords().dot(target).total_cmp(&b.coords().dot(target)))
        .expect("nonempty point set")
}

/// Moves the polytope (by a left isometry) so the nearest vertex or cell center sits at the frame's pole.
pub fn orient(p: &Polytope4, mode: Orientation, f: &ProjectionFrame) -> Result<Polytope4> {
    let pole = f.pole_in_design();
    let target = match mode {
        Orientation::Generic { q } => {
            let q = UnitQuaternion::from_components(q[0], q[1], q[2], q[3])?;
            return Ok(p.transformed(q));
        }
        Orientation::VertexCentered => nearest(&p.vertices, &pole),
        Orientation::CellCentered => nearest(&cell_centers(p), &pole),
    };
    let pole_q = PointS3::normalize(pole)?.as_quaternion();
    let q = mover(target.as_quaternion().quaternion(), pole_q.quaternion())?;
    Ok(p.transformed(q))
}

/// Keeps only the parts of the arcs in the southern hyperhemisphere `x3 ≤ 0` of the frame.
pub fn half_cut(arcs: &[GreatArc], f: &ProjectionFrame) -> Vec<GreatArc> {
    const SOUTH_TOL: f64 = 1e-12;
    let mut out = Vec::new();
    for arc in arcs {
        let (a, b) = arc.height_coefficients(f);
        let h = |t: f64| a * t.cos() + b * t.sin();
        let (h0, h1) = (h(arc.t_start), h(arc.t_end));
        let south0 = h0 <= SOUTH_TOL;
        let south1 = h1 <= SOUTH_TOL;
        if south0 && south1 {
            // Arcs shorter than π cannot leave and re-enter the southern half.
            out.push(*arc);
            continue;
        }
        if !south0 && !south1 {
            continue;
        }
        let t_cross = if south0 {
            crossing(&h, arc.t_start, arc.t_end)
        } else {
            crossing(&h, arc.t_end, arc.t_start)
        };
        let cut = if south0 {
            GreatArc {
                t_end: t_cross,
                ends: [arc.ends[0], None],
                ..*arc
            }
        } else {
            GreatArc {
                t_start: t_cross,
                ends: [None, arc.ends[1]],
                ..*arc
            }
        };
        if cut.length() > 1e-9 {
            out.push(cut);
        }
    }
    out
}

/// Last point reached from `south` towards `north` with `h ≤ 0`, by bisection.
fn crossing(h: &impl Fn(f64) -> f64, mut south: f64, mut north: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (south + north);
        if h(mid) <= 0.0 {
            south = mid;
        } else {
            north = mid;
        }
        if (south - north).abs() < 1e-16 {
            break;
        }
    }
    south
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn cross16_edges_are_quarter_turns() {
        let p = build(PolytopeKind::Cross16);
        for arc in skeleton_arcs(&p).unwrap() {
            assert!((arc.length() - FRAC_PI_2).abs() < 1e-12);
        }
    }

    #[test]
    fn arc_midpoint_is_equidistant() {
        let p = build(PolytopeKind::Cell24);
        let arcs = skeleton_arcs(&p).unwrap();
        assert_eq!(arcs.len(), 96);
        for arc in &arcs {
            let m = arc.midpoint();
            assert!((m.norm() - 1.0).abs() < 1e-12);
            let d0 = geodesic_distance(&m, &arc.start());
            let d1 = geodesic_distance(&m, &arc.end());
            assert!((d0 - d1).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_counts() {
        for kind in [
            PolytopeKind::Simplex5,
            PolytopeKind::Tesseract8,
            PolytopeKind::Cross16,
            PolytopeKind::Cell24,
            PolytopeKind::Cell600,
        ] {
            let p = build(kind);
            assert_eq!(find_cells(&p.vertices, &p.edges).len(), kind.cell_count(), "{kind:?}");
        }
    }

    #[test]
    fn generic_identity_orientation() {
        let p = build(PolytopeKind::Cell24);
        let o = orient(
            &p,
            Orientation::Generic {
                q: [1.0, 0.0, 0.0, 0.0],
            },
            &ProjectionFrame::canonical(),
        )
        .unwrap();
        for (a, b) in p.vertices.iter().zip(&o.vertices) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn vertex_centered_600_cell() {
        let p = build(PolytopeKind::Cell600);
        let f = ProjectionFrame::canonical();
        let o = orient(&p, Orientation::VertexCentered, &f).unwrap();
        let at_pole = o.vertices.iter().filter(|v| (v.x3() - 1.0).abs() < 1e-9).count();
        let at_origin = o.vertices.iter().filter(|v| (v.x3() + 1.0).abs() < 1e-9).count();
        assert_eq!((at_pole, at_origin), (1, 1));
    }

    #[test]
    fn half_cut_keeps_southern_arcs_and_equator() {
        let f = ProjectionFrame::canonical();
        let e = |i: usize| {
            let mut v = Vector4::zeros();
            v[i] = 1.0;
            PointS3::new(v).unwrap()
        };
        let south = PointS3::from_components(0.0, 0.0, 0.0, -1.0).unwrap();
        let arc = |a: &PointS3, b: &PointS3| GreatArc {
            circle: CircleS3::great_through(a, b).unwrap(),
            t_start: 0.0,
            t_end: a.distance(b),
            ends: [Some(0), Some(1)],
        };
        let southern = arc(&e(0), &south);
        assert_eq!(half_cut(&[southern], &f), vec![southern]);
        let equatorial = arc(&e(0), &e(1));
        assert_eq!(half_cut(&[equatorial], &f), vec![equatorial]);
        assert!(half_cut(&[arc(&e(0), &e(3))], &f).is_empty());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = PointS3::from_components(s, 0.0, 0.0, -s).unwrap();
        let b = PointS3::from_components(s, 0.0, 0.0, s).unwrap();
        let cut = half_cut(&[arc(&a, &b)], &f);
        assert_eq!(cut.len(), 1);
        assert!((cut[0].length() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert_eq!(cut[0].ends, [Some(0), None]);
        assert!(f.height(&cut[0].end()) <= 1e-12);
        let grazing = PointS3::normalize(Vector4::new(1.0, 0.0, 0.0, 1e-15)).unwrap();
        assert!(half_cut(&[arc(&grazing, &e(3))], &f).is_empty());
        assert!(half_cut(&[arc(&e(3), &grazing)], &f).is_empty());
    }
}
