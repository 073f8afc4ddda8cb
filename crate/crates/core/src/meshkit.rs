//! Indexed triangle meshes: welding, validation, measurement, scaling and export.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::s3geom::PointR3;

/// Triangles with area at or below this are dropped by [`weld`].
pub const DEGENERATE_AREA: f64 = 1e-12;

/// A closed component of a mesh, as a contiguous range of triangles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Shell {
    pub triangles: Range<usize>,
    /// Euler characteristic the generator predicts from its own combinatorics.
    pub expected_euler: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TriMesh {
    pub vertices: Vec<PointR3>,
    pub triangles: Vec<[u32; 3]>,
    pub shells: Vec<Shell>,
    /// Smallest local feature (wall, strut, gap) reported by the generator, in mesh units.
    pub min_feature: Option<f64>,
    /// max λ / min λ over the design.
    pub feature_ratio: Option<f64>,
}

impl TriMesh {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Appends a single closed shell given as local vertices and triangles.
    pub fn push_shell(&mut self, vertices: &[PointR3], triangles: &[[u32; 3]], expected_euler: Option<i64>) {
        let base = self.vertices.len() as u32;
        let start = self.triangles.len();
        self.vertices.extend_from_slice(vertices);
        self.triangles
            .extend(triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.shells.push(Shell {
            triangles: start..self.triangles.len(),
            expected_euler,
        });
    }

    /// Concatenates another mesh, keeping its shells separate.
    pub fn append(&mut self, other: TriMesh) {
        let base = self.vertices.len() as u32;
        let offset = self.triangles.len();
        self.vertices.extend(other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.shells.extend(other.shells.into_iter().map(|s| Shell {
            triangles: s.triangles.start + offset..s.triangles.end + offset,
            expected_euler: s.expected_euler,
        }));
        self.min_feature = min_option(self.min_feature, other.min_feature);
        self.feature_ratio = match (self.feature_ratio, other.feature_ratio) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }

    pub fn bbox(&self) -> Option<(PointR3, PointR3)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))),
        )
    }

    pub fn extents(&self) -> [f64; 3] {
        match self.bbox() {
            Some((lo, hi)) => {
                let d = hi - lo;
                [d.x, d.y, d.z]
            }
            None => [0.0; 3],
        }
    }

    pub fn triangle_normal(&self, t: &[u32; 3]) -> Vector3<f64> {
        let [a, b, c] = t.map(|i| self.vertices[i as usize]);
        (b - a).cross(&(c - a))
    }

    /// Signed volume enclosed by one shell (positive for outward orientation).
    pub fn shell_volume(&self, shell: &Shell) -> f64 {
        self.triangles[shell.triangles.clone()]
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Reverses the winding of every triangle in a shell.
    pub fn flip_shell(&mut self, index: usize) {
        let range = self.shells[index].triangles.clone();
        for t in &mut self.triangles[range] {
            t.swap(1, 2);
        }
    }

    /// Flips shells with negative enclosed volume so every shell faces outward.
    pub fn orient_outward(&mut self) {
        for i in 0..self.shells.len() {
            if self.shell_volume(&self.shells[i]) < 0.0 {
                self.flip_shell(i);
            }
        }
    }
}

pub(crate) fn min_option(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub watertight: Vec<bool>,
    #[serde(rename = "euler")]
    pub euler_characteristic: Vec<i64>,
    pub volume_mm3: f64,
    pub bbox_mm: [f64; 3],
    pub min_feature_mm: Option<f64>,
    pub feature_ratio: Option<f64>,
}

impl Diagnostics {
    pub fn all_watertight(&self) -> bool {
        self.watertight.iter().all(|&w| w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics serialize")
    }
}

/// Merges vertices closer than `tol` within each shell and drops degenerate triangles.
pub fn weld(m: &TriMesh, tol: f64) -> TriMesh {
    let mut out = TriMesh {
        min_feature: m.min_feature,
        feature_ratio: m.feature_ratio,
        ..TriMesh::default()
    };
    for shell in &m.shells {
        let mut welder = Welder::new(tol);
        let mut local_tris = Vec::with_capacity(shell.triangles.len());
        for t in &m.triangles[shell.triangles.clone()] {
            let idx = t.map(|i| welder.insert(m.vertices[i as usize]));
            if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
                continue;
            }
            let [a, b, c] = idx.map(|i| welder.points[i as usize]);
            if 0.5 * (b - a).cross(&(c - a)).norm() <= DEGENERATE_AREA {
                continue;
            }
            local_tris.push(idx);
        }
        // Compact: keep only vertices still referenced, in first-use order.
        let mut remap = vec![u32::MAX; welder.points.len()];
        let mut verts = Vec::new();
        for t in &mut local_tris {
            for i in t.iter_mut() {
                if remap[*i as usize] == u32::MAX {
                    remap[*i as usize] = verts.len() as u32;
                    verts.push(welder.points[*i as usize]);
                }
                *i = remap[*i as usize];
            }
        }
        out.push_shell(&verts, &local_tris, shell.expected_euler);
    }
    out
}

struct Welder {
    tol: f64,
    points: Vec<PointR3>,
    exact: HashMap<[u64; 3], u32>,
    grid: HashMap<[i64; 3], Vec<u32>>,
}

impl Welder {
    fn new(tol: f64) -> Self {
        Welder {
            tol,
            points: Vec::new(),
            exact: HashMap::new(),
            grid: HashMap::new(),
        }
    }

    fn cell(&self, p: &PointR3) -> [i64; 3] {
        [p.x, p.y, p.z].map(|c| (c / self.tol).floor() as i64)
    }

    fn insert(&mut self, p: PointR3) -> u32 {
        if self.tol <= 0.0 {
            let key = [p.x, p.y, p.z].map(|c| if c == 0.0 { 0 } else { c.to_bits() });
            let next = self.points.len() as u32;
            let id = *self.exact.entry(key).or_insert(next);
            if id == next {
                self.points.push(p);
            }
            return id;
        }
        let c = self.cell(&p);
        let mut best: Option<(f64, u32)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &id in ids {
                            let d = (self.points[id as usize] - p).norm();
                            if d <= self.tol && best.is_none_or(|(bd, bid)| d < bd || (d == bd && id < bid)) {
                                best = Some((d, id));
                            }
                        }
                    }
                }
            }
        }
        if let Some((_, id)) = best {
            return id;
        }
        let id = self.points.len() as u32;
        self.points.push(p);
        self.grid.entry(c).or_default().push(id);
        id
    }
}

/// Edge-pairing and Euler characteristic of one shell.
fn shell_topology(m: &TriMesh, shell: &Shell) -> (bool, i64) {
    let tris = &m.triangles[shell.triangles.clone()];
    let mut edges: HashMap<(u32, u32), (u32, u32)> = HashMap::with_capacity(tris.len() * 2);
    let mut verts: Vec<u32> = Vec::with_capacity(tris.len() * 3);
    for t in tris {
        verts.extend_from_slice(t);
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let e = edges.entry((a.min(b), a.max(b))).or_insert((0, 0));
            if a < b {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    verts.sort_unstable();
    verts.dedup();
    let watertight = !tris.is_empty() && edges.values().all(|&(f, b)| f == 1 && b == 1);
    let euler = verts.len() as i64 - edges.len() as i64 + tris.len() as i64;
    (watertight, euler)
}

pub fn validate(m: &TriMesh) -> Diagnostics {
    let per_shell: Vec<(bool, i64, f64)> = m
        .shells
        .par_iter()
        .map(|s| {
            let (w, e) = shell_topology(m, s);
            (w, e, m.shell_volume(s))
        })
        .collect();
    Diagnostics {
        watertight: per_shell.iter().map(|s| s.0).collect(),
        euler_characteristic: per_shell.iter().map(|s| s.1).collect(),
        volume_mm3: per_shell.iter().map(|s| s.2).sum(),
        bbox_mm: m.extents(),
        min_feature_mm: m.min_feature,
        feature_ratio: m.feature_ratio,
    }
}

/// Uniformly scales so the largest bounding-box extent equals the largest target extent.
pub fn scale_to(m: &TriMesh, target_bbox_mm: [f64; 3]) -> TriMesh {
    let current = m.extents().into_iter().fold(0.0, f64::max);
    let target = target_bbox_mm.into_iter().fold(0.0, f64::max);
    let s = if current > 0.0 { target / current } else { 1.0 };
    scale_by(m, s)
}

pub fn scale_by(m: &TriMesh, s: f64) -> TriMesh {
    TriMesh {
        vertices: m.vertices.iter().map(|v| v * s).collect(),
        triangles: m.triangles.clone(),
        shells: m.shells.clone(),
        min_feature: m.min_feature.map(|f| f * s),
        feature_ratio: m.feature_ratio,
    }
}

fn unit_normal(m: &TriMesh, t: &[u32; 3]) -> Vector3<f64> {
    let n = m.triangle_normal(t);
    let len = n.norm();
    if len > 0.0 {
        n / len
    } else {
        Vector3::zeros()
    }
}

/// Binary STL bytes: 80-byte header, u32 count, then 50 bytes per triangle.
pub fn stl_bytes(m: &TriMesh) -> Vec<u8> {
    let mut buf = Vec::with_capacity(84 + 50 * m.triangles.len());
    let mut header = [0u8; 80];
    let tag = b"s3forge binary STL";
    header[..tag.len()].copy_from_slice(tag);
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(m.triangles.len() as u32).to_le_bytes());
    for t in &m.triangles {
        let n = unit_normal(m, t);
        let mut put = |v: &Vector3<f64>| {
            for c in [v.x, v.y, v.z] {
                buf.extend_from_slice(&(c as f32).to_le_bytes());
            }
        };
        put(&n);
        for &i in t {
            put(&m.vertices[i as usize]);
        }
        buf.extend_from_slice(&0u16.to_le_bytes());
    }
    buf
}

pub fn export_stl(m: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, stl_bytes(m)).map_err(|e| Error::io(path, e))
}

/// One STL facet: normal followed by three vertices, as stored.
pub type StlFacet = [[f32; 3]; 4];

pub fn parse_stl(bytes: &[u8]) -> Result<Vec<StlFacet>> {
    let bad = |msg: &str| Error::Schema(format!("stl: {msg}"));
    if bytes.len() < 84 {
        return Err(bad("shorter than header"));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() != 84 + 50 * count {
        return Err(bad("length does not match triangle count"));
    }
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    Ok((0..count)
        .map(|k| {
            let base = 84 + 50 * k;
            std::array::from_fn(|r| std::array::from_fn(|c| f(base + 12 * r + 4 * c)))
        })
        .collect())
}

pub fn read_stl(path: impl AsRef<Path>) -> Result<Vec<StlFacet>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_stl(&bytes)
}

fn obj_number(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn obj_string(m: &TriMesh) -> String {
    let mut s = String::with_capacity(40 * (m.vertices.len() + m.triangles.len()));
    for v in &m.vertices {
        s.push_str(&format!(
            "v {} {} {}\n",
            obj_number(v.x),
            obj_number(v.y),
            obj_number(v.z)
        ));
    }
    for t in &m.triangles {
        s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    s
}

pub fn export_obj(m: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(obj_string(m).as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses the `v`/`f` records written by [`export_obj`] into a single-shell mesh.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let bad = |line: &str| Error::Schema(format!("obj: bad record {line:?}"));
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let c: Vec<f64> = parts.map(|p| p.parse().map_err(|_| bad(line))).collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad(line));
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|p| p.split('/').next().unwrap_or("").parse::<u32>().map_err(|_| bad(line)))
                    .collect::<Result<_>>()?;
                if idx.len() != 3 || idx.iter().any(|&i| i == 0 || i as usize > vertices.len()) {
                    return Err(bad(line));
                }
                triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    let mut m = TriMesh::new();
    m.push_shell(&vertices, &triangles, None);
    Ok(m)
}
