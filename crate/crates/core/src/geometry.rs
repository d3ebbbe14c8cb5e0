//! Tetrahedral meshes: validation, boundary extraction, the plain-text
//! `tetmesh v1` / `trimesh v1` formats, procedural generators and lumped
//! vertex masses.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::{Isometry3, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tetrahedra with a volume below this are rejected.
pub const MIN_TET_VOLUME: f64 = 1e-12;

/// Outward faces of a positively oriented tet `(0, 1, 2, 3)`.
const TET_FACES: [[usize; 3]; 4] = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{kind} {element}: vertex index {index} out of range ({count} vertices)")]
    IndexOutOfRange {
        kind: &'static str,
        element: usize,
        index: usize,
        count: usize,
    },
    #[error("tet {tet}: non-positive signed volume {volume:e}")]
    InvertedTet { tet: usize, volume: f64 },
    #[error("tet {tet}: degenerate volume {volume:e}")]
    DegenerateTet { tet: usize, volume: f64 },
    #[error("tet {tet}: repeated vertex index")]
    RepeatedVertex { tet: usize },
    #[error("face {face:?} of tet {tet} is shared by {count} tets")]
    NonManifold { tet: usize, face: [usize; 3], count: usize },
    #[error("face {face:?} of tet {tet} has the same orientation in both adjacent tets")]
    InconsistentOrientation { tet: usize, face: [usize; 3] },
    #[error("mesh has no tetrahedra")]
    Empty,
    #[error("mesh is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

/// Signed volume of the tet spanned by four points.
pub fn signed_volume(p0: &Vec3, p1: &Vec3, p2: &Vec3, p3: &Vec3) -> f64 {
    (p1 - p0).cross(&(p2 - p0)).dot(&(p3 - p0)) / 6.0
}

/// Volumetric mesh with a derived, outward-oriented boundary surface.
#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    vertices: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    surface_tris: Vec<[usize; 3]>,
    vertex_mass: Vec<f64>,
}

impl TetMesh {
    /// Validates the tets and extracts the boundary. Vertex masses start at zero.
    pub fn new(vertices: Vec<Vec3>, tets: Vec<[usize; 4]>) -> Result<Self, MeshError> {
        if tets.is_empty() {
            return Err(MeshError::Empty);
        }
        let n = vertices.len();
        for (t, tet) in tets.iter().enumerate() {
            for &i in tet {
                if i >= n {
                    return Err(MeshError::IndexOutOfRange {
                        kind: "tet",
                        element: t,
                        index: i,
                        count: n,
                    });
                }
            }
            for a in 0..4 {
                for b in a + 1..4 {
                    if tet[a] == tet[b] {
                        return Err(MeshError::RepeatedVertex { tet: t });
                    }
                }
            }
            let [a, b, c, d] = *tet;
            let volume = signed_volume(&vertices[a], &vertices[b], &vertices[c], &vertices[d]);
            if volume < 0.0 {
                return Err(MeshError::InvertedTet { tet: t, volume });
            }
            if volume < MIN_TET_VOLUME {
                return Err(MeshError::DegenerateTet { tet: t, volume });
            }
        }
        let surface_tris = extract_boundary(&tets)?;
        let vertex_mass = vec![0.0; n];
        Ok(Self {
            vertices,
            tets,
            surface_tris,
            vertex_mass,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn surface_tris(&self) -> &[[usize; 3]] {
        &self.surface_tris
    }

    pub fn vertex_mass(&self) -> &[f64] {
        &self.vertex_mass
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.vertex_mass.iter().sum()
    }

    /// Signed volume of one tet under its stored vertex order.
    pub fn tet_volume(&self, tet: usize) -> f64 {
        let [a, b, c, d] = self.tets[tet];
        signed_volume(&self.vertices[a], &self.vertices[b], &self.vertices[c], &self.vertices[d])
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    /// Sorted, deduplicated indices of vertices on the boundary surface.
    pub fn surface_vertices(&self) -> Vec<usize> {
        let mut flag = vec![false; self.vertices.len()];
        for tri in &self.surface_tris {
            for &i in tri {
                flag[i] = true;
            }
        }
        flag.iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    pub fn centroid(&self, tet: usize) -> Vec3 {
        let [a, b, c, d] = self.tets[tet];
        (self.vertices[a] + self.vertices[b] + self.vertices[c] + self.vertices[d]) / 4.0
    }

    /// Applies a rigid transform to every vertex. Volumes and topology are unchanged.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> TetMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = iso.transform_point(&(*v).into()).coords;
        }
        out
    }

    /// Number of face-connected components.
    pub fn component_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.tets.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut owner: HashMap<[usize; 3], usize> = HashMap::new();
        for (t, tet) in self.tets.iter().enumerate() {
            for f in TET_FACES {
                let key = sorted3([tet[f[0]], tet[f[1]], tet[f[2]]]);
                if let Some(&o) = owner.get(&key) {
                    let (ra, rb) = (find(&mut parent, o), find(&mut parent, t));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                } else {
                    owner.insert(key, t);
                }
            }
        }
        (0..self.tets.len()).filter(|&t| find(&mut parent, t) == t).count()
    }

    /// Renders the mesh in the `tetmesh v1` text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("tetmesh v1\n");
        let _ = writeln!(s, "{} {}", self.vertices.len(), self.tets.len());
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.tets {
            let _ = writeln!(s, "t {} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        s
    }
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

/// Rotates a triangle so its smallest index comes first, keeping orientation.
fn canonical_cycle(f: [usize; 3]) -> [usize; 3] {
    let m = (0..3).min_by_key(|&i| f[i]).unwrap();
    [f[m], f[(m + 1) % 3], f[(m + 2) % 3]]
}

fn extract_boundary(tets: &[[usize; 4]]) -> Result<Vec<[usize; 3]>, MeshError> {
    let mut faces: HashMap<[usize; 3], Vec<(usize, [usize; 3])>> = HashMap::new();
    for (t, tet) in tets.iter().enumerate() {
        for f in TET_FACES {
            let oriented = [tet[f[0]], tet[f[1]], tet[f[2]]];
            faces.entry(sorted3(oriented)).or_default().push((t, oriented));
        }
    }
    let mut surface = Vec::new();
    for (t, tet) in tets.iter().enumerate() {
        for f in TET_FACES {
            let oriented = [tet[f[0]], tet[f[1]], tet[f[2]]];
            let owners = &faces[&sorted3(oriented)];
            match owners.len() {
                1 => surface.push(oriented),
                2 => {
                    let (a, b) = (canonical_cycle(owners[0].1), canonical_cycle(owners[1].1));
                    if a == b {
                        return Err(MeshError::InconsistentOrientation { tet: t, face: oriented });
                    }
                }
                count => {
                    return Err(MeshError::NonManifold {
                        tet: t,
                        face: oriented,
                        count,
                    })
                }
            }
        }
    }
    Ok(surface)
}

/// Sets every vertex mass to `total_mass / vertex_count`.
pub fn distribute_mass(mut mesh: TetMesh, total_mass: f64) -> TetMesh {
    assert!(total_mass > 0.0, "total mass must be positive");
    let per = total_mass / mesh.vertices.len() as f64;
    mesh.vertex_mass.iter_mut().for_each(|m| *m = per);
    mesh
}

/// Content of one line with any `#` comment removed.
fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(r: R) -> Self {
        Self {
            inner: r.lines(),
            number: 0,
        }
    }

    /// Next non-empty, comment-stripped line.
    fn next_content(&mut self) -> Result<Option<(usize, String)>, MeshError> {
        for line in self.inner.by_ref() {
            self.number += 1;
            let line = line.map_err(|e| MeshError::Parse {
                line: self.number,
                message: e.to_string(),
            })?;
            let s = strip_comment(&line);
            if !s.is_empty() {
                return Ok(Some((self.number, s.to_string())));
            }
        }
        Ok(None)
    }

    fn expect(&mut self, what: &str) -> Result<(usize, String), MeshError> {
        self.next_content()?.ok_or_else(|| MeshError::Parse {
            line: self.number + 1,
            message: format!("unexpected end of input, expected {what}"),
        })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_record<T: std::str::FromStr, const N: usize>(
    line: usize,
    text: &str,
    tag: &str,
) -> Result<[T; N], MeshError> {
    let mut it = text.split_whitespace();
    if it.next() != Some(tag) {
        return Err(parse_err(line, format!("expected `{tag}` record, found `{text}`")));
    }
    let fields: Vec<&str> = it.collect();
    if fields.len() != N {
        return Err(parse_err(
            line,
            format!("`{tag}` record needs {N} fields, found {}", fields.len()),
        ));
    }
    let mut out = Vec::with_capacity(N);
    for f in fields {
        out.push(
            f.parse::<T>()
                .map_err(|_| parse_err(line, format!("invalid number `{f}`")))?,
        );
    }
    out.try_into().map_err(|_| parse_err(line, "field count"))
}

fn parse_header<R: BufRead>(lines: &mut Lines<R>, magic: &str) -> Result<(usize, usize), MeshError> {
    let (ln, header) = lines.expect("header")?;
    if header.split_whitespace().collect::<Vec<_>>() != magic.split_whitespace().collect::<Vec<_>>() {
        return Err(parse_err(ln, format!("expected header `{magic}`, found `{header}`")));
    }
    let (ln, counts) = lines.expect("counts")?;
    let c: Vec<&str> = counts.split_whitespace().collect();
    if c.len() != 2 {
        return Err(parse_err(ln, "counts line needs two integers"));
    }
    let a = c[0].parse().map_err(|_| parse_err(ln, "invalid vertex count"))?;
    let b = c[1].parse().map_err(|_| parse_err(ln, "invalid element count"))?;
    Ok((a, b))
}

fn parse_vertices<R: BufRead>(lines: &mut Lines<R>, nv: usize) -> Result<Vec<Vec3>, MeshError> {
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, s) = lines.expect("vertex record")?;
        let [x, y, z] = parse_record::<f64, 3>(ln, &s, "v")?;
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(parse_err(ln, "non-finite coordinate"));
        }
        vertices.push(Vec3::new(x, y, z));
    }
    Ok(vertices)
}

fn expect_end<R: BufRead>(lines: &mut Lines<R>) -> Result<(), MeshError> {
    match lines.next_content()? {
        Some((ln, s)) => Err(parse_err(ln, format!("unexpected trailing record `{s}`"))),
        None => Ok(()),
    }
}

/// Parses a `tetmesh v1` stream and validates it.
pub fn load_tet_mesh<R: BufRead>(source: R) -> Result<TetMesh, MeshError> {
    let mut lines = Lines::new(source);
    let (nv, nt) = parse_header(&mut lines, "tetmesh v1")?;
    let vertices = parse_vertices(&mut lines, nv)?;
    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, s) = lines.expect("tet record")?;
        tets.push(parse_record::<usize, 4>(ln, &s, "t")?);
    }
    expect_end(&mut lines)?;
    TetMesh::new(vertices, tets)
}

/// Closed triangle surface used for the skull and mandible shells.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn transformed(&self, iso: &Isometry3<f64>) -> TriMesh {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| iso.transform_point(&(*v).into()).coords)
                .collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("trimesh v1\n");
        let _ = writeln!(s, "{} {}", self.vertices.len(), self.faces.len());
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0], f[1], f[2]);
        }
        s
    }

    /// Axis-aligned ellipsoid shell from a latitude/longitude grid.
    pub fn ellipsoid(center: Vec3, semi_axes: Vec3, rings: usize, segments: usize) -> TriMesh {
        let rings = rings.max(2);
        let segments = segments.max(3);
        let mut vertices = vec![center + Vec3::new(0.0, 0.0, semi_axes.z)];
        for r in 1..rings {
            let theta = std::f64::consts::PI * r as f64 / rings as f64;
            for s in 0..segments {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                let dir = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                vertices.push(center + dir.component_mul(&semi_axes));
            }
        }
        vertices.push(center - Vec3::new(0.0, 0.0, semi_axes.z));
        let south = vertices.len() - 1;
        let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
        let mut faces = Vec::new();
        for s in 0..segments {
            faces.push([0, ring(1, s), ring(1, s + 1)]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                let (a, b) = (ring(r, s), ring(r, s + 1));
                let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
        for s in 0..segments {
            faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
        }
        TriMesh { vertices, faces }
    }
}

/// Parses a `trimesh v1` stream.
pub fn load_tri_mesh<R: BufRead>(source: R) -> Result<TriMesh, MeshError> {
    let mut lines = Lines::new(source);
    let (nv, nf) = parse_header(&mut lines, "trimesh v1")?;
    let vertices = parse_vertices(&mut lines, nv)?;
    let mut faces = Vec::with_capacity(nf);
    for f in 0..nf {
        let (ln, s) = lines.expect("face record")?;
        let face = parse_record::<usize, 3>(ln, &s, "f")?;
        if let Some(&index) = face.iter().find(|&&i| i >= nv) {
            return Err(MeshError::IndexOutOfRange {
                kind: "face",
                element: f,
                index,
                count: nv,
            });
        }
        faces.push(face);
    }
    expect_end(&mut lines)?;
    Ok(TriMesh { vertices, faces })
}

/// Corner `b = dx + 2dy + 4dz` of a lattice cell.
fn cell_tets(even: bool) -> [[usize; 4]; 5] {
    if even {
        [[0, 3, 5, 6], [1, 0, 3, 5], [2, 0, 6, 3], [4, 0, 5, 6], [7, 3, 6, 5]]
    } else {
        [[1, 2, 4, 7], [0, 1, 2, 4], [3, 2, 1, 7], [5, 4, 7, 1], [6, 7, 4, 2]]
    }
}

/// Regular lattice with vertex positions from `coord(i, j, k)`, each cell
/// split into five tets with parity alternating by `i + j + k`.
struct Lattice {
    res: [usize; 3],
    vertices: Vec<Vec3>,
}

impl Lattice {
    fn new(res: [usize; 3], coord: impl Fn(usize, usize, usize) -> Vec3) -> Self {
        let mut vertices = Vec::with_capacity((res[0] + 1) * (res[1] + 1) * (res[2] + 1));
        for k in 0..=res[2] {
            for j in 0..=res[1] {
                for i in 0..=res[0] {
                    vertices.push(coord(i, j, k));
                }
            }
        }
        Self { res, vertices }
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.res[0] + 1) * (j + (self.res[1] + 1) * k)
    }

    /// All tets, cell by cell, positively oriented.
    fn tets(&self) -> Vec<[usize; 4]> {
        let mut out = Vec::with_capacity(5 * self.res.iter().product::<usize>());
        for k in 0..self.res[2] {
            for j in 0..self.res[1] {
                for i in 0..self.res[0] {
                    let corner = |b: usize| self.index(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
                    for local in cell_tets((i + j + k) % 2 == 0) {
                        let mut t = local.map(corner);
                        let v = &self.vertices;
                        if signed_volume(&v[t[0]], &v[t[1]], &v[t[2]], &v[t[3]]) < 0.0 {
                            t.swap(2, 3);
                        }
                        out.push(t);
                    }
                }
            }
        }
        out
    }
}

/// Box `[0, dims]` split into `resolution` cells of five tets each.
pub fn make_box_tet_mesh(dims: Vec3, resolution: [usize; 3]) -> Result<TetMesh, MeshError> {
    if dims.iter().any(|&d| !(d > 0.0)) || resolution.contains(&0) {
        return Err(MeshError::InvalidSpec(
            "box dims must be positive and resolution at least 1".into(),
        ));
    }
    let lattice = Lattice::new(resolution, |i, j, k| {
        Vec3::new(
            dims.x * i as f64 / resolution[0] as f64,
            dims.y * j as f64 / resolution[1] as f64,
            dims.z * k as f64 / resolution[2] as f64,
        )
    });
    let tets = lattice.tets();
    TetMesh::new(lattice.vertices, tets)
}

/// Rectangular mouth cavity carved into the front (+y) of the head proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MouthSlit {
    /// Vertical (z) offset of the slit center from the head center.
    pub center_z: f64,
    pub half_width: f64,
    pub half_height: f64,
    /// How far the cavity reaches behind the front surface.
    pub depth: f64,
}

/// Ellipsoidal stand-in for a scanned head. The head faces +y, +z is
/// superior and the sagittal plane is `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadProxySpec {
    pub semi_axes: [f64; 3],
    /// Lattice cells along x, y, z. The x count must be even so the tet
    /// split is mirror symmetric about the sagittal plane.
    pub lattice_resolution: [usize; 3],
    pub mouth_slit: MouthSlit,
}

impl Default for HeadProxySpec {
    fn default() -> Self {
        Self {
            semi_axes: [0.08, 0.10, 0.11],
            lattice_resolution: [6, 8, 8],
            mouth_slit: MouthSlit::default(),
        }
    }
}

impl Default for MouthSlit {
    fn default() -> Self {
        Self {
            center_z: -0.04125,
            half_width: 0.026,
            half_height: 0.01375,
            depth: 0.075,
        }
    }
}

/// Mouth opening recorded alongside a head mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MouthAnnotation {
    pub center: [f64; 3],
    pub outward: [f64; 3],
    pub up: [f64; 3],
}

impl MouthAnnotation {
    pub fn transformed(&self, iso: &Isometry3<f64>) -> MouthAnnotation {
        let c = iso.transform_point(&Vec3::from(self.center).into()).coords;
        let n = iso.rotation * Vec3::from(self.outward);
        let u = iso.rotation * Vec3::from(self.up);
        MouthAnnotation {
            center: c.into(),
            outward: n.into(),
            up: u.into(),
        }
    }
}

impl HeadProxySpec {
    pub fn validate(&self) -> Result<(), MeshError> {
        let [a, b, c] = self.semi_axes;
        let s = &self.mouth_slit;
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(MeshError::InvalidSpec("semi axes must be positive".into()));
        }
        if self.lattice_resolution.contains(&0) {
            return Err(MeshError::InvalidSpec("lattice resolution must be positive".into()));
        }
        if self.lattice_resolution[0] % 2 != 0 {
            return Err(MeshError::InvalidSpec(
                "lateral lattice resolution must be even for sagittal symmetry".into(),
            ));
        }
        if s.half_width < 0.0 || s.half_height < 0.0 || s.depth < 0.0 {
            return Err(MeshError::InvalidSpec("mouth slit extents must be non-negative".into()));
        }
        if s.half_width > a || s.center_z.abs() + s.half_height > c || s.depth > 2.0 * b {
            return Err(MeshError::InvalidSpec(
                "mouth slit does not fit inside the head bounding box".into(),
            ));
        }
        Ok(())
    }

    /// Front-surface y coordinate of the ellipsoid on the slit center line.
    fn front_y(&self) -> f64 {
        let [_, b, c] = self.semi_axes;
        b * (1.0 - (self.mouth_slit.center_z / c).powi(2)).sqrt()
    }

    pub fn mouth_annotation(&self) -> MouthAnnotation {
        MouthAnnotation {
            center: [0.0, self.front_y(), self.mouth_slit.center_z],
            outward: [0.0, 1.0, 0.0],
            up: [0.0, 0.0, 1.0],
        }
    }

    /// Whether a point falls inside the carved cavity box.
    pub fn in_cavity(&self, p: &Vec3) -> bool {
        let s = &self.mouth_slit;
        s.depth > 0.0
            && p.x.abs() <= s.half_width
            && (p.z - s.center_z).abs() <= s.half_height
            && p.y >= self.front_y() - s.depth
    }

    pub fn in_ellipsoid(&self, p: &Vec3) -> bool {
        let [a, b, c] = self.semi_axes;
        (p.x / a).powi(2) + (p.y / b).powi(2) + (p.z / c).powi(2) <= 1.0
    }

    /// Full lattice covering the bounding box; shared by the generator and tests.
    fn lattice(&self) -> Lattice {
        let [a, b, c] = self.semi_axes;
        let r = self.lattice_resolution;
        // (2i - n) / n is exactly antisymmetric under i -> n - i.
        let axis = |half: f64, i: usize, n: usize| half * ((2 * i) as f64 - n as f64) / n as f64;
        Lattice::new(r, |i, j, k| Vec3::new(axis(a, i, r[0]), axis(b, j, r[1]), axis(c, k, r[2])))
    }

    /// Every lattice tet with its centroid, before any selection.
    pub fn candidate_tets(&self) -> (Vec<Vec3>, Vec<[usize; 4]>) {
        let lattice = self.lattice();
        let tets = lattice.tets();
        (lattice.vertices, tets)
    }
}

fn tet_centroid(v: &[Vec3], t: &[usize; 4]) -> Vec3 {
    // Pairwise sum keeps the centroid of mirrored tets exactly mirrored.
    ((v[t[0]] + v[t[1]]) + (v[t[2]] + v[t[3]])) / 4.0
}

/// Keeps only referenced vertices, preserving their relative order.
fn compact(vertices: &[Vec3], tets: &[[usize; 4]]) -> (Vec<Vec3>, Vec<[usize; 4]>) {
    let mut remap = vec![usize::MAX; vertices.len()];
    for t in tets {
        for &i in t {
            remap[i] = 0;
        }
    }
    let mut kept = Vec::new();
    for (i, r) in remap.iter_mut().enumerate() {
        if *r == 0 {
            *r = kept.len();
            kept.push(vertices[i]);
        }
    }
    let tets = tets.iter().map(|t| t.map(|i| remap[i])).collect();
    (kept, tets)
}

/// Ellipsoidal tet lattice with a rectangular mouth cavity.
pub fn make_head_proxy(spec: &HeadProxySpec) -> Result<TetMesh, MeshError> {
    spec.validate()?;
    let (vertices, all) = spec.candidate_tets();
    let kept: Vec<[usize; 4]> = all
        .into_iter()
        .filter(|t| {
            let c = tet_centroid(&vertices, t);
            spec.in_ellipsoid(&c) && !spec.in_cavity(&c)
        })
        .collect();
    if kept.is_empty() {
        return Err(MeshError::Empty);
    }
    let (vertices, tets) = compact(&vertices, &kept);
    let mesh = TetMesh::new(vertices, tets)?;
    match mesh.component_count() {
        1 => Ok(mesh),
        components => Err(MeshError::Disconnected { components }),
    }
}

/// Volume of the tets kept by `make_head_proxy` with the cavity ignored.
pub fn head_proxy_uncarved_volume(spec: &HeadProxySpec) -> f64 {
    let (vertices, all) = spec.candidate_tets();
    all.iter()
        .filter(|t| spec.in_ellipsoid(&tet_centroid(&vertices, t)))
        .map(|t| signed_volume(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]], &vertices[t[3]]))
        .sum()
}

/// Barycentric coordinates of `p` in the tet `(a, b, c, d)`, if non-degenerate.
pub fn barycentric(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> Option<[f64; 4]> {
    let m = Matrix3::from_columns(&[b - a, c - a, d - a]);
    let inv = m.try_inverse()?;
    let l = inv * (p - a);
    Some([1.0 - l.x - l.y - l.z, l.x, l.y, l.z])
}
