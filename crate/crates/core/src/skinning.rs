//! Binding the soft head to the skull with tendons.
//!
//! Rigging runs once at rest: skull-shell samples lying inside the soft
//! volume become attachment contacts, each contact is assigned a distinct
//! nearest soft vertex, and a slack-banded spring-damper joins the two.
//! Skull-to-skin collision is off afterwards, so tendons carry every
//! interaction between the bodies.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{barycentric, TetMesh, TriMesh, Vec3};
use crate::linalg::Mat3;
use crate::numfmt::sig9;
use crate::skeleton::{Skeleton, SkullPart, Wrench};

/// Barycentric slack accepted by the point-in-tet test.
const INSIDE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigError {
    #[error("no skull surface sample lies inside the soft head")]
    NoContacts,
    #[error("{contacts} contacts cannot map injectively onto {vertices} vertices")]
    TooManyContacts { contacts: usize, vertices: usize },
    #[error("sample spacing must be positive")]
    BadSpacing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttachmentContact {
    pub position: Vec3,
    pub part: SkullPart,
    /// Position in the part's body frame.
    pub local_coords: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tendon {
    pub part: SkullPart,
    pub site: Vec3,
    pub soft_vertex: usize,
    pub rest_length: f64,
    pub slack_range: [f64; 2],
    pub stiffness: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TendonDefaults {
    pub stiffness: f64,
    pub damping: f64,
    pub slack_fraction: f64,
    /// Skull-surface sampling distance used to find attachment contacts (m).
    pub sample_spacing: f64,
}

impl Default for TendonDefaults {
    fn default() -> Self {
        Self {
            stiffness: 2000.0,
            damping: 5.0,
            slack_fraction: 0.05,
            sample_spacing: 0.02,
        }
    }
}

/// Tendons plus the skull/skin coupling switches they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub contacts: Vec<AttachmentContact>,
    pub tendons: Vec<Tendon>,
    /// Always false once tendons exist.
    pub skull_skin_collision: bool,
}

impl Rig {
    /// `tendon <i> part=<..> site=<x,y,z> vertex=<j> rest=<L> range=<lo,hi>` lines.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tendons.iter().enumerate() {
            let _ = writeln!(
                s,
                "tendon {i} part={} site={},{},{} vertex={} rest={} range={},{}",
                t.part.label(),
                sig9(t.site.x),
                sig9(t.site.y),
                sig9(t.site.z),
                t.soft_vertex,
                sig9(t.rest_length),
                sig9(t.slack_range[0]),
                sig9(t.slack_range[1]),
            );
        }
        s
    }
}

/// Points covering a surface at roughly `spacing`: vertices, then interior
/// edge points (edges in first-seen order), then face interior points.
pub fn sample_surface(surface: &TriMesh, spacing: f64) -> Vec<Vec3> {
    let v = &surface.vertices;
    let mut out = v.clone();
    let mut seen: HashMap<(usize, usize), ()> = HashMap::new();
    for f in &surface.faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            let key = (a.min(b), a.max(b));
            if seen.insert(key, ()).is_some() {
                continue;
            }
            let (p, q) = (v[key.0], v[key.1]);
            let n = ((q - p).norm() / spacing).ceil().max(1.0) as usize;
            for i in 1..n {
                out.push(p + (q - p) * (i as f64 / n as f64));
            }
        }
    }
    for f in &surface.faces {
        let (a, b, c) = (v[f[0]], v[f[1]], v[f[2]]);
        let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
        let n = (longest / spacing).ceil().max(1.0) as usize;
        for i in 1..n {
            for j in 1..n - i {
                let k = n - i - j;
                out.push((a * i as f64 + b * j as f64 + c * k as f64) / n as f64);
            }
        }
    }
    out
}

/// Lowest-index tet containing `p`, if any.
pub fn containing_tet(mesh: &TetMesh, p: &Vec3) -> Option<usize> {
    let v = mesh.vertices();
    mesh.tets().iter().position(|t| {
        barycentric(p, &v[t[0]], &v[t[1]], &v[t[2]], &v[t[3]])
            .is_some_and(|l| l.iter().all(|&x| x >= -INSIDE_EPS))
    })
}

/// Keeps the samples that fall inside the soft volume, in input order.
pub fn classify_samples(samples: &[(SkullPart, Vec3)], skeleton: &Skeleton, mesh: &TetMesh) -> Vec<AttachmentContact> {
    samples
        .iter()
        .filter(|(_, p)| containing_tet(mesh, p).is_some())
        .map(|&(part, position)| AttachmentContact {
            position,
            part,
            local_coords: skeleton.body(part).to_local(&position),
        })
        .collect()
}

/// Samples the posed skull and mandible shells against the soft head.
pub fn detect_attachment_contacts(
    skeleton: &Skeleton,
    mesh: &TetMesh,
    spacing: f64,
) -> Result<Vec<AttachmentContact>, RigError> {
    if !(spacing > 0.0) {
        return Err(RigError::BadSpacing);
    }
    let mut samples = Vec::new();
    for part in [SkullPart::Upper, SkullPart::Mandible] {
        let body = skeleton.body(part);
        for p in sample_surface(&body.surface, spacing) {
            samples.push((part, body.to_world(&p)));
        }
    }
    let contacts = classify_samples(&samples, skeleton, mesh);
    if contacts.is_empty() {
        return Err(RigError::NoContacts);
    }
    Ok(contacts)
}

/// Greedy injective assignment: each contact, in order, takes the nearest
/// vertex not already taken (ties go to the lower vertex index).
pub fn build_injective_mapping(contacts: &[Vec3], vertices: &[Vec3]) -> Result<Vec<usize>, RigError> {
    if contacts.len() > vertices.len() {
        return Err(RigError::TooManyContacts {
            contacts: contacts.len(),
            vertices: vertices.len(),
        });
    }
    let mut used = vec![false; vertices.len()];
    let mut mapping = Vec::with_capacity(contacts.len());
    for c in contacts {
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in vertices.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (c - v).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        let (j, _) = best.expect("an unused vertex remains while |C| <= |V|");
        used[j] = true;
        mapping.push(j);
    }
    Ok(mapping)
}

/// One tendon per contact, at rest length with a symmetric slack band.
pub fn create_tendons(
    mapping: &[usize],
    contacts: &[AttachmentContact],
    mesh: &TetMesh,
    defaults: &TendonDefaults,
) -> Rig {
    let tendons = mapping
        .iter()
        .zip(contacts)
        .map(|(&j, c)| {
            let rest_length = (c.position - mesh.vertices()[j]).norm();
            Tendon {
                part: c.part,
                site: c.local_coords,
                soft_vertex: j,
                rest_length,
                slack_range: [
                    rest_length * (1.0 - defaults.slack_fraction),
                    rest_length * (1.0 + defaults.slack_fraction),
                ],
                stiffness: defaults.stiffness,
                damping: defaults.damping,
            }
        })
        .collect();
    Rig {
        contacts: contacts.to_vec(),
        tendons,
        skull_skin_collision: false,
    }
}

/// Detect, map and create in one go.
pub fn build_rig(skeleton: &Skeleton, mesh: &TetMesh, defaults: &TendonDefaults) -> Result<Rig, RigError> {
    let contacts = detect_attachment_contacts(skeleton, mesh, defaults.sample_spacing)?;
    let points: Vec<Vec3> = contacts.iter().map(|c| c.position).collect();
    let mapping = build_injective_mapping(&points, mesh.vertices())?;
    Ok(create_tendons(&mapping, &contacts, mesh, defaults))
}

/// Tendon loads on the soft body and on the two skull parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TendonForces {
    pub soft: Vec<Vec3>,
    /// Per-vertex `-df/dx` for the implicit solve.
    pub stiffness: Vec<Mat3>,
    /// Per-vertex `-df/dv`.
    pub damping: Vec<Mat3>,
    pub upper: Wrench,
    pub mandible: Wrench,
}

impl TendonForces {
    pub fn wrench(&self, part: SkullPart) -> &Wrench {
        match part {
            SkullPart::Upper => &self.upper,
            SkullPart::Mandible => &self.mandible,
        }
    }
}

/// Spring-damper with a dead band: zero inside `[L_min, L_max]`, otherwise
/// `k (L - bound) + c dL/dt` along the tendon, with the damping term never
/// flipping the sign of the spring term.
pub fn tendon_forces(tendons: &[Tendon], skeleton: &Skeleton, positions: &[Vec3], velocities: &[Vec3]) -> TendonForces {
    let n = positions.len();
    let mut out = TendonForces {
        soft: vec![Vec3::zeros(); n],
        stiffness: vec![Mat3::zeros(); n],
        damping: vec![Mat3::zeros(); n],
        upper: Wrench::default(),
        mandible: Wrench::default(),
    };
    for t in tendons {
        let body = skeleton.body(t.part);
        let site = body.to_world(&t.site);
        let j = t.soft_vertex;
        let d = site - positions[j];
        let len = d.norm();
        if len == 0.0 {
            continue;
        }
        let [lo, hi] = t.slack_range;
        let bound = if len > hi {
            hi
        } else if len < lo {
            lo
        } else {
            continue;
        };
        let dir = d / len;
        let rate = (body.point_velocity(&site) - velocities[j]).dot(&dir);
        let spring = t.stiffness * (len - bound);
        let mut tension = spring + t.damping * rate;
        if tension * spring < 0.0 {
            tension = 0.0;
        }
        let f = dir * tension;
        out.soft[j] += f;
        let origin = body.pose.translation.vector;
        match t.part {
            SkullPart::Upper => out.upper.add_force_at(-f, &site, &origin),
            SkullPart::Mandible => out.mandible.add_force_at(-f, &site, &origin),
        }
        let axial = dir * dir.transpose();
        out.stiffness[j] += axial * t.stiffness;
        if tension > 0.0 {
            out.stiffness[j] += (Mat3::identity() - axial) * (tension / len);
        }
        if tension != 0.0 {
            out.damping[j] += axial * t.damping;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_box_tet_mesh;
    use crate::skeleton::{JawParams, MandibleJoint};
    use nalgebra::Isometry3;

    fn skeleton() -> Skeleton {
        let (u, m) = crate::skeleton::default_shells();
        Skeleton::new(Isometry3::identity(), u, m, MandibleJoint::from_params(&JawParams::default()).unwrap())
    }

    fn tendon(rest: f64, slack: f64) -> Tendon {
        Tendon {
            part: SkullPart::Upper,
            site: Vec3::zeros(),
            soft_vertex: 0,
            rest_length: rest,
            slack_range: [rest * (1.0 - slack), rest * (1.0 + slack)],
            stiffness: 1000.0,
            damping: 10.0,
        }
    }

    #[test]
    fn nearest_vertex() {
        let m = build_injective_mapping(&[Vec3::zeros()], &[Vec3::x(), Vec3::x() * 0.5]).unwrap();
        assert_eq!(m, vec![1]);
    }

    #[test]
    fn used_vertex_is_excluded() {
        let c = [Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0)];
        let v = [Vec3::new(0.0, 0.0, 0.01), Vec3::new(5.0, 5.0, 5.0)];
        assert_eq!(build_injective_mapping(&c, &v).unwrap(), vec![0, 1]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let v = [Vec3::x(), -Vec3::x(), Vec3::y()];
        assert_eq!(build_injective_mapping(&[Vec3::zeros()], &v).unwrap(), vec![0]);
    }

    #[test]
    fn too_many_contacts() {
        let err = build_injective_mapping(&[Vec3::zeros(); 3], &[Vec3::zeros(); 2]).unwrap_err();
        assert_eq!(err, RigError::TooManyContacts { contacts: 3, vertices: 2 });
    }

    #[test]
    fn centroid_sample_is_a_contact() {
        let mesh = make_box_tet_mesh(Vec3::new(1.0, 1.0, 1.0), [1, 1, 1]).unwrap();
        let s = skeleton();
        let c = mesh.centroid(2);
        let contacts = classify_samples(&[(SkullPart::Upper, c)], &s, &mesh);
        assert_eq!(contacts.len(), 1);
        assert_eq!(contacts[0].local_coords, c);
        let outside = classify_samples(&[(SkullPart::Upper, Vec3::new(2.0, 0.0, 0.0))], &s, &mesh);
        assert!(outside.is_empty());
    }

    #[test]
    fn skull_outside_head_is_an_error() {
        let mesh = make_box_tet_mesh(Vec3::new(0.01, 0.01, 0.01), [1, 1, 1]).unwrap();
        let far = mesh.transformed(&Isometry3::translation(1.0, 1.0, 1.0));
        assert_eq!(detect_attachment_contacts(&skeleton(), &far, 0.01), Err(RigError::NoContacts));
        assert_eq!(detect_attachment_contacts(&skeleton(), &far, 0.0), Err(RigError::BadSpacing));
    }

    #[test]
    fn sampling_covers_each_point_once() {
        let tri = TriMesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            faces: vec![[0, 1, 2]],
        };
        let pts = sample_surface(&tri, 0.25);
        // 3 corners; edges of length 1, 1 and sqrt(2) give 3 + 3 + 5 interior
        // points; the face uses 6 subdivisions, leaving 10 interior points.
        assert_eq!(pts.len(), 3 + 3 + 3 + 5 + 10);
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                assert!((a - b).norm() > 1e-9);
            }
        }
    }

    #[test]
    fn coincident_contact_gives_ball_tendon() {
        let mesh = make_box_tet_mesh(Vec3::new(1.0, 1.0, 1.0), [1, 1, 1]).unwrap();
        let c = AttachmentContact {
            position: mesh.vertices()[3],
            part: SkullPart::Upper,
            local_coords: mesh.vertices()[3],
        };
        let rig = create_tendons(&[3], &[c], &mesh, &TendonDefaults::default());
        assert_eq!(rig.tendons[0].rest_length, 0.0);
        assert_eq!(rig.tendons[0].slack_range, [0.0, 0.0]);
        assert!(!rig.skull_skin_collision);
        // Any separation engages the spring.
        let s = skeleton();
        let mut x = mesh.vertices().to_vec();
        x[3].x += 1e-3;
        let f = tendon_forces(&rig.tendons, &s, &x, &vec![Vec3::zeros(); x.len()]);
        assert!((f.soft[3] - Vec3::new(-2.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn slack_range_arithmetic() {
        let mesh = make_box_tet_mesh(Vec3::new(1.0, 1.0, 1.0), [1, 1, 1]).unwrap();
        let p = mesh.vertices()[0] + Vec3::new(0.01, 0.0, 0.0);
        let c = AttachmentContact { position: p, part: SkullPart::Upper, local_coords: p };
        let d = TendonDefaults { slack_fraction: 0.1, ..Default::default() };
        let rig = create_tendons(&[0], &[c], &mesh, &d);
        let [lo, hi] = rig.tendons[0].slack_range;
        assert!((lo - 0.009).abs() < 1e-15 && (hi - 0.011).abs() < 1e-15);
    }

    #[test]
    fn dead_band_and_hooke() {
        let s = skeleton();
        let t = tendon(0.01, 0.05);
        let v = [Vec3::zeros()];
        let inside = [Vec3::new(0.0, 0.0, -0.0102)];
        assert_eq!(tendon_forces(&[t], &s, &inside, &v).soft[0], Vec3::zeros());
        let hi = t.slack_range[1];
        let x = [Vec3::new(0.0, 0.0, -(hi + 0.001))];
        let f = tendon_forces(&[t], &s, &x, &v);
        assert!((f.soft[0] - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-9);
        assert!((f.upper.force + f.soft[0]).norm() < 1e-15);
    }

    #[test]
    fn damping_never_reverses_spring() {
        let s = skeleton();
        let t = tendon(0.01, 0.0);
        // Stretched by 1 mm but shortening fast: spring 1 N, damping -5 N.
        let x = [Vec3::new(0.0, 0.0, -0.011)];
        let v = [Vec3::new(0.0, 0.0, 0.5)];
        let f = tendon_forces(&[t], &s, &x, &v);
        assert_eq!(f.soft[0], Vec3::zeros());
        // Compressed and separating fast: no pull either.
        let x = [Vec3::new(0.0, 0.0, -0.009)];
        let v = [Vec3::new(0.0, 0.0, -0.5)];
        assert_eq!(tendon_forces(&[t], &s, &x, &v).soft[0], Vec3::zeros());
    }

    #[test]
    fn zero_length_tendon_is_inert() {
        let s = skeleton();
        let t = tendon(0.0, 0.0);
        let f = tendon_forces(&[t], &s, &[Vec3::zeros()], &[Vec3::x()]);
        assert_eq!(f.soft[0], Vec3::zeros());
    }
}
