//! Spoon geometry, spoon/skin penalty contact and the per-step force metrics.

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::linalg::Mat3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpoonParams {
    pub bowl_length: f64,
    pub bowl_radius: f64,
    pub handle_length: f64,
    pub handle_radius: f64,
    /// Penalty stiffness k_c (N/m).
    pub contact_stiffness: f64,
    /// Normal damping c_c (N s/m).
    pub contact_damping: f64,
    /// Viscous tangential friction (N s/m); zero means frictionless.
    pub tangential_damping: f64,
}

impl Default for SpoonParams {
    fn default() -> Self {
        Self {
            bowl_length: 0.060,
            bowl_radius: 0.012,
            handle_length: 0.12,
            handle_radius: 0.004,
            contact_stiffness: 5000.0,
            contact_damping: 10.0,
            tangential_damping: 0.0,
        }
    }
}

/// Segment swept by a sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Capsule {
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        if len2 == 0.0 {
            return self.a;
        }
        let t = ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0);
        self.a + ab * t
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.closest_point(p)).norm() - self.radius
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Capsule {
        Capsule {
            a: iso.transform_point(&self.a.into()).coords,
            b: iso.transform_point(&self.b.into()).coords,
            radius: self.radius,
        }
    }
}

/// Kinematic spoon. The body frame has its origin at the bowl tip and +x
/// pointing from the handle toward the tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spoon {
    pub bowl: Capsule,
    pub handle: Capsule,
    pub pose: Isometry3<f64>,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
}

impl Spoon {
    pub fn new(p: &SpoonParams) -> Self {
        let (l, r) = (p.bowl_length, p.bowl_radius);
        // Bowl tip at the origin; the capsule with its caps spans `l`.
        let bowl = Capsule {
            a: Vec3::new(-(l - r).max(r), 0.0, 0.0),
            b: Vec3::new(-r, 0.0, 0.0),
            radius: r,
        };
        let handle = Capsule {
            a: Vec3::new(-l, 0.0, 0.0),
            b: Vec3::new(-l - p.handle_length, 0.0, 0.0),
            radius: p.handle_radius,
        };
        Self {
            bowl,
            handle,
            pose: Isometry3::identity(),
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
        }
    }

    pub fn tip_point(&self) -> Vec3 {
        self.pose.translation.vector
    }

    pub fn world_capsules(&self) -> [Capsule; 2] {
        [self.bowl.transformed(&self.pose), self.handle.transformed(&self.pose)]
    }

    pub fn point_velocity(&self, world: &Vec3) -> Vec3 {
        self.linear_velocity + self.angular_velocity.cross(&(world - self.pose.translation.vector))
    }

    /// Signed distance to the capsule union, the closest surface-axis
    /// point and the outward normal there.
    pub fn distance(&self, p: &Vec3) -> (f64, Vec3, Vec3) {
        let caps = self.world_capsules();
        let mut best = (f64::INFINITY, Vec3::zeros(), Vec3::zeros());
        for c in &caps {
            let q = c.closest_point(p);
            let d = (p - q).norm() - c.radius;
            if d < best.0 {
                let n = if (p - q).norm() > 0.0 {
                    (p - q).normalize()
                } else {
                    // On the axis: any direction perpendicular to it will do.
                    self.pose.rotation * Vec3::z()
                };
                best = (d, q, n);
            }
        }
        best
    }
}

/// A penetrating surface vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpoonContact {
    pub vertex: usize,
    pub penetration: f64,
    /// Unit normal pointing from the spoon into the skin.
    pub normal: Vec3,
    /// Contact point on the spoon surface.
    pub point: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub step_index: usize,
    pub position: Vec3,
    pub normal: Vec3,
    pub penetration: f64,
    pub force_magnitude: f64,
}

/// All surface vertices inside the spoon, ordered by vertex index.
pub fn detect_spoon_contacts(spoon: &Spoon, positions: &[Vec3], surface_vertices: &[usize]) -> Vec<SpoonContact> {
    let mut sorted = surface_vertices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted
        .into_iter()
        .filter_map(|i| {
            let p = positions[i];
            let (d, _, n) = spoon.distance(&p);
            (d < 0.0).then(|| SpoonContact {
                vertex: i,
                penetration: -d,
                normal: n,
                point: p - n * d,
            })
        })
        .collect()
}

/// Penalty loads on the soft body for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactForces {
    pub forces: Vec<Vec3>,
    pub stiffness: Vec<Mat3>,
    pub damping: Vec<Mat3>,
    pub events: Vec<ContactEvent>,
}

/// Normal force `max(0, k_c * penetration - c_c * separation_rate)` on each
/// penetrating vertex, plus optional viscous tangential friction.
pub fn penalty_forces(
    contacts: &[SpoonContact],
    n_vertices: usize,
    velocities: &[Vec3],
    spoon: &Spoon,
    params: &SpoonParams,
    step_index: usize,
) -> ContactForces {
    let mut out = ContactForces {
        forces: vec![Vec3::zeros(); n_vertices],
        stiffness: vec![Mat3::zeros(); n_vertices],
        damping: vec![Mat3::zeros(); n_vertices],
        events: Vec::with_capacity(contacts.len()),
    };
    for c in contacts {
        let rel = velocities[c.vertex] - spoon.point_velocity(&c.point);
        let separation_rate = rel.dot(&c.normal);
        let magnitude = (params.contact_stiffness * c.penetration - params.contact_damping * separation_rate).max(0.0);
        let mut f = c.normal * magnitude;
        let nn = c.normal * c.normal.transpose();
        if magnitude > 0.0 {
            out.stiffness[c.vertex] += nn * params.contact_stiffness;
            out.damping[c.vertex] += nn * params.contact_damping;
            if params.tangential_damping > 0.0 {
                let tangential = rel - c.normal * separation_rate;
                f -= tangential * params.tangential_damping;
                out.damping[c.vertex] += (Mat3::identity() - nn) * params.tangential_damping;
            }
        }
        out.forces[c.vertex] += f;
        out.events.push(ContactEvent {
            step_index,
            position: c.point,
            normal: c.normal,
            penetration: c.penetration,
            force_magnitude: magnitude,
        });
    }
    out
}

/// Mean contact force magnitude of one step; zero for a contact-free step.
pub fn average_step_force(events: &[ContactEvent]) -> f64 {
    if events.is_empty() {
        return 0.0;
    }
    events.iter().map(|e| e.force_magnitude).sum::<f64>() / events.len() as f64
}

/// Per-step average forces with their peak and plain sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceTrace {
    pub dt: f64,
    pub per_step_avg: Vec<f64>,
    pub peak: f64,
    pub total: f64,
}

impl ForceTrace {
    /// `total * dt`, the time integral of the per-step average (N s).
    pub fn impulse(&self) -> f64 {
        self.total * self.dt
    }
}

pub fn accumulate_metrics(series: &[f64], dt: f64) -> ForceTrace {
    debug_assert!(series.iter().all(|&f| f >= 0.0));
    ForceTrace {
        dt,
        per_step_avg: series.to_vec(),
        peak: series.iter().copied().fold(0.0, f64::max),
        total: series.iter().sum(),
    }
}
