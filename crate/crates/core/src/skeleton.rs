//! Fixed skull and a mandible on an actuated condylar hinge.

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{TriMesh, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("jaw angle {angle} outside [{min}, {max}]")]
    AngleOutOfRange { angle: f64, min: f64, max: f64 },
    #[error("non-finite jaw torque")]
    NonFiniteTorque,
    #[error("invalid jaw parameters: {0}")]
    InvalidParams(String),
}

/// Which rigid part a skull site belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkullPart {
    Upper,
    Mandible,
}

impl SkullPart {
    pub fn label(self) -> &'static str {
        match self {
            SkullPart::Upper => "upper",
            SkullPart::Mandible => "mandible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    pub name: String,
    pub pose: Isometry3<f64>,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
    /// Pose prescribed externally rather than integrated.
    pub kinematic: bool,
    /// Collision shell in the body frame.
    pub surface: TriMesh,
}

impl RigidBody {
    pub fn new(name: &str, pose: Isometry3<f64>, surface: TriMesh, kinematic: bool) -> Self {
        Self {
            name: name.to_string(),
            pose,
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            kinematic,
            surface,
        }
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.pose.transform_point(&(*local).into()).coords
    }

    pub fn to_local(&self, world: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(&(*world).into()).coords
    }

    /// Velocity of a material point given in world coordinates.
    pub fn point_velocity(&self, world: &Vec3) -> Vec3 {
        self.linear_velocity + self.angular_velocity.cross(&(world - self.pose.translation.vector))
    }
}

/// Jaw configuration; every field has a default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JawParams {
    /// Hinge pivot in the skull frame (m).
    pub pivot: [f64; 3],
    /// Hinge axis in the skull frame; positive rotation opens the mouth.
    pub hinge_axis: [f64; 3],
    pub max_open: f64,
    /// Jaw target when biting down on the spoon; at or below the rest
    /// angle 0 so the lips close past their scanned gap.
    pub bite_angle: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub max_torque: f64,
    pub mandible_mass: f64,
    /// Radius of gyration about the hinge (m); inertia = mass * r^2.
    pub gyration_radius: f64,
}

impl Default for JawParams {
    fn default() -> Self {
        Self {
            pivot: [0.0, -0.01, -0.03],
            hinge_axis: [-1.0, 0.0, 0.0],
            max_open: 0.35,
            bite_angle: -0.1,
            stiffness: 100.0,
            damping: 2.0,
            max_torque: 500.0,
            mandible_mass: 1e-3,
            gyration_radius: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MandibleJoint {
    pub pivot: Vec3,
    pub hinge_axis: Unit<Vec3>,
    pub angle: f64,
    pub rate: f64,
    pub angle_range: [f64; 2],
    pub stiffness: f64,
    pub damping: f64,
    pub max_torque: f64,
    pub target_angle: f64,
    pub inertia: f64,
}

impl MandibleJoint {
    pub fn from_params(p: &JawParams) -> Result<Self, SkeletonError> {
        let axis = Vec3::from(p.hinge_axis);
        if !(axis.norm() > 0.0) {
            return Err(SkeletonError::InvalidParams("hinge axis must be non-zero".into()));
        }
        if !(p.bite_angle <= 0.0 && p.bite_angle > -std::f64::consts::FRAC_PI_2) {
            return Err(SkeletonError::InvalidParams("bite_angle must lie in (-pi/2, 0]".into()));
        }
        if !(p.max_open >= 0.0 && p.stiffness >= 0.0 && p.damping >= 0.0 && p.max_torque >= 0.0) {
            return Err(SkeletonError::InvalidParams("gains, limits and range must be >= 0".into()));
        }
        let inertia = p.mandible_mass * p.gyration_radius * p.gyration_radius;
        if !(inertia > 0.0) {
            return Err(SkeletonError::InvalidParams("mandible inertia must be positive".into()));
        }
        Ok(Self {
            pivot: Vec3::from(p.pivot),
            hinge_axis: Unit::new_normalize(axis),
            angle: 0.0,
            rate: 0.0,
            angle_range: [p.bite_angle, p.max_open],
            stiffness: p.stiffness,
            damping: p.damping,
            max_torque: p.max_torque,
            target_angle: 0.0,
            inertia,
        })
    }
}

/// Pose of the mandible in the skull frame at a given opening angle.
pub fn mandible_pose(joint: &MandibleJoint, angle: f64) -> Result<Isometry3<f64>, SkeletonError> {
    let [min, max] = joint.angle_range;
    if !(angle >= min && angle <= max) {
        return Err(SkeletonError::AngleOutOfRange { angle, min, max });
    }
    Ok(hinge_transform(joint.pivot, joint.hinge_axis, angle))
}

fn hinge_transform(pivot: Vec3, axis: Unit<Vec3>, angle: f64) -> Isometry3<f64> {
    let rot = UnitQuaternion::from_axis_angle(&axis, angle);
    Isometry3::from_parts(Translation3::from(pivot - rot * pivot), rot)
}

/// PD servo torque, clamped to the joint's torque limit.
pub fn jaw_torque(joint: &MandibleJoint, angle: f64, rate: f64) -> f64 {
    let tau = joint.stiffness * (joint.target_angle - angle) - joint.damping * rate;
    tau.clamp(-joint.max_torque, joint.max_torque)
}

/// Force and torque on a body; torque taken about the body origin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn add_force_at(&mut self, force: Vec3, point: &Vec3, origin: &Vec3) {
        self.force += force;
        self.torque += (point - origin).cross(&force);
    }
}

/// Skull, mandible and the joint between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub skull: RigidBody,
    pub mandible: RigidBody,
    pub joint: MandibleJoint,
}

impl Skeleton {
    pub fn new(skull_pose: Isometry3<f64>, skull_shell: TriMesh, mandible_shell: TriMesh, joint: MandibleJoint) -> Self {
        let skull = RigidBody::new("skull", skull_pose, skull_shell, true);
        let mut mandible = RigidBody::new("mandible", skull_pose, mandible_shell, false);
        mandible.pose = skull_pose * hinge_transform(joint.pivot, joint.hinge_axis, joint.angle);
        Self { skull, mandible, joint }
    }

    pub fn body(&self, part: crate::skeleton::SkullPart) -> &RigidBody {
        match part {
            SkullPart::Upper => &self.skull,
            SkullPart::Mandible => &self.mandible,
        }
    }

    pub fn hinge_axis_world(&self) -> Vec3 {
        self.skull.pose.rotation * self.joint.hinge_axis.into_inner()
    }

    pub fn pivot_world(&self) -> Vec3 {
        self.skull.to_world(&self.joint.pivot)
    }

    /// Component along the hinge axis of a wrench's torque about the pivot.
    pub fn hinge_torque(&self, w: &Wrench) -> f64 {
        let origin = self.mandible.pose.translation.vector;
        let about_pivot = w.torque + (origin - self.pivot_world()).cross(&w.force);
        self.hinge_axis_world().dot(&about_pivot)
    }

    /// Advances the hinge by one step; the PD servo is treated implicitly
    /// so the near-massless mandible stays stable.
    pub fn step(&mut self, tendon_wrench: &Wrench, dt: f64) -> Result<(), SkeletonError> {
        let tendon = self.hinge_torque(tendon_wrench);
        step_skeleton(&self.skull, &mut self.mandible, &mut self.joint, tendon, dt)
    }
}

/// One semi-implicit Euler step of the hinge dynamics
/// `I * acc = tau_pd + tau_tendon`, with angle clamped to range.
pub fn step_skeleton(
    skull: &RigidBody,
    mandible: &mut RigidBody,
    joint: &mut MandibleJoint,
    tendon_torque: f64,
    dt: f64,
) -> Result<(), SkeletonError> {
    if !tendon_torque.is_finite() {
        return Err(SkeletonError::NonFiniteTorque);
    }
    let j = *joint;
    let implicit = j.inertia + dt * j.damping + dt * dt * j.stiffness;
    let mut rate = (j.inertia * j.rate + dt * (j.stiffness * (j.target_angle - j.angle) + tendon_torque)) / implicit;
    let servo = j.stiffness * (j.target_angle - j.angle - dt * rate) - j.damping * rate;
    if servo.abs() > j.max_torque {
        rate = j.rate + dt * (servo.signum() * j.max_torque + tendon_torque) / j.inertia;
    }
    if !rate.is_finite() {
        return Err(SkeletonError::NonFiniteTorque);
    }
    let mut angle = j.angle + dt * rate;
    let [min, max] = j.angle_range;
    if angle >= max {
        angle = max;
        rate = rate.min(0.0);
    }
    if angle <= min {
        angle = min;
        rate = rate.max(0.0);
    }
    joint.angle = angle;
    joint.rate = rate;

    mandible.pose = skull.pose * hinge_transform(j.pivot, j.hinge_axis, angle);
    let axis = skull.pose.rotation * j.hinge_axis.into_inner();
    let pivot = skull.to_world(&j.pivot);
    mandible.angular_velocity = axis * rate;
    mandible.linear_velocity = mandible.angular_velocity.cross(&(mandible.pose.translation.vector - pivot));
    Ok(())
}

/// Convex skull shells as ellipsoids in the head frame: the upper skull
/// and a flattened one in the chin region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShellParams {
    pub upper_center: [f64; 3],
    pub upper_semi_axes: [f64; 3],
    pub mandible_center: [f64; 3],
    pub mandible_semi_axes: [f64; 3],
}

impl Default for ShellParams {
    fn default() -> Self {
        Self {
            upper_center: [0.0, -0.005, 0.035],
            upper_semi_axes: [0.055, 0.07, 0.05],
            mandible_center: [0.0, 0.035, -0.075],
            mandible_semi_axes: [0.045, 0.035, 0.012],
        }
    }
}

impl ShellParams {
    pub fn surfaces(&self) -> (TriMesh, TriMesh) {
        let upper = TriMesh::ellipsoid(self.upper_center.into(), self.upper_semi_axes.into(), 4, 8);
        let mandible = TriMesh::ellipsoid(self.mandible_center.into(), self.mandible_semi_axes.into(), 3, 8);
        (upper, mandible)
    }
}

pub fn default_shells() -> (TriMesh, TriMesh) {
    ShellParams::default().surfaces()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    fn joint() -> MandibleJoint {
        MandibleJoint::from_params(&JawParams {
            max_open: std::f64::consts::PI,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_angle_is_identity() {
        let p = mandible_pose(&joint(), 0.0).unwrap();
        assert!((p.to_homogeneous() - Matrix4::identity()).norm() < 1e-15);
    }

    #[test]
    fn quarter_turn_about_x() {
        let mut j = joint();
        j.pivot = Vec3::zeros();
        j.hinge_axis = Vec3::x_axis();
        let p = mandible_pose(&j, std::f64::consts::FRAC_PI_2).unwrap();
        let y = p.transform_vector(&Vec3::y());
        assert!((y - Vec3::z()).norm() < 1e-15);
        assert!(p.translation.vector.norm() < 1e-15);
    }

    #[test]
    fn matches_homogeneous_oracle() {
        let mut j = joint();
        j.pivot = Vec3::new(0.0, -0.02, -0.05);
        let angle = 0.3;
        let p = mandible_pose(&j, angle).unwrap();
        // translate(pivot) * rotate * translate(-pivot), built by hand.
        let a = j.hinge_axis.into_inner();
        let (s, c) = angle.sin_cos();
        let k = nalgebra::Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0);
        let r = nalgebra::Matrix3::identity() + k * s + k * k * (1.0 - c);
        let mut rot = Matrix4::identity();
        rot.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        let shift = |v: Vec3| {
            let mut m = Matrix4::identity();
            m.fixed_view_mut::<3, 1>(0, 3).copy_from(&v);
            m
        };
        let oracle = shift(j.pivot) * rot * shift(-j.pivot);
        assert!((p.to_homogeneous() - oracle).norm() < 1e-12);
        let q = Vector4::new(0.01, 0.03, -0.02, 1.0);
        assert!((p.to_homogeneous() * q - oracle * q).norm() < 1e-12);
    }

    #[test]
    fn out_of_range_angle_rejected() {
        let j = MandibleJoint::from_params(&JawParams::default()).unwrap();
        assert!(mandible_pose(&j, 0.5).is_err());
        assert!(mandible_pose(&j, j.angle_range[0] - 0.01).is_err());
    }

    #[test]
    fn pd_torque() {
        let mut j = joint();
        j.stiffness = 2.0;
        j.damping = 0.0;
        j.target_angle = 0.3;
        assert_eq!(jaw_torque(&j, 0.3, 0.0), 0.0);
        assert!((jaw_torque(&j, 0.2, 0.0) - 0.2).abs() < 1e-15);
        j.damping = 0.5;
        assert!((jaw_torque(&j, 0.2, 0.2) - 0.1).abs() < 1e-15);
        j.max_torque = 0.05;
        assert_eq!(jaw_torque(&j, 0.2, 0.0), 0.05);
    }

    fn skeleton(j: MandibleJoint) -> Skeleton {
        let (u, m) = default_shells();
        Skeleton::new(Isometry3::identity(), u, m, j)
    }

    #[test]
    fn free_hinge_semi_implicit_update() {
        let mut j = joint();
        j.stiffness = 0.0;
        j.damping = 0.0;
        j.angle = 0.1;
        j.rate = 0.3;
        let mut s = skeleton(j);
        let dt = 1e-3;
        let tau = 2e-6;
        let skull_before = s.skull.clone();
        step_skeleton(&s.skull, &mut s.mandible, &mut s.joint, tau, dt).unwrap();
        let rate = 0.3 + dt * tau / j.inertia;
        assert!((s.joint.rate - rate).abs() < 1e-12);
        assert!((s.joint.angle - (0.1 + dt * rate)).abs() < 1e-15);
        assert_eq!(s.skull, skull_before);
        let no_torque = {
            let mut j2 = j;
            j2.rate = 0.0;
            let mut s2 = skeleton(j2);
            step_skeleton(&s2.skull.clone(), &mut s2.mandible, &mut s2.joint, 0.0, dt).unwrap();
            s2.joint.angle
        };
        assert_eq!(no_torque, 0.1);
    }

    #[test]
    fn limit_clamps_angle_and_rate() {
        let mut j = MandibleJoint::from_params(&JawParams::default()).unwrap();
        j.angle = j.angle_range[1];
        j.rate = 1.0;
        j.target_angle = j.angle_range[1];
        let mut s = skeleton(j);
        s.step(&Wrench::default(), 2e-3).unwrap();
        assert_eq!(s.joint.angle, j.angle_range[1]);
        assert_eq!(s.joint.rate, 0.0);
    }

    #[test]
    fn servo_tracks_target() {
        let j = MandibleJoint::from_params(&JawParams::default()).unwrap();
        let mut s = skeleton(j);
        s.joint.target_angle = 0.3;
        for _ in 0..500 {
            s.step(&Wrench::default(), 2e-3).unwrap();
            assert!(s.joint.angle >= 0.0 && s.joint.angle <= 0.35);
        }
        assert!((s.joint.angle - 0.3).abs() < 1e-6);
    }

    #[test]
    fn non_finite_torque_rejected() {
        let mut s = skeleton(joint());
        let w = Wrench {
            force: Vec3::zeros(),
            torque: Vec3::new(f64::NAN, 0.0, 0.0),
        };
        assert_eq!(s.step(&w, 1e-3), Err(SkeletonError::NonFiniteTorque));
    }

    #[test]
    fn hinge_torque_projects_about_pivot() {
        let mut s = skeleton(joint());
        s.joint.pivot = Vec3::new(0.0, 0.0, 0.0);
        // Upward force one unit in front of the pivot on a -x hinge opens negatively.
        let mut w = Wrench::default();
        let origin = s.mandible.pose.translation.vector;
        w.add_force_at(Vec3::z(), &Vec3::y(), &origin);
        assert!((s.hinge_torque(&w) - (-1.0)).abs() < 1e-12);
    }
}
