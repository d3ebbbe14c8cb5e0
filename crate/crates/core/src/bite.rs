//! Spoon trajectory for one bite transfer: key poses from the entry and
//! exit parameters, the phase schedule and its interpolation.
//!
//! Angles pitch the spoon in the plane spanned by the mouth normal and the
//! up axis. They are measured from `-up`, so 90 degrees points the spoon
//! straight into the mouth along `-normal`. Depth is the distance of the
//! bowl tip behind the mouth plane.

use std::fmt::Write as _;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::geometry::{MouthAnnotation, Vec3};
use crate::numfmt::sig9;

pub const MIN_ANGLE_DEG: f64 = 60.0;
pub const MAX_ANGLE_DEG: f64 = 130.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BiteError {
    #[error("mesh has no mouth annotation")]
    MissingAnnotation,
    #[error("mouth frame is not orthonormal")]
    InvalidFrame,
    #[error("invalid trajectory parameters: {0}")]
    InvalidParams(String),
    #[error("time {t} outside schedule [0, {end}]")]
    TimeOutOfRange { t: f64, end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MouthFrame {
    pub origin: Vec3,
    pub normal: Vec3,
    pub up: Vec3,
}

impl MouthFrame {
    pub fn new(origin: Vec3, normal: Vec3, up: Vec3) -> Result<Self, BiteError> {
        let ok = [origin, normal, up].iter().all(|v| v.iter().all(|x| x.is_finite()))
            && (normal.norm() - 1.0).abs() < 1e-9
            && (up.norm() - 1.0).abs() < 1e-9
            && normal.dot(&up).abs() < 1e-9;
        if !ok {
            return Err(BiteError::InvalidFrame);
        }
        Ok(Self { origin, normal, up })
    }

    /// World point from (up, normal) coordinates in the sagittal plane.
    pub fn point(&self, planar: [f64; 2]) -> Vec3 {
        self.origin + self.up * planar[0] + self.normal * planar[1]
    }

    /// Unit spoon axis (handle to tip) at the given pitch.
    pub fn axis(&self, angle_deg: f64) -> Vec3 {
        let (s, c) = angle_deg.to_radians().sin_cos();
        -self.up * c - self.normal * s
    }

    /// Spoon orientation: body +x along the axis, bowl opening toward +z.
    pub fn orientation(&self, angle_deg: f64) -> UnitQuaternion<f64> {
        let x = self.axis(angle_deg);
        let y = self.normal.cross(&self.up);
        let z = x.cross(&y);
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])))
    }
}

pub fn mouth_frame(annotation: Option<&MouthAnnotation>) -> Result<MouthFrame, BiteError> {
    let a = annotation.ok_or(BiteError::MissingAnnotation)?;
    MouthFrame::new(Vec3::from(a.center), Vec3::from(a.outward), Vec3::from(a.up))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiteTransferParams {
    pub entry_angle_deg: f64,
    pub insertion_depth_m: f64,
    pub exit_angle_deg: f64,
    pub exit_depth_m: f64,
    pub approach_distance_m: f64,
    pub entry_speed: f64,
    pub exit_speed: f64,
    /// deg/s
    pub rotation_speed: f64,
    /// Also used for the opening ramps.
    pub jaw_close_duration: f64,
    pub hold_duration: f64,
}

impl Default for BiteTransferParams {
    fn default() -> Self {
        Self {
            entry_angle_deg: 90.0,
            insertion_depth_m: 0.070,
            exit_angle_deg: 90.0,
            exit_depth_m: 0.010,
            approach_distance_m: 0.050,
            entry_speed: 0.05,
            exit_speed: 0.05,
            rotation_speed: 30.0,
            jaw_close_duration: 0.5,
            hold_duration: 0.3,
        }
    }
}

impl BiteTransferParams {
    pub fn validate(&self) -> Result<(), BiteError> {
        let bad = |m: String| Err(BiteError::InvalidParams(m));
        let all = [
            self.entry_angle_deg,
            self.insertion_depth_m,
            self.exit_angle_deg,
            self.exit_depth_m,
            self.approach_distance_m,
            self.entry_speed,
            self.exit_speed,
            self.rotation_speed,
            self.jaw_close_duration,
            self.hold_duration,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return bad("non-finite value".into());
        }
        for (name, a) in [("entry", self.entry_angle_deg), ("exit", self.exit_angle_deg)] {
            if !(MIN_ANGLE_DEG..=MAX_ANGLE_DEG).contains(&a) {
                return bad(format!("{name} angle {a} outside [{MIN_ANGLE_DEG}, {MAX_ANGLE_DEG}]"));
            }
        }
        if !(0.0 <= self.exit_depth_m && self.exit_depth_m <= self.insertion_depth_m) {
            return bad(format!("need 0 <= e <= d, got e={} d={}", self.exit_depth_m, self.insertion_depth_m));
        }
        if self.approach_distance_m <= 0.0 {
            return bad("approach distance must be positive".into());
        }
        if self.entry_speed <= 0.0 || self.exit_speed <= 0.0 || self.rotation_speed <= 0.0 {
            return bad("speeds must be positive".into());
        }
        if self.jaw_close_duration < 0.0 || self.hold_duration < 0.0 {
            return bad("durations must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Approach,
    Entry,
    Close,
    Open,
    RetractToE,
    RotateToBeta,
    Exit,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Approach,
        Phase::Entry,
        Phase::Close,
        Phase::Open,
        Phase::RetractToE,
        Phase::RotateToBeta,
        Phase::Exit,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Phase::Approach => "approach",
            Phase::Entry => "entry",
            Phase::Close => "close",
            Phase::Open => "open",
            Phase::RetractToE => "retract_to_e",
            Phase::RotateToBeta => "rotate_to_beta",
            Phase::Exit => "exit",
        }
    }
}

/// A key pose. `phase` names the segment that starts here; the last
/// keyframe keeps the label of the final segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keyframe {
    pub time: f64,
    pub phase: Phase,
    /// Tip position as (up, normal) coordinates in the mouth frame.
    pub planar: [f64; 2],
    pub angle_deg: f64,
    pub pose: Isometry3<f64>,
}

impl Keyframe {
    pub fn tip(&self) -> Vec3 {
        self.pose.translation.vector
    }

    /// Distance of the tip behind the mouth plane.
    pub fn depth(&self) -> f64 {
        -self.planar[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    pub frame: MouthFrame,
    pub keyframes: Vec<Keyframe>,
    /// Time over which the jaw ramps between open and closed.
    pub jaw_ramp: f64,
}

/// Interpolated spoon state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpoonSample {
    pub pose: Isometry3<f64>,
    pub phase: Phase,
    /// Jaw target as a fraction of full opening: 0 closed, 1 open.
    pub jaw_open: f64,
    pub depth: f64,
}

pub fn keyframe_poses(params: &BiteTransferParams, frame: &MouthFrame) -> Result<PhaseSchedule, BiteError> {
    params.validate()?;
    let (a, b) = (params.entry_angle_deg, params.exit_angle_deg);
    let (d, e, far) = (params.insertion_depth_m, params.exit_depth_m, params.approach_distance_m);
    let cot = |deg: f64| {
        let (s, c) = deg.to_radians().sin_cos();
        c / s
    };

    // Tip positions in (up, normal) coordinates. Moving along the spoon
    // axis changes depth by sin(angle) per unit length and the up
    // coordinate by -cos(angle).
    let start = [0.0, far];
    let entered = [-(d + far) * cot(a), -d];
    let retracted = [entered[0] + (d - e) * cot(a), -e];
    let out = [retracted[0] + (e + far) * cot(b), far];
    let len = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();

    let ramp = params.jaw_close_duration;
    let segments = [
        (Phase::Approach, start, a, ramp),
        (Phase::Entry, start, a, len(start, entered) / params.entry_speed),
        (Phase::Close, entered, a, params.jaw_close_duration + params.hold_duration),
        (Phase::Open, entered, a, ramp),
        (Phase::RetractToE, entered, a, len(entered, retracted) / params.exit_speed),
        (Phase::RotateToBeta, retracted, a, (b - a).abs() / params.rotation_speed),
        (Phase::Exit, retracted, b, len(retracted, out) / params.exit_speed),
    ];

    let make = |time, phase, planar: [f64; 2], angle| Keyframe {
        time,
        phase,
        planar,
        angle_deg: angle,
        pose: Isometry3::from_parts(Translation3::from(frame.point(planar)), frame.orientation(angle)),
    };
    let mut keyframes = Vec::with_capacity(segments.len() + 1);
    let mut t = 0.0;
    for &(phase, planar, angle, duration) in &segments {
        // A zero-length segment collapses into the next keyframe.
        if duration > 0.0 {
            keyframes.push(make(t, phase, planar, angle));
            t += duration;
        }
    }
    keyframes.push(make(t, Phase::Exit, out, b));
    Ok(PhaseSchedule {
        frame: *frame,
        keyframes,
        jaw_ramp: ramp,
    })
}

impl PhaseSchedule {
    pub fn end_time(&self) -> f64 {
        self.keyframes.last().map_or(0.0, |k| k.time)
    }

    /// Start time of the first segment with the given phase, if present.
    pub fn phase_start(&self, phase: Phase) -> Option<f64> {
        self.keyframes[..self.keyframes.len() - 1].iter().find(|k| k.phase == phase).map(|k| k.time)
    }

    /// `[start, end)` of the phase, if present.
    pub fn phase_interval(&self, phase: Phase) -> Option<(f64, f64)> {
        let n = self.keyframes.len();
        let i = self.keyframes[..n - 1].iter().position(|k| k.phase == phase)?;
        Some((self.keyframes[i].time, self.keyframes[i + 1].time))
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.keyframes.len();
        if n < 2 {
            return 0;
        }
        // Last keyframe whose time is <= t, capped to the final segment.
        let i = self.keyframes.partition_point(|k| k.time <= t);
        i.saturating_sub(1).min(n - 2)
    }

    pub fn pose_at(&self, t: f64) -> Result<SpoonSample, BiteError> {
        let end = self.end_time();
        if !(0.0..=end).contains(&t) {
            return Err(BiteError::TimeOutOfRange { t, end });
        }
        let i = self.segment(t);
        let k0 = &self.keyframes[i];
        let Some(k1) = self.keyframes.get(i + 1) else {
            return Ok(SpoonSample {
                pose: k0.pose,
                phase: k0.phase,
                jaw_open: 1.0,
                depth: k0.depth(),
            });
        };
        let span = k1.time - k0.time;
        let s = ((t - k0.time) / span).clamp(0.0, 1.0);
        let (pose, depth) = if t == k0.time {
            (k0.pose, k0.depth())
        } else if t == k1.time {
            (k1.pose, k1.depth())
        } else {
            let p = k0.tip().lerp(&k1.tip(), s);
            let q = k0.pose.rotation.slerp(&k1.pose.rotation, s);
            let depth = k0.depth() + (k1.depth() - k0.depth()) * s;
            (Isometry3::from_parts(Translation3::from(p), q), depth)
        };
        let phase = if t == k1.time && i + 2 < self.keyframes.len() { k1.phase } else { k0.phase };
        Ok(SpoonSample {
            pose,
            phase,
            jaw_open: self.jaw_open(phase, t),
            depth,
        })
    }

    fn jaw_open(&self, phase: Phase, t: f64) -> f64 {
        let start = self.phase_start(phase).unwrap_or(0.0);
        let ramp = |dir_open: bool| {
            let f = if self.jaw_ramp > 0.0 {
                ((t - start) / self.jaw_ramp).clamp(0.0, 1.0)
            } else {
                1.0
            };
            if dir_open {
                f
            } else {
                1.0 - f
            }
        };
        match phase {
            Phase::Approach | Phase::Open => ramp(true),
            Phase::Close => ramp(false),
            _ => 1.0,
        }
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        for k in &self.keyframes {
            let p = k.tip();
            let _ = writeln!(
                s,
                "key t={} phase={} tip={},{},{} angle_deg={}",
                sig9(k.time),
                k.phase.label(),
                sig9(p.x),
                sig9(p.y),
                sig9(p.z),
                sig9(k.angle_deg)
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> MouthFrame {
        MouthFrame::new(Vec3::new(0.0, 0.09, 0.0), Vec3::y(), Vec3::z()).unwrap()
    }

    fn params(a: f64, d: f64, b: f64, e: f64) -> BiteTransferParams {
        BiteTransferParams {
            entry_angle_deg: a,
            insertion_depth_m: d,
            exit_angle_deg: b,
            exit_depth_m: e,
            ..Default::default()
        }
    }

    #[test]
    fn annotation_required() {
        assert_eq!(mouth_frame(None), Err(BiteError::MissingAnnotation));
        let ann = MouthAnnotation {
            center: [0.0, 0.09, 0.0],
            outward: [0.0, 1.0, 0.0],
            up: [0.0, 0.0, 1.0],
        };
        assert_eq!(mouth_frame(Some(&ann)).unwrap(), frame());
    }

    #[test]
    fn straight_entry_geometry() {
        let s = keyframe_poses(&params(90.0, 0.070, 90.0, 0.010), &frame()).unwrap();
        let entry = s.keyframes.iter().position(|k| k.phase == Phase::Entry).unwrap();
        let (k0, k1) = (&s.keyframes[entry], &s.keyframes[entry + 1]);
        assert!(((k0.tip() - k1.tip()).norm() - 0.120).abs() < 1e-12);
        assert!((k1.tip() - Vec3::new(0.0, 0.09 - 0.070, 0.0)).norm() < 1e-12);
        assert!((k1.time - k0.time - 2.4).abs() < 1e-12);
    }

    #[test]
    fn phases_in_order_and_times_increase() {
        let s = keyframe_poses(&params(100.0, 0.08, 110.0, 0.02), &frame()).unwrap();
        assert_eq!(s.keyframes[0].time, 0.0);
        assert_eq!(s.keyframes.len(), 8);
        for w in s.keyframes.windows(2) {
            assert!(w[1].time > w[0].time);
            assert!(w[1].phase >= w[0].phase);
        }
        let labels: Vec<_> = s.keyframes[..7].iter().map(|k| k.phase).collect();
        assert_eq!(labels, Phase::ALL);
    }

    #[test]
    fn zero_segments_merge() {
        let s = keyframe_poses(&params(90.0, 0.07, 90.0, 0.07), &frame()).unwrap();
        let labels: Vec<_> = s.keyframes.iter().map(|k| k.phase).collect();
        assert_eq!(
            labels,
            [Phase::Approach, Phase::Entry, Phase::Close, Phase::Open, Phase::Exit, Phase::Exit]
        );
        for w in s.keyframes.windows(2) {
            assert!(w[1].time > w[0].time);
        }
    }

    #[test]
    fn tilted_entry_matches_planar_trig() {
        let (a, d, far) = (100.0_f64, 0.08, 0.05);
        let s = keyframe_poses(&params(a, d, 90.0, 0.0), &frame()).unwrap();
        let end = s.keyframes.iter().find(|k| k.phase == Phase::Close).unwrap();
        // Walk from the start point along the axis until depth d.
        let th = a.to_radians();
        let (dir_up, dir_n) = (-th.cos(), -th.sin());
        let len = (d + far) / th.sin();
        let expect = Vec3::new(0.0, 0.09 + far + len * dir_n, len * dir_up);
        assert!((end.tip() - expect).norm() < 1e-12);
        assert_eq!(end.depth(), d);
    }

    #[test]
    fn keyframe_times_are_exact_poses() {
        let s = keyframe_poses(&params(100.0, 0.08, 120.0, 0.02), &frame()).unwrap();
        for (i, k) in s.keyframes.iter().enumerate() {
            let p = s.pose_at(k.time).unwrap();
            assert_eq!(p.pose, k.pose);
            if i + 1 < s.keyframes.len() {
                assert_eq!(p.phase, k.phase);
            }
        }
    }

    #[test]
    fn midpoints() {
        let s = keyframe_poses(&params(90.0, 0.07, 120.0, 0.02), &frame()).unwrap();
        let (t0, t1) = s.phase_interval(Phase::Entry).unwrap();
        let mid = s.pose_at((t0 + t1) / 2.0).unwrap();
        assert!((mid.pose.translation.vector - Vec3::new(0.0, 0.09 - 0.01, 0.0)).norm() < 1e-12);

        let (r0, r1) = s.phase_interval(Phase::RotateToBeta).unwrap();
        let m = s.pose_at((r0 + r1) / 2.0).unwrap();
        let axis = m.pose.rotation * Vec3::x();
        assert!((axis - s.frame.axis(105.0)).norm() < 1e-12);
        let tip = s.pose_at(r0).unwrap().pose.translation.vector;
        assert!((m.pose.translation.vector - tip).norm() < 1e-12);
    }

    #[test]
    fn jaw_targets() {
        let s = keyframe_poses(&params(90.0, 0.07, 90.0, 0.01), &frame()).unwrap();
        assert_eq!(s.pose_at(0.0).unwrap().jaw_open, 0.0);
        let (e0, _) = s.phase_interval(Phase::Entry).unwrap();
        assert_eq!(s.pose_at(e0 + 0.1).unwrap().jaw_open, 1.0);
        let (c0, c1) = s.phase_interval(Phase::Close).unwrap();
        assert!((s.pose_at(c0 + 0.25).unwrap().jaw_open - 0.5).abs() < 1e-12);
        assert_eq!(s.pose_at(c1 - 0.1).unwrap().jaw_open, 0.0);
        assert_eq!(s.pose_at(s.end_time()).unwrap().jaw_open, 1.0);
    }

    #[test]
    fn out_of_range_time() {
        let s = keyframe_poses(&BiteTransferParams::default(), &frame()).unwrap();
        assert!(matches!(s.pose_at(-0.1), Err(BiteError::TimeOutOfRange { .. })));
        assert!(s.pose_at(s.end_time() + 1e-9).is_err());
    }

    #[test]
    fn bad_params() {
        assert!(keyframe_poses(&params(59.0, 0.07, 90.0, 0.0), &frame()).is_err());
        assert!(keyframe_poses(&params(90.0, 0.07, 131.0, 0.0), &frame()).is_err());
        assert!(keyframe_poses(&params(90.0, 0.05, 90.0, 0.06), &frame()).is_err());
        let mut p = BiteTransferParams::default();
        p.entry_speed = 0.0;
        assert!(keyframe_poses(&p, &frame()).is_err());
    }

    #[test]
    fn bowl_faces_up_straight_in() {
        let q = frame().orientation(90.0);
        assert!((q * Vec3::z() - Vec3::z()).norm() < 1e-12);
        assert!((q * Vec3::x() + Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn dump_format() {
        let s = keyframe_poses(&params(90.0, 0.07, 90.0, 0.01), &frame()).unwrap();
        let first = s.dump().lines().next().unwrap().to_string();
        assert_eq!(first, "key t=0 phase=approach tip=0,0.14,0 angle_deg=90");
    }
}
