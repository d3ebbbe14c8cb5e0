//! One simulated bite transfer.

use serde::{Deserialize, Serialize};

use crate::bite::{keyframe_poses, BiteTransferParams, Phase, PhaseSchedule};
use crate::contact::{accumulate_metrics, average_step_force, detect_spoon_contacts, penalty_forces, ForceTrace, Spoon};
use crate::fem::{ExternalLoad, SoftBodyState};
use crate::geometry::Vec3;
use crate::harness::config::Scene;

const GRAVITY: f64 = 9.81;

/// Which steps count toward a run's force metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricWindow {
    EntryAndClose,
    ExitOnly,
    Full,
}

impl MetricWindow {
    pub fn contains(self, phase: Phase) -> bool {
        match self {
            MetricWindow::EntryAndClose => matches!(phase, Phase::Approach | Phase::Entry | Phase::Close),
            MetricWindow::ExitOnly => {
                matches!(phase, Phase::Open | Phase::RetractToE | Phase::RotateToBeta | Phase::Exit)
            }
            MetricWindow::Full => true,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricWindow::EntryAndClose => "entry_and_close",
            MetricWindow::ExitOnly => "exit_only",
            MetricWindow::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    SolverFailure,
    InvalidParams,
}

impl RunStatus {
    pub fn label(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::SolverFailure => "solver_failure",
            RunStatus::InvalidParams => "invalid_params",
        }
    }
}

/// The four swept trajectory parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub alpha_deg: f64,
    pub depth_m: f64,
    pub beta_deg: f64,
    pub exit_depth_m: f64,
}

impl TrajectoryPoint {
    pub fn of(p: &BiteTransferParams) -> Self {
        Self {
            alpha_deg: p.entry_angle_deg,
            depth_m: p.insertion_depth_m,
            beta_deg: p.exit_angle_deg,
            exit_depth_m: p.exit_depth_m,
        }
    }

    pub fn apply(&self, base: &BiteTransferParams) -> BiteTransferParams {
        BiteTransferParams {
            entry_angle_deg: self.alpha_deg,
            insertion_depth_m: self.depth_m,
            exit_angle_deg: self.beta_deg,
            exit_depth_m: self.exit_depth_m,
            ..*base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverSummary {
    pub steps: usize,
    pub total_cg_iterations: usize,
    pub max_cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub params: TrajectoryPoint,
    pub peak: f64,
    pub total: f64,
    pub impulse: f64,
    pub max_penetration: f64,
    pub solver: SolverSummary,
    pub status: RunStatus,
    /// Failure description for non-ok runs.
    pub message: Option<String>,
}

impl RunRecord {
    pub fn invalid(params: TrajectoryPoint, message: String) -> Self {
        Self {
            params,
            peak: 0.0,
            total: 0.0,
            impulse: 0.0,
            max_penetration: 0.0,
            solver: SolverSummary::default(),
            status: RunStatus::InvalidParams,
            message: Some(message),
        }
    }
}

/// One row of the per-step trace, for every step of the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// Time at the end of the step.
    pub time: f64,
    pub phase: Phase,
    pub num_contacts: usize,
    pub f_t: f64,
    pub in_window: bool,
    pub jaw_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub record: RunRecord,
    /// Metrics over the windowed steps only.
    pub trace: ForceTrace,
    pub rows: Vec<TraceRow>,
    pub schedule: Option<PhaseSchedule>,
}

/// Per-step observer; receives the soft-body state after each step.
pub trait StepObserver {
    fn observe(&mut self, row: &TraceRow, state: &SoftBodyState);
}

impl StepObserver for () {
    fn observe(&mut self, _: &TraceRow, _: &SoftBodyState) {}
}

pub fn run_bite_transfer(scene: &Scene, params: &BiteTransferParams, window: MetricWindow) -> RunOutput {
    run_observed(scene, params, window, &mut ())
}

/// Simulates the whole schedule: the spoon follows the key poses, the skull
/// stays put, and the mandible and soft tissue respond.
pub fn run_observed(
    scene: &Scene,
    params: &BiteTransferParams,
    window: MetricWindow,
    observer: &mut dyn StepObserver,
) -> RunOutput {
    let point = TrajectoryPoint::of(params);
    let cfg = &scene.config;
    let dt = cfg.solver.dt;
    let schedule = match keyframe_poses(params, &scene.frame) {
        Ok(s) => s,
        Err(e) => {
            return RunOutput {
                record: RunRecord::invalid(point, e.to_string()),
                trace: accumulate_metrics(&[], dt),
                rows: Vec::new(),
                schedule: None,
            }
        }
    };

    let mesh = &scene.mesh;
    let n = mesh.vertex_count();
    let mut state = SoftBodyState::new(mesh);
    let mut integrator = scene.integrator.clone();
    let mut skeleton = scene.skeleton.clone();
    let mut spoon = Spoon::new(&cfg.spoon);
    let settings = cfg.solver.settings();
    let pinned = vec![false; n];
    let gravity: Vec<Vec3> = mesh
        .vertex_mass()
        .iter()
        .map(|&m| if cfg.gravity { Vec3::new(0.0, 0.0, -GRAVITY * m) } else { Vec3::zeros() })
        .collect();

    let end = schedule.end_time();
    let steps = (end / dt).ceil() as usize;
    let mut series = Vec::new();
    let mut rows = Vec::with_capacity(steps);
    let mut max_penetration = 0.0_f64;
    let mut solver = SolverSummary::default();
    let mut failure = None;

    for k in 0..steps {
        let t0 = (k as f64 * dt).min(end);
        let t1 = ((k + 1) as f64 * dt).min(end);
        let (Ok(before), Ok(after)) = (schedule.pose_at(t0), schedule.pose_at(t1)) else {
            unreachable!("step times lie inside the schedule");
        };
        // Phase of the step is that of its start; the spoon is placed at
        // the end pose so contact is resolved implicitly with the step.
        let phase = before.phase;
        spoon.pose = after.pose;
        let h = t1 - t0;
        if h > 0.0 {
            spoon.linear_velocity = (after.pose.translation.vector - before.pose.translation.vector) / h;
            spoon.angular_velocity = (after.pose.rotation * before.pose.rotation.inverse()).scaled_axis() / h;
        }
        // Opening starts from the rest pose; afterwards the jaw moves
        // between the bite angle and fully open.
        let closed = if after.phase == Phase::Approach { 0.0 } else { cfg.jaw.bite_angle };
        skeleton.joint.target_angle = closed + after.jaw_open * (cfg.jaw.max_open - closed);

        let tendons = crate::skinning::tendon_forces(&scene.rig.tendons, &skeleton, &state.positions, &state.velocities);
        let contacts = detect_spoon_contacts(&spoon, &state.positions, &scene.surface_vertices);
        let contact = penalty_forces(&contacts, n, &state.velocities, &spoon, &cfg.spoon, k);
        let load = ExternalLoad {
            forces: (0..n).map(|i| tendons.soft[i] + contact.forces[i] + gravity[i]).collect(),
            stiffness: (0..n).map(|i| tendons.stiffness[i] + contact.stiffness[i]).collect(),
            damping: (0..n).map(|i| tendons.damping[i] + contact.damping[i]).collect(),
        };

        let f_t = average_step_force(&contact.events);
        let in_window = window.contains(phase);
        if in_window {
            series.push(f_t);
            max_penetration = contact.events.iter().map(|e| e.penetration).fold(max_penetration, f64::max);
        }

        match integrator.step(&mut state, &cfg.material, dt, &load, &pinned, &settings) {
            Ok(stats) => {
                solver.steps += 1;
                solver.total_cg_iterations += stats.cg.iterations;
                solver.max_cg_iterations = solver.max_cg_iterations.max(stats.cg.iterations);
            }
            Err(e) => {
                failure = Some(format!("step {k}: {e}"));
            }
        }
        if failure.is_none() {
            if let Err(e) = skeleton.step(tendons.wrench(crate::skeleton::SkullPart::Mandible), dt) {
                failure = Some(format!("step {k}: {e}"));
            }
        }
        let row = TraceRow {
            step: k,
            time: t1,
            phase,
            num_contacts: contact.events.len(),
            f_t,
            in_window,
            jaw_angle: skeleton.joint.angle,
        };
        rows.push(row);
        if failure.is_some() {
            break;
        }
        observer.observe(&row, &state);
    }

    let trace = accumulate_metrics(&series, dt);
    let status = if failure.is_some() { RunStatus::SolverFailure } else { RunStatus::Ok };
    RunOutput {
        record: RunRecord {
            params: point,
            peak: trace.peak,
            total: trace.total,
            impulse: trace.impulse(),
            max_penetration,
            solver,
            status,
            message: failure,
        },
        trace,
        rows,
        schedule: Some(schedule),
    }
}
