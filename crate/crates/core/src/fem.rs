//! Corotational linear FEM for the soft head and its implicit Euler step.
//!
//! Per tet the elastic energy is
//! `V0 * (mu * |F - R|^2 + lambda / 2 * tr(R^T F - I)^2)` with `R` the
//! rotation of the polar decomposition of `F`. Forces are its exact
//! gradient; the implicit step linearizes with `R K0 R^T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{TetMesh, Vec3};
use crate::linalg::{self, BlockCsr, CgStats, Mat3, SolveError};
use crate::par::{self, Exec};

/// Below this `det(F)` the previous rotation of a tet is reused.
pub const POLAR_DET_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid step input: {0}")]
    InvalidInput(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub rayleigh_mass_damping: f64,
    pub rayleigh_stiffness_damping: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            young_modulus: 5e4,
            poisson_ratio: 0.4,
            rayleigh_mass_damping: 1.0,
            rayleigh_stiffness_damping: 0.01,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), FemError> {
        lame_parameters(self.young_modulus, self.poisson_ratio)?;
        if !(self.rayleigh_mass_damping >= 0.0 && self.rayleigh_stiffness_damping >= 0.0) {
            return Err(FemError::InvalidMaterial("damping coefficients must be >= 0".into()));
        }
        Ok(())
    }

    pub fn undamped(self) -> Self {
        Self {
            rayleigh_mass_damping: 0.0,
            rayleigh_stiffness_damping: 0.0,
            ..self
        }
    }
}

/// `(lambda, mu)` from Young's modulus and Poisson's ratio.
pub fn lame_parameters(young: f64, nu: f64) -> Result<(f64, f64), FemError> {
    if !(young > 0.0) {
        return Err(FemError::InvalidMaterial("Young's modulus must be positive".into()));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(FemError::InvalidMaterial(format!(
            "Poisson ratio {nu} outside [0, 0.5)"
        )));
    }
    let mu = young / (2.0 * (1.0 + nu));
    let lambda = young * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Ok((lambda, mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub exec: Exec,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 500,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TetRest {
    inv_dm: Mat3,
    volume: f64,
    /// Shape function gradients of the four vertices.
    grads: [Vec3; 4],
}

/// Deformable configuration of one soft body.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftBodyState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    rest_positions: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    rest: Vec<TetRest>,
    /// Last accepted rotation per tet, used when `F` degenerates.
    rotations: Vec<Mat3>,
}

impl SoftBodyState {
    pub fn new(mesh: &TetMesh) -> Self {
        let x = mesh.vertices().to_vec();
        let rest = mesh
            .tets()
            .iter()
            .map(|t| {
                let dm = Mat3::from_columns(&[x[t[1]] - x[t[0]], x[t[2]] - x[t[0]], x[t[3]] - x[t[0]]]);
                let inv_dm = dm.try_inverse().expect("validated mesh has no degenerate tets");
                let g1: Vec3 = inv_dm.row(0).transpose();
                let g2: Vec3 = inv_dm.row(1).transpose();
                let g3: Vec3 = inv_dm.row(2).transpose();
                TetRest {
                    inv_dm,
                    volume: dm.determinant() / 6.0,
                    grads: [-(g1 + g2 + g3), g1, g2, g3],
                }
            })
            .collect();
        Self {
            velocities: vec![Vec3::zeros(); x.len()],
            rest_positions: x.clone(),
            positions: x,
            tets: mesh.tets().to_vec(),
            rotations: vec![Mat3::identity(); mesh.tet_count()],
            rest,
        }
    }

    pub fn rest_positions(&self) -> &[Vec3] {
        &self.rest_positions
    }

    pub fn rest_volume(&self, tet: usize) -> f64 {
        self.rest[tet].volume
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn deformation_gradient(&self, tet: usize) -> Mat3 {
        let t = self.tets[tet];
        let x = &self.positions;
        let ds = Mat3::from_columns(&[x[t[1]] - x[t[0]], x[t[2]] - x[t[0]], x[t[3]] - x[t[0]]]);
        ds * self.rest[tet].inv_dm
    }

    fn check_finite(&self) -> Result<(), FemError> {
        if self.positions.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            if self.velocities.iter().all(|p| p.iter().all(|c| c.is_finite())) {
                return Ok(());
            }
            return Err(FemError::NonFinite("velocity"));
        }
        Err(FemError::NonFinite("position"))
    }

    /// Total linear momentum for the given vertex masses.
    pub fn momentum(&self, mass: &[f64]) -> Vec3 {
        self.velocities
            .iter()
            .zip(mass)
            .fold(Vec3::zeros(), |acc, (v, m)| acc + v * *m)
    }
}

/// Rotation factor of the polar decomposition `F = R S`, by scaled Newton
/// iteration `X <- (g X + X^-T / g) / 2`. Returns `fallback` when
/// `det(F)` is below [`POLAR_DET_FLOOR`].
pub fn polar_rotation(f: &Mat3, fallback: &Mat3) -> Mat3 {
    if !(f.determinant() >= POLAR_DET_FLOOR) {
        return *fallback;
    }
    let mut x = *f;
    for _ in 0..30 {
        let Some(inv) = x.try_inverse() else {
            return *fallback;
        };
        let inv_t = inv.transpose();
        let g = (inv.norm() / x.norm()).sqrt();
        let next = (x * g + inv_t / g) * 0.5;
        let delta = (next - x).norm();
        x = next;
        if delta < 1e-15 {
            break;
        }
    }
    // One unscaled step polishes orthogonality to round-off.
    match x.try_inverse() {
        Some(inv) => (x + inv.transpose()) * 0.5,
        None => *fallback,
    }
}

fn rotations(state: &SoftBodyState, exec: Exec) -> Vec<Mat3> {
    par::map(exec, state.tets.len(), |t| {
        polar_rotation(&state.deformation_gradient(t), &state.rotations[t])
    })
}

fn tet_forces(state: &SoftBodyState, t: usize, r: &Mat3, lambda: f64, mu: f64) -> [Vec3; 4] {
    let f = state.deformation_gradient(t);
    let rest = &state.rest[t];
    let trace = (r.transpose() * f).trace() - 3.0;
    let p = (f - r) * (2.0 * mu) + r * (lambda * trace);
    let h = p * (-rest.volume);
    [
        h * rest.grads[0],
        h * rest.grads[1],
        h * rest.grads[2],
        h * rest.grads[3],
    ]
}

fn scatter_forces(state: &SoftBodyState, per_tet: &[[Vec3; 4]]) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); state.positions.len()];
    for (t, f) in state.tets.iter().zip(per_tet) {
        for a in 0..4 {
            out[t[a]] += f[a];
        }
    }
    out
}

/// Elastic force on every vertex (N).
pub fn elastic_forces(state: &SoftBodyState, mat: &MaterialParams, exec: Exec) -> Result<Vec<Vec3>, FemError> {
    state.check_finite()?;
    let (lambda, mu) = lame_parameters(mat.young_modulus, mat.poisson_ratio)?;
    let rots = rotations(state, exec);
    let per_tet = par::map(exec, state.tets.len(), |t| tet_forces(state, t, &rots[t], lambda, mu));
    Ok(scatter_forces(state, &per_tet))
}

/// Total elastic energy (J).
pub fn elastic_energy(state: &SoftBodyState, mat: &MaterialParams, exec: Exec) -> Result<f64, FemError> {
    state.check_finite()?;
    let (lambda, mu) = lame_parameters(mat.young_modulus, mat.poisson_ratio)?;
    let rots = rotations(state, exec);
    Ok(par::sum(exec, state.tets.len(), |t| {
        let f = state.deformation_gradient(t);
        let r = &rots[t];
        let trace = (r.transpose() * f).trace() - 3.0;
        state.rest[t].volume * (mu * (f - r).norm_squared() + 0.5 * lambda * trace * trace)
    }))
}

/// Rest-frame stiffness block coupling vertices `a` and `b` of a tet.
fn rest_block(rest: &TetRest, a: usize, b: usize, lambda: f64, mu: f64) -> Mat3 {
    let (ga, gb) = (rest.grads[a], rest.grads[b]);
    (ga * gb.transpose() * lambda + Mat3::identity() * (mu * ga.dot(&gb)) + gb * ga.transpose() * mu)
        * rest.volume
}

/// `R * rest_block * R^T` from the rotated gradients `rg`.
fn rotated_block(rest: &TetRest, rg: &[Vec3; 4], a: usize, b: usize, lambda: f64, mu: f64) -> Mat3 {
    let (ga, gb) = (rg[a], rg[b]);
    (ga * gb.transpose() * lambda
        + Mat3::identity() * (mu * rest.grads[a].dot(&rest.grads[b]))
        + gb * ga.transpose() * mu)
        * rest.volume
}

/// Forces and their linearization supplied by everything outside the FEM
/// (tendons, contacts, gravity). `stiffness[i]` is `-df_i/dx_i` and
/// `damping[i]` is `-df_i/dv_i`; both per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalLoad {
    pub forces: Vec<Vec3>,
    pub stiffness: Vec<Mat3>,
    pub damping: Vec<Mat3>,
}

impl ExternalLoad {
    pub fn zeros(n: usize) -> Self {
        Self {
            forces: vec![Vec3::zeros(); n],
            stiffness: vec![Mat3::zeros(); n],
            damping: vec![Mat3::zeros(); n],
        }
    }

    pub fn from_forces(forces: Vec<Vec3>) -> Self {
        let n = forces.len();
        Self {
            forces,
            stiffness: vec![Mat3::zeros(); n],
            damping: vec![Mat3::zeros(); n],
        }
    }
}

/// Reusable per-mesh data for the implicit step.
#[derive(Debug, Clone)]
pub struct Integrator {
    matrix: BlockCsr,
    slots: Vec<[usize; 16]>,
    mass: Vec<f64>,
    last_dv: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub cg: CgStats,
}

impl Integrator {
    pub fn new(mesh: &TetMesh) -> Self {
        let (matrix, slots) = BlockCsr::from_tets(mesh.vertex_count(), mesh.tets());
        Self {
            matrix,
            slots,
            mass: mesh.vertex_mass().to_vec(),
            last_dv: vec![Vec3::zeros(); mesh.vertex_count()],
        }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Backward Euler on the linearized system
    /// `(M + dt C + dt^2 K) v' = M v + dt (f_ext + f_el)` with
    /// `C = a M + b K`, plus the external stiffness/damping terms.
    /// The state is left untouched on error.
    pub fn step(
        &mut self,
        state: &mut SoftBodyState,
        mat: &MaterialParams,
        dt: f64,
        load: &ExternalLoad,
        pinned: &[bool],
        settings: &SolverSettings,
    ) -> Result<StepStats, FemError> {
        let n = state.positions.len();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(FemError::InvalidInput(format!("time step {dt} must be positive")));
        }
        if load.forces.len() != n || load.stiffness.len() != n || load.damping.len() != n || pinned.len() != n {
            return Err(FemError::InvalidInput("per-vertex input length mismatch".into()));
        }
        if self.mass.len() != n {
            return Err(FemError::InvalidInput("mesh and state vertex counts differ".into()));
        }
        state.check_finite()?;
        if load.forces.iter().any(|f| !f.iter().all(|c| c.is_finite())) {
            return Err(FemError::NonFinite("external force"));
        }
        let exec = settings.exec;
        let (lambda, mu) = lame_parameters(mat.young_modulus, mat.poisson_ratio)?;
        let rots = rotations(state, exec);

        let per_tet = par::map(exec, state.tets.len(), |t| tet_forces(state, t, &rots[t], lambda, mu));
        let f_el = scatter_forces(state, &per_tet);

        let k_scale = dt * mat.rayleigh_stiffness_damping + dt * dt;
        let m_scale = 1.0 + dt * mat.rayleigh_mass_damping;
        let tet_blocks = |t: usize| {
            let rest = &state.rest[t];
            let rg = rest.grads.map(|g| rots[t] * g);
            let mut out = [Mat3::zeros(); 16];
            for a in 0..4 {
                for b in a..4 {
                    let k = rotated_block(rest, &rg, a, b, lambda, mu) * k_scale;
                    out[4 * a + b] = k;
                    out[4 * b + a] = k.transpose();
                }
            }
            out
        };
        self.matrix.clear();
        // Both branches add the same blocks in tet order.
        if exec.is_parallel() {
            let blocks = par::map(exec, state.tets.len(), tet_blocks);
            for (slots, tb) in self.slots.iter().zip(&blocks) {
                for (s, b) in slots.iter().zip(tb) {
                    self.matrix.blocks[*s] += b;
                }
            }
        } else {
            for (t, slots) in self.slots.iter().enumerate() {
                for (s, b) in slots.iter().zip(&tet_blocks(t)) {
                    self.matrix.blocks[*s] += b;
                }
            }
        }
        let mut rhs = vec![Vec3::zeros(); n];
        for i in 0..n {
            let d = self.matrix.diag_slot(i);
            self.matrix.blocks[d] +=
                Mat3::identity() * (m_scale * self.mass[i]) + load.damping[i] * dt + load.stiffness[i] * (dt * dt);
            rhs[i] = state.velocities[i] * self.mass[i]
                + (load.forces[i] + f_el[i] + load.damping[i] * state.velocities[i]) * dt;
        }

        let mut v_new: Vec<Vec3> = state.velocities.iter().zip(&self.last_dv).map(|(v, d)| v + d).collect();
        let cg = linalg::pcg(
            exec,
            &self.matrix,
            &rhs,
            &mut v_new,
            pinned,
            settings.tolerance,
            settings.max_iterations,
        )?;
        if v_new.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(FemError::NonFinite("velocity after solve"));
        }
        for i in 0..n {
            self.last_dv[i] = if pinned[i] { Vec3::zeros() } else { v_new[i] - state.velocities[i] };
            if pinned[i] {
                state.velocities[i] = Vec3::zeros();
            } else {
                state.velocities[i] = v_new[i];
                state.positions[i] += v_new[i] * dt;
            }
        }
        state.rotations = rots;
        Ok(StepStats { cg })
    }

    /// Assembled `K` (no damping or mass terms) at the current state; for tests.
    pub fn stiffness_matrix(&mut self, state: &SoftBodyState, mat: &MaterialParams) -> Result<BlockCsr, FemError> {
        let (lambda, mu) = lame_parameters(mat.young_modulus, mat.poisson_ratio)?;
        let rots = rotations(state, Exec::Sequential);
        self.matrix.clear();
        for (t, slots) in self.slots.iter().enumerate() {
            let r = rots[t];
            for a in 0..4 {
                for b in 0..4 {
                    self.matrix.blocks[slots[4 * a + b]] +=
                        r * rest_block(&state.rest[t], a, b, lambda, mu) * r.transpose();
                }
            }
        }
        Ok(self.matrix.clone())
    }
}

/// One implicit step with a freshly built [`Integrator`].
pub fn step_implicit(
    state: &mut SoftBodyState,
    mesh: &TetMesh,
    mat: &MaterialParams,
    dt: f64,
    external_forces: &[Vec3],
    pinned: &[bool],
    settings: &SolverSettings,
) -> Result<StepStats, FemError> {
    let load = ExternalLoad::from_forces(external_forces.to_vec());
    Integrator::new(mesh).step(state, mat, dt, &load, pinned, settings)
}
