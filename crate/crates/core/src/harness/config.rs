//! Scene configuration file and the assembled, immutable scene.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use crate::bite::{mouth_frame, BiteError, BiteTransferParams, MouthFrame};
use crate::contact::SpoonParams;
use crate::fem::{FemError, Integrator, MaterialParams, SolverSettings};
use crate::geometry::{distribute_mass, load_tet_mesh, make_head_proxy, HeadProxySpec, MeshError, MouthAnnotation, TetMesh};
use crate::par::Exec;
use crate::skeleton::{JawParams, MandibleJoint, ShellParams, Skeleton, SkeletonError};
use crate::skinning::{build_rig, Rig, RigError, TendonDefaults};

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error("head mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("rig: {0}")]
    Rig(#[from] RigError),
    #[error("jaw: {0}")]
    Skeleton(#[from] SkeletonError),
    #[error("trajectory: {0}")]
    Bite(#[from] BiteError),
    #[error("material: {0}")]
    Fem(#[from] FemError),
}

/// Head geometry: a tet mesh file with a mouth annotation, or the
/// procedural proxy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    /// Tet mesh in the text format read by `validate`; relative paths are
    /// resolved against the config file's directory.
    pub mesh: Option<PathBuf>,
    /// Required with `mesh`; ignored for the proxy.
    pub mouth: Option<MouthAnnotation>,
    pub proxy: HeadProxySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            dt: 2e-3,
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            exec: s.exec,
        }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            exec: self.exec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Soft-body mass in kg.
    pub total_mass: f64,
    /// Gravity (-z, 9.81 m/s^2) on the soft body.
    pub gravity: bool,
    pub head: HeadConfig,
    pub material: MaterialParams,
    pub skull: ShellParams,
    pub jaw: JawParams,
    pub tendon: TendonDefaults,
    pub spoon: SpoonParams,
    pub solver: SolverConfig,
    pub trajectory: BiteTransferParams,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            total_mass: 5.0,
            gravity: false,
            head: HeadConfig::default(),
            material: MaterialParams::default(),
            skull: ShellParams::default(),
            jaw: JawParams::default(),
            tendon: TendonDefaults::default(),
            spoon: SpoonParams::default(),
            solver: SolverConfig::default(),
            trajectory: BiteTransferParams::default(),
        }
    }
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self, SceneError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; a relative mesh path becomes relative to it.
    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(mesh), Some(dir)) = (&cfg.head.mesh, path.parent()) {
            if mesh.is_relative() {
                cfg.head.mesh = Some(dir.join(mesh));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let invalid = |m: &str| Err(SceneError::Invalid(m.to_string()));
        if !(self.total_mass > 0.0 && self.total_mass.is_finite()) {
            return invalid("total_mass must be positive");
        }
        if !(self.solver.dt > 0.0 && self.solver.dt.is_finite()) {
            return invalid("solver.dt must be positive");
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_iterations == 0 {
            return invalid("solver tolerance and max_iterations must be positive");
        }
        let s = &self.spoon;
        let lengths = [s.bowl_length, s.bowl_radius, s.handle_length, s.handle_radius];
        if lengths.iter().any(|x| !(*x > 0.0 && x.is_finite())) || s.bowl_length < 2.0 * s.bowl_radius {
            return invalid("spoon dimensions must be positive with bowl_length >= 2 * bowl_radius");
        }
        if !(s.contact_stiffness >= 0.0 && s.contact_damping >= 0.0 && s.tangential_damping >= 0.0) {
            return invalid("spoon contact gains must be >= 0");
        }
        let t = &self.tendon;
        if !(t.stiffness >= 0.0 && t.damping >= 0.0 && t.slack_fraction >= 0.0) {
            return invalid("tendon gains and slack must be >= 0");
        }
        self.material.validate()?;
        self.trajectory.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Everything a run needs, built once and shared read-only across runs.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub mesh: TetMesh,
    pub frame: MouthFrame,
    /// Skeleton at the start of every run (jaw closed).
    pub skeleton: Skeleton,
    pub rig: Rig,
    pub integrator: Integrator,
    /// Sorted surface vertex indices checked for spoon contact.
    pub surface_vertices: Vec<usize>,
}

impl Scene {
    pub fn build(config: SceneConfig) -> Result<Self, SceneError> {
        config.validate()?;
        let (mesh, annotation) = match &config.head.mesh {
            Some(path) => {
                let file = fs::File::open(path).map_err(|source| SceneError::Io {
                    path: path.clone(),
                    source,
                })?;
                let mesh = load_tet_mesh(BufReader::new(file))?;
                (mesh, config.head.mouth)
            }
            None => {
                let spec = &config.head.proxy;
                (make_head_proxy(spec)?, Some(spec.mouth_annotation()))
            }
        };
        let mesh = distribute_mass(mesh, config.total_mass);
        let frame = mouth_frame(annotation.as_ref())?;
        let joint = MandibleJoint::from_params(&config.jaw)?;
        let (upper, mandible) = config.skull.surfaces();
        let skeleton = Skeleton::new(Isometry3::identity(), upper, mandible, joint);
        let rig = build_rig(&skeleton, &mesh, &config.tendon)?;
        let integrator = Integrator::new(&mesh);
        let surface_vertices = mesh.surface_vertices();
        Ok(Self {
            config,
            mesh,
            frame,
            skeleton,
            rig,
            integrator,
            surface_vertices,
        })
    }
}
