//! TOML run configuration. Unknown keys are rejected everywhere so typos fail
//! loudly instead of silently falling back to defaults.

use std::path::{Path, PathBuf};

use bonefrac::fe::{DirichletBc, TractionBc};
use bonefrac::material::MaterialParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub units: Units,
    pub mesh: MeshSource,
    #[serde(default)]
    pub material: MaterialParams,
    #[serde(default)]
    pub density: DensitySource,
    /// Explicit Dirichlet conditions; when absent they are derived from the
    /// mesh's `DIRICHLET_*` groups.
    #[serde(default)]
    pub dirichlet: Option<Vec<DirichletBc>>,
    #[serde(default)]
    pub traction: Vec<TractionBc>,
    #[serde(default)]
    pub orders: Orders,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub time: Time,
    #[serde(default)]
    pub adapt: Adapt,
    #[serde(default)]
    pub fracture: Fracture,
    #[serde(default)]
    pub seed: u64,
}

/// Declared unit system; computations are unit-agnostic, the labels are
/// echoed into manifests and summaries.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub stress: String,
    pub length: String,
    pub density: String,
    pub time: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSource {
    /// Gmsh 2.2 ASCII file, relative to the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Built-in generator instead of a file.
    #[serde(default)]
    pub generate: Option<Generator>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Centre-cracked plate used by the K_I benchmark.
    Plate,
    /// Coarser variant of the plate.
    PlateCoarse,
    /// Penny-shaped crack in a cylinder.
    Penny,
    /// Hollow long-bone shaft.
    Tube,
    /// Hollow shaft with a transverse crack.
    TubeCracked,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "source", rename_all = "kebab-case")]
pub enum DensitySource {
    /// Uniform density; defaults to the material's reference density.
    #[default]
    Uniform,
    Value { value: f64 },
    /// CSV `x,y,z,value`, optionally grey values mapped by a calibration CSV.
    Samples {
        path: PathBuf,
        #[serde(default)]
        calibration: Option<PathBuf>,
        #[serde(default)]
        mwls: Mwls,
    },
    /// Voxel text file.
    Voxel {
        path: PathBuf,
        #[serde(default)]
        calibration: Option<PathBuf>,
        #[serde(default)]
        mwls: Mwls,
    },
    /// Nodal density CSV written by a previous `adapt` run.
    Snapshot {
        path: PathBuf,
        #[serde(default)]
        mwls: Mwls,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mwls {
    /// Support radius; when absent, three times the mean sample spacing.
    pub radius: Option<f64>,
    pub order: usize,
}

impl Default for Mwls {
    fn default() -> Self {
        Mwls { radius: None, order: 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Orders {
    pub pg: usize,
    pub pl: usize,
    pub singular: bool,
}

impl Default for Orders {
    fn default() -> Self {
        Orders { pg: 2, pl: 0, singular: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Solver {
    fn default() -> Self {
        Solver { tol: 1e-8, max_iter: 25 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Time {
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub grow: f64,
    pub t_end: f64,
    pub max_steps: usize,
    pub equilibrium_tol: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for Time {
    fn default() -> Self {
        Time {
            dt0: 0.5,
            dt_min: 0.05,
            dt_max: 50.0,
            grow: 1.5,
            t_end: 700.0,
            max_steps: 10_000,
            equilibrium_tol: 1e-8,
            snapshot_times: vec![0.0, 10.0, 40.0, 100.0, 700.0],
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Adapt {
    /// Prescribed normal mass influx on the boundary.
    pub influx: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fracture {
    pub crack_group: String,
    pub load_factor: f64,
}

impl Default for Fracture {
    fn default() -> Self {
        Fracture {
            crack_group: bonefrac::mesh::CRACK_SURFACE.into(),
            load_factor: 1.0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.mesh.path {
            fix(p);
        }
        match &mut self.density {
            DensitySource::Samples { path, calibration, .. } | DensitySource::Voxel { path, calibration, .. } => {
                fix(path);
                if let Some(c) = calibration {
                    fix(c);
                }
            }
            DensitySource::Snapshot { path, .. } => fix(path),
            DensitySource::Uniform | DensitySource::Value { .. } => {}
        }
    }

    /// Structural checks that need no file access beyond existence.
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.mesh.path, &self.mesh.generate) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("mesh: give either `path` or `generate`, not both".into()))
            }
            (None, None) => return Err(CliError::Config("mesh: `path` or `generate` is required".into())),
            (Some(p), None) if !p.exists() => {
                return Err(CliError::Input(format!("mesh not found: {}", p.display())))
            }
            _ => {}
        }
        let files: Vec<&PathBuf> = match &self.density {
            DensitySource::Samples { path, calibration, .. } | DensitySource::Voxel { path, calibration, .. } => {
                std::iter::once(path).chain(calibration.iter()).collect()
            }
            DensitySource::Snapshot { path, .. } => vec![path],
            _ => vec![],
        };
        for f in files {
            if !f.exists() {
                return Err(CliError::Input(format!("density file not found: {}", f.display())));
            }
        }
        if self.orders.pg < 1 {
            return Err(CliError::Config("orders.pg must be at least 1".into()));
        }
        Ok(())
    }
}
