//! Versioned JSON documents for maps, trajectories, scenarios and results.
//!
//! Every document carries `schema` and `version` fields. Maps store only
//! λ, mode, bounds and the node list; features, frames and the index are
//! recomputed on load. Units are meters and µT.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GravityPose, Vec3};
use crate::magmap::{build_feature_index, Bounds3, LatticeMode, MagneticMap};
use crate::maght::{InputTrajectory, RelocOutcome};
use crate::synth::Scenario;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Schema(String),
}

pub trait Document: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema: &'a str,
    version: u32,
    data: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    schema: String,
    version: u32,
    data: serde_json::Value,
}

pub fn to_json<T: Document>(doc: &T) -> String {
    let env = EnvelopeOut { schema: T::SCHEMA, version: SCHEMA_VERSION, data: doc };
    let mut s = serde_json::to_string_pretty(&env).expect("documents serialize");
    s.push('\n');
    s
}

pub fn from_json<T: Document>(text: &str) -> Result<T, IoError> {
    let env: EnvelopeIn = serde_json::from_str(text).map_err(|e| IoError::Schema(format!("not a {} document: {e}", T::SCHEMA)))?;
    if env.schema != T::SCHEMA {
        return Err(IoError::Schema(format!("expected schema '{}', found '{}'", T::SCHEMA, env.schema)));
    }
    if env.version != SCHEMA_VERSION {
        return Err(IoError::Schema(format!("unsupported {} version {} (expected {SCHEMA_VERSION})", T::SCHEMA, env.version)));
    }
    serde_json::from_value(env.data).map_err(|e| IoError::Schema(format!("invalid {} document: {e}", T::SCHEMA)))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub fn save<T: Document>(path: &Path, doc: &T) -> Result<(), IoError> {
    write_text(path, &to_json(doc))
}

pub fn load<T: Document>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    from_json(&text).map_err(|e| match e {
        IoError::Schema(m) => IoError::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub position: Vec3,
    pub m: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub lambda: f64,
    pub mode: LatticeMode,
    pub bounds: Bounds3,
    pub nodes: Vec<NodeRecord>,
}

impl Document for MapDocument {
    const SCHEMA: &'static str = "maght.map";
}

impl MapDocument {
    pub fn from_map(map: &MagneticMap) -> Self {
        MapDocument {
            lambda: map.lattice_step,
            mode: map.mode,
            bounds: map.bounds,
            nodes: map.nodes.iter().map(|n| NodeRecord { position: n.position, m: n.m }).collect(),
        }
    }

    /// Rebuilds features, frames, the feature index and, for complete planar
    /// maps, the interpolation grid.
    pub fn into_map(self, horizontal_floor: f64) -> Result<MagneticMap, IoError> {
        let map = MagneticMap::from_nodes(
            self.nodes.into_iter().map(|n| (n.position, n.m)),
            self.lambda,
            self.mode,
            self.bounds,
            horizontal_floor,
        )
        .with_planar_grid();
        build_feature_index(map).map_err(|e| IoError::Schema(format!("unusable map: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDocument {
    pub trajectory: InputTrajectory,
    /// Ground-truth `T_wa`, when known.
    pub truth: Option<GravityPose>,
}

impl Document for TrajectoryDocument {
    const SCHEMA: &'static str = "maght.trajectory";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub outcome: RelocOutcome,
    /// `T_wa` for the original input frame.
    pub pose: Option<GravityPose>,
    pub barycenter: Vec3,
    pub samples_used: usize,
    /// ms; present only when timing was requested.
    pub wall_ms: Option<f64>,
}

impl Document for ResultDocument {
    const SCHEMA: &'static str = "maght.result";
}

impl Document for Scenario {
    const SCHEMA: &'static str = "maght.scenario";
}
