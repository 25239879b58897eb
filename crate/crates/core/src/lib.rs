//! Magnetic place recognition by generalized Hough transform.
//!
//! A short trajectory of magnetometer readings, positioned by odometry in an
//! arbitrary gravity frame, is located inside a prior magnetic map. Every
//! measurement is matched to map nodes with similar yaw-invariant features,
//! each match votes for a 4-DoF transform, and the densest vote cluster gives
//! the answer.
//!
//! Alongside the algorithm ([`maght`]) the crate ships a synthetic world
//! generator ([`synth`]), a particle-filter baseline ([`pfilter`]) and an
//! evaluation harness ([`eval`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dbscan;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod magmap;
pub mod maght;
pub mod pfilter;
pub mod spatial_index;
pub mod synth;

pub use geometry::{compose, embed, invert, magnetic_frame, vote_distance, wrap_angle, GravityPose, Vec3};
pub use magmap::{Bounds3, DipoleWorld, LatticeMode, MagFeature, MagneticField, MagneticMap};
pub use maght::{relocalize, InputTrajectory, MaghtParams, MagneticSample, RelocOutcome, RelocResult};
pub use eval::{run_experiment, score, CaseOutcome, EvalReport, Method, Score, Summary};
pub use io::{Document, IoError, MapDocument, ResultDocument, TrajectoryDocument};
pub use pfilter::{run_filter, PfParams, PfRun};
pub use synth::{gen_scenario, Case, DriftModel, Scenario, ScenarioConfig, ScenarioKind};
