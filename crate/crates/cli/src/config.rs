//! TOML run configuration and parameter flags.
//!
//! Effective values resolve as command-line flag, then config file, then
//! built-in default.

use std::path::Path;

use clap::Args;
use maght_core::maght::MaghtParams;
use maght_core::pfilter::PfParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub maght: MaghtParams,
    pub pf: PfParams,
    pub scenario: ScenarioDefaults,
}

/// Scenario generation settings that may come from the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioDefaults {
    pub kind: Option<String>,
    pub bounds: Option<String>,
    pub cases: Option<usize>,
    pub traj_len: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub mag_noise: Option<f64>,
    pub drift: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "MagHT parameters")]
pub struct MaghtArgs {
    /// Lattice and input downsampling step λ, m [default: 0.5]
    #[arg(long, value_name = "M")]
    pub lambda: Option<f64>,
    /// DBSCAN radius ε in the embedded vote space, m [default: 0.5]
    #[arg(long, value_name = "M")]
    pub epsilon: Option<f64>,
    /// DBSCAN minimum neighborhood size, votes [default: 8]
    #[arg(long, value_name = "N")]
    pub minpts: Option<usize>,
    /// Yaw scaling r of the vote embedding, m [default: 5]
    #[arg(long, value_name = "M")]
    pub yaw_scale: Option<f64>,
    /// Cap on the feature matching radius δ, µT [default: 3]
    #[arg(long, value_name = "UT")]
    pub delta_max: Option<f64>,
    /// Weight α of the local feature gradient in δ, dimensionless [default: 0.67]
    #[arg(long, value_name = "A")]
    pub alpha: Option<f64>,
    /// Moving-average window over raw samples, samples [default: 5]
    #[arg(long, value_name = "N")]
    pub smoothing_window: Option<usize>,
    /// Minimum horizontal field for a valid magnetic frame, µT [default: 0.05]
    #[arg(long, value_name = "UT")]
    pub horizontal_floor: Option<f64>,
}

impl MaghtArgs {
    pub fn resolve(&self, base: MaghtParams) -> Result<MaghtParams, CliError> {
        let p = MaghtParams {
            lambda: self.lambda.unwrap_or(base.lambda),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            minpts: self.minpts.unwrap_or(base.minpts),
            yaw_scale: self.yaw_scale.unwrap_or(base.yaw_scale),
            delta_max: self.delta_max.unwrap_or(base.delta_max),
            alpha: self.alpha.unwrap_or(base.alpha),
            smoothing_window: self.smoothing_window.unwrap_or(base.smoothing_window),
            horizontal_floor: self.horizontal_floor.unwrap_or(base.horizontal_floor),
        };
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Particle filter parameters")]
pub struct PfArgs {
    /// Position process noise, m per √m of odometry [default: 0.05]
    #[arg(long, value_name = "M")]
    pub pf_sigma_trans: Option<f64>,
    /// Yaw process noise per step, rad [default: 0.01]
    #[arg(long, value_name = "RAD")]
    pub pf_sigma_rot: Option<f64>,
    /// Measurement likelihood σ per feature component, µT [default: 2]
    #[arg(long, value_name = "UT")]
    pub pf_sigma_meas: Option<f64>,
    /// Resample below this ESS fraction of N, dimensionless [default: 0.5]
    #[arg(long, value_name = "F")]
    pub pf_ess_threshold: Option<f64>,
    /// Convergence when x and y standard deviations fall below this, m [default: 1]
    #[arg(long, value_name = "M")]
    pub pf_convergence_std: Option<f64>,
    /// Initial yaw jitter σ, rad [default: 0.1]
    #[arg(long, value_name = "RAD")]
    pub pf_init_yaw_jitter: Option<f64>,
}

impl PfArgs {
    pub fn resolve(&self, base: PfParams) -> Result<PfParams, CliError> {
        let p = PfParams {
            sigma_trans: self.pf_sigma_trans.unwrap_or(base.sigma_trans),
            sigma_rot: self.pf_sigma_rot.unwrap_or(base.sigma_rot),
            sigma_meas: self.pf_sigma_meas.unwrap_or(base.sigma_meas),
            ess_threshold: self.pf_ess_threshold.unwrap_or(base.ess_threshold),
            convergence_std: self.pf_convergence_std.unwrap_or(base.convergence_std),
            init_yaw_jitter: self.pf_init_yaw_jitter.unwrap_or(base.init_yaw_jitter),
            ..base
        };
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }
}

/// Parses `WxD`, e.g. `40x30`, in meters.
pub fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (w, d) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxD, e.g. 40x30, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<f64>().ok().filter(|x| x.is_finite() && *x > 0.0);
    match (parse(w), parse(d)) {
        (Some(w), Some(d)) => Ok((w, d)),
        _ => Err(format!("bounds must be two positive numbers, got '{s}'")),
    }
}
