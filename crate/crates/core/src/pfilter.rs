//! Bootstrap particle filter over `(x, y, ψ)` used as the relocalization
//! baseline.
//!
//! The input carries positions in an odometry frame `a` but no attitude, so
//! each particle's `ψ` is the yaw of `a` in the map frame and odometry
//! increments are expressed in `a`-aligned axes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{compose, invert, wrap_angle, GravityPose, Vec3, DEFAULT_HORIZONTAL_FLOOR};
use crate::magmap::{extract_feature, MagneticMap};
use crate::maght::InputTrajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PfError {
    #[error("first measurement has horizontal magnitude {magnitude} µT below the floor")]
    DegenerateFirstMeasure { magnitude: f64 },
    #[error("map has no interpolation grid")]
    NotInterpolable,
    #[error("input trajectory is empty")]
    EmptyInput,
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfParams {
    pub n_particles: usize,
    /// Position noise per axis, m per √m of odometry translation.
    pub sigma_trans: f64,
    /// Yaw noise added at every step, rad.
    pub sigma_rot: f64,
    /// Likelihood σ on each feature component, µT.
    pub sigma_meas: f64,
    /// Resample when ESS drops below this fraction of N.
    pub ess_threshold: f64,
    /// Converged when the weighted x and y standard deviations are below this, m.
    pub convergence_std: f64,
    /// Gaussian jitter on the initial yaw, rad.
    pub init_yaw_jitter: f64,
    pub horizontal_floor: f64,
}

impl Default for PfParams {
    fn default() -> Self {
        PfParams {
            n_particles: 1600,
            sigma_trans: 0.05,
            sigma_rot: 0.01,
            sigma_meas: 2.0,
            ess_threshold: 0.5,
            convergence_std: 1.0,
            init_yaw_jitter: 0.1,
            horizontal_floor: DEFAULT_HORIZONTAL_FLOOR,
        }
    }
}

impl PfParams {
    pub fn with_particles(n: usize) -> Self {
        PfParams { n_particles: n, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), PfError> {
        let bad = |m: &str| Err(PfError::InvalidParams(m.to_string()));
        if self.n_particles == 0 {
            return bad("n_particles must be positive");
        }
        if !(self.sigma_trans > 0.0 && self.sigma_rot > 0.0 && self.sigma_meas > 0.0) {
            return bad("noise sigmas must be positive");
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return bad("ess_threshold must be in (0, 1]");
        }
        if !(self.convergence_std > 0.0) || !(self.init_yaw_jitter >= 0.0) || !(self.horizontal_floor >= 0.0) {
            return bad("convergence_std, init_yaw_jitter and horizontal_floor must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub weight: f64,
}

/// Planar pose increment expressed in the previous body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdomDelta {
    pub dx: f64,
    pub dy: f64,
    pub dpsi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub ess: f64,
    pub resampled: bool,
    /// Every weight vanished and the set was reset to uniform.
    pub weights_reset: bool,
    pub std_x: f64,
    pub std_y: f64,
}

/// Particle set with its own random stream.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    pub particles: Vec<Particle>,
    pub params: PfParams,
    /// Height of the map plane the particles live on.
    pub z: f64,
    rng: ChaCha8Rng,
    log_w: Vec<f64>,
    scratch: Vec<Particle>,
}

/// Draws particles uniformly over the map bounds and aligns each yaw with the
/// map's horizontal field direction at its position.
pub fn init(map: &MagneticMap, first_measure: Vec3, params: &PfParams, seed: u64) -> Result<ParticleFilter, PfError> {
    params.validate()?;
    let magnitude = first_measure.horizontal_norm();
    if magnitude < params.horizontal_floor {
        return Err(PfError::DegenerateFirstMeasure { magnitude });
    }
    if map.grid().is_none() {
        return Err(PfError::NotInterpolable);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi, z) = (map.bounds.min, map.bounds.max, map.bounds.min.z);
    let measured_azimuth = first_measure.y.atan2(first_measure.x);
    let n = params.n_particles;
    let w = 1.0 / n as f64;
    let mut particles = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.gen_range(lo.x..=hi.x);
        let y = rng.gen_range(lo.y..=hi.y);
        let jitter = params.init_yaw_jitter * rng.sample::<f64, _>(StandardNormal);
        let psi = match map.interpolate(Vec3::new(x, y, z)) {
            Ok(m) if m.horizontal_norm() >= params.horizontal_floor => {
                wrap_angle(m.y.atan2(m.x) - measured_azimuth + jitter)
            }
            _ => rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        };
        particles.push(Particle { x, y, psi, weight: w });
    }
    Ok(ParticleFilter { particles, params: *params, z, rng, log_w: Vec::with_capacity(n), scratch: Vec::with_capacity(n) })
}

/// Effective sample size `1 / Σ wᵢ²`.
pub fn ess(particles: &[Particle]) -> f64 {
    1.0 / particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
}

fn weighted_stats(particles: &[Particle]) -> (f64, f64, f64, f64, f64) {
    let (mut mx, mut my, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for p in particles {
        mx += p.weight * p.x;
        my += p.weight * p.y;
        s += p.weight * p.psi.sin();
        c += p.weight * p.psi.cos();
    }
    let (mut vx, mut vy) = (0.0, 0.0);
    for p in particles {
        vx += p.weight * (p.x - mx) * (p.x - mx);
        vy += p.weight * (p.y - my) * (p.y - my);
    }
    (mx, my, s.atan2(c), vx.sqrt(), vy.sqrt())
}

/// Weighted mean pose when both weighted position standard deviations are
/// below the threshold. The yaw is a circular mean.
pub fn converged(particles: &[Particle], params: &PfParams) -> Option<(f64, f64, f64)> {
    if particles.is_empty() {
        return None;
    }
    let (mx, my, psi, sx, sy) = weighted_stats(particles);
    (sx < params.convergence_std && sy < params.convergence_std).then_some((mx, my, psi))
}

/// Stratified resampling: one uniform draw per stratum `[i/N, (i+1)/N)`.
pub fn stratified_resample(particles: &[Particle], rng: &mut ChaCha8Rng, out: &mut Vec<Particle>) {
    let n = particles.len();
    out.clear();
    let w = 1.0 / n as f64;
    let mut cumulative = particles[0].weight;
    let mut j = 0;
    for i in 0..n {
        let u = (i as f64 + rng.gen::<f64>()) * w;
        while cumulative < u && j + 1 < n {
            j += 1;
            cumulative += particles[j].weight;
        }
        out.push(Particle { weight: w, ..particles[j] });
    }
}

impl ParticleFilter {
    /// Propagates every particle by `delta` plus process noise, reweights by
    /// the feature likelihood of `measure` and resamples when the ESS is low.
    pub fn step(&mut self, delta: &OdomDelta, measure: Vec3, map: &MagneticMap) -> StepDiagnostics {
        let dist = (delta.dx * delta.dx + delta.dy * delta.dy).sqrt();
        let st = self.params.sigma_trans * dist.sqrt();
        let sr = self.params.sigma_rot;
        for p in &mut self.particles {
            let (s, c) = p.psi.sin_cos();
            let nx: f64 = self.rng.sample(StandardNormal);
            let ny: f64 = self.rng.sample(StandardNormal);
            let nr: f64 = self.rng.sample(StandardNormal);
            p.x += c * delta.dx - s * delta.dy + st * nx;
            p.y += s * delta.dx + c * delta.dy + st * ny;
            p.psi = wrap_angle(p.psi + delta.dpsi + sr * nr);
        }
        self.update(measure, map)
    }

    /// Measurement update and optional resampling without motion.
    pub fn update(&mut self, measure: Vec3, map: &MagneticMap) -> StepDiagnostics {
        let f = extract_feature(measure);
        let inv_2s2 = 1.0 / (2.0 * self.params.sigma_meas * self.params.sigma_meas);
        self.log_w.clear();
        let mut max = f64::NEG_INFINITY;
        for p in &self.particles {
            let lw = match map.interpolate(Vec3::new(p.x, p.y, self.z)) {
                Ok(m) if p.weight > 0.0 => {
                    let g = extract_feature(m);
                    let (dh, dv) = (g.h - f.h, g.v - f.v);
                    p.weight.ln() - (dh * dh + dv * dv) * inv_2s2
                }
                _ => f64::NEG_INFINITY,
            };
            max = max.max(lw);
            self.log_w.push(lw);
        }
        let weights_reset = !max.is_finite();
        if weights_reset {
            let w = 1.0 / self.particles.len() as f64;
            self.particles.iter_mut().for_each(|p| p.weight = w);
        } else {
            let mut total = 0.0;
            for (p, lw) in self.particles.iter_mut().zip(&self.log_w) {
                p.weight = (lw - max).exp();
                total += p.weight;
            }
            self.particles.iter_mut().for_each(|p| p.weight /= total);
        }
        let ess_now = ess(&self.particles);
        let resampled = ess_now < self.params.ess_threshold * self.particles.len() as f64;
        if resampled {
            stratified_resample(&self.particles, &mut self.rng, &mut self.scratch);
            std::mem::swap(&mut self.particles, &mut self.scratch);
        }
        let (_, _, _, std_x, std_y) = weighted_stats(&self.particles);
        StepDiagnostics { ess: ess_now, resampled, weights_reset, std_x, std_y }
    }

    pub fn converged(&self) -> Option<(f64, f64, f64)> {
        converged(&self.particles, &self.params)
    }
}

/// Outcome of filtering a whole input trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfRun {
    /// Converged at the last measurement.
    pub converged: bool,
    /// Estimated last sensor pose in `w` (yaw of frame `a`).
    pub last_pose: Option<GravityPose>,
    /// The same estimate expressed as `T_wa`.
    pub t_wa: Option<GravityPose>,
    pub first_converged_step: Option<usize>,
    pub trace: Vec<StepDiagnostics>,
}

impl PfRun {
    pub fn weight_resets(&self) -> usize {
        self.trace.iter().filter(|d| d.weights_reset).count()
    }
}

/// Runs the filter over every raw sample of `input`.
pub fn run_filter(input: &InputTrajectory, map: &MagneticMap, params: &PfParams, seed: u64) -> Result<PfRun, PfError> {
    let first = input.samples.first().ok_or(PfError::EmptyInput)?;
    let mut pf = init(map, first.field, params, seed)?;
    let mut trace = Vec::with_capacity(input.samples.len());
    trace.push(pf.update(first.field, map));
    let mut first_converged_step = pf.converged().map(|_| 0);
    for (k, w) in input.samples.windows(2).enumerate() {
        let d = w[1].position - w[0].position;
        trace.push(pf.step(&OdomDelta { dx: d.x, dy: d.y, dpsi: 0.0 }, w[1].field, map));
        if first_converged_step.is_none() && pf.converged().is_some() {
            first_converged_step = Some(k + 1);
        }
    }
    let last = input.samples.last().expect("non-empty").position;
    let (last_pose, t_wa) = match pf.converged() {
        Some((x, y, psi)) => {
            let est = GravityPose::new(x, y, pf.z, psi);
            (Some(est), Some(compose(&est, &invert(&GravityPose::from_parts(last, 0.0)))))
        }
        None => (None, None),
    };
    Ok(PfRun { converged: last_pose.is_some(), last_pose, t_wa, first_converged_step, trace })
}
