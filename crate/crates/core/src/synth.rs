//! Synthetic worlds, trajectories and relocalization cases with ground truth.
//!
//! Every generator takes an explicit seed and uses ChaCha8, so a scenario is
//! reproduced bit for bit from its configuration.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{invert, GravityPose, Vec3};
use crate::magmap::{
    build_feature_index, dipole_field, discretize, Bounds3, CoverageMask, Dipole, DipoleWorld, LatticeMode,
    MagneticMap, MapError, EXCLUSION_RADIUS,
};
use crate::maght::{InputTrajectory, MagneticSample};

/// Walking speed used to stamp synthetic samples, m/s.
const WALK_SPEED: f64 = 1.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("trajectory point {index} enters a dipole exclusion zone")]
    ExclusionZone { index: usize },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("could not place {what} after {tries} attempts")]
    Placement { what: &'static str, tries: usize },
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Parameters of a dipole world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    /// Region where dipoles may be placed.
    pub bounds: Bounds3,
    /// Walkable volumes; dipoles keep `min_clearance` away from them.
    pub keep_out: Vec<Bounds3>,
    pub n_dipoles: usize,
    /// Standard deviation of each moment component.
    pub moment_scale: f64,
    pub min_clearance: f64,
    pub earth_field: Vec3,
}

impl WorldSpec {
    /// Single-storey world: walking plane at z = 0, dipoles in the floor slab
    /// and the ceiling.
    pub fn floor(width: f64, depth: f64) -> Self {
        WorldSpec {
            bounds: Bounds3::new(Vec3::new(0.0, 0.0, -2.0), Vec3::new(width, depth, 3.0)),
            keep_out: vec![Bounds3::planar(0.0, 0.0, width, depth, 0.0)],
            n_dipoles: (width * depth / 1.5).round() as usize,
            moment_scale: 30.0,
            min_clearance: 1.5,
            earth_field: Vec3::new(20.0, 0.0, -43.0),
        }
    }
}

pub fn gen_world(seed: u64, spec: &WorldSpec) -> Result<DipoleWorld, SynthError> {
    let mut rng = rng_for(seed, 1);
    let clearance = spec.min_clearance.max(EXCLUSION_RADIUS);
    let mut dipoles = Vec::with_capacity(spec.n_dipoles);
    let (lo, hi) = (spec.bounds.min, spec.bounds.max);
    let mut tries = 0;
    while dipoles.len() < spec.n_dipoles {
        tries += 1;
        if tries > 1000 * (spec.n_dipoles + 1) {
            return Err(SynthError::Placement { what: "dipoles", tries });
        }
        let p = Vec3::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y), rng.gen_range(lo.z..=hi.z));
        if spec.keep_out.iter().any(|b| b.distance_to(p) < clearance) {
            continue;
        }
        let moment = Vec3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ) * spec.moment_scale;
        dipoles.push(Dipole { position: p, moment });
    }
    Ok(DipoleWorld { earth_field: spec.earth_field, dipoles, bounds: spec.bounds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    OpenWalk,
    CorridorWalk,
    Staircase,
}

/// Samples a polyline at constant arc-length spacing. Headings follow the
/// segment directions.
pub fn polyline_path(vertices: &[Vec3], step: f64, length: f64) -> Vec<GravityPose> {
    let n = (length / step).round() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..n {
        let s = (k as f64 * step).min(length);
        while seg + 2 < vertices.len() && s > seg_start + (vertices[seg + 1] - vertices[seg]).norm() {
            seg_start += (vertices[seg + 1] - vertices[seg]).norm();
            seg += 1;
        }
        let (a, b) = (vertices[seg], vertices[seg + 1]);
        let d = b - a;
        let len = d.norm();
        let u = if len > 0.0 { (s - seg_start) / len } else { 0.0 };
        let p = a + d * u;
        out.push(GravityPose::from_parts(p, d.y.atan2(d.x)));
    }
    out
}

/// Poses of a synthetic walk of `length` meters sampled every `step` meters,
/// kept inside `region` (shrunk by a 0.5 m margin).
pub fn gen_trajectory(seed: u64, kind: TrajectoryKind, length: f64, step: f64, region: &Bounds3) -> Vec<GravityPose> {
    let mut rng = rng_for(seed, 2);
    let margin = 0.5;
    let inner = Bounds3::new(
        region.min + Vec3::new(margin, margin, 0.0),
        region.max - Vec3::new(margin, margin, 0.0),
    );
    match kind {
        TrajectoryKind::OpenWalk => open_walk(&mut rng, length, step, &inner),
        TrajectoryKind::CorridorWalk => corridor_walk(&mut rng, length, step, &inner),
        TrajectoryKind::Staircase => staircase(&mut rng, length, step, region),
    }
}

fn random_point(rng: &mut ChaCha8Rng, b: &Bounds3) -> Vec3 {
    Vec3::new(rng.gen_range(b.min.x..=b.max.x), rng.gen_range(b.min.y..=b.max.y), b.min.z)
}

fn open_walk(rng: &mut ChaCha8Rng, length: f64, step: f64, inner: &Bounds3) -> Vec<GravityPose> {
    let n = (length / step).round() as usize + 1;
    let turn = Normal::new(0.0, 0.35 * step.sqrt()).expect("finite sigma");
    let center = (inner.min + inner.max) * 0.5;
    let mut p = random_point(rng, inner);
    let mut heading: f64 = rng.gen_range(-PI..PI);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            heading += turn.sample(rng);
            let mut next = p + Vec3::new(heading.cos(), heading.sin(), 0.0) * step;
            if !inner.contains_xy(next.x, next.y) {
                let to_center = center - p;
                heading = to_center.y.atan2(to_center.x) + rng.gen_range(-0.6..0.6);
                next = p + Vec3::new(heading.cos(), heading.sin(), 0.0) * step;
            }
            p = next;
        }
        out.push(GravityPose::from_parts(p, heading));
    }
    out
}

fn unit_axis(d: usize) -> Vec3 {
    [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, -1.0, 0.0)][d % 4]
}

fn corridor_walk(rng: &mut ChaCha8Rng, length: f64, step: f64, inner: &Bounds3) -> Vec<GravityPose> {
    let mut p = random_point(rng, inner);
    let mut vertices = vec![p];
    let mut total = 0.0;
    let mut dir = rng.gen_range(0..4usize);
    while total < length {
        // The final segment overshoots; the sampler truncates at `length`.
        let mut seg = rng.gen_range(2.0..6.0f64);
        // Straight on or a right-angle turn; reversing only when boxed in.
        let mut options = [dir, (dir + 1) % 4, (dir + 3) % 4];
        if rng.gen_bool(0.7) {
            options.rotate_left(1);
            if rng.gen_bool(0.5) {
                options.swap(0, 1);
            }
        }
        let next = loop {
            let hit = options.iter().copied().find(|&d| {
                let q = p + unit_axis(d) * seg;
                inner.contains_xy(q.x, q.y)
            });
            if let Some(d) = hit {
                break d;
            }
            if seg <= 1.0 {
                break (dir + 2) % 4;
            }
            seg = (seg * 0.5).max(1.0);
        };
        p += unit_axis(next) * seg;
        dir = next;
        vertices.push(p);
        total += seg;
    }
    polyline_path(&vertices, step, length)
}

/// Helical flights around the region center with flat landings.
fn staircase(rng: &mut ChaCha8Rng, length: f64, step: f64, region: &Bounds3) -> Vec<GravityPose> {
    let n = (length / step).round() as usize + 1;
    let center = (region.min + region.max) * 0.5;
    let radius = 0.3 * (region.extent().x.min(region.extent().y));
    let (flight, landing, slope) = (4.0, 1.0, 0.45);
    let height = region.extent().z;
    // Start low enough that the whole climb fits.
    let climb = slope * length * flight / (flight + landing);
    let z0 = region.min.z + rng.gen_range(0.0..(height - climb).max(0.0));
    let theta0 = rng.gen_range(-PI..PI);
    let mut out = Vec::with_capacity(n);
    let mut z = z0;
    for k in 0..n {
        let s = k as f64 * step;
        if k > 0 && s % (flight + landing) < flight {
            z += slope * step;
        }
        let theta = theta0 + s / radius;
        let p = Vec3::new(center.x + radius * theta.cos(), center.y + radius * theta.sin(), z.min(region.max.z));
        out.push(GravityPose::from_parts(p, theta + FRAC_PI_2));
    }
    out
}

/// Odometry error model: random walks in position and yaw driven by
/// distance travelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DriftModel {
    /// Position noise per axis, m per √m travelled.
    pub sigma_trans: f64,
    /// Yaw noise, rad per √m travelled.
    pub sigma_yaw: f64,
    /// Optional velocity-bias random walk, m/m per √m.
    pub bias_walk: Option<f64>,
}

impl DriftModel {
    pub fn none() -> Self {
        DriftModel::default()
    }

    pub fn is_valid(&self) -> bool {
        self.sigma_trans >= 0.0 && self.sigma_yaw >= 0.0 && self.bias_walk.is_none_or(|b| b >= 0.0)
    }

    /// Applies the drift to a sequence of exact positions, anchored at the
    /// first one.
    pub fn apply(&self, exact: &[Vec3], rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(exact.len());
        let Some(&first) = exact.first() else { return out };
        out.push(first);
        let (mut yaw, mut bias, mut p) = (0.0, Vec3::ZERO, first);
        for w in exact.windows(2) {
            let delta = w[1] - w[0];
            let ds = delta.norm();
            let sd = ds.sqrt();
            let g = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
            yaw += self.sigma_yaw * sd * g(rng);
            let noise = Vec3::new(g(rng), g(rng), g(rng)) * (self.sigma_trans * sd);
            if let Some(b) = self.bias_walk {
                bias += Vec3::new(g(rng), g(rng), g(rng)) * (b * sd);
            }
            p = p + delta.rotate_z(yaw) + noise + bias * ds;
            out.push(p);
        }
        out
    }
}

/// One relocalization case with ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub id: usize,
    /// Free-form label (e.g. trajectory family).
    pub tag: String,
    pub traj_len: f64,
    pub seed: u64,
    /// `T_wa`
    pub truth: GravityPose,
    pub in_map: bool,
    /// Ground-truth poses in `w`.
    pub path: Vec<GravityPose>,
    pub input: InputTrajectory,
}

impl Case {
    /// Final sensor pose in `w` with the yaw of frame `a`.
    pub fn final_pose_w(&self) -> GravityPose {
        let last = self.path.last().map_or(Vec3::ZERO, |p| p.translation());
        GravityPose::from_parts(last, self.truth.psi)
    }
}

/// Builds the measured input for a ground-truth path: field samples with
/// noise, rotated into `a`, and drifted odometry positions.
pub fn make_case(
    world: &DipoleWorld,
    truth: &GravityPose,
    path: &[GravityPose],
    mag_noise: f64,
    drift: &DriftModel,
    seed: u64,
) -> Result<InputTrajectory, SynthError> {
    if path.is_empty() {
        return Err(SynthError::EmptyTrajectory);
    }
    let mut rng = rng_for(seed, 3);
    let a_from_w = invert(truth);
    let mut fields = Vec::with_capacity(path.len());
    for (index, pose) in path.iter().enumerate() {
        let m = dipole_field(world, pose.translation()).map_err(|e| match e {
            MapError::SingularEvaluation { .. } => SynthError::ExclusionZone { index },
            other => SynthError::Map(other),
        })?;
        let noisy = if mag_noise > 0.0 {
            let n = Normal::new(0.0, mag_noise).expect("finite sigma");
            m + Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng))
        } else {
            m
        };
        fields.push(a_from_w.rotate_vector(noisy));
    }
    let exact: Vec<Vec3> = path.iter().map(|p| a_from_w.transform_point(p.translation())).collect();
    let positions = drift.apply(&exact, &mut rng);
    let mut s_acc = 0.0;
    let samples = positions
        .iter()
        .zip(fields)
        .enumerate()
        .map(|(k, (&position, field))| {
            if k > 0 {
                s_acc += (path[k].translation() - path[k - 1].translation()).norm();
            }
            MagneticSample { t: s_acc / WALK_SPEED, position, field }
        })
        .collect();
    Ok(InputTrajectory { frame: "a".to_string(), samples })
}

/// Random `T_wa` for an odometry frame that starts at the first pose of
/// `path` with an arbitrary yaw.
pub fn random_truth(rng: &mut ChaCha8Rng, path: &[GravityPose]) -> GravityPose {
    let origin = path.first().map_or(Vec3::ZERO, |p| p.translation());
    GravityPose::from_parts(origin, rng.gen_range(-PI..PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Fully mapped open floor.
    Open,
    /// Map restricted to a corridor band; aligned and crossing walks.
    Corridor,
    /// Map covers one half of the floor; every case walks in the other half.
    Unmapped,
    /// Volumetric stairwell map with helical walks.
    Staircase,
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "open" => Ok(ScenarioKind::Open),
            "corridor" => Ok(ScenarioKind::Corridor),
            "unmapped" => Ok(ScenarioKind::Unmapped),
            "staircase" => Ok(ScenarioKind::Staircase),
            other => Err(format!("unknown scenario kind '{other}' (open|corridor|unmapped|staircase)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub seed: u64,
    /// Horizontal size of the mapped area, m.
    pub width: f64,
    pub depth: f64,
    pub cases_per_length: usize,
    pub lengths: Vec<f64>,
    /// Raw sample spacing, m.
    pub step: f64,
    /// µT per component.
    pub mag_noise: f64,
    pub drift: DriftModel,
    pub lambda: f64,
    /// Dipole count override; default scales with floor area.
    pub n_dipoles: Option<usize>,
    pub moment_scale: Option<f64>,
    /// Minimum dipole distance from walkable space override, m.
    pub min_clearance: Option<f64>,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        let (width, depth) = match kind {
            ScenarioKind::Staircase => (20.0, 20.0),
            _ => (40.0, 30.0),
        };
        ScenarioConfig {
            kind,
            seed,
            width,
            depth,
            cases_per_length: 20,
            lengths: vec![12.0],
            step: 0.1,
            mag_noise: 0.5,
            drift: DriftModel { sigma_trans: 0.05, sigma_yaw: 0.0015, bias_walk: None },
            lambda: 0.5,
            n_dipoles: None,
            moment_scale: None,
            min_clearance: None,
        }
    }
}

/// How to rebuild the map from the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub lambda: f64,
    pub mode: LatticeMode,
    pub bounds: Bounds3,
    pub mask: Option<CoverageMask>,
}

impl MapSpec {
    pub fn build(&self, world: &DipoleWorld, horizontal_floor: f64) -> Result<MagneticMap, MapError> {
        let mut map = discretize(world, &self.bounds, self.lambda, self.mode, horizontal_floor)?;
        if let Some(mask) = &self.mask {
            map = map.restrict(mask);
        }
        build_feature_index(map)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub world_spec: WorldSpec,
    pub world: DipoleWorld,
    pub map: MapSpec,
    pub cases: Vec<Case>,
}

impl Scenario {
    /// Same ground-truth paths with freshly simulated measurements.
    pub fn resimulate(&self, mag_noise: f64, drift: &DriftModel) -> Result<Scenario, SynthError> {
        let mut out = self.clone();
        out.config.mag_noise = mag_noise;
        out.config.drift = *drift;
        for case in &mut out.cases {
            case.input = make_case(&out.world, &case.truth, &case.path, mag_noise, drift, case.seed)?;
        }
        Ok(out)
    }
}

struct Layout {
    world_spec: WorldSpec,
    map: MapSpec,
    /// Region new trajectories start in, and their family.
    families: Vec<(String, Bounds3, bool)>,
}

fn layout(cfg: &ScenarioConfig) -> Layout {
    let (w, d) = (cfg.width, cfg.depth);
    let floor_map = |x1: f64| MapSpec {
        lambda: cfg.lambda,
        mode: LatticeMode::Planar,
        bounds: Bounds3::planar(0.0, 0.0, x1, d, 0.0),
        mask: None,
    };
    let mut layout = match cfg.kind {
        ScenarioKind::Open => Layout {
            world_spec: WorldSpec::floor(w, d),
            map: floor_map(w),
            families: vec![("open".into(), Bounds3::planar(0.0, 0.0, w, d, 0.0), true)],
        },
        ScenarioKind::Unmapped => {
            let spec = WorldSpec::floor(2.0 * w, d);
            Layout {
                world_spec: spec,
                map: floor_map(w),
                families: vec![("unmapped".into(), Bounds3::planar(w + 1.0, 0.0, 2.0 * w, d, 0.0), false)],
            }
        }
        ScenarioKind::Corridor => {
            let band = Bounds3::planar(0.0, 0.25 * d, w, 0.75 * d, 0.0);
            let mut map = floor_map(w);
            map.mask = Some(CoverageMask { rects: vec![[band.min.x, band.min.y, band.max.x, band.max.y]] });
            Layout {
                world_spec: WorldSpec::floor(w, d),
                map,
                families: vec![("aligned".into(), band, true), ("crossing".into(), band, true)],
            }
        }
        ScenarioKind::Staircase => {
            let well = Bounds3::new(Vec3::new(0.4 * w, 0.4 * d, 0.0), Vec3::new(0.6 * w, 0.6 * d, 6.0));
            let mut spec = WorldSpec::floor(w, d);
            spec.bounds = Bounds3::new(Vec3::new(0.0, 0.0, -2.0), Vec3::new(w, d, 8.0));
            spec.keep_out = vec![well];
            // Same volumetric density as the floor layout.
            spec.n_dipoles = (w * d * 10.0 / 3.0).round() as usize;
            let map_bounds = Bounds3::new(well.min - Vec3::new(0.5, 0.5, 0.0), well.max + Vec3::new(0.5, 0.5, 0.0));
            Layout {
                world_spec: spec,
                map: MapSpec { lambda: cfg.lambda, mode: LatticeMode::Volumetric, bounds: map_bounds, mask: None },
                families: vec![("stairs".into(), well, true)],
            }
        }
    };
    if let Some(n) = cfg.n_dipoles {
        layout.world_spec.n_dipoles = n;
    }
    if let Some(m) = cfg.moment_scale {
        layout.world_spec.moment_scale = m;
    }
    if let Some(c) = cfg.min_clearance {
        layout.world_spec.min_clearance = c;
    }
    layout
}

/// Straight walk inside `band` with heading within ±15° of the x-axis.
fn aligned_path(rng: &mut ChaCha8Rng, band: &Bounds3, length: f64, step: f64) -> Vec<GravityPose> {
    loop {
        let heading = rng.gen_range(-0.26..0.26) + if rng.gen_bool(0.5) { 0.0 } else { PI };
        let start = random_point(rng, &shrink(band, 1.0));
        let end = start + Vec3::new(heading.cos(), heading.sin(), 0.0) * length;
        if shrink(band, 1.0).contains_xy(end.x, end.y) {
            return polyline_path(&[start, end], step, length);
        }
    }
}

/// Walk across `band` with every segment at 60–90° to the x-axis: a single
/// straight traverse when the band is wide enough, otherwise a zigzag that
/// bounces between the band edges.
fn crossing_path(rng: &mut ChaCha8Rng, band: &Bounds3, length: f64, step: f64) -> Vec<GravityPose> {
    let inner = shrink(band, 1.0);
    if length * 60f64.to_radians().sin() <= inner.extent().y {
        loop {
            let angle: f64 = rng.gen_range(60f64.to_radians()..=90f64.to_radians());
            let (dx, dy) = (length * angle.cos(), length * angle.sin());
            if dy > inner.extent().y {
                continue;
            }
            let xdir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let ydir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let start = random_point(rng, &inner);
            let end = start + Vec3::new(xdir * dx, ydir * dy, 0.0);
            if inner.contains_xy(end.x, end.y) {
                return polyline_path(&[start, end], step, length);
            }
        }
    }
    loop {
        let mut p = random_point(rng, &inner);
        let mut vertices = vec![p];
        let mut total = 0.0;
        let mut up = rng.gen_bool(0.5);
        let xdir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        while total < length {
            let angle: f64 = rng.gen_range(60f64.to_radians()..=90f64.to_radians());
            let target_y = if up { inner.max.y } else { inner.min.y };
            let dy = target_y - p.y;
            let seg = (dy.abs() / angle.sin()).max(step);
            let q = p + Vec3::new(xdir * seg * angle.cos(), dy, 0.0);
            total += seg;
            vertices.push(q);
            p = q;
            up = !up;
        }
        if vertices.iter().all(|v| inner.contains_xy(v.x, v.y)) {
            return polyline_path(&vertices, step, length);
        }
    }
}

fn shrink(b: &Bounds3, m: f64) -> Bounds3 {
    Bounds3::new(b.min + Vec3::new(m, m, 0.0), b.max - Vec3::new(m, m, 0.0))
}

/// Generates a complete scenario.
pub fn gen_scenario(cfg: &ScenarioConfig) -> Result<Scenario, SynthError> {
    let lay = layout(cfg);
    let world = gen_world(cfg.seed, &lay.world_spec)?;
    let mut rng = rng_for(cfg.seed, 4);
    let mut cases = Vec::new();
    for &length in &cfg.lengths {
        for k in 0..cfg.cases_per_length {
            let (tag, region, in_map) = &lay.families[k % lay.families.len()];
            let case_seed: u64 = rng.gen();
            let mut path_rng = rng_for(case_seed, 5);
            let path = match (cfg.kind, tag.as_str()) {
                (ScenarioKind::Corridor, "aligned") => aligned_path(&mut path_rng, region, length, cfg.step),
                (ScenarioKind::Corridor, _) => crossing_path(&mut path_rng, region, length, cfg.step),
                (ScenarioKind::Staircase, _) => {
                    gen_trajectory(case_seed, TrajectoryKind::Staircase, length, cfg.step, region)
                }
                _ => gen_trajectory(case_seed, TrajectoryKind::OpenWalk, length, cfg.step, region),
            };
            let truth = random_truth(&mut rng, &path);
            let input = make_case(&world, &truth, &path, cfg.mag_noise, &cfg.drift, case_seed)?;
            cases.push(Case {
                id: cases.len(),
                tag: tag.clone(),
                traj_len: length,
                seed: case_seed,
                truth,
                in_map: *in_map,
                path,
                input,
            });
        }
    }
    Ok(Scenario { config: cfg.clone(), world_spec: lay.world_spec, world, map: lay.map, cases })
}
