//! Magnetic field models, lattice discretization and the map feature index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{magnetic_frame, GravityPose, Vec3};
use crate::spatial_index::KdTree;

/// Radius (m) around a dipole inside which the field is not evaluated.
pub const EXCLUSION_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("point ({x:.3}, {y:.3}, {z:.3}) lies within the exclusion radius of dipole {dipole}")]
    SingularEvaluation { dipole: usize, x: f64, y: f64, z: f64 },
    #[error("point ({x:.3}, {y:.3}, {z:.3}) is outside the sampled field")]
    OutOfBounds { x: f64, y: f64, z: f64 },
    #[error("bounds are empty or degenerate")]
    EmptyBounds,
    #[error("lattice step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("no map node has a usable horizontal field")]
    NoValidNodes,
    #[error("map has no regular grid to interpolate")]
    NotInterpolable,
    #[error("grid of {expected} samples given {actual} values")]
    GridSize { expected: usize, actual: usize },
}

/// Yaw-invariant magnetic feature `(‖m_xy‖, m_z)` in µT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagFeature {
    pub h: f64,
    pub v: f64,
}

impl MagFeature {
    #[inline]
    pub fn as_array(&self) -> [f64; 2] {
        [self.h, self.v]
    }

    #[inline]
    pub fn distance(&self, other: &MagFeature) -> f64 {
        (self.h - other.h).hypot(self.v - other.v)
    }
}

#[inline]
pub fn extract_feature(m: Vec3) -> MagFeature {
    MagFeature { h: m.horizontal_norm(), v: m.z }
}

/// Axis-aligned box, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds3 {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bounds3 {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Bounds3 { min, max }
    }

    /// Flat rectangle at height `z`.
    pub fn planar(x0: f64, y0: f64, x1: f64, y1: f64, z: f64) -> Self {
        Bounds3 { min: Vec3::new(x0, y0, z), max: Vec3::new(x1, y1, z) }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.contains_with_margin(p, 0.0)
    }

    /// Containment with every face pushed outward by `margin`.
    pub fn contains_with_margin(&self, p: Vec3, margin: f64) -> bool {
        p.x >= self.min.x - margin
            && p.x <= self.max.x + margin
            && p.y >= self.min.y - margin
            && p.y <= self.max.y + margin
            && p.z >= self.min.z - margin
            && p.z <= self.max.z + margin
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.min.x && x <= self.max.x && y >= self.min.y && y <= self.max.y
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn is_valid(&self) -> bool {
        let e = self.extent();
        self.min.is_finite() && self.max.is_finite() && e.x >= 0.0 && e.y >= 0.0 && e.z >= 0.0
    }

    /// Distance from `p` to the box (zero inside).
    pub fn distance_to(&self, p: Vec3) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        let dz = (self.min.z - p.z).max(0.0).max(p.z - self.max.z);
        Vec3::new(dx, dy, dz).norm()
    }
}

/// Anything that yields a magnetic vector (µT) at a point.
pub trait MagneticField {
    fn field_at(&self, p: Vec3) -> Result<Vec3, MapError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dipole {
    pub position: Vec3,
    pub moment: Vec3,
}

/// Earth field plus a superposition of point dipoles. Moments are scaled so
/// that `(3 r̂(m·r̂) − m)/‖r‖³` is directly in µT with `r` in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleWorld {
    pub earth_field: Vec3,
    pub dipoles: Vec<Dipole>,
    pub bounds: Bounds3,
}

impl DipoleWorld {
    pub fn uniform(earth_field: Vec3, bounds: Bounds3) -> Self {
        DipoleWorld { earth_field, dipoles: Vec::new(), bounds }
    }

    /// Distance from `p` to the closest dipole, infinite when there are none.
    pub fn clearance(&self, p: Vec3) -> f64 {
        self.dipoles.iter().map(|d| (p - d.position).norm()).fold(f64::INFINITY, f64::min)
    }
}

pub fn dipole_field(world: &DipoleWorld, p: Vec3) -> Result<Vec3, MapError> {
    let mut b = world.earth_field;
    for (i, d) in world.dipoles.iter().enumerate() {
        let r = p - d.position;
        let dist2 = r.norm_squared();
        if dist2 < EXCLUSION_RADIUS * EXCLUSION_RADIUS {
            return Err(MapError::SingularEvaluation { dipole: i, x: p.x, y: p.y, z: p.z });
        }
        let dist = dist2.sqrt();
        let inv3 = 1.0 / (dist2 * dist);
        let rhat = r / dist;
        b += (rhat * (3.0 * d.moment.dot(rhat)) - d.moment) * inv3;
    }
    Ok(b)
}

impl MagneticField for DipoleWorld {
    fn field_at(&self, p: Vec3) -> Result<Vec3, MapError> {
        dipole_field(self, p)
    }
}

/// Field sampled on a regular grid, queried by trilinear interpolation. An
/// axis with a single sample is treated as constant along that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    origin: Vec3,
    step: Vec3,
    dims: [usize; 3],
    // x fastest, then y, then z.
    values: Vec<Vec3>,
}

impl SampledField {
    pub fn new(origin: Vec3, step: Vec3, dims: [usize; 3], values: Vec<Vec3>) -> Result<Self, MapError> {
        let expected = dims.iter().product::<usize>();
        if expected == 0 {
            return Err(MapError::EmptyBounds);
        }
        if values.len() != expected {
            return Err(MapError::GridSize { expected, actual: values.len() });
        }
        for (s, n) in [(step.x, dims[0]), (step.y, dims[1]), (step.z, dims[2])] {
            if n > 1 && !(s > 0.0) {
                return Err(MapError::InvalidStep(s));
            }
        }
        Ok(SampledField { origin, step, dims, values })
    }

    /// Samples `field` on a grid of spacing `step` covering `bounds`.
    pub fn sample<F: MagneticField + ?Sized>(field: &F, bounds: &Bounds3, step: f64) -> Result<Self, MapError> {
        if !(step > 0.0) {
            return Err(MapError::InvalidStep(step));
        }
        if !bounds.is_valid() {
            return Err(MapError::EmptyBounds);
        }
        let e = bounds.extent();
        let dims = [axis_count(e.x, step), axis_count(e.y, step), axis_count(e.z, step)];
        let mut values = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = bounds.min + Vec3::new(i as f64 * step, j as f64 * step, k as f64 * step);
                    values.push(field.field_at(p)?);
                }
            }
        }
        Self::new(bounds.min, Vec3::new(step, step, step), dims, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.values[(k * self.dims[1] + j) * self.dims[0] + i]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64 * self.step.x, j as f64 * self.step.y, k as f64 * self.step.z)
    }
}

/// Cell index and fractional offset along one axis.
#[inline]
fn axis_cell(coord: f64, origin: f64, step: f64, n: usize) -> Option<(usize, f64)> {
    if n == 1 {
        return Some((0, 0.0));
    }
    let u = (coord - origin) / step;
    let last = (n - 1) as f64;
    // Small tolerance so points on the far face are accepted.
    if !(u >= -1e-9 && u <= last + 1e-9) {
        return None;
    }
    let u = u.clamp(0.0, last);
    let i = (u.floor() as usize).min(n - 2);
    Some((i, u - i as f64))
}

/// Trilinear interpolation of the sampled field at `p`.
pub fn interpolate(field: &SampledField, p: Vec3) -> Result<Vec3, MapError> {
    let oob = || MapError::OutOfBounds { x: p.x, y: p.y, z: p.z };
    let (i, fx) = axis_cell(p.x, field.origin.x, field.step.x, field.dims[0]).ok_or_else(oob)?;
    let (j, fy) = axis_cell(p.y, field.origin.y, field.step.y, field.dims[1]).ok_or_else(oob)?;
    let (k, fz) = axis_cell(p.z, field.origin.z, field.step.z, field.dims[2]).ok_or_else(oob)?;
    let (i1, j1, k1) = (
        (i + 1).min(field.dims[0] - 1),
        (j + 1).min(field.dims[1] - 1),
        (k + 1).min(field.dims[2] - 1),
    );
    let lerp = |a: Vec3, b: Vec3, t: f64| a + (b - a) * t;
    let c00 = lerp(field.node(i, j, k), field.node(i1, j, k), fx);
    let c10 = lerp(field.node(i, j1, k), field.node(i1, j1, k), fx);
    let c01 = lerp(field.node(i, j, k1), field.node(i1, j, k1), fx);
    let c11 = lerp(field.node(i, j1, k1), field.node(i1, j1, k1), fx);
    Ok(lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz))
}

impl MagneticField for SampledField {
    fn field_at(&self, p: Vec3) -> Result<Vec3, MapError> {
        interpolate(self, p)
    }
}

#[inline]
fn axis_count(extent: f64, step: f64) -> usize {
    (extent / step + 1e-9).floor() as usize + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeMode {
    /// Square grid of step λ at `bounds.min.z`.
    Planar,
    /// Cubic λ-grid whose columns with odd `i + j` are lifted by λ/2
    /// (body-centered orthorhombic, parameters `(λ√2, λ√2, λ)`).
    Volumetric,
}

/// Union of horizontal rectangles restricting which lattice nodes are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CoverageMask {
    pub rects: Vec<[f64; 4]>,
}

impl CoverageMask {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.rects.iter().any(|r| x >= r[0] && x <= r[2] && y >= r[1] && y <= r[3])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapNode {
    pub position: Vec3,
    pub m: Vec3,
    pub feature: MagFeature,
    /// `T_w,h` of the node; `None` when the horizontal field is degenerate.
    pub frame: Option<GravityPose>,
}

impl MapNode {
    pub fn new(position: Vec3, m: Vec3, floor: f64) -> Self {
        MapNode { position, m, feature: extract_feature(m), frame: magnetic_frame(position, m, floor).ok() }
    }
}

/// Discrete magnetic map with its precomputed feature index.
#[derive(Debug, Clone)]
pub struct MagneticMap {
    pub nodes: Vec<MapNode>,
    pub lattice_step: f64,
    pub mode: LatticeMode,
    pub bounds: Bounds3,
    pub horizontal_floor: f64,
    index: Option<FeatureIndex>,
    grid: Option<SampledField>,
}

#[derive(Debug, Clone)]
struct FeatureIndex {
    tree: KdTree<2>,
    // Tree id -> node id.
    node_ids: Vec<usize>,
    frames: Vec<GravityPose>,
}

impl MagneticMap {
    /// Assembles a map from explicit nodes. Features and frames are derived
    /// here; the index is not built.
    pub fn from_nodes(
        positions_and_fields: impl IntoIterator<Item = (Vec3, Vec3)>,
        lattice_step: f64,
        mode: LatticeMode,
        bounds: Bounds3,
        horizontal_floor: f64,
    ) -> Self {
        let nodes = positions_and_fields.into_iter().map(|(p, m)| MapNode::new(p, m, horizontal_floor)).collect();
        MagneticMap { nodes, lattice_step, mode, bounds, horizontal_floor, index: None, grid: None }
    }

    pub fn is_indexed(&self) -> bool {
        self.index.is_some()
    }

    pub fn indexed_len(&self) -> usize {
        self.index.as_ref().map_or(0, |i| i.node_ids.len())
    }

    /// Calls `visit(node_id, T_w,h)` for every indexed node whose feature lies
    /// within `radius` of `feature`, in ascending node order.
    pub fn for_each_match<F: FnMut(usize, &GravityPose)>(&self, feature: &MagFeature, radius: f64, scratch: &mut Vec<usize>, mut visit: F) {
        let Some(index) = &self.index else { return };
        scratch.clear();
        index.tree.range_query_into(&feature.as_array(), radius, scratch);
        scratch.sort_unstable();
        for &t in scratch.iter() {
            visit(index.node_ids[t], &index.frames[t]);
        }
    }

    /// Node ids within `radius` of `feature` in the feature plane.
    pub fn match_feature(&self, feature: &MagFeature, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_match(feature, radius, &mut Vec::new(), |id, _| out.push(id));
        out
    }

    /// Keeps only nodes whose horizontal position lies in `mask`. Drops the
    /// index and the interpolation grid.
    pub fn restrict(mut self, mask: &CoverageMask) -> Self {
        self.nodes.retain(|n| mask.contains(n.position.x, n.position.y));
        self.index = None;
        self.grid = None;
        self
    }

    /// Continuous view of the map for full planar maps.
    pub fn grid(&self) -> Option<&SampledField> {
        self.grid.as_ref()
    }

    /// Restores the interpolation grid of a complete planar map whose nodes
    /// are in lattice order. Other maps are returned unchanged.
    pub fn with_planar_grid(mut self) -> Self {
        if self.mode != LatticeMode::Planar || self.grid.is_some() || !(self.lattice_step > 0.0) {
            return self;
        }
        let e = self.bounds.extent();
        let (nx, ny) = (axis_count(e.x, self.lattice_step), axis_count(e.y, self.lattice_step));
        if self.nodes.len() != nx * ny || self.nodes.first().map(|n| n.position) != Some(self.bounds.min) {
            return self;
        }
        let step = Vec3::new(self.lattice_step, self.lattice_step, self.lattice_step);
        let values = self.nodes.iter().map(|n| n.m).collect();
        self.grid = SampledField::new(self.bounds.min, step, [nx, ny, 1], values).ok();
        self
    }

    /// Map field at an arbitrary point, interpolated from the lattice.
    pub fn interpolate(&self, p: Vec3) -> Result<Vec3, MapError> {
        interpolate(self.grid.as_ref().ok_or(MapError::NotInterpolable)?, p)
    }
}

/// Discretizes `field` over `bounds` with step `lambda`.
pub fn discretize<F: MagneticField + ?Sized>(
    field: &F,
    bounds: &Bounds3,
    lambda: f64,
    mode: LatticeMode,
    horizontal_floor: f64,
) -> Result<MagneticMap, MapError> {
    if !(lambda > 0.0) {
        return Err(MapError::InvalidStep(lambda));
    }
    let e = bounds.extent();
    if !bounds.is_valid() || e.x <= 0.0 || e.y <= 0.0 || (mode == LatticeMode::Volumetric && e.z <= 0.0) {
        return Err(MapError::EmptyBounds);
    }
    let (nx, ny) = (axis_count(e.x, lambda), axis_count(e.y, lambda));
    match mode {
        LatticeMode::Planar => {
            let grid = SampledField::sample(field, &Bounds3::planar(bounds.min.x, bounds.min.y, bounds.max.x, bounds.max.y, bounds.min.z), lambda)?;
            let mut nodes = Vec::with_capacity(nx * ny);
            for j in 0..ny {
                for i in 0..nx {
                    nodes.push(MapNode::new(grid.node_position(i, j, 0), grid.node(i, j, 0), horizontal_floor));
                }
            }
            Ok(MagneticMap { nodes, lattice_step: lambda, mode, bounds: *bounds, horizontal_floor, index: None, grid: Some(grid) })
        }
        LatticeMode::Volumetric => {
            let nz = axis_count(e.z, lambda);
            let mut nodes = Vec::with_capacity(nx * ny * nz);
            for j in 0..ny {
                for i in 0..nx {
                    let lift = if (i + j) % 2 == 1 { 0.5 * lambda } else { 0.0 };
                    for k in 0..nz {
                        let p = bounds.min + Vec3::new(i as f64 * lambda, j as f64 * lambda, k as f64 * lambda + lift);
                        nodes.push(MapNode::new(p, field.field_at(p)?, horizontal_floor));
                    }
                }
            }
            Ok(MagneticMap { nodes, lattice_step: lambda, mode, bounds: *bounds, horizontal_floor, index: None, grid: None })
        }
    }
}

/// Builds the 2-D feature index over all non-degenerate nodes.
pub fn build_feature_index(mut map: MagneticMap) -> Result<MagneticMap, MapError> {
    let mut points = Vec::new();
    let mut node_ids = Vec::new();
    let mut frames = Vec::new();
    for (id, node) in map.nodes.iter().enumerate() {
        if let Some(frame) = node.frame {
            points.push(node.feature.as_array());
            node_ids.push(id);
            frames.push(frame);
        }
    }
    let tree = KdTree::build(&points).map_err(|_| MapError::NoValidNodes)?;
    map.index = Some(FeatureIndex { tree, node_ids, frames });
    Ok(map)
}
