//! Relocalization pipeline: preprocessing, adaptive feature matching, pose
//! voting, vote clustering and centroid estimation.
//!
//! A short trajectory of magnetic measurements, expressed in an arbitrary
//! gravity frame `a`, is matched against the map in the yaw-invariant feature
//! plane. Each match superimposes the magnetic frame of the measurement onto
//! the magnetic frame of the map node, producing one candidate `T_wa`. Votes
//! are embedded in R⁵, clustered with DBSCAN, and the largest cluster's
//! centroid is the estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbscan::dbscan;
use crate::geometry::{compose, embed, invert, magnetic_frame, GravityPose, Vec3, DEFAULT_HORIZONTAL_FLOOR};
use crate::magmap::{extract_feature, MagFeature, MagneticMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaghtError {
    #[error("trajectory has {kept} usable samples after preprocessing, need at least 2")]
    TooShort { kept: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("map feature index has not been built")]
    MapNotIndexed,
}

/// Algorithm parameters. Defaults are the values used on every dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaghtParams {
    /// Sampling step λ (m), shared by the map lattice and input downsampling.
    pub lambda: f64,
    /// DBSCAN radius ε (m) in the embedded vote space.
    pub epsilon: f64,
    pub minpts: usize,
    /// Yaw scaling r (m).
    pub yaw_scale: f64,
    /// Cap on the matching radius (µT).
    pub delta_max: f64,
    pub alpha: f64,
    /// Centered moving-average window, in raw samples.
    pub smoothing_window: usize,
    /// µT
    pub horizontal_floor: f64,
}

impl Default for MaghtParams {
    fn default() -> Self {
        MaghtParams {
            lambda: 0.5,
            epsilon: 0.5,
            minpts: 8,
            yaw_scale: 5.0,
            delta_max: 3.0,
            alpha: 0.67,
            smoothing_window: 5,
            horizontal_floor: DEFAULT_HORIZONTAL_FLOOR,
        }
    }
}

impl MaghtParams {
    pub fn validate(&self) -> Result<(), MaghtError> {
        let bad = |what: &str| Err(MaghtError::InvalidParams(what.to_string()));
        if !(self.lambda > 0.0) {
            return bad("lambda must be > 0");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.minpts < 1 {
            return bad("minpts must be >= 1");
        }
        if !(self.yaw_scale > 0.0) {
            return bad("yaw scale r must be > 0");
        }
        if !(self.delta_max > 0.0) {
            return bad("delta_max must be > 0");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.smoothing_window < 1 {
            return bad("smoothing window must be >= 1");
        }
        if !(self.horizontal_floor >= 0.0) {
            return bad("horizontal floor must be >= 0");
        }
        Ok(())
    }
}

/// One magnetometer reading with its odometry position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticSample {
    /// s
    pub t: f64,
    /// m, in the trajectory frame
    pub position: Vec3,
    /// µT, in the trajectory frame
    pub field: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTrajectory {
    pub frame: String,
    pub samples: Vec<MagneticSample>,
}

/// Preprocessed input: downsampled, recentered samples with their matching
/// radii (computed in acquisition order).
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    pub samples: Vec<MagneticSample>,
    pub deltas: Vec<f64>,
    /// Position of the new origin expressed in the original frame.
    pub barycenter: Vec3,
}

impl PreparedInput {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Reorders samples (and their radii) by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> PreparedInput {
        PreparedInput {
            samples: perm.iter().map(|&i| self.samples[i]).collect(),
            deltas: perm.iter().map(|&i| self.deltas[i]).collect(),
            barycenter: self.barycenter,
        }
    }
}

fn smooth(samples: &[MagneticSample], window: usize) -> Vec<Vec3> {
    let half = window / 2;
    let n = samples.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            // Even windows lean backward by one sample.
            let hi = (i + window - half).min(n);
            let sum = samples[lo..hi].iter().fold(Vec3::ZERO, |acc, s| acc + s.field);
            sum / (hi - lo) as f64
        })
        .collect()
}

/// Smoothing, spatial downsampling at step λ, and barycenter recentering.
pub fn preprocess(raw: &InputTrajectory, params: &MaghtParams) -> Result<PreparedInput, MaghtError> {
    let n = raw.samples.len();
    if n < 2 {
        return Err(MaghtError::TooShort { kept: n });
    }
    let fields = smooth(&raw.samples, params.smoothing_window.max(1));

    // Relative slack on λ for evenly spaced input.
    let threshold = params.lambda * (1.0 - 1e-9);
    let mut kept = vec![0usize];
    let mut travelled = 0.0;
    for i in 1..n {
        travelled += (raw.samples[i].position - raw.samples[i - 1].position).norm();
        if travelled >= threshold {
            kept.push(i);
            travelled = 0.0;
        }
    }
    if kept.len() < 2 {
        return Err(MaghtError::TooShort { kept: kept.len() });
    }

    let barycenter = kept.iter().fold(Vec3::ZERO, |acc, &i| acc + raw.samples[i].position) / kept.len() as f64;
    let samples: Vec<MagneticSample> = kept
        .iter()
        .map(|&i| MagneticSample { t: raw.samples[i].t, position: raw.samples[i].position - barycenter, field: fields[i] })
        .collect();
    let features: Vec<MagFeature> = samples.iter().map(|s| extract_feature(s.field)).collect();
    let deltas = (0..features.len()).map(|i| adaptive_delta(&features, i, params)).collect();
    Ok(PreparedInput { samples, deltas, barycenter })
}

/// Matching radius (µT) for sample `i`: the smaller of the scaled feature
/// steps to its neighbors, capped at `delta_max`.
pub fn adaptive_delta(features: &[MagFeature], i: usize, params: &MaghtParams) -> f64 {
    let mut delta = params.delta_max;
    if i > 0 {
        delta = delta.min(params.alpha * features[i].distance(&features[i - 1]));
    }
    if i + 1 < features.len() {
        delta = delta.min(params.alpha * features[i + 1].distance(&features[i]));
    }
    delta
}

/// All candidate `T_wa`, in sample-major, node-minor order.
pub fn cast_votes(input: &PreparedInput, map: &MagneticMap, params: &MaghtParams) -> Vec<GravityPose> {
    let mut votes = Vec::new();
    let mut scratch = Vec::new();
    for (sample, &delta) in input.samples.iter().zip(&input.deltas) {
        let Ok(frame_a) = magnetic_frame(sample.position, sample.field, params.horizontal_floor) else {
            continue;
        };
        let h_to_a = invert(&frame_a);
        map.for_each_match(&extract_feature(sample.field), delta, &mut scratch, |_, w_from_h| {
            votes.push(compose(w_from_h, &h_to_a));
        });
    }
    votes
}

/// A DBSCAN cluster of votes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Vote indices, ascending.
    pub members: Vec<usize>,
    pub core_count: usize,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Clusters votes in the embedded space. Largest first; equal sizes ordered
/// by smallest member index.
pub fn cluster_votes(votes: &[GravityPose], params: &MaghtParams) -> Vec<Cluster> {
    if votes.len() < params.minpts {
        return Vec::new();
    }
    let points: Vec<[f64; 5]> = votes.iter().map(|v| embed(v, params.yaw_scale).0).collect();
    let labels = dbscan(&points, params.epsilon, params.minpts);
    let mut clusters: Vec<Cluster> = labels
        .members()
        .into_iter()
        .map(|members| {
            let core_count = members.iter().filter(|&&i| labels.core[i]).count();
            Cluster { members, core_count }
        })
        .collect();
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a.members[0].cmp(&b.members[0])));
    clusters
}

/// Centroid of the cluster projected back to a pose: mean translation and
/// circular mean of yaw.
pub fn estimate(cluster: &Cluster, votes: &[GravityPose]) -> GravityPose {
    let n = cluster.len() as f64;
    let (mut t, mut s, mut c) = (Vec3::ZERO, 0.0, 0.0);
    for &i in &cluster.members {
        let v = &votes[i];
        t += v.translation();
        s += v.psi.sin();
        c += v.psi.cos();
    }
    GravityPose::from_parts(t / n, (s / n).atan2(c / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum RelocOutcome {
    Converged {
        /// `T_wa` for the recentered trajectory frame.
        pose: GravityPose,
        cluster_size: usize,
        total_votes: usize,
        num_clusters: usize,
        /// Sizes of all clusters, largest first.
        census: Vec<usize>,
    },
    NoConsensus {
        total_votes: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelocResult {
    pub outcome: RelocOutcome,
    /// Barycenter subtracted during preprocessing, in the original frame.
    pub barycenter: Vec3,
    pub samples_used: usize,
}

impl RelocResult {
    pub fn is_converged(&self) -> bool {
        matches!(self.outcome, RelocOutcome::Converged { .. })
    }

    /// Estimated `T_wa` for the recentered frame, if converged.
    pub fn pose(&self) -> Option<GravityPose> {
        match self.outcome {
            RelocOutcome::Converged { pose, .. } => Some(pose),
            RelocOutcome::NoConsensus { .. } => None,
        }
    }

    /// Estimated transform from the original (un-recentered) input frame.
    pub fn pose_in_input_frame(&self) -> Option<GravityPose> {
        let shift = GravityPose::from_parts(-self.barycenter, 0.0);
        self.pose().map(|p| compose(&p, &shift))
    }

    pub fn total_votes(&self) -> usize {
        match self.outcome {
            RelocOutcome::Converged { total_votes, .. } | RelocOutcome::NoConsensus { total_votes } => total_votes,
        }
    }

    pub fn cluster_size(&self) -> usize {
        match self.outcome {
            RelocOutcome::Converged { cluster_size, .. } => cluster_size,
            RelocOutcome::NoConsensus { .. } => 0,
        }
    }
}

/// Votes, clusters and estimates from an already prepared input.
pub fn relocalize_prepared(input: &PreparedInput, map: &MagneticMap, params: &MaghtParams) -> RelocOutcome {
    let mut votes = cast_votes(input, map, params);
    // Canonical vote order.
    votes.sort_unstable_by(|a, b| {
        a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z)).then(a.psi.total_cmp(&b.psi))
    });
    let clusters = cluster_votes(&votes, params);
    match clusters.first() {
        None => RelocOutcome::NoConsensus { total_votes: votes.len() },
        Some(best) => RelocOutcome::Converged {
            pose: estimate(best, &votes),
            cluster_size: best.len(),
            total_votes: votes.len(),
            num_clusters: clusters.len(),
            census: clusters.iter().map(Cluster::len).collect(),
        },
    }
}

/// Full relocalization of a raw trajectory against an indexed map.
pub fn relocalize(raw: &InputTrajectory, map: &MagneticMap, params: &MaghtParams) -> Result<RelocResult, MaghtError> {
    params.validate()?;
    if !map.is_indexed() {
        return Err(MaghtError::MapNotIndexed);
    }
    let input = preprocess(raw, params)?;
    Ok(RelocResult {
        outcome: relocalize_prepared(&input, map, params),
        barycenter: input.barycenter,
        samples_used: input.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wrap_angle;
    use crate::magmap::{build_feature_index, discretize, Bounds3, LatticeMode, MagneticField, MapError};

    fn sample(x: f64, field: Vec3) -> MagneticSample {
        MagneticSample { t: x, position: Vec3::new(x, 0.0, 0.0), field }
    }

    fn traj(samples: Vec<MagneticSample>) -> InputTrajectory {
        InputTrajectory { frame: "a".into(), samples }
    }

    #[test]
    fn default_params_are_valid() {
        let p = MaghtParams::default();
        p.validate().unwrap();
        assert_eq!((p.lambda, p.epsilon, p.minpts, p.yaw_scale, p.delta_max, p.alpha), (0.5, 0.5, 8, 5.0, 3.0, 0.67));
        assert!(MaghtParams { alpha: 1.5, ..p }.validate().is_err());
        assert!(MaghtParams { minpts: 0, ..p }.validate().is_err());
    }

    #[test]
    fn stationary_carrier_is_too_short() {
        let s: Vec<_> = (0..1000).map(|i| MagneticSample { t: i as f64, position: Vec3::new(1.0, 2.0, 0.0), field: Vec3::new(20.0, 0.0, -40.0) }).collect();
        assert_eq!(preprocess(&traj(s), &MaghtParams::default()).unwrap_err(), MaghtError::TooShort { kept: 1 });
    }

    #[test]
    fn straight_walk_downsamples_and_recenters() {
        let s: Vec<_> = (0..=120).map(|i| sample(i as f64 * 0.1, Vec3::new(20.0, 1.0, -40.0))).collect();
        let p = preprocess(&traj(s), &MaghtParams::default()).unwrap();
        assert_eq!(p.len(), 25);
        let bary = p.samples.iter().fold(Vec3::ZERO, |a, s| a + s.position) / p.len() as f64;
        assert!(bary.norm() < 1e-12);
        assert!((p.barycenter.x - 6.0).abs() < 1e-12);
        // Constant input is untouched by smoothing.
        assert!(p.samples.iter().all(|s| s.field == Vec3::new(20.0, 1.0, -40.0)));
    }

    #[test]
    fn smoothing_is_a_centered_mean() {
        let s: Vec<_> = (0..7).map(|i| sample(i as f64, Vec3::new(i as f64, 0.0, 0.0))).collect();
        let f = smooth(&s, 5);
        assert_eq!(f[3].x, 3.0);
        assert_eq!(f[0].x, 1.0); // mean of 0, 1, 2
        assert_eq!(f[6].x, 5.0); // mean of 4, 5, 6
    }

    fn feats(pairs: &[(f64, f64)]) -> Vec<MagFeature> {
        pairs.iter().map(|&(h, v)| MagFeature { h, v }).collect()
    }

    #[test]
    fn adaptive_delta_examples() {
        let p = MaghtParams::default();
        let uniform = feats(&[(20.0, -40.0); 4]);
        assert!((0..4).all(|i| adaptive_delta(&uniform, i, &p) == 0.0));

        let capped = feats(&[(20.0, -40.0), (26.0, -40.0), (32.0, -40.0)]);
        assert_eq!(adaptive_delta(&capped, 1, &p), 3.0);

        let f = feats(&[(20.0, -40.0), (21.5, -40.0), (21.5, -37.0)]);
        assert!((adaptive_delta(&f, 1, &p) - 1.005).abs() < 1e-12);
        // Endpoints drop the missing side.
        assert!((adaptive_delta(&f, 0, &p) - 1.005).abs() < 1e-12);
        assert!((adaptive_delta(&f, 2, &p) - 2.01).abs() < 1e-12);
    }

    #[test]
    fn cluster_minpts_threshold_and_ties() {
        let p = MaghtParams::default();
        assert!(cluster_votes(&vec![GravityPose::IDENTITY; 7], &p).is_empty());

        let a = GravityPose::new(1.0, 2.0, 0.0, 0.3);
        let b = GravityPose::new(20.0, -4.0, 0.0, -2.0);
        let mut votes = vec![b; 7];
        votes.extend(vec![a; 50]);
        let c = cluster_votes(&votes, &p);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 50);

        let mut votes = vec![b; 8];
        votes.extend(vec![a; 8]);
        votes.swap(0, 15);
        let c = cluster_votes(&votes, &p);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].members[0], 0);
        let e = estimate(&c[0], &votes);
        assert_eq!(e.translation(), a.translation());
        assert!((e.psi - a.psi).abs() < 1e-15);
    }

    #[test]
    fn estimate_examples() {
        let single = Cluster { members: vec![0], core_count: 1 };
        let v = GravityPose::new(1.0, -1.0, 0.5, 2.0);
        assert_eq!(estimate(&single, &[v]), v);

        let pair = Cluster { members: vec![0, 1], core_count: 2 };
        let yaws = [GravityPose::new(0.0, 0.0, 0.0, 359f64.to_radians()), GravityPose::new(0.0, 0.0, 0.0, 1f64.to_radians())];
        assert!(estimate(&pair, &yaws).psi.abs() < 1e-15);

        let mid = [GravityPose::new(0.0, 0.0, 0.0, 0.4), GravityPose::new(2.0, 0.0, 0.0, 0.4)];
        let e = estimate(&pair, &mid);
        assert_eq!(e.translation(), Vec3::new(1.0, 0.0, 0.0));
        assert!((e.psi - 0.4).abs() < 1e-15);
    }

    /// Field whose feature moves 2 µT per lattice step in every direction,
    /// so only the true node matches each sample. The azimuth still varies.
    struct Swirl;
    impl MagneticField for Swirl {
        fn field_at(&self, p: Vec3) -> Result<Vec3, MapError> {
            let h = 10.0 + 4.0 * p.x;
            let az = 0.3 * (0.5 * p.y).sin() + 0.2 * p.x;
            Ok(Vec3::new(h * az.cos(), h * az.sin(), -60.0 + 4.0 * p.y))
        }
    }

    fn swirl_map() -> MagneticMap {
        let b = Bounds3::planar(0.0, 0.0, 20.0, 15.0, 0.0);
        build_feature_index(discretize(&Swirl, &b, 0.5, LatticeMode::Planar, DEFAULT_HORIZONTAL_FLOOR).unwrap()).unwrap()
    }

    /// Input sampled at lattice nodes along a row, expressed in frame `a`.
    fn lattice_input(map: &MagneticMap, truth: &GravityPose, row: usize, start: usize, len: usize) -> InputTrajectory {
        let a_from_w = invert(truth);
        let nx = 41;
        let samples = (0..len)
            .map(|k| {
                let node = &map.nodes[row * nx + start + k];
                MagneticSample {
                    t: k as f64,
                    position: a_from_w.transform_point(node.position),
                    field: a_from_w.rotate_vector(node.m),
                }
            })
            .collect();
        traj(samples)
    }

    #[test]
    fn true_correspondences_vote_for_the_truth() {
        let map = swirl_map();
        let truth = GravityPose::new(7.0, -3.0, 0.0, 2.1);
        let params = MaghtParams { smoothing_window: 1, ..Default::default() };
        let input = preprocess(&lattice_input(&map, &truth, 10, 5, 20), &params).unwrap();
        let recentered_truth = compose(&truth, &GravityPose::from_parts(input.barycenter, 0.0));
        for (k, s) in input.samples.iter().enumerate() {
            let node = &map.nodes[10 * 41 + 5 + k];
            let v = compose(&node.frame.unwrap(), &invert(&magnetic_frame(s.position, s.field, 0.05).unwrap()));
            assert!((v.translation() - recentered_truth.translation()).norm() < 1e-9);
            assert!(wrap_angle(v.psi - recentered_truth.psi).abs() < 1e-9);
        }
    }

    #[test]
    fn one_sample_k_matches_k_votes() {
        let map = swirl_map();
        let s = MagneticSample { t: 0.0, position: Vec3::ZERO, field: map.nodes[100].m };
        let input = PreparedInput { samples: vec![s], deltas: vec![2.0], barycenter: Vec3::ZERO };
        let k = map.match_feature(&extract_feature(s.field), 2.0).len();
        assert!(k > 1);
        assert_eq!(cast_votes(&input, &map, &MaghtParams::default()).len(), k);
    }

    #[test]
    fn degenerate_samples_do_not_vote() {
        let map = swirl_map();
        let s = MagneticSample { t: 0.0, position: Vec3::ZERO, field: Vec3::new(0.0, 0.0, -40.0) };
        let input = PreparedInput { samples: vec![s], deltas: vec![3.0], barycenter: Vec3::ZERO };
        assert!(cast_votes(&input, &map, &MaghtParams::default()).is_empty());
    }

    #[test]
    fn exact_lattice_input_is_recovered() {
        let map = swirl_map();
        let truth = GravityPose::new(7.0, -3.0, 0.0, 2.1);
        let params = MaghtParams { smoothing_window: 1, ..Default::default() };
        let raw = lattice_input(&map, &truth, 12, 4, 25);
        let res = relocalize(&raw, &map, &params).unwrap();
        let est = res.pose_in_input_frame().expect("converged");
        assert!((est.translation() - truth.translation()).norm() < 1e-6, "{est} vs {truth}");
        assert!(wrap_angle(est.psi - truth.psi).abs() < 1e-6);
        assert!(res.cluster_size() >= params.minpts);
    }

    #[test]
    fn unindexed_map_is_rejected() {
        let b = Bounds3::planar(0.0, 0.0, 5.0, 5.0, 0.0);
        let map = discretize(&Swirl, &b, 0.5, LatticeMode::Planar, 0.05).unwrap();
        let raw = traj((0..30).map(|i| sample(i as f64 * 0.1, Vec3::new(20.0, 0.0, -40.0))).collect());
        assert_eq!(relocalize(&raw, &map, &MaghtParams::default()).unwrap_err(), MaghtError::MapNotIndexed);
    }
}
