//! End-to-end properties of relocalization on synthetic scenarios.

use maght_core::eval::{eval_maght, eval_pf, score};
use maght_core::geometry::{compose, invert, GravityPose, DEFAULT_HORIZONTAL_FLOOR};
use maght_core::magmap::MagneticMap;
use maght_core::maght::{cast_votes, preprocess, relocalize, relocalize_prepared, InputTrajectory, MaghtParams, RelocOutcome};
use maght_core::pfilter::PfParams;
use maght_core::synth::{gen_scenario, Scenario, ScenarioConfig, ScenarioKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn open(seed: u64, cases: usize) -> (Scenario, MagneticMap) {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Open, seed);
    cfg.cases_per_length = cases;
    let sc = gen_scenario(&cfg).unwrap();
    let map = sc.map.build(&sc.world, DEFAULT_HORIZONTAL_FLOOR).unwrap();
    (sc, map)
}

fn sorted(mut v: Vec<GravityPose>) -> Vec<[f64; 4]> {
    let mut out: Vec<[f64; 4]> = v.drain(..).map(|p| [p.x, p.y, p.z, p.psi]).collect();
    out.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    out
}

#[test]
fn permuting_samples_changes_nothing() {
    let (sc, map) = open(21, 50);
    let params = MaghtParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut converged = 0;
    for case in &sc.cases {
        let prepared = preprocess(&case.input, &params).unwrap();
        let mut perm: Vec<usize> = (0..prepared.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled = prepared.permuted(&perm);
        assert_eq!(sorted(cast_votes(&prepared, &map, &params)), sorted(cast_votes(&shuffled, &map, &params)));
        let a = relocalize_prepared(&prepared, &map, &params);
        let b = relocalize_prepared(&shuffled, &map, &params);
        match (&a, &b) {
            (RelocOutcome::Converged { pose: pa, census: ca, .. }, RelocOutcome::Converged { pose: pb, census: cb, .. }) => {
                converged += 1;
                assert_eq!(ca, cb);
                assert!((pa.translation() - pb.translation()).norm() <= 1e-12);
                assert!((pa.psi - pb.psi).abs() <= 1e-12);
            }
            _ => assert_eq!(a, b),
        }
    }
    assert!(converged > 25);
}

/// Re-expresses the input in another gravity frame `b = G·a`.
fn reframe(input: &InputTrajectory, g: &GravityPose) -> InputTrajectory {
    let mut out = input.clone();
    for s in &mut out.samples {
        s.position = g.transform_point(s.position);
        s.field = g.rotate_vector(s.field);
    }
    out
}

#[test]
fn estimate_is_equivariant_to_the_input_frame() {
    let (sc, map) = open(22, 20);
    let params = MaghtParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in &sc.cases {
        let g = GravityPose::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.1..3.1));
        let a = relocalize(&case.input, &map, &params).unwrap();
        let b = relocalize(&reframe(&case.input, &g), &map, &params).unwrap();
        assert_eq!(a.is_converged(), b.is_converged());
        assert_eq!(a.cluster_size(), b.cluster_size());
        if let (Some(pa), Some(pb)) = (a.pose_in_input_frame(), b.pose_in_input_frame()) {
            // T_wb = T_wa · G⁻¹
            let expected = compose(&pa, &invert(&g));
            let s = score(&expected, &pb);
            assert!(s.translation_error < 1e-8, "{}", s.translation_error);
            assert!(s.yaw_error < 1e-10);
        }
    }
}

#[test]
fn open_floor_recovers_most_twelve_meter_cases() {
    let (sc, map) = open(23, 60);
    let params = MaghtParams::default();
    let outcomes: Vec<_> = sc.cases.iter().map(|c| eval_maght(c, &map, &params, false)).collect();
    let correct = outcomes.iter().filter(|o| o.correct).count();
    let wrong = outcomes.iter().filter(|o| o.converged && !o.correct).count();
    assert!(correct >= 40, "{correct}/60");
    assert!(wrong <= 3, "{wrong} wrong convergences");
}

#[test]
fn noiseless_odometry_and_field_give_small_errors() {
    let (sc, map) = open(24, 20);
    let clean = sc.resimulate(0.0, &maght_core::synth::DriftModel::none()).unwrap();
    let params = MaghtParams::default();
    for case in &clean.cases {
        let o = eval_maght(case, &map, &params, false);
        if o.converged {
            assert!(o.translation_error.unwrap() < 0.5);
            assert!(o.yaw_error.unwrap().to_degrees() < 3.0);
        }
    }
}

#[test]
fn particle_filter_is_reproducible() {
    let (sc, map) = open(25, 3);
    let pf = PfParams::with_particles(400);
    for case in &sc.cases {
        assert_eq!(eval_pf(case, &map, &pf, false), eval_pf(case, &map, &pf, false));
    }
}

#[test]
fn out_of_map_trajectories_rarely_converge() {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Unmapped, 26);
    cfg.cases_per_length = 60;
    let sc = gen_scenario(&cfg).unwrap();
    let map = sc.map.build(&sc.world, DEFAULT_HORIZONTAL_FLOOR).unwrap();
    let params = MaghtParams::default();
    let fp = sc.cases.iter().filter(|c| eval_maght(c, &map, &params, false).converged).count();
    assert!(sc.cases.iter().all(|c| !c.in_map));
    assert!(fp <= 6, "{fp}/60");
}

#[test]
fn staircase_scenario_relocalizes_in_three_dimensions() {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Staircase, 27);
    cfg.cases_per_length = 20;
    let sc = gen_scenario(&cfg).unwrap();
    let map = sc.map.build(&sc.world, DEFAULT_HORIZONTAL_FLOOR).unwrap();
    let params = MaghtParams::default();
    let correct = sc.cases.iter().filter(|c| eval_maght(c, &map, &params, false).correct).count();
    assert!(correct >= 8, "{correct}/20");
}
