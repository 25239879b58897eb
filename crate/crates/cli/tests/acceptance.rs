//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The process fails if a criterion fails that is not listed in
//! `EXPECTED_FAILURES`. Those are documented in the README.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use maght_core::dbscan::dbscan;
use maght_core::eval::{
    drift_sweep, eval_maght, eval_pf, median, run_experiment, score, summarize, EvalOptions, Method,
};
use maght_core::geometry::{invert, wrap_angle, GravityPose, DEFAULT_HORIZONTAL_FLOOR};
use maght_core::magmap::MagneticMap;
use maght_core::maght::{
    cast_votes, estimate, preprocess, relocalize, relocalize_prepared, Cluster, InputTrajectory, MaghtParams,
    MagneticSample, RelocOutcome,
};
use maght_core::pfilter::PfParams;
use maght_core::spatial_index::KdTree;
use maght_core::synth::{gen_scenario, Scenario, ScenarioConfig, ScenarioKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXPECTED_FAILURES: &[u32] = &[1, 5];
const SEED: u64 = 7;

type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn scenario(kind: ScenarioKind, cases: usize, lengths: &[f64]) -> (Scenario, MagneticMap) {
    let mut cfg = ScenarioConfig::new(kind, SEED);
    cfg.cases_per_length = cases;
    cfg.lengths = lengths.to_vec();
    let sc = gen_scenario(&cfg).expect("scenario generates");
    let map = sc.map.build(&sc.world, DEFAULT_HORIZONTAL_FLOOR).expect("map builds");
    (sc, map)
}

/// Noiseless inputs that sit exactly on transformed lattice nodes.
fn c1_exact_recovery() -> Verdict {
    let (_, map) = scenario(ScenarioKind::Open, 0, &[12.0]);
    let params = MaghtParams { smoothing_window: 1, ..MaghtParams::default() };
    let nx = (map.bounds.extent().x / map.lattice_step).round() as usize + 1;
    let ny = map.nodes.len() / nx;
    let run = (12.0 / map.lattice_step).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut ok, mut worst_t, mut worst_y) = (0, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let row = rng.gen_range(0..ny);
        let col = rng.gen_range(0..nx - run);
        let truth = GravityPose::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-2.0..2.0), rng.gen_range(-3.1..3.1));
        let a_from_w = invert(&truth);
        let samples = (0..run)
            .map(|k| {
                let n = &map.nodes[row * nx + col + k];
                MagneticSample { t: k as f64, position: a_from_w.transform_point(n.position), field: a_from_w.rotate_vector(n.m) }
            })
            .collect();
        let input = InputTrajectory { frame: "a".into(), samples };
        let Some(est) = relocalize(&input, &map, &params).ok().and_then(|r| r.pose_in_input_frame()) else {
            worst_t = f64::INFINITY;
            continue;
        };
        let s = score(&truth, &est);
        worst_t = worst_t.max(s.translation_error);
        worst_y = worst_y.max(s.yaw_error);
        ok += (s.translation_error < 1e-6 && s.yaw_error < 1e-6) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        ok == 100 && secs < 1.0,
        format!("{ok}/100 within 1e-6 m and 1e-6 rad; worst {worst_t:.2e} m, {worst_y:.2e} rad; {secs:.2} s"),
    )
}

fn brute<const D: usize>(pts: &[[f64; D]], c: &[f64; D], r: f64) -> Vec<usize> {
    (0..pts.len()).filter(|&i| pts[i].iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r * r).collect()
}

fn kd_set<const D: usize>(rng: &mut ChaCha8Rng) -> usize {
    let n = rng.gen_range(1..=5000);
    let pts: Vec<[f64; D]> = (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..50.0))).collect();
    let tree = KdTree::build(&pts).expect("non-empty");
    (0..100)
        .filter(|_| {
            let c: [f64; D] = std::array::from_fn(|_| rng.gen_range(-5.0..55.0));
            let r = rng.gen_range(0.0..15.0);
            tree.range_query(&c, r) != brute(&pts, &c, r)
        })
        .count()
}

fn c2_range_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mismatches: usize = (0..100).map(|i| if i % 2 == 0 { kd_set::<2>(&mut rng) } else { kd_set::<5>(&mut rng) }).sum();
    verdict(mismatches == 0, format!("{mismatches} mismatching queries of 10000 (50 sets D=2, 50 sets D=5)"))
}

fn dbscan_reference(pts: &[[f64; 5]], eps: f64, minpts: usize) -> (Vec<bool>, Vec<Option<usize>>) {
    let nbrs: Vec<Vec<usize>> = pts.iter().map(|p| brute(pts, p, eps)).collect();
    let core: Vec<bool> = nbrs.iter().map(|v| v.len() >= minpts).collect();
    let mut labels = vec![None; pts.len()];
    let mut next = 0;
    for seed in 0..pts.len() {
        if core[seed] && labels[seed].is_none() {
            labels[seed] = Some(next);
            let mut stack = vec![seed];
            while let Some(p) = stack.pop() {
                if core[p] {
                    for &q in &nbrs[p] {
                        if labels[q].is_none() {
                            labels[q] = Some(next);
                            stack.push(q);
                        }
                    }
                }
            }
            next += 1;
        }
    }
    (core, labels)
}

/// Same partition, whatever the label values.
fn same_partition(a: &[Option<usize>], b: &[Option<usize>]) -> bool {
    let mut fwd = std::collections::HashMap::new();
    let mut back = std::collections::HashMap::new();
    a.iter().zip(b).all(|(x, y)| match (x, y) {
        (None, None) => true,
        (Some(x), Some(y)) => *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x,
        _ => false,
    })
}

fn c3_dbscan_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut runs, mut bad) = (0, 0);
    for _ in 0..50 {
        let n = rng.gen_range(100..1500);
        let blobs: Vec<[f64; 5]> = (0..rng.gen_range(1..8)).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..15.0))).collect();
        let pts: Vec<[f64; 5]> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    let c = blobs[rng.gen_range(0..blobs.len())];
                    std::array::from_fn(|d| c[d] + rng.gen_range(-0.7..0.7))
                } else {
                    std::array::from_fn(|_| rng.gen_range(0.0..15.0))
                }
            })
            .collect();
        for eps in [0.3, 0.5, 0.8] {
            for minpts in [2, 5, 8, 12] {
                let got = dbscan(&pts, eps, minpts);
                let (core, labels) = dbscan_reference(&pts, eps, minpts);
                runs += 1;
                bad += (got.core != core || !same_partition(&got.labels, &labels)) as usize;
            }
        }
    }
    verdict(bad == 0, format!("{bad} mismatches over {runs} runs (50 sets × ε ∈ {{0.3, 0.5, 0.8}} × minpts ∈ {{2, 5, 8, 12}})"))
}

struct AtriumRun {
    scenario: Scenario,
    map: MagneticMap,
}

fn c4_atrium(run: &AtriumRun, build_secs: f64) -> Verdict {
    let start = Instant::now();
    let params = MaghtParams::default();
    let report = run_experiment(&run.scenario, "atrium", &[Method::Maght], &params, &PfParams::default(), EvalOptions::default())
        .expect("experiment runs");
    let secs = start.elapsed().as_secs_f64() + build_secs;
    let by_len: Vec<String> = report
        .summaries
        .iter()
        .map(|s| format!("{:.0} m {:.1}%", s.traj_len.unwrap(), 100.0 * s.recall.unwrap_or(0.0)))
        .collect();
    let s12 = report.summaries.iter().find(|s| s.traj_len == Some(12.0)).expect("12 m summary");
    let (recall, precision) = (s12.recall.unwrap_or(0.0), s12.precision.unwrap_or(0.0));
    let (t, y) = (s12.t_err_median.unwrap_or(f64::INFINITY), s12.yaw_err_median_deg.unwrap_or(f64::INFINITY));
    verdict(
        recall >= 0.80 && precision >= 0.95 && t <= 0.5 && y <= 3.0 && secs <= 300.0 && s12.cases >= 100,
        format!(
            "12 m: recall {:.1}%, precision {:.1}%, median {t:.3} m / {y:.2}° over {} cases; recall by length [{}]; sweep {secs:.1} s",
            100.0 * recall,
            100.0 * precision,
            s12.cases,
            by_len.join(", ")
        ),
    )
}

fn c5_runtime(run: &AtriumRun) -> Verdict {
    let params = MaghtParams::default();
    let pf = PfParams::with_particles(1600);
    let cases: Vec<_> = run.scenario.cases.iter().filter(|c| c.traj_len == 12.0).collect();
    let m: Vec<f64> = cases.iter().filter_map(|c| eval_maght(c, &run.map, &params, true).wall_ms).collect();
    let p: Vec<f64> = cases.iter().filter_map(|c| eval_pf(c, &run.map, &pf, true).wall_ms).collect();
    let (mm, pm) = (median(&m).unwrap_or(f64::INFINITY), median(&p).unwrap_or(0.0));
    let ratio = pm / mm;
    verdict(
        mm <= 50.0 && ratio >= 100.0,
        format!("median MagHT {mm:.3} ms, pf1600 {pm:.2} ms, ratio {ratio:.1}× over {} cases", cases.len()),
    )
}

fn c6_unmapped() -> Verdict {
    let (sc, map) = scenario(ScenarioKind::Unmapped, 200, &[12.0]);
    let params = MaghtParams::default();
    let outcomes: Vec<_> = sc.cases.iter().map(|c| eval_maght(c, &map, &params, false)).collect();
    let s = summarize(Method::Maght, Some(12.0), &outcomes);
    let rate = s.false_positive_rate.unwrap_or(1.0);
    verdict(
        s.out_of_map_cases >= 200 && rate <= 0.05,
        format!("{} false positives of {} out-of-map cases ({:.1}%)", s.false_positives, s.out_of_map_cases, 100.0 * rate),
    )
}

fn c7_drift() -> Verdict {
    let (sc, _) = scenario(ScenarioKind::Open, 200, &[12.0]);
    let points = drift_sweep(&sc, "drift", &[0.04, 0.065, 0.09], &[Method::Maght], &MaghtParams::default(), &PfParams::default(), EvalOptions::default())
        .expect("sweep runs");
    let medians: Vec<f64> = points.iter().map(|p| p.report.summaries[0].t_err_median.unwrap_or(f64::INFINITY)).collect();
    let rpes: Vec<f64> = points.iter().map(|p| p.median_rpe.unwrap_or(f64::NAN)).collect();
    let spread = medians.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - medians.iter().cloned().fold(f64::INFINITY, f64::min);
    let spans = rpes[0] <= 0.045 && rpes[2] >= 0.085;
    let desc: Vec<String> = rpes.iter().zip(&medians).map(|(r, m)| format!("RPE {r:.3} m -> {m:.3} m")).collect();
    verdict(spread < 0.1 && spans, format!("{}; spread {spread:.3} m", desc.join(", ")))
}

fn c8_order_independence() -> Verdict {
    let (sc, map) = scenario(ScenarioKind::Open, 50, &[12.0]);
    let params = MaghtParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bad = 0;
    let key = |v: &[GravityPose]| {
        let mut k: Vec<[u64; 4]> = v.iter().map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits(), p.psi.to_bits()]).collect();
        k.sort_unstable();
        k
    };
    for case in &sc.cases {
        let prepared = preprocess(&case.input, &params).expect("12 m input is long enough");
        let mut perm: Vec<usize> = (0..prepared.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled = prepared.permuted(&perm);
        let same_votes = key(&cast_votes(&prepared, &map, &params)) == key(&cast_votes(&shuffled, &map, &params));
        let same_outcome = match (relocalize_prepared(&prepared, &map, &params), relocalize_prepared(&shuffled, &map, &params)) {
            (RelocOutcome::Converged { pose: a, census: ca, .. }, RelocOutcome::Converged { pose: b, census: cb, .. }) => {
                ca == cb && (a.translation() - b.translation()).norm() <= 1e-12 && wrap_angle(a.psi - b.psi).abs() <= 1e-12
            }
            (a, b) => a == b,
        };
        bad += (!same_votes || !same_outcome) as usize;
    }
    verdict(bad == 0, format!("{bad} of {} permuted cases differ", sc.cases.len()))
}

fn c9_corridor() -> Verdict {
    let (sc, map) = scenario(ScenarioKind::Corridor, 1000, &[12.0]);
    let params = MaghtParams::default();
    let outcomes: Vec<_> = sc.cases.iter().map(|c| eval_maght(c, &map, &params, false)).collect();
    let family = |tag: &str| summarize(Method::Maght, Some(12.0), outcomes.iter().filter(|o| o.tag == tag));
    let (al, cr) = (family("aligned"), family("crossing"));
    let (ra, rc) = (al.recall.unwrap_or(0.0), cr.recall.unwrap_or(0.0));
    let gap = 100.0 * (ra - rc).abs();
    verdict(
        gap <= 10.0,
        format!("aligned {:.1}% ({} cases), crossing {:.1}% ({} cases), gap {gap:.1} pp", 100.0 * ra, al.cases, 100.0 * rc, cr.cases),
    )
}

fn c10_wrap() -> Verdict {
    let votes = [GravityPose::new(0.0, 0.0, 0.0, 359f64.to_radians()), GravityPose::new(0.0, 0.0, 0.0, 1f64.to_radians())];
    let centroid = estimate(&Cluster { members: vec![0, 1], core_count: 2 }, &votes).psi.to_degrees();
    let a = GravityPose::new(0.0, 0.0, 0.0, 179f64.to_radians());
    let b = GravityPose::new(0.0, 0.0, 0.0, -179f64.to_radians());
    let err = score(&a, &b).yaw_error.to_degrees();
    verdict(
        centroid.abs() <= 1e-12 && (err - 2.0).abs() <= 1e-12,
        format!("centroid {centroid:e}°, score(179°, -179°) yaw error {err:.15}°"),
    )
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("readable dir") {
            let p = e.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).expect("readable file")));
            }
        }
    }
    out.sort();
    out
}

fn c11_determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_maght");
    let steps: [&[&str]; 6] = [
        &["gen", "--kind", "open", "--bounds", "20x15", "--cases", "6", "--traj-len", "12", "--seed", "7"],
        &["map", "--scenario", "out/scenario.json", "--export-trajectories"],
        &["reloc", "--map", "out/map.json", "--trajectory", "out/trajectories/case-0001.json"],
        &["eval", "--scenario", "out/scenario.json", "--methods", "maght,pf400"],
        &["eval", "--scenario", "unmapped", "--cases", "4", "--drift-sweep", "0.04,0.09", "--out-dir", "out/sweep"],
        &["bench", "--cases", "3", "--methods", "maght,pf200", "--out-dir", "out/bench"],
    ];
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().expect("temp dir");
            for args in &steps {
                let status = Command::new(bin)
                    .args(*args)
                    .current_dir(dir.path())
                    .env("MAGHT_OUT_DIR", "out")
                    .output()
                    .expect("binary runs");
                assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
            }
            let snap = snapshot(&dir.path().join("out"));
            (dir, snap)
        })
        .collect();
    let (a, b) = (&runs[0].1, &runs[1].1);
    let differing: Vec<&str> = a.iter().zip(b).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    verdict(
        a.len() == b.len() && differing.is_empty(),
        format!("{} files over gen, map, reloc, eval, bench; {} differ {:?}", a.len(), differing.len(), differing),
    )
}

fn main() {
    let build = Instant::now();
    let (scenario, map) = scenario(ScenarioKind::Open, 100, &[3.0, 6.0, 9.0, 12.0, 15.0, 18.0]);
    let atrium = AtriumRun { scenario, map };
    let build_secs = build.elapsed().as_secs_f64();

    let criteria: Vec<(u32, &str, Check)> = vec![
        (1, "exact recovery", Box::new(c1_exact_recovery)),
        (2, "range search oracle", Box::new(c2_range_oracle)),
        (3, "clustering oracle", Box::new(c3_dbscan_oracle)),
        (4, "open floor sweep", Box::new(|| c4_atrium(&atrium, build_secs))),
        (5, "runtime dominance", Box::new(|| c5_runtime(&atrium))),
        (6, "unmapped robustness", Box::new(c6_unmapped)),
        (7, "odometry drift", Box::new(c7_drift)),
        (8, "order independence", Box::new(c8_order_independence)),
        (9, "crossing vs aligned", Box::new(c9_corridor)),
        (10, "circular mean and wrap", Box::new(c10_wrap)),
        (11, "CLI determinism", Box::new(c11_determinism)),
    ];

    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, name, check) in &criteria {
        let start = Instant::now();
        let v = check();
        let tag = match (v.pass, EXPECTED_FAILURES.contains(id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (expected)",
            (false, false) => "FAIL",
        };
        passed += v.pass as usize;
        if !v.pass && !EXPECTED_FAILURES.contains(id) {
            unexpected.push(*id);
        }
        println!("criterion {id:>2} {tag}: {name}: {} [{:.1} s]", v.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
