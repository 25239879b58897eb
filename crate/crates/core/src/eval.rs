//! Scoring, experiment orchestration and report emission.
//!
//! A case is correct when the estimate is within 1 m and 12° of the truth.
//! MagHT is scored on `T_wa`; the particle filter on its last-sample pose.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{invert, wrap_angle, GravityPose};
use crate::magmap::MapError;
use crate::maght::{relocalize, MaghtParams, RelocOutcome};
use crate::pfilter::{run_filter, PfParams};
use crate::synth::{Case, DriftModel, Scenario, SynthError};

pub const CORRECT_TRANSLATION_M: f64 = 1.0;
pub const CORRECT_YAW_DEG: f64 = 12.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("map construction failed: {0}")]
    Map(#[from] MapError),
    #[error("scenario resimulation failed: {0}")]
    Synth(#[from] SynthError),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("malformed report line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// m
    pub translation_error: f64,
    /// rad, in `[0, π]`
    pub yaw_error: f64,
    pub correct: bool,
}

pub fn score(truth: &GravityPose, est: &GravityPose) -> Score {
    let translation_error = (est.translation() - truth.translation()).norm();
    let yaw_error = wrap_angle(est.psi - truth.psi).abs();
    let correct = translation_error < CORRECT_TRANSLATION_M && yaw_error < CORRECT_YAW_DEG.to_radians();
    Score { translation_error, yaw_error, correct }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Maght,
    /// Particle filter with this many particles.
    Pf(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Maght => f.write_str("maght"),
            Method::Pf(n) => write!(f, "pf{n}"),
        }
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "maght" {
            return Ok(Method::Maght);
        }
        s.strip_prefix("pf")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .map(Method::Pf)
            .ok_or_else(|| format!("unknown method '{s}' (expected maght or pf<N>, e.g. pf1600)"))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostics {
    Maght { votes: usize, cluster_size: usize, num_clusters: usize, census: Vec<usize> },
    Pf { final_ess: f64, weight_resets: usize, first_converged_step: Option<usize> },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: usize,
    pub tag: String,
    pub method: Method,
    pub traj_len: f64,
    pub in_map: bool,
    pub converged: bool,
    /// m; present iff converged.
    pub translation_error: Option<f64>,
    /// rad; present iff converged.
    pub yaw_error: Option<f64>,
    pub correct: bool,
    /// Relocalization call only, ms; absent unless timing was requested.
    pub wall_ms: Option<f64>,
    pub diagnostics: Diagnostics,
    pub failure: Option<String>,
}

impl CaseOutcome {
    pub fn votes(&self) -> Option<usize> {
        match self.diagnostics {
            Diagnostics::Maght { votes, .. } => Some(votes),
            _ => None,
        }
    }

    pub fn cluster_size(&self) -> Option<usize> {
        match self.diagnostics {
            Diagnostics::Maght { cluster_size, .. } if self.converged => Some(cluster_size),
            _ => None,
        }
    }
}

/// Aggregates over one method and one group of cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub traj_len: Option<f64>,
    pub cases: usize,
    pub in_map_cases: usize,
    pub out_of_map_cases: usize,
    pub converged: usize,
    pub correct: usize,
    /// Convergences on out-of-map cases.
    pub false_positives: usize,
    /// correct / in-map cases; absent without in-map cases.
    pub recall: Option<f64>,
    /// correct / converged; absent without convergences.
    pub precision: Option<f64>,
    /// false positives / out-of-map cases; absent without out-of-map cases.
    pub false_positive_rate: Option<f64>,
    /// Over converged in-map cases, m.
    pub t_err_median: Option<f64>,
    pub t_err_p90: Option<f64>,
    /// Over converged in-map cases, degrees.
    pub yaw_err_median_deg: Option<f64>,
    pub yaw_err_p90_deg: Option<f64>,
    pub wall_ms_median: Option<f64>,
    pub wall_ms_p90: Option<f64>,
    pub wall_ms_max: Option<f64>,
}

/// Linear-interpolation percentile of `values` (`q` in `[0, 1]`).
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 0.5)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Folds outcomes of a single method into a summary. Independent of order.
pub fn summarize<'a>(method: Method, traj_len: Option<f64>, outcomes: impl IntoIterator<Item = &'a CaseOutcome>) -> Summary {
    let (mut cases, mut in_map, mut converged, mut correct, mut fp) = (0, 0, 0, 0, 0);
    let (mut terr, mut yerr, mut wall) = (Vec::new(), Vec::new(), Vec::new());
    for o in outcomes {
        cases += 1;
        in_map += o.in_map as usize;
        converged += o.converged as usize;
        correct += o.correct as usize;
        fp += (!o.in_map && o.converged) as usize;
        if o.in_map {
            terr.extend(o.translation_error);
            yerr.extend(o.yaw_error.map(f64::to_degrees));
        }
        wall.extend(o.wall_ms);
    }
    Summary {
        method,
        traj_len,
        cases,
        in_map_cases: in_map,
        out_of_map_cases: cases - in_map,
        converged,
        correct,
        false_positives: fp,
        recall: ratio(correct, in_map),
        precision: ratio(correct, converged),
        false_positive_rate: ratio(fp, cases - in_map),
        t_err_median: median(&terr),
        t_err_p90: percentile(&terr, 0.9),
        yaw_err_median_deg: median(&yerr),
        yaw_err_p90_deg: percentile(&yerr, 0.9),
        wall_ms_median: median(&wall),
        wall_ms_p90: percentile(&wall, 0.9),
        wall_ms_max: percentile(&wall, 1.0),
    }
}

/// One summary per (method, trajectory length), sorted.
pub fn summaries_by_length(outcomes: &[CaseOutcome]) -> Vec<Summary> {
    let mut groups: BTreeMap<(Method, u64), Vec<&CaseOutcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry((o.method, o.traj_len.to_bits())).or_default().push(o);
    }
    let mut out: Vec<Summary> =
        groups.into_iter().map(|((m, len), v)| summarize(m, Some(f64::from_bits(len)), v)).collect();
    out.sort_by(|a, b| a.method.cmp(&b.method).then(a.traj_len.unwrap().total_cmp(&b.traj_len.unwrap())));
    out
}

/// One summary per method over all lengths, sorted by method.
pub fn summaries_by_method(outcomes: &[CaseOutcome]) -> Vec<Summary> {
    let mut methods: Vec<Method> = outcomes.iter().map(|o| o.method).collect();
    methods.sort();
    methods.dedup();
    methods.into_iter().map(|m| summarize(m, None, outcomes.iter().filter(|o| o.method == m))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario_id: String,
    pub maght_params: MaghtParams,
    /// Particle count is taken from each `pf<N>` method.
    pub pf_params: PfParams,
    /// Feature-index build time, ms; absent unless timing was requested.
    pub index_build_ms: Option<f64>,
    pub outcomes: Vec<CaseOutcome>,
    pub summaries: Vec<Summary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    /// Record wall-clock times. They make reports non-reproducible.
    pub timing: bool,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs MagHT on one case.
pub fn eval_maght(case: &Case, map: &crate::magmap::MagneticMap, params: &MaghtParams, timing: bool) -> CaseOutcome {
    let start = Instant::now();
    let result = relocalize(&case.input, map, params);
    let wall = ms_since(start);
    let mut out = CaseOutcome {
        case_id: case.id,
        tag: case.tag.clone(),
        method: Method::Maght,
        traj_len: case.traj_len,
        in_map: case.in_map,
        converged: false,
        translation_error: None,
        yaw_error: None,
        correct: false,
        wall_ms: timing.then_some(wall),
        diagnostics: Diagnostics::None,
        failure: None,
    };
    match result {
        Err(e) => out.failure = Some(e.to_string()),
        Ok(r) => {
            out.diagnostics = match &r.outcome {
                RelocOutcome::Converged { cluster_size, total_votes, num_clusters, census, .. } => Diagnostics::Maght {
                    votes: *total_votes,
                    cluster_size: *cluster_size,
                    num_clusters: *num_clusters,
                    census: census.clone(),
                },
                RelocOutcome::NoConsensus { total_votes } => {
                    Diagnostics::Maght { votes: *total_votes, cluster_size: 0, num_clusters: 0, census: Vec::new() }
                }
            };
            if let Some(est) = r.pose_in_input_frame() {
                let s = score(&case.truth, &est);
                out.converged = true;
                out.translation_error = Some(s.translation_error);
                out.yaw_error = Some(s.yaw_error);
                out.correct = case.in_map && s.correct;
            }
        }
    }
    out
}

/// Runs the particle filter on one case, scored on the last-sample pose.
pub fn eval_pf(case: &Case, map: &crate::magmap::MagneticMap, params: &PfParams, timing: bool) -> CaseOutcome {
    let start = Instant::now();
    let result = run_filter(&case.input, map, params, case.seed ^ 0x9e37_79b9_7f4a_7c15);
    let wall = ms_since(start);
    let mut out = CaseOutcome {
        case_id: case.id,
        tag: case.tag.clone(),
        method: Method::Pf(params.n_particles),
        traj_len: case.traj_len,
        in_map: case.in_map,
        converged: false,
        translation_error: None,
        yaw_error: None,
        correct: false,
        wall_ms: timing.then_some(wall),
        diagnostics: Diagnostics::None,
        failure: None,
    };
    match result {
        Err(e) => out.failure = Some(e.to_string()),
        Ok(run) => {
            out.diagnostics = Diagnostics::Pf {
                final_ess: run.trace.last().map_or(0.0, |d| d.ess),
                weight_resets: run.weight_resets(),
                first_converged_step: run.first_converged_step,
            };
            if let Some(est) = run.last_pose {
                let s = score(&case.final_pose_w(), &est);
                out.converged = true;
                out.translation_error = Some(s.translation_error);
                out.yaw_error = Some(s.yaw_error);
                out.correct = case.in_map && s.correct;
            }
        }
    }
    out
}

/// Runs every method on every case of `scenario`, in case order.
pub fn run_experiment(
    scenario: &Scenario,
    scenario_id: &str,
    methods: &[Method],
    maght: &MaghtParams,
    pf: &PfParams,
    opts: EvalOptions,
) -> Result<EvalReport, EvalError> {
    maght.validate().map_err(|e| EvalError::Params(e.to_string()))?;
    pf.validate().map_err(|e| EvalError::Params(e.to_string()))?;
    let start = Instant::now();
    let map = scenario.map.build(&scenario.world, maght.horizontal_floor)?;
    let index_build_ms = opts.timing.then(|| ms_since(start));
    let mut outcomes = Vec::with_capacity(scenario.cases.len() * methods.len());
    for case in &scenario.cases {
        for &m in methods {
            outcomes.push(match m {
                Method::Maght => eval_maght(case, &map, maght, opts.timing),
                Method::Pf(n) => eval_pf(case, &map, &PfParams { n_particles: n, ..*pf }, opts.timing),
            });
        }
    }
    let summaries = summaries_by_length(&outcomes);
    Ok(EvalReport { scenario_id: scenario_id.to_string(), maght_params: *maght, pf_params: *pf, index_build_ms, outcomes, summaries })
}

/// Endpoint relative position error of the odometry, m.
pub fn endpoint_rpe(case: &Case) -> f64 {
    let (Some(first), Some(last)) = (case.path.first(), case.path.last()) else { return 0.0 };
    let a_from_w = invert(&case.truth);
    let exact = a_from_w.transform_point(last.translation()) - a_from_w.transform_point(first.translation());
    let s = &case.input.samples;
    let measured = s[s.len() - 1].position - s[0].position;
    (measured - exact).norm()
}

/// Pure position random walk whose median endpoint error over `length`
/// meters is `target_rpe`. The endpoint error norm is χ₃-distributed with
/// scale `σ√L`; the χ₃ median is 1.5382.
pub fn drift_for_rpe(target_rpe: f64, length: f64) -> DriftModel {
    const CHI3_MEDIAN: f64 = 1.538_172_7;
    DriftModel { sigma_trans: target_rpe / (CHI3_MEDIAN * length.sqrt()), sigma_yaw: 0.0, bias_walk: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub target_rpe: f64,
    pub drift: DriftModel,
    pub median_rpe: Option<f64>,
    pub report: EvalReport,
}

/// Re-simulates the scenario's measurements for each target RPE and runs
/// the experiment on each.
pub fn drift_sweep(
    scenario: &Scenario,
    scenario_id: &str,
    targets: &[f64],
    methods: &[Method],
    maght: &MaghtParams,
    pf: &PfParams,
    opts: EvalOptions,
) -> Result<Vec<DriftPoint>, EvalError> {
    let ref_len = scenario.cases.iter().map(|c| c.traj_len).fold(f64::NAN, f64::max);
    targets
        .iter()
        .map(|&target| {
            let drift = drift_for_rpe(target, if ref_len.is_finite() { ref_len } else { 12.0 });
            let sc = scenario.resimulate(scenario.config.mag_noise, &drift)?;
            let rpes: Vec<f64> = sc.cases.iter().map(endpoint_rpe).collect();
            let report = run_experiment(&sc, scenario_id, methods, maght, pf, opts)?;
            Ok(DriftPoint { target_rpe: target, drift, median_rpe: median(&rpes), report })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    JsonLines,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json-lines" | "jsonl" => Ok(ReportFormat::JsonLines),
            other => Err(format!("unknown report format '{other}' (table|csv|json-lines)")),
        }
    }
}

/// Per-case CSV columns, in order.
pub const CSV_COLUMNS: [&str; 14] = [
    "scenario_id",
    "case_id",
    "method",
    "traj_len_m",
    "converged",
    "t_err_m",
    "yaw_err_deg",
    "correct",
    "wall_ms",
    "votes",
    "cluster_size",
    "in_map",
    "tag",
    "failure",
];

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ReportLine {
    Header { scenario_id: String, maght_params: MaghtParams, pf_params: PfParams, index_build_ms: Option<f64> },
    Case(CaseOutcome),
    Summary(Summary),
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}%", 100.0 * x))
}

fn num(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => emit_table(&report.summaries),
        ReportFormat::Csv => emit_csv(report),
        ReportFormat::JsonLines => emit_json_lines(report),
    }
}

/// Summary table with percentages at one decimal and units in the header.
pub fn emit_table(summaries: &[Summary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:>7} {:>6} {:>6} {:>7} {:>8} {:>9} {:>8} {:>10} {:>12} {:>11}",
        "method", "len_m", "cases", "conv", "correct", "recall", "precision", "fp_rate", "t_err_m", "yaw_err_deg", "wall_ms"
    );
    for r in summaries {
        let _ = writeln!(
            s,
            "{:<8} {:>7} {:>6} {:>6} {:>7} {:>8} {:>9} {:>8} {:>10} {:>12} {:>11}",
            r.method.to_string(),
            num(r.traj_len, 1),
            r.cases,
            r.converged,
            r.correct,
            pct(r.recall),
            pct(r.precision),
            pct(r.false_positive_rate),
            num(r.t_err_median, 3),
            num(r.yaw_err_median_deg, 2),
            num(r.wall_ms_median, 3),
        );
    }
    s
}

pub fn emit_csv(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for o in &report.outcomes {
        w.write_record([
            report.scenario_id.clone(),
            o.case_id.to_string(),
            o.method.to_string(),
            o.traj_len.to_string(),
            o.converged.to_string(),
            opt(o.translation_error),
            opt(o.yaw_error.map(f64::to_degrees)),
            o.correct.to_string(),
            opt(o.wall_ms),
            opt(o.votes()),
            opt(o.cluster_size()),
            o.in_map.to_string(),
            o.tag.clone(),
            o.failure.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn emit_json_lines(report: &EvalReport) -> String {
    let mut s = String::new();
    let mut line = |l: &ReportLine| {
        s.push_str(&serde_json::to_string(l).expect("report serializes"));
        s.push('\n');
    };
    line(&ReportLine::Header {
        scenario_id: report.scenario_id.clone(),
        maght_params: report.maght_params,
        pf_params: report.pf_params,
        index_build_ms: report.index_build_ms,
    });
    for o in &report.outcomes {
        line(&ReportLine::Case(o.clone()));
    }
    for r in &report.summaries {
        line(&ReportLine::Summary(r.clone()));
    }
    s
}

pub fn parse_json_lines(text: &str) -> Result<EvalReport, EvalError> {
    let mut report: Option<EvalReport> = None;
    for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let err = |message: String| EvalError::Parse { line: i + 1, message };
        let parsed: ReportLine = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        match (parsed, report.as_mut()) {
            (ReportLine::Header { scenario_id, maght_params, pf_params, index_build_ms }, None) => {
                report = Some(EvalReport {
                    scenario_id,
                    maght_params,
                    pf_params,
                    index_build_ms,
                    outcomes: Vec::new(),
                    summaries: Vec::new(),
                })
            }
            (ReportLine::Header { .. }, Some(_)) => return Err(err("duplicate header".into())),
            (_, None) => return Err(err("record before header".into())),
            (ReportLine::Case(o), Some(r)) => r.outcomes.push(o),
            (ReportLine::Summary(s), Some(r)) => r.summaries.push(s),
        }
    }
    report.ok_or(EvalError::Parse { line: 0, message: "empty report".into() })
}
