use std::path::{Path, PathBuf};
use std::time::Instant;

use maght_core::eval::{
    drift_sweep, emit_csv, emit_json_lines, emit_report, run_experiment, score, summaries_by_method, EvalOptions, Method,
};
use maght_core::io::{self, Document, MapDocument, ResultDocument, TrajectoryDocument, SCHEMA_VERSION};
use maght_core::maght::{relocalize, MaghtParams, RelocOutcome};
use maght_core::pfilter::PfParams;
use maght_core::synth::{gen_scenario, Scenario, ScenarioConfig, ScenarioKind};
use serde::Serialize;

use crate::config::{parse_bounds, FileConfig, ScenarioDefaults};
use crate::{BenchArgs, Cli, CliError, Command, EvalArgs, GenArgs, MapArgs, RelocArgs, ScenarioArgs};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let ctx = Ctx { out_dir: cli.out_dir.clone(), quiet: cli.quiet, file };
    match &cli.command {
        Command::Gen(a) => cmd_gen(&ctx, a),
        Command::Map(a) => cmd_map(&ctx, a),
        Command::Reloc(a) => cmd_reloc(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a),
    }
}

struct Ctx {
    out_dir: PathBuf,
    quiet: bool,
    file: FileConfig,
}

impl Ctx {
    fn out(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(default_name))
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

/// Run manifest written next to every command's outputs.
#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    schema: &'static str,
    version: u32,
    tool_version: &'static str,
    command: &'a str,
    config: C,
    seeds: Vec<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn write_manifest<C: Serialize>(
    ctx: &Ctx,
    command: &str,
    config: C,
    seeds: Vec<u64>,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<PathBuf, CliError> {
    let m = Manifest {
        schema: "maght.manifest",
        version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        seeds,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = ctx.out_dir.join(format!("{command}.manifest.json"));
    let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    text.push('\n');
    io::write_text(&path, &text)?;
    Ok(path)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    Ok(io::write_text(path, text)?)
}

fn save<T: Document>(path: &Path, doc: &T) -> Result<(), CliError> {
    Ok(io::save(path, doc)?)
}

/// Builds a scenario configuration from flags, then the config file, then defaults.
fn scenario_config(
    kind: ScenarioKind,
    args: &ScenarioArgs,
    file: &ScenarioDefaults,
    default_cases: usize,
    lambda: f64,
) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::new(kind, args.seed.or(file.seed).unwrap_or(0));
    if let Some(b) = args.bounds.as_ref().or(file.bounds.as_ref()) {
        (cfg.width, cfg.depth) = parse_bounds(b).map_err(CliError::Usage)?;
    }
    cfg.cases_per_length = args.cases.or(file.cases).unwrap_or(default_cases);
    if let Some(l) = args.traj_len.as_ref().or(file.traj_len.as_ref()) {
        cfg.lengths = l.clone();
    }
    if let Some(n) = args.mag_noise.or(file.mag_noise) {
        cfg.mag_noise = n;
    }
    if let Some(d) = args.drift.or(file.drift) {
        cfg.drift.sigma_trans = d;
    }
    cfg.lambda = lambda;
    if cfg.cases_per_length == 0 {
        return Err(CliError::Usage("--cases must be at least 1".into()));
    }
    if cfg.lengths.is_empty() || cfg.lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(CliError::Usage("--traj-len values must be positive".into()));
    }
    if !(cfg.mag_noise >= 0.0) || !cfg.drift.is_valid() {
        return Err(CliError::Usage("--mag-noise and --drift must be non-negative".into()));
    }
    Ok(cfg)
}

fn cmd_gen(ctx: &Ctx, a: &GenArgs) -> Result<(), CliError> {
    let sd = &ctx.file.scenario;
    if a.scenario.bounds.is_none() && sd.bounds.is_none() {
        return Err(CliError::Usage("gen requires --bounds WxD (e.g. --bounds 40x30)".into()));
    }
    let kind = match (a.kind, &sd.kind) {
        (Some(k), _) => k,
        (None, Some(k)) => k.parse().map_err(CliError::Usage)?,
        (None, None) => ScenarioKind::Open,
    };
    let lambda = a.lambda.unwrap_or(ctx.file.maght.lambda);
    let cfg = scenario_config(kind, &a.scenario, sd, 20, lambda)?;
    let scenario = gen_scenario(&cfg)?;
    let nodes = scenario.map.build(&scenario.world, ctx.file.maght.horizontal_floor).map_err(|e| CliError::Usage(e.to_string()))?.nodes.len();

    let path = ctx.out(&a.output, "scenario.json");
    save(&path, &scenario)?;
    write_manifest(ctx, "gen", &cfg, vec![cfg.seed], &[], &[&path])?;
    ctx.say(format!(
        "scenario {}: {} cases, {} map nodes, {} dipoles, seed {} -> {}",
        scenario_name(kind),
        scenario.cases.len(),
        nodes,
        scenario.world.dipoles.len(),
        cfg.seed,
        path.display()
    ));
    Ok(())
}

fn scenario_name(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::Open => "open",
        ScenarioKind::Corridor => "corridor",
        ScenarioKind::Unmapped => "unmapped",
        ScenarioKind::Staircase => "staircase",
    }
}

fn cmd_map(ctx: &Ctx, a: &MapArgs) -> Result<(), CliError> {
    let scenario: Scenario = io::load(&a.scenario)?;
    let floor = a.horizontal_floor.unwrap_or(ctx.file.maght.horizontal_floor);
    let map = scenario.map.build(&scenario.world, floor).map_err(|e| CliError::Schema(format!("{}: {e}", a.scenario.display())))?;
    let path = ctx.out(&a.output, "map.json");
    save(&path, &MapDocument::from_map(&map))?;
    let mut outputs = vec![path.clone()];
    if a.export_trajectories {
        for case in &scenario.cases {
            let p = ctx.out_dir.join("trajectories").join(format!("case-{:04}.json", case.id));
            save(&p, &TrajectoryDocument { trajectory: case.input.clone(), truth: Some(case.truth) })?;
            outputs.push(p);
        }
    }
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(ctx, "map", serde_json::json!({ "horizontal_floor": floor }), vec![scenario.config.seed], &[&a.scenario], &outs)?;
    ctx.say(format!(
        "map: {} nodes ({} indexed), λ = {} m -> {}",
        map.nodes.len(),
        map.indexed_len(),
        map.lattice_step,
        path.display()
    ));
    if a.export_trajectories {
        ctx.say(format!("{} trajectories -> {}", scenario.cases.len(), ctx.out_dir.join("trajectories").display()));
    }
    Ok(())
}

fn cmd_reloc(ctx: &Ctx, a: &RelocArgs) -> Result<(), CliError> {
    let params = a.maght.resolve(ctx.file.maght)?;
    let map = io::load::<MapDocument>(&a.map)?.into_map(params.horizontal_floor)?;
    let (doc, input_path) = match (&a.trajectory, &a.scenario, a.case) {
        (Some(t), _, _) => (io::load::<TrajectoryDocument>(t)?, t.clone()),
        (None, Some(s), Some(id)) => {
            let scenario: Scenario = io::load(s)?;
            let case = scenario
                .cases
                .iter()
                .find(|c| c.id == id)
                .ok_or_else(|| CliError::Usage(format!("{} has no case {id}", s.display())))?;
            (TrajectoryDocument { trajectory: case.input.clone(), truth: Some(case.truth) }, s.clone())
        }
        _ => return Err(CliError::Usage("reloc needs --trajectory FILE or --scenario FILE --case ID".into())),
    };

    let start = Instant::now();
    let result = relocalize(&doc.trajectory, &map, &params).map_err(|e| CliError::Schema(e.to_string()))?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    let pose = result.pose_in_input_frame();
    let out = ResultDocument {
        outcome: result.outcome.clone(),
        pose,
        barycenter: result.barycenter,
        samples_used: result.samples_used,
        wall_ms: a.timing.then_some(wall_ms),
    };
    let path = ctx.out(&a.output, "result.json");
    save(&path, &out)?;
    write_manifest(ctx, "reloc", params, vec![], &[&a.map, &input_path], &[&path])?;

    match (&result.outcome, pose) {
        (RelocOutcome::Converged { cluster_size, total_votes, census, .. }, Some(p)) => {
            ctx.say("outcome: converged");
            ctx.say(format!("pose: x = {:.3} m, y = {:.3} m, z = {:.3} m, yaw = {:.2}°", p.x, p.y, p.z, p.psi.to_degrees()));
            let shown: Vec<String> = census.iter().take(5).map(|c| c.to_string()).collect();
            ctx.say(format!("cluster: {cluster_size} of {total_votes} votes; largest clusters [{}]", shown.join(", ")));
            if let Some(truth) = doc.truth {
                let s = score(&truth, &p);
                ctx.say(format!(
                    "error: {:.3} m, {:.2}° ({})",
                    s.translation_error,
                    s.yaw_error.to_degrees(),
                    if s.correct { "correct" } else { "incorrect" }
                ));
            }
        }
        _ => ctx.say(format!("outcome: no-consensus ({} votes)", result.total_votes())),
    }
    ctx.say(format!("samples used: {}; wall time: {wall_ms:.3} ms", result.samples_used));
    ctx.say(format!("result -> {}", path.display()));
    Ok(())
}

/// Loads a scenario file, or generates a preset.
fn resolve_scenario(
    ctx: &Ctx,
    spec: Option<&str>,
    gen: &ScenarioArgs,
    default_cases: usize,
    lambda: f64,
) -> Result<(Scenario, String, Option<PathBuf>), CliError> {
    let spec = spec.unwrap_or("open");
    if let Ok(kind) = spec.parse::<ScenarioKind>() {
        let cfg = scenario_config(kind, gen, &ctx.file.scenario, default_cases, lambda)?;
        let id = format!("{}-s{}", scenario_name(kind), cfg.seed);
        return Ok((gen_scenario(&cfg)?, id, None));
    }
    let path = PathBuf::from(spec);
    if gen.bounds.is_some() || gen.cases.is_some() || gen.seed.is_some() || gen.mag_noise.is_some() || gen.drift.is_some() {
        return Err(CliError::Usage("--bounds, --cases, --seed, --mag-noise and --drift apply only to presets".into()));
    }
    let mut scenario: Scenario = io::load(&path)?;
    if let Some(lens) = &gen.traj_len {
        scenario.cases.retain(|c| lens.iter().any(|l| (l - c.traj_len).abs() < 1e-9));
        if scenario.cases.is_empty() {
            return Err(CliError::Usage(format!("{} has no cases of the requested lengths", path.display())));
        }
    }
    let id = path.file_stem().map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
    Ok((scenario, id, Some(path)))
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    scenario_id: &'a str,
    scenario: &'a ScenarioConfig,
    methods: Vec<String>,
    maght: MaghtParams,
    pf: PfParams,
    drift_sweep: Option<&'a [f64]>,
    timing: bool,
}

fn cmd_eval(ctx: &Ctx, a: &EvalArgs) -> Result<(), CliError> {
    let maght = a.maght.resolve(ctx.file.maght)?;
    let pf = a.pf.resolve(ctx.file.pf)?;
    let methods = a.methods.clone().unwrap_or_else(|| vec![Method::Maght]);
    let (scenario, id, input) = resolve_scenario(ctx, a.scenario.as_deref(), &a.gen, 100, maght.lambda)?;
    let opts = EvalOptions { timing: a.timing };
    let inputs: Vec<&Path> = input.iter().map(PathBuf::as_path).collect();
    let config = EvalConfig {
        scenario_id: &id,
        scenario: &scenario.config,
        methods: methods.iter().map(Method::to_string).collect(),
        maght,
        pf,
        drift_sweep: a.drift_sweep.as_deref(),
        timing: a.timing,
    };

    if let Some(targets) = &a.drift_sweep {
        if targets.is_empty() || targets.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(CliError::Usage("--drift-sweep values must be non-negative".into()));
        }
        let points = drift_sweep(&scenario, &id, targets, &methods, &maght, &pf, opts)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut table = format!(
            "{:>14} {:>14} {:<8} {:>6} {:>8} {:>10} {:>12}\n",
            "target_rpe_m", "median_rpe_m", "method", "cases", "recall", "t_err_m", "yaw_err_deg"
        );
        let header = ["target_rpe_m", "median_rpe_m", "method", "cases", "recall", "precision", "t_err_median_m", "yaw_err_median_deg"];
        w.write_record(header).expect("in-memory write");
        for p in &points {
            for s in &summaries_by_method(&p.report.outcomes) {
                let cell = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
                w.write_record([
                    p.target_rpe.to_string(),
                    cell(p.median_rpe),
                    s.method.to_string(),
                    s.cases.to_string(),
                    cell(s.recall),
                    cell(s.precision),
                    cell(s.t_err_median),
                    cell(s.yaw_err_median_deg),
                ])
                .expect("in-memory write");
                let fmt = |v: Option<f64>, d: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.d$}"));
                table.push_str(&format!(
                    "{:>14.3} {:>14} {:<8} {:>6} {:>8} {:>10} {:>12}\n",
                    p.target_rpe,
                    fmt(p.median_rpe, 3),
                    s.method.to_string(),
                    s.cases,
                    s.recall.map_or_else(|| "-".to_string(), |r| format!("{:.1}%", 100.0 * r)),
                    fmt(s.t_err_median, 3),
                    fmt(s.yaw_err_median_deg, 2),
                ));
            }
        }
        let csv_text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        let path = ctx.out_dir.join("drift_sweep.csv");
        write(&path, &csv_text)?;
        write_manifest(ctx, "eval", &config, vec![scenario.config.seed], &inputs, &[&path])?;
        ctx.say(table.trim_end());
        ctx.say(format!("drift sweep -> {}", path.display()));
        return Ok(());
    }

    let report = run_experiment(&scenario, &id, &methods, &maght, &pf, opts)?;
    let csv_path = ctx.out_dir.join("eval.csv");
    let jsonl_path = ctx.out_dir.join("eval.jsonl");
    write(&csv_path, &emit_csv(&report))?;
    write(&jsonl_path, &emit_json_lines(&report))?;
    write_manifest(ctx, "eval", &config, vec![scenario.config.seed], &inputs, &[&csv_path, &jsonl_path])?;
    if !ctx.quiet {
        print!("{}", emit_report(&report, a.format));
        if let Some(ms) = report.index_build_ms {
            println!("feature index build: {ms:.1} ms");
        }
        println!("reports -> {}, {}", csv_path.display(), jsonl_path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchRecord {
    method: String,
    cases: usize,
    converged: usize,
    correct: usize,
    wall_ms_median: Option<f64>,
    wall_ms_p90: Option<f64>,
    /// Median wall time relative to MagHT.
    slowdown_vs_maght: Option<f64>,
}

#[derive(Serialize)]
struct BenchDocument {
    scenario_id: String,
    index_build_ms: Option<f64>,
    methods: Vec<BenchRecord>,
}

fn cmd_bench(ctx: &Ctx, a: &BenchArgs) -> Result<(), CliError> {
    let maght = a.maght.resolve(ctx.file.maght)?;
    let pf = a.pf.resolve(ctx.file.pf)?;
    let methods = a.methods.clone().unwrap_or_else(|| vec![Method::Maght, Method::Pf(1600)]);
    let (scenario, id, input) = resolve_scenario(ctx, a.scenario.as_deref(), &a.gen, 20, maght.lambda)?;
    let report = run_experiment(&scenario, &id, &methods, &maght, &pf, EvalOptions { timing: true })?;
    let summaries = summaries_by_method(&report.outcomes);
    let base = summaries.iter().find(|s| s.method == Method::Maght).and_then(|s| s.wall_ms_median);
    let records: Vec<BenchRecord> = summaries
        .iter()
        .map(|s| BenchRecord {
            method: s.method.to_string(),
            cases: s.cases,
            converged: s.converged,
            correct: s.correct,
            wall_ms_median: s.wall_ms_median,
            wall_ms_p90: s.wall_ms_p90,
            slowdown_vs_maght: s.wall_ms_median.zip(base).map(|(m, b)| m / b),
        })
        .collect();

    if !ctx.quiet {
        println!("{:<8} {:>6} {:>6} {:>7} {:>14} {:>11} {:>10}", "method", "cases", "conv", "correct", "wall_median_ms", "wall_p90_ms", "vs_maght");
        for r in &records {
            let f = |v: Option<f64>, d: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.d$}"));
            println!(
                "{:<8} {:>6} {:>6} {:>7} {:>14} {:>11} {:>10}",
                r.method,
                r.cases,
                r.converged,
                r.correct,
                f(r.wall_ms_median, 3),
                f(r.wall_ms_p90, 3),
                f(r.slowdown_vs_maght, 1)
            );
        }
        if let Some(ms) = report.index_build_ms {
            println!("feature index build: {ms:.1} ms");
        }
    }

    let mut doc = BenchDocument { scenario_id: id.clone(), index_build_ms: report.index_build_ms, methods: records };
    if !a.timing {
        doc.index_build_ms = None;
        for r in &mut doc.methods {
            r.wall_ms_median = None;
            r.wall_ms_p90 = None;
            r.slowdown_vs_maght = None;
        }
    }
    let path = ctx.out_dir.join("bench.json");
    let mut text = serde_json::to_string_pretty(&doc).expect("bench serializes");
    text.push('\n');
    write(&path, &text)?;
    let inputs: Vec<&Path> = input.iter().map(PathBuf::as_path).collect();
    let config = serde_json::json!({ "scenario": scenario.config, "methods": doc.methods.iter().map(|r| &r.method).collect::<Vec<_>>(), "maght": maght, "pf": pf, "timing": a.timing });
    write_manifest(ctx, "bench", config, vec![scenario.config.seed], &inputs, &[&path])?;
    ctx.say(format!("bench -> {}", path.display()));
    Ok(())
}
