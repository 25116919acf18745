use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use conjure::estimator::{
    conjure_distance_with_trace, estimate, read_trace_file, write_trace_file, DEFAULT_ITERATIONS,
    TRACE_RECORD_SCHEMA,
};
use conjure::eval::{
    ablate, evaluate_traces, evaluate_world, gen_semantic_world, heatmap_svg, line_plot_svg, load_pairs_tsv,
    pairwise_matrix, resolve_world, SemanticWorld, Sweep, WorldConfig,
};
use conjure::oracle::{gaussian_suite, gmm_suite, OracleReport};
use conjure::score::{load_checkpoint, save_checkpoint, train_toy, Guided, TrainConfig};
use conjure::sde::ScheduleParams;
use conjure::{
    estimate_from_trace, DiffusionSchedule, DistanceEstimate, EstimatorConfig, Method, ScoreDifferenceTrace,
    ScoreModel, TimestepPrior,
};

use crate::args::*;
use crate::config::{pick, FileConfig};
use crate::{CliError, CliResult};

const GAUSSIAN_ORACLE_K: usize = 5;
const GMM_ORACLE_K: usize = 200;

pub fn run(cli: Cli) -> CliResult {
    let quiet = cli.quiet;
    match cli.command {
        Command::TrainToy(a) => train_toy_cmd(a, quiet),
        Command::Distance(a) => distance_cmd(a, quiet),
        Command::Matrix(a) => matrix_cmd(a, quiet),
        Command::Eval(a) => eval_cmd(a, quiet),
        Command::Ablate(a) => ablate_cmd(a, quiet),
        Command::OracleCheck(a) => oracle_cmd(a, quiet),
        Command::IngestTrace(a) => ingest_cmd(a, quiet),
        Command::GenWorld(a) => gen_world_cmd(a, quiet),
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

/// Resolved estimator settings.
struct Settings {
    schedule: DiffusionSchedule,
    est: EstimatorConfig,
    guidance: f64,
    method: Method,
}

impl Settings {
    /// The prior must fit the grid it is applied to.
    fn check_prior(&self, steps: usize) -> CliResult {
        self.est.prior.support(steps).map(|_| ()).map_err(usage)
    }
}

fn env_seed() -> CliResult<u64> {
    match std::env::var("CONJURE_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("CONJURE_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn set_threads(n: Option<usize>) -> CliResult {
    if let Some(n) = n {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn settings(a: &EstimatorArgs, method: Option<&str>) -> CliResult<Settings> {
    let file = match &a.config {
        Some(p) => FileConfig::load(p).map_err(usage)?,
        None => FileConfig::default(),
    };
    let defaults = ScheduleParams::default();
    let steps = pick(a.steps, &file, "T", defaults.steps).map_err(usage)?;
    let k = pick(a.k, &file, "k", DEFAULT_ITERATIONS).map_err(usage)?;
    let prior: TimestepPrior = pick(a.prior.clone(), &file, "prior", "uniform".to_string())
        .map_err(usage)?
        .parse()
        .map_err(usage)?;
    let guidance = pick(a.guidance, &file, "guidance", 1.0).map_err(usage)?;
    let seed = match a.seed {
        Some(s) => s,
        None => match file.get("seed").map_err(usage)? {
            Some(s) => s,
            None => env_seed()?,
        },
    };
    let method: Method = pick(method.map(String::from), &file, "method", "conjure".to_string())
        .map_err(usage)?
        .parse()
        .map_err(usage)?;
    let beta_min = pick(a.beta_min, &file, "beta_min", defaults.beta_min).map_err(usage)?;
    let beta_max = pick(a.beta_max, &file, "beta_max", defaults.beta_max).map_err(usage)?;
    let threads = match a.threads {
        Some(n) => Some(n),
        None => file.get("threads").map_err(usage)?,
    };

    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    if steps == 0 {
        return Err(usage("--T must be at least 1"));
    }
    if !guidance.is_finite() {
        return Err(usage("--guidance must be finite"));
    }
    let schedule = DiffusionSchedule::new(steps, beta_min, beta_max).map_err(usage)?;
    set_threads(threads)?;
    Ok(Settings {
        schedule,
        est: EstimatorConfig { k, prior, seed },
        guidance,
        method,
    })
}

/// Pretty JSON to `out`, or stdout.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(&text, out)
}

fn write_text(text: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| runtime(format!("writing {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn summary(quiet: bool, msg: impl std::fmt::Display) {
    if !quiet {
        eprintln!("{msg}");
    }
}

fn load_world(spec: &str, seed: u64) -> CliResult<SemanticWorld> {
    resolve_world(spec, seed).map_err(|e| runtime(format!("loading world {spec}: {e}")))
}

fn load_net(path: &Path, schedule: &DiffusionSchedule) -> CliResult<Box<dyn ScoreModel>> {
    let net = load_checkpoint(path, schedule).map_err(|e| runtime(format!("loading {}: {e}", path.display())))?;
    Ok(Box::new(net))
}

fn with_guidance(model: Box<dyn ScoreModel>, scale: f64) -> Box<dyn ScoreModel> {
    if scale == 1.0 {
        model
    } else {
        Box::new(Guided::new(model, scale))
    }
}

/// Score model from a world or a checkpoint, with guidance applied.
fn build_model(
    world: Option<&SemanticWorld>,
    checkpoint: Option<&Path>,
    s: &Settings,
) -> CliResult<Box<dyn ScoreModel>> {
    let base: Box<dyn ScoreModel> = match (checkpoint, world) {
        (Some(p), _) => load_net(p, &s.schedule)?,
        (None, Some(w)) => Box::new(w.model()),
        (None, None) => return Err(usage("no model source given")),
    };
    Ok(with_guidance(base, s.guidance))
}

/// `*.jsonl` files under `dir`, sorted by path.
fn load_traces(dir: &Path) -> CliResult<Vec<(PathBuf, ScoreDifferenceTrace)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| runtime(format!("reading {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(runtime(format!("no .jsonl traces in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| {
            let t = read_trace_file(&p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            Ok((p, t))
        })
        .collect()
}

fn fmt_estimate(e: &DistanceEstimate) -> String {
    match e.std_error {
        Some(se) => format!("{:.6} +/- {:.6}", e.value, se),
        None => format!("{:.6}", e.value),
    }
}

fn train_toy_cmd(a: TrainToyArgs, quiet: bool) -> CliResult {
    let s = settings(&a.est, None)?;
    let world = load_world(&a.world, a.world_seed)?;
    if a.per_leaf == 0 {
        return Err(usage("--per-leaf must be at least 1"));
    }
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        learning_rate: a.learning_rate.unwrap_or(defaults.learning_rate),
        seed: s.est.seed,
        ..defaults
    };
    let data = world.sample_dataset(a.per_leaf, a.data_seed);
    let net = train_toy(&data, &world.vocabulary(), &s.schedule, &config)?;
    save_checkpoint(&net, &a.checkpoint)
        .map_err(|e| runtime(format!("writing {}: {e}", a.checkpoint.display())))?;
    let report = net.report();
    emit(report, a.out.as_deref())?;
    summary(
        quiet,
        format!(
            "trained {} epochs on {} samples; final loss {:.5}; checkpoint {}",
            report.loss_curve.len(),
            data.len(),
            report.loss_curve.last().copied().unwrap_or(f64::NAN),
            a.checkpoint.display()
        ),
    );
    Ok(())
}

#[derive(Serialize)]
struct DistanceReport {
    #[serde(flatten)]
    estimate: DistanceEstimate,
    #[serde(rename = "T")]
    steps: usize,
    /// Master seed; unknown for replayed traces.
    seed: Option<u64>,
    guidance: f64,
    model: String,
    trace: Option<PathBuf>,
}

fn distance_cmd(a: DistanceArgs, quiet: bool) -> CliResult {
    let s = settings(&a.est, a.method.as_deref())?;
    let report = if let Some(dir) = &a.source.traces {
        if s.method != Method::Conjure {
            return Err(usage("traces only support --method conjure"));
        }
        if a.trace_out.is_some() {
            return Err(usage("--trace-out needs a world or checkpoint source"));
        }
        let traces = load_traces(dir)?;
        let (path, trace) = traces
            .iter()
            .find(|(_, t)| {
                (t.pair.0 == a.a && t.pair.1 == a.b) || (t.pair.0 == a.b && t.pair.1 == a.a)
            })
            .ok_or_else(|| runtime(format!("no trace for ({}, {}) in {}", a.a, a.b, dir.display())))?;
        s.check_prior(trace.meta.steps)?;
        let mut estimate = estimate_from_trace(trace, s.est.prior)?;
        estimate.pair = (a.a.clone(), a.b.clone());
        DistanceReport {
            estimate,
            steps: trace.meta.steps,
            seed: None,
            guidance: trace.meta.guidance,
            model: trace.meta.model.clone(),
            trace: Some(path.clone()),
        }
    } else {
        let world = match &a.source.world {
            Some(w) => Some(load_world(w, a.world_seed)?),
            None => None,
        };
        s.check_prior(s.schedule.steps())?;
        let model = build_model(world.as_ref(), a.source.checkpoint.as_deref(), &s)?;
        let vocab = model.vocabulary();
        let y1 = vocab.by_label(&a.a).map_err(usage)?;
        let y2 = vocab.by_label(&a.b).map_err(usage)?;
        let (estimate, trace) = match (s.method, &a.trace_out) {
            (Method::Conjure, Some(path)) => {
                let (e, t) =
                    conjure_distance_with_trace(&model, y1, y2, s.est.k, &s.schedule, s.est.prior, s.est.seed)?;
                write_trace_file(&t, path).map_err(|e| runtime(format!("writing {}: {e}", path.display())))?;
                (e, Some(path.clone()))
            }
            (_, Some(_)) => return Err(usage("--trace-out is only available for --method conjure")),
            (m, None) => (estimate(m, &model, y1, y2, &s.schedule, &s.est)?, None),
        };
        DistanceReport {
            estimate,
            steps: s.schedule.steps(),
            seed: Some(s.est.seed),
            guidance: s.guidance,
            model: model.name(),
            trace,
        }
    };
    emit(&report, a.out.as_deref())?;
    summary(
        quiet,
        format!(
            "{}({}, {}) = {} (k={}, T={})",
            report.estimate.method,
            a.a,
            a.b,
            fmt_estimate(&report.estimate),
            report.estimate.k,
            report.steps
        ),
    );
    Ok(())
}

fn matrix_cmd(a: MatrixArgs, quiet: bool) -> CliResult {
    let s = settings(&a.est, a.method.as_deref())?;
    let world = match &a.world {
        Some(w) => Some(load_world(w, a.world_seed)?),
        None => None,
    };
    s.check_prior(s.schedule.steps())?;
    let model = build_model(world.as_ref(), a.checkpoint.as_deref(), &s)?;
    let m = pairwise_matrix(&model, model.vocabulary(), s.method, &s.schedule, &s.est)?;
    let mut csv = Vec::new();
    m.write_csv(&mut csv)?;
    write_text(&String::from_utf8(csv).map_err(runtime)?, a.csv.as_deref())?;
    if let Some(p) = &a.svg {
        write_text(&heatmap_svg(&m), Some(p))?;
    }
    if let Some(p) = &a.out {
        emit(&m, Some(p))?;
    }
    let off: Vec<f64> = m.pairs().map(|(i, j)| m.get(i, j)).collect();
    let lo = off.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    summary(quiet, format!("{} matrix over {} prompts; off-diagonal range [{lo:.6}, {hi:.6}]", s.method, m.len()));
    Ok(())
}

fn eval_cmd(a: EvalArgs, quiet: bool) -> CliResult {
    let s = settings(&a.est, a.method.as_deref())?;
    if let (Some(dir), Some(tsv)) = (&a.traces, &a.dataset) {
        if s.method != Method::Conjure {
            return Err(usage("traces only support --method conjure"));
        }
        let dataset = load_pairs_tsv(tsv).map_err(|e| runtime(format!("{}: {e}", tsv.display())))?;
        let traces: Vec<ScoreDifferenceTrace> = load_traces(dir)?.into_iter().map(|(_, t)| t).collect();
        let result = evaluate_traces(&dataset, &traces, s.est.prior)?;
        emit(&result, a.out.as_deref())?;
        summary(
            quiet,
            format!("alignment {:.3} on {} ({} pairs, prior {})", result.score, result.dataset, result.pairs, result.prior),
        );
        return Ok(());
    }
    let spec = a.world.as_deref().ok_or_else(|| usage("eval needs --world or --traces with --dataset"))?;
    s.check_prior(s.schedule.steps())?;
    let world = load_world(spec, a.world_seed)?;
    let model = build_model(Some(&world), a.checkpoint.as_deref(), &s)?;
    let result = evaluate_world(&world, &model, s.method, &s.schedule, &s.est)?;
    emit(&result, a.out.as_deref())?;
    let triplets = result.triplet_agreement.map_or("n/a".to_string(), |t| format!("{:.1}%", 100.0 * t));
    summary(
        quiet,
        format!(
            "{} alignment {:.3}; within {:.6} vs between {:.6}; triplets {triplets}",
            s.method, result.score, result.within_mean, result.between_mean
        ),
    );
    Ok(())
}

fn ablate_cmd(a: AblateArgs, quiet: bool) -> CliResult {
    let s = settings(&a.est, a.method.as_deref())?;
    let sweep = Sweep::parse(&a.param, &a.values).map_err(usage)?;
    if let Sweep::Prior(ps) = &sweep {
        for p in ps {
            p.support(s.schedule.steps()).map_err(usage)?;
        }
    }
    let world = load_world(&a.world, a.world_seed)?;
    let model = build_model(Some(&world), a.checkpoint.as_deref(), &s)?;
    let mut report = ablate(&world, &model, s.method, s.schedule.params(), &s.est, &sweep)?;
    if let Some(p) = &a.svg {
        write_text(&line_plot_svg(&report), Some(p))?;
    }
    let runtimes = std::mem::take(&mut report.runtimes_secs);
    if a.timings {
        report.runtimes_secs = runtimes.clone();
    }
    emit(&report, a.out.as_deref())?;
    if !quiet {
        for ((v, score), secs) in report.values.iter().zip(&report.scores).zip(&runtimes) {
            eprintln!("{}={v}: alignment {score:.3} ({secs:.2}s)", report.parameter);
        }
        eprintln!("spread {:.3}; best {}", report.spread(), report.values[report.best()]);
    }
    Ok(())
}

fn oracle_cmd(a: OracleArgs, quiet: bool) -> CliResult {
    set_threads(a.threads)?;
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?,
    };
    if a.k == Some(0) {
        return Err(usage("--k must be at least 1"));
    }
    let mut reports: Vec<OracleReport> = Vec::new();
    if a.gaussian {
        if a.cases == 0 {
            return Err(usage("--cases must be at least 1"));
        }
        for case in gaussian_suite(a.cases, seed) {
            reports.push(case.run(a.k.unwrap_or(GAUSSIAN_ORACLE_K), seed)?.0);
        }
    }
    if a.gmm {
        for case in gmm_suite() {
            reports.push(case.run(a.k.unwrap_or(GMM_ORACLE_K), seed)?.0);
        }
    }
    emit(&reports, a.out.as_deref())?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.case.as_str()).collect();
    summary(quiet, format!("{}/{} oracle cases passed", reports.len() - failed.len(), reports.len()));
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!("oracle mismatch: {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct IngestReport {
    trace: PathBuf,
    model: String,
    #[serde(rename = "T")]
    steps: usize,
    guidance: f64,
    schedule: String,
    estimate: DistanceEstimate,
    warnings: Vec<String>,
}

fn ingest_cmd(a: IngestArgs, quiet: bool) -> CliResult {
    let Some(target) = a.trace else {
        return write_text(&format!("{TRACE_RECORD_SCHEMA}\n"), a.out.as_deref());
    };
    let prior: TimestepPrior = a.prior.as_deref().unwrap_or("uniform").parse().map_err(usage)?;
    let traces = if target.is_dir() {
        load_traces(&target)?
    } else {
        let t = read_trace_file(&target).map_err(|e| runtime(format!("{}: {e}", target.display())))?;
        vec![(target.clone(), t)]
    };
    let mut reports = Vec::with_capacity(traces.len());
    for (path, t) in traces {
        let estimate = estimate_from_trace(&t, prior).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let warnings = t.warnings();
        reports.push(IngestReport {
            trace: path,
            model: t.meta.model,
            steps: t.meta.steps,
            guidance: t.meta.guidance,
            schedule: t.meta.schedule,
            estimate,
            warnings,
        });
    }
    if target.is_dir() {
        emit(&reports, a.out.as_deref())?;
    } else {
        emit(&reports[0], a.out.as_deref())?;
    }
    let mut warned = 0;
    for r in &reports {
        summary(
            quiet,
            format!(
                "{} ({}, {}) = {} (k={})",
                r.trace.display(),
                r.estimate.pair.0,
                r.estimate.pair.1,
                fmt_estimate(&r.estimate),
                r.estimate.k
            ),
        );
        for w in &r.warnings {
            eprintln!("warning: {}: {w}", r.trace.display());
        }
        warned += r.warnings.len();
    }
    if a.strict && warned > 0 {
        return Err(runtime(format!("{warned} validator warning(s) under --strict")));
    }
    Ok(())
}

fn gen_world_cmd(a: GenWorldArgs, quiet: bool) -> CliResult {
    let d = WorldConfig::default();
    let config = WorldConfig {
        dim: a.dim.unwrap_or(d.dim),
        separation: a.separation.unwrap_or(d.separation),
        radius_ratio: a.radius_ratio.unwrap_or(d.radius_ratio),
        leaf_scale: a.leaf_scale.unwrap_or(d.leaf_scale),
        angle_jitter: a.angle_jitter.unwrap_or(d.angle_jitter),
    };
    let world = gen_semantic_world(&a.tree, config, a.seed).map_err(usage)?;
    emit(&world, a.out.as_deref())?;
    summary(quiet, format!("world with {} leaves in {} dimensions: {}", world.len(), config.dim, world.tree));
    Ok(())
}
