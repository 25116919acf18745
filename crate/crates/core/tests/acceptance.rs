//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use conjure::estimator::{conjure_distance_with_trace, estimate, read_trace_file, write_trace_file};
use conjure::eval::{ablate, evaluate_world, gen_semantic_world, SemanticWorld, Sweep, WorldConfig, DEFAULT8};
use conjure::oracle::{gaussian_suite, gmm_suite, SKEWED_CASE};
use conjure::score::{train_toy, AnalyticModel, GaussianConditionSpec, ToyScoreNet, TrainConfig, Vocabulary};
use conjure::sde::DiffusionSchedule;
use conjure::{estimate_from_trace, kl_distance, EstimatorConfig, Method, Result, TimestepPrior};

const SEED: u64 = 7;

// Gaussian exactness
const GAUSSIAN_CASES: usize = 20;
const GAUSSIAN_K: usize = 5;
const GAUSSIAN_REL_TOL: f64 = 1e-8;
const GAUSSIAN_SPREAD_TOL: f64 = 1e-10;
const GAUSSIAN_BUDGET: Duration = Duration::from_secs(5);

// Mixture agreement
const GMM_K: usize = 200;
const GMM_Z: f64 = 3.0;
const KL_ASYMMETRY_Z: f64 = 3.0;
const GMM_BUDGET: Duration = Duration::from_secs(120);

// Identities
const IDENTITY_K: usize = 5;
const SE_SMALL_K: usize = 20;
const SE_LARGE_K: usize = 100;
const SE_SLACK: f64 = 0.30;

// Toy world
const WORLD_SEED: u64 = 0;
const DATA_SEED: u64 = 1;
const SAMPLES_PER_LEAF: usize = 1500;
const TOY_STEPS: usize = 10;
const TOY_K: usize = 5;
const TRIPLET_MIN: f64 = 0.95;
const ALIGNMENT_MIN: f64 = 70.0;
const TOY_BUDGET: Duration = Duration::from_secs(15 * 60);

// Ablations
const K_SWEEP: [usize; 5] = [1, 2, 3, 4, 5];
const K_SPREAD_MAX: f64 = 2.0;
const T_SWEEP: [usize; 3] = [5, 10, 20];
const T_STABILITY_MIN: f64 = 0.9;

struct Toy {
    world: SemanticWorld,
    net: ToyScoreNet,
    train_time: Duration,
}

fn toy() -> &'static Toy {
    static CELL: OnceLock<Toy> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let world = gen_semantic_world(DEFAULT8, WorldConfig::default(), WORLD_SEED).expect("default world");
        let schedule = DiffusionSchedule::with_steps(TOY_STEPS).expect("schedule");
        let data = world.sample_dataset(SAMPLES_PER_LEAF, DATA_SEED);
        let net = train_toy(&data, &world.vocabulary(), &schedule, &TrainConfig::default()).expect("training");
        Toy { world, net, train_time: start.elapsed() }
    })
}

fn toy_config() -> EstimatorConfig {
    EstimatorConfig { k: TOY_K, prior: TimestepPrior::UniformAll, seed: SEED }
}

type Check = Result<(bool, String)>;

fn gaussian_exactness() -> Check {
    let start = Instant::now();
    let mut worst_rel = 0.0f64;
    let mut worst_spread = 0.0f64;
    let mut failed = Vec::new();
    for case in gaussian_suite(GAUSSIAN_CASES, SEED) {
        let (report, est) = case.run(GAUSSIAN_K, SEED)?;
        let lo = est.per_iteration.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = est.per_iteration.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        worst_rel = worst_rel.max(report.relative_error);
        worst_spread = worst_spread.max(hi - lo);
        if !report.pass || hi - lo > GAUSSIAN_SPREAD_TOL {
            failed.push(case.name.clone());
        }
    }
    let elapsed = start.elapsed();
    let pass = failed.is_empty() && elapsed < GAUSSIAN_BUDGET;
    Ok((
        pass,
        format!(
            "{GAUSSIAN_CASES} cases, max rel err {worst_rel:.2e} (tol {GAUSSIAN_REL_TOL:.0e}), max per-iteration spread \
             {worst_spread:.2e} (tol {GAUSSIAN_SPREAD_TOL:.0e}), {:.2}s (budget {}s), failed {failed:?}",
            elapsed.as_secs_f64(),
            GAUSSIAN_BUDGET.as_secs()
        ),
    ))
}

fn gmm_agreement() -> Check {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    let mut kl_detail = String::from("skewed pair missing");
    let mut kl_pass = false;
    for case in gmm_suite() {
        let (report, _) = case.run(GMM_K, SEED)?;
        pass &= report.pass;
        parts.push(format!("{} z={:.2}", case.name, report.z_score.unwrap_or(f64::INFINITY)));
        if case.name == SKEWED_CASE {
            let (model, vocab) = case.model();
            let e = vocab.entries();
            let s = case.schedule();
            let ab = kl_distance(&model, &e[0], &e[1], GMM_K, &s, TimestepPrior::UniformAll, SEED)?;
            let ba = kl_distance(&model, &e[1], &e[0], GMM_K, &s, TimestepPrior::UniformAll, SEED)?;
            let se = (ab.std_error.unwrap_or(0.0).powi(2) + ba.std_error.unwrap_or(0.0).powi(2)).sqrt();
            let z = (ab.value - ba.value).abs() / se;
            kl_pass = z > KL_ASYMMETRY_Z;
            kl_detail = format!("kl {:.3} vs {:.3}, |diff|/SE {z:.1} (need > {KL_ASYMMETRY_Z})", ab.value, ba.value);
        }
    }
    let elapsed = start.elapsed();
    Ok((
        pass && kl_pass && elapsed < GMM_BUDGET,
        format!(
            "k={GMM_K}, within {GMM_Z} SE: [{}]; {kl_detail}; {:.1}s (budget {}s)",
            parts.join(", "),
            elapsed.as_secs_f64(),
            GMM_BUDGET.as_secs()
        ),
    ))
}

fn estimator_identities() -> Check {
    let mut notes = Vec::new();

    // Zero on identity for every method, on a mixture world and a Gaussian world.
    let mut zero_ok = true;
    let cases = gmm_suite();
    let gaussian_vocab = Vocabulary::from_labels(&["a", "b"])?;
    let gaussian = AnalyticModel::gaussian(
        gaussian_vocab.clone(),
        vec![
            GaussianConditionSpec::new(vec![0.5, 1.0], 0.6)?,
            GaussianConditionSpec::new(vec![-1.0, 0.2], 0.6)?,
        ],
    )?;
    let s10 = DiffusionSchedule::with_steps(10)?;
    let cfg = EstimatorConfig { k: IDENTITY_K, prior: TimestepPrior::UniformAll, seed: SEED };
    for method in Method::ALL {
        for case in &cases {
            let (model, vocab) = case.model();
            for y in vocab.entries() {
                zero_ok &= estimate(method, &model, y, y, &s10, &cfg)?.value.to_bits() == 0;
            }
        }
        for y in gaussian_vocab.entries() {
            zero_ok &= estimate(method, &gaussian, y, y, &s10, &cfg)?.value.to_bits() == 0;
        }
    }
    notes.push(format!("d(y,y)=0 bitwise for all five: {zero_ok}"));

    // Seed-matched symmetry.
    let mut sym_ok = true;
    for case in &cases {
        let (model, vocab) = case.model();
        let e = vocab.entries();
        let s = case.schedule();
        let ab = conjure::conjure_distance(&model, &e[0], &e[1], IDENTITY_K, &s, TimestepPrior::UniformAll, SEED)?;
        let ba = conjure::conjure_distance(&model, &e[1], &e[0], IDENTITY_K, &s, TimestepPrior::UniformAll, SEED)?;
        sym_ok &= ab.value.to_bits() == ba.value.to_bits();
    }
    notes.push(format!("conjure(a,b)==conjure(b,a) bitwise: {sym_ok}"));

    // Trace file round trip.
    let case = &cases[1];
    let (model, vocab) = case.model();
    let e = vocab.entries();
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("trace.jsonl");
    let mut trace_ok = true;
    for prior in [TimestepPrior::UniformAll, TimestepPrior::Cumulative(5), TimestepPrior::Pointwise(10)] {
        let (est, trace) = conjure_distance_with_trace(&model, &e[0], &e[1], IDENTITY_K, &s10, prior, SEED)?;
        write_trace_file(&trace, &path)?;
        let replay = estimate_from_trace(&read_trace_file(&path)?, prior)?;
        trace_ok &= replay.value.to_bits() == est.value.to_bits() && replay.per_iteration == est.per_iteration;
    }
    notes.push(format!("trace round trip bit-identical: {trace_ok}"));

    // Standard-error scaling.
    let case = &cases[0];
    let (model, vocab) = case.model();
    let e = vocab.entries();
    let s = case.schedule();
    let small = conjure::conjure_distance(&model, &e[0], &e[1], SE_SMALL_K, &s, TimestepPrior::UniformAll, SEED)?;
    let large = conjure::conjure_distance(&model, &e[0], &e[1], SE_LARGE_K, &s, TimestepPrior::UniformAll, SEED)?;
    let ratio = large.std_error.unwrap_or(f64::NAN) / small.std_error.unwrap_or(f64::NAN);
    let ideal = (SE_SMALL_K as f64 / SE_LARGE_K as f64).sqrt();
    let se_ok = (ratio / ideal - 1.0).abs() <= SE_SLACK;
    notes.push(format!(
        "SE(k={SE_LARGE_K})/SE(k={SE_SMALL_K}) = {ratio:.3} vs {ideal:.3} (slack {:.0}%): {se_ok}",
        SE_SLACK * 100.0
    ));

    Ok((zero_ok && sym_ok && trace_ok && se_ok, notes.join("; ")))
}

fn toy_recovery() -> Check {
    let t = toy();
    let start = Instant::now();
    let s = DiffusionSchedule::with_steps(TOY_STEPS)?;
    let a = evaluate_world(&t.world, &t.net, Method::Conjure, &s, &toy_config())?;
    let elapsed = t.train_time + start.elapsed();
    let triplets = a.triplet_agreement.unwrap_or(0.0);
    let pass = a.within_mean < a.between_mean
        && triplets >= TRIPLET_MIN
        && a.score >= ALIGNMENT_MIN
        && elapsed < TOY_BUDGET;
    Ok((
        pass,
        format!(
            "within {:.3} < between {:.3}; triplets {:.1}% (min {:.0}%); alignment {:.2} (min {ALIGNMENT_MIN}); \
             train+eval {:.1}s (budget {}s)",
            a.within_mean,
            a.between_mean,
            100.0 * triplets,
            100.0 * TRIPLET_MIN,
            a.score,
            elapsed.as_secs_f64(),
            TOY_BUDGET.as_secs()
        ),
    ))
}

fn ablations() -> Check {
    let t = toy();
    let params = DiffusionSchedule::with_steps(TOY_STEPS)?.params();
    let base = toy_config();
    let k = ablate(&t.world, &t.net, Method::Conjure, params, &base, &Sweep::K(K_SWEEP.to_vec()))?;
    let steps = ablate(&t.world, &t.net, Method::Conjure, params, &base, &Sweep::Steps(T_SWEEP.to_vec()))?;
    let priors = [
        TimestepPrior::UniformAll,
        TimestepPrior::Cumulative(TOY_STEPS / 2),
        TimestepPrior::Pointwise(TOY_STEPS),
    ];
    let prior = ablate(&t.world, &t.net, Method::Conjure, params, &base, &Sweep::Prior(priors.to_vec()))?;
    let stability = steps.rank_stability()?;
    let uniform_best = prior.scores[1..].iter().all(|s| prior.scores[0] >= *s);
    let pass = k.spread() <= K_SPREAD_MAX && stability >= T_STABILITY_MIN && uniform_best;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/");
    Ok((
        pass,
        format!(
            "k {:?}: {} spread {:.2} (max {K_SPREAD_MAX}); T {:?}: rank stability {stability:.3} (min {T_STABILITY_MIN}); \
             priors {}: {} uniform best: {uniform_best}",
            K_SWEEP,
            fmt(&k.scores),
            k.spread(),
            T_SWEEP,
            prior.values.join("/"),
            fmt(&prior.scores)
        ),
    ))
}

fn baseline_ordering() -> Check {
    let t = toy();
    let s = DiffusionSchedule::with_steps(TOY_STEPS)?;
    let mut scores = Vec::new();
    for m in [Method::Conjure, Method::Initial, Method::Final, Method::Output] {
        scores.push((m, evaluate_world(&t.world, &t.net, m, &s, &toy_config())?.score));
    }
    let ours = scores[0].1;
    let pass = scores[1..].iter().all(|(_, v)| ours >= *v);
    Ok((
        pass,
        scores.iter().map(|(m, v)| format!("{m} {v:.2}")).collect::<Vec<_>>().join(", "),
    ))
}

fn main() {
    let checks: [(&str, fn() -> Check); 6] = [
        ("gaussian-oracle-exactness", gaussian_exactness),
        ("gmm-oracle-agreement", gmm_agreement),
        ("estimator-identities", estimator_identities),
        ("toy-semantic-recovery", toy_recovery),
        ("ablation-analogs", ablations),
        ("baseline-ordering", baseline_ordering),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} {name} [{:.1}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failures} failed", checks.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
