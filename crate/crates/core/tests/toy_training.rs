use std::sync::OnceLock;

use conjure::eval::{evaluate_world, gen_semantic_world, pairwise_matrix, spearman, SemanticWorld, WorldConfig, DEFAULT8};
use conjure::rng::{rng_from_seed, standard_normal};
use conjure::score::{
    load_checkpoint, save_checkpoint, train_toy, GaussianConditionSpec, Guided, LabeledSample, ScoreModel,
    ToyScoreNet, TrainConfig, Vocabulary,
};
use conjure::sde::DiffusionSchedule;
use conjure::{conjure_distance, EstimatorConfig, Method, TimestepPrior};

fn world_and_net() -> &'static (SemanticWorld, ToyScoreNet) {
    static CELL: OnceLock<(SemanticWorld, ToyScoreNet)> = OnceLock::new();
    CELL.get_or_init(|| {
        let world = gen_semantic_world(DEFAULT8, WorldConfig::default(), 0).unwrap();
        let s = DiffusionSchedule::with_steps(10).unwrap();
        let net = train_toy(&world.sample_dataset(1500, 1), &world.vocabulary(), &s, &TrainConfig::default()).unwrap();
        (world, net)
    })
}

fn single_gaussian(epochs: usize) -> (GaussianConditionSpec, Vocabulary, ToyScoreNet) {
    let vocab = Vocabulary::from_labels(&["only"]).unwrap();
    let spec = GaussianConditionSpec::new(vec![1.0, -0.5], 1.0).unwrap();
    let y = vocab.entries()[0].clone();
    let mut r = rng_from_seed(3);
    let data: Vec<LabeledSample> = (0..8000)
        .map(|_| {
            let z = standard_normal(&mut r, 2);
            LabeledSample { x: vec![1.0 + z[0], -0.5 + z[1]], y: y.clone() }
        })
        .collect();
    let s = DiffusionSchedule::with_steps(10).unwrap();
    let net = train_toy(&data, &vocab, &s, &TrainConfig { epochs, ..Default::default() }).unwrap();
    (spec, vocab, net)
}

#[test]
fn single_gaussian_score_is_learned_and_loss_settles() {
    let (spec, vocab, net) = single_gaussian(30);
    let y = &vocab.entries()[0];
    let s = DiffusionSchedule::with_steps(10).unwrap();
    let mut sq = 0.0;
    let mut n = 0usize;
    // Held-out grid: every step, 21 x 21 points around the data.
    for step in 1..=10 {
        let at = s.at(step).unwrap();
        for i in 0..21 {
            for j in 0..21 {
                let x = [-1.5 + 0.25 * i as f64, -3.0 + 0.25 * j as f64];
                let got = net.score(&x, &at, y).unwrap();
                let want = spec.score_at(&x, &at).unwrap();
                sq += got.iter().zip(&want).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                n += 2;
            }
        }
    }
    let rmse = (sq / n as f64).sqrt();
    assert!(rmse <= 0.1, "rmse {rmse}");

    let curve = &net.report().loss_curve;
    assert_eq!(curve.len(), 30);
    assert_eq!(net.report().batch_loss_curve.len(), 30);
    let warmup = 2;
    let mut best = curve[warmup];
    for (e, &l) in curve.iter().enumerate().skip(warmup) {
        assert!(l <= 1.05 * best, "epoch {e}: {l} vs best {best}");
        best = best.min(l);
    }
    assert!(curve[curve.len() - 1] < curve[0]);
}

#[test]
fn separated_conditions_dominate_self_distance() {
    let (world, net) = world_and_net();
    let s = DiffusionSchedule::with_steps(10).unwrap();
    let v = net.vocabulary();
    let (i, j) = (world.index_of("puppy").unwrap(), world.index_of("whale").unwrap());
    let (a, b) = (&v.entries()[i], &v.entries()[j]);
    let cross = conjure_distance(net, a, b, 5, &s, TimestepPrior::UniformAll, 1).unwrap().value;
    let own = conjure_distance(net, a, a, 5, &s, TimestepPrior::UniformAll, 1).unwrap().value;
    assert!(cross > 0.0);
    assert!(cross >= 10.0 * own);
}

#[test]
fn guidance_preserves_distance_ranking() {
    let (_, net) = world_and_net();
    let s = DiffusionSchedule::with_steps(10).unwrap();
    let cfg = EstimatorConfig { k: 5, seed: 7, ..Default::default() };
    let plain = pairwise_matrix(net, net.vocabulary(), Method::Conjure, &s, &cfg).unwrap();
    let guided_model = Guided::new(net, 7.5);
    let guided = pairwise_matrix(&guided_model, net.vocabulary(), Method::Conjure, &s, &cfg).unwrap();
    let rho = spearman(&plain.upper_triangle(), &guided.upper_triangle()).unwrap();
    assert!(rho >= 0.8, "spearman {rho}");
}

#[test]
fn exact_scores_align_at_least_as_well_as_the_network() {
    let (world, net) = world_and_net();
    let s = DiffusionSchedule::with_steps(10).unwrap();
    let cfg = EstimatorConfig { k: 5, seed: 7, ..Default::default() };
    let trained = evaluate_world(world, net, Method::Conjure, &s, &cfg).unwrap();
    let paragon = evaluate_world(world, &world.model(), Method::Conjure, &s, &cfg).unwrap();
    assert!(paragon.score >= trained.score);
    assert!(trained.score > 0.0);
}

#[test]
fn checkpoint_reload_reproduces_distances() {
    let (_, net) = world_and_net();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    save_checkpoint(net, &path).unwrap();
    let s20 = DiffusionSchedule::with_steps(20).unwrap();
    let back = load_checkpoint(&path, &s20).unwrap();
    let v = net.vocabulary();
    let (a, b) = (&v.entries()[0], &v.entries()[5]);
    let before = conjure_distance(net, a, b, 3, &s20, TimestepPrior::UniformAll, 2).unwrap();
    let after = conjure_distance(&back, a, b, 3, &s20, TimestepPrior::UniformAll, 2).unwrap();
    assert_eq!(before.value.to_bits(), after.value.to_bits());
    let other = DiffusionSchedule::new(10, 0.1, 10.0).unwrap();
    assert!(load_checkpoint(&path, &other).is_err());
}
