use conjure::eval::{gen_semantic_world, pairwise_matrix, WorldConfig, DEFAULT8};
use conjure::oracle::{gaussian_conjure_closed_form, gaussian_gap_at, gaussian_output_gap, gmm_final_gap, vp_coefficients};
use conjure::score::{AnalyticModel, GaussianConditionSpec, GmmComponent, GmmConditionSpec, Vocabulary};
use conjure::sde::DiffusionSchedule;
use conjure::{conjure_distance, d_final, d_initial, d_output, kl_distance, EstimatorConfig, Method, TimestepPrior};

fn gaussian_pair() -> (GaussianConditionSpec, GaussianConditionSpec, AnalyticModel, Vocabulary) {
    let a = GaussianConditionSpec::new(vec![0.4, -1.0, 2.0], 0.8).unwrap();
    let b = GaussianConditionSpec::new(vec![-0.3, 0.5, 1.1], 0.8).unwrap();
    let vocab = Vocabulary::from_labels(&["a", "b"]).unwrap();
    let model = AnalyticModel::gaussian(vocab.clone(), vec![a.clone(), b.clone()]).unwrap();
    (a, b, model, vocab)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn gaussian_initial_and_final_gaps_are_closed_form() {
    let (a, b, model, vocab) = gaussian_pair();
    let e = vocab.entries();
    let s = DiffusionSchedule::with_steps(10).unwrap();
    let dm2: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let gap = |t: f64| {
        let (al, sg) = vp_coefficients(0.1, 20.0, t);
        let v = al * al * 0.64 + sg * sg;
        al * al * dm2 / (v * v)
    };

    let init = d_initial(&model, &e[0], &e[1], 4, &s, 3).unwrap();
    assert!(rel(init.value, gap(1.0)) < 1e-10);
    assert!(rel(init.value, gaussian_gap_at(&a, &b, &s, 10).unwrap()) < 1e-10);
    let pointwise = conjure_distance(&model, &e[0], &e[1], 4, &s, TimestepPrior::Pointwise(10), 3).unwrap();
    assert!(rel(init.value, pointwise.value / 2.0) < 1e-12);

    let fin = d_final(&model, &e[0], &e[1], 4, &s, 3).unwrap();
    assert!(rel(fin.value, gap(0.1)) < 1e-10);
}

#[test]
fn gaussian_output_gap_follows_the_linear_recursion() {
    let (a, b, model, vocab) = gaussian_pair();
    let e = vocab.entries();
    for steps in [1, 10, 37] {
        let s = DiffusionSchedule::with_steps(steps).unwrap();
        let est = d_output(&model, &e[0], &e[1], 6, &s, 11).unwrap();
        let exact = gaussian_output_gap(&a, &b, &s).unwrap();
        assert!(exact > 0.0);
        assert!(rel(est.value, exact) < 1e-9, "T={steps}: {} vs {exact}", est.value);
        let spread = est.per_iteration.iter().fold(0.0f64, |m, v| m.max((v - exact).abs()));
        assert!(spread < 1e-9 * exact);
    }
}

#[test]
fn gaussian_kl_is_half_the_symmetric_distance() {
    let (a, b, model, vocab) = gaussian_pair();
    let e = vocab.entries();
    let s = DiffusionSchedule::with_steps(10).unwrap();
    for prior in [TimestepPrior::UniformAll, TimestepPrior::Cumulative(4), TimestepPrior::Pointwise(2)] {
        let kl = kl_distance(&model, &e[0], &e[1], 3, &s, prior, 0).unwrap();
        let exact = gaussian_conjure_closed_form(&a, &b, &s, prior).unwrap();
        assert!(rel(kl.value, exact / 2.0) < 1e-10);
    }
}

#[test]
fn final_gap_on_mixtures_matches_quadrature() {
    let m1 = GmmConditionSpec::new(vec![
        GmmComponent { weight: 0.5, mean: vec![-1.0], scale: 0.5 },
        GmmComponent { weight: 0.5, mean: vec![1.0], scale: 0.5 },
    ])
    .unwrap();
    let m2 = GmmConditionSpec::new(vec![GmmComponent { weight: 1.0, mean: vec![0.5], scale: 0.7 }]).unwrap();
    let vocab = Vocabulary::from_labels(&["a", "b"]).unwrap();
    let model = AnalyticModel::gmm(vocab.clone(), vec![m1.clone(), m2.clone()]).unwrap();
    let e = vocab.entries();
    let s = DiffusionSchedule::with_steps(200).unwrap();
    let est = d_final(&model, &e[0], &e[1], 400, &s, 5).unwrap();
    let exact = gmm_final_gap(&m1, &m2, &s, 2048).unwrap();
    let se = est.std_error.unwrap();
    assert!((est.value - exact).abs() <= 3.0 * se, "{} vs {exact} (se {se})", est.value);
}

#[test]
fn output_distance_separates_world_clusters() {
    let world = gen_semantic_world(DEFAULT8, WorldConfig::default(), 3).unwrap();
    let s = DiffusionSchedule::with_steps(10).unwrap();
    let m = pairwise_matrix(&world.model(), &world.vocabulary(), Method::Output, &s, &EstimatorConfig::default()).unwrap();
    let (within, between) = m.within_between_means(&world.top_level_groups()).unwrap();
    assert!(within < between);
}
