use pbd_core::fourier::{dft_closed_form, empirical_dft, sketch_shape};
use pbd_core::learner::{
    concentration_bound, default_sample_budget, estimate_mean_var, learn_shifted_binomial, proper_learn,
    sketch_deviation, Branch, LearnConfig,
};
use pbd_core::oracle::{brute_force_learn, corpus_model, shifted_binomial, tv_exact, windowed_shifted_binomial_tv};
use pbd_core::polysys::Regime;
use pbd_core::{canonicalize, Component, Error, PbdModel, SampleSet};

fn model(c: &[(f64, usize)]) -> PbdModel {
    PbdModel::new(c.iter().map(|&(p, m)| Component::new(p, m)).collect()).unwrap()
}

fn learn(truth: &PbdModel, eps: f64, seed: u64) -> pbd_core::learner::LearnReport {
    let mut cfg = LearnConfig::new(eps);
    cfg.seed = seed;
    let samples = truth.sample(cfg.sample_budget(), seed);
    proper_learn(&samples, truth.n(), &cfg).unwrap()
}

#[test]
fn point_mass_is_learned_exactly() {
    for eps in [0.1, 0.25] {
        let truth = model(&[(0.0, 12)]);
        let r = learn(&truth, eps, 1);
        assert_eq!(tv_exact(&truth, &r.output), 0.0);
        assert_eq!(r.systems_tried, 1);
        assert_eq!(r.output.n(), 12);
    }
}

#[test]
fn half_coin_hundred() {
    let truth = model(&[(0.5, 100)]);
    let r = learn(&truth, 0.1, 7);
    let tv = tv_exact(&truth, &r.output);
    assert!(tv <= 0.1, "{tv}");
    assert_eq!(r.branch, Branch::System);
    assert_eq!(r.system_regime, Some(Regime::Small));
    assert_eq!(r.samples_used, default_sample_budget(0.1, 10.0));
    let (m, l) = sketch_shape(0.1, 10.0, r.sigma_estimate).unwrap();
    assert_eq!((r.modulus, r.halfwidth), (m, l));
}

#[test]
fn learning_is_reproducible() {
    let truth = model(&[(0.2, 7), (0.65, 5)]);
    let a = learn(&truth, 0.2, 3);
    let b = learn(&truth, 0.2, 3);
    assert_eq!(a.output, b.output);
    assert_eq!(a.systems_tried, b.systems_tried);
    assert_eq!(a.multiset, b.multiset);
}

#[test]
fn moment_estimate_from_a_thousand_samples() {
    let s = model(&[(0.5, 100)]).sample(1000, 7);
    let (mu, sigma) = estimate_mean_var(&s).unwrap();
    assert!((mu - 50.0).abs() <= 5.0 * 25f64.sqrt(), "{mu}");
    assert!((sigma * sigma - 26.0).abs() < 6.0, "{sigma}");
}

#[test]
fn shifted_binomial_examples() {
    let s = SampleSet::new(vec![4; 30], None).unwrap();
    let m = learn_shifted_binomial(&s, 9, 0.1).unwrap();
    assert_eq!(m.components(), &[Component::new(0.0, 5), Component::new(1.0, 4)]);
    // zero variance, non-integer mean is impossible; the mean rounds half to even
    let s = SampleSet::new(vec![2, 2, 2, 2], None).unwrap();
    assert_eq!(learn_shifted_binomial(&s, 5, 0.1).unwrap().mean(), 2.0);

    let truth = shifted_binomial(1_000_000, 0, 1_000_000, 0.3).unwrap();
    let samples = truth.sample(10_000, 4);
    let out = learn_shifted_binomial(&samples, 1_000_000, 0.1).unwrap();
    assert_eq!(out.n(), 1_000_000);
    let w = windowed_shifted_binomial_tv(&truth, &out).unwrap();
    assert!(w.tv_upper <= 0.1, "{w:?}");
    assert!(w.tail_bound < 1e-6);
}

#[test]
fn shifted_binomial_with_ones_and_zeros() {
    let truth = shifted_binomial(5000, 1200, 3000, 0.4).unwrap();
    let out = learn_shifted_binomial(&truth.sample(10_000, 8), 5000, 0.1).unwrap();
    let w = windowed_shifted_binomial_tv(&truth, &out).unwrap();
    let exact = tv_exact(&truth, &out);
    assert!(exact <= 0.1, "{exact}");
    assert!((w.tv_window - exact).abs() < 1e-9);
}

#[test]
fn large_sigma_takes_the_binomial_branch() {
    let truth = model(&[(0.5, 400)]);
    let mut cfg = LearnConfig::new(0.1);
    cfg.large_variance_threshold = Some(5.0);
    let samples = truth.sample(cfg.sample_budget(), 2);
    let r = proper_learn(&samples, 400, &cfg).unwrap();
    assert_eq!(r.branch, Branch::ShiftedBinomial);
    assert_eq!(r.system_regime, None);
    assert!(tv_exact(&truth, &r.output) <= 0.1);
}

#[test]
fn empirical_sketch_concentrates() {
    let truth = model(&[(0.5, 100)]);
    let s = truth.sample(100_000, 9);
    let (_, sigma) = estimate_mean_var(&s).unwrap();
    let (m, l) = sketch_shape(0.1, 10.0, sigma).unwrap();
    let h = empirical_dft(&s, m, l).unwrap();
    let exact = dft_closed_form(&truth, m, l).unwrap();
    let (max, _) = sketch_deviation(&h, &exact).unwrap();
    assert!(max <= 0.02, "{max}");
    assert!(max <= concentration_bound(l, s.len()));
}

#[test]
fn exhaustion_is_reported() {
    let truth = corpus_model(1);
    let mut cfg = LearnConfig::new(0.1);
    cfg.max_systems = 1;
    let samples = truth.sample(cfg.sample_budget(), 1);
    match proper_learn(&samples, truth.n(), &cfg) {
        Err(Error::Exhausted { tried, .. }) => assert_eq!(tried, 1),
        other => panic!("expected exhaustion, got {other:?}"),
    }
}

#[test]
fn input_errors() {
    let cfg = LearnConfig::new(0.1);
    let s = SampleSet::new(vec![5; cfg.sample_budget()], None).unwrap();
    assert!(matches!(proper_learn(&s, 3, &cfg), Err(Error::SampleOutOfRange { value: 5, n: 3 })));
    let mut bad = cfg.clone();
    bad.epsilon = 0.5;
    assert!(matches!(proper_learn(&s, 10, &bad), Err(Error::Epsilon(_))));
}

#[test]
fn agrees_with_brute_force_for_three_components() {
    let truth = canonicalize(&[0.2, 0.5, 0.9]).unwrap();
    let r = learn(&truth, 0.1, 11);
    let samples = truth.sample(100_000, 12);
    let brute = brute_force_learn(&samples, 3, 0.05).unwrap();
    let (a, b) = (tv_exact(&truth, &r.output), tv_exact(&truth, &brute));
    assert!(a <= 0.1 && b <= 0.1, "{a} {b}");
    assert!(tv_exact(&r.output, &brute) <= 0.2);
}
