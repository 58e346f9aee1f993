use num_complex::Complex64;
use pbd_core::fourier::{dft_closed_form, empirical_dft, sketch_l2_sq, sketch_shape, taylor_depth, FourierSketch};
use pbd_core::learner::{default_sample_budget, estimate_mean_var};
use pbd_core::oracle::{corpus_model, tv_exact};
use pbd_core::polysys::{
    build_system, interval_feasible, regime_for, solve, FourierPrefilter, Group, PolySystem, Regime, SolverOptions,
    SystemConstants, SystemResidual,
};
use pbd_core::structure::{
    build_scheme, classify_model, enumerate_multisets, Band, IntervalScheme, MultiplicityMultiset, MultisetStream,
    Prefix, Slot, StreamFilter, Triple,
};
use pbd_core::{canonicalize, Component, PbdModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 0.1;
const C: f64 = 10.0;

/// `|g_ξ − 2πi o_ξ| ≤ G_BOUND · ln(1/ε)` at the truth. Frozen from
/// measurement (worst seen about 3200): with C = 10 the window reaches
/// ξ ≈ M/2 in the large regime, where `Var·(ξ/M)²` is far from small.
const G_BOUND: f64 = 4000.0;

fn model(c: &[(f64, usize)]) -> PbdModel {
    PbdModel::new(c.iter().map(|&(p, m)| Component::new(p, m)).collect()).unwrap()
}

/// System of the truth's own multiset against its exact sketch.
fn planted(truth: &PbdModel, eps: f64) -> (PolySystem, IntervalScheme, FourierSketch) {
    let sigma = (truth.variance() + 1.0).sqrt();
    let (m, l) = sketch_shape(eps, C, sigma).unwrap();
    let h = dft_closed_form(truth, m, l).unwrap();
    let scheme = build_scheme(truth.variance(), eps).unwrap();
    let ms = classify_model(truth, &scheme);
    let constants = SystemConstants {
        mean_estimate: truth.mean(),
        sigma_estimate: sigma,
        modulus: m,
        halfwidth: l,
        lmax: taylor_depth(eps, C),
        epsilon: eps,
    };
    let sys = build_system(&ms, &scheme, &h, constants, regime_for(sigma, eps)).unwrap();
    (sys, scheme, h)
}

fn large_model(rng: &mut ChaCha8Rng) -> PbdModel {
    let k = rng.random_range(1..=3);
    let comps: Vec<(f64, usize)> =
        (0..k).map(|_| (0.3 + 0.4 * rng.random::<f64>(), rng.random_range(1200..=2000))).collect();
    model(&comps)
}

fn small_model(rng: &mut ChaCha8Rng) -> PbdModel {
    let k = rng.random_range(1..=3);
    let comps: Vec<(f64, usize)> = (0..k).map(|_| (rng.random::<f64>(), rng.random_range(1..=30))).collect();
    model(&comps)
}

#[test]
fn zero_variable_system_needs_no_search() {
    let truth = model(&[(0.0, 4), (1.0, 3)]);
    let (sys, _, _) = planted(&truth, EPS);
    assert_eq!(sys.dimension(), 0);
    assert_eq!((sys.zeros(), sys.ones()), (4, 3));
    let r = sys.residual(&[]);
    assert!(r.is_feasible(EPS));
    assert!(r.ft_residual < 1e-20);
    assert_eq!(solve(&sys, 0.05, &SolverOptions::default()), Some(vec![]));
    assert!((sys.q_xi(0, &[]) - 1.0).norm() < 1e-15);
}

#[test]
fn planted_systems_solve_in_both_regimes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (regime, make) in
        [(Regime::Small, small_model as fn(&mut ChaCha8Rng) -> PbdModel), (Regime::Large, large_model)]
    {
        for _ in 0..5 {
            let truth = make(&mut rng);
            let (sys, _, h) = planted(&truth, EPS);
            assert_eq!(sys.regime(), regime);
            let truth_values = sys.assignment_for(&truth).unwrap();
            assert!(sys.residual(&truth_values).is_feasible(EPS));
            let delta = EPS / (2.0 * sys.dimension().max(1) as f64);
            let q = solve(&sys, delta, &SolverOptions::default()).expect("planted system is solved");
            let out = sys.expand(&q).unwrap();
            assert_eq!(out.n(), truth.n());
            // the sketch of the expanded model, not the system's approximation
            let exact = dft_closed_form(&out, h.modulus(), h.halfwidth()).unwrap();
            let l2 = sketch_l2_sq(&exact, &h).unwrap();
            assert!(l2 <= SystemResidual::ft_budget(EPS) + 1e-6, "{l2}");
            assert!(tv_exact(&truth, &out) <= EPS);
        }
    }
}

#[test]
fn variance_violating_multiset_has_no_solution() {
    // 40 values in [1/4, 1/2] give variance ≥ 40·3/16 = 7.5 > 2σ̃² = 4
    let scheme = build_scheme(1.0, EPS).unwrap();
    let (lo, hi) = scheme.bounds(Band::low(0));
    assert!(lo >= 0.25 && hi <= 0.5);
    let ms = MultiplicityMultiset::new(vec![Triple::new(40, Slot::Band(Band::low(0)))]);
    let sigma = 2f64.sqrt();
    let (m, l) = sketch_shape(EPS, C, sigma).unwrap();
    let h = dft_closed_form(&model(&[(0.3, 40)]), m, l).unwrap();
    let constants = SystemConstants {
        mean_estimate: 12.0,
        sigma_estimate: sigma,
        modulus: m,
        halfwidth: l,
        lmax: taylor_depth(EPS, C),
        epsilon: EPS,
    };
    let sys = build_system(&ms, &scheme, &h, constants, Regime::Small).unwrap();
    let min_var = 40.0 * lo.min(1.0 - hi) * (1.0 - lo.min(1.0 - hi));
    assert!(min_var > sys.variance_window().1);
    assert!(!interval_feasible(&sys));
    assert_eq!(solve(&sys, 0.01, &SolverOptions::default()), None);
}

#[test]
fn midpoints_of_a_wrong_multiset_miss_the_sketch() {
    let truth = model(&[(0.1, 20)]);
    let sigma = (truth.variance() + 1.0).sqrt();
    let (m, l) = sketch_shape(EPS, C, sigma).unwrap();
    let h = dft_closed_form(&truth, m, l).unwrap();
    let scheme = build_scheme(truth.variance(), EPS).unwrap();
    let ms = MultiplicityMultiset::new(vec![Triple::new(20, Slot::Band(Band::high(0)))]);
    let constants = SystemConstants {
        mean_estimate: truth.mean(),
        sigma_estimate: sigma,
        modulus: m,
        halfwidth: l,
        lmax: taylor_depth(EPS, C),
        epsilon: EPS,
    };
    let sys = build_system(&ms, &scheme, &h, constants, Regime::Small).unwrap();
    let mid: Vec<f64> = sys.variables().iter().map(|v| 0.5 * (v.lower + v.upper)).collect();
    let r = sys.residual(&mid);
    assert!(r.ft_residual > SystemResidual::ft_budget(EPS), "{}", r.ft_residual);
    assert!(!r.is_feasible(EPS));
}

#[test]
fn truth_transform_error_and_g_magnitude() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst_g = 0.0f64;
    for i in 0..20 {
        let truth = if i % 2 == 0 { small_model(&mut rng) } else { large_model(&mut rng) };
        let (sys, _, h) = planted(&truth, EPS);
        let values = sys.assignment_for(&truth).unwrap();
        for xi in 0..=h.halfwidth() {
            let err = (sys.q_xi(xi, &values) - h.coeff(xi as i64)).norm();
            assert!(err < EPS.powi(3), "ξ = {xi}: {err}");
            worst_g = worst_g.max(sys.g_shifted(xi, &values).norm());
        }
    }
    let bound = G_BOUND * (1.0 / EPS).ln();
    assert!(worst_g <= bound, "{worst_g} > {bound}");
}

#[test]
fn small_regime_puts_the_centre_in_the_product() {
    let truth = model(&[(0.05, 3), (0.5, 4), (0.97, 2)]);
    let (sys, _, _) = planted(&truth, EPS);
    assert_eq!(sys.regime(), Regime::Small);
    let groups: Vec<Group> = sys.variables().iter().map(|v| v.group).collect();
    assert!(groups.contains(&Group::Low) && groups.contains(&Group::Middle) && groups.contains(&Group::High));
    for v in sys.variables() {
        match v.group {
            Group::Low => assert!(v.upper <= 0.25),
            Group::High => assert!(v.lower >= 0.75),
            Group::Middle => assert!(v.upper > 0.25 && v.lower < 0.75),
        }
    }
}

/// Admits only prefixes of one multiset that the wrapped filter also admits.
struct Along<'a> {
    target: &'a MultiplicityMultiset,
    inner: FourierPrefilter,
}

impl StreamFilter for Along<'_> {
    fn admits(&self, prefix: &Prefix<'_>) -> bool {
        let free: Vec<_> = self.target.free().collect();
        prefix.ones == self.target.ones()
            && prefix.bands.len() == free.len()
            && prefix.bands.iter().zip(&free).all(|(b, t)| t.slot == Slot::Band(*b))
            && prefix.assigned.iter().zip(&free).all(|(&m, t)| m == t.multiplicity)
            && self.inner.admits(prefix)
    }

    fn admits_counts(&self, ones: usize, bands: &[Band], counts: &[usize]) -> bool {
        ones == self.target.ones()
            && bands
                .iter()
                .zip(counts)
                .all(|(&b, &c)| self.target.free().filter(|t| t.slot == Slot::Band(b)).count() == c)
    }

    fn slot_range(&self, prefix: &Prefix<'_>, lo: usize, hi: usize) -> Option<(usize, usize)> {
        self.inner.slot_range(prefix, lo, hi)
    }
}

#[test]
fn prefilter_keeps_every_planted_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut models: Vec<PbdModel> = (1..=50).filter(|s| s % 5 == 4).map(corpus_model).collect();
    models.extend((0..30).map(|_| small_model(&mut rng)));
    models.extend((0..10).map(|_| large_model(&mut rng)));
    for truth in &models {
        let sigma = (truth.variance() + 1.0).sqrt();
        let (m, l) = sketch_shape(EPS, C, sigma).unwrap();
        let h = dft_closed_form(truth, m, l).unwrap();
        // the learner's scheme resolution
        let scheme = build_scheme(truth.variance(), EPS * EPS).unwrap();
        let witness = classify_model(truth, &scheme);
        let filter = Along { target: &witness, inner: FourierPrefilter::new(&scheme, &h, truth.mean(), sigma, EPS) };
        let found = MultisetStream::new(&scheme, truth.n(), truth.mean(), Box::new(filter))
            .take_while(|ms| ms.free_count() <= witness.free_count())
            .any(|ms| ms == witness);
        assert!(found, "{witness} pruned for {truth:?}");
    }
}

/// Every multiset whose system the solver can satisfy must get through the
/// prefilter, with the learner's split of accuracies (scheme at ε², systems
/// at ε) and a sampled sketch.
#[test]
fn prefilter_keeps_every_solvable_system() {
    let truth = model(&[(0.0, 3), (0.12, 9), (0.85, 6), (1.0, 4)]);
    let samples = truth.sample(default_sample_budget(EPS, C), 5);
    let (mu, sigma) = estimate_mean_var(&samples).unwrap();
    let (m, l) = sketch_shape(EPS, C, sigma).unwrap();
    let h = empirical_dft(&samples, m, l).unwrap();
    let scheme = build_scheme(sigma * sigma - 1.0, EPS * EPS).unwrap();
    let constants = SystemConstants {
        mean_estimate: mu,
        sigma_estimate: sigma,
        modulus: m,
        halfwidth: l,
        lmax: taylor_depth(EPS, C),
        epsilon: EPS,
    };
    let regime = regime_for(sigma, EPS);
    let near = |ms: &MultiplicityMultiset| ms.free_count() <= 2 && ms.ones() == 4;
    let kept: Vec<MultiplicityMultiset> =
        MultisetStream::new(&scheme, truth.n(), mu, Box::new(FourierPrefilter::new(&scheme, &h, mu, sigma, EPS)))
            .take_while(|ms| ms.free_count() <= 2)
            .filter(|ms| near(ms))
            .collect();
    let mut solvable = 0;
    for ms in enumerate_multisets(&scheme, truth.n(), mu).take_while(|ms| ms.free_count() <= 2).filter(|ms| near(ms)) {
        let sys = build_system(&ms, &scheme, &h, constants, regime).unwrap();
        if solve(&sys, EPS / 4.0, &SolverOptions::default()).is_some() {
            solvable += 1;
            assert!(kept.contains(&ms), "{ms} is solvable but was pruned");
        }
    }
    assert!(solvable >= 2, "{solvable}");
}

#[test]
fn system_dump_has_boxes_and_target() {
    let truth = model(&[(0.2, 5), (0.6, 4)]);
    let (sys, _, h) = planted(&truth, EPS);
    let v = sys.to_json();
    assert_eq!(v["variables"].as_array().unwrap().len(), sys.dimension());
    assert_eq!(v["constants"]["modulus"], h.modulus());
    assert_eq!(v["target"]["coeffs"].as_array().unwrap().len(), 2 * h.halfwidth() + 1);
    assert!(v["variables"][0]["lower"].as_f64().unwrap() <= v["variables"][0]["upper"].as_f64().unwrap());
    let c = Complex64::new(v["target"]["coeffs"][h.halfwidth()][0].as_f64().unwrap(), 0.0);
    assert!((c - 1.0).norm() < 1e-12);
}

#[test]
fn solver_is_deterministic_per_seed() {
    let truth = canonicalize(&[0.12, 0.12, 0.4, 0.4, 0.4, 0.66, 0.9]).unwrap();
    let (sys, _, _) = planted(&truth, EPS);
    let opts = SolverOptions { seed: 5, ..SolverOptions::default() };
    let a = solve(&sys, 0.01, &opts);
    assert!(a.is_some());
    assert_eq!(a, solve(&sys, 0.01, &opts));
}
