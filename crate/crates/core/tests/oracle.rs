use pbd_core::oracle::{
    brute_force_learn, chebyshev_pair, corpus, corpus_model, lower_bound_report, min_param_gap, shifted_binomial,
    tv_exact, windowed_shifted_binomial_tv, CORPUS_SIZE,
};
use pbd_core::{canonicalize, Component, PbdModel, SampleSet};

fn model(c: &[(f64, usize)]) -> PbdModel {
    PbdModel::new(c.iter().map(|&(p, m)| Component::new(p, m)).collect()).unwrap()
}

#[test]
fn tv_examples() {
    let a = model(&[(0.1, 1), (0.2, 1)]);
    assert_eq!(tv_exact(&a, &a), 0.0);
    assert_eq!(tv_exact(&model(&[(0.0, 1)]), &model(&[(1.0, 1)])), 1.0);
    assert!((tv_exact(&a, &model(&[(0.5, 2)])) - 0.47).abs() < 1e-12);
}

#[test]
fn tv_ignores_parameter_order() {
    let p = [0.7, 0.1, 0.35, 0.35, 0.99, 0.0];
    let q = [0.2, 0.6, 0.3, 0.3, 0.5, 1.0];
    let mut p2 = p;
    p2.reverse();
    let d = tv_exact(&canonicalize(&p).unwrap(), &canonicalize(&q).unwrap());
    assert_eq!(d, tv_exact(&canonicalize(&p2).unwrap(), &canonicalize(&q).unwrap()));
}

/// `Σ_j x_j^k` summed directly from the unsorted values.
fn power_sum(values: &[f64], k: i32) -> f64 {
    values.iter().map(|v| v.powi(k)).sum()
}

#[test]
fn chebyshev_pairs_match_power_sums_and_stay_apart() {
    let mut last = f64::INFINITY;
    for n in [8, 16, 24, 32] {
        let pair = chebyshev_pair(n).unwrap();
        for k in 1..n as i32 {
            let (a, b) = (power_sum(&pair.p_values, k), power_sum(&pair.q_values, k));
            assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-15, "n={n} k={k}: {a} vs {b}");
        }
        assert!(pair.p_values.iter().chain(&pair.q_values).all(|&v| (0.0..=0.25).contains(&v)));
        let gap = min_param_gap(&pair);
        assert!(gap >= 1.0 / (4.0 * n as f64), "n={n}: gap {gap}");
        let tv = tv_exact(&pair.p, &pair.q);
        assert!(tv <= last, "n={n}: {tv} after {last}");
        last = tv;
        let report = lower_bound_report(n).unwrap();
        assert_eq!(report.tv_exact, tv);
        if n == 16 {
            assert!(tv <= 1e-3, "{tv}");
        }
        if n == 32 {
            assert!(tv <= 1e-6, "{tv}");
        }
    }
    assert!(chebyshev_pair(1).is_err());
}

#[test]
fn brute_force_examples() {
    let s = SampleSet::new(vec![3; 50], None).unwrap();
    assert_eq!(brute_force_learn(&s, 3, 0.1).unwrap(), model(&[(1.0, 3)]));

    let truth = model(&[(0.3, 2)]);
    let out = brute_force_learn(&truth.sample(100_000, 5), 2, 0.05).unwrap();
    assert!(out.expand().iter().all(|p| (p - 0.3).abs() <= 0.05 + 1e-12), "{out:?}");

    assert!(brute_force_learn(&s, 5, 0.1).is_err());
    assert!(brute_force_learn(&s, 3, 0.01).is_err());
    assert!(brute_force_learn(&s, 2, 0.1).is_err());
}

#[test]
fn windowed_tv_is_an_upper_bound() {
    let a = shifted_binomial(2000, 100, 1500, 0.45).unwrap();
    let b = shifted_binomial(2000, 0, 1800, 0.43).unwrap();
    let w = windowed_shifted_binomial_tv(&a, &b).unwrap();
    let exact = tv_exact(&a, &b);
    assert!(w.tv_upper >= exact - 1e-12);
    assert!(w.tv_upper - exact < 1e-8, "{w:?} vs {exact}");
    assert!(windowed_shifted_binomial_tv(&a, &model(&[(0.2, 1000), (0.3, 1000)])).is_err());
}

#[test]
fn corpus_is_frozen() {
    let all = corpus();
    assert_eq!(all.len(), CORPUS_SIZE as usize);
    assert!(all.iter().all(|m| (1..=500).contains(&m.n())));
    assert_eq!(all[6], corpus_model(7));
    // shapes rotate with the seed
    assert!(corpus_model(3).expand().iter().all(|&p| p <= 0.05));
    assert!(corpus_model(4).distinct() <= 4);
}
