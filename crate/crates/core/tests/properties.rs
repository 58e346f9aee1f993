//! Randomized properties checked against naive reference computations.

use num_complex::Complex64;
use pbd_core::fourier::{dft_closed_form, dft_of_pmf, empirical_dft, full_period_dft, inverse_dft};
use pbd_core::io::canonical_json;
use pbd_core::moments::{log_dft_taylor, split};
use pbd_core::{canonicalize, pmf_exact, tv_distance, PbdModel, SampleSet};
use proptest::prelude::*;
use std::f64::consts::TAU;

/// Plain f64 convolution, one Bernoulli at a time.
fn naive_pmf(params: &[f64]) -> Vec<f64> {
    let mut cur = vec![1.0];
    for &p in params {
        let mut next = vec![0.0; cur.len() + 1];
        for (j, &v) in cur.iter().enumerate() {
            next[j] += v * (1.0 - p);
            next[j + 1] += v * p;
        }
        cur = next;
    }
    cur
}

fn naive_dft(pmf: &[f64], m: u64, xi: i64) -> Complex64 {
    pmf.iter()
        .enumerate()
        .map(|(j, &w)| Complex64::from_polar(w, -TAU * ((xi * j as i64).rem_euclid(m as i64)) as f64 / m as f64))
        .sum()
}

fn params(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![4 => 0.0..=1.0f64, 1 => Just(0.0), 1 => Just(1.0), 1 => Just(0.5)], 1..=max_n)
}

fn model(ps: &[f64]) -> PbdModel {
    canonicalize(ps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pmf_matches_naive_convolution(ps in params(60)) {
        let exact = pmf_exact(&model(&ps));
        let naive = naive_pmf(&ps);
        prop_assert_eq!(exact.offset(), 0);
        prop_assert_eq!(exact.len(), naive.len());
        for (a, b) in exact.probs().iter().zip(&naive) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
        prop_assert!((exact.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pmf_moments_match_parameters(ps in params(80)) {
        let m = model(&ps);
        let pmf = pmf_exact(&m);
        let mean: f64 = ps.iter().sum();
        let var: f64 = ps.iter().map(|p| p * (1.0 - p)).sum();
        prop_assert!((pmf.mean() - mean).abs() < 1e-9);
        prop_assert!((pmf.variance() - var).abs() < 1e-9);
        prop_assert!((m.mean() - mean).abs() < 1e-9);
        prop_assert!((m.variance() - var).abs() < 1e-9);
    }

    #[test]
    fn canonical_form_ignores_order(ps in params(40), seed in any::<u64>()) {
        let mut shuffled = ps.clone();
        let k = shuffled.len();
        for i in (1..k).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(model(&ps), model(&shuffled));
        let mut sorted = model(&ps).expand();
        let mut orig = ps.clone();
        sorted.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        prop_assert_eq!(sorted, orig);
    }

    #[test]
    fn dft_matches_naive_sum(ps in params(50), m in 2u64..120) {
        let md = model(&ps);
        let l = (m / 2) as usize;
        let pmf = naive_pmf(&ps);
        let closed = dft_closed_form(&md, m, l).unwrap();
        let direct = dft_of_pmf(&pmf_exact(&md), m, l).unwrap();
        for xi in -(l as i64)..=l as i64 {
            let want = naive_dft(&pmf, m, xi);
            prop_assert!((closed.coeff(xi) - want).norm() < 1e-10);
            prop_assert!((direct.coeff(xi) - want).norm() < 1e-10);
        }
    }

    #[test]
    fn inverse_transform_recovers_the_pmf(ps in params(30), extra in 1u64..10) {
        let pmf = pmf_exact(&model(&ps));
        let m = pmf.len() as u64 + extra;
        let back = inverse_dft(&full_period_dft(&pmf, m).unwrap(), 0, false).unwrap();
        for k in 0..m as i64 {
            prop_assert!((back.get(k) - pmf.get(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_sketch_matches_naive(values in prop::collection::vec(0u64..500, 1..200), m in 2u64..64) {
        let s = SampleSet::new(values.clone(), None).unwrap();
        let l = (m / 2) as usize;
        let h = empirical_dft(&s, m, l).unwrap();
        for xi in -(l as i64)..=l as i64 {
            let want: Complex64 = values
                .iter()
                .map(|&v| Complex64::from_polar(1.0, -TAU * ((xi * v as i64).rem_euclid(m as i64)) as f64 / m as f64))
                .sum::<Complex64>()
                / values.len() as f64;
            prop_assert!((h.coeff(xi) - want).norm() < 1e-12);
        }
    }

    #[test]
    fn tv_is_a_metric(a in params(30), b in params(30), c in params(30)) {
        let (pa, pb, pc) = (pmf_exact(&model(&a)), pmf_exact(&model(&b)), pmf_exact(&model(&c)));
        let ab = tv_distance(&pa, &pb);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, tv_distance(&pb, &pa));
        prop_assert!(tv_distance(&pa, &pa) == 0.0);
        prop_assert!(ab <= tv_distance(&pa, &pc) + tv_distance(&pc, &pb) + 1e-12);
        let naive: f64 = 0.5 * (0..=a.len().max(b.len()) as i64).map(|k| (pa.get(k) - pb.get(k)).abs()).sum::<f64>();
        prop_assert!((ab - naive).abs() < 1e-12);
    }

    #[test]
    fn log_expansion_converges_to_the_transform(
        low in prop::collection::vec(0.0..=0.3f64, 0..20),
        high in prop::collection::vec(0.7..=1.0f64, 0..20),
        m in 8u64..80,
        xi in 0i64..4,
    ) {
        prop_assume!(!low.is_empty() || !high.is_empty());
        let all: Vec<f64> = low.iter().chain(&high).copied().collect();
        let md = model(&all);
        let sp = split(&md, 0.5, 0.5).unwrap();
        let g = log_dft_taylor(&sp, high.len(), xi, m, 80).unwrap();
        let want = dft_closed_form(&md, m, (m / 2) as usize).unwrap().coeff(xi);
        prop_assert!((g.exp() - want).norm() < 1e-9, "{} vs {}", g.exp(), want);
    }

    #[test]
    fn model_json_round_trips(ps in params(40)) {
        let m = model(&ps);
        let back: PbdModel = serde_json::from_str(&canonical_json(&m).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }
}

#[test]
fn sampling_matches_pmf() {
    let m = model(&[0.1, 0.5, 0.5, 0.9, 0.3, 0.7, 1.0, 0.0]);
    let s = m.sample(200_000, 11);
    let tv = tv_distance(&s.empirical_pmf(), &pmf_exact(&m));
    assert!(tv < 0.01, "{tv}");
    assert_eq!(s, m.sample(200_000, 11));
}

#[test]
fn large_models_sample_with_the_right_moments() {
    let m = model(&vec![0.3; 20_000]);
    let s = m.sample(20_000, 5);
    let mean = s.values().iter().sum::<u64>() as f64 / s.len() as f64;
    let var = s.values().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / s.len() as f64;
    assert!((mean - 6000.0).abs() < 0.5, "{mean}");
    assert!((var / 4200.0 - 1.0).abs() < 0.05, "{var}");
}
