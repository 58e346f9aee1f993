//! Ground-truth tools used to check the learner: exact distances, a
//! brute-force learner for tiny `n`, the lower-bound pair with matching power
//! sums, and a seeded model corpus.

use crate::error::{Error, Result};
use crate::model::{canonicalize, pmf_exact, tv_distance, Component, PbdModel, SampleSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

pub fn tv_exact(a: &PbdModel, b: &PbdModel) -> f64 {
    tv_distance(&pmf_exact(a), &pmf_exact(b))
}

/// Two `n`-PBDs with equal power sums of orders `1..n` whose parameters
/// stay well separated: `p_j = (1+cos(2πj/n))/8`, `q_j = (1+cos((2πj+π)/n))/8`.
#[derive(Debug, Clone, Serialize)]
pub struct ChebyshevPair {
    pub n: usize,
    pub p: PbdModel,
    pub q: PbdModel,
    /// Unsorted values, `j = 1..=n`.
    pub p_values: Vec<f64>,
    pub q_values: Vec<f64>,
}

/// `(1 + cos(πk/n))/8` evaluated as `(1 + sin(π(n−2k')/(2n)))/8` with `k`
/// reduced into `[0, n]`, so quarter turns come out exact.
fn cosine_value(k: usize, n: usize) -> f64 {
    let mut k = k % (2 * n);
    if k > n {
        k = 2 * n - k;
    }
    let d = n as f64 - 2.0 * k as f64;
    (1.0 + (PI * d / (2.0 * n as f64)).sin()) / 8.0
}

pub fn chebyshev_pair(n: usize) -> Result<ChebyshevPair> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("the pair needs n ≥ 2, got {n}")));
    }
    let p_values: Vec<f64> = (1..=n).map(|j| cosine_value(2 * j, n)).collect();
    let q_values: Vec<f64> = (1..=n).map(|j| cosine_value(2 * j + 1, n)).collect();
    Ok(ChebyshevPair { n, p: canonicalize(&p_values)?, q: canonicalize(&q_values)?, p_values, q_values })
}

/// `min_i |p_{j*} − q_i|` at `j* = round(n/4)`, where `p` is steepest.
pub fn min_param_gap(pair: &ChebyshevPair) -> f64 {
    let j = ((pair.n as f64 / 4.0).round() as usize).clamp(1, pair.n);
    let p = pair.p_values[j - 1];
    pair.q_values.iter().map(|q| (p - q).abs()).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundReport {
    pub n: usize,
    pub tv_exact: f64,
    pub min_param_gap: f64,
}

pub fn lower_bound_report(n: usize) -> Result<LowerBoundReport> {
    let pair = chebyshev_pair(n)?;
    Ok(LowerBoundReport { n, tv_exact: tv_exact(&pair.p, &pair.q), min_param_gap: min_param_gap(&pair) })
}

pub const BRUTE_FORCE_MAX_N: usize = 4;
pub const BRUTE_FORCE_MIN_STEP: f64 = 0.02;

fn grid(step: f64) -> Vec<f64> {
    let count = (1.0 / step + 1e-9).floor() as usize;
    let mut g: Vec<f64> = (0..=count).map(|k| (k as f64 * step).min(1.0)).collect();
    if *g.last().unwrap() < 1.0 {
        g.push(1.0);
    }
    g
}

/// Grid search over non-decreasing parameter vectors for the model closest
/// in TV to the empirical pmf; ties go to the lexicographically smallest
/// vector.
pub fn brute_force_learn(samples: &SampleSet, n: usize, grid_step: f64) -> Result<PbdModel> {
    if n == 0 || n > BRUTE_FORCE_MAX_N {
        return Err(Error::InvalidArgument(format!("brute force needs 1 ≤ n ≤ {BRUTE_FORCE_MAX_N}, got {n}")));
    }
    if !(BRUTE_FORCE_MIN_STEP..=0.5).contains(&grid_step) {
        return Err(Error::InvalidArgument(format!(
            "grid step must lie in [{BRUTE_FORCE_MIN_STEP}, 0.5], got {grid_step}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some(&value) = samples.values().iter().find(|&&v| v > n as u64) {
        return Err(Error::SampleOutOfRange { value, n });
    }
    let mut counts = vec![0u64; n + 1];
    for &v in samples.values() {
        counts[v as usize] += 1;
    }
    let total = samples.len() as f64;
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let g = grid(grid_step);
    let best = (0..g.len())
        .into_par_iter()
        .filter_map(|first| {
            let mut idx = vec![first; n];
            let mut best: Option<(f64, Vec<usize>)> = None;
            loop {
                let params: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
                let pmf = small_pmf(&params);
                let tv = 0.5 * pmf.iter().zip(&empirical).map(|(a, b)| (a - b).abs()).sum::<f64>();
                if best.as_ref().is_none_or(|(b, _)| tv < *b) {
                    best = Some((tv, idx.clone()));
                }
                // next non-decreasing tail with idx[0] fixed
                let Some(pos) = (1..n).rev().find(|&p| idx[p] + 1 < g.len()) else {
                    break;
                };
                let v = idx[pos] + 1;
                for x in &mut idx[pos..] {
                    *x = v;
                }
            }
            best
        })
        .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        .expect("grid is non-empty");
    canonicalize(&best.1.iter().map(|&i| g[i]).collect::<Vec<_>>())
}

/// Pmf on `0..=len` by direct convolution; enough for a handful of values.
fn small_pmf(params: &[f64]) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for &p in params {
        let mut next = vec![0.0; pmf.len() + 1];
        for (k, &v) in pmf.iter().enumerate() {
            next[k] += v * (1.0 - p);
            next[k + 1] += v * p;
        }
        pmf = next;
    }
    pmf
}

/// TV between two shifted binomials computed on a window around both means,
/// with the excluded mass bounded by Bernstein's inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowedTv {
    pub window: (u64, u64),
    /// Half the L1 distance of the window-normalized pmfs.
    pub tv_window: f64,
    /// Bound on the mass of either model outside the window.
    pub tail_bound: f64,
    /// `tv_window + tail_a + tail_b`, an upper bound on the exact TV.
    pub tv_upper: f64,
}

/// `(t, m, p)`: `t` ones plus one `Binomial(m, p)` block.
fn shifted_binomial_form(model: &PbdModel) -> Result<(u64, u64, f64)> {
    let mut t = 0;
    let mut block = (0, 0.0);
    for c in model.components() {
        if c.p == 1.0 {
            t = c.multiplicity as u64;
        } else if c.p > 0.0 {
            if block.0 != 0 {
                return Err(Error::InvalidArgument("model has more than one interior value".into()));
            }
            block = (c.multiplicity as u64, c.p);
        }
    }
    Ok((t, block.0, block.1))
}

fn bernstein_tail(variance: f64, d: f64) -> f64 {
    (2.0 * (-d * d / (2.0 * (variance + d / 3.0))).exp()).min(1.0)
}

/// Binomial pmf on `[lo, hi]` (shifted by `t`) up to normalization, by the
/// ratio recurrence from the mode.
fn binomial_window(t: u64, m: u64, p: f64, lo: u64, hi: u64) -> Vec<f64> {
    let len = (hi - lo + 1) as usize;
    let mut out = vec![0.0; len];
    if m == 0 || p == 0.0 {
        if (lo..=hi).contains(&t) {
            out[(t - lo) as usize] = 1.0;
        }
        return out;
    }
    if p == 1.0 {
        if (lo..=hi).contains(&(t + m)) {
            out[(t + m - lo) as usize] = 1.0;
        }
        return out;
    }
    let mode = (((m + 1) as f64 * p).floor() as u64).min(m);
    let r = p / (1.0 - p);
    let a = t.max(lo);
    let b = (t + m).min(hi);
    if a > b {
        return out;
    }
    let start = (t + mode).clamp(a, b);
    // log-space weights relative to `start`
    let mut logw = vec![f64::NEG_INFINITY; len];
    logw[(start - lo) as usize] = 0.0;
    let mut acc = 0.0;
    for x in start..b {
        let k = (x - t) as f64;
        acc += ((m as f64 - k) / (k + 1.0) * r).ln();
        logw[(x + 1 - lo) as usize] = acc;
    }
    acc = 0.0;
    for x in (a + 1..=start).rev() {
        let k = (x - t) as f64;
        acc += (k / ((m as f64 - k + 1.0) * r)).ln();
        logw[(x - 1 - lo) as usize] = acc;
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(&logw) {
        *o = (l - top).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// TV between two models of the form "ones plus one binomial block",
/// without materializing pmfs over the full support.
pub fn windowed_shifted_binomial_tv(a: &PbdModel, b: &PbdModel) -> Result<WindowedTv> {
    let fa = shifted_binomial_form(a)?;
    let fb = shifted_binomial_form(b)?;
    let n_max = a.n().max(b.n()) as u64;
    let mut lo = u64::MAX;
    let mut hi = 0;
    for &(t, m, p) in &[fa, fb] {
        let mean = t as f64 + m as f64 * p;
        let sd = (m as f64 * p * (1.0 - p)).sqrt();
        let d = 12.0 * sd + 40.0;
        lo = lo.min((mean - d).floor().max(0.0) as u64);
        hi = hi.max(((mean + d).ceil() as u64).min(n_max));
    }
    let tail = |(t, m, p): (u64, u64, f64)| {
        let mean = t as f64 + m as f64 * p;
        let var = m as f64 * p * (1.0 - p);
        let d = (mean - lo as f64).min(hi as f64 - mean);
        if d <= 0.0 {
            1.0
        } else {
            bernstein_tail(var, d)
        }
    };
    let wa = binomial_window(fa.0, fa.1, fa.2, lo, hi);
    let wb = binomial_window(fb.0, fb.1, fb.2, lo, hi);
    let tv_window = 0.5 * wa.iter().zip(&wb).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let (ta, tb) = (tail(fa), tail(fb));
    Ok(WindowedTv { window: (lo, hi), tv_window, tail_bound: ta.max(tb), tv_upper: (tv_window + ta + tb).min(1.0) })
}

/// Number of models in the standard evaluation corpus.
pub const CORPUS_SIZE: u64 = 50;

/// Model number `seed` of the evaluation corpus: `n ∈ [1, 500]` and one of
/// five parameter shapes, chosen from the seed.
pub fn corpus_model(seed: u64) -> PbdModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=500usize);
    let params: Vec<f64> = match seed % 5 {
        // spread over the whole interval
        0 => (0..n).map(|_| rng.random::<f64>()).collect(),
        // mostly near 0
        1 => (0..n).map(|_| rng.random::<f64>().powi(4)).collect(),
        // two clusters
        2 => (0..n).map(|_| if rng.random::<bool>() { 0.2 } else { 0.85 } + 0.05 * rng.random::<f64>()).collect(),
        // rare events
        3 => (0..n).map(|_| 0.05 * rng.random::<f64>()).collect(),
        // few distinct values with deterministic components
        _ => {
            let values = [0.0, 1.0, rng.random::<f64>(), rng.random::<f64>()];
            (0..n).map(|_| values[rng.random_range(0..values.len())]).collect()
        }
    };
    canonicalize(&params).expect("corpus parameters are valid")
}

/// The whole corpus, seeds `1..=CORPUS_SIZE`.
pub fn corpus() -> Vec<PbdModel> {
    (1..=CORPUS_SIZE).map(corpus_model).collect()
}

/// Convenience for tests: `(t ones, Binomial(m, p))` padded with zeros to `n`.
pub fn shifted_binomial(n: usize, t: usize, m: usize, p: f64) -> Result<PbdModel> {
    if t + m > n {
        return Err(Error::InvalidArgument(format!("t + m = {} exceeds n = {n}", t + m)));
    }
    PbdModel::new(vec![Component::new(1.0, t), Component::new(p, m), Component::new(0.0, n - t - m)])
}
