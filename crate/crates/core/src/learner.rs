//! End-to-end proper learning from samples.

use crate::error::{check_epsilon, Error, Result};
use crate::fourier::{empirical_dft, sketch_shape, taylor_depth, FourierSketch};
use crate::model::{Component, PbdModel, SampleSet};
use crate::numeric::round_half_even;
use crate::polysys::{build_system, regime_for, solve, FourierPrefilter, Regime, SolverOptions, SystemConstants};
use crate::structure::{build_scheme, MultisetStream};
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

pub const DEFAULT_C: f64 = 10.0;
/// Samples used for the mean and variance estimates.
pub const MOMENT_SAMPLES: usize = 1000;
pub const DEFAULT_MAX_SYSTEMS: u64 = 1_000_000;
/// Systems handed to the worker pool at a time.
const BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub epsilon: f64,
    pub c: f64,
    /// `None` means `⌈C³ ε⁻² ln²(1/ε)⌉`.
    pub sample_budget: Option<usize>,
    /// Offsets the solver's low-discrepancy starts.
    pub seed: u64,
    pub solver: SolverOptions,
    /// `None` means `ε⁻³`.
    pub large_variance_threshold: Option<f64>,
    pub max_systems: u64,
}

impl LearnConfig {
    pub fn new(epsilon: f64) -> Self {
        LearnConfig {
            epsilon,
            c: DEFAULT_C,
            sample_budget: None,
            seed: 0,
            solver: SolverOptions::default(),
            large_variance_threshold: None,
            max_systems: DEFAULT_MAX_SYSTEMS,
        }
    }

    pub fn sample_budget(&self) -> usize {
        self.sample_budget.unwrap_or_else(|| default_sample_budget(self.epsilon, self.c))
    }

    pub fn large_variance_threshold(&self) -> f64 {
        self.large_variance_threshold.unwrap_or_else(|| self.epsilon.powi(-3))
    }

    fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.c > 0.0) {
            return Err(Error::InvalidArgument(format!("C must be positive, got {}", self.c)));
        }
        if self.max_systems == 0 || self.sample_budget() == 0 || self.solver.starts == 0 {
            return Err(Error::InvalidArgument("budgets must be positive".into()));
        }
        Ok(())
    }
}

pub fn default_sample_budget(eps: f64, c: f64) -> usize {
    let log = (1.0 / eps).ln();
    (c.powi(3) * log * log / (eps * eps)).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    ShiftedBinomial,
    System,
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnReport {
    pub output: PbdModel,
    pub branch: Branch,
    /// Which form of the system was used (system branch only).
    pub system_regime: Option<Regime>,
    pub systems_tried: u64,
    pub mean_estimate: f64,
    pub sigma_estimate: f64,
    pub modulus: u64,
    pub halfwidth: usize,
    pub lmax: usize,
    pub samples_used: usize,
    /// Encoding of the accepted multiplicity multiset.
    pub multiset: Option<String>,
    pub wall_time_s: f64,
}

/// Sample mean and `√(population variance + 1)` of the first
/// [`MOMENT_SAMPLES`] samples.
pub fn estimate_mean_var(samples: &SampleSet) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let (mean, var) = moments(&samples.values()[..samples.len().min(MOMENT_SAMPLES)]);
    Ok((mean, (var + 1.0).sqrt()))
}

fn moments(values: &[u64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Method-of-moments fit of `t` ones plus a `Binomial(m, p)` block, padded
/// with zeros to `n` components.
pub fn learn_shifted_binomial(samples: &SampleSet, n: usize, eps: f64) -> Result<PbdModel> {
    check_epsilon(eps)?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    check_range(samples, n)?;
    let values = samples.values();
    let (mu, v) = moments(values);
    let nf = n as f64;
    if v == 0.0 || n == 0 {
        let t = (round_half_even(mu) as usize).min(n);
        return PbdModel::new(vec![Component::new(1.0, t), Component::new(0.0, n - t)]);
    }
    // p = (1 − κ₃/v)/2 for a shifted binomial; an insignificant third
    // cumulant leaves p at 1/2
    let count = values.len() as f64;
    let k3 = values.iter().map(|&x| (x as f64 - mu).powi(3)).sum::<f64>() / count;
    let k3_se = (6.0 * v.powi(3) / count).sqrt();
    let p_k3 = if k3.abs() > 2.0 * k3_se { (0.5 * (1.0 - k3 / v)).clamp(1e-9, 1.0 - 1e-9) } else { 0.5 };
    // t ≥ 0 needs p ≤ 1 − v/μ, t + m ≤ n needs p ≥ v/(n − μ)
    let lo = v / (nf - mu).max(f64::MIN_POSITIVE);
    let hi = 1.0 - v / mu.max(f64::MIN_POSITIVE);
    let (t, m, p) = if lo <= hi {
        let p = p_k3.clamp(lo, hi).clamp(1e-12, 1.0 - 1e-12);
        let m = (round_half_even(v / (p * (1.0 - p))) as usize).clamp(1, n);
        let t = (round_half_even(mu - m as f64 * p).max(0.0) as usize).min(n - m);
        (t, m, ((mu - t as f64) / m as f64).clamp(0.0, 1.0))
    } else {
        // the variance exceeds what any n-PBD with this mean allows; the
        // all-equal model has the largest variance for the mean
        (0, n, (mu / nf).clamp(0.0, 1.0))
    };
    PbdModel::new(vec![Component::new(1.0, t), Component::new(p, m), Component::new(0.0, n - t - m)])
}

fn check_range(samples: &SampleSet, n: usize) -> Result<()> {
    match samples.values().iter().find(|&&v| v > n as u64) {
        Some(&value) => Err(Error::SampleOutOfRange { value, n }),
        None => Ok(()),
    }
}

/// `4√(ln(4(2L+1))/N)`, the per-coefficient deviation allowed between the
/// empirical and exact sketches.
pub fn concentration_bound(halfwidth: usize, samples: usize) -> f64 {
    4.0 * ((4.0 * (2 * halfwidth + 1) as f64).ln() / samples as f64).sqrt()
}

/// `(max_ξ |a_ξ − b_ξ|, Σ_ξ |a_ξ − b_ξ|²)` over the shared window.
pub fn sketch_deviation(a: &FourierSketch, b: &FourierSketch) -> Result<(f64, f64)> {
    let l2 = crate::fourier::sketch_l2_sq(a, b)?;
    let max = a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    Ok((max, l2))
}

/// Learns an `n`-PBD from samples. The returned model always has exactly `n`
/// components.
pub fn proper_learn(samples: &SampleSet, n: usize, config: &LearnConfig) -> Result<LearnReport> {
    let start = Instant::now();
    config.validate()?;
    let budget = config.sample_budget();
    if samples.len() < budget {
        return Err(Error::InsufficientSamples { have: samples.len(), need: budget });
    }
    if n == 0 {
        return Err(Error::EmptyModel);
    }
    check_range(samples, n)?;
    let samples = samples.prefix(budget);
    let eps = config.epsilon;
    let (mu, sigma) = estimate_mean_var(&samples)?;
    let (modulus, halfwidth) = sketch_shape(eps, config.c, sigma)?;
    let lmax = taylor_depth(eps, config.c);
    let mut report = LearnReport {
        output: PbdModel::new(vec![Component::new(0.0, n)])?,
        branch: Branch::System,
        system_regime: None,
        systems_tried: 0,
        mean_estimate: mu,
        sigma_estimate: sigma,
        modulus,
        halfwidth,
        lmax,
        samples_used: budget,
        multiset: None,
        wall_time_s: 0.0,
    };
    if sigma > config.large_variance_threshold() {
        report.output = learn_shifted_binomial(&samples, n, eps)?;
        report.branch = Branch::ShiftedBinomial;
        report.wall_time_s = start.elapsed().as_secs_f64();
        return Ok(report);
    }
    let regime = regime_for(sigma, eps);
    report.system_regime = Some(regime);
    let h = empirical_dft(&samples, modulus, halfwidth)?;
    // the structure only has to approximate the target to within ε²
    let scheme = build_scheme(sigma * sigma - 1.0, eps * eps)?;
    let constants =
        SystemConstants { mean_estimate: mu, sigma_estimate: sigma, modulus, halfwidth, lmax, epsilon: eps };
    let filter = FourierPrefilter::new(&scheme, &h, mu, sigma, eps);
    let mut stream = MultisetStream::new(&scheme, n, mu, Box::new(filter));
    let mut solver = config.solver;
    solver.seed = config.seed;
    let mut tried = 0u64;
    loop {
        let room = (config.max_systems - tried).min(BATCH as u64) as usize;
        let batch: Vec<_> = stream.by_ref().take(room).collect();
        if batch.is_empty() {
            break;
        }
        let found = batch
            .par_iter()
            .enumerate()
            .map(|(i, ms)| -> Result<Option<(usize, Vec<f64>, crate::polysys::PolySystem)>> {
                let sys = build_system(ms, &scheme, &h, constants, regime)?;
                let delta = eps / (2.0 * ms.free_count().max(1) as f64);
                Ok(solve(&sys, delta, &solver).map(|q| (i, q, sys)))
            })
            .find_map_first(|r| match r {
                Ok(None) => None,
                other => Some(other),
            });
        match found {
            Some(Err(e)) => return Err(e),
            Some(Ok(Some((i, values, sys)))) => {
                report.systems_tried = tried + i as u64 + 1;
                report.output = sys.expand(&values)?;
                report.multiset = Some(batch[i].encode());
                report.wall_time_s = start.elapsed().as_secs_f64();
                debug_assert_eq!(report.output.n(), n);
                return Ok(report);
            }
            _ => {}
        }
        tried += batch.len() as u64;
        if tried >= config.max_systems {
            break;
        }
    }
    Err(Error::Exhausted { tried, free_count: stream.current_free_count() })
}
