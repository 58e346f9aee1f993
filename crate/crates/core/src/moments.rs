//! Power sums of PBD parameters, the moment-distance bound that controls TV
//! distance, and the truncated logarithmic Taylor expansion of the DFT.

use crate::error::{check_epsilon, Error, Result};
use crate::model::{Component, PbdModel};
use crate::numeric::unit_root;
use num_complex::Complex64;
use std::f64::consts::TAU;

/// Components partitioned by value: `low` holds values `≤ low_threshold`,
/// `high` values `> high_threshold`, and `middle` whatever lies between.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitParams {
    pub low: Vec<Component>,
    pub middle: Vec<Component>,
    pub high: Vec<Component>,
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl SplitParams {
    pub fn high_multiplicity(&self) -> usize {
        self.high.iter().map(|c| c.multiplicity).sum()
    }
}

pub fn split(model: &PbdModel, low_threshold: f64, high_threshold: f64) -> Result<SplitParams> {
    if !(0.0 < low_threshold && low_threshold <= high_threshold && high_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "thresholds must satisfy 0 < low ≤ high < 1, got {low_threshold} and {high_threshold}"
        )));
    }
    let mut out = SplitParams { low: Vec::new(), middle: Vec::new(), high: Vec::new(), low_threshold, high_threshold };
    for &c in model.components() {
        if c.p <= low_threshold {
            out.low.push(c);
        } else if c.p > high_threshold {
            out.high.push(c);
        } else {
            out.middle.push(c);
        }
    }
    Ok(out)
}

/// `low[ℓ-1] = Σ m v^ℓ` over the low side and `high[ℓ-1] = Σ m (1−v)^ℓ` over
/// the high side, for ℓ = 1..=lmax.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile {
    pub lmax: usize,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

fn sums(values: impl Iterator<Item = (f64, usize)>, lmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; lmax];
    for (v, m) in values {
        let mut pow = 1.0;
        for slot in out.iter_mut() {
            pow *= v;
            *slot += m as f64 * pow;
        }
    }
    out
}

pub fn power_sums(split: &SplitParams, lmax: usize) -> Result<MomentProfile> {
    if lmax == 0 {
        return Err(Error::InvalidArgument("lmax must be at least 1".into()));
    }
    Ok(MomentProfile {
        lmax,
        low: sums(split.low.iter().map(|c| (c.p, c.multiplicity)), lmax),
        high: sums(split.high.iter().map(|c| (1.0 - c.p, c.multiplicity)), lmax),
    })
}

/// The weighted per-order differences and the resulting closeness verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentBound {
    /// `A^ℓ (|Δlow_ℓ| + |Δhigh_ℓ|)` for ℓ = 1..=lmax.
    pub per_order: Vec<f64>,
    pub max: f64,
    /// `ε / (C ln(1/ε))`.
    pub threshold: f64,
    /// Every entry lies strictly below the threshold.
    pub verdict: bool,
}

/// `A = min(3, C √(ln(1/ε)/V))`.
pub fn weight_base(c: f64, eps: f64, variance: f64) -> f64 {
    if variance <= 0.0 {
        return 3.0;
    }
    (c * ((1.0 / eps).ln() / variance).sqrt()).min(3.0)
}

pub fn moment_bound_lhs(p: &MomentProfile, q: &MomentProfile, a: f64, eps: f64, c: f64) -> Result<MomentBound> {
    check_epsilon(eps)?;
    if p.lmax != q.lmax {
        return Err(Error::InvalidArgument(format!("profiles have different depths {} and {}", p.lmax, q.lmax)));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("weight base must be positive, got {a}")));
    }
    let mut weight = 1.0;
    let per_order: Vec<f64> = (0..p.lmax)
        .map(|i| {
            weight *= a;
            weight * ((p.low[i] - q.low[i]).abs() + (p.high[i] - q.high[i]).abs())
        })
        .collect();
    let max = per_order.iter().copied().fold(0.0, f64::max);
    let threshold = eps / (c * (1.0 / eps).ln());
    Ok(MomentBound { verdict: per_order.iter().all(|&v| v < threshold), per_order, max, threshold })
}

/// Coefficients `(−1)^{1+ℓ}/ℓ` of `log(1+w)` for ℓ = 1..=lmax.
pub fn log_series_coefficients(lmax: usize) -> Vec<f64> {
    (1..=lmax).map(|l| if l % 2 == 1 { 1.0 / l as f64 } else { -1.0 / l as f64 }).collect()
}

/// Truncated expansion of `log P̂(ξ)`:
/// `−2πi mξ/M + Σ_{ℓ≤lmax} (−1)^{1+ℓ}/ℓ ((e(−ξ/M)−1)^ℓ Σ p^ℓ + (e(ξ/M)−1)^ℓ Σ (1−p′)^ℓ)`
/// where `m` is the total high-side multiplicity.
pub fn log_dft_taylor(
    split: &SplitParams,
    total_high_mult: usize,
    xi: i64,
    modulus: u64,
    lmax: usize,
) -> Result<Complex64> {
    if modulus < 2 {
        return Err(Error::InvalidArgument("modulus must be at least 2".into()));
    }
    if !split.middle.is_empty() || split.low.iter().any(|c| c.p > 0.5) || split.high.iter().any(|c| c.p <= 0.5) {
        return Err(Error::InvalidArgument(
            "expansion needs low values ≤ 1/2, high values > 1/2 and no middle group".into(),
        ));
    }
    let prof = power_sums(split, lmax)?;
    let coef = log_series_coefficients(lmax);
    let zl = unit_root(-(xi as i128), modulus) - 1.0;
    let zh = unit_root(xi as i128, modulus) - 1.0;
    let mut pl = Complex64::new(1.0, 0.0);
    let mut ph = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, -TAU * total_high_mult as f64 * xi as f64 / modulus as f64);
    for l in 0..lmax {
        pl *= zl;
        ph *= zh;
        acc += (pl * prof.low[l] + ph * prof.high[l]) * coef[l];
    }
    Ok(acc)
}
