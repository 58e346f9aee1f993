//! The doubly geometric interval partition of `[0, 1]`.

use crate::error::{check_epsilon, Error, Result};
use serde::Serialize;

/// Multiplier in the per-level distinct-value cap `⌈c₁ ln(1/ε)/ln(1/B_i)⌉`.
pub const DISTINCT_CAP_CONSTANT: f64 = 4.0;
/// Multiplier in the cap `c₂ ln(1/ε)` on the number of free triples.
pub const FREE_TRIPLE_CONSTANT: f64 = 64.0;
/// Multiplier in the sparsifier's output bound `c₃ ln(1/ε)` on distinct values.
pub const SPARSIFIER_OUTPUT_CONSTANT: f64 = 40.0;
/// Multiplier in the per-level count cap `⌊4 Var/B_i⌋`.
pub const COUNT_CAP_CONSTANT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Bands `I_i` in `(0, 1/2]`.
    Low,
    /// Bands `J_i` in `(1/2, 1)`.
    High,
}

/// One interval of the partition: `I_level` or `J_level`, `level ∈ 0..=D+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Band {
    pub side: Side,
    pub level: usize,
}

impl Band {
    pub fn low(level: usize) -> Band {
        Band { side: Side::Low, level }
    }

    pub fn high(level: usize) -> Band {
        Band { side: Side::High, level }
    }
}

/// Where a parameter value falls in the partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Zero,
    One,
    Band(Band),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalScheme {
    epsilon: f64,
    variance: f64,
    rate: f64,
    levels: Vec<f64>,
    distinct_caps: Vec<usize>,
    count_caps: Vec<usize>,
}

/// Builds the partition for a variance estimate (a zero variance is treated
/// as 1) and accuracy ε: `R = min(1/4, √(ln(1/ε)/Var))`, `B_i = R^{2^i}` and
/// `D` the least `i` with `B_i ≤ ε³`.
pub fn build_scheme(variance_estimate: f64, eps: f64) -> Result<IntervalScheme> {
    check_epsilon(eps)?;
    if !(variance_estimate >= 0.0) || !variance_estimate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "variance estimate must be finite and non-negative, got {variance_estimate}"
        )));
    }
    let variance = if variance_estimate == 0.0 { 1.0 } else { variance_estimate };
    let log = (1.0 / eps).ln();
    let rate = (log / variance).sqrt().min(0.25);
    let target = eps * eps * eps;
    let mut levels = vec![rate];
    while *levels.last().unwrap() > target {
        let b = *levels.last().unwrap();
        levels.push(b * b);
    }
    let distinct_caps =
        levels.iter().map(|&b| (DISTINCT_CAP_CONSTANT * log / (1.0 / b).ln()).ceil().max(1.0) as usize).collect();
    let count_caps = levels
        .iter()
        .map(|&b| {
            let cap = (COUNT_CAP_CONSTANT * variance / b).floor();
            if cap >= usize::MAX as f64 {
                usize::MAX
            } else {
                cap as usize
            }
        })
        .collect();
    Ok(IntervalScheme { epsilon: eps, variance, rate, levels, distinct_caps, count_caps })
}

impl IntervalScheme {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The variance the scheme was built from (after the zero substitution).
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `B_0, …, B_D`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn distinct_caps(&self) -> &[usize] {
        &self.distinct_caps
    }

    pub fn count_caps(&self) -> &[usize] {
        &self.count_caps
    }

    /// Whether the band is one of the two outermost intervals `I_{D+1}`, `J_{D+1}`.
    pub fn is_outermost(&self, band: Band) -> bool {
        band.level == self.depth() + 1
    }

    /// Maximum number of distinct parameters in the band.
    pub fn distinct_cap(&self, band: Band) -> usize {
        if self.is_outermost(band) {
            1
        } else {
            self.distinct_caps[band.level]
        }
    }

    /// Maximum total multiplicity in the band.
    pub fn count_cap(&self, band: Band) -> usize {
        if self.is_outermost(band) {
            1
        } else {
            self.count_caps[band.level]
        }
    }

    /// `⌊c₂ ln(1/ε)⌋`, the cap on free triples.
    pub fn free_triple_cap(&self) -> usize {
        (FREE_TRIPLE_CONSTANT * (1.0 / self.epsilon).ln()).floor() as usize
    }

    /// All bands: `I_0..I_{D+1}` then `J_0..J_{D+1}`.
    pub fn bands(&self) -> Vec<Band> {
        let top = self.depth() + 1;
        (0..=top).map(Band::low).chain((0..=top).map(Band::high)).collect()
    }

    /// Closed box `[a, b]` used for the band's variables. The true intervals
    /// are half-open at one end; the box is their closure.
    pub fn bounds(&self, band: Band) -> (f64, f64) {
        let top = self.depth() + 1;
        let (lo, hi) = if band.level == 0 {
            (self.levels[0], 0.5)
        } else if band.level == top {
            (0.0, self.levels[top - 1])
        } else {
            (self.levels[band.level], self.levels[band.level - 1])
        };
        match band.side {
            Side::Low => (lo, hi),
            Side::High => (1.0 - hi, 1.0 - lo),
        }
    }

    pub fn classify(&self, value: f64) -> Placement {
        if value <= 0.0 {
            return Placement::Zero;
        }
        if value >= 1.0 {
            return Placement::One;
        }
        let top = self.depth() + 1;
        if value <= 0.5 {
            let level = self.levels.iter().position(|&b| value >= b).unwrap_or(top);
            Placement::Band(Band::low(level))
        } else {
            let level = self.levels.iter().position(|&b| value <= 1.0 - b).unwrap_or(top);
            Placement::Band(Band::high(level))
        }
    }
}
