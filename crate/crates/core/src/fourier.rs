//! Discrete Fourier transform modulo `M` of pmfs, models and samples, using
//! the convention `F̂(ξ) = Σ_j e(−ξj/M) F(j)` with `e(x) = exp(2πix)`.

use crate::error::{check_epsilon, Error, Result};
use crate::model::{PbdModel, Pmf, SampleSet};
use crate::numeric::unit_root;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Coefficients of a DFT mod `M` on the frequencies `−L..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSketch {
    modulus: u64,
    halfwidth: usize,
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct SketchJson {
    #[serde(rename = "M")]
    m: u64,
    #[serde(rename = "L")]
    l: usize,
    coeffs: Vec<[f64; 2]>,
}

impl Serialize for FourierSketch {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SketchJson { m: self.modulus, l: self.halfwidth, coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FourierSketch {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = SketchJson::deserialize(d)?;
        let coeffs = raw.coeffs.iter().map(|c| Complex64::new(c[0], c[1])).collect();
        FourierSketch::from_coeffs(raw.m, raw.l, coeffs).map_err(serde::de::Error::custom)
    }
}

fn check_shape(modulus: u64, halfwidth: usize) -> Result<()> {
    if modulus < 2 {
        return Err(Error::InvalidArgument(format!("modulus must be at least 2, got {modulus}")));
    }
    if 2 * halfwidth as u64 > modulus {
        return Err(Error::InvalidArgument(format!("halfwidth {halfwidth} exceeds half the modulus {modulus}")));
    }
    Ok(())
}

impl FourierSketch {
    /// `coeffs` lists ξ = −L..=L in order.
    pub fn from_coeffs(modulus: u64, halfwidth: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_shape(modulus, halfwidth)?;
        if coeffs.len() != 2 * halfwidth + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                2 * halfwidth + 1,
                coeffs.len()
            )));
        }
        Ok(FourierSketch { modulus, halfwidth, coeffs })
    }

    /// Builds a conjugate-symmetric sketch from the non-negative frequencies.
    fn from_nonnegative(modulus: u64, halfwidth: usize, pos: Vec<Complex64>) -> Self {
        debug_assert_eq!(pos.len(), halfwidth + 1);
        let mut coeffs = Vec::with_capacity(2 * halfwidth + 1);
        coeffs.extend(pos[1..].iter().rev().map(|c| c.conj()));
        coeffs.extend(pos.iter().copied());
        FourierSketch { modulus, halfwidth, coeffs }
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn halfwidth(&self) -> usize {
        self.halfwidth
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient at frequency `xi`; panics when `|xi| > L`.
    pub fn coeff(&self, xi: i64) -> Complex64 {
        let l = self.halfwidth as i64;
        assert!(xi.abs() <= l, "frequency {xi} outside ±{l}");
        self.coeffs[(xi + l) as usize]
    }

    /// `(ξ, coefficient)` pairs for ξ = −L..=L.
    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let l = self.halfwidth as i64;
        self.coeffs.iter().enumerate().map(move |(i, &c)| (i as i64 - l, c))
    }

    /// All residues ξ mod M; residues not covered by `±L` are zero.
    pub fn full_period(&self) -> Vec<Complex64> {
        let m = self.modulus as i64;
        let l = self.halfwidth as i64;
        (0..m)
            .map(|r| {
                if r <= l {
                    self.coeff(r)
                } else if m - r <= l {
                    self.coeff(r - m)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }
}

/// Learner-default modulus `⌈C(ln(1/ε) + σ̃√ln(1/ε))⌉` and halfwidth. The
/// halfwidth is `⌈C² ln(1/ε)⌉` clamped to `⌊M/2⌋` so every retained frequency is
/// a distinct residue.
pub fn sketch_shape(eps: f64, c: f64, sigma_tilde: f64) -> Result<(u64, usize)> {
    check_epsilon(eps)?;
    let log = (1.0 / eps).ln();
    let m = (c * (log + sigma_tilde * log.sqrt())).ceil().max(2.0) as u64;
    let l = taylor_depth(eps, c).min((m / 2) as usize);
    Ok((m, l))
}

/// `⌈C² ln(1/ε)⌉`, the Taylor depth and nominal sketch halfwidth.
pub fn taylor_depth(eps: f64, c: f64) -> usize {
    (c * c * (1.0 / eps).ln()).ceil().max(1.0) as usize
}

fn root_table(modulus: u64, sign: i128) -> Vec<Complex64> {
    (0..modulus).map(|r| unit_root(sign * r as i128, modulus)).collect()
}

fn kahan_complex<I: IntoIterator<Item = Complex64>>(terms: I) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut c = Complex64::new(0.0, 0.0);
    for t in terms {
        let y = t - c;
        let s = sum + y;
        c = (s - sum) - y;
        sum = s;
    }
    sum
}

/// Direct evaluation of the defining sum for each frequency.
pub fn dft_of_pmf(p: &Pmf, modulus: u64, halfwidth: usize) -> Result<FourierSketch> {
    check_shape(modulus, halfwidth)?;
    let table = root_table(modulus, -1);
    let m = modulus as i128;
    let pos = (0..=halfwidth as i128)
        .map(|xi| {
            kahan_complex(p.probs().iter().enumerate().map(|(i, &w)| {
                let j = p.offset() as i128 + i as i128;
                table[(xi * j).rem_euclid(m) as usize] * w
            }))
        })
        .collect();
    Ok(FourierSketch::from_nonnegative(modulus, halfwidth, pos))
}

/// `Π_i ((1−q_i) + q_i e(−ξ/M))^{m_i}` over the distinct parameters.
pub fn dft_closed_form(model: &PbdModel, modulus: u64, halfwidth: usize) -> Result<FourierSketch> {
    check_shape(modulus, halfwidth)?;
    let pos = (0..=halfwidth as i128)
        .map(|xi| {
            let w = unit_root(-xi, modulus);
            model.components().iter().fold(Complex64::new(1.0, 0.0), |acc, c| {
                let phi = Complex64::new(1.0 - c.p, 0.0) + w * c.p;
                acc * phi.powu(c.multiplicity as u32)
            })
        })
        .collect();
    Ok(FourierSketch::from_nonnegative(modulus, halfwidth, pos))
}

/// `h_ξ = (1/N) Σ_i e(−ξ s_i/M)`, computed from exact residue counts.
pub fn empirical_dft(samples: &SampleSet, modulus: u64, halfwidth: usize) -> Result<FourierSketch> {
    check_shape(modulus, halfwidth)?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut counts = vec![0u64; modulus as usize];
    for &s in samples.values() {
        counts[(s % modulus) as usize] += 1;
    }
    let total = samples.len() as f64;
    let table = root_table(modulus, -1);
    let m = modulus as i128;
    let pos = (0..=halfwidth as i128)
        .map(|xi| {
            let s = kahan_complex(
                counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(r, &c)| table[(xi * r as i128).rem_euclid(m) as usize] * c as f64),
            );
            s / total
        })
        .collect();
    Ok(FourierSketch::from_nonnegative(modulus, halfwidth, pos))
}

/// `Σ_{|ξ|≤L} |a(ξ) − b(ξ)|²`.
pub fn sketch_l2_sq(a: &FourierSketch, b: &FourierSketch) -> Result<f64> {
    if a.modulus != b.modulus || a.halfwidth != b.halfwidth {
        return Err(Error::SketchMismatch(a.modulus, b.modulus, a.halfwidth, b.halfwidth));
    }
    Ok(crate::numeric::compensated_sum(a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| (x - y).norm_sqr())))
}

/// Full-period DFT mod M of a pmf, indexed by residue `0..M`.
pub fn full_period_dft(p: &Pmf, modulus: u64) -> Result<Vec<Complex64>> {
    check_shape(modulus, 0)?;
    let table = root_table(modulus, -1);
    let m = modulus as i128;
    Ok((0..m)
        .map(|xi| {
            kahan_complex(p.probs().iter().enumerate().map(|(i, &w)| {
                let j = p.offset() as i128 + i as i128;
                table[(xi * j).rem_euclid(m) as usize] * w
            }))
        })
        .collect())
}

/// Inverse DFT of a full period of coefficients (indexed by residue) onto the
/// window `[start, start + M − 1]`. With `clamp` set, negative values are
/// zeroed and the result renormalized; otherwise the raw real part is kept.
pub fn inverse_dft(full: &[Complex64], window_start: i64, clamp: bool) -> Result<Pmf> {
    let modulus = full.len() as u64;
    check_shape(modulus, 0)?;
    let table = root_table(modulus, 1);
    let m = modulus as i128;
    let values = (0..m)
        .map(|k| {
            let j = window_start as i128 + k;
            let s =
                kahan_complex(full.iter().enumerate().map(|(r, &c)| table[(r as i128 * j).rem_euclid(m) as usize] * c));
            s.re / modulus as f64
        })
        .collect();
    let pmf = Pmf::from_raw(window_start, values);
    Ok(if clamp { pmf.clamp_normalized() } else { pmf })
}

/// Outcome of the sketch-based TV certificate.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// `Σ|a−b|² ≤ ε²/16`: the two distributions are within ε in TV.
    Certified {
        l2_sq: f64,
    },
    NotCertified {
        l2_sq: f64,
    },
    /// The mean/variance preconditions failed; no conclusion either way.
    HypothesisNotMet(String),
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        matches!(self, Certificate::Certified { .. })
    }
}

/// Certifies `TV(A, B) ≤ ε` from the DFT sketches of A and B, provided the
/// means are within `3(√varA + 1)` and `(varB+1)/(varA+1) ∈ [1/4, 4]`.
pub fn certify_tv_from_sketch(
    a: &FourierSketch,
    b: &FourierSketch,
    mean_gap: f64,
    var_a: f64,
    var_b: f64,
    eps: f64,
) -> Result<Certificate> {
    check_epsilon(eps)?;
    let l2_sq = sketch_l2_sq(a, b)?;
    if !(var_a >= 0.0 && var_b >= 0.0) {
        return Ok(Certificate::HypothesisNotMet("variances must be non-negative".into()));
    }
    if mean_gap.abs() > 3.0 * (var_a.sqrt() + 1.0) {
        return Ok(Certificate::HypothesisNotMet(format!(
            "mean gap {mean_gap} exceeds 3(√varA + 1) = {}",
            3.0 * (var_a.sqrt() + 1.0)
        )));
    }
    let ratio = (var_b + 1.0) / (var_a + 1.0);
    if !(0.25..=4.0).contains(&ratio) {
        return Ok(Certificate::HypothesisNotMet(format!(
            "variance ratio (varB+1)/(varA+1) = {ratio} outside [1/4, 4]"
        )));
    }
    Ok(if l2_sq <= eps * eps / 16.0 { Certificate::Certified { l2_sq } } else { Certificate::NotCertified { l2_sq } })
}
