//! Construction and evaluation of the per-multiset constraint system.

use crate::error::{check_epsilon, Error, Result};
use crate::fourier::FourierSketch;
use crate::model::{Component, PbdModel};
use crate::moments::log_series_coefficients;
use crate::numeric::{round_half_even, unit_root};
use crate::structure::{IntervalScheme, MultiplicityMultiset};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::TAU;

/// Absolute slack added to every feasibility test.
pub const ABS_SLACK: f64 = 1e-9;
/// The small-variance form is used when `σ̃² < SMALL_REGIME_CONSTANT · ln(1/ε)`.
pub const SMALL_REGIME_CONSTANT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Low/high split at 1/2, everything through the truncated logarithm.
    Large,
    /// Values in `[1/4, 3/4]` enter as an exact product.
    Small,
}

pub fn regime_for(sigma_tilde: f64, eps: f64) -> Regime {
    if sigma_tilde * sigma_tilde < SMALL_REGIME_CONSTANT * (1.0 / eps).ln() {
        Regime::Small
    } else {
        Regime::Large
    }
}

/// Estimates and sizes shared by every system built for one learning run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemConstants {
    pub mean_estimate: f64,
    pub sigma_estimate: f64,
    pub modulus: u64,
    pub halfwidth: usize,
    pub lmax: usize,
    pub epsilon: f64,
}

/// Which part of the transform a value contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// Expanded around 0 (the index set S).
    Low,
    /// Expanded around 1 (the index set T).
    High,
    /// Kept as an exact product (small regime only).
    Middle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Variable {
    pub multiplicity: usize,
    pub lower: f64,
    pub upper: f64,
    pub group: Group,
}

#[derive(Debug, Clone, Serialize)]
struct Frequency {
    /// `e(−ξ/M) − 1`
    z_low: Complex64,
    /// `e(ξ/M) − 1`
    z_high: Complex64,
    /// `e(−ξ/M)`
    root: Complex64,
    /// `−2πi(ξ·m − o_ξ·M)/M`: the ones' winding with the integer offset removed.
    base: Complex64,
    target: Complex64,
}

/// The constraint system of one multiplicity multiset.
#[derive(Debug, Clone, Serialize)]
pub struct PolySystem {
    constants: SystemConstants,
    regime: Regime,
    variables: Vec<Variable>,
    /// Degenerate boxes other than 0 and 1, held at their single value.
    fixed: Vec<Variable>,
    zeros: usize,
    ones: usize,
    /// Total multiplicity expanded around 1 (ones included).
    high_mult: usize,
    offsets: Vec<i64>,
    target: FourierSketch,
    #[serde(skip)]
    freqs: Vec<Frequency>,
    #[serde(skip)]
    coeffs: Vec<f64>,
}

/// Evaluation of every constraint at one assignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemResidual {
    /// Distance inside the mean window (negative when outside).
    pub mean_slack: f64,
    /// Distance inside the variance window (negative when outside).
    pub var_slack: f64,
    /// Per variable, how far the value lies outside its box.
    pub box_violations: Vec<f64>,
    /// `Σ_{|ξ|≤L} |q_ξ − h_ξ|²`.
    pub ft_residual: f64,
}

impl SystemResidual {
    pub fn ft_budget(eps: f64) -> f64 {
        eps * eps / 8.0
    }

    pub fn is_feasible(&self, eps: f64) -> bool {
        self.mean_slack >= -ABS_SLACK
            && self.var_slack >= -ABS_SLACK
            && self.box_violations.iter().all(|&v| v <= ABS_SLACK)
            && self.ft_residual <= Self::ft_budget(eps) + ABS_SLACK
    }
}

/// `Σ_{k≤lmax} z^k/k!`. Inside `|z| ≤ (lmax+1)/2` the value is formed as
/// `exp(z)` minus the (rapidly convergent) tail, which avoids the
/// cancellation a plain Horner sum suffers for large negative `z`; outside
/// it the polynomial is evaluated by Horner's rule.
pub fn exp_truncated(z: Complex64, lmax: usize) -> Complex64 {
    if lmax == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let r = z.norm();
    if r <= (lmax as f64 + 1.0) / 2.0 {
        let mut term = Complex64::new(1.0, 0.0);
        for k in 1..=lmax {
            term = term * z / k as f64;
        }
        let mut tail = Complex64::new(0.0, 0.0);
        let mut k = lmax + 1;
        loop {
            term = term * z / k as f64;
            tail += term;
            if term.norm() <= 1e-18 * tail.norm().max(1e-300) || term.norm() == 0.0 || k > lmax + 2000 {
                break;
            }
            k += 1;
        }
        z.exp() - tail
    } else {
        let mut acc = Complex64::new(1.0, 0.0);
        for k in (1..=lmax).rev() {
            acc = acc * z / k as f64 + 1.0;
        }
        acc
    }
}

/// `Σ_{k≤lmax} (−1)^{k+1} w^k/k`. When the dropped tail is below 1e-17 the
/// sum equals `log(1+w)` to double precision and is evaluated that way.
fn log_series(w: Complex64, lmax: usize, coeffs: &[f64]) -> Complex64 {
    let r = w.norm();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if r < 0.9 {
        let tail = r.powi(lmax as i32 + 1) / ((lmax as f64 + 1.0) * (1.0 - r));
        if tail <= 1e-17 {
            let re = 0.5 * (2.0 * w.re + r * r).ln_1p();
            let im = w.im.atan2(1.0 + w.re);
            return Complex64::new(re, im);
        }
    }
    let mut p = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for c in coeffs.iter().take(lmax) {
        p *= w;
        acc += p * *c;
        if p.norm() < 1e-20 {
            break;
        }
    }
    acc
}

impl PolySystem {
    pub fn constants(&self) -> &SystemConstants {
        &self.constants
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn dimension(&self) -> usize {
        self.variables.len()
    }

    pub fn zeros(&self) -> usize {
        self.zeros
    }

    pub fn ones(&self) -> usize {
        self.ones
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn target(&self) -> &FourierSketch {
        &self.target
    }

    /// JSON dump for reproducing solver runs.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("system serializes")
    }

    fn all_values<'a>(&'a self, values: &'a [f64]) -> impl Iterator<Item = (f64, &'a Variable)> + 'a {
        self.variables
            .iter()
            .zip(values.iter().copied())
            .map(|(v, q)| (q, v))
            .chain(self.fixed.iter().map(|v| (v.lower, v)))
    }

    /// Mean and variance contributed by the ones and the fixed values.
    pub fn fixed_moments(&self) -> (f64, f64) {
        let mean = self.ones as f64 + self.fixed.iter().map(|v| v.multiplicity as f64 * v.lower).sum::<f64>();
        let var = self.fixed.iter().map(|v| v.multiplicity as f64 * v.lower * (1.0 - v.lower)).sum();
        (mean, var)
    }

    /// `Σ m q` including the ones.
    pub fn mean_of(&self, values: &[f64]) -> f64 {
        self.ones as f64 + self.all_values(values).map(|(q, v)| v.multiplicity as f64 * q).sum::<f64>()
    }

    /// `Σ m q(1−q)`.
    pub fn variance_of(&self, values: &[f64]) -> f64 {
        self.all_values(values).map(|(q, v)| v.multiplicity as f64 * q * (1.0 - q)).sum()
    }

    pub fn mean_window(&self) -> (f64, f64) {
        let c = &self.constants;
        (c.mean_estimate - 2.0 * c.sigma_estimate, c.mean_estimate + 2.0 * c.sigma_estimate)
    }

    pub fn variance_window(&self) -> (f64, f64) {
        let s2 = self.constants.sigma_estimate * self.constants.sigma_estimate;
        (s2 / 2.0 - 1.0, 2.0 * s2)
    }

    /// `g_ξ` with the integer winding removed, for `0 ≤ ξ ≤ L`.
    pub fn g_shifted(&self, xi: usize, values: &[f64]) -> Complex64 {
        let f = &self.freqs[xi];
        let lmax = self.constants.lmax;
        let mut g = f.base;
        for (q, v) in self.all_values(values) {
            let m = v.multiplicity as f64;
            match v.group {
                Group::Low => g += log_series(f.z_low * q, lmax, &self.coeffs) * m,
                Group::High => g += log_series(f.z_high * (1.0 - q), lmax, &self.coeffs) * m,
                Group::Middle => {}
            }
        }
        g
    }

    /// `q_ξ` for `0 ≤ ξ ≤ L`. The truncated exponential is used where its
    /// argument lies within `lmax/3`; beyond that it no longer approximates
    /// `exp` and the exact exponential is used instead.
    pub fn q_xi(&self, xi: usize, values: &[f64]) -> Complex64 {
        let f = &self.freqs[xi];
        let g = self.g_shifted(xi, values);
        let lmax = self.constants.lmax;
        let e = if g.norm() <= lmax as f64 / 3.0 { exp_truncated(g, lmax) } else { g.exp() };
        let mut prod = Complex64::new(1.0, 0.0);
        for (q, v) in self.all_values(values) {
            if v.group == Group::Middle {
                let phi = Complex64::new(1.0 - q, 0.0) + f.root * q;
                prod *= phi.powu(v.multiplicity as u32);
            }
        }
        e * prod
    }

    /// `Σ_{|ξ|≤L} |q_ξ − h_ξ|²`, using `q_{−ξ} = conj(q_ξ)`.
    pub fn ft_residual(&self, values: &[f64]) -> f64 {
        (0..=self.constants.halfwidth)
            .map(|xi| {
                let d = (self.q_xi(xi, values) - self.freqs[xi].target).norm_sqr();
                if xi == 0 {
                    d
                } else {
                    2.0 * d
                }
            })
            .sum()
    }

    /// `Σ_ξ |q_ξ − h_ξ|²` and its gradient with respect to each variable.
    /// The gradient differentiates the untruncated expressions; it only
    /// steers the search, feasibility is always judged on the exact residual.
    pub(crate) fn ft_with_gradient(&self, values: &[f64]) -> (f64, Vec<f64>) {
        let mut total = 0.0;
        let mut grad = vec![0.0; values.len()];
        for xi in 0..=self.constants.halfwidth {
            let f = &self.freqs[xi];
            let q = self.q_xi(xi, values);
            let diff = q - f.target;
            let w = if xi == 0 { 1.0 } else { 2.0 };
            total += w * diff.norm_sqr();
            for (i, (&x, v)) in values.iter().zip(&self.variables).enumerate() {
                let m = v.multiplicity as f64;
                let dlog = match v.group {
                    Group::Low => f.z_low / (f.z_low * x + 1.0),
                    Group::High => -f.z_high / (f.z_high * (1.0 - x) + 1.0),
                    Group::Middle => (f.root - 1.0) / (Complex64::new(1.0 - x, 0.0) + f.root * x),
                };
                let dq = q * dlog * m;
                grad[i] += w * 2.0 * (diff.conj() * dq).re;
            }
        }
        (total, grad)
    }

    pub fn residual(&self, values: &[f64]) -> SystemResidual {
        assert_eq!(values.len(), self.variables.len(), "assignment has the wrong length");
        let mean = self.mean_of(values);
        let var = self.variance_of(values);
        let (mlo, mhi) = self.mean_window();
        let (vlo, vhi) = self.variance_window();
        let box_violations =
            values.iter().zip(&self.variables).map(|(&q, v)| (v.lower - q).max(q - v.upper).max(0.0)).collect();
        SystemResidual {
            mean_slack: (mean - mlo).min(mhi - mean),
            var_slack: (var - vlo).min(vhi - var),
            box_violations,
            ft_residual: self.ft_residual(values),
        }
    }

    /// Values of `model` for this system's variables, matching each variable
    /// to an unused component of equal multiplicity inside its box. `None`
    /// if the model does not have this system's structure.
    pub fn assignment_for(&self, model: &PbdModel) -> Option<Vec<f64>> {
        let mut used = vec![false; model.components().len()];
        self.variables
            .iter()
            .map(|v| {
                let i = model.components().iter().enumerate().position(|(i, c)| {
                    !used[i] && c.multiplicity == v.multiplicity && c.p >= v.lower && c.p <= v.upper
                })?;
                used[i] = true;
                Some(model.components()[i].p)
            })
            .collect()
    }

    /// The PBD obtained by placing each variable's multiplicity at its value.
    pub fn expand(&self, values: &[f64]) -> Result<PbdModel> {
        let mut comps = vec![Component::new(0.0, self.zeros), Component::new(1.0, self.ones)];
        comps.extend(self.all_values(values).map(|(q, v)| Component::new(q, v.multiplicity)));
        PbdModel::new(comps)
    }
}

/// Builds the system for a multiset against the empirical sketch `h`.
pub fn build_system(
    multiset: &MultiplicityMultiset,
    scheme: &IntervalScheme,
    h: &FourierSketch,
    constants: SystemConstants,
    regime: Regime,
) -> Result<PolySystem> {
    check_epsilon(constants.epsilon)?;
    if h.modulus() != constants.modulus || h.halfwidth() != constants.halfwidth {
        return Err(Error::SketchMismatch(h.modulus(), constants.modulus, h.halfwidth(), constants.halfwidth));
    }
    if constants.lmax == 0 {
        return Err(Error::InvalidArgument("lmax must be at least 1".into()));
    }
    let expected = regime_for(constants.sigma_estimate, constants.epsilon);
    if expected != regime {
        return Err(Error::RegimeMismatch(format!(
            "σ̃ = {} selects the {expected:?} regime, not {regime:?}",
            constants.sigma_estimate
        )));
    }
    let mut variables = Vec::new();
    let mut fixed = Vec::new();
    let mut zeros = 0;
    let mut ones = 0;
    for t in multiset.triples() {
        let (a, b) = t.bounds(scheme);
        if a == b && a == 0.0 {
            zeros += t.multiplicity;
            continue;
        }
        if a == b && a == 1.0 {
            ones += t.multiplicity;
            continue;
        }
        let group = match regime {
            Regime::Large if b <= 0.5 => Group::Low,
            Regime::Large if a >= 0.5 => Group::High,
            Regime::Large => {
                return Err(Error::RegimeMismatch(format!("box [{a}, {b}] straddles 1/2")));
            }
            Regime::Small if b <= 0.25 => Group::Low,
            Regime::Small if a >= 0.75 => Group::High,
            Regime::Small => Group::Middle,
        };
        let v = Variable { multiplicity: t.multiplicity, lower: a, upper: b, group };
        if a == b {
            fixed.push(v);
        } else {
            variables.push(v);
        }
    }
    let high_mult =
        ones + variables.iter().chain(&fixed).filter(|v| v.group == Group::High).map(|v| v.multiplicity).sum::<usize>();
    let modulus = constants.modulus;
    let m = modulus as f64;
    // centre of the winding removed from g_ξ: μ̃ in the large regime, the
    // midpoint of the expanded groups' mean in the small one
    let centre = match regime {
        Regime::Large => constants.mean_estimate,
        Regime::Small => {
            ones as f64
                + variables
                    .iter()
                    .chain(&fixed)
                    .filter(|v| v.group != Group::Middle)
                    .map(|v| v.multiplicity as f64 * 0.5 * (v.lower + v.upper))
                    .sum::<f64>()
        }
    };
    let offsets: Vec<i64> =
        (0..=constants.halfwidth).map(|xi| round_half_even(centre * xi as f64 / m) as i64).collect();
    let freqs = (0..=constants.halfwidth)
        .map(|xi| {
            let root = unit_root(-(xi as i128), modulus);
            let winding = xi as i128 * high_mult as i128 - offsets[xi] as i128 * modulus as i128;
            Frequency {
                z_low: root - 1.0,
                z_high: root.conj() - 1.0,
                root,
                base: Complex64::new(0.0, -TAU * winding as f64 / m),
                target: h.coeff(xi as i64),
            }
        })
        .collect();
    Ok(PolySystem {
        constants,
        regime,
        variables,
        fixed,
        zeros,
        ones,
        high_mult,
        offsets,
        target: h.clone(),
        freqs,
        coeffs: log_series_coefficients(constants.lmax),
    })
}
