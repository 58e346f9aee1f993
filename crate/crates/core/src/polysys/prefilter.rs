//! Interval pruning of the multiset stream.
//!
//! A multiset can only lead to a feasible system if some point of its boxes
//! meets the mean and variance windows and has a transform close to the
//! sketch at a few low frequencies. For one parameter `q` and angle
//! `θ = 2πξ/M < π/2` the factor `φ(q) = 1 − q + q·e^{−iθ}` has
//! `ln|φ|` decreasing on `[0, 1/2]` and increasing on `[1/2, 1]`, and `arg φ`
//! decreasing in `q`, so each box maps to exact ranges of both. Summing
//! those ranges with multiplicities bounds `ln Q̂(ξ)` for every completion.
//! Complete multisets get a final check against the whole residual budget
//! over all usable frequencies, bisecting the boxes until every piece is
//! ruled out or the piece budget runs out.

use super::solver::unit_variance_range;
use super::system::{SystemResidual, ABS_SLACK};
use crate::fourier::FourierSketch;
use crate::structure::{Band, IntervalScheme, Prefix, Side, StreamFilter};
use num_complex::Complex64;
use std::f64::consts::TAU;

/// Highest frequency probed; probes also need `ξ ≤ L` and `ξ ≤ M/6`.
const MAX_PROBE: usize = 16;
/// Extra room for the truncations in `q_ξ` and rounding.
const PROBE_SLACK: f64 = 1e-6;
/// Boxes examined for one complete multiset before it is let through.
const REFINE_BOXES: usize = 512;

#[derive(Debug, Clone)]
struct Probe {
    theta: f64,
    target: Complex64,
    /// Allowed range of `ln|Q̂(ξ)|`.
    log_modulus: (f64, f64),
    /// `(arg h_ξ, half-width)`, absent when `h_ξ` is too close to 0.
    phase: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
struct BandRanges {
    mean: (f64, f64),
    var: (f64, f64),
    /// Per probe: `ln|φ|` range and `arg φ` range, both non-positive.
    re: Vec<(f64, f64)>,
    im: Vec<(f64, f64)>,
}

/// Prunes multisets whose boxes cannot meet the moment windows or the
/// low-frequency sketch coefficients.
#[derive(Debug, Clone)]
pub struct FourierPrefilter {
    depth: usize,
    bounds: Vec<(f64, f64)>,
    bands: Vec<BandRanges>,
    probes: Vec<Probe>,
    /// How far the system's `q_ξ` may sit from the exact transform.
    allowance: f64,
    budget: f64,
    mean_window: (f64, f64),
    var_window: (f64, f64),
}

fn log_phi(q: f64, theta: f64) -> (f64, f64) {
    let re = 1.0 - q + q * theta.cos();
    let im = -q * theta.sin();
    (0.5 * (re * re + im * im).ln(), im.atan2(re))
}

impl FourierPrefilter {
    /// `eps` is the accuracy of the systems being solved, which can be
    /// coarser than the scheme's.
    pub fn new(scheme: &IntervalScheme, h: &FourierSketch, mean_estimate: f64, sigma_estimate: f64, eps: f64) -> Self {
        let m = h.modulus() as f64;
        let budget = SystemResidual::ft_budget(eps) + ABS_SLACK;
        let allowance = eps.powi(3) + PROBE_SLACK;
        let tau = (budget / 2.0).sqrt() + allowance;
        let probes: Vec<Probe> = (1..=MAX_PROBE.min(h.halfwidth()))
            .take_while(|&xi| 6 * xi as u64 <= h.modulus())
            .map(|xi| {
                let target = h.coeff(xi as i64);
                let rho = target.norm();
                let hi = (rho + tau).ln();
                let lo = if rho > tau { (rho - tau).ln() } else { f64::NEG_INFINITY };
                let phase = (rho > tau).then(|| (target.arg(), (tau / rho).asin()));
                Probe { theta: TAU * xi as f64 / m, target, log_modulus: (lo, hi), phase }
            })
            .collect();
        let bounds: Vec<(f64, f64)> = scheme.bands().into_iter().map(|band| scheme.bounds(band)).collect();
        let bands = scheme
            .bands()
            .into_iter()
            .map(|band| {
                let (a, b) = scheme.bounds(band);
                let mut re = Vec::new();
                let mut im = Vec::new();
                for p in &probes {
                    let (ra, ia) = log_phi(a, p.theta);
                    let (rb, ib) = log_phi(b, p.theta);
                    let rmin = if a <= 0.5 && b >= 0.5 { log_phi(0.5, p.theta).0 } else { ra.min(rb) };
                    re.push((rmin, ra.max(rb).min(0.0)));
                    im.push((ib, ia));
                }
                BandRanges { mean: (a, b), var: unit_variance_range(a, b), re, im }
            })
            .collect();
        let s2 = sigma_estimate * sigma_estimate;
        FourierPrefilter {
            depth: scheme.depth(),
            bounds,
            bands,
            probes,
            allowance,
            budget,
            mean_window: (
                mean_estimate - 2.0 * sigma_estimate - ABS_SLACK,
                mean_estimate + 2.0 * sigma_estimate + ABS_SLACK,
            ),
            var_window: (s2 / 2.0 - 1.0 - ABS_SLACK, 2.0 * s2 + ABS_SLACK),
        }
    }

    fn index(&self, band: Band) -> usize {
        let off = match band.side {
            Side::Low => 0,
            Side::High => self.depth + 2,
        };
        off + band.level
    }

    fn ranges(&self, band: Band) -> &BandRanges {
        &self.bands[self.index(band)]
    }

    /// Intervals of every checked quantity over all completions of the
    /// prefix, leaving out the first `skip` pending slots.
    fn totals(&self, prefix: &Prefix<'_>, skip: usize) -> Totals {
        let mut t = Totals::new(self.probes.len(), prefix.ones, &self.probes);
        for (band, &m) in prefix.bands.iter().zip(prefix.assigned) {
            t.add_exact(self.ranges(*band), m as f64);
        }
        let pending = &prefix.pending()[skip..];
        if !pending.is_empty() {
            let spare = prefix.spare as f64;
            let each = (prefix.spare + 1).saturating_sub(pending.len()) as f64;
            t.add_pending(pending.iter().map(|&b| self.ranges(b)), each, spare);
        }
        t
    }
}

#[derive(Debug, Clone)]
struct Totals {
    mean: (f64, f64),
    var: (f64, f64),
    re: Vec<(f64, f64)>,
    im: Vec<(f64, f64)>,
}

impl Totals {
    fn new(k: usize, ones: usize, probes: &[Probe]) -> Self {
        let t = ones as f64;
        Totals {
            mean: (t, t),
            var: (0.0, 0.0),
            re: vec![(0.0, 0.0); k],
            im: probes.iter().map(|p| (-p.theta * t, -p.theta * t)).collect(),
        }
    }

    fn add_exact(&mut self, r: &BandRanges, m: f64) {
        add(&mut self.mean, r.mean, m);
        add(&mut self.var, r.var, m);
        for i in 0..self.re.len() {
            add(&mut self.re[i], r.re[i], m);
            add(&mut self.im[i], r.im[i], m);
        }
    }

    /// Slots with unknown multiplicities in `[1, each]` and joint total at
    /// most `spare`.
    fn add_pending<'a>(&mut self, ranges: impl Iterator<Item = &'a BandRanges> + Clone, each: f64, spare: f64) {
        let nonneg = |pick: &dyn Fn(&BandRanges) -> (f64, f64)| {
            let lo: f64 = ranges.clone().map(|r| pick(r).0).sum();
            let hi_sum: f64 = ranges.clone().map(|r| pick(r).1 * each).sum();
            let hi_max = ranges.clone().map(|r| pick(r).1).fold(0.0, f64::max) * spare;
            (lo, hi_sum.min(hi_max))
        };
        let nonpos = |pick: &dyn Fn(&BandRanges) -> (f64, f64)| {
            let (lo, hi) = nonneg(&|r| {
                let (a, b) = pick(r);
                (-b, -a)
            });
            (-hi, -lo)
        };
        let m = nonneg(&|r| r.mean);
        let v = nonneg(&|r| r.var);
        shift(&mut self.mean, m);
        shift(&mut self.var, v);
        for i in 0..self.re.len() {
            let re = nonpos(&|r| r.re[i]);
            let im = nonpos(&|r| r.im[i]);
            shift(&mut self.re[i], re);
            shift(&mut self.im[i], im);
        }
    }
}

fn add(acc: &mut (f64, f64), r: (f64, f64), m: f64) {
    acc.0 += r.0 * m;
    acc.1 += r.1 * m;
}

fn shift(acc: &mut (f64, f64), r: (f64, f64)) {
    acc.0 += r.0;
    acc.1 += r.1;
}

fn meets(range: (f64, f64), window: (f64, f64)) -> bool {
    range.1 >= window.0 && range.0 <= window.1
}

/// Whether some `ψ + 2πk` lies within `δ` of `[lo, hi]`.
fn phase_meets(range: (f64, f64), psi: f64, delta: f64) -> bool {
    let lo = range.0 - delta - 1e-9;
    let hi = range.1 + delta + 1e-9;
    if hi - lo >= TAU {
        return true;
    }
    let k = ((lo - psi) / TAU).ceil();
    psi + k * TAU <= hi
}

/// Multiplicity bounds from `total = base + m·x + rest ∈ window` for a
/// non-negative per-unit `x ∈ [xl, xh]`.
fn linear_bounds(base: (f64, f64), x: (f64, f64), rest: (f64, f64), window: (f64, f64)) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let room_hi = window.1 - base.0 - rest.0;
    if x.0 > 0.0 {
        hi = room_hi / x.0;
    } else if room_hi < 0.0 {
        hi = f64::NEG_INFINITY;
    }
    let need = window.0 - base.1 - rest.1;
    if x.1 > 0.0 {
        lo = need / x.1;
    } else if need > 0.0 {
        lo = f64::INFINITY;
    }
    (lo, hi)
}

impl FourierPrefilter {
    fn check(&self, t: &Totals) -> bool {
        if !meets(t.mean, self.mean_window) || !meets(t.var, self.var_window) {
            return false;
        }
        self.probes
            .iter()
            .enumerate()
            .all(|(i, p)| meets(t.re[i], p.log_modulus) && p.phase.is_none_or(|(psi, d)| phase_meets(t.im[i], psi, d)))
            && self.within_budget(t.re.iter().zip(&t.im).map(|(&re, &im)| (re, im)))
    }

    /// Whether the residual over the probes can stay within budget, given
    /// per-probe ranges of `ln|Q̂|` and `arg Q̂`.
    fn within_budget(&self, ranges: impl Iterator<Item = ((f64, f64), (f64, f64))>) -> bool {
        let mut spent = 0.0;
        for (p, (re, im)) in self.probes.iter().zip(ranges) {
            let d = (sector_distance(p.target, (re.0.exp(), re.1.exp()), im) - self.allowance).max(0.0);
            spent += 2.0 * d * d;
            if spent > self.budget {
                return false;
            }
        }
        true
    }
}

impl FourierPrefilter {
    /// Whether some point of `boxes` (with multiplicities `ms`) may meet the
    /// moment windows and the residual budget.
    fn box_possible(&self, ones: f64, ms: &[f64], boxes: &[(f64, f64)]) -> bool {
        let mut mean = (ones, ones);
        let mut var = (0.0, 0.0);
        for (&m, &(a, b)) in ms.iter().zip(boxes) {
            add(&mut mean, (a, b), m);
            add(&mut var, unit_variance_range(a, b), m);
        }
        if !meets(mean, self.mean_window) || !meets(var, self.var_window) {
            return false;
        }
        self.within_budget(self.probes.iter().map(|p| {
            let mut re = (0.0, 0.0);
            let mut im = (-p.theta * ones, -p.theta * ones);
            for (&m, &(a, b)) in ms.iter().zip(boxes) {
                let (ra, ia) = log_phi(a, p.theta);
                let (rb, ib) = log_phi(b, p.theta);
                let rmin = if a <= 0.5 && b >= 0.5 { log_phi(0.5, p.theta).0 } else { ra.min(rb) };
                add(&mut re, (rmin, ra.max(rb).min(0.0)), m);
                add(&mut im, (ib, ia), m);
            }
            (re, im)
        }))
    }

    /// Bisects the boxes of a complete multiset, widest contribution first.
    fn refine(&self, prefix: &Prefix<'_>) -> bool {
        let ones = prefix.ones as f64;
        let ms: Vec<f64> = prefix.assigned.iter().map(|&m| m as f64).collect();
        let mut stack = vec![prefix.bands.iter().map(|&b| self.bounds[self.index(b)]).collect::<Vec<_>>()];
        let mut seen = 0;
        while let Some(boxes) = stack.pop() {
            if !self.box_possible(ones, &ms, &boxes) {
                continue;
            }
            seen += 1;
            let widest = (0..boxes.len()).max_by(|&i, &j| {
                let w = |k: usize| ms[k] * (boxes[k].1 - boxes[k].0);
                w(i).total_cmp(&w(j))
            });
            let Some(j) = widest else {
                return true;
            };
            let (a, b) = boxes[j];
            if seen >= REFINE_BOXES || ms[j] * (b - a) < 1e-9 {
                return true;
            }
            let mid = 0.5 * (a + b);
            let mut left = boxes.clone();
            left[j].1 = mid;
            let mut right = boxes;
            right[j].0 = mid;
            stack.push(right);
            stack.push(left);
        }
        false
    }
}

/// Distance from `target` to `{r·e^{iφ} : r ∈ radius, φ ∈ angle}`.
fn sector_distance(target: Complex64, radius: (f64, f64), angle: (f64, f64)) -> f64 {
    let rho = target.norm();
    let radial = (radius.0 - rho).max(rho - radius.1).max(0.0);
    if angle.1 - angle.0 >= TAU {
        return radial;
    }
    let psi = target.arg();
    let k = ((angle.0 - psi) / TAU).ceil();
    let inside = psi + k * TAU;
    if inside <= angle.1 {
        return radial;
    }
    // angular gap to the nearer edge, in [0, π]
    let gap = |phi: f64| {
        let d = (psi - phi).rem_euclid(TAU);
        d.min(TAU - d)
    };
    let delta = gap(angle.0).min(gap(angle.1));
    let r = (rho * delta.cos()).clamp(radius.0, radius.1);
    (rho * rho + r * r - 2.0 * rho * r * delta.cos()).max(0.0).sqrt()
}

impl StreamFilter for FourierPrefilter {
    fn admits(&self, prefix: &Prefix<'_>) -> bool {
        if !self.check(&self.totals(prefix, 0)) {
            return false;
        }
        !prefix.pending().is_empty() || self.refine(prefix)
    }

    fn slot_range(&self, prefix: &Prefix<'_>, lo: usize, hi: usize) -> Option<(usize, usize)> {
        let band = prefix.pending()[0];
        let r = self.ranges(band);
        // everything except the next slot; later slots may use what the next
        // one leaves, at most `spare − lo`
        let mut rest_prefix = *prefix;
        rest_prefix.spare = prefix.spare.saturating_sub(lo);
        let rest = self.totals(&rest_prefix, 1);
        let mut mlo = lo as f64;
        let mut mhi = hi as f64;
        let mut narrow = |(a, b): (f64, f64)| {
            mlo = mlo.max((a - 1e-9).ceil());
            mhi = mhi.min((b + 1e-9).floor());
        };
        let zero = (0.0, 0.0);
        narrow(linear_bounds(zero, r.mean, rest.mean, self.mean_window));
        narrow(linear_bounds(zero, r.var, rest.var, self.var_window));
        for (i, p) in self.probes.iter().enumerate() {
            let neg = |x: (f64, f64)| (-x.1, -x.0);
            narrow(linear_bounds(zero, neg(r.re[i]), neg(rest.re[i]), neg(p.log_modulus)));
        }
        (mlo <= mhi).then_some((mlo as usize, mhi as usize))
    }
}
