//! Numerical search for a feasible point of a [`PolySystem`].
//!
//! Interval bounds on the mean and variance discard hopeless systems; the
//! rest get low-discrepancy starts and a projected quasi-Newton descent on a
//! smooth penalty. Every candidate is re-checked with the exact residual.

use super::system::{PolySystem, SystemResidual, Variable, ABS_SLACK};
use crate::numeric::{prime, radical_inverse};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Low-discrepancy start points evaluated per system.
    pub starts: usize,
    /// How many of the best starts get a local descent.
    pub local_runs: usize,
    pub max_iters: usize,
    /// Shifts the low-discrepancy sequence; different seeds give different starts.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { starts: 32, local_runs: 4, max_iters: 150, seed: 0 }
    }
}

/// Range of `q(1−q)` over `[a, b]`.
pub(crate) fn unit_variance_range(a: f64, b: f64) -> (f64, f64) {
    let f = |q: f64| q * (1.0 - q);
    let lo = f(a).min(f(b));
    let hi = if a <= 0.5 && b >= 0.5 { 0.25 } else { f(a).max(f(b)) };
    (lo, hi)
}

/// Whether the mean and variance windows can be met anywhere in the boxes.
pub fn interval_feasible(sys: &PolySystem) -> bool {
    let (fixed_mean, fixed_var) = sys.fixed_moments();
    let (mut mlo, mut mhi) = (fixed_mean, fixed_mean);
    let (mut vlo, mut vhi) = (fixed_var, fixed_var);
    for v in sys.variables() {
        let m = v.multiplicity as f64;
        mlo += m * v.lower;
        mhi += m * v.upper;
        let (a, b) = unit_variance_range(v.lower, v.upper);
        vlo += m * a;
        vhi += m * b;
    }
    let (wlo, whi) = sys.mean_window();
    let (slo, shi) = sys.variance_window();
    mhi >= wlo - ABS_SLACK && mlo <= whi + ABS_SLACK && vhi >= slo - ABS_SLACK && vlo <= shi + ABS_SLACK
}

struct Penalty<'a> {
    sys: &'a PolySystem,
    scale_mean: f64,
    scale_var: f64,
}

impl Penalty<'_> {
    fn point(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.sys.variables()).map(|(&t, v)| to_box(t, v)).collect()
    }

    /// Penalty value, its gradient in unit coordinates, and whether the point
    /// already meets every constraint.
    fn eval(&self, u: &[f64], eps: f64) -> (f64, Vec<f64>, bool) {
        let q = self.point(u);
        let (ft, mut grad) = self.sys.ft_with_gradient(&q);
        let mean = self.sys.mean_of(&q);
        let var = self.sys.variance_of(&q);
        let (mlo, mhi) = self.sys.mean_window();
        let (vlo, vhi) = self.sys.variance_window();
        let dm = if mean < mlo {
            mean - mlo
        } else if mean > mhi {
            mean - mhi
        } else {
            0.0
        };
        let dv = if var < vlo {
            var - vlo
        } else if var > vhi {
            var - vhi
        } else {
            0.0
        };
        let pm = dm / self.scale_mean;
        let pv = dv / self.scale_var;
        let value = ft + pm * pm + pv * pv;
        for (i, v) in self.sys.variables().iter().enumerate() {
            let m = v.multiplicity as f64;
            grad[i] += 2.0 * pm * m / self.scale_mean + 2.0 * pv * m * (1.0 - 2.0 * q[i]) / self.scale_var;
            grad[i] *= v.upper - v.lower;
        }
        let ok = dm == 0.0 && dv == 0.0 && ft <= SystemResidual::ft_budget(eps);
        (value, grad, ok)
    }
}

fn to_box(t: f64, v: &Variable) -> f64 {
    (v.lower + (v.upper - v.lower) * t).clamp(v.lower, v.upper)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected BFGS from `start`; returns the first point the penalty deems
/// feasible.
fn descend(pen: &Penalty<'_>, start: Vec<f64>, eps: f64, delta: f64, max_iters: usize) -> Option<Vec<f64>> {
    let d = start.len();
    let widths: Vec<f64> = pen.sys.variables().iter().map(|v| v.upper - v.lower).collect();
    let mut u = start;
    let (mut f, mut g, ok) = pen.eval(&u, eps);
    if ok {
        return Some(u);
    }
    let mut h = identity(d);
    for _ in 0..max_iters {
        let free: Vec<bool> = (0..d).map(|i| !((u[i] <= 0.0 && g[i] > 0.0) || (u[i] >= 1.0 && g[i] < 0.0))).collect();
        let mut p = vec![0.0; d];
        for i in 0..d {
            if free[i] {
                p[i] = -(0..d).filter(|&j| free[j]).map(|j| h[i][j] * g[j]).sum::<f64>();
            }
        }
        if dot(&p, &g) >= 0.0 {
            h = identity(d);
            for i in 0..d {
                p[i] = if free[i] { -g[i] } else { 0.0 };
            }
        }
        if p.iter().all(|&x| x == 0.0) {
            return None;
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let cand: Vec<f64> = u.iter().zip(&p).map(|(&x, &s)| (x + step * s).clamp(0.0, 1.0)).collect();
            let (fc, gc, okc) = pen.eval(&cand, eps);
            if okc {
                return Some(cand);
            }
            let moved: Vec<f64> = cand.iter().zip(&u).map(|(a, b)| a - b).collect();
            if fc <= f + 1e-4 * dot(&g, &moved) {
                accepted = Some((cand, fc, gc, moved));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc, s)) = accepted else {
            return None;
        };
        let y: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-18 {
            let hy: Vec<f64> = (0..d).map(|i| dot(&h[i], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..d {
                for j in 0..d {
                    h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let resolved = s.iter().zip(&widths).all(|(x, w)| (x * w).abs() < delta * 1e-3);
        u = cand;
        f = fc;
        g = gc;
        if resolved {
            return None;
        }
    }
    None
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Searches for a feasible assignment. Anything returned passes
/// [`SystemResidual::is_feasible`].
pub fn solve(sys: &PolySystem, delta: f64, options: &SolverOptions) -> Option<Vec<f64>> {
    assert!(delta > 0.0, "precision must be positive");
    let eps = sys.constants().epsilon;
    let verify = |q: Vec<f64>| sys.residual(&q).is_feasible(eps).then_some(q);
    if sys.dimension() == 0 {
        return verify(Vec::new());
    }
    if !interval_feasible(sys) {
        return None;
    }
    let sigma = sys.constants().sigma_estimate.max(1.0);
    let pen = Penalty { sys, scale_mean: sigma, scale_var: sigma * sigma };
    let d = sys.dimension();
    let mut starts = Vec::with_capacity(options.starts);
    let first = 1 + options.seed % 4096;
    for k in first..first + options.starts as u64 {
        let u: Vec<f64> = (0..d).map(|i| radical_inverse(k, prime(i))).collect();
        let (f, _, ok) = pen.eval(&u, eps);
        if ok {
            if let Some(q) = verify(pen.point(&u)) {
                return Some(q);
            }
        }
        starts.push((f, u));
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    starts.truncate(options.local_runs.max(1));
    starts
        .into_par_iter()
        .map(|(_, u)| descend(&pen, u, eps, delta, options.max_iters).and_then(|u| verify(pen.point(&u))))
        .find_map_first(|x| x)
}
