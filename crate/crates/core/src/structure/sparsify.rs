//! Rewrites a PBD into one with few distinct parameters per band while
//! keeping its low-order power sums, and hence its distribution, nearly fixed.

use super::scheme::{build_scheme, Band, IntervalScheme, Side};
use crate::error::{check_epsilon, Error, Result};
use crate::model::{Component, PbdModel};
use crate::moments::weight_base;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct SparsifyOptions {
    /// Constant `C` in the moment weight `A = min(3, C√(ln(1/ε)/Var))`.
    pub c: f64,
    /// Largest accepted input variance; `None` means `ε⁻⁶`.
    pub variance_cap: Option<f64>,
    /// Attempts per band before falling back to the original values.
    pub starts: usize,
    pub seed: u64,
}

impl Default for SparsifyOptions {
    fn default() -> Self {
        SparsifyOptions { c: 10.0, variance_cap: None, starts: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsifyReport {
    pub distinct_before: usize,
    pub distinct_after: usize,
    pub mean_delta: f64,
    pub var_delta: f64,
    /// Pairs merged in the two outermost bands.
    pub merges: usize,
    /// Bands whose values were re-solved onto fewer points.
    pub matched_bands: Vec<Band>,
    /// Bands where every attempt failed and the original values were kept.
    pub fallback_bands: Vec<Band>,
}

#[derive(Debug, Clone)]
pub struct Sparsified {
    pub model: PbdModel,
    pub report: SparsifyReport,
}

pub fn sparsify(model: &PbdModel, eps: f64) -> Result<Sparsified> {
    sparsify_with(model, eps, &SparsifyOptions::default())
}

/// Values on one side, stored as the distance `y` from the nearer endpoint
/// (`q` on the low side, `1 − q` on the high side), with multiplicities.
type SideValues = Vec<(f64, usize)>;

pub fn sparsify_with(model: &PbdModel, eps: f64, opts: &SparsifyOptions) -> Result<Sparsified> {
    check_epsilon(eps)?;
    let variance = model.variance();
    let cap = opts.variance_cap.unwrap_or(eps.powi(-6));
    if variance > cap {
        return Err(Error::VarianceCap { variance, cap });
    }
    let scheme = build_scheme(variance, eps)?;
    let a = weight_base(opts.c, eps, scheme.variance());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut zeros = 0usize;
    let mut ones = 0usize;
    let mut low: SideValues = Vec::new();
    let mut high: SideValues = Vec::new();
    for c in model.components() {
        if c.p == 0.0 {
            zeros += c.multiplicity;
        } else if c.p == 1.0 {
            ones += c.multiplicity;
        } else if c.p <= 0.5 {
            low.push((c.p, c.multiplicity));
        } else {
            high.push((1.0 - c.p, c.multiplicity));
        }
    }

    let mut report = SparsifyReport {
        distinct_before: model.distinct(),
        distinct_after: 0,
        mean_delta: 0.0,
        var_delta: 0.0,
        merges: 0,
        matched_bands: Vec::new(),
        fallback_bands: Vec::new(),
    };

    let outer = scheme.levels()[scheme.depth()];
    let (merged, to_end, merges) = merge_outer(&low, outer);
    low = merged;
    zeros += to_end;
    report.merges += merges;
    let (merged, to_end, merges) = merge_outer(&high, outer);
    high = merged;
    ones += to_end;
    report.merges += merges;

    let mut var_budget = eps * eps * eps;
    for (side, values) in [(Side::Low, &mut low), (Side::High, &mut high)] {
        let mut rebuilt: SideValues = Vec::new();
        // outermost first, so a value spilled inward is re-solved with its band
        let mut spilled: SideValues = Vec::new();
        for level in (0..=scheme.depth() + 1).rev() {
            let band = Band { side, level };
            let (lo, hi) = y_range(&scheme, level);
            let mut items: SideValues =
                values.iter().copied().filter(|&(y, _)| level_of(&scheme, y) == level).collect();
            for (z, m) in spilled.drain(..) {
                match items.iter_mut().find(|x| x.0 == z) {
                    Some(x) => x.1 += m,
                    None => items.push((z, m)),
                }
            }
            let k = scheme.distinct_cap(band);
            if items.len() <= k {
                rebuilt.extend(items);
                continue;
            }
            // values may leave through the inner edge `hi` except from the innermost band
            let target = BandTarget::new(&items, (lo, hi), level > 0, k, a, eps);
            let mut solved = resolve_band(&target, &mut var_budget, opts.starts, &mut rng);
            if solved.is_none() && k == 1 && level > 0 {
                if let Some((point, leftover)) = spill_point(&target, &mut var_budget) {
                    solved = Some((vec![point, (hi, 1)], leftover));
                }
            }
            match solved {
                Some((nodes, leftover)) => {
                    let (out, kept): (SideValues, SideValues) = nodes.into_iter().partition(|x| x.0 >= hi);
                    spilled = out;
                    rebuilt.extend(kept);
                    match side {
                        Side::Low => zeros += leftover,
                        Side::High => ones += leftover,
                    }
                    report.matched_bands.push(band);
                }
                None => {
                    rebuilt.extend(items);
                    report.fallback_bands.push(band);
                }
            }
        }
        *values = rebuilt;
    }

    let mut comps = vec![Component::new(0.0, zeros), Component::new(1.0, ones)];
    comps.extend(low.iter().map(|&(y, m)| Component::new(y, m)));
    comps.extend(high.iter().map(|&(y, m)| Component::new(1.0 - y, m)));
    let out = PbdModel::new(comps)?;
    debug_assert_eq!(out.n(), model.n());
    report.distinct_after = out.distinct();
    report.mean_delta = out.mean() - model.mean();
    report.var_delta = out.variance() - variance;
    Ok(Sparsified { model: out, report })
}

/// Band level of a distance-from-endpoint `y ∈ (0, 1/2]`.
fn level_of(scheme: &IntervalScheme, y: f64) -> usize {
    let top = scheme.depth() + 1;
    scheme.levels().iter().position(|&b| y >= b).unwrap_or(top)
}

/// `[lo, hi)` in `y` for a level; replacement values stay strictly below `hi`.
fn y_range(scheme: &IntervalScheme, level: usize) -> (f64, f64) {
    let b = scheme.levels();
    if level == 0 {
        (b[0], 0.5)
    } else if level == b.len() {
        (0.0, b[level - 1])
    } else {
        (b[level], b[level - 1])
    }
}

/// Repeatedly replaces two values `a, b` below `outer` by `0` and `a + b`.
/// Each step keeps `Σ y` and lowers `Σ y(1−y)` by `2ab`. Returns the new
/// values, how many moved to the endpoint, and the number of merges.
fn merge_outer(values: &SideValues, outer: f64) -> (SideValues, usize, usize) {
    let mut inner: SideValues = Vec::new();
    let mut small: Vec<f64> = Vec::new();
    for &(y, m) in values {
        if y < outer {
            small.extend(std::iter::repeat_n(y, m));
        } else {
            inner.push((y, m));
        }
    }
    small.sort_by(f64::total_cmp);
    let mut moved = 0;
    let mut merges = 0;
    let mut acc: Option<f64> = None;
    for y in small {
        match acc {
            None => acc = Some(y),
            Some(a) => {
                let s = a + y;
                let dvar = s * (1.0 - s) - a * (1.0 - a) - y * (1.0 - y);
                assert!((dvar + 2.0 * a * y).abs() <= 1e-15, "merge changed variance by {dvar}");
                assert!(s - a - y == 0.0 || (s - a - y).abs() <= f64::EPSILON * s, "merge moved the mean");
                merges += 1;
                moved += 1;
                if s < outer {
                    acc = Some(s);
                } else {
                    inner.push((s, 1));
                    acc = None;
                }
            }
        }
    }
    if let Some(a) = acc {
        inner.push((a, 1));
    }
    // merged values may coincide with existing ones
    inner.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: SideValues = Vec::new();
    for (y, m) in inner {
        match out.last_mut() {
            Some(last) if last.0 == y => last.1 += m,
            _ => out.push((y, m)),
        }
    }
    (out, moved, merges)
}

/// What a re-solved band has to reproduce.
struct BandTarget {
    items: SideValues,
    lo: f64,
    /// Largest admissible value (just below the band's open end).
    top: f64,
    hi: f64,
    /// Upper limit for values moved by `collapse`: `hi` itself when values
    /// may pass into the next band inward, else `top`.
    edge: f64,
    /// Range mapped onto `[-1, 1]` by the basis: the span of the data.
    span: (f64, f64),
    k: usize,
    count: usize,
    /// `Σ m y^ℓ` for ℓ = 1..=k.
    monomial: Vec<f64>,
    /// Tolerance on `|Δ Σ y^ℓ|` per order.
    tol: Vec<f64>,
}

impl BandTarget {
    fn new(items: &SideValues, (lo, hi): (f64, f64), export: bool, k: usize, a: f64, eps: f64) -> Self {
        let mut monomial = vec![0.0; k];
        for &(y, m) in items {
            let mut p = 1.0;
            for s in monomial.iter_mut() {
                p *= y;
                *s += m as f64 * p;
            }
        }
        let eps3 = eps * eps * eps;
        let tol = (1..=k as i32).map(|l| eps3 / (2.0 * a.powi(l))).collect();
        let min = items.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
        let max = items.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
        let span = if max > min { (min, max) } else { (lo, hi) };
        let top = hi * (1.0 - 1e-12);
        BandTarget {
            items: items.clone(),
            lo,
            top,
            hi,
            edge: if export { hi } else { top },
            span,
            k,
            count: items.iter().map(|x| x.1).sum(),
            monomial,
            tol,
        }
    }

    /// Chebyshev-scaled basis `(y/hi)·T_{ℓ−1}(u)` and its derivative, ℓ = 1..=k.
    fn basis(&self, y: f64) -> (Vec<f64>, Vec<f64>) {
        let width = self.span.1 - self.span.0;
        let u = 2.0 * (y - self.span.0) / width - 1.0;
        let du = 2.0 / width;
        let mut t = vec![0.0; self.k];
        let mut dt = vec![0.0; self.k];
        // T_j and T'_j by the three-term recurrences
        let (mut t0, mut t1) = (1.0, u);
        let (mut d0, mut d1) = (0.0, 1.0);
        for j in 0..self.k {
            let (tj, dj) = if j == 0 { (t0, d0) } else { (t1, d1) };
            t[j] = tj;
            dt[j] = dj;
            if j >= 1 {
                let t2 = 2.0 * u * t1 - t0;
                let d2 = 2.0 * t1 + 2.0 * u * d1 - d0;
                t0 = t1;
                t1 = t2;
                d0 = d1;
                d1 = d2;
            }
        }
        let phi = t.iter().map(|&tj| y / self.hi * tj).collect();
        let dphi = t.iter().zip(&dt).map(|(&tj, &dj)| tj / self.hi + y / self.hi * dj * du).collect();
        (phi, dphi)
    }

    fn basis_target(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.k];
        for &(y, m) in &self.items {
            let (phi, _) = self.basis(y);
            for (acc, v) in s.iter_mut().zip(phi) {
                *acc += m as f64 * v;
            }
        }
        s
    }

    /// Accepts nodes whose monomial power sums match within tolerance.
    /// Values at `hi` belong to the next band and do not count against `k`.
    fn accepts(&self, nodes: &[(f64, usize)]) -> bool {
        let total: usize = nodes.iter().map(|x| x.1).sum();
        let inside = nodes.iter().filter(|x| x.0 < self.hi).count();
        if total > self.count || inside > self.k {
            return false;
        }
        if nodes.iter().any(|&(y, _)| !(y >= self.lo && (y <= self.top || y == self.edge))) {
            return false;
        }
        let mut sums = vec![0.0; self.k];
        for &(y, m) in nodes {
            let mut p = 1.0;
            for s in sums.iter_mut() {
                p *= y;
                *s += m as f64 * p;
            }
        }
        let scale = self.monomial[0].max(1e-300);
        sums.iter().zip(&self.monomial).zip(&self.tol).enumerate().all(|(l, ((s, t), tol))| {
            let err = (s - t).abs();
            // the first two moments carry mean and variance
            let hard = if l < 2 { err <= 1e-12 * scale.max(1.0) } else { true };
            hard && err < *tol
        })
    }
}

/// Finds at most `k` integer-weighted points matching the band's power sums.
/// Returns the points and the count sent to the endpoint.
fn resolve_band(
    target: &BandTarget,
    var_budget: &mut f64,
    starts: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(SideValues, usize)> {
    if target.k == 1 {
        return single_point(target, var_budget);
    }
    let s = target.basis_target();
    if let Some(nodes) = collapse(target) {
        return Some((nodes, 0));
    }
    for round in 0..starts.max(1) {
        // LP vertices (first with unit costs, then perturbed) alternate with
        // equal-count block splits of the sorted values
        let candidates: Vec<(Vec<f64>, Vec<usize>)> = if round % 2 == 0 {
            let costs: Vec<f64> =
                target.items.iter().map(|_| if round == 0 { 1.0 } else { 1.0 + 0.5 * rng.random::<f64>() }).collect();
            match lp_vertex(target, &s, &costs) {
                Some(v) => integer_weights(&v),
                None => Vec::new(),
            }
        } else {
            vec![block_split(target, round / 2)]
        };
        for (start, weights) in candidates {
            if let Some(nodes) = newton_nodes(target, &s, &start, &weights) {
                let placed: usize = nodes.iter().map(|x| x.1).sum();
                return Some((nodes, target.count - placed));
            }
        }
    }
    None
}

/// Merges neighbours closer than `tol`, keeping their first moment.
fn merge_close(groups: &mut SideValues, tol: f64) {
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: SideValues = Vec::with_capacity(groups.len());
    for &(y, m) in groups.iter() {
        match out.last_mut() {
            Some(last) if y == last.0 => last.1 += m,
            Some(last) if y - last.0 <= tol => {
                let w = (last.1 + m) as f64;
                last.0 = (last.0 * last.1 as f64 + y * m as f64) / w;
                last.1 += m;
            }
            _ => out.push((y, m)),
        }
    }
    *groups = out;
}

/// Reduces the band to at most `k` distinct values with the same total count
/// and the same first `k` power sums. Weights only ever merge, so the count is
/// kept for free; each step takes `k + 1` neighbouring groups and moves them
/// along the curve that keeps their own sums fixed until two meet or one is
/// pinned at an edge. Groups pinned at `hi` leave for the next band inward.
fn collapse(target: &BandTarget) -> Option<SideValues> {
    let k = target.k;
    let tol = 1e-12 * (target.top - target.lo);
    let mut groups = target.items.clone();
    merge_close(&mut groups, 0.0);
    let mut budget = 4 * groups.len() + 100;
    let mut splits = 0;
    // the halves of a split group, which the next window must contain
    let mut forced: Option<usize> = None;
    while groups.iter().filter(|x| x.0 < target.hi).count() > k {
        let g = groups.len();
        let at_edge = |y: f64| y <= target.lo + tol || y >= target.edge - tol;
        let mut movable: Vec<usize> = (0..g).filter(|&j| !at_edge(groups[j].0)).collect();
        // with too few free groups an edge contact would only undo a pin
        let allow_pin = movable.len() > k;
        if !allow_pin {
            movable = (0..g).collect();
        }
        // narrowest windows first
        let mut starts: Vec<(f64, usize)> =
            (0..movable.len() - k).map(|i| (groups[movable[i + k]].0 - groups[movable[i]].0, i)).collect();
        starts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(j) = forced.take() {
            starts.retain(|&(_, i)| movable[i] <= j && movable[i + k] > j);
        }
        let mut moved = false;
        for &(_, i) in starts.iter().take(8) {
            budget = budget.checked_sub(1)?;
            let cols = &movable[i..=i + k];
            let window: SideValues = cols.iter().map(|&c| groups[c]).collect();
            let Some(out) = Window::new(&window, target.lo, target.edge).reduce(allow_pin) else {
                continue;
            };

            let mut next: SideValues =
                groups.iter().enumerate().filter(|(j, _)| !cols.contains(j)).map(|(_, &x)| x).collect();
            next.extend(out);
            merge_close(&mut next, tol);
            groups = next;
            moved = true;
            break;
        }
        if !moved {
            // every curve through these groups ends at an edge; splitting a
            // heavy group in two opens new ones
            let mut heavy: Vec<usize> = (0..g).filter(|&j| groups[j].1 >= 2).collect();
            heavy.sort_by_key(|&j| std::cmp::Reverse(groups[j].1));
            if splits >= 2 * k || heavy.is_empty() {
                return None;
            }
            let j = heavy[splits % heavy.len()];
            splits += 1;
            let (y, m) = groups[j];
            groups[j].1 = m / 2;
            groups.insert(j + 1, (y, m - m / 2));
            forced = Some(j);
        }
    }
    target.accepts(&groups).then_some(groups)
}

/// `T_ℓ(u)` and `T_ℓ'(u)` for ℓ = 1..=k.
fn chebyshev(u: f64, k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut t = Vec::with_capacity(k);
    let mut dt = Vec::with_capacity(k);
    let (mut t0, mut t1) = (1.0, u);
    let (mut d0, mut d1) = (0.0, 1.0);
    for _ in 0..k {
        t.push(t1);
        dt.push(d1);
        let t2 = 2.0 * u * t1 - t0;
        let d2 = 2.0 * t1 + 2.0 * u * d1 - d0;
        (t0, t1, d0, d1) = (t1, t2, d1, d2);
    }
    (t, dt)
}

#[derive(Debug, Clone, Copy)]
enum Event {
    /// Group reaches a band edge.
    Edge(usize, f64),
    /// Groups `i` and `i + 1` meet.
    Meet(usize),
}

/// `k + 1` sorted groups in coordinates `u = (y − c)/h` that map their span
/// onto `[−1, 1]`, so the conditioning does not depend on how tight they are.
struct Window {
    k: usize,
    c: f64,
    h: f64,
    lo: f64,
    top: f64,
    /// The edges in band coordinates, returned exactly for pinned groups.
    edges: (f64, f64),
    u0: Vec<f64>,
    w0: Vec<usize>,
    /// `Σ m T_ℓ(u)` for ℓ = 1..=k.
    sums: Vec<f64>,
}

impl Window {
    fn new(groups: &SideValues, lo: f64, top: f64) -> Self {
        let k = groups.len() - 1;
        let (a, b) = (groups[0].0, groups[k].0);
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        let (ulo, utop) = ((lo - c) / h, (top - c) / h);
        let u0: Vec<f64> = groups
            .iter()
            .map(|g| match g.0 {
                y if y == lo => ulo,
                y if y == top => utop,
                y => (y - c) / h,
            })
            .collect();
        let w0: Vec<usize> = groups.iter().map(|g| g.1).collect();
        let mut sums = vec![0.0; k];
        for (&u, &m) in u0.iter().zip(&w0) {
            for (s, t) in sums.iter_mut().zip(chebyshev(u, k).0) {
                *s += m as f64 * t;
            }
        }
        Window { k, c, h, lo: ulo, top: utop, edges: (lo, top), u0, w0, sums }
    }

    fn scale(&self) -> f64 {
        self.w0.iter().sum::<usize>() as f64
    }

    fn system(&self, u: &[f64], w: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::from_iterator(self.k, self.sums.iter().map(|&s| -s));
        let mut jac = DMatrix::zeros(self.k, u.len());
        for (j, (&x, &m)) in u.iter().zip(w).enumerate() {
            let (t, dt) = chebyshev(x, self.k);
            for l in 0..self.k {
                r[l] += m as f64 * t[l];
                jac[(l, j)] = m as f64 * dt[l];
            }
        }
        (r, jac)
    }

    /// Unit null vector of the `k × (k+1)` Jacobian, by signed minors.
    fn tangent(&self, u: &[f64]) -> Option<DVector<f64>> {
        let (_, jac) = self.system(u, &self.w0);
        let n = self.k + 1;
        let mut d = DVector::zeros(n);
        for j in 0..n {
            let minor = jac.clone().remove_column(j);
            let det = minor.lu().determinant();
            d[j] = if j % 2 == 0 { det } else { -det };
        }
        let norm = d.norm();
        (norm.is_finite() && norm > 0.0).then(|| d / norm)
    }

    fn event(&self, u: &[f64], d: &DVector<f64>) -> Option<(f64, Event)> {
        let mut best: Option<(f64, Event)> = None;
        let mut consider = |t: f64, e: Event| {
            if t >= 0.0 && best.is_none_or(|(b, _)| t < b) {
                best = Some((t, e));
            }
        };
        for (j, &x) in u.iter().enumerate() {
            if d[j] > 0.0 {
                consider((self.top - x) / d[j], Event::Edge(j, self.top));
            } else if d[j] < 0.0 {
                consider((self.lo - x) / d[j], Event::Edge(j, self.lo));
            }
        }
        for j in 0..self.k {
            let closing = d[j] - d[j + 1];
            if closing > 0.0 {
                consider((u[j + 1] - u[j]) / closing, Event::Meet(j));
            }
        }
        best
    }

    /// Square Newton on the free positions (`fixed` stays put).
    fn newton(&self, u: &mut [f64], w: &[usize], fixed: Option<usize>) -> bool {
        let tol = 1e-13 * self.scale();
        for _ in 0..30 {
            let (r, jac) = self.system(u, w);
            if r.norm() <= tol {
                return u.iter().all(|&x| x >= self.lo && x <= self.top);
            }
            let free: Vec<usize> = (0..u.len()).filter(|&j| Some(j) != fixed).collect();
            let sq = jac.select_columns(&free);
            let Some(step) = sq.lu().solve(&(-&r)) else {
                return false;
            };
            for (&j, dx) in free.iter().zip(step.iter()) {
                u[j] += dx;
            }
            if u.iter().any(|x| !x.is_finite()) {
                return false;
            }
        }
        false
    }

    /// Lands on an event; returns the new groups in band coordinates.
    fn land(&self, u: &[f64], event: Event) -> Option<SideValues> {
        let mut u = u.to_vec();
        let mut w = self.w0.clone();
        let fixed = match event {
            Event::Meet(j) => {
                let m = (w[j] + w[j + 1]) as f64;
                u[j] = (u[j] * w[j] as f64 + u[j + 1] * w[j + 1] as f64) / m;
                w[j] += w[j + 1];
                u.remove(j + 1);
                w.remove(j + 1);
                None
            }
            Event::Edge(j, edge) => {
                u[j] = edge;
                Some(j)
            }
        };
        if !self.newton(&mut u, &w, fixed) || u.windows(2).any(|p| p[0] > p[1]) {
            return None;
        }
        let to_band = |x: f64| match x {
            _ if x == self.lo => self.edges.0,
            _ if x == self.top => self.edges.1,
            _ => (self.c + self.h * x).clamp(self.edges.0, self.edges.1),
        };
        Some(u.iter().zip(&w).map(|(&x, &m)| (to_band(x), m)).collect())
    }

    /// Follows the constraint curve (predictor along the tangent, corrector
    /// orthogonal to it) until two groups meet or one is pinned at an edge.
    fn reduce(&self, allow_pin: bool) -> Option<SideValues> {
        let tol = 1e-13 * self.scale();
        for sign in [1.0, -1.0] {
            let mut u = self.u0.clone();
            let mut prev: Option<DVector<f64>> = None;
            let mut step = 0.25;
            for _ in 0..200 {
                let Some(mut d) = self.tangent(&u) else {
                    break;
                };
                match &prev {
                    Some(p) if d.dot(p) < 0.0 => d = -d,
                    None => d *= sign,
                    _ => {}
                }
                let Some((t_event, event)) = self.event(&u, &d) else {
                    break;
                };
                if t_event <= 1e-12 {
                    break;
                }
                if t_event <= step {
                    if !allow_pin && matches!(event, Event::Edge(..)) {
                        break;
                    }
                    let at: Vec<f64> = u.iter().zip(d.iter()).map(|(x, v)| x + t_event * v).collect();
                    if let Some(out) = self.land(&at, event) {
                        return Some(out);
                    }
                    step = 0.5 * t_event;
                }
                // predictor and orthogonal corrector
                let mut trial: Vec<f64> = u.iter().zip(d.iter()).map(|(x, v)| x + step * v).collect();
                let mut ok = false;
                for _ in 0..10 {
                    let (r, jac) = self.system(&trial, &self.w0);
                    if r.norm() <= tol {
                        ok = true;
                        break;
                    }
                    let mut aug = jac.insert_row(self.k, 0.0);
                    aug.row_mut(self.k).copy_from(&d.transpose());
                    let rhs = DVector::from_iterator(self.k + 1, r.iter().map(|v| -v).chain([0.0]));
                    let Some(dx) = aug.lu().solve(&rhs) else {
                        break;
                    };
                    trial.iter_mut().zip(dx.iter()).for_each(|(x, v)| *x += v);
                }
                let ordered = trial.windows(2).all(|p| p[0] < p[1]);
                let inside = trial.iter().all(|&x| x >= self.lo && x <= self.top);
                if ok && ordered && inside {
                    u = trial;
                    prev = Some(d);
                    step = (1.5 * step).min(0.25);
                } else {
                    step *= 0.5;
                    if step < 1e-12 {
                        break;
                    }
                }
            }
        }
        None
    }
}

/// One point `y' = S₁/m'` with `m' = ⌊S₁²/S₂⌋`, the rest sent to the
/// endpoint. The first power sum is exact and `Σ y(1−y)` drops by at most `y'²`.
fn single_point(target: &BandTarget, var_budget: &mut f64) -> Option<(SideValues, usize)> {
    let s1 = target.monomial[0];
    let s2: f64 = target.items.iter().map(|&(y, m)| m as f64 * y * y).sum();
    let m = ((s1 * s1 / s2).floor() as usize).clamp(1, target.count);
    let y = s1 / m as f64;
    let drop = s1 * y - s2;
    if !(y >= target.lo && y <= target.top) || drop > *var_budget || drop < -1e-15 {
        return None;
    }
    *var_budget -= drop.max(0.0);
    Some((vec![(y, m)], target.count - m))
}

/// When no count fits a single in-band point, moves one unit to the band's
/// inner edge `hi` and keeps the remainder `S₁ − hi` as the band's point.
/// The first power sum of band and spill together is exact.
fn spill_point(target: &BandTarget, var_budget: &mut f64) -> Option<((f64, usize), usize)> {
    let s1 = target.monomial[0];
    let s2: f64 = target.items.iter().map(|&(y, m)| m as f64 * y * y).sum();
    let y = s1 - target.hi;
    if target.count < 2 || !(y >= target.lo && y <= target.top) {
        return None;
    }
    let drop = target.hi * target.hi + y * y - s2;
    if drop > *var_budget || drop < -1e-15 {
        return None;
    }
    *var_budget -= drop.max(0.0);
    Some(((y, 1), target.count - 2))
}

/// Vertex of `min Σ c_g w_g` subject to matching the basis sums with
/// non-negative weights on the original values.
fn lp_vertex(target: &BandTarget, s: &[f64], costs: &[f64]) -> Option<Vec<(f64, f64)>> {
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = costs.iter().map(|&c| problem.add_var(c, (0.0, f64::INFINITY))).collect();
    let phis: Vec<Vec<f64>> = target.items.iter().map(|&(y, _)| target.basis(y).0).collect();
    for (l, &rhs) in s.iter().enumerate() {
        let row: Vec<_> = vars.iter().zip(&phis).map(|(&v, phi)| (v, phi[l])).collect();
        problem.add_constraint(&row[..], ComparisonOp::Eq, rhs);
    }
    let sol = problem.solve().ok()?;
    let out: Vec<(f64, f64)> =
        target.items.iter().zip(&vars).map(|(&(y, _), &v)| (y, sol[v])).filter(|&(_, w)| w > 1e-9).collect();
    (!out.is_empty()).then_some(out)
}

/// Integer weight patterns near real LP weights.
fn integer_weights(v: &[(f64, f64)]) -> Vec<(Vec<f64>, Vec<usize>)> {
    let start: Vec<f64> = v.iter().map(|x| x.0).collect();
    let rounded: Vec<usize> = v.iter().map(|x| (x.1.round() as usize).max(1)).collect();
    let floored: Vec<usize> = v.iter().map(|x| (x.1.floor() as usize).max(1)).collect();
    let mut out = vec![(start.clone(), rounded.clone())];
    if floored != rounded {
        out.push((start, floored));
    }
    out
}

/// `k` contiguous blocks of the sorted unit values with near-equal counts;
/// `shift` rotates which blocks receive the extra units.
fn block_split(target: &BandTarget, shift: usize) -> (Vec<f64>, Vec<usize>) {
    let k = target.k;
    let n = target.count;
    let mut units: Vec<f64> = target.items.iter().flat_map(|&(y, m)| std::iter::repeat_n(y, m)).collect();
    units.sort_by(f64::total_cmp);
    let base = n / k;
    let extra = n % k;
    let sizes: Vec<usize> = (0..k).map(|i| base + usize::from((i + shift) % k < extra)).collect();
    let mut start = Vec::with_capacity(k);
    let mut at = 0;
    for &sz in &sizes {
        let block = &units[at..at + sz];
        start.push(block.iter().sum::<f64>() / sz.max(1) as f64);
        at += sz;
    }
    (start, sizes)
}

/// Damped Gauss–Newton on the node positions with the weights held fixed.
fn newton_nodes(target: &BandTarget, s: &[f64], start: &[f64], weights: &[usize]) -> Option<SideValues> {
    if start.len() != weights.len() || weights.iter().any(|&w| w == 0) {
        return None;
    }
    if weights.iter().sum::<usize>() > target.count {
        return None;
    }
    let k = target.k;
    let p = start.len();
    let mut y: Vec<f64> = start.iter().map(|&v| v.clamp(target.lo, target.top)).collect();
    let resid = |y: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::from_iterator(k, s.iter().map(|&v| -v));
        let mut jac = DMatrix::zeros(k, p);
        for (j, (&yj, &wj)) in y.iter().zip(weights).enumerate() {
            let (phi, dphi) = target.basis(yj);
            for l in 0..k {
                r[l] += wj as f64 * phi[l];
                jac[(l, j)] = wj as f64 * dphi[l];
            }
        }
        (r, jac)
    };
    let (mut r, mut jac) = resid(&y);
    let mut norm = r.norm();
    for _ in 0..200 {
        let step = jac.clone().svd(true, true).solve(&(-&r), 1e-13).ok()?;
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<f64> =
                y.iter().zip(step.iter()).map(|(&v, &d)| (v + alpha * d).clamp(target.lo, target.top)).collect();
            let (r2, j2) = resid(&trial);
            let n2 = r2.norm();
            if n2 < norm {
                y = trial;
                r = r2;
                jac = j2;
                improved = norm - n2 > 1e-3 * norm;
                norm = n2;
                break;
            }
            alpha *= 0.5;
        }
        let mut nodes: SideValues = y.iter().copied().zip(weights.iter().copied()).collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: SideValues = Vec::new();
        for (v, w) in nodes {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += w,
                _ => merged.push((v, w)),
            }
        }
        if target.accepts(&merged) {
            return Some(merged);
        }
        if !improved && norm < 1e-300 {
            break;
        }
        if !improved && alpha < 1e-9 {
            break;
        }
    }
    None
}
