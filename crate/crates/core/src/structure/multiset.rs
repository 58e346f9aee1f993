//! Multiplicity multisets: candidate assignments of parameter counts to the
//! bands of an [`IntervalScheme`], and the lazy stream that enumerates them.

use super::scheme::{Band, IntervalScheme, Placement};
use crate::model::PbdModel;
use serde::Serialize;
use std::cmp::Reverse;
use std::fmt;

/// Where a triple's values live: the point 0, the point 1, or a band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Zero,
    One,
    Band(Band),
}

impl Slot {
    pub fn is_free(&self) -> bool {
        matches!(self, Slot::Band(_))
    }
}

/// `(m, a, b)`: `m` parameters, all in the box of `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Triple {
    pub multiplicity: usize,
    pub slot: Slot,
}

impl Triple {
    pub fn new(multiplicity: usize, slot: Slot) -> Self {
        Triple { multiplicity, slot }
    }

    /// The closed box `[a, b]`.
    pub fn bounds(&self, scheme: &IntervalScheme) -> (f64, f64) {
        match self.slot {
            Slot::Zero => (0.0, 0.0),
            Slot::One => (1.0, 1.0),
            Slot::Band(b) => scheme.bounds(b),
        }
    }
}

/// A multiset of triples in canonical order: by slot, then by decreasing
/// multiplicity. Zero-multiplicity triples are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct MultiplicityMultiset {
    triples: Vec<Triple>,
}

impl MultiplicityMultiset {
    pub fn new(mut triples: Vec<Triple>) -> Self {
        triples.retain(|t| t.multiplicity > 0);
        triples.sort_by_key(|t| (t.slot, Reverse(t.multiplicity)));
        MultiplicityMultiset { triples }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn total(&self) -> usize {
        self.triples.iter().map(|t| t.multiplicity).sum()
    }

    pub fn ones(&self) -> usize {
        self.count_in(Slot::One)
    }

    pub fn zeros(&self) -> usize {
        self.count_in(Slot::Zero)
    }

    fn count_in(&self, slot: Slot) -> usize {
        self.triples.iter().filter(|t| t.slot == slot).map(|t| t.multiplicity).sum()
    }

    /// Triples with a non-degenerate box.
    pub fn free(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter().filter(|t| t.slot.is_free())
    }

    pub fn free_count(&self) -> usize {
        self.free().count()
    }

    /// Canonical text encoding, equal for equal multisets.
    pub fn encode(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MultiplicityMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .triples
            .iter()
            .map(|t| match t.slot {
                Slot::Zero => format!("{}@0", t.multiplicity),
                Slot::One => format!("{}@1", t.multiplicity),
                Slot::Band(b) => format!(
                    "{}@{}{}",
                    t.multiplicity,
                    if b.side == super::scheme::Side::Low { 'I' } else { 'J' },
                    b.level
                ),
            })
            .collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// The multiset of a concrete model: one triple per distinct value.
pub fn classify_model(model: &PbdModel, scheme: &IntervalScheme) -> MultiplicityMultiset {
    let mut triples = Vec::new();
    let mut zeros = 0;
    let mut ones = 0;
    for c in model.components() {
        match scheme.classify(c.p) {
            Placement::Zero => zeros += c.multiplicity,
            Placement::One => ones += c.multiplicity,
            Placement::Band(b) => triples.push(Triple::new(c.multiplicity, Slot::Band(b))),
        }
    }
    triples.push(Triple::new(zeros, Slot::Zero));
    triples.push(Triple::new(ones, Slot::One));
    MultiplicityMultiset::new(triples)
}

/// `[⌊μ̃⌋ − W, ⌊μ̃⌋ + W] ∩ [0, n]` with `W = min(n, ⌈1/ε³⌉)`.
pub fn ones_window(scheme: &IntervalScheme, n: usize, mean_estimate: f64) -> (usize, usize) {
    let eps = scheme.epsilon();
    let w = ((1.0 / (eps * eps * eps)).ceil() as usize).min(n);
    let center = center_of(n, mean_estimate);
    (center.saturating_sub(w), (center + w).min(n))
}

fn center_of(n: usize, mean_estimate: f64) -> usize {
    if mean_estimate.is_finite() {
        mean_estimate.floor().clamp(0.0, n as f64) as usize
    } else {
        0
    }
}

/// Ones counts in mean-centred spiral order: `c, c+1, c−1, c+2, …`.
pub fn ones_spiral(scheme: &IntervalScheme, n: usize, mean_estimate: f64) -> Vec<usize> {
    let (lo, hi) = ones_window(scheme, n, mean_estimate);
    let c = center_of(n, mean_estimate);
    let mut out = Vec::with_capacity(hi - lo + 1);
    out.push(c);
    let mut d = 1;
    while out.len() < hi - lo + 1 {
        if c + d <= hi {
            out.push(c + d);
        }
        if c >= lo + d {
            out.push(c - d);
        }
        d += 1;
    }
    out
}

/// Why a multiset is not admissible for a scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Inadmissible(pub String);

/// Checks every structural constraint the stream enforces.
pub fn check_admissible(
    ms: &MultiplicityMultiset,
    scheme: &IntervalScheme,
    n: usize,
    mean_estimate: f64,
) -> Result<(), Inadmissible> {
    let bad = |s: String| Err(Inadmissible(s));
    if ms.total() != n {
        return bad(format!("multiplicities sum to {} instead of {n}", ms.total()));
    }
    let zero_triples = ms.triples.iter().filter(|t| t.slot == Slot::Zero).count();
    let one_triples = ms.triples.iter().filter(|t| t.slot == Slot::One).count();
    if zero_triples > 1 || one_triples > 1 {
        return bad("zeros and ones must each form a single triple".into());
    }
    let (lo, hi) = ones_window(scheme, n, mean_estimate);
    if ms.ones() < lo || ms.ones() > hi {
        return bad(format!("{} ones outside window [{lo}, {hi}]", ms.ones()));
    }
    if ms.free_count() > scheme.free_triple_cap() {
        return bad(format!("{} free triples exceed cap {}", ms.free_count(), scheme.free_triple_cap()));
    }
    for band in scheme.bands() {
        let in_band: Vec<usize> = ms.free().filter(|t| t.slot == Slot::Band(band)).map(|t| t.multiplicity).collect();
        if in_band.len() > scheme.distinct_cap(band) {
            return bad(format!("{} triples in {band:?} exceed cap {}", in_band.len(), scheme.distinct_cap(band)));
        }
        let total: usize = in_band.iter().sum();
        if total > scheme.count_cap(band) {
            return bad(format!("count {total} in {band:?} exceeds cap {}", scheme.count_cap(band)));
        }
    }
    Ok(())
}

/// View of a partially built multiset handed to a [`StreamFilter`].
#[derive(Debug, Clone, Copy)]
pub struct Prefix<'a> {
    pub ones: usize,
    /// Bands of all free slots in the current pattern.
    pub bands: &'a [Band],
    /// Multiplicities fixed so far, one per leading slot of `bands`.
    pub assigned: &'a [usize],
    /// Mass still available to the pending slots.
    pub spare: usize,
}

impl Prefix<'_> {
    pub fn pending(&self) -> &[Band] {
        &self.bands[self.assigned.len()..]
    }
}

/// Pruning hook for the stream. Implementations must only reject prefixes
/// that cannot be completed into an acceptable multiset.
pub trait StreamFilter: Send + Sync {
    /// Whether some completion of the prefix may pass.
    fn admits(&self, prefix: &Prefix<'_>) -> bool {
        let _ = prefix;
        true
    }

    /// Whether some pattern whose leading per-band triple counts are `counts`
    /// (aligned with `bands`, the scheme's band order) may pass.
    fn admits_counts(&self, ones: usize, bands: &[Band], counts: &[usize]) -> bool {
        let _ = (ones, bands, counts);
        true
    }

    /// Narrows the multiplicity range `[lo, hi]` of the next slot, whose band
    /// is `prefix.pending()[0]`. `None` means no value can pass.
    fn slot_range(&self, prefix: &Prefix<'_>, lo: usize, hi: usize) -> Option<(usize, usize)> {
        let _ = prefix;
        Some((lo, hi))
    }
}

struct NoFilter;
impl StreamFilter for NoFilter {}

/// Lazy stream of admissible multisets, ordered by free-triple count, then
/// ones count (spiral around the mean estimate), then band pattern, then
/// multiplicities.
pub struct MultisetStream<'a> {
    scheme: IntervalScheme,
    n: usize,
    bands: Vec<Band>,
    ones_order: Vec<usize>,
    filter: Box<dyn StreamFilter + 'a>,
    k_cap: usize,
    k: usize,
    t_idx: usize,
    pattern: Option<Vec<usize>>,
    slots: Vec<Band>,
    ms: Vec<usize>,
    his: Vec<usize>,
    dfs_started: bool,
    exhausted: bool,
    yielded: u64,
}

/// Every admissible multiset for `(scheme, n, μ̃)`, in stream order.
pub fn enumerate_multisets(scheme: &IntervalScheme, n: usize, mean_estimate: f64) -> MultisetStream<'static> {
    MultisetStream::new(scheme, n, mean_estimate, Box::new(NoFilter))
}

impl<'a> MultisetStream<'a> {
    pub fn new(scheme: &IntervalScheme, n: usize, mean_estimate: f64, filter: Box<dyn StreamFilter + 'a>) -> Self {
        let bands = scheme.bands();
        let max_distinct: usize = bands.iter().map(|&b| scheme.distinct_cap(b)).sum();
        let k_cap = scheme.free_triple_cap().min(max_distinct).min(n);
        MultisetStream {
            scheme: scheme.clone(),
            n,
            ones_order: ones_spiral(scheme, n, mean_estimate),
            bands,
            filter,
            k_cap,
            k: 0,
            t_idx: 0,
            pattern: None,
            slots: Vec::new(),
            ms: Vec::new(),
            his: Vec::new(),
            dfs_started: false,
            exhausted: false,
            yielded: 0,
        }
    }

    /// Replaces the pruning hook.
    pub fn with_filter(mut self, filter: Box<dyn StreamFilter + 'a>) -> Self {
        self.filter = filter;
        self
    }

    /// Number of free triples in the multisets currently being produced.
    pub fn current_free_count(&self) -> usize {
        self.k
    }

    pub fn yielded(&self) -> u64 {
        self.yielded
    }

    fn caps(&self) -> Vec<usize> {
        self.bands.iter().map(|&b| self.scheme.distinct_cap(b)).collect()
    }

    fn t(&self) -> usize {
        self.ones_order[self.t_idx]
    }

    /// Advances to the next (k, t, pattern) combination; false when done.
    fn next_pattern(&mut self) -> bool {
        let caps = self.caps();
        loop {
            let t = self.t();
            let filter = &self.filter;
            let bands = &self.bands;
            let next = next_composition(&caps, self.k, self.pattern.as_deref(), &|c| filter.admits_counts(t, bands, c));
            match next {
                None => {
                    self.pattern = None;
                    if !self.advance_t() {
                        return false;
                    }
                    continue;
                }
                Some(p) => {
                    self.pattern = Some(p);
                    if !self.t_admissible() {
                        continue;
                    }
                }
            }
            let p = self.pattern.as_ref().unwrap();
            let need = p.iter().sum::<usize>();
            if self.t() + need > self.n {
                continue;
            }
            let mut band_mass_ok = true;
            for (i, &c) in p.iter().enumerate() {
                if c > self.scheme.count_cap(self.bands[i]) {
                    band_mass_ok = false;
                }
            }
            if !band_mass_ok {
                continue;
            }
            self.slots = p.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(self.bands[i], c)).collect();
            self.ms.clear();
            self.his.clear();
            self.dfs_started = false;
            return true;
        }
    }

    /// Whether the current pattern can lead anywhere under the filter.
    fn t_admissible(&self) -> bool {
        let t = self.t();
        let pattern = self.pattern.as_ref().unwrap();
        let slots: Vec<Band> =
            pattern.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(self.bands[i], c)).collect();
        self.filter.admits(&Prefix { ones: t, bands: &slots, assigned: &[], spare: self.n - t })
    }

    fn advance_t(&mut self) -> bool {
        self.t_idx += 1;
        if self.t_idx < self.ones_order.len() {
            return true;
        }
        self.t_idx = 0;
        self.k += 1;
        self.k <= self.k_cap
    }

    fn spare(&self) -> usize {
        self.n - self.t() - self.ms.iter().sum::<usize>()
    }

    /// Pushes slot `j = ms.len()` with its range; false if the range is empty.
    fn open_slot(&mut self) -> bool {
        let j = self.ms.len();
        let band = self.slots[j];
        let k = self.slots.len();
        let later_same = self.slots[j + 1..].iter().filter(|&&b| b == band).count();
        let used_in_band: usize = (0..j).filter(|&i| self.slots[i] == band).map(|i| self.ms[i]).sum();
        let mut hi = self.spare().saturating_sub(k - j - 1);
        let band_left = self.scheme.count_cap(band).saturating_sub(used_in_band + later_same);
        hi = hi.min(band_left);
        if j > 0 && self.slots[j - 1] == band {
            hi = hi.min(self.ms[j - 1]);
        }
        let lo = 1;
        if hi < lo {
            return false;
        }
        let prefix = Prefix { ones: self.t(), bands: &self.slots, assigned: &self.ms, spare: self.spare() };
        let Some((lo, hi)) = self.filter.slot_range(&prefix, lo, hi) else {
            return false;
        };
        if hi < lo {
            return false;
        }
        self.ms.push(lo - 1);
        self.his.push(hi);
        true
    }

    /// Increments the top slot to its next admissible value.
    fn bump_top(&mut self) -> bool {
        let j = self.ms.len() - 1;
        loop {
            self.ms[j] += 1;
            if self.ms[j] > self.his[j] {
                self.ms.pop();
                self.his.pop();
                return false;
            }
            let t = self.t();
            let spare = self.n - t - self.ms.iter().sum::<usize>();
            let prefix = Prefix { ones: t, bands: &self.slots, assigned: &self.ms, spare };
            if self.filter.admits(&prefix) {
                return true;
            }
        }
    }

    /// Moves to the next complete assignment of the current pattern.
    fn next_leaf(&mut self) -> bool {
        let k = self.slots.len();
        if !self.dfs_started {
            self.dfs_started = true;
            if k == 0 {
                let prefix = Prefix { ones: self.t(), bands: &[], assigned: &[], spare: self.spare() };
                return self.filter.admits(&prefix);
            }
            if !self.open_slot() {
                return false;
            }
        } else if k == 0 {
            return false;
        }
        loop {
            if self.ms.is_empty() {
                return false;
            }
            if self.bump_top() {
                if self.ms.len() == k {
                    return true;
                }
                if !self.open_slot() {
                    continue;
                }
            }
        }
    }

    fn current(&self) -> MultiplicityMultiset {
        let t = self.t();
        let used: usize = self.ms.iter().sum();
        let mut triples: Vec<Triple> =
            self.slots.iter().zip(&self.ms).map(|(&b, &m)| Triple::new(m, Slot::Band(b))).collect();
        triples.push(Triple::new(t, Slot::One));
        triples.push(Triple::new(self.n - t - used, Slot::Zero));
        MultiplicityMultiset::new(triples)
    }
}

impl Iterator for MultisetStream<'_> {
    type Item = MultiplicityMultiset;

    fn next(&mut self) -> Option<MultiplicityMultiset> {
        if self.exhausted {
            return None;
        }
        loop {
            if self.pattern.is_some() && self.next_leaf() {
                self.yielded += 1;
                return Some(self.current());
            }
            if !self.next_pattern() {
                self.exhausted = true;
                return None;
            }
        }
    }
}

/// Lexicographically smallest vector with `0 ≤ c_i ≤ caps_i` and `Σ c = k`
/// that lies strictly after `after` (or the smallest, for `None`) and whose
/// every prefix passes `ok`.
fn next_composition(
    caps: &[usize],
    k: usize,
    after: Option<&[usize]>,
    ok: &dyn Fn(&[usize]) -> bool,
) -> Option<Vec<usize>> {
    let mut suffix_caps = vec![0; caps.len() + 1];
    for i in (0..caps.len()).rev() {
        suffix_caps[i] = suffix_caps[i + 1] + caps[i];
    }
    let mut c = Vec::with_capacity(caps.len());
    search(caps, &suffix_caps, k, after, ok, &mut c, after.is_some()).then_some(c)
}

fn search(
    caps: &[usize],
    suffix_caps: &[usize],
    left: usize,
    after: Option<&[usize]>,
    ok: &dyn Fn(&[usize]) -> bool,
    c: &mut Vec<usize>,
    tight: bool,
) -> bool {
    let i = c.len();
    if i == caps.len() {
        return left == 0 && !tight;
    }
    let lo = left.saturating_sub(suffix_caps[i + 1]);
    let hi = caps[i].min(left);
    let start = match (tight, after) {
        (true, Some(a)) => lo.max(a[i]),
        _ => lo,
    };
    for v in start..=hi {
        c.push(v);
        let still_tight = tight && after.is_some_and(|a| a[i] == v);
        if ok(c) && search(caps, suffix_caps, left - v, after, ok, c, still_tight) {
            return true;
        }
        c.pop();
    }
    false
}

/// Size of the unfiltered stream, counted by dynamic programming over the
/// per-band partition counts rather than by enumeration.
pub fn stream_size(scheme: &IntervalScheme, n: usize, mean_estimate: f64) -> f64 {
    let bands = scheme.bands();
    let max_distinct: usize = bands.iter().map(|&b| scheme.distinct_cap(b)).sum();
    let k_cap = scheme.free_triple_cap().min(max_distinct).min(n);
    // h[s][j]: ways to reach free mass s with j free triples
    let mut h = vec![vec![0.0f64; k_cap + 1]; n + 1];
    h[0][0] = 1.0;
    for &band in &bands {
        let dcap = scheme.distinct_cap(band).min(k_cap);
        let ccap = scheme.count_cap(band).min(n);
        let g = partitions_table(ccap, dcap);
        let mut next = vec![vec![0.0f64; k_cap + 1]; n + 1];
        for s in 0..=n {
            for j in 0..=k_cap {
                let base = h[s][j];
                if base == 0.0 {
                    continue;
                }
                for (s2, row) in g.iter().enumerate() {
                    if s + s2 > n {
                        break;
                    }
                    for (j2, &ways) in row.iter().enumerate() {
                        if ways != 0.0 && j + j2 <= k_cap {
                            next[s + s2][j + j2] += base * ways;
                        }
                    }
                }
            }
        }
        h = next;
    }
    let by_mass: Vec<f64> = h.iter().map(|row| row.iter().sum()).collect();
    let mut prefix = vec![0.0; n + 2];
    for s in 0..=n {
        prefix[s + 1] = prefix[s] + by_mass[s];
    }
    let (lo, hi) = ones_window(scheme, n, mean_estimate);
    (lo..=hi).map(|t| prefix[n - t + 1]).sum()
}

/// `g[s][j]`: partitions of `s` into exactly `j` positive parts, `s ≤ max_sum`, `j ≤ max_parts`.
fn partitions_table(max_sum: usize, max_parts: usize) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0f64; max_parts + 1]; max_sum + 1];
    p[0][0] = 1.0;
    for s in 1..=max_sum {
        for j in 1..=max_parts.min(s) {
            p[s][j] = p[s - 1][j - 1] + if s >= j { p[s - j][j] } else { 0.0 };
        }
    }
    p
}
