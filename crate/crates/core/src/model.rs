//! Exact PBD representation: canonical models, dense pmfs, sampling and total
//! variation distance.

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, Dd};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

/// Largest `n` for which sampling goes through the inverse CDF of the exact pmf.
pub const INVERSE_CDF_MAX_N: usize = 10_000;

/// One distinct Bernoulli mean together with the number of summands sharing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub p: f64,
    pub multiplicity: usize,
}

impl Component {
    pub fn new(p: f64, multiplicity: usize) -> Self {
        Component { p, multiplicity }
    }
}

/// A Poisson binomial distribution stored as strictly increasing distinct
/// parameters with positive multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PbdModel {
    n: usize,
    components: Vec<Component>,
}

#[derive(Deserialize)]
struct RawModel {
    n: usize,
    components: Vec<Component>,
}

impl<'de> Deserialize<'de> for PbdModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawModel::deserialize(d)?;
        PbdModel::from_json_parts(raw.n, raw.components).map_err(serde::de::Error::custom)
    }
}

impl PbdModel {
    /// Builds a model from components in any order; equal values merge.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let mut comps: Vec<Component> = Vec::with_capacity(components.len());
        for (i, c) in components.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.p) {
                return Err(Error::ParameterOutOfRange { index: i, value: c.p });
            }
        }
        let mut sorted: Vec<Component> = components.into_iter().filter(|c| c.multiplicity > 0).collect();
        sorted.sort_by(|a, b| a.p.total_cmp(&b.p));
        for c in sorted {
            // -0.0 and 0.0 compare equal here and merge
            match comps.last_mut() {
                Some(last) if last.p == c.p => last.multiplicity += c.multiplicity,
                _ => comps.push(Component::new(if c.p == 0.0 { 0.0 } else { c.p }, c.multiplicity)),
            }
        }
        let n: usize = comps.iter().map(|c| c.multiplicity).sum();
        if n == 0 {
            return Err(Error::EmptyModel);
        }
        Ok(PbdModel { n, components: comps })
    }

    /// Strict constructor for the model JSON format: components must already be
    /// sorted strictly ascending and their multiplicities must sum to `n`.
    pub fn from_json_parts(n: usize, components: Vec<Component>) -> Result<Self> {
        for w in components.windows(2) {
            if !(w[0].p < w[1].p) {
                return Err(Error::InvalidModel(format!(
                    "components must be strictly ascending by p ({} then {})",
                    w[0].p, w[1].p
                )));
            }
        }
        if components.iter().any(|c| c.multiplicity == 0) {
            return Err(Error::InvalidModel("multiplicities must be positive".into()));
        }
        let model = PbdModel::new(components)?;
        if model.n != n {
            return Err(Error::InvalidModel(format!("multiplicities sum to {} but n = {}", model.n, n)));
        }
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn distinct(&self) -> usize {
        self.components.len()
    }

    /// Distinct parameters other than 0 and 1.
    pub fn distinct_interior(&self) -> usize {
        self.components.iter().filter(|c| c.p > 0.0 && c.p < 1.0).count()
    }

    /// The sorted length-`n` parameter vector.
    pub fn expand(&self) -> Vec<f64> {
        self.components.iter().flat_map(|c| std::iter::repeat_n(c.p, c.multiplicity)).collect()
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.components.iter().map(|c| c.multiplicity as f64 * c.p))
    }

    pub fn variance(&self) -> f64 {
        compensated_sum(self.components.iter().map(|c| c.multiplicity as f64 * c.p * (1.0 - c.p)))
    }

    pub fn pmf(&self) -> Pmf {
        pmf_exact(self)
    }

    pub fn sample(&self, count: usize, seed: u64) -> SampleSet {
        sample(self, count, seed)
    }
}

/// Sorts and merges a raw parameter vector into a model.
pub fn canonicalize(params: &[f64]) -> Result<PbdModel> {
    if params.is_empty() {
        return Err(Error::EmptyModel);
    }
    PbdModel::new(params.iter().map(|&p| Component::new(p, 1)).collect())
}

/// Probability mass function on the integers `offset .. offset + probs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    offset: i64,
    probs: Vec<f64>,
}

impl Pmf {
    /// Validated constructor: entries non-negative and summing to 1 within 1e-9.
    pub fn new(offset: i64, probs: Vec<f64>) -> Result<Self> {
        let pmf = Pmf { offset, probs };
        if pmf.probs.is_empty() {
            return Err(Error::InvalidArgument("pmf needs at least one entry".into()));
        }
        if pmf.probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("pmf entries must be finite and non-negative".into()));
        }
        let total = pmf.total();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("pmf sums to {total}, not 1")));
        }
        Ok(pmf)
    }

    /// Unvalidated constructor for intermediate signed or unnormalized vectors
    /// such as a raw inverse DFT.
    pub fn from_raw(offset: i64, probs: Vec<f64>) -> Self {
        Pmf { offset, probs }
    }

    pub fn point_mass(at: i64) -> Self {
        Pmf { offset: at, probs: vec![1.0] }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Mass at integer `k` (zero outside the stored window).
    pub fn get(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 || i as usize >= self.probs.len() {
            0.0
        } else {
            self.probs[i as usize]
        }
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.probs.iter().enumerate().map(|(i, &p)| p * (self.offset + i as i64) as f64))
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        compensated_sum(self.probs.iter().enumerate().map(|(i, &p)| {
            let d = (self.offset + i as i64) as f64 - mu;
            p * d * d
        }))
    }

    /// Clamps negative entries to zero and rescales to total mass 1.
    pub fn clamp_normalized(mut self) -> Self {
        for p in &mut self.probs {
            if !(*p > 0.0) {
                *p = 0.0;
            }
        }
        let total = self.total();
        if total > 0.0 {
            for p in &mut self.probs {
                *p /= total;
            }
        }
        self
    }
}

/// Exact pmf over `0..=n` by folding one Bernoulli at a time. Each entry is
/// carried in double-double precision so rounding does not accumulate.
pub fn pmf_exact(model: &PbdModel) -> Pmf {
    let n = model.n();
    let mut cur: Vec<Dd> = Vec::with_capacity(n + 1);
    cur.push(Dd::ONE);
    let mut shift = 0usize;
    for c in model.components() {
        if c.p == 0.0 {
            continue;
        }
        if c.p == 1.0 {
            shift += c.multiplicity;
            continue;
        }
        let p = Dd::from_f64(c.p);
        let q = Dd::one_minus(c.p);
        for _ in 0..c.multiplicity {
            cur.push(Dd::ZERO);
            for j in (1..cur.len()).rev() {
                cur[j] = cur[j].mul(q).add(cur[j - 1].mul(p));
            }
            cur[0] = cur[0].mul(q);
        }
    }
    let mut probs = vec![0.0; n + 1];
    for (j, v) in cur.iter().enumerate() {
        probs[j + shift] = v.to_f64().max(0.0);
    }
    Pmf { offset: 0, probs }
}

/// Total variation distance `½‖a − b‖₁`, aligning the two supports.
pub fn tv_distance(a: &Pmf, b: &Pmf) -> f64 {
    let lo = a.offset.min(b.offset);
    let hi = (a.offset + a.len() as i64).max(b.offset + b.len() as i64);
    let l1 = compensated_sum((lo..hi).map(|k| (a.get(k) - b.get(k)).abs()));
    (0.5 * l1).clamp(0.0, 1.0)
}

/// A multiset of observed sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    values: Vec<u64>,
    n_hint: Option<usize>,
}

impl SampleSet {
    pub fn new(values: Vec<u64>, n_hint: Option<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        if let Some(n) = n_hint {
            if let Some(&v) = values.iter().find(|&&v| v > n as u64) {
                return Err(Error::SampleOutOfRange { value: v, n });
            }
        }
        Ok(SampleSet { values, n_hint })
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn n_hint(&self) -> Option<usize> {
        self.n_hint
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The first `k` samples (all of them when fewer exist).
    pub fn prefix(&self, k: usize) -> SampleSet {
        SampleSet { values: self.values[..k.clamp(1, self.values.len())].to_vec(), n_hint: self.n_hint }
    }

    /// Empirical pmf on `0..=max` (or `0..=n_hint`).
    pub fn empirical_pmf(&self) -> Pmf {
        let top = self.n_hint.unwrap_or(0).max(*self.values.iter().max().unwrap_or(&0) as usize);
        let mut counts = vec![0u64; top + 1];
        for &v in &self.values {
            counts[v as usize] += 1;
        }
        let inv = 1.0 / self.values.len() as f64;
        Pmf::from_raw(0, counts.into_iter().map(|c| c as f64 * inv).collect())
    }
}

/// I.i.d. draws from the model. Models with `n ≤ 10⁴` are sampled by inverse
/// CDF over the exact pmf; larger ones by summing one binomial draw per
/// distinct parameter, which has the same law as summing its Bernoullis.
pub fn sample(model: &PbdModel, count: usize, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = if model.n() <= INVERSE_CDF_MAX_N {
        let pmf = pmf_exact(model);
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = Dd::ZERO;
        for &p in pmf.probs() {
            acc = acc.add(Dd::from_f64(p));
            cdf.push(acc.to_f64());
        }
        let last = pmf.probs().iter().rposition(|&p| p > 0.0).unwrap_or(0);
        let total = cdf[last];
        (0..count)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * total;
                cdf.partition_point(|&c| c <= u).min(last) as u64
            })
            .collect()
    } else {
        let blocks: Vec<(u64, Option<Binomial>)> = model
            .components()
            .iter()
            .map(|c| {
                let m = c.multiplicity as u64;
                if c.p == 0.0 || c.p == 1.0 {
                    (if c.p == 1.0 { m } else { 0 }, None)
                } else {
                    (0, Some(Binomial::new(m, c.p).expect("valid binomial")))
                }
            })
            .collect();
        (0..count)
            .map(|_| blocks.iter().map(|(fixed, b)| fixed + b.as_ref().map_or(0, |b| b.sample(&mut rng))).sum())
            .collect()
    };
    SampleSet { values, n_hint: Some(model.n()) }
}
