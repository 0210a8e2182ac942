//! Lazily sampled configurations `x : F₂ → K×K` (or `K`).
//!
//! Every value is a pure function of `(seed, key tag, site)`: a SipHash-1-3
//! keyed by the seed is run over the canonical syllable encoding of the site
//! and the 64-bit output is pushed through the inverse CDF of the base law.
//! Query order therefore never matters, and scans of arbitrary length along
//! a coset are reproducible.
//!
//! Under the pair measure the first coordinate is keyed by the right
//! `<b>`-coset of the site, so `x₁(g) = x₁(gb)` holds structurally.

use std::hash::Hasher;

use serde::{Deserialize, Serialize};
use siphasher::sip::SipHasher13;

use crate::error::{Error, Result};
use crate::free_group::{coset_rep_b, Syllable, Word, A};

/// Alphabet values are `1..=size`; `0` is reserved for the extra generator.
pub type Symbol = u32;
pub type Pair = (Symbol, Symbol);

/// The element playing the role of `1 ∈ K`.
pub const DISTINGUISHED: Symbol = 1;

const SIP_KEY1: u64 = 0x6f72_6269_745f_6571;
const TAG_COSET: &[u8] = b"coset";
const TAG_SITE: &[u8] = b"site";
const TAG_SITE2: &[u8] = b"site2";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    /// `κ^{F₂/<b>} × κ^{F₂}` on `(K×K)^{F₂}`.
    Pair,
    /// `κ^{F₂}` on `K^{F₂}`.
    Plain,
}

/// Product measure specification: `{"kind": "pair"|"plain", "law": [p₁,…,p_k]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub kind: MeasureKind,
    pub law: Vec<f64>,
}

impl MeasureSpec {
    pub fn new(kind: MeasureKind, law: Vec<f64>) -> Result<Self> {
        let spec = MeasureSpec { kind, law };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(kind: MeasureKind, size: u32) -> Result<Self> {
        MeasureSpec::new(kind, vec![1.0 / size as f64; size as usize])
    }

    pub fn validate(&self) -> Result<()> {
        validate_law(&self.law)
    }

    pub fn alphabet_size(&self) -> u32 {
        self.law.len() as u32
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.law.len() as f64;
        self.law.iter().all(|p| (p - u).abs() <= 1e-12)
    }
}

/// Checks a base law: at least two symbols, nonnegative, sums to one, and
/// not concentrated on a single point.
pub fn validate_law(law: &[f64]) -> Result<()> {
    if law.len() < 2 {
        return Err(Error::Usage("alphabet must have at least two symbols".into()));
    }
    if law.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Usage("law entries must be finite and nonnegative".into()));
    }
    let total: f64 = law.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Usage(format!("law sums to {total}, not 1")));
    }
    if law.iter().filter(|p| **p > 0.0).count() < 2 {
        return Err(Error::Usage("law is concentrated on a single point".into()));
    }
    Ok(())
}

fn cdf_of(law: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = law
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

fn keyed(seed: u64, tag: &[u8]) -> SipHasher13 {
    let mut h = SipHasher13::new_with_keys(seed, SIP_KEY1);
    h.write(&(tag.len() as u64).to_le_bytes());
    h.write(tag);
    h
}

fn absorb(h: &mut SipHasher13, s: Syllable) {
    h.write(&s.gen.to_le_bytes());
    h.write(&s.exp.to_le_bytes());
}

fn absorb_word(h: &mut SipHasher13, g: &Word) {
    for s in g.syllables() {
        absorb(h, *s);
    }
}

/// Maps a uniform 64-bit value through an inverse CDF (53-bit resolution).
fn symbol_from_bits(bits: u64, cdf: &[f64]) -> Symbol {
    let u = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let idx = cdf.iter().position(|c| u < *c).unwrap_or(cdf.len() - 1);
    idx as Symbol + 1
}

/// Keyed-hash draw of one alphabet value for `(seed, tag, g)` under `law`.
pub fn derive_value(seed: u64, tag: &[u8], g: &Word, law: &[f64]) -> Symbol {
    let mut h = keyed(seed, tag);
    absorb_word(&mut h, g);
    symbol_from_bits(h.finish(), &cdf_of(law))
}

/// Deterministic 64-bit mixing of a seed with a stream index.
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    let mut h = keyed(seed, b"split");
    h.write(&stream.to_le_bytes());
    h.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    Forward,
    Backward,
}

impl Dir {
    pub fn sign(self) -> i64 {
        match self {
            Dir::Forward => 1,
            Dir::Backward => -1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dir::Forward => "+a",
            Dir::Backward => "-a",
        }
    }
}

/// The value of a configuration at one site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Single(Symbol),
    Pair(Symbol, Symbol),
}

/// Boxed sequential walk; yields values at `g·a^{±1}, g·a^{±2}, …`.
pub type Walk<'a, T> = Box<dyn Iterator<Item = Result<T>> + 'a>;

/// A `(K×K)`-valued configuration on `F₂` that can be read site by site and
/// walked along right `<a>`-cosets. The pairing scans only ever use walks.
pub trait PairField {
    fn pair_at(&self, g: &Word) -> Result<Pair>;

    fn a_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Pair>>;

    fn first_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Symbol>> {
        Ok(Box::new(self.a_walk(g, dir)?.map(|r| r.map(|p| p.0))))
    }
}

impl<F: PairField + ?Sized> PairField for &F {
    fn pair_at(&self, g: &Word) -> Result<Pair> {
        (**self).pair_at(g)
    }
    fn a_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Pair>> {
        (**self).a_walk(g, dir)
    }
    fn first_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Symbol>> {
        (**self).first_walk(g, dir)
    }
}

/// A seed-derived point of `(K×K)^{F₂}` or `K^{F₂}`.
#[derive(Clone, Debug)]
pub struct LazyConfig {
    seed: u64,
    measure: MeasureSpec,
    cdf: Vec<f64>,
}

impl LazyConfig {
    pub fn new(seed: u64, measure: MeasureSpec) -> Result<Self> {
        measure.validate()?;
        let cdf = cdf_of(&measure.law);
        Ok(LazyConfig { seed, measure, cdf })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn alphabet_size(&self) -> u32 {
        self.measure.alphabet_size()
    }

    fn draw(&self, tag: &[u8], g: &Word) -> Symbol {
        let mut h = keyed(self.seed, tag);
        absorb_word(&mut h, g);
        symbol_from_bits(h.finish(), &self.cdf)
    }

    pub fn value_at(&self, g: &Word) -> Value {
        match self.measure.kind {
            MeasureKind::Pair => Value::Pair(
                self.draw(TAG_COSET, &coset_rep_b(g)),
                self.draw(TAG_SITE2, g),
            ),
            MeasureKind::Plain => Value::Single(self.draw(TAG_SITE, g)),
        }
    }

    fn require_pair(&self) -> Result<()> {
        match self.measure.kind {
            MeasureKind::Pair => Ok(()),
            MeasureKind::Plain => Err(Error::Domain(
                "pair values requested from a plain configuration".into(),
            )),
        }
    }

    /// Accepts iff `x₁(e) = 1`, i.e. the point lies in `Y`.
    pub fn condition_on_y(self) -> Option<LazyConfig> {
        if self.measure.kind != MeasureKind::Pair {
            return None;
        }
        match self.value_at(&Word::identity()) {
            Value::Pair(DISTINGUISHED, _) => Some(self),
            _ => None,
        }
    }

    /// Rejection-samples a point of `Y` from the sub-seeds of `seed`.
    /// Returns the accepted configuration and the number of rejections.
    pub fn sample_in_y(seed: u64, measure: &MeasureSpec) -> Result<(LazyConfig, u64)> {
        if measure.kind != MeasureKind::Pair {
            return Err(Error::Usage("Y is defined for the pair measure only".into()));
        }
        for attempt in 0u64.. {
            let x = LazyConfig::new(split_seed(seed, attempt), measure.clone())?;
            if let Some(y) = x.condition_on_y() {
                return Ok((y, attempt));
            }
        }
        unreachable!()
    }

    fn ray(&self, g: &Word) -> Ray<'_> {
        let (base, t0) = g.strip_suffix_power(A);
        let mut site2 = keyed(self.seed, TAG_SITE2);
        let mut coset = keyed(self.seed, TAG_COSET);
        absorb_word(&mut site2, &base);
        absorb_word(&mut coset, &base);
        let at_base = self.value_at(&base);
        Ray {
            cfg: self,
            site2,
            coset,
            at_base,
            t0,
        }
    }
}

/// Precomputed hash prefixes for the coset `base·<a>`.
struct Ray<'a> {
    cfg: &'a LazyConfig,
    site2: SipHasher13,
    coset: SipHasher13,
    at_base: Value,
    t0: i64,
}

impl Ray<'_> {
    fn first(&self, t: i64) -> Symbol {
        if t == 0 {
            return match self.at_base {
                Value::Pair(i, _) => i,
                Value::Single(i) => i,
            };
        }
        let mut h = self.coset.clone();
        absorb(&mut h, Syllable { gen: A, exp: t });
        symbol_from_bits(h.finish(), &self.cfg.cdf)
    }

    fn pair(&self, t: i64) -> Pair {
        if t == 0 {
            return match self.at_base {
                Value::Pair(i, j) => (i, j),
                Value::Single(i) => (i, i),
            };
        }
        let mut h = self.site2.clone();
        absorb(&mut h, Syllable { gen: A, exp: t });
        (
            self.first(t),
            symbol_from_bits(h.finish(), &self.cfg.cdf),
        )
    }
}

impl PairField for LazyConfig {
    fn pair_at(&self, g: &Word) -> Result<Pair> {
        self.require_pair()?;
        match self.value_at(g) {
            Value::Pair(i, j) => Ok((i, j)),
            Value::Single(_) => unreachable!(),
        }
    }

    fn a_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Pair>> {
        self.require_pair()?;
        let ray = self.ray(g);
        let step = dir.sign();
        Ok(Box::new((1i64..).map(move |n| Ok(ray.pair(ray.t0 + step * n)))))
    }

    fn first_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Symbol>> {
        self.require_pair()?;
        let ray = self.ray(g);
        let step = dir.sign();
        Ok(Box::new((1i64..).map(move |n| Ok(ray.first(ray.t0 + step * n)))))
    }
}

/// The shifted configuration `h·x`, with `(h·x)(g) = x(h⁻¹g)`.
#[derive(Clone, Debug)]
pub struct Shifted<F> {
    inner: F,
    inv: Word,
}

impl<F> Shifted<F> {
    pub fn new(inner: F, h: &Word) -> Self {
        Shifted {
            inner,
            inv: h.inverse(),
        }
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }

    /// The site of the underlying configuration read at `g`.
    pub fn source_site(&self, g: &Word) -> Word {
        self.inv.mul(g)
    }
}

impl Shifted<LazyConfig> {
    pub fn value_at(&self, g: &Word) -> Value {
        self.inner.value_at(&self.source_site(g))
    }
}

impl<F: PairField> PairField for Shifted<F> {
    fn pair_at(&self, g: &Word) -> Result<Pair> {
        self.inner.pair_at(&self.source_site(g))
    }
    fn a_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Pair>> {
        self.inner.a_walk(&self.source_site(g), dir)
    }
    fn first_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Symbol>> {
        self.inner.first_walk(&self.source_site(g), dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_group::tests::word_strategy;
    use crate::free_group::{GeneratorSet, B};
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::collections::HashMap;

    fn pair_cfg(seed: u64, k: u32) -> LazyConfig {
        LazyConfig::new(seed, MeasureSpec::uniform(MeasureKind::Pair, k).unwrap()).unwrap()
    }

    #[test]
    fn law_validation() {
        assert!(validate_law(&[0.5, 0.5]).is_ok());
        assert!(validate_law(&[1.0]).is_err());
        assert!(validate_law(&[1.0, 0.0]).is_err());
        assert!(validate_law(&[0.6, 0.6]).is_err());
        assert!(validate_law(&[-0.1, 1.1]).is_err());
        let json = r#"{"kind":"pair","law":[0.25,0.75]}"#;
        let m: MeasureSpec = serde_json::from_str(json).unwrap();
        assert_eq!(m.kind, MeasureKind::Pair);
        assert!(!m.is_uniform());
        assert_eq!(serde_json::to_string(&m).unwrap(), json);
    }

    #[test]
    fn coset_constraint_and_determinism() {
        let x = pair_cfg(7, 3);
        let f2 = GeneratorSet::free2();
        let ab2 = f2.parse("a b b").unwrap();
        let a = f2.parse("a").unwrap();
        let (Value::Pair(i, _), Value::Pair(j, _)) = (x.value_at(&ab2), x.value_at(&a)) else {
            panic!()
        };
        assert_eq!(i, j);
        assert_eq!(x.value_at(&ab2), x.value_at(&ab2));
    }

    #[test]
    fn derive_value_frequencies() {
        // 10⁶ distinct sites, uniform on two symbols: 0.5 ± 0.002 (3σ = 0.0015)
        let law = [0.5, 0.5];
        let n = 1_000_000i64;
        let ones = (0..n)
            .filter(|t| derive_value(3, b"site", &Word::power(A, *t), &law) == 1)
            .count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.002, "{freq}");
    }

    #[test]
    fn derive_value_uniformity_chi_square() {
        let law = [0.25; 4];
        let ball = GeneratorSet::free2().ball(10);
        let mut counts = [0f64; 4];
        for g in ball.iter().take(1 << 16) {
            counts[derive_value(11, b"site", g, &law) as usize - 1] += 1.0;
        }
        let expected = (1 << 16) as f64 / 4.0;
        let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let p = ChiSquared::new(3.0).unwrap().sf(stat);
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn second_coordinate_marginal() {
        let law = vec![0.2, 0.3, 0.5];
        let m = MeasureSpec::new(MeasureKind::Pair, law.clone()).unwrap();
        let trials = 100_000;
        let mut counts = [0f64; 3];
        for seed in 0..trials {
            let x = LazyConfig::new(seed, m.clone()).unwrap();
            let (_, j) = x.pair_at(&Word::identity()).unwrap();
            counts[j as usize - 1] += 1.0;
        }
        let tv: f64 = 0.5
            * counts
                .iter()
                .zip(&law)
                .map(|(c, p)| (c / trials as f64 - p).abs())
                .sum::<f64>();
        assert!(tv < 0.01, "tv = {tv}");
    }

    #[test]
    fn acceptance_rate_into_y() {
        let m = MeasureSpec::uniform(MeasureKind::Pair, 2).unwrap();
        let accepted = (0..100_000u64)
            .filter(|s| LazyConfig::new(*s, m.clone()).unwrap().condition_on_y().is_some())
            .count();
        let rate = accepted as f64 / 1e5;
        assert!((rate - 0.5).abs() < 0.005, "{rate}");

        let (y, _) = LazyConfig::sample_in_y(5, &m).unwrap();
        assert_eq!(y.pair_at(&Word::identity()).unwrap().0, DISTINGUISHED);
        let plain = MeasureSpec::uniform(MeasureKind::Plain, 2).unwrap();
        assert!(LazyConfig::new(1, plain.clone()).unwrap().condition_on_y().is_none());
        assert!(LazyConfig::sample_in_y(1, &plain).is_err());
    }

    #[test]
    fn condition_examples() {
        let m = MeasureSpec::uniform(MeasureKind::Pair, 3).unwrap();
        for seed in 0..50 {
            let x = LazyConfig::new(seed, m.clone()).unwrap();
            let first = x.pair_at(&Word::identity()).unwrap().0;
            assert_eq!(x.clone().condition_on_y().is_some(), first == DISTINGUISHED);
        }
    }

    #[test]
    fn shift_covariance_two_sample() {
        // window {e, b}: law of (x(e), x(b)) vs (x(h), x(hb)); homogeneity chi-square
        let f2 = GeneratorSet::free2();
        let h = f2.parse("a b' a").unwrap();
        let window = [Word::identity(), Word::generator(B)];
        let mut table: HashMap<(Value, Value), [f64; 2]> = HashMap::new();
        let trials = 20_000u64;
        for seed in 0..trials {
            let x = pair_cfg(seed, 2);
            let base = (x.value_at(&window[0]), x.value_at(&window[1]));
            table.entry(base).or_default()[0] += 1.0;
            let y = pair_cfg(seed + trials, 2);
            let moved = (y.value_at(&h.mul(&window[0])), y.value_at(&h.mul(&window[1])));
            table.entry(moved).or_default()[1] += 1.0;
        }
        let n = 2.0 * trials as f64;
        let mut stat = 0.0;
        for cells in table.values() {
            let row: f64 = cells.iter().sum();
            for c in cells {
                let e = row * trials as f64 / n;
                stat += (c - e).powi(2) / e;
            }
        }
        // coset constraint leaves 8 reachable cells out of 16
        assert_eq!(table.len(), 8);
        let p = ChiSquared::new(table.len() as f64 - 1.0).unwrap().sf(stat);
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn query_order_does_not_matter() {
        let x = pair_cfg(99, 4);
        let ball = GeneratorSet::free2().ball(3);
        let forward: Vec<Value> = ball.iter().map(|g| x.value_at(g)).collect();
        let fresh = pair_cfg(99, 4);
        let mut backward: Vec<Value> = ball.iter().rev().map(|g| fresh.value_at(g)).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    proptest! {
        #[test]
        fn coset_constraint_everywhere(seed in any::<u64>(), g in word_strategy(2, 12)) {
            let x = pair_cfg(seed, 3);
            let (i, _) = x.pair_at(&g).unwrap();
            let (j, _) = x.pair_at(&coset_rep_b(&g)).unwrap();
            prop_assert_eq!(i, j);
            let (k, _) = x.pair_at(&g.times_power(B, 1)).unwrap();
            prop_assert_eq!(i, k);
        }

        #[test]
        fn walks_agree_with_point_queries(seed in any::<u64>(), g in word_strategy(2, 6), fwd in any::<bool>()) {
            let x = pair_cfg(seed, 3);
            let dir = if fwd { Dir::Forward } else { Dir::Backward };
            let walked: Vec<Pair> = x.a_walk(&g, dir).unwrap().take(6).map(|r| r.unwrap()).collect();
            let firsts: Vec<Symbol> = x.first_walk(&g, dir).unwrap().take(6).map(|r| r.unwrap()).collect();
            for (n, p) in walked.iter().enumerate() {
                let site = g.times_power(A, dir.sign() * (n as i64 + 1));
                prop_assert_eq!(*p, x.pair_at(&site).unwrap());
                prop_assert_eq!(firsts[n], p.0);
            }
        }

        #[test]
        fn shifted_reads_translate(seed in any::<u64>(), h in word_strategy(2, 4), g in word_strategy(2, 4)) {
            let x = pair_cfg(seed, 2);
            let hx = Shifted::new(x.clone(), &h);
            prop_assert_eq!(hx.pair_at(&h.mul(&g)).unwrap(), x.pair_at(&g).unwrap());
            let w: Vec<Pair> = hx.a_walk(&h.mul(&g), Dir::Forward).unwrap().take(3).map(|r| r.unwrap()).collect();
            let v: Vec<Pair> = x.a_walk(&g, Dir::Forward).unwrap().take(3).map(|r| r.unwrap()).collect();
            prop_assert_eq!(w, v);
        }
    }
}
