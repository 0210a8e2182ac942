//! The edge-rewiring orbit equivalence over `F₂ = <a, b>`.
//!
//! Each `b`-edge `(g, gb)` of the Cayley graph is rewired to
//! `(g, P(x, g)·b)`, where `P` matches `(i, j)` sites with `(j, i)` sites
//! along `a`-cosets like brackets. Reading `x` along the rewired network
//! gives `Ωx`, an involution whose second coordinate is i.i.d. again.

use crate::config::{Dir, Pair, PairField, Shifted, Walk};
use crate::error::{Error, Result};
use crate::free_group::{GeneratorSet, Syllable, Word, A, B};
use crate::memo::PrefixMemo;
use crate::network::{EdgeLabel, Label, RootedNetwork};

/// Default cap on the number of sites a single pairing scan may read.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Result of a pairing scan: `partner = g·a^offset`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairingScan {
    pub partner: Word,
    pub offset: i64,
    /// Sites read after the starting one.
    pub scan_length: u64,
}

impl PairingScan {
    pub fn direction(&self) -> &'static str {
        match self.offset.signum() {
            1 => "+a",
            -1 => "-a",
            _ => "self",
        }
    }
}

/// First-return bracket scan: starting at depth one, an opener deepens and a
/// closer shallows; returns the step at which depth hits zero.
pub(crate) fn bracket_scan<T>(
    walk: Walk<'_, T>,
    budget: u64,
    opens: impl Fn(&T) -> bool,
    closes: impl Fn(&T) -> bool,
) -> Result<Option<u64>> {
    let mut depth: u64 = 1;
    for (n, v) in (1..=budget).zip(walk) {
        let v = v?;
        if closes(&v) {
            depth -= 1;
            if depth == 0 {
                return Ok(Some(n));
            }
        } else if opens(&v) {
            depth += 1;
        }
    }
    Ok(None)
}

/// The pairing `P(x, g)`. Sites labeled `(i, i)` are fixed; `(i, j)` with
/// `i < j` is matched forward with the first balanced `(j, i)`, and `i > j`
/// is matched backward.
pub fn pair_p<F: PairField + ?Sized>(x: &F, g: &Word, budget: u64) -> Result<PairingScan> {
    let (i, j) = x.pair_at(g)?;
    if i == j {
        return Ok(PairingScan {
            partner: g.clone(),
            offset: 0,
            scan_length: 0,
        });
    }
    let dir = if i < j { Dir::Forward } else { Dir::Backward };
    let found = bracket_scan(
        x.a_walk(g, dir)?,
        budget,
        |v: &Pair| *v == (i, j),
        |v: &Pair| *v == (j, i),
    )?;
    match found {
        Some(n) => {
            let offset = dir.sign() * n as i64;
            Ok(PairingScan {
                partner: g.times_power(A, offset),
                offset,
                scan_length: n,
            })
        }
        None => Err(Error::ScanBudgetExceeded {
            site: g.clone(),
            direction: dir.name(),
            budget,
        }),
    }
}

fn partner<F: PairField + ?Sized>(x: &F, g: &Word, budget: u64) -> Result<Word> {
    pair_p(x, g, budget).map(|s| s.partner)
}

/// Image of the Cayley edge `(g, g·s)` under the rewiring.
pub fn phi_edge<F: PairField + ?Sized>(
    x: &F,
    g: &Word,
    gen: u32,
    budget: u64,
) -> Result<(Word, Word)> {
    match gen {
        A => Ok((g.clone(), g.times_power(A, 1))),
        B => Ok((g.clone(), partner(x, g, budget)?.times_power(B, 1))),
        _ => Err(Error::Usage(format!("generator {gen} is not a or b"))),
    }
}

/// `Ωx` as a lazily evaluated field. The traversal map `α` is memoized at
/// syllable boundaries, so a window costs about one pairing scan per site.
pub struct Omega<F> {
    source: F,
    budget: u64,
    alpha: PrefixMemo<Word>,
}

impl<F: PairField> Omega<F> {
    pub fn new(source: F, budget: u64) -> Self {
        Omega {
            source,
            budget,
            alpha: PrefixMemo::new(),
        }
    }

    pub fn source(&self) -> &F {
        &self.source
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// The vertex of the rewired network reached from the root along `g`.
    pub fn alpha(&self, g: &Word) -> Result<Word> {
        self.alpha.eval(g, || Ok(Word::identity()), |v, s| self.alpha_step(v, s))
    }

    fn alpha_step(&self, v: &Word, s: Syllable) -> Result<Word> {
        if s.gen == A {
            return Ok(v.times_power(A, s.exp));
        }
        let mut cur = v.clone();
        for _ in 0..s.exp.unsigned_abs() {
            cur = if s.exp > 0 {
                partner(&self.source, &cur, self.budget)?.times_power(B, 1)
            } else {
                partner(&self.source, &cur.times_power(B, -1), self.budget)?
            };
        }
        Ok(cur)
    }

    pub fn value(&self, g: &Word) -> Result<Pair> {
        self.source.pair_at(&self.alpha(g)?)
    }

    pub fn window(&self, window: &[Word]) -> Result<Vec<Pair>> {
        window.iter().map(|g| self.value(g)).collect()
    }

    /// Second coordinates of `Ωx` on a window.
    pub fn project2(&self, window: &[Word]) -> Result<Vec<u32>> {
        window.iter().map(|g| self.value(g).map(|p| p.1)).collect()
    }

    /// A word `w` with `α(w) = target`, built by steering along the
    /// rewired network one syllable of `target` at a time.
    pub fn alpha_inverse(&self, target: &Word) -> Result<Word> {
        let mut w = Word::identity();
        // invariant: alpha(w) is the processed prefix of target
        let mut reached = Word::identity();
        for (gen, sign) in target.letters() {
            let want = reached.times_power(gen, sign as i64);
            if gen == A {
                w.push_power(A, sign as i64);
            } else if sign > 0 {
                // the b-edge leaving P(x, reached) lands on reached·b
                let p = pair_p(&self.source, &reached, self.budget)?;
                w.push_power(A, p.offset);
                w.push_power(B, 1);
            } else {
                // stepping back along b lands on P(x, want), then realign
                let p = pair_p(&self.source, &want, self.budget)?;
                w.push_power(B, -1);
                w.push_power(A, -p.offset);
            }
            reached = want;
        }
        Ok(w)
    }
}

impl<F: PairField> PairField for Omega<F> {
    fn pair_at(&self, g: &Word) -> Result<Pair> {
        self.value(g)
    }

    fn a_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Pair>> {
        self.source.a_walk(&self.alpha(g)?, dir)
    }

    fn first_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, u32>> {
        self.source.first_walk(&self.alpha(g)?, dir)
    }
}

/// `Ω(Ωx)` on a window; equals `x` there.
pub fn omega13_inverse_window<F: PairField>(x: F, window: &[Word], budget: u64) -> Result<Vec<Pair>> {
    Omega::new(Omega::new(x, budget), budget).window(window)
}

/// The rewired network `N_x^φ` rooted at the identity.
pub struct PhiNetwork<F> {
    source: F,
    budget: u64,
    gens: GeneratorSet,
}

pub fn phi_network<F: PairField>(source: F, budget: u64) -> PhiNetwork<F> {
    PhiNetwork {
        source,
        budget,
        gens: GeneratorSet::free2(),
    }
}

impl<F: PairField> RootedNetwork for PhiNetwork<F> {
    type Vertex = Word;

    fn root(&self) -> Word {
        Word::identity()
    }
    fn contains(&self, v: &Word) -> bool {
        self.gens.check(v).is_ok()
    }
    fn label(&self, v: &Word) -> Result<Label> {
        let (i, j) = self.source.pair_at(v)?;
        Ok(Label::Pair(i, j))
    }
    fn out_edges(&self, v: &Word) -> Result<Vec<(EdgeLabel, Word)>> {
        Ok(vec![
            (A, v.times_power(A, 1)),
            (B, phi_edge(&self.source, v, B, self.budget)?.1),
        ])
    }
    fn in_edges(&self, v: &Word) -> Result<Vec<(EdgeLabel, Word)>> {
        // the b-edge into v comes from P(x, v b⁻¹); confirm it really lands on v
        let from = partner(&self.source, &v.times_power(B, -1), self.budget)?;
        let lands = phi_edge(&self.source, &from, B, self.budget)?.1;
        if &lands != v {
            return Err(Error::ActionabilityViolation {
                vertex: self.gens.format(v),
                letter: "b'".into(),
            });
        }
        Ok(vec![(A, v.times_power(A, -1)), (B, from)])
    }
    fn vertex_name(&self, v: &Word) -> String {
        self.gens.format(v)
    }
    fn edge_label_name(&self, l: EdgeLabel) -> String {
        self.gens.name(l).to_string()
    }
}

/// Outcome of an orbit-correspondence search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub f: Word,
    /// No other element of the exhaustive uniqueness ball also agrees.
    pub unique: bool,
}

/// Finds `f` with `Ω(h·x) = f·Ωx` on the ball of `radius`.
///
/// `f` is obtained from the traversal inverse: if `α(w) = h⁻¹` then
/// `f = w⁻¹`. Its length grows with the pairing offset, so the uniqueness
/// claim is checked by exhaustion only over `|f'| ≤ unique_radius`.
pub fn orbit_witness<F: PairField>(
    x: &F,
    h: &Word,
    radius: usize,
    unique_radius: usize,
    budget: u64,
) -> Result<Witness> {
    let base = Omega::new(x, budget);
    let moved = Omega::new(Shifted::new(x, h), budget);
    let window = GeneratorSet::free2().ball(radius);
    let target = moved.window(&window)?;
    let agrees = |f: &Word| -> Result<bool> {
        let fi = f.inverse();
        for (k, want) in window.iter().zip(&target) {
            if base.value(&fi.mul(k))? != *want {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let f = base.alpha_inverse(&h.inverse())?.inverse();
    if !agrees(&f)? {
        return Err(Error::SearchFailure {
            cap: f.len() as usize,
        });
    }
    let mut unique = true;
    for cand in GeneratorSet::free2().ball(unique_radius) {
        if cand != f && agrees(&cand)? {
            unique = false;
            break;
        }
    }
    Ok(Witness { f, unique })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{LazyConfig, MeasureKind, MeasureSpec};
    use crate::free_group::tests::word_strategy;
    use crate::network::{act, ball, is_actionable};
    use crate::testutil::each_seed;
    use proptest::prelude::*;
    use std::collections::HashMap;

    const BUDGET: u64 = DEFAULT_BUDGET;

    fn cfg(seed: u64, k: u32) -> LazyConfig {
        LazyConfig::new(seed, MeasureSpec::uniform(MeasureKind::Pair, k).unwrap()).unwrap()
    }

    /// Explicit values on the a-coset of the identity; every other site reads
    /// `(0, 0)`, so it is fixed by the pairing.
    struct Row(HashMap<i64, Pair>);

    impl Row {
        fn new(vals: &[(i64, Pair)]) -> Self {
            Row(vals.iter().copied().collect())
        }
        fn at(&self, t: i64) -> Pair {
            self.0.get(&t).copied().unwrap_or((0, 0))
        }
    }

    impl PairField for Row {
        fn pair_at(&self, g: &Word) -> Result<Pair> {
            Ok(g.as_power_of(A).map_or((0, 0), |t| self.at(t)))
        }
        fn a_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Pair>> {
            let t0 = g.as_power_of(A);
            Ok(Box::new((1i64..).map(move |n| {
                Ok(t0.map_or((0, 0), |t| self.at(t + dir.sign() * n)))
            })))
        }
    }

    /// Independent oracle: smallest `n > 0` with `x(g a^n) = (j, i)` and
    /// equal counts of `(i, j)` and `(j, i)` over `[0, n]`.
    fn scan_oracle(vals: &dyn Fn(i64) -> Pair, limit: i64) -> Option<i64> {
        let (i, j) = vals(0);
        if i == j {
            return Some(0);
        }
        let sign = if i < j { 1 } else { -1 };
        (1..limit).map(|n| sign * n).find(|&n| {
            let range: Vec<i64> = if n > 0 { (0..=n).collect() } else { (n..=0).collect() };
            let opens = range.iter().filter(|&&m| vals(m) == (i, j)).count();
            let closes = range.iter().filter(|&&m| vals(m) == (j, i)).count();
            vals(n) == (j, i) && opens == closes
        })
    }

    #[test]
    fn pairing_examples() {
        let e = Word::identity();
        let fixed = Row::new(&[(0, (3, 3))]);
        let s = pair_p(&fixed, &e, BUDGET).unwrap();
        assert_eq!((s.partner.clone(), s.direction()), (e.clone(), "self"));

        let one = Row::new(&[(0, (0, 1)), (1, (1, 0))]);
        assert_eq!(pair_p(&one, &e, BUDGET).unwrap().partner, Word::power(A, 1));

        let nested = Row::new(&[(0, (0, 1)), (1, (0, 1)), (2, (1, 0)), (3, (1, 0))]);
        let s = pair_p(&nested, &e, BUDGET).unwrap();
        assert_eq!(s.partner, Word::power(A, 3));
        assert_eq!(s.scan_length, 3);
        // and backward from the closer
        let back = pair_p(&nested, &Word::power(A, 3), BUDGET).unwrap();
        assert_eq!(back.partner, e);
        assert_eq!(back.direction(), "-a");
    }

    #[test]
    fn pairing_matches_scan_oracle() {
        let g = Word::from_letters([(B, 1), (A, -1), (A, -1)]);
        each_seed(0..300, |seed| {
            let x = cfg(seed, 3);
            let vals = |m: i64| x.pair_at(&g.times_power(A, m)).unwrap();
            let s = pair_p(&x, &g, BUDGET)?;
            match scan_oracle(&vals, 400) {
                Some(n) => assert_eq!(s.offset, n),
                None => assert!(s.offset.abs() >= 399),
            }
            Ok(())
        });
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let open = Row::new(&[(0, (1, 2))]);
        let err = pair_p(&open, &Word::identity(), 50).unwrap_err();
        assert_eq!(
            err,
            Error::ScanBudgetExceeded {
                site: Word::identity(),
                direction: "+a",
                budget: 50
            }
        );
        assert!(err.is_abort());
    }

    #[test]
    fn alpha_examples() {
        let x = cfg(9, 2);
        let om = Omega::new(&x, BUDGET);
        assert_eq!(om.alpha(&Word::identity()).unwrap(), Word::identity());
        assert_eq!(om.alpha(&Word::power(A, 5)).unwrap(), Word::power(A, 5));
        let pe = pair_p(&x, &Word::identity(), BUDGET).unwrap().partner;
        assert_eq!(om.alpha(&Word::generator(B)).unwrap(), pe.times_power(B, 1));
        for n in -4..=4 {
            let an = Word::power(A, n);
            assert_eq!(om.value(&an).unwrap(), x.pair_at(&an).unwrap());
        }
    }

    #[test]
    fn phi_edge_examples() {
        let x = cfg(2, 2);
        let g = Word::from_letters([(A, 1), (B, 1)]);
        assert_eq!(phi_edge(&x, &g, A, BUDGET).unwrap(), (g.clone(), g.times_power(A, 1)));
        let fixed = Row::new(&[(0, (2, 2))]);
        let e = Word::identity();
        assert_eq!(phi_edge(&fixed, &e, B, BUDGET).unwrap(), (e.clone(), Word::generator(B)));
    }

    #[test]
    fn traversal_agrees_with_alpha() {
        each_seed(0..20, |seed| {
            let x = cfg(seed, 2);
            let om = Omega::new(&x, BUDGET);
            let net = phi_network(&x, BUDGET);
            for g in GeneratorSet::free2().ball(4) {
                assert_eq!(act(&net, &Word::identity(), &g)?, om.alpha(&g)?);
            }
            Ok(())
        });
    }

    #[test]
    fn rewired_network_is_actionable() {
        each_seed(0..25, |seed| {
            let net = phi_network(cfg(seed, 3), BUDGET);
            assert!(is_actionable(&net, &[A, B], 3, 64)?);
            // vertices of a radius-2 ball are distinct reduced words
            assert_eq!(ball(&net, 2, 64)?.len(), 17);
            Ok(())
        });
    }

    #[test]
    fn involution_and_coordinate_identity() {
        let window = GeneratorSet::free2().ball(3);
        each_seed(0..30, |seed| {
            let x = cfg(seed, 2);
            let back = omega13_inverse_window(&x, &window, BUDGET)?;
            let direct: Vec<Pair> = window.iter().map(|g| x.pair_at(g).unwrap()).collect();
            assert_eq!(back, direct);
            let om = Omega::new(&x, BUDGET);
            for g in &window {
                let up = om.value(&g.times_power(B, 1))?;
                assert_eq!(up.0, om.value(g)?.1);
            }
            Ok(())
        });
        let x = cfg(77, 4);
        let g = Word::from_letters([(A, 1), (B, -1)]);
        assert_eq!(omega13_inverse_window(&x, &[g.clone()], BUDGET).unwrap()[0], x.pair_at(&g).unwrap());
    }

    #[test]
    fn alpha_inverse_inverts() {
        each_seed(0..40, |seed| {
            let x = cfg(seed, 3);
            let om = Omega::new(&x, BUDGET);
            for t in GeneratorSet::free2().ball(3) {
                let w = om.alpha_inverse(&t)?;
                assert_eq!(om.alpha(&w)?, t, "seed {seed} target {t:?}");
            }
            Ok(())
        });
    }

    #[test]
    fn generator_move_witnesses() {
        each_seed(0..20, |seed| {
            let x = cfg(seed, 2);
            for h in [Word::power(A, 1), Word::power(A, -1), Word::power(B, 1), Word::power(B, -1)] {
                let w = orbit_witness(&x, &h, 2, 2, BUDGET)?;
                assert!(w.unique);
                if h.as_power_of(A).is_some() {
                    assert_eq!(w.f, h);
                }
            }
            Ok(())
        });
        let x = cfg(1, 2);
        assert_eq!(orbit_witness(&x, &Word::identity(), 2, 2, BUDGET).unwrap().f, Word::identity());
    }

    proptest! {
        #[test]
        fn pairing_is_involution(seed in any::<u64>(), g in word_strategy(2, 6), k in 2u32..5) {
            let x = cfg(seed, k);
            if let Ok(s) = pair_p(&x, &g, 100_000) {
                prop_assert_eq!(pair_p(&x, &s.partner, 100_000).unwrap().partner, g);
            }
        }

        #[test]
        fn rewiring_is_equivariant(seed in any::<u64>(), h in word_strategy(2, 3), g in word_strategy(2, 3)) {
            // P(h·x, g) = h·P(x, h⁻¹g)
            let x = cfg(seed, 2);
            let hx = Shifted::new(&x, &h);
            if let (Ok(l), Ok(r)) = (phi_edge(&hx, &g, B, 100_000), phi_edge(&x, &h.inverse().mul(&g), B, 100_000)) {
                prop_assert_eq!(l, (h.mul(&r.0), h.mul(&r.1)));
            }
        }
    }
}
