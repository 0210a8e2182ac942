//! The tree-contraction stable orbit equivalence from `F₂` restricted to
//! `Y = {y : y₁(e) = 1}` onto the free group `F_T` of rank `|K| + 1`.
//!
//! Sites with `y₁ = 1` become the vertices of a tree. Generator `s0` hops to
//! the next such site along the `a`-coset, and `s_k` follows the `b`-edge of
//! the site paired with it by `P_k`. Each vertex is labeled with the run of
//! values up to the next `y₁ = 1` site. The inverse `Θ` unrolls runs back
//! into `a`-rays using the site pairings `Q_k`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{derive_value, Dir, Pair, PairField, Shifted, Symbol, Walk, DISTINGUISHED};
use crate::error::{Error, Result};
use crate::free_group::{GeneratorSet, Syllable, Word, A, B};
use crate::memo::PrefixMemo;
use crate::network::{EdgeLabel, Label, RootedNetwork};
use crate::oe2::{bracket_scan, Witness};

/// Index of the hop generator `s0` in `F_T`.
pub const S0: u32 = 0;

/// Generators `s0, s1, …, sK` of `F_T`.
pub fn t_generators(alphabet_size: u32) -> GeneratorSet {
    GeneratorSet::indexed("s", alphabet_size as usize + 1)
}

/// A nonempty list of alphabet pairs read along an `a`-ray.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Pair>", into = "Vec<Pair>")]
pub struct RunLabel(Vec<Pair>);

impl RunLabel {
    pub fn new(entries: Vec<Pair>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Domain("run labels are nonempty".into()));
        }
        Ok(RunLabel(entries))
    }

    pub fn entries(&self) -> &[Pair] {
        &self.0
    }

    /// Index of the last entry; a single-entry run has last index 0.
    pub fn last_index(&self) -> usize {
        self.0.len() - 1
    }

    pub fn entry(&self, i: usize) -> Option<Pair> {
        self.0.get(i).copied()
    }

    /// Starts with first component 1 and has no other 1 among first components.
    pub fn is_run(&self) -> bool {
        self.0[0].0 == DISTINGUISHED && self.0[1..].iter().all(|p| p.0 != DISTINGUISHED)
    }

    fn check_run(&self) -> Result<()> {
        if self.is_run() {
            Ok(())
        } else {
            Err(Error::Domain(format!("{self:?} is not a run label")))
        }
    }
}

impl fmt::Debug for RunLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Run{:?}", self.0)
    }
}

impl TryFrom<Vec<Pair>> for RunLabel {
    type Error = Error;
    fn try_from(v: Vec<Pair>) -> Result<Self> {
        RunLabel::new(v)
    }
}

impl From<RunLabel> for Vec<Pair> {
    fn from(r: RunLabel) -> Self {
        r.0
    }
}

fn first_at<F: PairField + ?Sized>(y: &F, g: &Word) -> Result<Symbol> {
    Ok(y.pair_at(g)?.0)
}

fn next<T>(walk: &mut Walk<'_, T>) -> Result<T> {
    walk.next()
        .unwrap_or_else(|| Err(Error::Domain("walk ended".into())))
}

/// The per-symbol pairing `P_k`: matches `y₁ = 1` sites with `y₁ = k` sites
/// like brackets along `a`-cosets. Everything else, and all of `k = 1`, is
/// fixed.
pub fn pair_pk<F: PairField + ?Sized>(y: &F, g: &Word, k: Symbol, budget: u64) -> Result<Word> {
    if k == DISTINGUISHED {
        return Ok(g.clone());
    }
    let i = first_at(y, g)?;
    let dir = if i == DISTINGUISHED {
        Dir::Forward
    } else if i == k {
        Dir::Backward
    } else {
        return Ok(g.clone());
    };
    let (open, close) = match dir {
        Dir::Forward => (DISTINGUISHED, k),
        Dir::Backward => (k, DISTINGUISHED),
    };
    match bracket_scan(y.first_walk(g, dir)?, budget, |v| *v == open, |v| *v == close)? {
        Some(n) => Ok(g.times_power(A, dir.sign() * n as i64)),
        None => Err(Error::ScanBudgetExceeded {
            site: g.clone(),
            direction: dir.name(),
            budget,
        }),
    }
}

/// Values `y(g a^m)` from a `y₁ = 1` site `g` up to, not including, the next one.
pub fn run_label<F: PairField + ?Sized>(y: &F, g: &Word, budget: u64) -> Result<RunLabel> {
    let start = y.pair_at(g)?;
    if start.0 != DISTINGUISHED {
        return Err(Error::Domain(format!("run labels start at y1 = 1 sites, not {g:?}")));
    }
    let mut entries = vec![start];
    let mut walk = y.a_walk(g, Dir::Forward)?;
    for _ in 0..budget {
        let p = next(&mut walk)?;
        if p.0 == DISTINGUISHED {
            return Ok(RunLabel(entries));
        }
        entries.push(p);
    }
    Err(Error::ScanBudgetExceeded {
        site: g.clone(),
        direction: "+a",
        budget,
    })
}

/// The next (or previous) `y₁ = 1` site strictly along the `a`-coset.
fn hop<F: PairField + ?Sized>(y: &F, v: &Word, dir: Dir, times: u64, budget: u64) -> Result<Word> {
    let mut walk = y.first_walk(v, dir)?;
    let mut offset = 0i64;
    for _ in 0..times {
        let mut found = false;
        for _ in 0..budget {
            offset += 1;
            if next(&mut walk)? == DISTINGUISHED {
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::ScanBudgetExceeded {
                site: v.clone(),
                direction: dir.name(),
                budget,
            });
        }
    }
    Ok(v.times_power(A, dir.sign() * offset))
}

/// Run labels can be read at elements of `F_T` and walked along `s0`.
pub trait RunField {
    fn label_at(&self, f: &Word) -> Result<RunLabel>;

    /// Labels at `f·s0^{±1}, f·s0^{±2}, …`.
    fn s0_walk(&self, f: &Word, dir: Dir) -> Result<Walk<'_, RunLabel>>;
}

impl<R: RunField + ?Sized> RunField for &R {
    fn label_at(&self, f: &Word) -> Result<RunLabel> {
        (**self).label_at(f)
    }
    fn s0_walk(&self, f: &Word, dir: Dir) -> Result<Walk<'_, RunLabel>> {
        (**self).s0_walk(f, dir)
    }
}

/// `Ωy : F_T → K★`, read off the contracted tree network.
pub struct SoeOmega<F> {
    y: F,
    alphabet_size: u32,
    budget: u64,
    alpha: PrefixMemo<Word>,
}

impl<F: PairField> SoeOmega<F> {
    /// Fails with a domain error unless `y₁(e) = 1`.
    pub fn new(y: F, alphabet_size: u32, budget: u64) -> Result<Self> {
        if first_at(&y, &Word::identity())? != DISTINGUISHED {
            return Err(Error::Domain("configuration is not in Y".into()));
        }
        Ok(SoeOmega {
            y,
            alphabet_size,
            budget,
            alpha: PrefixMemo::new(),
        })
    }

    pub fn source(&self) -> &F {
        &self.y
    }

    pub fn alphabet_size(&self) -> u32 {
        self.alphabet_size
    }

    /// Vertex of the contracted network reached from the root along `f`.
    pub fn alpha(&self, f: &Word) -> Result<Word> {
        self.alpha.eval(f, || Ok(Word::identity()), |v, s| self.alpha_step(v, s))
    }

    fn alpha_step(&self, v: &Word, s: Syllable) -> Result<Word> {
        let dir = if s.exp > 0 { Dir::Forward } else { Dir::Backward };
        if s.gen == S0 {
            return hop(&self.y, v, dir, s.exp.unsigned_abs(), self.budget);
        }
        if s.gen > self.alphabet_size {
            return Err(Error::Usage(format!("s{} is not a generator of F_T", s.gen)));
        }
        let mut cur = v.clone();
        for _ in 0..s.exp.unsigned_abs() {
            cur = k_step(&self.y, &cur, s.gen, dir, self.budget)?;
        }
        Ok(cur)
    }

    pub fn value(&self, f: &Word) -> Result<RunLabel> {
        run_label(&self.y, &self.alpha(f)?, self.budget)
    }

    pub fn window(&self, window: &[Word]) -> Result<Vec<RunLabel>> {
        window.iter().map(|f| self.value(f)).collect()
    }
}

/// Follows the `k`-labeled edge out of (or back into) vertex `v`.
fn k_step<F: PairField + ?Sized>(y: &F, v: &Word, k: Symbol, dir: Dir, budget: u64) -> Result<Word> {
    let paired = pair_pk(y, v, k, budget)?;
    pair_pk(y, &paired.times_power(B, dir.sign()), k, budget)
}

impl<F: PairField> RunField for SoeOmega<F> {
    fn label_at(&self, f: &Word) -> Result<RunLabel> {
        self.value(f)
    }

    fn s0_walk(&self, f: &Word, dir: Dir) -> Result<Walk<'_, RunLabel>> {
        let v = self.alpha(f)?;
        let mut walk = self.y.a_walk(&v, dir)?;
        let budget = self.budget;
        let mut failed = false;
        match dir {
            Dir::Forward => {
                // the first call skips the rest of the run at v
                let mut pending: Option<Pair> = None;
                Ok(Box::new(std::iter::from_fn(move || {
                    if failed {
                        return None;
                    }
                    let mut run = || -> Result<RunLabel> {
                        let mut steps = 0u64;
                        let mut read = |walk: &mut Walk<'_, Pair>| -> Result<Pair> {
                            steps += 1;
                            if steps > budget {
                                return Err(Error::ScanBudgetExceeded {
                                    site: v.clone(),
                                    direction: "+a",
                                    budget,
                                });
                            }
                            next(walk)
                        };
                        let start = match pending.take() {
                            Some(p) => p,
                            None => loop {
                                let p = read(&mut walk)?;
                                if p.0 == DISTINGUISHED {
                                    break p;
                                }
                            },
                        };
                        let mut entries = vec![start];
                        loop {
                            let p = read(&mut walk)?;
                            if p.0 == DISTINGUISHED {
                                pending = Some(p);
                                return Ok(RunLabel(entries));
                            }
                            entries.push(p);
                        }
                    };
                    let out = run();
                    failed = out.is_err();
                    Some(out)
                })))
            }
            Dir::Backward => Ok(Box::new(std::iter::from_fn(move || {
                if failed {
                    return None;
                }
                let mut acc = Vec::new();
                for _ in 0..budget {
                    match next(&mut walk) {
                        Ok(p) => {
                            acc.push(p);
                            if p.0 == DISTINGUISHED {
                                acc.reverse();
                                return Some(Ok(RunLabel(acc)));
                            }
                        }
                        Err(e) => {
                            failed = true;
                            return Some(Err(e));
                        }
                    }
                }
                failed = true;
                Some(Err(Error::ScanBudgetExceeded {
                    site: v.clone(),
                    direction: "-a",
                    budget,
                }))
            }))),
        }
    }
}

/// The contracted network `N_y^φ` over generators `s0, …, sK`; its vertices
/// are the `y₁ = 1` sites of `F₂`.
pub struct SoeNetwork<F> {
    y: F,
    alphabet_size: u32,
    budget: u64,
    t_gens: GeneratorSet,
}

pub fn build_nphi<F: PairField>(y: F, alphabet_size: u32, budget: u64) -> Result<SoeNetwork<F>> {
    if first_at(&y, &Word::identity())? != DISTINGUISHED {
        return Err(Error::Domain("configuration is not in Y".into()));
    }
    Ok(SoeNetwork {
        y,
        alphabet_size,
        budget,
        t_gens: t_generators(alphabet_size),
    })
}

impl<F: PairField> RootedNetwork for SoeNetwork<F> {
    type Vertex = Word;

    fn root(&self) -> Word {
        Word::identity()
    }
    fn contains(&self, v: &Word) -> bool {
        GeneratorSet::free2().check(v).is_ok()
            && matches!(first_at(&self.y, v), Ok(DISTINGUISHED))
    }
    fn label(&self, v: &Word) -> Result<Label> {
        Ok(Label::Run(run_label(&self.y, v, self.budget)?))
    }
    fn out_edges(&self, v: &Word) -> Result<Vec<(EdgeLabel, Word)>> {
        let mut out = vec![(S0, hop(&self.y, v, Dir::Forward, 1, self.budget)?)];
        for k in 1..=self.alphabet_size {
            out.push((k, k_step(&self.y, v, k, Dir::Forward, self.budget)?));
        }
        Ok(out)
    }
    fn in_edges(&self, v: &Word) -> Result<Vec<(EdgeLabel, Word)>> {
        let mut inn = vec![(S0, hop(&self.y, v, Dir::Backward, 1, self.budget)?)];
        for k in 1..=self.alphabet_size {
            let from = k_step(&self.y, v, k, Dir::Backward, self.budget)?;
            // the k-edge out of `from` must come back to v, and `from` must be a vertex
            if first_at(&self.y, &from)? != DISTINGUISHED
                || k_step(&self.y, &from, k, Dir::Forward, self.budget)? != *v
            {
                return Err(Error::ActionabilityViolation {
                    vertex: GeneratorSet::free2().format(v),
                    letter: format!("s{k}'"),
                });
            }
            inn.push((k, from));
        }
        Ok(inn)
    }
    fn vertex_name(&self, v: &Word) -> String {
        GeneratorSet::free2().format(v)
    }
    fn edge_label_name(&self, l: EdgeLabel) -> String {
        self.t_gens.name(l).to_string()
    }
}

/// Finds `f ∈ F_T` with `Ω(h·y) = f·Ωy` on the `F_T`-ball of `radius`, by
/// exhaustive search over `|f| ≤ cap`. Requires `h·y ∈ Y`.
pub fn orbit_witness<F: PairField>(
    y: &F,
    alphabet_size: u32,
    h: &Word,
    radius: usize,
    cap: usize,
    budget: u64,
) -> Result<Witness> {
    if first_at(y, &h.inverse())? != DISTINGUISHED {
        return Err(Error::Domain(format!("h·y is not in Y for h = {h:?}")));
    }
    let base = SoeOmega::new(y, alphabet_size, budget)?;
    let moved = SoeOmega::new(Shifted::new(y, h), alphabet_size, budget)?;
    let gens = t_generators(alphabet_size);
    let window = gens.ball(radius);
    let target = moved.window(&window)?;
    let mut found: Vec<Word> = Vec::new();
    'candidates: for f in gens.ball(cap) {
        let fi = f.inverse();
        for (k, want) in window.iter().zip(&target) {
            if base.value(&fi.mul(k))? != *want {
                continue 'candidates;
            }
        }
        found.push(f);
        if found.len() > 1 {
            break;
        }
    }
    match found.len() {
        0 => Err(Error::SearchFailure { cap }),
        n => Ok(Witness {
            f: found.swap_remove(0),
            unique: n == 1,
        }),
    }
}

/// Probability of `xi` under the single-site law of `Ωy` for uniform `κ` on
/// `alphabet_size` symbols: `|K|^{-(2n+2)}` for runs of last index `n`.
pub fn kappa_star_pmf(alphabet_size: u32, xi: &RunLabel) -> f64 {
    let k = alphabet_size;
    let in_range = xi.entries().iter().all(|&(i, j)| (1..=k).contains(&i) && (1..=k).contains(&j));
    if !xi.is_run() || !in_range {
        return 0.0;
    }
    (k as f64).powi(-(2 * xi.last_index() as i32 + 2))
}

/// Length law of runs, counted in entries: `(1/K)(1 - 1/K)^{m-1}` for `m ≥ 1`.
pub fn run_length_pmf(alphabet_size: u32, entries: usize) -> f64 {
    if entries == 0 {
        return 0.0;
    }
    let q = 1.0 / alphabet_size as f64;
    q * (1.0 - q).powi(entries as i32 - 1)
}

/// A point of `F_T^z`: entry `index` of the run at `base`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexedSite {
    pub base: Word,
    pub index: usize,
}

impl IndexedSite {
    pub fn new(base: Word, index: usize) -> Self {
        IndexedSite { base, index }
    }
}

/// The order on indexed sites: `(g, i) < (h, j)` if `h = g·s0^n` with
/// `n > 0`, or `g = h` and `i < j`. `None` means incomparable.
pub fn order_cmp(p: &IndexedSite, q: &IndexedSite) -> Option<Ordering> {
    if p.base == q.base {
        return Some(p.index.cmp(&q.index));
    }
    let n = p.base.inverse().mul(&q.base).as_power_of(S0)?;
    Some(if n > 0 { Ordering::Less } else { Ordering::Greater })
}

/// `p ≤ q` in the site order; `None` when incomparable.
pub fn order_le(p: &IndexedSite, q: &IndexedSite) -> Option<bool> {
    order_cmp(p, q).map(|o| o != Ordering::Greater)
}

/// The site pairing `Q_k(z, g)`: the first site after `(g, 0)` whose first
/// component is `k` with balanced counts of 1 and `k` in between.
pub fn pair_qk<Z: RunField + ?Sized>(z: &Z, g: &Word, k: Symbol, budget: u64) -> Result<IndexedSite> {
    if k == DISTINGUISHED {
        return Ok(IndexedSite::new(g.clone(), 0));
    }
    let here = z.label_at(g)?;
    here.check_run()?;
    let mut depth = 1u64;
    let mut steps = 0u64;
    let mut visit = |base: &Word, run: &RunLabel, from: usize| -> Result<Option<IndexedSite>> {
        for (idx, p) in run.entries().iter().enumerate().skip(from) {
            steps += 1;
            if steps > budget {
                return Err(Error::ScanBudgetExceeded {
                    site: g.clone(),
                    direction: "+s0",
                    budget,
                });
            }
            if p.0 == k {
                depth -= 1;
                if depth == 0 {
                    return Ok(Some(IndexedSite::new(base.clone(), idx)));
                }
            } else if p.0 == DISTINGUISHED {
                depth += 1;
            }
        }
        Ok(None)
    };
    if let Some(site) = visit(g, &here, 1)? {
        return Ok(site);
    }
    let mut base = g.clone();
    for run in z.s0_walk(g, Dir::Forward)? {
        let run = run?;
        run.check_run()?;
        base = base.times_power(S0, 1);
        if let Some(site) = visit(&base, &run, 0)? {
            return Ok(site);
        }
    }
    Err(Error::Domain("s0 walk ended".into()))
}

/// The unique `f` with `Q_k(z, f) = site`, where `k` is the first component
/// at `site`.
pub fn pair_qk_inverse<Z: RunField + ?Sized>(z: &Z, site: &IndexedSite, budget: u64) -> Result<Word> {
    let here = z.label_at(&site.base)?;
    here.check_run()?;
    let k = here
        .entry(site.index)
        .ok_or_else(|| Error::Domain(format!("index {} outside the run at {:?}", site.index, site.base)))?
        .0;
    if k == DISTINGUISHED {
        return Ok(site.base.clone());
    }
    let mut depth = 1u64;
    let mut steps = 0u64;
    // scans entries before `upto` from the back; true when the match is at index 0
    let mut visit = |run: &RunLabel, upto: usize| -> Result<bool> {
        for p in run.entries()[..upto].iter().rev() {
            steps += 1;
            if steps > budget {
                return Err(Error::ScanBudgetExceeded {
                    site: site.base.clone(),
                    direction: "-s0",
                    budget,
                });
            }
            if p.0 == DISTINGUISHED {
                depth -= 1;
                if depth == 0 {
                    return Ok(true);
                }
            } else if p.0 == k {
                depth += 1;
            }
        }
        Ok(false)
    };
    if visit(&here, site.index)? {
        return Ok(site.base.clone());
    }
    let mut base = site.base.clone();
    for run in z.s0_walk(&site.base, Dir::Backward)? {
        let run = run?;
        run.check_run()?;
        base = base.times_power(S0, -1);
        if visit(&run, run.entries().len())? {
            return Ok(base);
        }
    }
    Err(Error::Domain("s0 walk ended".into()))
}

/// A vertex of `N_z^ψ` together with the run it sits in.
#[derive(Clone, Debug)]
struct ThetaSite {
    site: IndexedSite,
    run: RunLabel,
}

impl ThetaSite {
    fn pair(&self) -> Pair {
        self.run.entries()[self.site.index]
    }
}

/// `Θz : F₂ → K×K`, the inverse of `Ω`, read off the unrolled network
/// `N_z^ψ` whose vertices are indexed sites.
pub struct Theta<Z> {
    z: Z,
    budget: u64,
    alpha: PrefixMemo<ThetaSite>,
}

impl<Z: RunField> Theta<Z> {
    pub fn new(z: Z, budget: u64) -> Self {
        Theta {
            z,
            budget,
            alpha: PrefixMemo::new(),
        }
    }

    fn root(&self) -> Result<ThetaSite> {
        let run = self.z.label_at(&Word::identity())?;
        run.check_run()?;
        Ok(ThetaSite {
            site: IndexedSite::new(Word::identity(), 0),
            run,
        })
    }

    fn at(&self, site: IndexedSite) -> Result<ThetaSite> {
        let run = self.z.label_at(&site.base)?;
        if site.index > run.last_index() {
            return Err(Error::Domain(format!("{site:?} is outside the run")));
        }
        Ok(ThetaSite { site, run })
    }

    /// The site reached from `(e, 0)` along `g`.
    pub fn alpha(&self, g: &Word) -> Result<IndexedSite> {
        Ok(self.alpha_site(g)?.site)
    }

    fn alpha_site(&self, g: &Word) -> Result<ThetaSite> {
        self.alpha.eval(g, || self.root(), |v, s| self.alpha_step(v, s))
    }

    fn alpha_step(&self, v: &ThetaSite, s: Syllable) -> Result<ThetaSite> {
        if s.gen == A {
            return self.advance(v, s.exp);
        }
        let mut cur = v.clone();
        for _ in 0..s.exp.unsigned_abs() {
            cur = self.b_step(&cur, if s.exp > 0 { Dir::Forward } else { Dir::Backward })?;
        }
        Ok(cur)
    }

    /// Follows the b-edge out of `v` (forward) or back into it.
    fn b_step(&self, v: &ThetaSite, dir: Dir) -> Result<ThetaSite> {
        let k = v.pair().0;
        let f = pair_qk_inverse(&self.z, &v.site, self.budget)?;
        self.at(pair_qk(&self.z, &f.times_power(k, dir.sign()), k, self.budget)?)
    }

    /// Moves `steps` sites along the a-edges, hopping between runs.
    fn advance(&self, v: &ThetaSite, steps: i64) -> Result<ThetaSite> {
        let base = &v.site.base;
        let i = v.site.index as u64;
        let n = v.run.last_index() as u64;
        let s = steps.unsigned_abs();
        if steps >= 0 && i + s <= n {
            return Ok(ThetaSite {
                site: IndexedSite::new(base.clone(), (i + s) as usize),
                run: v.run.clone(),
            });
        }
        if steps < 0 && s <= i {
            return Ok(ThetaSite {
                site: IndexedSite::new(base.clone(), (i - s) as usize),
                run: v.run.clone(),
            });
        }
        let (dir, mut remaining) = if steps > 0 {
            (Dir::Forward, s - (n - i) - 1)
        } else {
            (Dir::Backward, s - i - 1)
        };
        for (m, run) in (1i64..).zip(self.z.s0_walk(base, dir)?) {
            let run = run?;
            let len = run.last_index() as u64;
            if remaining <= len {
                let index = match dir {
                    Dir::Forward => remaining,
                    Dir::Backward => len - remaining,
                };
                return Ok(ThetaSite {
                    site: IndexedSite::new(base.times_power(S0, dir.sign() * m), index as usize),
                    run,
                });
            }
            remaining -= len + 1;
        }
        Err(Error::Domain("s0 walk ended".into()))
    }

    pub fn value(&self, g: &Word) -> Result<Pair> {
        Ok(self.alpha_site(g)?.pair())
    }

    pub fn window(&self, window: &[Word]) -> Result<Vec<Pair>> {
        window.iter().map(|g| self.value(g)).collect()
    }
}

impl<Z: RunField> PairField for Theta<Z> {
    fn pair_at(&self, g: &Word) -> Result<Pair> {
        self.value(g)
    }

    fn a_walk(&self, g: &Word, dir: Dir) -> Result<Walk<'_, Pair>> {
        let start = self.alpha_site(g)?;
        let i = start.site.index;
        let rest: Vec<Pair> = match dir {
            Dir::Forward => start.run.entries()[i + 1..].to_vec(),
            Dir::Backward => start.run.entries()[..i].iter().rev().copied().collect(),
        };
        let runs = self.z.s0_walk(&start.site.base, dir)?;
        let later = runs.flat_map(move |run| {
            let items: Vec<Result<Pair>> = match run {
                Ok(r) => {
                    let mut e = r.entries().to_vec();
                    if dir == Dir::Backward {
                        e.reverse();
                    }
                    e.into_iter().map(Ok).collect()
                }
                Err(e) => vec![Err(e)],
            };
            items
        });
        Ok(Box::new(rest.into_iter().map(Ok).chain(later)))
    }
}

/// The unrolled network `N_z^ψ` over `{a, b}`.
pub struct PsiNetwork<Z> {
    theta: Theta<Z>,
}

pub fn build_npsi<Z: RunField>(z: Z, budget: u64) -> PsiNetwork<Z> {
    PsiNetwork {
        theta: Theta::new(z, budget),
    }
}

impl<Z: RunField> RootedNetwork for PsiNetwork<Z> {
    type Vertex = IndexedSite;

    fn root(&self) -> IndexedSite {
        IndexedSite::new(Word::identity(), 0)
    }
    fn contains(&self, v: &IndexedSite) -> bool {
        self.theta.at(v.clone()).is_ok()
    }
    fn label(&self, v: &IndexedSite) -> Result<Label> {
        let (i, j) = self.theta.at(v.clone())?.pair();
        Ok(Label::Pair(i, j))
    }
    fn out_edges(&self, v: &IndexedSite) -> Result<Vec<(EdgeLabel, IndexedSite)>> {
        let here = self.theta.at(v.clone())?;
        Ok(vec![
            (A, self.theta.advance(&here, 1)?.site),
            (B, self.theta.b_step(&here, Dir::Forward)?.site),
        ])
    }
    fn in_edges(&self, v: &IndexedSite) -> Result<Vec<(EdgeLabel, IndexedSite)>> {
        let here = self.theta.at(v.clone())?;
        let from = self.theta.b_step(&here, Dir::Backward)?;
        if self.theta.b_step(&from, Dir::Forward)?.site != *v {
            return Err(Error::ActionabilityViolation {
                vertex: self.vertex_name(v),
                letter: "b'".into(),
            });
        }
        Ok(vec![(A, self.theta.advance(&here, -1)?.site), (B, from.site)])
    }
    fn vertex_name(&self, v: &IndexedSite) -> String {
        let gens = GeneratorSet::indexed("s", v.base.max_gen().map_or(1, |g| g as usize + 1));
        format!("({}, {})", gens.format(&v.base), v.index)
    }
    fn edge_label_name(&self, l: EdgeLabel) -> String {
        GeneratorSet::free2().name(l).to_string()
    }
}

/// Run labels given explicitly on finitely many elements of `F_T`.
#[derive(Clone, Debug, Default)]
pub struct ExplicitRunField(pub std::collections::HashMap<Word, RunLabel>);

impl RunField for ExplicitRunField {
    fn label_at(&self, f: &Word) -> Result<RunLabel> {
        self.0
            .get(f)
            .cloned()
            .ok_or_else(|| Error::Domain(format!("no run label given at {f:?}")))
    }

    fn s0_walk(&self, f: &Word, dir: Dir) -> Result<Walk<'_, RunLabel>> {
        let f = f.clone();
        Ok(Box::new(
            (1i64..).map(move |n| self.label_at(&f.times_power(S0, dir.sign() * n))),
        ))
    }
}

/// An i.i.d. field of run labels, each drawn from the single-site law of
/// `Ωy` for uniform `κ`: first components after the leading 1 are redrawn
/// until a 1 ends the run.
#[derive(Clone, Debug)]
pub struct KappaStarField {
    seed: u64,
    law: Vec<f64>,
    budget: u64,
}

impl KappaStarField {
    pub fn new(seed: u64, alphabet_size: u32, budget: u64) -> Self {
        KappaStarField {
            seed,
            law: vec![1.0 / alphabet_size as f64; alphabet_size as usize],
            budget,
        }
    }

    fn draw(&self, what: &[u8], m: u64, f: &Word) -> Symbol {
        let mut tag = what.to_vec();
        tag.extend_from_slice(&m.to_le_bytes());
        derive_value(self.seed, &tag, f, &self.law)
    }
}

impl RunField for KappaStarField {
    fn label_at(&self, f: &Word) -> Result<RunLabel> {
        let mut entries = vec![(DISTINGUISHED, self.draw(b"run2", 0, f))];
        for m in 1..=self.budget {
            let i = self.draw(b"run1", m, f);
            if i == DISTINGUISHED {
                return Ok(RunLabel(entries));
            }
            entries.push((i, self.draw(b"run2", m, f)));
        }
        Err(Error::ScanBudgetExceeded {
            site: f.clone(),
            direction: "run",
            budget: self.budget,
        })
    }

    fn s0_walk(&self, f: &Word, dir: Dir) -> Result<Walk<'_, RunLabel>> {
        let f = f.clone();
        Ok(Box::new(
            (1i64..).map(move |n| self.label_at(&f.times_power(S0, dir.sign() * n))),
        ))
    }
}
