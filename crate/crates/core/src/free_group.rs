//! Reduced words in finitely generated free groups.
//!
//! Words are stored as syllables `(generator, exponent)` with nonzero
//! exponents and no two adjacent syllables on the same generator, which is
//! exactly the freely reduced form. Long powers such as `a^100000` therefore
//! cost one syllable.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Index of `a` in the rank-two group.
pub const A: u32 = 0;
/// Index of `b` in the rank-two group.
pub const B: u32 = 1;

/// A maximal power of one generator inside a reduced word.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Syllable {
    pub gen: u32,
    pub exp: i64,
}

/// A freely reduced word. The empty word is the identity.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    syllables: Vec<Syllable>,
}

impl Word {
    pub fn identity() -> Self {
        Word::default()
    }

    pub fn generator(gen: u32) -> Self {
        Word::power(gen, 1)
    }

    pub fn power(gen: u32, exp: i64) -> Self {
        let mut w = Word::identity();
        w.push_power(gen, exp);
        w
    }

    /// Builds a word from letters `(generator, ±1)`, reducing as it goes.
    pub fn from_letters<I: IntoIterator<Item = (u32, i8)>>(letters: I) -> Self {
        let mut w = Word::identity();
        for (gen, sign) in letters {
            debug_assert!(sign == 1 || sign == -1);
            w.push_power(gen, sign as i64);
        }
        w
    }

    pub fn from_syllables<I: IntoIterator<Item = Syllable>>(syllables: I) -> Self {
        let mut w = Word::identity();
        for s in syllables {
            w.push_power(s.gen, s.exp);
        }
        w
    }

    pub fn is_identity(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn syllables(&self) -> &[Syllable] {
        &self.syllables
    }

    pub fn last_syllable(&self) -> Option<Syllable> {
        self.syllables.last().copied()
    }

    /// Word metric: length of the reduced word.
    pub fn len(&self) -> u64 {
        self.syllables.iter().map(|s| s.exp.unsigned_abs()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.is_identity()
    }

    pub fn max_gen(&self) -> Option<u32> {
        self.syllables.iter().map(|s| s.gen).max()
    }

    /// Letters `(generator, ±1)` from left to right.
    pub fn letters(&self) -> impl Iterator<Item = (u32, i8)> + '_ {
        self.syllables.iter().flat_map(|s| {
            let sign: i8 = if s.exp > 0 { 1 } else { -1 };
            std::iter::repeat((s.gen, sign)).take(s.exp.unsigned_abs() as usize)
        })
    }

    /// Right-multiplies in place by `gen^exp`.
    pub fn push_power(&mut self, gen: u32, exp: i64) {
        if exp == 0 {
            return;
        }
        match self.syllables.last_mut() {
            Some(last) if last.gen == gen => {
                last.exp += exp;
                if last.exp == 0 {
                    self.syllables.pop();
                }
            }
            _ => self.syllables.push(Syllable { gen, exp }),
        }
    }

    /// `self · gen^exp` as a new word.
    pub fn times_power(&self, gen: u32, exp: i64) -> Word {
        let mut w = self.clone();
        w.push_power(gen, exp);
        w
    }

    pub fn mul(&self, other: &Word) -> Word {
        let mut w = self.clone();
        for s in &other.syllables {
            w.push_power(s.gen, s.exp);
        }
        w
    }

    pub fn inverse(&self) -> Word {
        Word {
            syllables: self
                .syllables
                .iter()
                .rev()
                .map(|s| Syllable {
                    gen: s.gen,
                    exp: -s.exp,
                })
                .collect(),
        }
    }

    /// Splits `self = prefix · gen^n` with `n` maximal; returns `(prefix, n)`.
    pub fn strip_suffix_power(&self, gen: u32) -> (Word, i64) {
        match self.syllables.last() {
            Some(last) if last.gen == gen => {
                let mut prefix = self.clone();
                let n = prefix.syllables.pop().map(|s| s.exp).unwrap_or(0);
                (prefix, n)
            }
            _ => (self.clone(), 0),
        }
    }

    /// Splits off the final letter: `self = prefix · gen^sign`.
    pub fn split_last_letter(&self) -> Option<(Word, u32, i8)> {
        let last = self.syllables.last()?;
        let sign: i8 = if last.exp > 0 { 1 } else { -1 };
        let mut prefix = self.clone();
        prefix.push_power(last.gen, -(sign as i64));
        Some((prefix, last.gen, sign))
    }

    /// If `self` is a power of `gen` (including the identity), its exponent.
    pub fn as_power_of(&self, gen: u32) -> Option<i64> {
        match self.syllables.as_slice() {
            [] => Some(0),
            [s] if s.gen == gen => Some(s.exp),
            _ => None,
        }
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word[")?;
        for (i, s) in self.syllables.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}^{}", s.gen, s.exp)?;
        }
        write!(f, "]")
    }
}

/// Canonical representative of the right coset `g<gen>`: strip the maximal
/// trailing power of `gen`.
pub fn coset_rep(g: &Word, gen: u32) -> Word {
    g.strip_suffix_power(gen).0
}

/// Canonical representative of `g<b>` in the rank-two group.
pub fn coset_rep_b(g: &Word) -> Word {
    coset_rep(g, B)
}

/// Ordered, named generators of a free group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorSet {
    names: Vec<String>,
}

impl GeneratorSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Usage("generator set must be nonempty".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty()
                || n == "e"
                || n.contains('\'')
                || n.contains('·')
                || n.chars().any(char::is_whitespace)
            {
                return Err(Error::Usage(format!("invalid generator name {n:?}")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Usage(format!("duplicate generator name {n:?}")));
            }
        }
        Ok(GeneratorSet { names })
    }

    /// `{a, b}`.
    pub fn free2() -> Self {
        GeneratorSet {
            names: vec!["a".into(), "b".into()],
        }
    }

    /// `{s0, s1, …, s(count-1)}`.
    pub fn indexed(prefix: &str, count: usize) -> Self {
        GeneratorSet {
            names: (0..count).map(|i| format!("{prefix}{i}")).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, gen: u32) -> &str {
        &self.names[gen as usize]
    }

    pub fn index_of(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| i as u32)
    }

    /// Checks that `w` only uses generators of this set.
    pub fn check(&self, w: &Word) -> Result<()> {
        match w.max_gen() {
            Some(g) if g as usize >= self.rank() => Err(Error::Usage(format!(
                "word {w:?} uses generator {g} outside a set of rank {}",
                self.rank()
            ))),
            _ => Ok(()),
        }
    }

    pub fn multiply(&self, u: &Word, v: &Word) -> Result<Word> {
        self.check(u)?;
        self.check(v)?;
        Ok(u.mul(v))
    }

    pub fn letter_name(&self, gen: u32, sign: i8) -> String {
        if sign > 0 {
            self.name(gen).to_string()
        } else {
            format!("{}'", self.name(gen))
        }
    }

    pub fn tokens(&self, w: &Word) -> Vec<String> {
        w.letters().map(|(g, s)| self.letter_name(g, s)).collect()
    }

    /// Text form: letters joined by `·`, inverses marked with `'`, `e` for the identity.
    pub fn format(&self, w: &Word) -> String {
        if w.is_identity() {
            "e".to_string()
        } else {
            self.tokens(w).join("·")
        }
    }

    pub fn parse_token(&self, token: &str) -> Result<(u32, i8)> {
        let (name, sign) = match token.strip_suffix('\'') {
            Some(n) => (n, -1),
            None => (token, 1),
        };
        self.index_of(name)
            .map(|g| (g, sign))
            .ok_or_else(|| Error::Usage(format!("unknown generator token {token:?}")))
    }

    pub fn from_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Word> {
        let letters = tokens
            .iter()
            .map(|t| self.parse_token(t.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Word::from_letters(letters))
    }

    /// Parses the text form; tokens may be separated by `·` or whitespace.
    pub fn parse(&self, text: &str) -> Result<Word> {
        let text = text.trim();
        if text.is_empty() || text == "e" {
            return Ok(Word::identity());
        }
        let tokens: Vec<&str> = text
            .split(|c: char| c == '·' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        self.from_tokens(&tokens)
    }

    /// All reduced words of length at most `radius`, in shortlex order with
    /// letters ordered `g0, g0⁻¹, g1, g1⁻¹, …`.
    pub fn ball(&self, radius: usize) -> Vec<Word> {
        let letters: Vec<(u32, i8)> = (0..self.rank() as u32)
            .flat_map(|g| [(g, 1i8), (g, -1i8)])
            .collect();
        let mut out = vec![Word::identity()];
        let mut layer = vec![Word::identity()];
        for _ in 0..radius {
            let mut next = Vec::with_capacity(layer.len() * (2 * self.rank() - 1).max(1));
            for w in &layer {
                let last = w.last_syllable();
                for &(g, s) in &letters {
                    let cancels = matches!(last, Some(l) if l.gen == g && (l.exp > 0) != (s > 0));
                    if !cancels {
                        next.push(w.times_power(g, s as i64));
                    }
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }

    /// Number of reduced words of length at most `radius`.
    pub fn ball_count(&self, radius: usize) -> u64 {
        let r = self.rank() as u64;
        let mut total = 1u64;
        let mut layer = 2 * r;
        for _ in 0..radius {
            total += layer;
            layer *= 2 * r - 1;
        }
        total
    }
}
