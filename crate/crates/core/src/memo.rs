use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::Result;
use crate::free_group::{Syllable, Word};

/// Memo for a traversal driven syllable by syllable along a word, keyed by
/// the word prefixes at syllable boundaries. Per-trial and single-threaded.
pub(crate) struct PrefixMemo<V> {
    map: RefCell<HashMap<Word, V>>,
}

impl<V: Clone> PrefixMemo<V> {
    pub fn new() -> Self {
        PrefixMemo {
            map: RefCell::new(HashMap::new()),
        }
    }

    /// Evaluates `w` from `root` by applying `step(state, syllable)` to each
    /// syllable, starting from the longest memoized prefix. A prefix whose
    /// last exponent is one step shorter also counts as a hit, so walking a
    /// ball in shortlex order costs one step per new element.
    pub fn eval(
        &self,
        w: &Word,
        root: impl FnOnce() -> Result<V>,
        mut step: impl FnMut(&V, Syllable) -> Result<V>,
    ) -> Result<V> {
        if let Some(v) = self.map.borrow().get(w) {
            return Ok(v.clone());
        }
        let sylls = w.syllables();
        if let Some(last) = w.last_syllable() {
            let unit = last.exp.signum();
            let shorter = w.times_power(last.gen, -unit);
            let hit = self.map.borrow().get(&shorter).cloned();
            if let Some(v) = hit {
                let out = step(&v, Syllable { gen: last.gen, exp: unit })?;
                self.map.borrow_mut().insert(w.clone(), out.clone());
                return Ok(out);
            }
        }
        let mut start = 0;
        let mut cur = None;
        for i in (1..sylls.len()).rev() {
            let prefix = Word::from_syllables(sylls[..i].iter().copied());
            if let Some(v) = self.map.borrow().get(&prefix) {
                start = i;
                cur = Some(v.clone());
                break;
            }
        }
        let mut cur = match cur {
            Some(v) => v,
            None => root()?,
        };
        for i in start..sylls.len() {
            cur = step(&cur, sylls[i])?;
            self.map
                .borrow_mut()
                .insert(Word::from_syllables(sylls[..=i].iter().copied()), cur.clone());
        }
        Ok(cur)
    }
}
