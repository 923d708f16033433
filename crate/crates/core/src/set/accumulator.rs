//! Single-level key union with semiring accumulation.

use rustc_hash::FxHashMap;

use super::{Id, Layout, Set, SetError, SetView};
use crate::semiring::Semiring;

/// Physical strategy of a key union.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KeyUnionStrategy {
    /// Bitset of touched keys plus a value array spanning the universe.
    BitsetArray,
    /// Hash map upserts.
    HashTable,
}

impl std::fmt::Display for KeyUnionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KeyUnionStrategy::BitsetArray => "bitset_array",
            KeyUnionStrategy::HashTable => "hash_table",
        })
    }
}

enum Inner {
    Bitset { words: Vec<u64>, values: Vec<f64>, dirty: Vec<u32> },
    Hash(FxHashMap<Id, f64>),
}

/// Unions one materialized key level, summing contributions per key with the
/// semiring's `⊕`. Bound to a fixed universe; reusable after [`drain`].
///
/// [`drain`]: UnionAccumulator::drain
pub struct UnionAccumulator {
    lo: Id,
    hi: Id,
    semiring: Semiring,
    inner: Inner,
}

impl UnionAccumulator {
    pub fn new(universe: std::ops::Range<Id>, semiring: Semiring, strategy: KeyUnionStrategy) -> Self {
        let (lo, hi) = (universe.start, universe.end.max(universe.start));
        let span = (hi - lo) as usize;
        let inner = match strategy {
            KeyUnionStrategy::BitsetArray => Inner::Bitset { words: vec![0; span.div_ceil(64)], values: vec![semiring.zero(); span], dirty: Vec::new() },
            KeyUnionStrategy::HashTable => Inner::Hash(FxHashMap::default()),
        };
        UnionAccumulator { lo, hi, semiring, inner }
    }

    pub fn strategy(&self) -> KeyUnionStrategy {
        match self.inner {
            Inner::Bitset { .. } => KeyUnionStrategy::BitsetArray,
            Inner::Hash(_) => KeyUnionStrategy::HashTable,
        }
    }

    pub fn universe(&self) -> std::ops::Range<Id> {
        self.lo..self.hi
    }

    pub fn len(&self) -> usize {
        match &self.inner {
            Inner::Bitset { words, .. } => words.iter().map(|w| w.count_ones() as usize).sum(),
            Inner::Hash(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds one contribution without bounds checking beyond a debug assert.
    #[inline]
    pub(crate) fn add_unchecked(&mut self, id: Id, value: f64) {
        debug_assert!(id >= self.lo && id < self.hi);
        let s = self.semiring;
        match &mut self.inner {
            Inner::Bitset { words, values, dirty } => {
                let off = (id - self.lo) as usize;
                let w = &mut words[off >> 6];
                if *w == 0 {
                    dirty.push((off >> 6) as u32);
                }
                *w |= 1 << (off & 63);
                values[off] = s.plus(values[off], value);
            }
            Inner::Hash(m) => {
                m.entry(id).and_modify(|v| *v = s.plus(*v, value)).or_insert(value);
            }
        }
    }

    pub fn add(&mut self, id: Id, value: f64) -> Result<(), SetError> {
        if id < self.lo || id >= self.hi {
            return Err(SetError::OutOfUniverse { id, lo: self.lo, hi: self.hi });
        }
        self.add_unchecked(id, value);
        Ok(())
    }

    /// Unions `set` into the accumulator; `values[i]` is the contribution of
    /// the set's `i`-th member.
    pub fn union_accumulate(&mut self, set: &SetView<'_>, values: &[f64]) -> Result<(), SetError> {
        assert_eq!(set.len(), values.len(), "one value per set member");
        let mut i = 0;
        let mut err = None;
        set.for_each(|id| {
            if err.is_none() {
                if let Err(e) = self.add(id, values[i]) {
                    err = Some(e);
                }
            }
            i += 1;
        });
        err.map_or(Ok(()), Err)
    }

    /// Moves the accumulated `(key, value)` pairs, in key order, into the
    /// output vectors and resets the accumulator.
    pub fn drain(&mut self, keys: &mut Vec<Id>, vals: &mut Vec<f64>) {
        let zero = self.semiring.zero();
        match &mut self.inner {
            Inner::Bitset { words, values, dirty } => {
                let full_scan = dirty.len() * 8 > words.len();
                let mut visit = |w: usize, words: &mut [u64], values: &mut [f64]| {
                    let mut bits = words[w];
                    while bits != 0 {
                        let off = w * 64 + bits.trailing_zeros() as usize;
                        bits &= bits - 1;
                        keys.push(self.lo + off as Id);
                        vals.push(values[off]);
                        values[off] = zero;
                    }
                    words[w] = 0;
                };
                if full_scan {
                    for w in 0..words.len() {
                        if words[w] != 0 {
                            visit(w, words, values);
                        }
                    }
                } else {
                    dirty.sort_unstable();
                    for i in 0..dirty.len() {
                        visit(dirty[i] as usize, words, values);
                    }
                }
                dirty.clear();
            }
            Inner::Hash(m) => {
                let start = keys.len();
                keys.extend(m.keys().copied());
                keys[start..].sort_unstable();
                vals.extend(keys[start..].iter().map(|k| m[k]));
                m.clear();
            }
        }
    }

    /// Consumes the accumulator into its key set and aligned values.
    pub fn finish(mut self) -> (Set, Vec<f64>) {
        let mut keys = Vec::new();
        let mut vals = Vec::new();
        let universe = self.universe();
        let strategy = self.strategy();
        self.drain(&mut keys, &mut vals);
        let set = match strategy {
            KeyUnionStrategy::BitsetArray if !keys.is_empty() => Set::with_layout(&keys, universe, Layout::Bitset),
            _ => Set::with_layout(&keys, universe, Layout::Uint),
        }
        .expect("drained keys are sorted and in range");
        (set, vals)
    }
}
