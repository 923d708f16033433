//! Physical set layouts over dictionary ids.
//!
//! A set is either a sorted list of 32-bit ids (`uint`) or a bitset over the
//! id universe (`bs`). The executor never materializes owned [`Set`]s in its
//! inner loops; it works on borrowed [`SetView`]s handed out by trie levels,
//! which may carry both representations at once.

mod accumulator;
mod cost;
mod kernels;

pub use accumulator::{KeyUnionStrategy, UnionAccumulator};
pub use cost::LayoutCostTable;
pub(crate) use kernels::gallop_to;
pub use kernels::{intersect_many, intersect_uint_bits, intersect_uint_uint, IntersectScratch};

use std::fmt;
use std::ops::Range;

use thiserror::Error;

/// Dictionary id of a key value.
pub type Id = u32;

/// Physical layout of a set. `Bitset` sorts before `Uint`, which is the order
/// multi-way intersections consume their operands in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layout {
    Bitset,
    Uint,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layout::Bitset => f.write_str("bs"),
            Layout::Uint => f.write_str("uint"),
        }
    }
}

/// Construction and dispatch knobs for set kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetConfig {
    /// Minimum `cardinality / universe size` for the bitset layout.
    pub density_threshold: f64,
    /// `uint ∩ uint` switches from merging to galloping above this size ratio.
    pub gallop_ratio: usize,
}

impl Default for SetConfig {
    fn default() -> Self {
        SetConfig { density_threshold: 1.0 / 32.0, gallop_ratio: 32 }
    }
}

impl SetConfig {
    pub fn choose_layout(&self, cardinality: usize, universe: &Range<Id>) -> Layout {
        let span = universe.end.saturating_sub(universe.start) as f64;
        if cardinality > 0 && span > 0.0 && cardinality as f64 / span >= self.density_threshold {
            Layout::Bitset
        } else {
            Layout::Uint
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SetError {
    #[error("set values must be strictly increasing (offending position {position})")]
    Unsorted { position: usize },
    #[error("id {id} lies outside universe [{lo}, {hi})")]
    OutOfUniverse { id: Id, lo: Id, hi: Id },
}

/// Borrowed bitset payload. `words[0]` covers ids `base..base + 64`.
#[derive(Clone, Copy, Debug)]
pub struct Bits<'a> {
    pub base: Id,
    pub words: &'a [u64],
    /// `ranks[w]` is the number of set bits in `words[..w]`.
    pub ranks: &'a [u32],
}

impl<'a> Bits<'a> {
    #[inline]
    pub fn contains(&self, id: Id) -> bool {
        if id < self.base {
            return false;
        }
        let off = (id - self.base) as usize;
        match self.words.get(off >> 6) {
            Some(w) => (w >> (off & 63)) & 1 == 1,
            None => false,
        }
    }

    /// Number of members strictly below `id`. Only meaningful for members.
    #[inline]
    pub fn rank(&self, id: Id) -> u32 {
        let off = (id - self.base) as usize;
        let w = off >> 6;
        let mask = (1u64 << (off & 63)) - 1;
        self.ranks[w] + (self.words[w] & mask).count_ones()
    }

    /// One past the last id the words can represent.
    pub fn end(&self) -> u64 {
        self.base as u64 + 64 * self.words.len() as u64
    }

    pub fn iter(&self) -> BitIter<'a> {
        BitIter { base: self.base, words: self.words, word: 0, current: self.words.first().copied().unwrap_or(0) }
    }
}

pub struct BitIter<'a> {
    base: Id,
    words: &'a [u64],
    word: usize,
    current: u64,
}

impl<'a> Iterator for BitIter<'a> {
    type Item = Id;

    #[inline]
    fn next(&mut self) -> Option<Id> {
        loop {
            if self.current != 0 {
                let tz = self.current.trailing_zeros();
                self.current &= self.current - 1;
                return Some(self.base + (self.word as u32) * 64 + tz);
            }
            self.word += 1;
            if self.word >= self.words.len() {
                return None;
            }
            self.current = self.words[self.word];
        }
    }
}

/// A borrowed set. At least one of `ids` and `bits` is present; trie levels
/// supply both for dense sets so iteration never has to scan words.
#[derive(Clone, Copy, Debug)]
pub struct SetView<'a> {
    pub universe: (Id, Id),
    pub card: u32,
    pub ids: Option<&'a [u32]>,
    pub bits: Option<Bits<'a>>,
}

impl<'a> SetView<'a> {
    pub fn layout(&self) -> Layout {
        if self.bits.is_some() {
            Layout::Bitset
        } else {
            Layout::Uint
        }
    }

    pub fn len(&self) -> usize {
        self.card as usize
    }

    pub fn is_empty(&self) -> bool {
        self.card == 0
    }

    pub fn contains(&self, id: Id) -> bool {
        match (&self.bits, self.ids) {
            (Some(b), _) => b.contains(id),
            (None, Some(ids)) => ids.binary_search(&id).is_ok(),
            (None, None) => false,
        }
    }

    /// Position of a member within the set's sorted order.
    pub fn rank(&self, id: Id) -> Option<u32> {
        match (&self.bits, self.ids) {
            (Some(b), _) => b.contains(id).then(|| b.rank(id)),
            (None, Some(ids)) => ids.binary_search(&id).ok().map(|p| p as u32),
            (None, None) => None,
        }
    }

    pub fn for_each(&self, mut f: impl FnMut(Id)) {
        match (self.ids, &self.bits) {
            (Some(ids), _) => ids.iter().for_each(|&x| f(x)),
            (None, Some(b)) => b.iter().for_each(f),
            (None, None) => {}
        }
    }

    pub fn to_vec(&self) -> Vec<Id> {
        let mut v = Vec::with_capacity(self.len());
        self.for_each(|x| v.push(x));
        v
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Uint(Vec<Id>),
    Bitset { base: Id, words: Vec<u64>, ranks: Vec<u32>, card: u32 },
}

/// An owned, immutable set of ids in one of the two layouts.
#[derive(Clone, Debug)]
pub struct Set {
    lo: Id,
    hi: Id,
    repr: Repr,
}

impl PartialEq for Set {
    /// Logical equality: same universe and same members, regardless of layout.
    fn eq(&self, other: &Self) -> bool {
        self.universe() == other.universe() && self.to_vec() == other.to_vec()
    }
}

/// Builds a set, picking the layout from the configured density threshold.
pub fn build_set(values: &[Id], universe: Range<Id>, config: &SetConfig) -> Result<Set, SetError> {
    let layout = config.choose_layout(values.len(), &universe);
    Set::with_layout(values, universe, layout)
}

impl Set {
    pub fn empty(universe: Range<Id>) -> Set {
        Set { lo: universe.start, hi: universe.end.max(universe.start), repr: Repr::Uint(Vec::new()) }
    }

    /// Builds a set in an explicitly requested layout.
    pub fn with_layout(values: &[Id], universe: Range<Id>, layout: Layout) -> Result<Set, SetError> {
        let (lo, hi) = (universe.start, universe.end.max(universe.start));
        for (i, &v) in values.iter().enumerate() {
            if v < lo || v >= hi {
                return Err(SetError::OutOfUniverse { id: v, lo, hi });
            }
            if i > 0 && values[i - 1] >= v {
                return Err(SetError::Unsorted { position: i });
            }
        }
        let repr = match layout {
            Layout::Uint => Repr::Uint(values.to_vec()),
            Layout::Bitset => {
                let (base, words) = pack_bits(values);
                let ranks = rank_directory(&words);
                Repr::Bitset { base, words, ranks, card: values.len() as u32 }
            }
        };
        Ok(Set { lo, hi, repr })
    }

    pub fn universe(&self) -> Range<Id> {
        self.lo..self.hi
    }

    pub fn layout(&self) -> Layout {
        match self.repr {
            Repr::Uint(_) => Layout::Uint,
            Repr::Bitset { .. } => Layout::Bitset,
        }
    }

    pub fn cardinality(&self) -> usize {
        match &self.repr {
            Repr::Uint(v) => v.len(),
            Repr::Bitset { card, .. } => *card as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cardinality() == 0
    }

    pub fn view(&self) -> SetView<'_> {
        match &self.repr {
            Repr::Uint(v) => SetView { universe: (self.lo, self.hi), card: v.len() as u32, ids: Some(v), bits: None },
            Repr::Bitset { base, words, ranks, card } => {
                SetView { universe: (self.lo, self.hi), card: *card, ids: None, bits: Some(Bits { base: *base, words, ranks }) }
            }
        }
    }

    pub fn contains(&self, id: Id) -> bool {
        self.view().contains(id)
    }

    pub fn to_vec(&self) -> Vec<Id> {
        self.view().to_vec()
    }

    /// Intersection with kernel dispatch on the layout pair. `bs ∩ bs` stays a
    /// bitset; every other pair yields a `uint` set.
    pub fn intersect(&self, other: &Set, config: &SetConfig) -> Set {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi).max(lo);
        match (&self.repr, &other.repr) {
            (Repr::Bitset { .. }, Repr::Bitset { .. }) => {
                let (a, b) = (self.view().bits.unwrap(), other.view().bits.unwrap());
                let mut words = Vec::new();
                let base = kernels::and_bits(&a, &b, &mut words);
                let card = words.iter().map(|w| w.count_ones()).sum();
                let ranks = rank_directory(&words);
                Set { lo, hi, repr: Repr::Bitset { base, words, ranks, card } }
            }
            _ => {
                let mut out = Vec::new();
                let mut scratch = IntersectScratch::default();
                intersect_many(&[self.view(), other.view()], config, &mut scratch, &mut out);
                Set { lo, hi, repr: Repr::Uint(out) }
            }
        }
    }
}

/// Packs sorted ids into 64-bit words starting at the word containing the
/// first id.
pub(crate) fn pack_bits(values: &[Id]) -> (Id, Vec<u64>) {
    let (Some(&first), Some(&last)) = (values.first(), values.last()) else {
        return (0, Vec::new());
    };
    let base = first & !63;
    let mut words = vec![0u64; ((last - base) as usize >> 6) + 1];
    for &v in values {
        let off = (v - base) as usize;
        words[off >> 6] |= 1 << (off & 63);
    }
    (base, words)
}

pub(crate) fn rank_directory(words: &[u64]) -> Vec<u32> {
    let mut ranks = Vec::with_capacity(words.len());
    let mut acc = 0u32;
    for w in words {
        ranks.push(acc);
        acc += w.count_ones();
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SetConfig {
        SetConfig::default()
    }

    #[test]
    fn empty_set_is_sparse() {
        let s = build_set(&[], 0..8, &cfg()).unwrap();
        assert_eq!(s.layout(), Layout::Uint);
        assert_eq!(s.cardinality(), 0);
    }

    #[test]
    fn full_universe_is_dense() {
        let vals: Vec<Id> = (0..8).collect();
        let s = build_set(&vals, 0..8, &cfg()).unwrap();
        assert_eq!(s.layout(), Layout::Bitset);
        assert_eq!(s.cardinality(), 8);
        assert_eq!(s.to_vec(), vals);
    }

    #[test]
    fn singleton_in_large_universe_is_sparse() {
        let s = build_set(&[5], 0..1024, &cfg()).unwrap();
        assert_eq!(s.layout(), Layout::Uint);
    }

    #[test]
    fn threshold_is_inclusive() {
        // 32 of 1024 is exactly 1/32.
        let vals: Vec<Id> = (0..32).map(|x| x * 32).collect();
        assert_eq!(build_set(&vals, 0..1024, &cfg()).unwrap().layout(), Layout::Bitset);
        assert_eq!(build_set(&vals[..31], 0..1024, &cfg()).unwrap().layout(), Layout::Uint);
    }

    #[test]
    fn rejects_unsorted_and_duplicates() {
        assert_eq!(build_set(&[3, 1], 0..8, &cfg()), Err(SetError::Unsorted { position: 1 }));
        assert_eq!(build_set(&[1, 1], 0..8, &cfg()), Err(SetError::Unsorted { position: 1 }));
        assert_eq!(build_set(&[9], 0..8, &cfg()), Err(SetError::OutOfUniverse { id: 9, lo: 0, hi: 8 }));
    }

    #[test]
    fn small_intersection() {
        let a = build_set(&[1, 3, 5], 0..16, &cfg()).unwrap();
        let b = build_set(&[3, 5, 7], 0..16, &cfg()).unwrap();
        assert_eq!(a.intersect(&b, &cfg()).to_vec(), vec![3, 5]);
    }

    #[test]
    fn full_bitset_is_identity() {
        let full: Vec<Id> = (0..200).collect();
        let full = build_set(&full, 0..200, &cfg()).unwrap();
        let x = Set::with_layout(&[0, 7, 63, 64, 150, 199], 0..200, Layout::Uint).unwrap();
        assert_eq!(full.intersect(&x, &cfg()).to_vec(), x.to_vec());
        let xb = Set::with_layout(&x.to_vec(), 0..200, Layout::Bitset).unwrap();
        assert_eq!(full.intersect(&xb, &cfg()).to_vec(), x.to_vec());
    }

    #[test]
    fn disjoint_universes_give_empty() {
        let a = build_set(&[1, 2, 3], 0..10, &cfg()).unwrap();
        let b = build_set(&[11, 12], 10..20, &cfg()).unwrap();
        let c = a.intersect(&b, &cfg());
        assert!(c.is_empty());
        assert_eq!(c.universe(), 10..10);
    }

    #[test]
    fn bitset_rank_matches_position() {
        let vals: Vec<Id> = vec![64, 65, 100, 127, 128, 300];
        let s = Set::with_layout(&vals, 0..400, Layout::Bitset).unwrap();
        for (i, &v) in vals.iter().enumerate() {
            assert_eq!(s.view().rank(v), Some(i as u32));
        }
        assert_eq!(s.view().rank(66), None);
    }
}
