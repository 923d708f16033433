//! Tries over dictionary-encoded key tuples.
//!
//! Level `l` stores all of its sets back to back in `ids`. Level 0 holds a
//! single set; at level `l > 0`, set `p` holds the children of position `p`
//! of level `l - 1`. Sets dense enough for the bitset layout additionally
//! carry a bitset (with rank directory) so they can be probed in O(1).

use crate::error::{Error, Result};
use crate::set::{rank_directory, Bits, Id, Layout, SetConfig, SetView};

const NO_SLOT: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct Level {
    ids: Vec<Id>,
    set_start: Vec<u32>,
    universe: (Id, Id),
    slot_of_set: Vec<u32>,
    slot_base: Vec<Id>,
    slot_words: Vec<u32>,
    words: Vec<u64>,
    ranks: Vec<u32>,
}

impl Level {
    pub fn num_sets(&self) -> usize {
        self.set_start.len() - 1
    }

    pub fn num_positions(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[Id] {
        &self.ids
    }

    pub fn universe(&self) -> (Id, Id) {
        self.universe
    }

    #[inline]
    pub fn range(&self, set: u32) -> (u32, u32) {
        (self.set_start[set as usize], self.set_start[set as usize + 1])
    }

    #[inline]
    pub fn set(&self, set: u32) -> SetView<'_> {
        let (s, e) = self.range(set);
        let slot = self.slot_of_set[set as usize];
        let bits = (slot != NO_SLOT).then(|| {
            let (w0, w1) = (self.slot_words[slot as usize] as usize, self.slot_words[slot as usize + 1] as usize);
            Bits { base: self.slot_base[slot as usize], words: &self.words[w0..w1], ranks: &self.ranks[w0..w1] }
        });
        SetView { universe: self.universe, card: e - s, ids: Some(&self.ids[s as usize..e as usize]), bits }
    }

    /// Number of (sparse, dense) sets.
    pub fn census(&self) -> (usize, usize) {
        let dense = self.slot_base.len();
        (self.num_sets() - dense, dense)
    }

    fn fully_dense(&self) -> bool {
        let span = self.universe.1 - self.universe.0;
        (0..self.num_sets()).all(|s| {
            let (a, b) = self.range(s as u32);
            b - a == span
        })
    }
}

#[derive(Clone, Debug)]
pub struct Trie {
    levels: Vec<Level>,
}

/// Builds a trie from lexicographically sorted key tuples given column-major.
/// Repeated tuples share a leaf; the returned vector maps each input row to
/// its leaf position.
pub fn build_trie(columns: &[&[Id]], universes: &[(Id, Id)], config: &SetConfig) -> (Trie, Vec<u32>) {
    let depth = columns.len();
    let n = columns.first().map_or(0, |c| c.len());
    let mut ids: Vec<Vec<Id>> = vec![Vec::new(); depth];
    let mut starts: Vec<Vec<u32>> = vec![vec![0]; depth];
    let mut leaf_of_row = Vec::with_capacity(if depth == 0 { 0 } else { n });
    for i in 0..n {
        let first_diff = if i == 0 { 0 } else { (0..depth).find(|&l| columns[l][i] != columns[l][i - 1]).unwrap_or(depth) };
        for l in first_diff..depth {
            if l + 1 < depth {
                // New position at `l` opens a new child set at `l + 1`.
                if !ids[l].is_empty() {
                    let len = ids[l + 1].len() as u32;
                    starts[l + 1].push(len);
                }
            }
            ids[l].push(columns[l][i]);
        }
        if depth > 0 {
            leaf_of_row.push(ids[depth - 1].len() as u32 - 1);
        }
    }
    let mut levels: Vec<Level> = Vec::with_capacity(depth);
    for l in 0..depth {
        let mut set_start = std::mem::take(&mut starts[l]);
        let parents = if l == 0 { 1 } else { levels.last().map_or(0, Level::num_positions) };
        if parents > 0 {
            set_start.push(ids[l].len() as u32);
        }
        let universe = universes.get(l).copied().unwrap_or_else(|| span_of(&ids[l]));
        levels.push(make_level(std::mem::take(&mut ids[l]), set_start, universe, config));
    }
    (Trie { levels }, leaf_of_row)
}

fn span_of(ids: &[Id]) -> (Id, Id) {
    match (ids.iter().min(), ids.iter().max()) {
        (Some(&a), Some(&b)) => (a, b + 1),
        _ => (0, 0),
    }
}

fn make_level(ids: Vec<Id>, set_start: Vec<u32>, universe: (Id, Id), config: &SetConfig) -> Level {
    let nsets = set_start.len() - 1;
    let mut level =
        Level { ids, set_start, universe, slot_of_set: vec![NO_SLOT; nsets], slot_base: Vec::new(), slot_words: vec![0], words: Vec::new(), ranks: Vec::new() };
    let range = universe.0..universe.1;
    for s in 0..nsets {
        let (a, b) = (level.set_start[s] as usize, level.set_start[s + 1] as usize);
        if config.choose_layout(b - a, &range) != Layout::Bitset {
            continue;
        }
        let (base, words) = crate::set::pack_bits(&level.ids[a..b]);
        level.slot_of_set[s] = level.slot_base.len() as u32;
        level.slot_base.push(base);
        level.ranks.extend(rank_directory(&words));
        level.words.extend(words);
        level.slot_words.push(level.words.len() as u32);
    }
    level
}

impl Trie {
    /// A trie with no levels, standing for the single empty tuple.
    pub fn nullary() -> Trie {
        Trie { levels: Vec::new() }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Number of distinct key tuples.
    pub fn num_tuples(&self) -> usize {
        self.levels.last().map_or(1, |l| l.num_positions())
    }

    pub fn root(&self) -> SetView<'_> {
        self.levels[0].set(0)
    }

    /// Position of `id` within set `set` of level `l`.
    #[inline]
    pub fn position(&self, l: usize, set: u32, id: Id) -> Option<u32> {
        let level = &self.levels[l];
        let view = level.set(set);
        view.rank(id).map(|r| level.set_start[set as usize] + r)
    }

    /// Position at level `path.len() - 1` reached by following `path`.
    pub fn path_position(&self, path: &[Id]) -> Option<u32> {
        let mut set = 0u32;
        let mut pos = None;
        for (l, &id) in path.iter().enumerate() {
            let p = self.position(l, set, id)?;
            pos = Some(p);
            set = p;
        }
        pos
    }

    /// The child set under `prefix`; empty when the prefix is absent.
    pub fn probe(&self, prefix: &[Id], out: &mut Vec<Id>) -> Result<()> {
        out.clear();
        if prefix.len() >= self.depth() {
            return Err(Error::Catalog(format!("prefix of length {} exceeds trie depth {}", prefix.len(), self.depth())));
        }
        let set = if prefix.is_empty() {
            0
        } else {
            match self.path_position(prefix) {
                Some(p) => p,
                None => return Ok(()),
            }
        };
        out.extend_from_slice(self.levels[prefix.len()].set(set).ids.unwrap_or(&[]));
        Ok(())
    }

    /// Whether every set spans its level's whole universe.
    pub fn fully_dense(&self) -> bool {
        !self.levels.is_empty() && self.levels.iter().all(Level::fully_dense)
    }

    /// Per-level (sparse, dense) set counts.
    pub fn census(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(Level::census).collect()
    }

    /// Visits every key tuple in order with its leaf position.
    pub fn for_each_path(&self, mut f: impl FnMut(&[Id], u32)) {
        if self.levels.is_empty() {
            return;
        }
        let mut path = Vec::with_capacity(self.depth());
        self.walk(0, 0, &mut path, &mut f);
    }

    fn walk(&self, l: usize, set: u32, path: &mut Vec<Id>, f: &mut impl FnMut(&[Id], u32)) {
        let level = &self.levels[l];
        let (s, e) = level.range(set);
        for p in s..e {
            path.push(level.ids[p as usize]);
            if l + 1 == self.depth() {
                f(path, p);
            } else {
                self.walk(l + 1, p, path, f);
            }
            path.pop();
        }
    }

    /// `parents[p]` is the position at level `l - 1` above position `p` of `l`.
    pub fn parents(&self, l: usize) -> Vec<u32> {
        let level = &self.levels[l];
        let mut out = vec![0u32; level.num_positions()];
        for s in 0..level.num_sets() {
            let (a, b) = level.range(s as u32);
            out[a as usize..b as usize].fill(s as u32);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(rows: &[(Id, Id)]) -> (Trie, Vec<u32>) {
        let a: Vec<Id> = rows.iter().map(|r| r.0).collect();
        let b: Vec<Id> = rows.iter().map(|r| r.1).collect();
        build_trie(&[&a, &b], &[], &SetConfig::default())
    }

    #[test]
    fn singleton_trie() {
        let (t, leaf) = build(&[(0, 0)]);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.root().to_vec(), vec![0]);
        assert_eq!(t.level(1).set(0).to_vec(), vec![0]);
        assert_eq!(leaf, vec![0]);
    }

    #[test]
    fn identity_structure() {
        let rows: Vec<(Id, Id)> = (0..4).map(|i| (i, i)).collect();
        let (t, _) = build(&rows);
        assert_eq!(t.root().to_vec(), vec![0, 1, 2, 3]);
        let mut out = Vec::new();
        for i in 0..4 {
            t.probe(&[i], &mut out).unwrap();
            assert_eq!(out, vec![i]);
        }
        t.probe(&[9], &mut out).unwrap();
        assert!(out.is_empty());
        assert!(t.probe(&[0, 0], &mut out).is_err());
        assert_eq!(t.path_position(&[2, 2]), Some(2));
        assert_eq!(t.path_position(&[0, 1]), None);
    }

    #[test]
    fn duplicates_share_leaves() {
        let (t, leaf) = build(&[(0, 1), (0, 1), (0, 2), (3, 0)]);
        assert_eq!(t.num_tuples(), 3);
        assert_eq!(leaf, vec![0, 0, 1, 2]);
        assert_eq!(t.parents(1), vec![0, 0, 1]);
    }

    #[test]
    fn dense_sets_get_bitsets() {
        let rows: Vec<(Id, Id)> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
        let (t, _) = build(&rows);
        assert!(t.fully_dense());
        assert_eq!(t.census(), vec![(0, 1), (0, 3)]);
        assert_eq!(t.level(1).set(2).layout(), Layout::Bitset);
        assert_eq!(t.position(1, 2, 1), Some(7));
    }
}
