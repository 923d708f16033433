//! GROUP BY operators: single-level key unions and hash grouping on
//! composite keys.

use std::ops::Range;

use dashmap::DashMap;
use rayon::prelude::*;
use rustc_hash::{FxBuildHasher, FxHashMap};
use smallvec::SmallVec;

use crate::plan::{choose_group_strategy, choose_union_strategy, GroupStrategy, PlanConfig};
use crate::semiring::Semiring;
use crate::set::{Id, KeyUnionStrategy, Set, UnionAccumulator};
use crate::storage::Value;

pub type GroupKey = SmallVec<[u32; 8]>;
pub type GroupVals = SmallVec<[f64; 4]>;
pub(crate) type SharedTable = DashMap<GroupKey, GroupVals, FxBuildHasher>;

#[inline]
pub(crate) fn combine_into(acc: &mut [f64], vals: &[f64], semirings: &[Semiring]) {
    for ((a, &v), s) in acc.iter_mut().zip(vals).zip(semirings) {
        *a = s.plus(*a, v);
    }
}

/// Destination of grouped contributions inside one worker.
pub(crate) enum GroupSink<'a> {
    Local(FxHashMap<GroupKey, GroupVals>),
    Shared(&'a SharedTable),
}

impl GroupSink<'_> {
    #[inline]
    pub fn upsert(&mut self, key: GroupKey, vals: &[f64], semirings: &[Semiring]) {
        match self {
            GroupSink::Local(m) => match m.get_mut(&key) {
                Some(acc) => combine_into(acc, vals, semirings),
                None => {
                    m.insert(key, SmallVec::from_slice(vals));
                }
            },
            GroupSink::Shared(m) => {
                // Hits update in place under the shard lock; misses go through
                // the entry API so concurrent first inserts still combine.
                if let Some(mut acc) = m.get_mut(&key) {
                    combine_into(&mut acc, vals, semirings);
                    return;
                }
                m.entry(key).and_modify(|acc| combine_into(acc, vals, semirings)).or_insert_with(|| SmallVec::from_slice(vals));
            }
        }
    }

    /// The worker's table for a local sink.
    pub fn finish(self) -> Option<FxHashMap<GroupKey, GroupVals>> {
        match self {
            GroupSink::Local(m) => Some(m),
            GroupSink::Shared(_) => None,
        }
    }
}

/// Merges per-worker tables (or drains the shared one) into key order.
pub(crate) fn finish_groups(locals: Vec<FxHashMap<GroupKey, GroupVals>>, shared: Option<SharedTable>, semirings: &[Semiring]) -> Vec<(GroupKey, GroupVals)> {
    let mut out: Vec<(GroupKey, GroupVals)> = match shared {
        Some(t) => t.into_iter().collect(),
        None => {
            let mut it = locals.into_iter();
            let mut first = it.next().unwrap_or_default();
            for m in it {
                for (k, v) in m {
                    match first.get_mut(&k) {
                        Some(acc) => combine_into(acc, &v, semirings),
                        None => {
                            first.insert(k, v);
                        }
                    }
                }
            }
            first.into_iter().collect()
        }
    };
    out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Unions a stream of `(id, value)` contributions over `universe`, picking
/// the implementation from the predicted output density.
pub fn group_by_key(
    predicted_density: f64,
    universe: Range<Id>,
    semiring: Semiring,
    stream: impl IntoIterator<Item = (Id, f64)>,
    config: &PlanConfig,
) -> (KeyUnionStrategy, Set, Vec<f64>) {
    let strategy = choose_union_strategy(predicted_density, u64::from(universe.end - universe.start), config);
    let (set, values) = group_by_key_with(strategy, universe, semiring, stream);
    (strategy, set, values)
}

/// [`group_by_key`] with a fixed implementation.
pub fn group_by_key_with(strategy: KeyUnionStrategy, universe: Range<Id>, semiring: Semiring, stream: impl IntoIterator<Item = (Id, f64)>) -> (Set, Vec<f64>) {
    let mut acc = UnionAccumulator::new(universe, semiring, strategy);
    for (id, v) in stream {
        acc.add(id, v).expect("stream ids lie in the universe");
    }
    acc.finish()
}

/// Groups rows of `width` key ids (row-major in `keys`) with one value per
/// row, choosing per-worker or shared tables from the key width.
pub fn group_by_annotations(
    keys: &[u32],
    width: usize,
    vals: &[f64],
    semiring: Semiring,
    threads: usize,
    config: &PlanConfig,
) -> (GroupStrategy, Vec<(GroupKey, GroupVals)>) {
    let strategy = choose_group_strategy(width, config);
    (strategy, group_by_annotations_with(strategy, keys, width, vals, semiring, threads))
}

/// [`group_by_annotations`] with a fixed implementation.
pub fn group_by_annotations_with(
    strategy: GroupStrategy,
    keys: &[u32],
    width: usize,
    vals: &[f64],
    semiring: Semiring,
    threads: usize,
) -> Vec<(GroupKey, GroupVals)> {
    let n = vals.len();
    let threads = threads.max(1);
    let chunk = n.div_ceil(threads).max(1);
    let semirings = [semiring];
    let ranges: Vec<Range<usize>> = (0..n).step_by(chunk).map(|s| s..(s + chunk).min(n)).collect();
    let pool = super::pool(threads);
    match strategy {
        GroupStrategy::PerWorkerTables => {
            let locals: Vec<FxHashMap<GroupKey, GroupVals>> = pool.install(|| {
                ranges
                    .par_iter()
                    .map(|r| {
                        let mut sink = GroupSink::Local(FxHashMap::default());
                        for i in r.clone() {
                            sink.upsert(SmallVec::from_slice(&keys[i * width..(i + 1) * width]), &vals[i..i + 1], &semirings);
                        }
                        sink.finish().expect("local sink")
                    })
                    .collect()
            });
            finish_groups(locals, None, &semirings)
        }
        GroupStrategy::SharedConcurrentTable => {
            let table = SharedTable::with_hasher(FxBuildHasher);
            pool.install(|| {
                ranges.par_iter().for_each(|r| {
                    let mut sink = GroupSink::Shared(&table);
                    for i in r.clone() {
                        sink.upsert(SmallVec::from_slice(&keys[i * width..(i + 1) * width]), &vals[i..i + 1], &semirings);
                    }
                })
            });
            finish_groups(Vec::new(), Some(table), &semirings)
        }
    }
}

/// Maps bindings of the determining key vertices of a grouped annotation
/// to the rank of its value among the column's distinct values.
pub(crate) struct AnnotationCodes {
    pub values: Vec<Value>,
    /// Order positions of the determining vertices.
    pub depths: Vec<usize>,
    table: CodeTable,
}

enum CodeTable {
    Const(u32),
    Dense { lo: Id, codes: Vec<u32> },
    Map(FxHashMap<SmallVec<[u32; 4]>, u32>),
}

impl AnnotationCodes {
    /// `keys[c][r]` are the ids of determining column `c` at stored row `r`.
    pub fn build(keys: &[&[Id]], column_values: Vec<Value>, depths: Vec<usize>) -> AnnotationCodes {
        let mut values = column_values.clone();
        values.sort();
        values.dedup();
        let code = |v: &Value| values.binary_search(v).expect("value present") as u32;
        let table = match keys.len() {
            0 => CodeTable::Const(column_values.first().map_or(0, code)),
            1 => {
                let ids = keys[0];
                let lo = ids.iter().copied().min().unwrap_or(0);
                let hi = ids.iter().copied().max().map_or(0, |m| m + 1);
                let mut codes = vec![u32::MAX; (hi - lo) as usize];
                for (r, v) in column_values.iter().enumerate() {
                    codes[(ids[r] - lo) as usize] = code(v);
                }
                CodeTable::Dense { lo, codes }
            }
            _ => {
                let mut m = FxHashMap::default();
                for (r, v) in column_values.iter().enumerate() {
                    m.insert(keys.iter().map(|c| c[r]).collect(), code(v));
                }
                CodeTable::Map(m)
            }
        };
        AnnotationCodes { values, depths, table }
    }

    #[inline]
    pub fn code(&self, bound: &[Id]) -> u32 {
        match &self.table {
            CodeTable::Const(c) => *c,
            CodeTable::Dense { lo, codes } => codes[(bound[self.depths[0]] - lo) as usize],
            CodeTable::Map(m) => {
                let key: SmallVec<[u32; 4]> = self.depths.iter().map(|&d| bound[d]).collect();
                m[&key]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree_on_key_unions() {
        let stream: Vec<(Id, f64)> = (0..500).map(|i| ((i * 37 % 301) as Id, i as f64)).collect();
        let (a, va) = group_by_key_with(KeyUnionStrategy::BitsetArray, 0..301, Semiring::SumProduct, stream.clone());
        let (b, vb) = group_by_key_with(KeyUnionStrategy::HashTable, 0..301, Semiring::SumProduct, stream);
        assert_eq!(a.to_vec(), b.to_vec());
        assert_eq!(va, vb);
    }

    #[test]
    fn chooser_thresholds() {
        let c = PlanConfig::default();
        assert_eq!(choose_union_strategy(0.5, 1 << 24, &c), KeyUnionStrategy::BitsetArray);
        assert_eq!(choose_union_strategy(0.001, 1 << 24, &c), KeyUnionStrategy::HashTable);
        assert_eq!(choose_union_strategy(0.001, 1 << 12, &c), KeyUnionStrategy::BitsetArray);
        assert_eq!(choose_group_strategy(2, &c), GroupStrategy::PerWorkerTables);
        assert_eq!(choose_group_strategy(6, &c), GroupStrategy::SharedConcurrentTable);
    }

    #[test]
    fn table_strategies_agree() {
        let width = 2;
        let keys: Vec<u32> = (0..2000).flat_map(|i| [i % 7, i % 13]).collect();
        let vals: Vec<f64> = (0..2000).map(|i| i as f64).collect();
        let a = group_by_annotations_with(GroupStrategy::PerWorkerTables, &keys, width, &vals, Semiring::SumProduct, 4);
        let b = group_by_annotations_with(GroupStrategy::SharedConcurrentTable, &keys, width, &vals, Semiring::SumProduct, 4);
        assert_eq!(a, b);
        assert_eq!(a.len(), 91);
    }
}
