//! Encoded relations: the schema-order trie plus lazily loaded annotation
//! buffers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use super::column::Column;
use super::dictionary::Dictionary;
use super::ingest::RawTable;
use super::schema::{ColumnKind, CombineOp, DuplicatePolicy, Schema, TypeFamily};
use super::sort::{permute, sort_rows};
use super::trie::{build_trie, Trie};
use super::value::Value;
use crate::error::{Error, Result};
use crate::set::{Id, SetConfig};

struct AnnotationSlot {
    column: usize,
    anchor: usize,
    pending: Mutex<Option<Column>>,
    buffer: OnceLock<Column>,
    loads: AtomicUsize,
}

/// Flat row-major buffer over a fully dense two-level (or one-level) trie.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseAnnotationView {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub row_universe: (Id, Id),
    pub col_universe: (Id, Id),
}

impl DenseAnnotationView {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// Reads one annotation column by logical row.
#[derive(Clone, Copy)]
pub struct AnnotationReader<'a> {
    buffer: &'a Column,
    map: Option<&'a [u32]>,
}

impl<'a> AnnotationReader<'a> {
    #[inline]
    pub fn index(&self, row: usize) -> usize {
        match self.map {
            Some(m) => m[row] as usize,
            None => row,
        }
    }

    pub fn get(&self, row: usize) -> Value {
        self.buffer.get(self.index(row))
    }

    #[inline]
    pub fn f64_at(&self, row: usize) -> f64 {
        self.buffer.f64_at(self.index(row))
    }

    pub fn column(&self) -> &'a Column {
        self.buffer
    }

    pub fn family(&self) -> TypeFamily {
        self.buffer.family()
    }

    #[inline]
    pub fn str_at(&self, row: usize) -> &'a str {
        match self.buffer {
            Column::Str(v) => &v[self.index(row)],
            _ => "",
        }
    }
}

/// A relation after dictionary encoding. Logical rows are distinct key
/// tuples sorted in key order, so row `r` is leaf position `r` of the trie.
pub struct StoredRelation {
    schema: Schema,
    key_cols: Vec<usize>,
    keys: Vec<Vec<Id>>,
    domains: Vec<String>,
    trie: Trie,
    anns: Vec<AnnotationSlot>,
    row_pos: Vec<OnceLock<Vec<u32>>>,
    dense: Mutex<HashMap<usize, Option<Arc<DenseAnnotationView>>>>,
}

impl std::fmt::Debug for StoredRelation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StoredRelation").field("relation", &self.schema.relation).field("rows", &self.num_rows()).finish()
    }
}

impl StoredRelation {
    pub(crate) fn build(raw: RawTable, dicts: &HashMap<String, Arc<Dictionary>>, config: &SetConfig) -> Result<StoredRelation> {
        let RawTable { schema, columns } = raw;
        let rel = schema.relation.clone();
        let n = columns.first().map_or(0, Column::len);
        let key_cols = schema.key_columns();
        let domains: Vec<String> = key_cols.iter().map(|&c| schema.columns[c].domain()).collect();
        let mut encoded: Vec<Vec<Id>> = Vec::with_capacity(key_cols.len());
        for (&c, domain) in key_cols.iter().zip(&domains) {
            let dict = dicts.get(domain).ok_or_else(|| Error::Internal(format!("missing dictionary {domain}")))?;
            let col = &columns[c];
            let ids: Vec<Id> = (0..n)
                .map(|r| match col {
                    Column::Int(v) => dict.encode_int(v[r]),
                    other => dict.encode(&other.get(r)),
                })
                .collect::<Option<_>>()
                .ok_or_else(|| Error::Internal(format!("{rel}: key value missing from dictionary")))?;
            encoded.push(ids);
        }
        let refs: Vec<&[Id]> = encoded.iter().map(|v| v.as_slice()).collect();
        let order = sort_rows(&refs, (0..n as u32).collect());

        // Collapse duplicate key tuples into logical rows.
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let mut j = i + 1;
            while j < order.len() && refs.iter().all(|c| c[order[i] as usize] == c[order[j] as usize]) {
                j += 1;
            }
            if j - i > 1 && schema.on_duplicate == DuplicatePolicy::Error {
                let second = order[i + 1..j].iter().min().unwrap();
                return Err(Error::Ingest { relation: rel, row: *second as usize + 1, message: "duplicate key tuple".into() });
            }
            groups.push((i, j));
            i = j;
        }
        let reps: Vec<u32> = groups.iter().map(|&(a, _)| order[a]).collect();
        let keys: Vec<Vec<Id>> = encoded.iter().map(|c| permute(c, &reps)).collect();

        let mut ann_values = Vec::new();
        for c in schema.annotation_columns() {
            let col = &columns[c];
            let merged = if groups.len() == order.len() {
                col.gather(reps.iter().map(|&r| r as usize))
            } else {
                combine_groups(col, &order, &groups, schema.combine).map_err(|(g, m)| Error::Ingest {
                    relation: rel.clone(),
                    row: order[groups[g].0 + 1..groups[g].1].iter().min().map_or(0, |&r| r as usize + 1),
                    message: format!("column {}: {m}", schema.columns[c].name),
                })?
            };
            ann_values.push((c, merged));
        }

        let universes: Vec<(Id, Id)> = keys
            .iter()
            .map(|c| match (c.iter().min(), c.iter().max()) {
                (Some(&a), Some(&b)) => (a, b + 1),
                _ => (0, 0),
            })
            .collect();
        let key_refs: Vec<&[Id]> = keys.iter().map(|v| v.as_slice()).collect();
        let (trie, _) = build_trie(&key_refs, &universes, config);

        let anns = ann_values
            .into_iter()
            .map(|(column, values)| {
                let anchor = anchor_level(&key_refs, &values);
                AnnotationSlot { column, anchor, pending: Mutex::new(Some(values)), buffer: OnceLock::new(), loads: AtomicUsize::new(0) }
            })
            .collect();
        let depth = key_cols.len();
        Ok(StoredRelation {
            schema,
            key_cols,
            keys,
            domains,
            trie,
            anns,
            row_pos: (0..depth).map(|_| OnceLock::new()).collect(),
            dense: Mutex::new(HashMap::new()),
        })
    }

    pub fn name(&self) -> &str {
        &self.schema.relation
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn num_rows(&self) -> usize {
        self.keys.first().map_or(0, Vec::len)
    }

    pub fn trie(&self) -> &Trie {
        &self.trie
    }

    /// Schema indices of the key columns in trie level order.
    pub fn key_columns(&self) -> &[usize] {
        &self.key_cols
    }

    pub fn key_level(&self, column: usize) -> Option<usize> {
        self.key_cols.iter().position(|&c| c == column)
    }

    /// Encoded ids of a key column, by logical row.
    pub fn key_ids(&self, column: usize) -> &[Id] {
        &self.keys[self.key_level(column).expect("key column")]
    }

    pub fn key_domain(&self, column: usize) -> &str {
        &self.domains[self.key_level(column).expect("key column")]
    }

    fn slot(&self, column: usize) -> Option<&AnnotationSlot> {
        self.anns.iter().find(|s| s.column == column)
    }

    fn slot_by_name(&self, name: &str) -> Result<&AnnotationSlot> {
        self.schema.column_index(name).and_then(|c| self.slot(c)).ok_or_else(|| Error::Catalog(format!("relation {} has no annotation {name}", self.name())))
    }

    /// Level whose positions index the annotation buffer.
    pub fn annotation_anchor(&self, column: usize) -> usize {
        self.slot(column).expect("annotation column").anchor
    }

    /// Times the annotation buffer was loaded (0 or 1).
    pub fn annotation_loads(&self, column: usize) -> usize {
        self.slot(column).map_or(0, |s| s.loads.load(Ordering::Relaxed))
    }

    pub fn total_annotation_loads(&self) -> usize {
        self.anns.iter().map(|s| s.loads.load(Ordering::Relaxed)).sum()
    }

    fn buffer<'a>(&'a self, slot: &'a AnnotationSlot) -> &'a Column {
        slot.buffer.get_or_init(|| {
            let rows = slot.pending.lock().unwrap().take().expect("annotation buffer loaded once");
            slot.loads.fetch_add(1, Ordering::Relaxed);
            if slot.anchor + 1 >= self.trie.depth() {
                rows
            } else {
                // One value per anchor position, taken from its first row.
                let map = self.row_positions(slot.anchor);
                let mut first = vec![u32::MAX; self.trie.level(slot.anchor).num_positions()];
                for (r, &p) in map.iter().enumerate().rev() {
                    first[p as usize] = r as u32;
                }
                rows.gather(first.iter().map(|&r| r as usize))
            }
        })
    }

    /// Position at level `l` of every logical row.
    pub fn row_positions(&self, l: usize) -> &[u32] {
        self.row_pos[l].get_or_init(|| {
            let mut pos: Vec<u32> = (0..self.num_rows() as u32).collect();
            for level in (l + 1..self.trie.depth()).rev() {
                let parents = self.trie.parents(level);
                for p in pos.iter_mut() {
                    *p = parents[*p as usize];
                }
            }
            pos
        })
    }

    /// Row-indexed access to an annotation column, loading its buffer on
    /// first use.
    pub fn annotation(&self, column: usize) -> AnnotationReader<'_> {
        let slot = self.slot(column).expect("annotation column");
        let buffer = self.buffer(slot);
        let map = (slot.anchor + 1 < self.trie.depth()).then(|| self.row_positions(slot.anchor));
        AnnotationReader { buffer, map }
    }

    /// Value of annotation `name` at the node reached by `path`, which must
    /// extend at least to the annotation's anchor level.
    pub fn annotation_at(&self, path: &[Id], name: &str) -> Result<Value> {
        let slot = self.slot_by_name(name)?;
        if path.len() <= slot.anchor || path.len() > self.trie.depth() {
            return Err(Error::Catalog(format!(
                "{}.{name} needs a path of length {}..={}, got {}",
                self.name(),
                slot.anchor + 1,
                self.trie.depth(),
                path.len()
            )));
        }
        let mut pos = self.trie.path_position(path).ok_or_else(|| Error::Catalog(format!("path {path:?} not present in {}", self.name())))?;
        for level in (slot.anchor + 1..path.len()).rev() {
            pos = self.trie.parents(level)[pos as usize];
        }
        Ok(self.buffer(slot).get(pos as usize))
    }

    /// Row-major buffer of a numeric annotation when every trie level is
    /// fully dense and there are at most two levels.
    pub fn dense_view(&self, name: &str) -> Option<Arc<DenseAnnotationView>> {
        let slot = self.slot_by_name(name).ok()?;
        let mut cache = self.dense.lock().unwrap();
        cache
            .entry(slot.column)
            .or_insert_with(|| {
                let depth = self.trie.depth();
                if !(1..=2).contains(&depth) || !self.trie.fully_dense() || slot.anchor + 1 != depth {
                    return None;
                }
                let buf = self.buffer(slot);
                if buf.family() == TypeFamily::Str {
                    return None;
                }
                let row_universe = self.trie.level(0).universe();
                let col_universe = if depth == 2 { self.trie.level(1).universe() } else { (0, 1) };
                let values: Vec<f64> = (0..buf.len()).map(|i| buf.f64_at(i)).collect();
                Some(Arc::new(DenseAnnotationView {
                    values,
                    rows: (row_universe.1 - row_universe.0) as usize,
                    cols: (col_universe.1 - col_universe.0) as usize,
                    row_universe,
                    col_universe,
                }))
            })
            .clone()
    }

    /// Decoded value of any column at a logical row.
    pub fn value(&self, row: usize, column: usize, dicts: &HashMap<String, Arc<Dictionary>>) -> Value {
        match self.schema.columns[column].kind {
            ColumnKind::Key => dicts[self.key_domain(column)].decode(self.key_ids(column)[row]),
            ColumnKind::Annotation => self.annotation(column).get(row),
        }
    }
}

/// Smallest key prefix length that determines `values`, as a level index.
fn anchor_level(keys: &[&[Id]], values: &Column) -> usize {
    let depth = keys.len();
    let mut need = 0;
    for r in 1..values.len() {
        if values.eq_at(r - 1, r) {
            continue;
        }
        let shared = (0..depth).find(|&l| keys[l][r] != keys[l][r - 1]).unwrap_or(depth);
        need = need.max(shared + 1);
    }
    need.max(1) - 1
}

fn combine_groups(col: &Column, order: &[u32], groups: &[(usize, usize)], op: CombineOp) -> std::result::Result<Column, (usize, String)> {
    let rows = |g: &(usize, usize)| order[g.0..g.1].iter().map(|&r| r as usize);
    Ok(match col {
        Column::Int(v) => Column::Int(
            groups
                .iter()
                .map(|g| {
                    let it = rows(g).map(|r| v[r]);
                    match op {
                        CombineOp::Sum => it.sum(),
                        CombineOp::Min => it.min().unwrap(),
                        CombineOp::Max => it.max().unwrap(),
                    }
                })
                .collect(),
        ),
        Column::Float(v) => Column::Float(
            groups
                .iter()
                .map(|g| {
                    let it = rows(g).map(|r| v[r]);
                    match op {
                        CombineOp::Sum => it.sum(),
                        CombineOp::Min => it.fold(f64::INFINITY, f64::min),
                        CombineOp::Max => it.fold(f64::NEG_INFINITY, f64::max),
                    }
                })
                .collect(),
        ),
        Column::Str(v) => {
            let mut out = Vec::with_capacity(groups.len());
            for (gi, g) in groups.iter().enumerate() {
                let first = &v[order[g.0] as usize];
                if rows(g).any(|r| &v[r] != first) {
                    return Err((gi, "duplicate keys carry different string values".into()));
                }
                out.push(first.clone());
            }
            Column::Str(out)
        }
    })
}
