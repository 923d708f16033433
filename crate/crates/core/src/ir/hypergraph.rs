//! Translation of a resolved query into an annotated hypergraph.
//!
//! Join-equated key columns collapse into one vertex. Every FROM item
//! becomes an edge over the vertices of its referenced key columns; other
//! key columns are summed out inside the edge. Each aggregate becomes a
//! pass with its own semiring, and its expression is split into per-edge
//! factors where that is sound.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::ast::{AggFunc, BinOp, CmpOp};
use super::expr::{ColRef, Expr};
use super::query::QueryIr;
use crate::error::{Error, Result};
use crate::semiring::Semiring;
use crate::storage::{ColumnKind, Database, Value};

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub name: String,
    pub members: Vec<ColRef>,
    pub domain: String,
    /// Key vertex that appears in the output.
    pub output: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationFilter {
    pub column: usize,
    pub op: CmpOp,
    pub value: Value,
}

impl AnnotationFilter {
    pub fn matches(&self, v: &Value) -> bool {
        let ord = v.cmp(&self.value);
        match self.op {
            CmpOp::Eq => ord.is_eq(),
            CmpOp::Lt => ord.is_lt(),
            CmpOp::Gt => ord.is_gt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeySelection {
    pub vertex: usize,
    pub edge: usize,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// FROM-list alias.
    pub name: String,
    pub relation: String,
    /// FROM-list index.
    pub rel: usize,
    /// Distinct vertices, in the relation's key order.
    pub vertices: Vec<usize>,
    /// Schema column read for each entry of `vertices`.
    pub columns: Vec<usize>,
    /// Further key columns equated with a vertex already in `vertices`:
    /// `(column, vertex)`.
    pub self_equal: Vec<(usize, usize)>,
    pub filters: Vec<AnnotationFilter>,
}

impl Edge {
    pub fn has_selection(&self, hg: &Hypergraph, edge: usize) -> bool {
        !self.filters.is_empty() || hg.key_selections.iter().any(|s| s.edge == edge)
    }

    pub fn is_nullary(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// An expression over several relations that cannot be split into
/// per-relation factors; its edges must share one plan node.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub edges: Vec<usize>,
    pub expr: Expr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pass {
    pub aggregate: usize,
    pub func: AggFunc,
    pub semiring: Semiring,
    /// Per-edge annotation; `None` is the semiring identity.
    pub edge_exprs: Vec<Option<Expr>>,
    pub bags: Vec<Bag>,
}

impl Pass {
    pub fn bag_of(&self, edge: usize) -> Option<usize> {
        self.bags.iter().position(|b| b.edges.contains(&edge))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroupColumn {
    Key(usize),
    /// Annotation column of `edge`, functionally determined by the
    /// `determinants` vertices on the stored data.
    Annotation {
        edge: usize,
        column: usize,
        determinants: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypergraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub passes: Vec<Pass>,
    /// One entry per GROUP BY column of the query.
    pub group: Vec<GroupColumn>,
    pub key_selections: Vec<KeySelection>,
    /// Groups of edges that must share a plan node.
    pub colocate: Vec<Vec<usize>>,
    /// Annotation columns read outside aggregate expressions, with their
    /// owning edge.
    pub meta: Vec<(ColRef, usize)>,
    /// Key vertices absent from the output, summed out during the join.
    pub alpha: Vec<usize>,
}

impl Hypergraph {
    /// Grouping by annotation values, which needs hash grouping at the root.
    pub fn group_mode(&self) -> bool {
        self.group.iter().any(|g| matches!(g, GroupColumn::Annotation { .. }))
    }

    pub fn output_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| self.vertices[v].output).collect()
    }

    /// Vertices whose bindings distinguish output groups.
    pub fn group_relevant(&self) -> BTreeSet<usize> {
        let mut out: BTreeSet<usize> = self.output_vertices().into_iter().collect();
        for g in &self.group {
            if let GroupColumn::Annotation { determinants, .. } = g {
                out.extend(determinants.iter().copied());
            }
        }
        out
    }

    pub fn vertex_edges(&self, v: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].vertices.contains(&v)).collect()
    }

    pub fn vertex_index(&self, name: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.name == name)
    }

    /// Key selections on `vertex`, which all must hold.
    pub fn selections_on(&self, vertex: usize) -> impl Iterator<Item = &KeySelection> {
        self.key_selections.iter().filter(move |s| s.vertex == vertex)
    }

    pub fn build(ir: &QueryIr, db: &Database) -> Result<Hypergraph> {
        Builder::new(ir).build(db)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let p = self.parent[x];
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.parent[x] = root;
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

struct Builder<'a> {
    ir: &'a QueryIr,
    /// Dense index of every (rel, col) pair.
    slots: Vec<ColRef>,
    slot_of: HashMap<ColRef, usize>,
}

impl<'a> Builder<'a> {
    fn new(ir: &'a QueryIr) -> Builder<'a> {
        let mut slots = Vec::new();
        for (rel, r) in ir.relations.iter().enumerate() {
            for col in r.schema.key_columns() {
                slots.push(ColRef { rel, col });
            }
        }
        let slot_of = slots.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Builder { ir, slots, slot_of }
    }

    fn build(self, db: &Database) -> Result<Hypergraph> {
        let ir = self.ir;
        let nrel = ir.relations.len();
        let mut uf = UnionFind { parent: (0..self.slots.len()).collect() };
        let mut referenced = vec![false; self.slots.len()];
        for j in &ir.joins {
            let (a, b) = (self.slot_of[&j.left], self.slot_of[&j.right]);
            uf.union(a, b);
            referenced[a] = true;
            referenced[b] = true;
        }
        for s in ir.selections.iter().filter(|s| s.on_key) {
            referenced[self.slot_of[&s.column]] = true;
        }
        for g in &ir.group_by {
            if ir.kind(*g) == ColumnKind::Key {
                referenced[self.slot_of[g]] = true;
            }
        }

        let passes_raw: Vec<(usize, Vec<(BTreeSet<usize>, Expr)>, BinOp)> = ir
            .aggregates
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let op = match a.func {
                    AggFunc::Min | AggFunc::Max => BinOp::Add,
                    _ => BinOp::Mul,
                };
                let parts = match (&a.expr, a.func) {
                    (None, _) | (_, AggFunc::Count) => Vec::new(),
                    (Some(e), AggFunc::Min | AggFunc::Max) => e.terms(),
                    (Some(e), _) => e.factors(),
                };
                (i, parts.into_iter().map(|p| (p.relations(), p)).collect(), op)
            })
            .collect();

        // Relations joined by one non-factorizable part form a bag.
        let mut bag_uf = UnionFind { parent: (0..nrel).collect() };
        let mut in_bag = vec![false; nrel];
        for (_, parts, _) in &passes_raw {
            for (rels, _) in parts {
                if rels.len() > 1 {
                    let first = *rels.iter().next().unwrap();
                    for &r in rels {
                        bag_uf.union(first, r);
                        in_bag[r] = true;
                    }
                }
            }
        }
        // Bag members keep every key so rows pair up exactly.
        for (i, c) in self.slots.iter().enumerate() {
            if in_bag[c.rel] {
                referenced[i] = true;
            }
        }

        // Annotation group columns need their determining keys bound.
        let mut annotation_groups: Vec<Option<Vec<usize>>> = vec![None; ir.group_by.len()];
        for (gi, g) in ir.group_by.iter().enumerate() {
            if ir.kind(*g) != ColumnKind::Annotation {
                continue;
            }
            let stored = db.relation(&ir.relations[g.rel].relation).ok_or_else(|| Error::Internal("relation vanished".into()))?;
            let keys = stored.key_columns().to_vec();
            let is_ref = |c: usize| referenced[self.slot_of[&ColRef { rel: g.rel, col: c }]];
            let det = determining_keys(stored, g.col, &keys, &is_ref);
            for &c in &det {
                referenced[self.slot_of[&ColRef { rel: g.rel, col: c }]] = true;
            }
            annotation_groups[gi] = Some(det);
        }

        // Vertices in first-appearance order.
        let mut vertex_of_root: BTreeMap<usize, usize> = BTreeMap::new();
        let mut vertices: Vec<Vertex> = Vec::new();
        let mut vertex_of_slot = vec![usize::MAX; self.slots.len()];
        for (i, &c) in self.slots.iter().enumerate() {
            if !referenced[i] {
                continue;
            }
            let root = uf.find(i);
            let v = *vertex_of_root.entry(root).or_insert_with(|| {
                vertices.push(Vertex { name: String::new(), members: Vec::new(), domain: ir.domain(c), output: false });
                vertices.len() - 1
            });
            vertices[v].members.push(c);
            vertex_of_slot[i] = v;
        }
        name_vertices(ir, &mut vertices);
        for g in &ir.group_by {
            if ir.kind(*g) == ColumnKind::Key {
                vertices[vertex_of_slot[self.slot_of[g]]].output = true;
            }
        }

        let mut edges: Vec<Edge> = ir
            .relations
            .iter()
            .enumerate()
            .map(|(rel, r)| Edge {
                name: r.alias.clone(),
                relation: r.relation.clone(),
                rel,
                vertices: Vec::new(),
                columns: Vec::new(),
                self_equal: Vec::new(),
                filters: Vec::new(),
            })
            .collect();
        for (i, &c) in self.slots.iter().enumerate() {
            let v = vertex_of_slot[i];
            if v == usize::MAX {
                continue;
            }
            let e = &mut edges[c.rel];
            if e.vertices.contains(&v) {
                e.self_equal.push((c.col, v));
            } else {
                e.vertices.push(v);
                e.columns.push(c.col);
            }
        }

        let mut key_selections = Vec::new();
        let mut meta: Vec<(ColRef, usize)> = Vec::new();
        for s in &ir.selections {
            if s.on_key {
                key_selections.push(KeySelection { vertex: vertex_of_slot[self.slot_of[&s.column]], edge: s.column.rel, value: s.value.clone() });
            } else {
                edges[s.column.rel].filters.push(AnnotationFilter { column: s.column.col, op: s.op, value: s.value.clone() });
                if !meta.iter().any(|(c, _)| *c == s.column) {
                    meta.push((s.column, s.column.rel));
                }
            }
        }

        let mut group = Vec::new();
        for (gi, g) in ir.group_by.iter().enumerate() {
            match &annotation_groups[gi] {
                None => group.push(GroupColumn::Key(vertex_of_slot[self.slot_of[g]])),
                Some(det) => {
                    let determinants = det.iter().map(|&c| vertex_of_slot[self.slot_of[&ColRef { rel: g.rel, col: c }]]).collect();
                    group.push(GroupColumn::Annotation { edge: g.rel, column: g.col, determinants });
                    if !meta.iter().any(|(c, _)| c == g) {
                        meta.push((*g, g.rel));
                    }
                }
            }
        }

        let mut passes = Vec::new();
        for (i, parts, op) in passes_raw {
            let agg = &ir.aggregates[i];
            let semiring = match agg.func {
                AggFunc::Sum => Semiring::SumProduct,
                AggFunc::Count => Semiring::Count,
                AggFunc::Min => Semiring::MinPlus,
                AggFunc::Max => Semiring::MaxPlus,
            };
            let mut per_edge: Vec<Vec<Expr>> = vec![Vec::new(); nrel];
            let mut per_bag: BTreeMap<usize, (BTreeSet<usize>, Vec<Expr>)> = BTreeMap::new();
            let mut constants = Vec::new();
            for (rels, part) in parts {
                match rels.iter().next() {
                    None => constants.push(part),
                    Some(&r) if in_bag[r] => {
                        let entry = per_bag.entry(bag_uf.find(r)).or_default();
                        entry.0.extend(rels.iter().copied());
                        entry.1.push(part);
                    }
                    Some(&r) => per_edge[r].push(part),
                }
            }
            // Constants ride on the first relation.
            if !constants.is_empty() {
                if in_bag[0] {
                    let entry = per_bag.entry(bag_uf.find(0)).or_default();
                    entry.0.insert(0);
                    entry.1.extend(constants);
                } else {
                    per_edge[0].extend(constants);
                }
            }
            let edge_exprs = per_edge.into_iter().map(|parts| Expr::combine(parts, op)).collect();
            let bags = per_bag
                .into_values()
                .map(|(edges, parts)| Bag { edges: edges.into_iter().collect(), expr: Expr::combine(parts, op).expect("nonempty bag") })
                .collect();
            passes.push(Pass { aggregate: i, func: agg.func, semiring, edge_exprs, bags });
        }

        let mut colocate: Vec<Vec<usize>> = Vec::new();
        for p in &passes {
            for b in &p.bags {
                if b.edges.len() > 1 && !colocate.contains(&b.edges) {
                    colocate.push(b.edges.clone());
                }
            }
        }

        let alpha = (0..vertices.len()).filter(|&v| !vertices[v].output).collect();
        Ok(Hypergraph { vertices, edges, passes, group, key_selections, colocate, meta, alpha })
    }
}

/// Vertex names drop a short table prefix such as `c_` when that keeps
/// them unique; clashing vertices are qualified with their alias instead.
fn name_vertices(ir: &QueryIr, vertices: &mut [Vertex]) {
    let short: Vec<String> = vertices
        .iter()
        .map(|v| {
            let name = ir.column_name(v.members[0]);
            match name.split_once('_') {
                Some((p, rest)) if !p.is_empty() && p.len() <= 2 && !rest.is_empty() => rest.to_string(),
                _ => name.to_string(),
            }
        })
        .collect();
    for (i, v) in vertices.iter_mut().enumerate() {
        let clash = short.iter().enumerate().any(|(j, s)| j != i && *s == short[i]);
        v.name = if clash { ir.qualified_name(v.members[0]) } else { short[i].clone() };
    }
}

/// Smallest set of key columns that determines annotation `column` on the
/// stored rows, preferring columns the query already binds.
fn determining_keys(rel: &crate::storage::StoredRelation, column: usize, keys: &[usize], is_ref: &impl Fn(usize) -> bool) -> Vec<usize> {
    let n = keys.len();
    let mut subsets: Vec<u32> = (0..1u32 << n).collect();
    subsets.sort_by_key(|&m| {
        let cols: Vec<usize> = (0..n).filter(|&i| m >> i & 1 == 1).collect();
        let unref = cols.iter().filter(|&&i| !is_ref(keys[i])).count();
        (unref, cols.len(), cols)
    });
    let values = rel.annotation(column);
    for m in subsets {
        let cols: Vec<usize> = (0..n).filter(|&i| m >> i & 1 == 1).map(|i| keys[i]).collect();
        let ids: Vec<&[u32]> = cols.iter().map(|&c| rel.key_ids(c)).collect();
        let mut seen: HashMap<Vec<u32>, usize> = HashMap::new();
        let ok = (0..rel.num_rows()).all(|r| {
            let key: Vec<u32> = ids.iter().map(|c| c[r]).collect();
            let first = *seen.entry(key).or_insert(r);
            values.column().eq_at(values.index(first), values.index(r))
        });
        if ok {
            return cols;
        }
    }
    keys.to_vec()
}
