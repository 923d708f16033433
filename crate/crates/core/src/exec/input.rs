//! Join inputs: base relations re-sorted into a node's attribute order and
//! child results, each as a trie with per-leaf semiring values.

use std::sync::Arc;

use crate::error::Result;
use crate::ir::{ColRef, Edge, Expr, Hypergraph};
use crate::semiring::Semiring;
use crate::set::{Id, SetConfig};
use crate::storage::{build_trie, permute, sort_rows, Column, Database, StoredRelation, Trie, Value};

/// A base relation restricted to the rows passing its filters and indexed
/// by its join vertices in a given order.
pub(crate) struct EdgeStructure {
    pub trie: Arc<Trie>,
    /// Surviving stored rows, sorted by the key order.
    pub rows: Vec<u32>,
    /// Rows of leaf `p` are `rows[leaf_start[p]..leaf_start[p + 1]]`.
    pub leaf_start: Vec<u32>,
}

pub(crate) struct JoinInput {
    pub trie: Arc<Trie>,
    /// Vertex of each trie level.
    pub vertices: Vec<usize>,
    /// Per pass, the value of each leaf; `None` is the semiring one.
    pub values: Vec<Option<Arc<Vec<f64>>>>,
    /// First stored row of each leaf, for expressions spanning relations.
    pub leaf_rows: Option<Arc<Vec<u32>>>,
    pub edge: Option<usize>,
}

fn matches_filter(col: &Column, row: usize, f: &crate::ir::AnnotationFilter) -> bool {
    use crate::ir::CmpOp;
    let ord = match (col, &f.value) {
        (Column::Str(v), Value::Str(s)) => v[row].as_str().cmp(s.as_str()),
        (Column::Str(_), _) => return false,
        (Column::Int(v), Value::Int(x)) => v[row].cmp(x),
        (_, Value::Str(_)) => return false,
        (c, lit) => c.f64_at(row).total_cmp(&lit.as_f64().unwrap_or(f64::NAN)),
    };
    match f.op {
        CmpOp::Eq => ord.is_eq(),
        CmpOp::Lt => ord.is_lt(),
        CmpOp::Gt => ord.is_gt(),
    }
}

/// Stored rows of an edge's relation passing its annotation filters and
/// key self-equalities.
pub(crate) fn surviving_rows(rel: &StoredRelation, edge: &Edge) -> Vec<u32> {
    let readers: Vec<_> = edge.filters.iter().map(|f| (rel.annotation(f.column), f)).collect();
    let self_eq: Vec<(&[Id], &[Id])> = edge
        .self_equal
        .iter()
        .map(|&(col, v)| {
            let other = edge.columns[edge.vertices.iter().position(|&x| x == v).expect("self-equal vertex on edge")];
            (rel.key_ids(col), rel.key_ids(other))
        })
        .collect();
    (0..rel.num_rows() as u32)
        .filter(|&r| {
            let r = r as usize;
            readers.iter().all(|(rd, f)| matches_filter(rd.column(), rd.index(r), f)) && self_eq.iter().all(|(a, b)| a[r] == b[r])
        })
        .collect()
}

fn structure_key(edge: &Edge, columns: &[usize]) -> String {
    format!(
        "edge|{}|{:?}|{:?}|{:?}",
        edge.relation,
        columns,
        edge.filters,
        edge.self_equal.iter().map(|&(c, v)| (c, edge.columns[edge.vertices.iter().position(|&x| x == v).unwrap()])).collect::<Vec<_>>()
    )
}

/// Per-row expression evaluation over one relation's annotation columns.
pub(crate) struct RowEval<'a> {
    readers: Vec<Option<crate::storage::AnnotationReader<'a>>>,
}

impl<'a> RowEval<'a> {
    pub fn new(rel: &'a StoredRelation, columns: impl IntoIterator<Item = usize>) -> RowEval<'a> {
        let mut readers = vec![None; rel.schema().columns.len()];
        for c in columns {
            if readers[c].is_none() {
                readers[c] = Some(rel.annotation(c));
            }
        }
        RowEval { readers }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.readers[col].as_ref().expect("column prepared").f64_at(row)
    }
}

pub(crate) fn build_edge_input(db: &Database, hg: &Hypergraph, e: usize, order: &[usize], pass_exprs: &[(Semiring, Option<&Expr>, bool)]) -> Result<JoinInput> {
    let edge = &hg.edges[e];
    let rel = db.relation(&edge.relation).expect("planned relation exists");
    let mut level_vertices: Vec<usize> = edge.vertices.clone();
    level_vertices.sort_by_key(|v| order.iter().position(|x| x == v).unwrap_or(usize::MAX));
    let columns: Vec<usize> = level_vertices.iter().map(|v| edge.columns[edge.vertices.iter().position(|x| x == v).unwrap()]).collect();
    let key = structure_key(edge, &columns);
    let config = db.set_config().clone();
    let structure = db.cached(&key, || Ok(build_structure(rel, edge, &columns, &config)))?;

    let mut values = Vec::with_capacity(pass_exprs.len());
    for &(semiring, expr, in_bag) in pass_exprs {
        if in_bag {
            values.push(None);
            continue;
        }
        let singletons = structure.leaf_start.len() == structure.rows.len() + 1;
        if expr.is_none() && (singletons || matches!(semiring, Semiring::MinPlus | Semiring::MaxPlus)) {
            values.push(None);
            continue;
        }
        let rendered = expr.map(|x| x.render(&|c: ColRef| rel.schema().columns[c.col].name.clone()));
        let vkey = format!("{key}|{semiring}|{rendered:?}");
        let v = db.cached(&vkey, || Ok(leaf_values(rel, &structure, semiring, expr)))?;
        values.push(Some(v));
    }
    let needs_rows = hg.passes.iter().any(|p| p.bag_of(e).is_some());
    let leaf_rows = needs_rows.then(|| {
        let rows: Vec<u32> = structure.leaf_start[..structure.leaf_start.len() - 1].iter().map(|&s| structure.rows[s as usize]).collect();
        Arc::new(rows)
    });
    let trie = structure.trie.clone();
    Ok(JoinInput { trie, vertices: level_vertices, values, leaf_rows, edge: Some(e) })
}

fn build_structure(rel: &StoredRelation, edge: &Edge, columns: &[usize], config: &SetConfig) -> EdgeStructure {
    let rows = surviving_rows(rel, edge);
    let ids: Vec<&[Id]> = columns.iter().map(|&c| rel.key_ids(c)).collect();
    let rows = sort_rows(&ids, rows);
    let permuted: Vec<Vec<Id>> = ids.iter().map(|c| permute(c, &rows)).collect();
    let refs: Vec<&[Id]> = permuted.iter().map(|v| v.as_slice()).collect();
    let universes: Vec<(Id, Id)> = columns.iter().map(|&c| rel.trie().level(rel.key_level(c).unwrap()).universe()).collect();
    let (trie, leaf_of_row) = build_trie(&refs, &universes, config);
    let mut leaf_start = Vec::with_capacity(trie.num_tuples() + 1);
    for (i, &leaf) in leaf_of_row.iter().enumerate() {
        if leaf as usize == leaf_start.len() {
            leaf_start.push(i as u32);
        }
    }
    leaf_start.push(rows.len() as u32);
    EdgeStructure { trie: Arc::new(trie), rows, leaf_start }
}

fn leaf_values(rel: &StoredRelation, s: &EdgeStructure, semiring: Semiring, expr: Option<&Expr>) -> Vec<f64> {
    let nleaves = s.leaf_start.len() - 1;
    let mut out = Vec::with_capacity(nleaves);
    match expr {
        None => {
            for p in 0..nleaves {
                out.push(semiring.plus_n(semiring.one(), (s.leaf_start[p + 1] - s.leaf_start[p]) as usize));
            }
        }
        Some(e) => {
            let eval = RowEval::new(rel, e.columns().into_iter().map(|c| c.col));
            for p in 0..nleaves {
                let mut acc = semiring.zero();
                for &r in &s.rows[s.leaf_start[p] as usize..s.leaf_start[p + 1] as usize] {
                    acc = semiring.plus(acc, e.eval(&|c: ColRef| eval.get(c.col, r as usize)));
                }
                out.push(acc);
            }
        }
    }
    out
}

/// `⊕` over all surviving rows of a relation with no joined keys, per pass;
/// `None` when no row survives.
pub(crate) fn scalar_edge(db: &Database, hg: &Hypergraph, e: usize) -> Option<Vec<f64>> {
    let edge = &hg.edges[e];
    let rel = db.relation(&edge.relation).expect("planned relation exists");
    let rows = surviving_rows(rel, edge);
    if rows.is_empty() {
        return None;
    }
    Some(
        hg.passes
            .iter()
            .map(|p| match &p.edge_exprs[e] {
                None => p.semiring.plus_n(p.semiring.one(), rows.len()),
                Some(x) => {
                    let eval = RowEval::new(rel, x.columns().into_iter().map(|c| c.col));
                    rows.iter().fold(p.semiring.zero(), |acc, &r| p.semiring.plus(acc, x.eval(&|c: ColRef| eval.get(c.col, r as usize))))
                }
            })
            .collect(),
    )
}

/// Result rows of a plan node: `keys` holds `width` ids per row and `vals`
/// one value per pass.
#[derive(Clone, Debug, Default)]
pub(crate) struct NodeRows {
    pub vertices: Vec<usize>,
    pub keys: Vec<Id>,
    pub vals: Vec<f64>,
    pub passes: usize,
}

impl NodeRows {
    pub fn len(&self) -> usize {
        if self.passes == 0 {
            0
        } else {
            self.vals.len() / self.passes
        }
    }
}

/// Re-indexes a child's rows in the parent's attribute order.
pub(crate) fn child_input(rows: &NodeRows, order: &[usize], config: &SetConfig) -> JoinInput {
    let width = rows.vertices.len();
    let mut level_vertices = rows.vertices.clone();
    level_vertices.sort_by_key(|v| order.iter().position(|x| x == v).unwrap_or(usize::MAX));
    let n = rows.len();
    let cols: Vec<Vec<Id>> = level_vertices
        .iter()
        .map(|v| {
            let c = rows.vertices.iter().position(|x| x == v).unwrap();
            (0..n).map(|r| rows.keys[r * width + c]).collect()
        })
        .collect();
    let refs: Vec<&[Id]> = cols.iter().map(|v| v.as_slice()).collect();
    let sorted = sort_rows(&refs, (0..n as u32).collect());
    let permuted: Vec<Vec<Id>> = refs.iter().map(|c| permute(c, &sorted)).collect();
    let prefs: Vec<&[Id]> = permuted.iter().map(|v| v.as_slice()).collect();
    let universes: Vec<(Id, Id)> = prefs
        .iter()
        .map(|c| match (c.iter().min(), c.iter().max()) {
            (Some(&a), Some(&b)) => (a, b + 1),
            _ => (0, 0),
        })
        .collect();
    let (trie, _) = build_trie(&prefs, &universes, config);
    let values = (0..rows.passes).map(|p| Some(Arc::new(sorted.iter().map(|&r| rows.vals[r as usize * rows.passes + p]).collect::<Vec<f64>>()))).collect();
    JoinInput { trie: Arc::new(trie), vertices: level_vertices, values, leaf_rows: None, edge: None }
}

/// Per-row evaluation of a multi-relation expression.
pub(crate) struct BagEval<'a> {
    pub expr: &'a Expr,
    /// For each referenced FROM index, the relation's evaluator.
    pub relations: Vec<(usize, RowEval<'a>)>,
}

impl<'a> BagEval<'a> {
    pub fn new(db: &'a Database, hg: &Hypergraph, expr: &'a Expr) -> BagEval<'a> {
        let mut relations: Vec<(usize, RowEval<'a>)> = Vec::new();
        for rel in expr.relations() {
            let stored = db.relation(&hg.edges[rel].relation).expect("planned relation exists");
            let cols = expr.columns().into_iter().filter(|c| c.rel == rel).map(|c| c.col);
            relations.push((rel, RowEval::new(stored, cols)));
        }
        BagEval { expr, relations }
    }

    /// `row_of(rel)` gives the stored row bound for FROM item `rel`.
    #[inline]
    pub fn eval(&self, row_of: &impl Fn(usize) -> usize) -> f64 {
        self.expr.eval(&|c: ColRef| {
            let (_, ev) = self.relations.iter().find(|(r, _)| *r == c.rel).expect("bag relation");
            ev.get(c.col, row_of(c.rel))
        })
    }
}
