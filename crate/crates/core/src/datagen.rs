//! Seeded data generators: a skewed snowflake with the Q5 join graph,
//! sparse and dense matrices, and random databases with random queries for
//! differential testing.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};
use crate::storage::{Column, ColumnDef, ColumnType, RawTable, Schema};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnowflakeSpec {
    /// Multiplier on the base cardinalities (supplier 1e4, customer 1.5e5,
    /// orders 1.5e6, lineitem 6e6).
    pub scale: f64,
    /// Zipf exponent of every foreign key.
    pub zipf: f64,
    /// Fact-table size overriding the scaled default.
    pub lineitem: Option<usize>,
}

impl Default for SnowflakeSpec {
    fn default() -> Self {
        SnowflakeSpec { scale: 0.01, zipf: 1.0, lineitem: None }
    }
}

impl SnowflakeSpec {
    /// Rows of region, nation, supplier, customer, orders, lineitem.
    pub fn cardinalities(&self) -> [usize; 6] {
        let scaled = |base: f64| ((base * self.scale).round() as usize).max(1);
        [5, 25, scaled(1e4), scaled(1.5e5), scaled(1.5e6), self.lineitem.unwrap_or_else(|| scaled(6e6))]
    }
}

pub const REGIONS: [&str; 5] = ["AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"];

pub const NATIONS: [(&str, i64); 25] = [
    ("ALGERIA", 0),
    ("ARGENTINA", 1),
    ("BRAZIL", 1),
    ("CANADA", 1),
    ("EGYPT", 4),
    ("ETHIOPIA", 0),
    ("FRANCE", 3),
    ("GERMANY", 3),
    ("INDIA", 2),
    ("INDONESIA", 2),
    ("IRAN", 4),
    ("IRAQ", 4),
    ("JAPAN", 2),
    ("JORDAN", 4),
    ("KENYA", 0),
    ("MOROCCO", 0),
    ("MOZAMBIQUE", 0),
    ("PERU", 1),
    ("CHINA", 2),
    ("ROMANIA", 3),
    ("SAUDI ARABIA", 4),
    ("VIETNAM", 2),
    ("RUSSIA", 3),
    ("UNITED KINGDOM", 3),
    ("UNITED STATES", 1),
];

/// Revenue per nation of one region over one year of orders.
pub const Q5_SQL: &str = "SELECT n_name, SUM(l_extendedprice * (1 - l_discount)) AS revenue \
FROM customer, orders, lineitem, supplier, nation, region \
WHERE c_custkey = o_custkey AND l_orderkey = o_orderkey AND l_suppkey = s_suppkey \
AND c_nationkey = s_nationkey AND s_nationkey = n_nationkey AND n_regionkey = r_regionkey \
AND r_name = 'ASIA' AND o_orderdate > 19931231 AND o_orderdate < 19950101 \
GROUP BY n_name";

pub fn snowflake_schemas() -> Vec<Schema> {
    use ColumnType::*;
    let k = |n: &str| ColumnDef::key(n, Int);
    vec![
        Schema::new("region", vec![k("r_regionkey"), ColumnDef::annotation("r_name", String)]),
        Schema::new("nation", vec![k("n_nationkey"), k("n_regionkey"), ColumnDef::annotation("n_name", String)]),
        Schema::new("supplier", vec![k("s_suppkey"), k("s_nationkey")]),
        Schema::new("customer", vec![k("c_custkey"), k("c_nationkey")]),
        Schema::new("orders", vec![k("o_orderkey"), k("o_custkey"), ColumnDef::annotation("o_orderdate", Int)]),
        Schema::new(
            "lineitem",
            vec![
                k("l_orderkey"),
                k("l_linenumber"),
                k("l_suppkey"),
                ColumnDef::annotation("l_extendedprice", Double),
                ColumnDef::annotation("l_discount", Double),
            ],
        ),
    ]
}

fn zipf(n: usize, s: f64) -> Result<Zipf<f64>> {
    Zipf::new(n as f64, s).map_err(|e| Error::Generator(format!("zipf over {n} with exponent {s}: {e}")))
}

/// Tables in [`snowflake_schemas`] order.
pub fn snowflake(spec: &SnowflakeSpec, seed: u64) -> Result<Vec<RawTable>> {
    if !(spec.scale > 0.0 && spec.scale.is_finite()) {
        return Err(Error::Generator(format!("scale must be positive, got {}", spec.scale)));
    }
    if spec.zipf < 0.0 || !spec.zipf.is_finite() {
        return Err(Error::Generator(format!("zipf exponent must be non-negative, got {}", spec.zipf)));
    }
    let mut r = rng(seed);
    let [_, _, ns, nc, no, nl] = spec.cardinalities();
    let schemas = snowflake_schemas();
    let nation_z = zipf(25, spec.zipf)?;
    let (supp_z, cust_z, ord_z) = (zipf(ns, spec.zipf)?, zipf(nc, spec.zipf)?, zipf(no, spec.zipf)?);
    let draw = |z: &Zipf<f64>, r: &mut ChaCha8Rng| z.sample(r) as i64 - 1;

    let region = vec![Column::Int((0..5).collect()), Column::Str(REGIONS.iter().map(|s| s.to_string()).collect())];
    let nation = vec![
        Column::Int((0..25).collect()),
        Column::Int(NATIONS.iter().map(|n| n.1).collect()),
        Column::Str(NATIONS.iter().map(|n| n.0.to_string()).collect()),
    ];
    let supplier = vec![Column::Int((0..ns as i64).collect()), Column::Int((0..ns).map(|_| draw(&nation_z, &mut r)).collect())];
    let customer = vec![Column::Int((0..nc as i64).collect()), Column::Int((0..nc).map(|_| draw(&nation_z, &mut r)).collect())];
    let orderdate = |r: &mut ChaCha8Rng| r.random_range(1992..=1998) * 10000 + r.random_range(1..=12) * 100 + r.random_range(1..=28);
    let orders = vec![
        Column::Int((0..no as i64).collect()),
        Column::Int((0..no).map(|_| draw(&cust_z, &mut r)).collect()),
        Column::Int((0..no).map(|_| orderdate(&mut r)).collect()),
    ];
    let mut lines = vec![0i64; no];
    let (mut lok, mut lln, mut lsk, mut lpr, mut ldi) =
        (Vec::with_capacity(nl), Vec::with_capacity(nl), Vec::with_capacity(nl), Vec::with_capacity(nl), Vec::with_capacity(nl));
    for _ in 0..nl {
        let o = draw(&ord_z, &mut r);
        lok.push(o);
        lln.push(lines[o as usize]);
        lines[o as usize] += 1;
        lsk.push(draw(&supp_z, &mut r));
        lpr.push(r.random_range(90_000..10_500_000) as f64 / 100.0);
        ldi.push(r.random_range(0..=10) as f64 / 100.0);
    }
    let lineitem = vec![Column::Int(lok), Column::Int(lln), Column::Int(lsk), Column::Float(lpr), Column::Float(ldi)];
    schemas.into_iter().zip([region, nation, supplier, customer, orders, lineitem]).map(|(s, c)| RawTable::new(s, c)).collect()
}

/// `nnz` distinct uniform coordinates with values in `[0.5, 1.5)`, sorted
/// by coordinate.
pub fn sparse_matrix(rows: usize, cols: usize, nnz: usize, seed: u64) -> Result<Vec<(i64, i64, f64)>> {
    let cells = rows as u128 * cols as u128;
    if nnz as u128 > cells {
        return Err(Error::Generator(format!("{nnz} nonzeros do not fit in a {rows}x{cols} matrix")));
    }
    let mut r = rng(seed);
    let mut coords: Vec<(i64, i64)> = if (nnz as u128) * 2 > cells {
        let mut all: Vec<(i64, i64)> = (0..rows as i64).flat_map(|i| (0..cols as i64).map(move |j| (i, j))).collect();
        all.shuffle(&mut r);
        all.truncate(nnz);
        all
    } else {
        let mut seen = HashSet::with_capacity(nnz);
        let mut out = Vec::with_capacity(nnz);
        while out.len() < nnz {
            let c = (r.random_range(0..rows as i64), r.random_range(0..cols as i64));
            if seen.insert(c) {
                out.push(c);
            }
        }
        out
    };
    coords.sort_unstable();
    Ok(coords.into_iter().map(|(i, j)| (i, j, r.random_range(0.5..1.5))).collect())
}

/// Every coordinate of a `rows x cols` matrix with values in `[-1, 1)`.
pub fn dense_matrix(rows: usize, cols: usize, seed: u64) -> Vec<(i64, i64, f64)> {
    let mut r = rng(seed);
    (0..rows as i64).flat_map(|i| (0..cols as i64).map(move |j| (i, j))).map(|(i, j)| (i, j, r.random_range(-1.0..1.0))).collect()
}

/// Matrix entries as a relation with the MatrixMarket schema.
pub fn matrix_table(relation: &str, entries: &[(i64, i64, f64)]) -> Result<RawTable> {
    RawTable::new(
        crate::storage::matrix_schema(relation),
        vec![
            Column::Int(entries.iter().map(|e| e.0).collect()),
            Column::Int(entries.iter().map(|e| e.1).collect()),
            Column::Float(entries.iter().map(|e| e.2).collect()),
        ],
    )
}

#[derive(Clone, Debug)]
pub struct RandomDbSpec {
    pub relations: usize,
    pub max_rows: usize,
    /// Key values are drawn from `0..key_universe`.
    pub key_universe: i64,
}

impl Default for RandomDbSpec {
    fn default() -> Self {
        RandomDbSpec { relations: 6, max_rows: 40, key_universe: 6 }
    }
}

const KEY_NAMES: [&str; 3] = ["a", "b", "c"];
const TAGS: [&str; 3] = ["p", "q", "r"];

/// Relations `t0..` with one to three integer keys and annotations `x`
/// (int), `y` (double), and `s` (string), all numbers positive.
pub fn random_database(spec: &RandomDbSpec, r: &mut impl Rng) -> Vec<RawTable> {
    (0..spec.relations)
        .map(|t| {
            let nkeys = r.random_range(1..=3);
            let mut cols: Vec<ColumnDef> = KEY_NAMES[..nkeys].iter().map(|k| ColumnDef::key(k, ColumnType::Int)).collect();
            cols.push(ColumnDef::annotation("x", ColumnType::Int));
            cols.push(ColumnDef::annotation("y", ColumnType::Double));
            cols.push(ColumnDef::annotation("s", ColumnType::String));
            let schema = Schema::new(&format!("t{t}"), cols);
            let capacity = (spec.key_universe as usize).pow(nkeys as u32);
            let target = r.random_range(0..=spec.max_rows.min(capacity));
            let mut seen = HashSet::new();
            let mut keys: Vec<Vec<i64>> = vec![Vec::new(); nkeys];
            while seen.len() < target {
                let tuple: Vec<i64> = (0..nkeys).map(|_| r.random_range(0..spec.key_universe)).collect();
                if seen.insert(tuple.clone()) {
                    for (k, v) in tuple.into_iter().enumerate() {
                        keys[k].push(v);
                    }
                }
            }
            let n = seen.len();
            let mut columns: Vec<Column> = keys.into_iter().map(Column::Int).collect();
            columns.push(Column::Int((0..n).map(|_| r.random_range(1..=9)).collect()));
            columns.push(Column::Float((0..n).map(|_| r.random_range(1..=40) as f64 / 8.0).collect()));
            columns.push(Column::Str((0..n).map(|_| TAGS.choose(r).unwrap().to_string()).collect()));
            RawTable::new(schema, columns).expect("generated columns match the schema")
        })
        .collect()
}

/// A random connected aggregate-join query over 2 to 5 of `schemas`.
pub fn random_query(schemas: &[Schema], r: &mut impl Rng) -> String {
    let n = r.random_range(2..=5.min(schemas.len()));
    let mut picked: Vec<usize> = (0..schemas.len()).collect();
    picked.shuffle(r);
    picked.truncate(n);
    let keys = |i: usize| -> Vec<String> { schemas[picked[i]].key_columns().into_iter().map(|c| schemas[picked[i]].columns[c].name.clone()).collect() };
    let col = |i: usize, c: &str| format!("r{i}.{c}");
    let mut conds = Vec::new();
    for i in 1..n {
        let j = r.random_range(0..i);
        conds.push(format!("{} = {}", col(i, keys(i).choose(r).unwrap()), col(j, keys(j).choose(r).unwrap())));
    }
    if n >= 3 && r.random_bool(0.3) {
        let (i, j) = (n - 1, 0);
        conds.push(format!("{} = {}", col(i, keys(i).choose(r).unwrap()), col(j, keys(j).choose(r).unwrap())));
    }
    for _ in 0..r.random_range(0..=2) {
        let i = r.random_range(0..n);
        conds.push(match r.random_range(0..4) {
            0 => format!("{} > {}", col(i, "x"), r.random_range(0..6)),
            1 => format!("{} < {}", col(i, "y"), r.random_range(2..6)),
            2 => format!("{} = '{}'", col(i, "s"), TAGS.choose(r).unwrap()),
            _ => format!("{} = {}", col(i, keys(i).choose(r).unwrap()), r.random_range(0..6)),
        });
    }
    let mut group: Vec<String> = Vec::new();
    for _ in 0..r.random_range(0..=2) {
        let i = r.random_range(0..n);
        let g = if r.random_bool(0.25) { col(i, "s") } else { col(i, keys(i).choose(r).unwrap()) };
        if !group.contains(&g) {
            group.push(g);
        }
    }
    let mut aggs: Vec<String> = Vec::new();
    let distinct_only = !group.is_empty() && r.random_bool(0.1);
    if !distinct_only {
        for _ in 0..r.random_range(1..=2) {
            let (i, j) = (r.random_range(0..n), r.random_range(0..n));
            aggs.push(match r.random_range(0..7) {
                0 => "COUNT(*)".to_string(),
                1 => format!("SUM({})", col(i, "x")),
                2 => format!("SUM({} * {})", col(i, "x"), col(j, "y")),
                3 => format!("MIN({})", col(i, "x")),
                4 => format!("MAX({} + {})", col(i, "y"), col(j, "x")),
                5 => format!("SUM({} + {})", col(i, "x"), col(j, "x")),
                _ => format!("SUM(2 * {})", col(i, "y")),
            });
        }
    }
    let select: Vec<String> = group.iter().cloned().chain(aggs).collect();
    let from: Vec<String> = (0..n).map(|i| format!("{} r{i}", schemas[picked[i]].relation)).collect();
    let mut sql = format!("SELECT {} FROM {} WHERE {}", select.join(", "), from.join(", "), conds.join(" AND "));
    if !group.is_empty() && !distinct_only {
        sql.push_str(&format!(" GROUP BY {}", group.join(", ")));
    }
    sql
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snowflake_counts_follow_scale() {
        let spec = SnowflakeSpec { scale: 0.001, ..Default::default() };
        let tables = snowflake(&spec, 7).unwrap();
        let counts: Vec<usize> = tables.iter().map(|t| t.num_rows()).collect();
        assert_eq!(counts, spec.cardinalities().to_vec());
        assert_eq!(counts, vec![5, 25, 10, 150, 1500, 6000]);
    }

    #[test]
    fn sparse_has_exact_distinct_nnz() {
        let m = sparse_matrix(1000, 1000, 5000, 3).unwrap();
        let distinct: HashSet<(i64, i64)> = m.iter().map(|e| (e.0, e.1)).collect();
        assert_eq!(distinct.len(), 5000);
        assert!(sparse_matrix(2, 2, 5, 0).is_err());
        assert_eq!(sparse_matrix(3, 3, 9, 1).unwrap().len(), 9);
    }

    #[test]
    fn generators_are_seeded() {
        let spec = SnowflakeSpec { scale: 0.0005, ..Default::default() };
        assert_eq!(snowflake(&spec, 11).unwrap(), snowflake(&spec, 11).unwrap());
        assert_eq!(sparse_matrix(50, 50, 100, 2).unwrap(), sparse_matrix(50, 50, 100, 2).unwrap());
    }
}
