//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any fails.

use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;

use wcoj::datagen::{dense_matrix, matrix_table, random_database, random_query, rng, snowflake, sparse_matrix, RandomDbSpec, SnowflakeSpec, Q5_SQL};
use wcoj::exec::groupby::{group_by_annotations, group_by_annotations_with, group_by_key, group_by_key_with};
use wcoj::exec::{execute, ExecOptions};
use wcoj::ghd::node_width;
use wcoj::optimizer::{order_cost, OrderInput};
use wcoj::oracle::oracle;
use wcoj::plan::{GroupStrategy, Plan, PlanConfig};
use wcoj::semiring::Semiring;
use wcoj::set::{KeyUnionStrategy, Layout, LayoutCostTable};
use wcoj::storage::{ColumnDef, ColumnType, Database, Schema, Value};

const ORACLE_MIN_QUERIES: usize = 200;
const ORACLE_REL_TOL: f64 = 1e-9;
const ORACLE_BUDGET: Duration = Duration::from_secs(300);
const THREAD_REL_TOL: f64 = 1e-9;
const Q5_FACT_ROWS: usize = 1_000_000;
const Q5_MIN_RATIO: f64 = 5.0;
const MM_SIZE: usize = 2000;
const MM_NNZ: usize = 200_000;
const MM_MIN_RATIO: f64 = 10.0;
const GROUP_ROWS: usize = 1_000_000;
const GROUP_UNIVERSE: u32 = 1 << 18;
const GROUP_THREADS: usize = 8;
const GROUP_SLACK: f64 = 2.0;
const GROUP_DENSITIES: [f64; 5] = [1e-3, 1e-2, 0.1, 0.5, 0.9];
const GROUP_WIDTHS: [usize; 3] = [1, 2, 6];
const DENSE_N: usize = 512;
const DENSE_ERR: f64 = 1e-6;
const DENSE_MIN_SPEEDUP: f64 = 10.0;
const MM_SQL: &str = "SELECT a.i, b.j, SUM(a.v * b.v) FROM a, b WHERE a.j = b.i GROUP BY a.i, b.j";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn best_of<T>(runs: usize, mut f: impl FnMut() -> T) -> (T, Duration) {
    let mut best = Duration::MAX;
    let mut last = None;
    for _ in 0..runs {
        let t = Instant::now();
        let v = f();
        best = best.min(t.elapsed());
        last = Some(v);
    }
    (last.expect("at least one run"), best)
}

fn build_db(tables: Vec<wcoj::storage::RawTable>) -> Database {
    let mut b = Database::builder();
    for t in tables {
        b.add_table(t).unwrap();
    }
    b.build().unwrap()
}

struct SuiteQuery {
    sql: String,
    db: usize,
}

fn suite() -> (Vec<Database>, Vec<SuiteQuery>) {
    let tiers = [(RandomDbSpec::default(), 40u64, 6usize), (RandomDbSpec { relations: 5, max_rows: 2000, key_universe: 50 }, 10, 4)];
    let mut dbs = Vec::new();
    let mut queries = Vec::new();
    for (tier, (spec, seeds, per_db)) in tiers.iter().enumerate() {
        for seed in 0..*seeds {
            let mut r = rng(10_000 * tier as u64 + seed);
            let db = build_db(random_database(spec, &mut r));
            let schemas: Vec<_> = db.relations().map(|r| r.schema().clone()).collect();
            for _ in 0..*per_db {
                queries.push(SuiteQuery { sql: random_query(&schemas, &mut r), db: dbs.len() });
            }
            dbs.push(db);
        }
    }
    (dbs, queries)
}

fn oracle_equivalence(dbs: &[Database], queries: &[SuiteQuery]) -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for q in queries {
        let db = &dbs[q.db];
        let result = Plan::build(&q.sql, db).and_then(|plan| {
            let expected = oracle(&plan.ir, db);
            let (got, _) = execute(&plan, db, &ExecOptions::default())?;
            Ok(got.diff(&expected, ORACLE_REL_TOL))
        });
        match result {
            Ok(None) => {}
            Ok(Some(d)) => failures.push(format!("{}: {d}", q.sql)),
            Err(e) => failures.push(format!("{}: {e}", q.sql)),
        }
    }
    let elapsed = start.elapsed();
    for f in failures.iter().take(5) {
        eprintln!("  {f}");
    }
    let pass = failures.is_empty() && queries.len() >= ORACLE_MIN_QUERIES && elapsed < ORACLE_BUDGET;
    outcome(pass, format!("{} queries, {} mismatches, {:.1}s", queries.len(), failures.len(), elapsed.as_secs_f64()))
}

fn thread_invariance(dbs: &[Database], queries: &[SuiteQuery]) -> Outcome {
    let mut failures = Vec::new();
    for q in queries {
        let db = &dbs[q.db];
        let result = Plan::build(&q.sql, db).and_then(|plan| {
            let (one, _) = execute(&plan, db, &ExecOptions { threads: 1, ..Default::default() })?;
            let (eight, _) = execute(&plan, db, &ExecOptions { threads: 8, ..Default::default() })?;
            Ok(one.diff(&eight, THREAD_REL_TOL))
        });
        match result {
            Ok(None) => {}
            Ok(Some(d)) => failures.push(format!("{}: {d}", q.sql)),
            Err(e) => failures.push(format!("{}: {e}", q.sql)),
        }
    }
    for f in failures.iter().take(5) {
        eprintln!("  {f}");
    }
    outcome(failures.is_empty(), format!("{} queries at threads 1 vs 8, {} differ", queries.len(), failures.len()))
}

fn cost_model() -> Outcome {
    let table = LayoutCostTable::default();
    let (b, u) = (Layout::Bitset, Layout::Uint);
    let constants = table.pair(b, b) == 1 && table.pair(b, u) == 10 && table.pair(u, b) == 10 && table.pair(u, u) == 50 && table.dense_relation == 0;
    // Vertices: orderkey 0, custkey 1, nationkey 2, suppkey 3.
    let input =
        |name: &str, vertices: &[usize], score: u64| OrderInput { name: name.into(), vertices: vertices.to_vec(), score, dense: false, selected: Vec::new() };
    let inputs =
        [input("orders", &[0, 1], 26), input("lineitem", &[0, 3], 100), input("customer", &[1, 2], 3), input("supplier", &[3, 2], 1), input("nation", &[2], 1)];
    let cost = order_cost(&[0, 1, 2, 3], &inputs, &table);
    let example = cost.icosts == [1, 10, 11, 50] && cost.weights == [26, 3, 1, 1];
    let mut region = vec![input("region", &[4], 1), input("nation", &[2, 4], 1)];
    region[0].selected = vec![4];
    let selected = wcoj::optimizer::vertex_weight(4, &region) == 1;
    outcome(constants && example && selected, format!("icosts {:?}, weights {:?}, total {}", cost.icosts, cost.weights, cost.total))
}

/// Minimum fractional edge cover by enumerating every vertex of the
/// polytope: each choice of `|E|` tight constraints solved exactly.
fn edge_cover_by_vertices(vertices: &[usize], edges: &[Vec<usize>]) -> BigRational {
    let m = edges.len();
    let mut rows: Vec<(Vec<BigRational>, BigRational)> = Vec::new();
    for v in vertices {
        rows.push((edges.iter().map(|e| if e.contains(v) { BigRational::one() } else { BigRational::zero() }).collect(), BigRational::one()));
    }
    for e in 0..m {
        rows.push(((0..m).map(|k| if k == e { BigRational::one() } else { BigRational::zero() }).collect(), BigRational::zero()));
    }
    let mut best: Option<BigRational> = None;
    let mut pick = Vec::new();
    fn choose(n: usize, k: usize, start: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if pick.len() == k {
            f(pick);
            return;
        }
        for i in start..n {
            pick.push(i);
            choose(n, k, i + 1, pick, f);
            pick.pop();
        }
    }
    choose(rows.len(), m, 0, &mut pick, &mut |sel| {
        let Some(x) = solve(sel.iter().map(|&i| rows[i].clone()).collect()) else { return };
        let feasible = rows.iter().all(|(a, b)| &a.iter().zip(&x).map(|(p, q)| p * q).fold(BigRational::zero(), |s, t| s + t) >= b);
        if feasible {
            let total = x.iter().fold(BigRational::zero(), |s, t| s + t);
            if best.as_ref().is_none_or(|b| &total < b) {
                best = Some(total);
            }
        }
    });
    best.expect("covering polytope has a vertex")
}

fn solve(mut a: Vec<(Vec<BigRational>, BigRational)>) -> Option<Vec<BigRational>> {
    let n = a.len();
    for c in 0..n {
        let p = (c..n).find(|&r| !a[r].0[c].is_zero())?;
        a.swap(c, p);
        let pivot = a[c].0[c].clone();
        for k in 0..n {
            a[c].0[k] = &a[c].0[k] / &pivot;
        }
        a[c].1 = &a[c].1 / &pivot;
        for r in 0..n {
            if r != c && !a[r].0[c].is_zero() {
                let f = a[r].0[c].clone();
                for k in 0..n {
                    let d = &f * &a[c].0[k];
                    a[r].0[k] = &a[r].0[k] - d;
                }
                let d = &f * &a[c].1;
                a[r].1 = &a[r].1 - d;
            }
        }
    }
    if a.iter().any(|(_, b)| b.is_negative()) {
        return None;
    }
    Some(a.into_iter().map(|(_, b)| b).collect())
}

fn graph_db(edges: &[(&str, &str, &str)]) -> Database {
    let mut b = Database::builder();
    for (rel, x, y) in edges {
        let schema = Schema::new(
            rel,
            vec![
                ColumnDef { domain: Some("node".into()), ..ColumnDef::key(x, ColumnType::Int) },
                ColumnDef { domain: Some("node".into()), ..ColumnDef::key(y, ColumnType::Int) },
            ],
        );
        let rows: Vec<Vec<Value>> = (0..6).flat_map(|i| (0..6).filter(move |j| (i + j) % 3 != 0).map(move |j| vec![Value::Int(i), Value::Int(j)])).collect();
        b.add_rows(schema, &rows).unwrap();
    }
    b.build().unwrap()
}

fn fhw() -> Outcome {
    let half = |n: i64, d: i64| BigRational::new(n.into(), d.into());
    let cases: Vec<(&str, Database, String, BigRational, bool)> = vec![
        (
            "triangle",
            graph_db(&[("r", "a", "b"), ("s", "b", "c"), ("t", "a", "c")]),
            "SELECT COUNT(*) FROM r, s, t WHERE r.b = s.b AND s.c = t.c AND r.a = t.a".into(),
            half(3, 2),
            false,
        ),
        (
            "4-cycle",
            graph_db(&[("r", "a", "b"), ("s", "b", "c"), ("t", "c", "d"), ("u", "d", "a")]),
            "SELECT COUNT(*) FROM r, s, t, u WHERE r.b = s.b AND s.c = t.c AND t.d = u.d AND u.a = r.a".into(),
            half(2, 1),
            false,
        ),
        (
            "path",
            graph_db(&[("r", "a", "b"), ("s", "b", "c"), ("t", "c", "d"), ("u", "d", "e")]),
            "SELECT COUNT(*) FROM r, s, t, u WHERE r.b = s.b AND s.c = t.c AND t.d = u.d".into(),
            half(1, 1),
            true,
        ),
        (
            "star",
            graph_db(&[("r", "a", "b"), ("s", "a", "c"), ("t", "a", "d")]),
            "SELECT r.a, COUNT(*) FROM r, s, t WHERE r.a = s.a AND s.a = t.a GROUP BY r.a".into(),
            half(1, 1),
            true,
        ),
        (
            "tree",
            graph_db(&[("r", "a", "b"), ("s", "b", "c"), ("t", "b", "d"), ("u", "d", "e")]),
            "SELECT COUNT(*) FROM r, s, t, u WHERE r.b = s.b AND s.b = t.b AND t.d = u.d".into(),
            half(1, 1),
            true,
        ),
    ];
    let mut ok = true;
    let mut seen = Vec::new();
    for (name, db, sql, want, acyclic) in cases {
        let plan = match Plan::build(&sql, &db) {
            Ok(p) => p,
            Err(e) => {
                ok = false;
                seen.push(format!("{name}: {e}"));
                continue;
            }
        };
        let edges: Vec<Vec<usize>> = plan.hg.edges.iter().map(|e| e.vertices.clone()).collect();
        let all: Vec<usize> = (0..plan.hg.vertices.len()).collect();
        let lp = edge_cover_by_vertices(&all, &edges);
        let lib = node_width(&all, &edges).unwrap();
        let case_ok = if acyclic {
            plan.ghd.width == want && plan.ghd.nodes.len() == 1 && lib == lp
        } else {
            let nodes_ok = plan.ghd.nodes.iter().all(|n| {
                let bag_edges: Vec<Vec<usize>> = n.edges.iter().map(|&e| edges[e].clone()).collect();
                edge_cover_by_vertices(&n.vertices, &bag_edges) == n.width
            });
            plan.ghd.width == want && lp == want && lib == lp && nodes_ok
        };
        ok &= case_ok;
        seen.push(format!("{name}={}", plan.ghd.width));
    }
    outcome(ok, seen.join(", "))
}

fn q5_order() -> Outcome {
    let spec = SnowflakeSpec { scale: 1.0 / 6.0, zipf: 1.0, lineitem: Some(Q5_FACT_ROWS) };
    let db = build_db(snowflake(&spec, 42).unwrap());
    let plan = Plan::build(Q5_SQL, &db).unwrap();
    let root = plan.ghd.root();
    let candidates = plan.candidate_orders(root).unwrap();
    let worst = candidates.iter().max_by_key(|c| c.cost.total).unwrap();
    let mut worst_plan = plan.clone();
    worst_plan.set_order(root, worst.order.clone(), &db).unwrap();
    let opts = ExecOptions::default();
    let (chosen_rows, chosen) = best_of(3, || execute(&plan, &db, &opts).unwrap().0);
    let (worst_rows, slow) = best_of(3, || execute(&worst_plan, &db, &opts).unwrap().0);
    let ratio = slow.as_secs_f64() / chosen.as_secs_f64();
    let names = plan.vertex_names();
    let chosen_names: Vec<&str> = plan.nodes[root].order.iter().map(|&v| names[v].as_str()).collect();
    let same = chosen_rows.diff(&worst_rows, 1e-9).is_none();
    outcome(
        same && chosen <= slow && ratio >= Q5_MIN_RATIO,
        format!(
            "chosen {:?} cost {} in {:.1}ms, worst cost {} in {:.1}ms, ratio {ratio:.0}x",
            chosen_names,
            plan.nodes[root].cost.total,
            chosen.as_secs_f64() * 1e3,
            worst.cost.total,
            slow.as_secs_f64() * 1e3
        ),
    )
}

fn matmul_order() -> Outcome {
    let mut b = Database::builder();
    b.add_table(matrix_table("a", &sparse_matrix(MM_SIZE, MM_SIZE, MM_NNZ, 1).unwrap()).unwrap()).unwrap();
    b.add_table(matrix_table("b", &sparse_matrix(MM_SIZE, MM_SIZE, MM_NNZ, 2).unwrap()).unwrap()).unwrap();
    let db = b.build().unwrap();
    let plan = Plan::build(MM_SQL, &db).unwrap();
    let root = plan.ghd.root();
    let (i, k, j) = (plan.hg.vertex_index("i").unwrap(), plan.hg.vertex_index("a.j").unwrap(), plan.hg.vertex_index("b.j").unwrap());
    let selected = plan.nodes[root].order == [i, k, j] && plan.nodes[root].relaxed;
    let ijk_cost = order_cost(&[i, j, k], &plan.order_inputs(root).unwrap(), &plan.config.costs).total;
    let max_cost = plan.candidate_orders(root).unwrap().iter().map(|c| c.cost.total).max().unwrap();
    let mut worst = plan.clone();
    worst.set_order(root, vec![i, j, k], &db).unwrap();
    let (fast, fs) = execute(&plan, &db, &ExecOptions::default()).unwrap();
    let (slow, ss) = execute(&worst, &db, &ExecOptions::default()).unwrap();
    let ratio = ss.intermediate_tuples as f64 / fs.intermediate_tuples.max(1) as f64;
    let same = fast.diff(&slow, 1e-9).is_none();
    outcome(
        selected && ijk_cost == max_cost && same && ratio >= MM_MIN_RATIO,
        format!(
            "chosen relaxed [i,k,j]: {selected}, intermediates {} vs {} for [i,j,k] (cost {ijk_cost}), ratio {ratio:.0}x",
            fs.intermediate_tuples, ss.intermediate_tuples
        ),
    )
}

fn group_chooser() -> Outcome {
    let config = PlanConfig::default();
    let mut r = rng(7);
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for &density in &GROUP_DENSITIES {
        let groups = ((GROUP_UNIVERSE as f64 * density) as u32).max(1);
        let ids: Vec<u32> = (0..GROUP_ROWS).map(|_| (r.random_range(0..groups) as u64 * GROUP_UNIVERSE as u64 / groups as u64) as u32).collect();
        let vals = vec![1.0; GROUP_ROWS];
        for &width in &GROUP_WIDTHS {
            let (chosen, t_chosen, t_best) = if width == 1 {
                let run = |s: KeyUnionStrategy| {
                    best_of(3, || group_by_key_with(s, 0..GROUP_UNIVERSE, Semiring::SumProduct, ids.iter().map(|&i| (i, 1.0))).0.cardinality()).1
                };
                let (bits, hash) = (run(KeyUnionStrategy::BitsetArray), run(KeyUnionStrategy::HashTable));
                let ((strategy, _, _), t) =
                    best_of(3, || group_by_key(density, 0..GROUP_UNIVERSE, Semiring::SumProduct, ids.iter().map(|&i| (i, 1.0)), &config));
                (strategy.to_string(), t, bits.min(hash))
            } else {
                let keys: Vec<u32> = ids.iter().flat_map(|&i| (0..width as u32).map(move |c| i.wrapping_mul(c + 1))).collect();
                let run = |s: GroupStrategy| best_of(3, || group_by_annotations_with(s, &keys, width, &vals, Semiring::SumProduct, GROUP_THREADS).len()).1;
                let (local, shared) = (run(GroupStrategy::PerWorkerTables), run(GroupStrategy::SharedConcurrentTable));
                let ((strategy, _), t) = best_of(3, || group_by_annotations(&keys, width, &vals, Semiring::SumProduct, GROUP_THREADS, &config));
                (strategy.to_string(), t, local.min(shared))
            };
            let ratio = t_chosen.as_secs_f64() / t_best.as_secs_f64();
            worst = worst.max(ratio);
            lines.push(format!("d={density} w={width} {chosen} {ratio:.2}"));
        }
    }
    eprintln!("  {}", lines.join("; "));
    outcome(worst <= GROUP_SLACK, format!("{} cases, worst chosen/best ratio {worst:.2}", lines.len()))
}

fn dense_path() -> Outcome {
    let n = DENSE_N;
    let a = dense_matrix(n, n, 1);
    let bm = dense_matrix(n, n, 2);
    let mut builder = Database::builder();
    builder.add_table(matrix_table("a", &a).unwrap()).unwrap();
    builder.add_table(matrix_table("b", &bm).unwrap()).unwrap();
    let db = builder.build().unwrap();
    let plan = Plan::build(MM_SQL, &db).unwrap();
    let ((got, stats), fast) = best_of(3, || execute(&plan, &db, &ExecOptions::default()).unwrap());
    let forced = ExecOptions { force_trie_path: true, ..Default::default() };
    let ((trie, _), slow) = best_of(1, || execute(&plan, &db, &forced).unwrap());

    let dense = |m: &[(i64, i64, f64)]| {
        let mut d = vec![0.0; n * n];
        for &(i, j, v) in m {
            d[i as usize * n + j as usize] = v;
        }
        d
    };
    let (da, db_) = (dense(&a), dense(&bm));
    let mut want = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += da[i * n + k] * db_[k * n + j];
            }
            want[i * n + j] = s;
        }
    }
    let norm = |m: &[f64]| m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let bound = DENSE_ERR * norm(&da) * norm(&db_);
    let mut err = 0.0f64;
    let mut covered = 0;
    for row in &got.rows {
        let (Some(i), Some(j), Some(v)) = (row[0].as_f64(), row[1].as_f64(), row[2].as_f64()) else { continue };
        err = err.max((v - want[i as usize * n + j as usize]).abs());
        covered += 1;
    }
    let same = got.diff(&trie, 1e-9).is_none();
    let speedup = slow.as_secs_f64() / fast.as_secs_f64();
    outcome(
        stats.dense_path && covered == n * n && err <= bound && same && speedup >= DENSE_MIN_SPEEDUP,
        format!("max error {err:.2e} (bound {bound:.2e}), dense {:.0}ms vs trie {:.0}ms, {speedup:.0}x", fast.as_secs_f64() * 1e3, slow.as_secs_f64() * 1e3),
    )
}

fn main() {
    let (dbs, queries) = suite();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("oracle equivalence", Box::new(|| oracle_equivalence(&dbs, &queries))),
        ("cost model constants", Box::new(cost_model)),
        ("fractional hypertree width", Box::new(fhw)),
        ("snowflake attribute order", Box::new(q5_order)),
        ("sparse matmul order", Box::new(matmul_order)),
        ("group-by chooser", Box::new(group_chooser)),
        ("dense fast path", Box::new(dense_path)),
        ("thread invariance", Box::new(|| thread_invariance(&dbs, &queries))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let o = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!o.pass);
        println!("{} {name}: {} [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
