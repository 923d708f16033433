use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const MATMUL: &str = "SELECT a.i, b.j, SUM(a.v * b.v) FROM a, b WHERE a.j = b.i GROUP BY a.i, b.j";
const Q5: &str = "SELECT n_name, SUM(l_extendedprice * (1 - l_discount)) AS revenue \
    FROM customer, orders, lineitem, supplier, nation, region \
    WHERE c_custkey = o_custkey AND l_orderkey = o_orderkey AND l_suppkey = s_suppkey \
    AND c_nationkey = s_nationkey AND s_nationkey = n_nationkey AND n_regionkey = r_regionkey \
    AND r_name = 'ASIA' AND o_orderdate > 19931231 AND o_orderdate < 19950101 GROUP BY n_name";

fn wcoj(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wcoj")).arg("--data-dir").arg(dir).args(args).env_remove("WCOJ_DATA_DIR").output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = wcoj(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn identity(dir: &TempDir, n: usize) -> std::path::PathBuf {
    let path = dir.path().join("id.mtx");
    let mut text = format!("%%MatrixMarket matrix coordinate real general\n{n} {n} {n}\n");
    for i in 1..=n {
        text.push_str(&format!("{i} {i} 1\n"));
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn assert_same_rows(a: &str, b: &str) {
    let rows = |csv: &str| {
        let mut lines: Vec<String> = csv.lines().skip(1).map(str::to_string).collect();
        lines.sort();
        lines
    };
    assert_eq!(a.lines().next(), b.lines().next());
    let (ra, rb) = (rows(a), rows(b));
    assert_eq!(ra.len(), rb.len(), "{a}\nvs\n{b}");
    for (x, y) in ra.iter().zip(&rb) {
        for (p, q) in x.split(',').zip(y.split(',')) {
            match (p.parse::<f64>(), q.parse::<f64>()) {
                (Ok(u), Ok(v)) => assert!((u - v).abs() <= 1e-9 * u.abs().max(v.abs()).max(1.0), "{x} vs {y}"),
                _ => assert_eq!(p, q),
            }
        }
    }
}

#[test]
fn ingest_prints_a_deterministic_census() {
    let dir = tempfile::tempdir().unwrap();
    let id = identity(&dir, 4);
    let data = dir.path().join("data");
    let first = ok(&data, &["ingest", id.to_str().unwrap(), "--name", "m"]);
    assert_eq!(first, "relation m rows=4\nlevel0 (i): 0 uint, 1 bs\nlevel1 (j): 0 uint, 4 bs\n");
    let second = ok(&data, &["ingest", id.to_str().unwrap(), "--name", "m"]);
    assert_eq!(first, second);
    let manifest = std::fs::read_to_string(data.join("catalog.json")).unwrap();
    assert_eq!(manifest.matches("\"name\": \"m\"").count(), 1);
}

#[test]
fn bad_csv_row_is_a_user_error_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let schema = dir.path().join("r.json");
    std::fs::write(&schema, r#"{"relation":"r","columns":[{"name":"a","kind":"KEY","type":"INT"},{"name":"x","kind":"ANNOTATION","type":"DOUBLE"}]}"#).unwrap();
    let csv = dir.path().join("r.csv");
    std::fs::write(&csv, "a,x\n1,2.5\n2,oops\n").unwrap();
    let out = wcoj(&dir.path().join("data"), &["ingest", csv.to_str().unwrap(), "--schema", schema.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("data/catalog.json").exists());
}

#[test]
fn matrix_vector_product_with_identity_returns_the_vector() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let id = identity(&dir, 5);
    ok(&data, &["ingest", id.to_str().unwrap(), "--name", "a"]);
    let schema = dir.path().join("x.json");
    std::fs::write(&schema, r#"{"relation":"x","columns":[{"name":"i","kind":"KEY","type":"INT"},{"name":"v","kind":"ANNOTATION","type":"DOUBLE"}]}"#).unwrap();
    let vector = "i,v\n0,1.5\n1,-2\n2,0.25\n3,4\n4,8\n";
    let csv = dir.path().join("x.csv");
    std::fs::write(&csv, vector).unwrap();
    ok(&data, &["ingest", csv.to_str().unwrap(), "--schema", schema.to_str().unwrap()]);
    let out = dir.path().join("y.csv");
    ok(&data, &["query", "--output", out.to_str().unwrap(), "SELECT a.i, SUM(a.v * x.v) AS v FROM a, x WHERE a.j = x.i GROUP BY a.i"]);
    assert_eq!(std::fs::read_to_string(out).unwrap(), vector);
}

#[test]
fn snowflake_query_matches_the_oracle_and_is_thread_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    ok(data, &["gen", "--seed", "5", "snowflake", "--scale", "0.005"]);
    let engine1 = ok(data, &["query", "--threads", "1", Q5]);
    let engine8 = ok(data, &["query", "--threads", "8", Q5]);
    let oracle = ok(data, &["oracle", Q5]);
    assert_same_rows(&engine1, &oracle);
    assert_same_rows(&engine1, &engine8);
    assert!(engine1.lines().count() > 1);
}

#[test]
fn explain_reports_orders_and_widths() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    ok(data, &["gen", "sparse", "a", "--rows", "50", "--cols", "50", "--nnz", "200"]);
    ok(data, &["gen", "--seed", "1", "sparse", "b", "--rows", "50", "--cols", "50", "--nnz", "200"]);
    let plan = ok(data, &["explain", MATMUL]);
    assert_eq!(plan.lines().filter(|l| l.starts_with("node")).count(), 1);
    assert!(plan.contains("order=[i,a.j,b.j]") && plan.contains(" relaxed"), "{plan}");

    let triangle = ok(data, &["explain", "SELECT COUNT(*) FROM a, b, a AS c WHERE a.j = b.i AND b.j = c.j AND a.i = c.i"]);
    assert!(triangle.contains("width=3/2"), "{triangle}");
    let scan = ok(data, &["explain", "SELECT SUM(v) FROM a"]);
    assert!(scan.contains("order=[]") && scan.lines().filter(|l| l.starts_with("node")).count() == 1, "{scan}");
}

#[test]
fn query_stats_go_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    ok(data, &["gen", "sparse", "a", "--rows", "20", "--cols", "20", "--nnz", "40"]);
    ok(data, &["gen", "sparse", "b", "--rows", "20", "--cols", "20", "--nnz", "40"]);
    let out = wcoj(data, &["query", "--stats", MATMUL]);
    assert_eq!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["execution_ms=", "intersections=", "intermediate_tuples=", "operators=[union="] {
        assert!(err.contains(key), "{err}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("i,j,"));
}

#[test]
fn generators_are_seeded_and_exact() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["one", "two"] {
        ok(&dir.path().join(run), &["gen", "--seed", "9", "sparse", "m", "--rows", "1000", "--cols", "1000", "--nnz", "5000"]);
    }
    let one = std::fs::read_to_string(dir.path().join("one/m.mtx")).unwrap();
    let two = std::fs::read_to_string(dir.path().join("two/m.mtx")).unwrap();
    assert_eq!(one, two);
    let coords: std::collections::HashSet<&str> = one.lines().skip(2).map(|l| l.rsplit_once(' ').unwrap().0).collect();
    assert_eq!(coords.len(), 5000);

    let other = dir.path().join("three");
    ok(&other, &["gen", "--seed", "10", "sparse", "m", "--rows", "1000", "--cols", "1000", "--nnz", "5000"]);
    assert_ne!(std::fs::read_to_string(other.join("m.mtx")).unwrap(), one);

    let snow = dir.path().join("snow");
    let report = ok(&snow, &["gen", "snowflake", "--scale", "0.01"]);
    let expected = [("region", 5.0), ("nation", 25.0), ("supplier", 100.0), ("customer", 1500.0), ("orders", 15000.0), ("lineitem", 60000.0)];
    for (rel, want) in expected {
        let line = report.lines().find(|l| l.starts_with(&format!("{rel} "))).unwrap();
        let rows: f64 = line.rsplit_once('=').unwrap().1.parse().unwrap();
        assert!((rows - want).abs() <= 0.01 * want, "{rel}: {rows} vs {want}");
        let file_rows = std::fs::read_to_string(snow.join(format!("{rel}.csv"))).unwrap().lines().count() - 1;
        assert_eq!(file_rows as f64, rows);
    }
}

#[test]
fn oracle_handles_counts_and_empty_joins() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let id = identity(&dir, 7);
    ok(&data, &["ingest", id.to_str().unwrap(), "--name", "a"]);
    assert_eq!(ok(&data, &["oracle", "SELECT COUNT(*) FROM a"]), "COUNT(*)\n7\n");
    assert_eq!(ok(&data, &["query", "SELECT COUNT(*) FROM a"]), "COUNT(*)\n7\n");
    let empty = "%%MatrixMarket matrix coordinate real general\n7 7 0\n";
    let e = dir.path().join("e.mtx");
    std::fs::write(&e, empty).unwrap();
    ok(&data, &["ingest", e.to_str().unwrap()]);
    let sql = "SELECT a.i, e.j, SUM(a.v * e.v) FROM a, e WHERE a.j = e.i GROUP BY a.i, e.j";
    assert_eq!(ok(&data, &["oracle", sql]), "i,j,SUM(a.v * e.v)\n");
    assert_eq!(ok(&data, &["query", sql]), "i,j,SUM(a.v * e.v)\n");
}

#[test]
fn exit_codes_separate_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    ok(data, &["gen", "dense", "a", "--rows", "3", "--cols", "3"]);
    assert_eq!(code(&wcoj(data, &["query", "SELECT nope FROM a"])), 1);
    assert_eq!(code(&wcoj(data, &["query", "SELECT FROM"])), 1);
    assert_eq!(code(&wcoj(data, &["query", "SELECT COUNT(*) FROM missing"])), 1);
    assert_eq!(code(&wcoj(data, &["frobnicate"])), 1);
    assert_eq!(code(&wcoj(data, &["query"])), 1);
    assert_eq!(code(&wcoj(data, &["--help"])), 0);
    let parse = wcoj(data, &["explain", "SELECT COUNT(*)\nFROM a WHERE a.i = = 1"]);
    assert_eq!(code(&parse), 1);
    assert!(String::from_utf8_lossy(&parse.stderr).contains("2:"), "{}", String::from_utf8_lossy(&parse.stderr));
}

#[test]
fn data_dir_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| Command::new(env!("CARGO_BIN_EXE_wcoj")).args(args).env("WCOJ_DATA_DIR", dir.path()).output().unwrap();
    assert!(run(&["gen", "dense", "d", "--rows", "2", "--cols", "2"]).status.success());
    assert!(dir.path().join("catalog.json").exists());
    let out = run(&["query", "SELECT COUNT(*) FROM d"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "COUNT(*)\n4\n");
}

#[test]
fn bench_reports_a_trimmed_mean() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    ok(data, &["gen", "dense", "a", "--rows", "8", "--cols", "8"]);
    ok(data, &["gen", "dense", "b", "--rows", "8", "--cols", "8"]);
    let out = dir.path().join("bench.csv");
    let report = ok(data, &["bench", "--threads", "2", "--output", out.to_str().unwrap(), MATMUL]);
    assert!(report.starts_with("runs=7 threads=2 mean_ms="), "{report}");
    assert!(report.trim_end().ends_with("rows=64"), "{report}");
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 65);
}
