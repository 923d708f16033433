use wcoj::exec::{execute, ExecOptions};
use wcoj::plan::Plan;
use wcoj::storage::{ColumnDef, ColumnType, Database, Schema};

fn schema(name: &str, cols: &[(&str, bool, ColumnType)]) -> Schema {
    Schema::new(name, cols.iter().map(|&(n, key, t)| if key { ColumnDef::key(n, t) } else { ColumnDef::annotation(n, t) }).collect())
}

fn database() -> Database {
    use ColumnType::*;
    let mut b = Database::builder();
    b.add_csv_str(schema("a", &[("i", true, Int), ("k", true, Int), ("v", false, Double)]), "i,k,v\n0,0,1\n0,1,2\n1,1,3\n").unwrap();
    b.add_csv_str(schema("b", &[("k", true, Int), ("j", true, Int), ("v", false, Double)]), "k,j,v\n0,0,1\n1,0,2\n1,1,3\n").unwrap();
    b.add_csv_str(schema("r", &[("x", true, Int), ("y", true, Int)]), "x,y\n1,2\n").unwrap();
    b.add_csv_str(schema("s", &[("y", true, Int), ("z", true, Int)]), "y,z\n2,3\n").unwrap();
    b.add_csv_str(schema("t", &[("x", true, Int), ("z", true, Int)]), "x,z\n1,3\n").unwrap();
    b.add_csv_str(schema("region", &[("r_regionkey", true, Int), ("r_name", false, String)]), "r_regionkey,r_name\n0,ASIA\n1,EUROPE\n").unwrap();
    b.add_csv_str(
        schema("nation", &[("n_nationkey", true, Int), ("n_regionkey", true, Int), ("n_name", false, String)]),
        "n_nationkey,n_regionkey,n_name\n0,0,CHINA\n1,1,FRANCE\n2,0,JAPAN\n",
    )
    .unwrap();
    b.add_csv_str(schema("supplier", &[("s_suppkey", true, Int), ("s_nationkey", true, Int)]), "s_suppkey,s_nationkey\n0,0\n1,2\n2,1\n").unwrap();
    b.add_csv_str(schema("customer", &[("c_custkey", true, Int), ("c_nationkey", true, Int)]), "c_custkey,c_nationkey\n0,0\n1,2\n2,1\n3,0\n").unwrap();
    b.add_csv_str(
        schema("orders", &[("o_orderkey", true, Int), ("o_custkey", true, Int), ("o_orderdate", false, Int)]),
        "o_orderkey,o_custkey,o_orderdate\n0,0,19940301\n1,1,19940501\n2,3,19960101\n",
    )
    .unwrap();
    b.add_csv_str(
        schema(
            "lineitem",
            &[
                ("l_orderkey", true, Int),
                ("l_linenumber", true, Int),
                ("l_suppkey", true, Int),
                ("l_extendedprice", false, Double),
                ("l_discount", false, Double),
            ],
        ),
        "l_orderkey,l_linenumber,l_suppkey,l_extendedprice,l_discount\n0,0,0,100,0.1\n0,1,1,200,0\n1,0,1,50,0.5\n2,0,0,10,0\n",
    )
    .unwrap();
    b.build().unwrap()
}

fn check(sql: &str, explain: &str, csv: &str) {
    let db = database();
    let plan = Plan::build(sql, &db).unwrap();
    assert_eq!(plan.explain(), explain, "{sql}");
    for opts in [
        ExecOptions { threads: 1, ..Default::default() },
        ExecOptions { threads: 3, ..Default::default() },
        ExecOptions { force_trie_path: true, ..Default::default() },
    ] {
        let (table, _) = execute(&plan, &db, &opts).unwrap();
        assert_eq!(table.to_csv(), csv, "{sql} with {opts:?}");
    }
}

#[test]
fn matmul_uses_the_relaxed_order() {
    check(
        "SELECT a.i, b.j, SUM(a.v * b.v) FROM a, b WHERE a.k = b.k GROUP BY a.i, b.j",
        "plan fhw=1 passes=[sum] alpha=[k]\n\
         node{i,j,k}[a,b] width=1 sel=[] order=[i,k,j] cost=1000 terms=[(0,100),(10,100),(0,100)] relaxed union=bitset_array\n",
        "i,j,SUM(a.v * b.v)\n0,0,5\n0,1,6\n1,0,6\n1,1,9\n",
    );
}

#[test]
fn triangle_has_width_three_halves() {
    check(
        "SELECT COUNT(*) FROM r, s, t WHERE r.y = s.y AND s.z = t.z AND r.x = t.x",
        "plan fhw=3/2 passes=[count] alpha=[z,y,x]\n\
         node{x,y,z}[r,s,t] width=3/2 sel=[] order=[x,y,z] cost=0 terms=[(0,100),(0,100),(0,100)]\n",
        "COUNT(*)\n1\n",
    );
}

#[test]
fn scan_has_an_empty_order() {
    check("SELECT SUM(v) FROM a", "plan fhw=0 passes=[sum] alpha=[]\nnode{}[a] width=0 sel=[] order=[] cost=0 terms=[]\n", "SUM(v)\n6\n");
}

#[test]
fn snowflake_pushes_selections_into_children() {
    check(
        "SELECT n_name, SUM(l_extendedprice * (1 - l_discount)) AS revenue FROM customer, orders, lineitem, supplier, nation, region \
         WHERE c_custkey = o_custkey AND l_orderkey = o_orderkey AND l_suppkey = s_suppkey AND c_nationkey = s_nationkey \
         AND s_nationkey = n_nationkey AND n_regionkey = r_regionkey AND r_name = 'ASIA' AND o_orderdate > 19940101 \
         AND o_orderdate < 19950101 GROUP BY n_name",
        "plan fhw=2 passes=[sum] alpha=[regionkey,nationkey,suppkey,orderkey,custkey] groupby=per_worker_tables\n\
         node{custkey,nationkey,orderkey,suppkey}[customer,lineitem,supplier] width=2 sel=[] order=[custkey,orderkey,suppkey,nationkey] cost=4575 terms=[(1,75),(10,75),(10,75),(60,50)]\n  \
         node{nationkey,regionkey}[nation] width=1 sel=[] order=[regionkey,nationkey] cost=67 terms=[(1,67),(0,100)] relaxed union=bitset_array\n    \
         node{regionkey}[region] width=1 sel=[r_name='ASIA'] order=[] cost=0 terms=[]\n  \
         node{custkey,orderkey}[orders] width=1 sel=[o_orderdate>19940101,o_orderdate<19950101] order=[] cost=0 terms=[]\n",
        "n_name,revenue\nCHINA,90\nJAPAN,25\n",
    );
}
