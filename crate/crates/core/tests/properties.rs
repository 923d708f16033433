use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::Rng;

use wcoj::datagen::{random_database, random_query, rng, RandomDbSpec};
use wcoj::exec::{execute, BlockedKernel, DenseKernel, ExecOptions};
use wcoj::ghd::node_width;
use wcoj::optimizer::{candidate_orders, choose_order, is_valid_relaxation, order_cost, score_relations, OrderConstraints, OrderInput};
use wcoj::oracle::oracle;
use wcoj::plan::Plan;
use wcoj::semiring::Semiring;
use wcoj::set::{intersect_many, Id, IntersectScratch, KeyUnionStrategy, Layout, LayoutCostTable, Set, SetConfig, UnionAccumulator};
use wcoj::storage::{build_trie, sort_rows, Database};

const UNIVERSE: Id = 700;

fn id_set() -> impl Strategy<Value = BTreeSet<Id>> {
    prop_oneof![
        prop::collection::btree_set(0..UNIVERSE, 0..20),
        prop::collection::btree_set(0..UNIVERSE, 100..500),
        prop::collection::btree_set(300..364u32, 0..64),
    ]
}

fn layout() -> impl Strategy<Value = Layout> {
    prop_oneof![Just(Layout::Bitset), Just(Layout::Uint)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn intersections_match_btreeset(sets in prop::collection::vec((id_set(), layout()), 1..5), gallop in 1usize..64) {
        let built: Vec<Set> = sets.iter().map(|(s, l)| Set::with_layout(&s.iter().copied().collect::<Vec<_>>(), 0..UNIVERSE, *l).unwrap()).collect();
        let views: Vec<_> = built.iter().map(Set::view).collect();
        let config = SetConfig { gallop_ratio: gallop, ..SetConfig::default() };
        let mut out = Vec::new();
        intersect_many(&views, &config, &mut IntersectScratch::default(), &mut out);
        let mut want = sets[0].0.clone();
        for (s, _) in &sets[1..] {
            want = want.intersection(s).copied().collect();
        }
        prop_assert_eq!(out, want.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn set_rank_and_membership_agree(s in id_set(), l in layout()) {
        let values: Vec<Id> = s.iter().copied().collect();
        let set = Set::with_layout(&values, 0..UNIVERSE, l).unwrap();
        prop_assert_eq!(set.cardinality(), values.len());
        prop_assert_eq!(set.to_vec(), values.clone());
        let view = set.view();
        for x in 0..UNIVERSE {
            let rank = values.binary_search(&x).ok().map(|r| r as u32);
            prop_assert_eq!(view.contains(x), rank.is_some());
            prop_assert_eq!(view.rank(x), rank);
        }
    }

    #[test]
    fn union_strategies_match_a_map(items in prop::collection::vec((0..UNIVERSE, -4i32..5), 0..400)) {
        let mut want: BTreeMap<Id, f64> = BTreeMap::new();
        for &(id, v) in &items {
            *want.entry(id).or_default() += v as f64;
        }
        for strategy in [KeyUnionStrategy::BitsetArray, KeyUnionStrategy::HashTable] {
            let mut acc = UnionAccumulator::new(0..UNIVERSE, Semiring::SumProduct, strategy);
            for &(id, v) in &items {
                acc.add(id, v as f64).unwrap();
            }
            let (set, vals) = acc.finish();
            let got: BTreeMap<Id, f64> = set.to_vec().into_iter().zip(vals).collect();
            prop_assert_eq!(&got, &want);
        }
    }

    #[test]
    fn tries_enumerate_their_distinct_tuples(rows in prop::collection::vec((0..6u32, 0..40u32, 0..3u32), 0..120)) {
        let cols: Vec<Vec<Id>> = vec![rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect()];
        let refs: Vec<&[Id]> = cols.iter().map(Vec::as_slice).collect();
        let order = sort_rows(&refs, (0..rows.len() as u32).collect());
        let sorted: Vec<Vec<Id>> = cols.iter().map(|c| order.iter().map(|&r| c[r as usize]).collect()).collect();
        let srefs: Vec<&[Id]> = sorted.iter().map(Vec::as_slice).collect();
        let (trie, leaf_of_row) = build_trie(&srefs, &[(0, 6), (0, 40), (0, 3)], &SetConfig::default());
        let mut paths = Vec::new();
        trie.for_each_path(|p, leaf| paths.push((p.to_vec(), leaf)));
        let want: BTreeSet<Vec<Id>> = rows.iter().map(|r| vec![r.0, r.1, r.2]).collect();
        prop_assert_eq!(paths.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>(), want.iter().cloned().collect::<Vec<_>>());
        prop_assert_eq!(trie.num_tuples(), want.len());
        for (i, &leaf) in leaf_of_row.iter().enumerate() {
            let tuple: Vec<Id> = sorted.iter().map(|c| c[i]).collect();
            prop_assert_eq!(trie.path_position(&tuple), Some(leaf));
        }
    }

    #[test]
    fn blocked_kernel_matches_naive(n in 1usize..20, k in 1usize..20, m in 1usize..20, block in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a: Vec<f64> = (0..n * k).map(|_| r.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..k * m).map(|_| r.random_range(-2.0..2.0)).collect();
        let mut out = vec![0.0; n * m];
        BlockedKernel { block }.matmul(&a, &b, n, k, m, &mut out, 3);
        for i in 0..n {
            for j in 0..m {
                let want: f64 = (0..k).map(|p| a[i * k + p] * b[p * m + j]).sum();
                prop_assert!((out[i * m + j] - want).abs() <= 1e-12 * (k as f64) * 4.0);
            }
        }
    }

    #[test]
    fn scores_are_normalized(cards in prop::collection::vec(0usize..100_000, 1..8)) {
        prop_assume!(cards.iter().any(|&c| c > 0));
        let scores = score_relations(&cards).unwrap();
        prop_assert!(scores.iter().all(|&s| (1..=100).contains(&s)));
        prop_assert_eq!(*scores.iter().max().unwrap(), 100);
        for i in 0..cards.len() {
            for j in 0..cards.len() {
                if cards[i] <= cards[j] {
                    prop_assert!(scores[i] <= scores[j]);
                }
            }
        }
    }
}

/// Minimum fractional edge cover by checking every vertex of the polytope.
fn cover_by_enumeration(nv: usize, edges: &[Vec<usize>]) -> BigRational {
    let m = edges.len();
    let mut rows: Vec<(Vec<BigRational>, BigRational)> =
        (0..nv).map(|v| (edges.iter().map(|e| if e.contains(&v) { BigRational::one() } else { BigRational::zero() }).collect(), BigRational::one())).collect();
    rows.extend((0..m).map(|e| ((0..m).map(|k| if k == e { BigRational::one() } else { BigRational::zero() }).collect(), BigRational::zero())));
    let mut best: Option<BigRational> = None;
    for mask in 0u32..(1 << rows.len()) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let mut a: Vec<(Vec<BigRational>, BigRational)> = (0..rows.len()).filter(|i| mask >> i & 1 == 1).map(|i| rows[i].clone()).collect();
        let mut singular = false;
        for c in 0..m {
            let Some(p) = (c..m).find(|&r| !a[r].0[c].is_zero()) else {
                singular = true;
                break;
            };
            a.swap(c, p);
            let pivot = a[c].0[c].clone();
            a[c].0.iter_mut().for_each(|x| *x = &*x / &pivot);
            a[c].1 = &a[c].1 / &pivot;
            for r in 0..m {
                if r != c && !a[r].0[c].is_zero() {
                    let f = a[r].0[c].clone();
                    let (pr, pb) = (a[c].0.clone(), a[c].1.clone());
                    a[r].0.iter_mut().zip(&pr).for_each(|(x, y)| *x = &*x - &f * y);
                    a[r].1 = &a[r].1 - &f * &pb;
                }
            }
        }
        if singular {
            continue;
        }
        let x: Vec<BigRational> = a.into_iter().map(|(_, b)| b).collect();
        let feasible = rows.iter().all(|(coef, b)| coef.iter().zip(&x).fold(BigRational::zero(), |s, (p, q)| s + p * q) >= *b);
        if feasible {
            let total = x.iter().fold(BigRational::zero(), |s, t| s + t);
            if best.as_ref().is_none_or(|b| &total < b) {
                best = Some(total);
            }
        }
    }
    best.unwrap()
}

fn hypergraph() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (2usize..6).prop_flat_map(|nv| {
        let edge = prop::collection::btree_set(0..nv, 1..=nv.min(3)).prop_map(|s| s.into_iter().collect::<Vec<_>>());
        (Just(nv), prop::collection::vec(edge, 1..5)).prop_map(|(nv, mut edges)| {
            for v in 0..nv {
                if !edges.iter().any(|e| e.contains(&v)) {
                    edges.push(vec![v]);
                }
            }
            (nv, edges)
        })
    })
}

fn order_problem() -> impl Strategy<Value = (Vec<OrderInput>, usize, Vec<usize>)> {
    (2usize..5).prop_flat_map(|nv| {
        let input = (prop::collection::btree_set(0..nv, 1..=nv.min(3)), 1u64..=100, any::<bool>());
        (Just(nv), prop::collection::vec(input, 1..5), prop::collection::btree_set(0..nv, 0..nv)).prop_map(|(nv, specs, mat)| {
            let mut inputs: Vec<OrderInput> = specs
                .into_iter()
                .enumerate()
                .map(|(i, (vs, score, dense))| OrderInput { name: format!("r{i}"), vertices: vs.into_iter().collect(), score, dense, selected: Vec::new() })
                .collect();
            for v in 0..nv {
                if !inputs.iter().any(|i| i.vertices.contains(&v)) {
                    inputs.push(OrderInput { name: format!("u{v}"), vertices: vec![v], score: 50, dense: false, selected: Vec::new() });
                }
            }
            (inputs, nv, mat.into_iter().collect())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn node_width_matches_vertex_enumeration((nv, edges) in hypergraph()) {
        let vertices: Vec<usize> = (0..nv).collect();
        let width = node_width(&vertices, &edges).unwrap();
        prop_assert_eq!(&width, &cover_by_enumeration(nv, &edges));
        prop_assert!(width >= BigRational::one());
        prop_assert!(width <= BigRational::from_integer((edges.len() as i64).into()));
    }

    #[test]
    fn chosen_order_is_minimal_and_admissible((inputs, nv, mat) in order_problem(), relaxed in any::<bool>()) {
        let vertices: Vec<usize> = (0..nv).collect();
        let table = LayoutCostTable::default();
        let c = OrderConstraints { materialized: mat.clone(), before: Vec::new(), allow_relaxed: relaxed && mat.len() + 1 == nv };
        let best = choose_order(&vertices, &c, &inputs, &table).unwrap();
        for cand in candidate_orders(&vertices, &c, &inputs, &table) {
            prop_assert!(best.cost.total <= cand.cost.total);
        }
        prop_assert_eq!(best.cost.clone(), order_cost(&best.order, &inputs, &table));
        let mut sorted = best.order.clone();
        sorted.sort();
        prop_assert_eq!(sorted, vertices);
        if best.relaxed {
            prop_assert!(is_valid_relaxation(&best.order, &mat, &inputs, &table));
        } else {
            let first_free = best.order.iter().position(|v| !mat.contains(v)).unwrap_or(nv);
            prop_assert!(best.order[first_free..].iter().all(|v| !mat.contains(v)));
        }
    }
}

fn database(seed: u64) -> Database {
    let mut r = rng(seed);
    let mut b = Database::builder();
    for t in random_database(&RandomDbSpec { relations: 5, max_rows: 30, key_universe: 5 }, &mut r) {
        b.add_table(t).unwrap();
    }
    b.build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_matches_oracle(db_seed in 0u64..1_000_000, query_seed in any::<u64>(), threads in 1usize..6) {
        let db = database(db_seed);
        let schemas: Vec<_> = db.relations().map(|r| r.schema().clone()).collect();
        let sql = random_query(&schemas, &mut rng(query_seed));
        let plan = Plan::build(&sql, &db).unwrap();
        let (got, _) = execute(&plan, &db, &ExecOptions { threads, ..Default::default() }).unwrap();
        let want = oracle(&plan.ir, &db);
        prop_assert!(got.diff(&want, 1e-9).is_none(), "{}\n{:?}", sql, got.diff(&want, 1e-9));
    }
}
