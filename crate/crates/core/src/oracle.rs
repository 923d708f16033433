//! Reference evaluator: backtracking nested loops over decoded rows with
//! direct expression evaluation. Slow, but shares no code with the planner
//! or the join.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::ir::{parse, AggFunc, BinOp, CmpOp, ColRef, Expr, OutputColumn, QueryIr};
use crate::result::ResultTable;
use crate::storage::{Database, Value};

pub fn oracle_query(sql: &str, db: &Database) -> Result<ResultTable> {
    let ir = parse(sql, db)?;
    Ok(oracle(&ir, db))
}

/// Evaluates resolved IR by enumerating every combination of rows.
pub fn oracle(ir: &QueryIr, db: &Database) -> ResultTable {
    let dicts = db.dictionaries();
    let tables: Vec<Vec<Vec<Value>>> = ir
        .relations
        .iter()
        .enumerate()
        .map(|(ri, r)| {
            let rel = db.relation(&r.relation).expect("resolved relation");
            (0..rel.num_rows())
                .map(|row| (0..r.schema.columns.len()).map(|c| rel.value(row, c, dicts)).collect::<Vec<Value>>())
                .filter(|row| ir.selections.iter().filter(|s| s.column.rel == ri).all(|s| compare(&row[s.column.col], s.op, &s.value)))
                .collect()
        })
        .collect();

    let mut groups: BTreeMap<Vec<Value>, Vec<Option<f64>>> = BTreeMap::new();
    let mut chosen = vec![0usize; tables.len()];
    let mut visit = |chosen: &[usize]| {
        let col = |c: ColRef| &tables[c.rel][chosen[c.rel]][c.col];
        let key: Vec<Value> = ir.group_by.iter().map(|&c| col(c).clone()).collect();
        let entry = groups.entry(key).or_insert_with(|| vec![None; ir.aggregates.len()]);
        for (a, agg) in ir.aggregates.iter().enumerate() {
            let x = match &agg.expr {
                None => 1.0,
                Some(e) if agg.func == AggFunc::Count => {
                    let _ = eval(e, &|c| col(c).as_f64().unwrap_or(0.0));
                    1.0
                }
                Some(e) => eval(e, &|c| col(c).as_f64().unwrap_or(f64::NAN)),
            };
            entry[a] = Some(match (entry[a], agg.func) {
                (None, _) => x,
                (Some(acc), AggFunc::Sum | AggFunc::Count) => acc + x,
                (Some(acc), AggFunc::Min) => acc.min(x),
                (Some(acc), AggFunc::Max) => acc.max(x),
            });
        }
    };
    search(ir, &tables, 0, &mut chosen, &mut visit);

    let mut out = ResultTable::new(ir.output_names.clone());
    for (key, vals) in groups {
        out.rows.push(
            ir.outputs
                .iter()
                .map(|o| match *o {
                    OutputColumn::Group(g) => key[g].clone(),
                    OutputColumn::Aggregate(a) => {
                        let x = vals[a].expect("every group has a tuple");
                        if ir.aggregates[a].integral && x.is_finite() {
                            Value::Int(x.round() as i64)
                        } else {
                            Value::Float(x)
                        }
                    }
                })
                .collect(),
        );
    }
    out
}

fn search(ir: &QueryIr, tables: &[Vec<Vec<Value>>], depth: usize, chosen: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if depth == tables.len() {
        visit(chosen);
        return;
    }
    'rows: for r in 0..tables[depth].len() {
        chosen[depth] = r;
        for j in &ir.joins {
            let (a, b) = (j.left, j.right);
            if a.rel.max(b.rel) != depth {
                continue;
            }
            if tables[a.rel][chosen[a.rel]][a.col] != tables[b.rel][chosen[b.rel]][b.col] {
                continue 'rows;
            }
        }
        search(ir, tables, depth + 1, chosen, visit);
    }
}

fn compare(v: &Value, op: CmpOp, lit: &Value) -> bool {
    match (v, lit) {
        (Value::Str(_), Value::Str(_)) | (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => {}
        _ => return false,
    }
    match op {
        CmpOp::Eq => v == lit,
        CmpOp::Lt => v < lit,
        CmpOp::Gt => v > lit,
    }
}

fn eval(e: &Expr, col: &impl Fn(ColRef) -> f64) -> f64 {
    match e {
        Expr::Col(c) => col(*c),
        Expr::Num { value, .. } => *value,
        Expr::Neg(x) => -eval(x, col),
        Expr::Bin(op, l, r) => {
            let (x, y) = (eval(l, col), eval(r, col));
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            }
        }
    }
}
