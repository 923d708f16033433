//! Query results as typed rows, with CSV output and tolerant comparison.

use std::io::Write;

use crate::error::{Error, Result};
use crate::storage::Value;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn new(columns: Vec<String>) -> ResultTable {
        ResultTable { columns, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Writes a header line and one record per row.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Internal(format!("writing results: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Internal(format!("writing results: {e}")))?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Rows sorted by all columns, for order-insensitive comparison.
    pub fn sorted(&self) -> ResultTable {
        let mut rows = self.rows.clone();
        rows.sort();
        ResultTable { columns: self.columns.clone(), rows }
    }

    /// First difference against `other`, comparing rows as multisets and
    /// numbers within `rel_tol` relative error.
    pub fn diff(&self, other: &ResultTable, rel_tol: f64) -> Option<String> {
        if self.columns != other.columns {
            return Some(format!("columns {:?} vs {:?}", self.columns, other.columns));
        }
        if self.rows.len() != other.rows.len() {
            return Some(format!("{} rows vs {}", self.rows.len(), other.rows.len()));
        }
        let (a, b) = (self.sorted_tolerant(), other.sorted_tolerant());
        for (r, (x, y)) in a.iter().zip(&b).enumerate() {
            for (c, (u, v)) in x.iter().zip(y).enumerate() {
                if !values_close(u, v, rel_tol) {
                    return Some(format!("row {r} column {}: {u} vs {v}", self.columns[c]));
                }
            }
        }
        None
    }

    /// Sorts on non-float columns first so rounding noise cannot reorder
    /// rows whose keys agree.
    fn sorted_tolerant(&self) -> Vec<Vec<Value>> {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| {
            let key = |r: &Vec<Value>| r.iter().filter(|v| !matches!(v, Value::Float(_))).cloned().collect::<Vec<_>>();
            key(a).cmp(&key(b)).then_with(|| a.cmp(b))
        });
        rows
    }
}

pub fn values_close(a: &Value, b: &Value, rel_tol: f64) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y || (x - y).abs() <= rel_tol * x.abs().max(y.abs()).max(1.0),
        _ => a == b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_header() {
        let mut t = ResultTable::new(vec!["name".into(), "total".into()]);
        t.rows.push(vec![Value::Str("a,b".into()), Value::Int(3)]);
        t.rows.push(vec![Value::Str("c".into()), Value::Float(1.5)]);
        assert_eq!(t.to_csv(), "name,total\n\"a,b\",3\nc,1.5\n");
    }

    #[test]
    fn diff_tolerates_rounding() {
        let mut a = ResultTable::new(vec!["k".into(), "v".into()]);
        a.rows.push(vec![Value::Int(1), Value::Float(0.1 + 0.2)]);
        let mut b = a.clone();
        b.rows[0][1] = Value::Float(0.3);
        assert!(a.diff(&b, 1e-9).is_none());
        b.rows[0][1] = Value::Float(0.31);
        assert!(a.diff(&b, 1e-9).is_some());
    }
}
