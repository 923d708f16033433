//! Typed column buffers.

use super::schema::TypeFamily;
use super::value::Value;

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<String>),
}

impl Column {
    pub fn empty(family: TypeFamily) -> Column {
        match family {
            TypeFamily::Int => Column::Int(Vec::new()),
            TypeFamily::Float => Column::Float(Vec::new()),
            TypeFamily::Str => Column::Str(Vec::new()),
        }
    }

    pub fn family(&self) -> TypeFamily {
        match self {
            Column::Int(_) => TypeFamily::Int,
            Column::Float(_) => TypeFamily::Float,
            Column::Str(_) => TypeFamily::Str,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Int(v) => v.len(),
            Column::Float(v) => v.len(),
            Column::Str(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Value {
        match self {
            Column::Int(v) => Value::Int(v[i]),
            Column::Float(v) => Value::Float(v[i]),
            Column::Str(v) => Value::Str(v[i].clone()),
        }
    }

    #[inline]
    pub fn f64_at(&self, i: usize) -> f64 {
        match self {
            Column::Int(v) => v[i] as f64,
            Column::Float(v) => v[i],
            Column::Str(_) => f64::NAN,
        }
    }

    /// Appends a value of the column's family. Returns false on a type clash.
    pub fn push(&mut self, value: Value) -> bool {
        match (self, value) {
            (Column::Int(v), Value::Int(x)) => v.push(x),
            (Column::Float(v), Value::Float(x)) => v.push(x),
            (Column::Float(v), Value::Int(x)) => v.push(x as f64),
            (Column::Str(v), Value::Str(x)) => v.push(x),
            _ => return false,
        }
        true
    }

    /// Gathers `rows` into a new column.
    pub fn gather(&self, rows: impl Iterator<Item = usize>) -> Column {
        match self {
            Column::Int(v) => Column::Int(rows.map(|r| v[r]).collect()),
            Column::Float(v) => Column::Float(rows.map(|r| v[r]).collect()),
            Column::Str(v) => Column::Str(rows.map(|r| v[r].clone()).collect()),
        }
    }

    #[inline]
    pub fn eq_at(&self, i: usize, j: usize) -> bool {
        match self {
            Column::Int(v) => v[i] == v[j],
            Column::Float(v) => v[i].total_cmp(&v[j]).is_eq(),
            Column::Str(v) => v[i] == v[j],
        }
    }
}
