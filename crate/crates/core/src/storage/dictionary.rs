//! Order-preserving dictionaries from raw key values to dense ids.

use super::schema::TypeFamily;
use super::value::Value;
use crate::set::Id;

#[derive(Clone, Debug)]
enum Values {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<String>),
}

/// Bijection between the distinct raw values of one key domain and
/// `0..len`. Ids follow the ascending order of the raw values.
#[derive(Clone, Debug)]
pub struct Dictionary {
    values: Values,
}

impl Dictionary {
    /// Builds from arbitrary (unsorted, repeating) values of a single family.
    pub fn build(family: TypeFamily, values: impl IntoIterator<Item = Value>) -> Dictionary {
        let values = match family {
            TypeFamily::Int => {
                let mut v: Vec<i64> = values.into_iter().map(|x| as_int(&x).expect("int domain value")).collect();
                v.sort_unstable();
                v.dedup();
                Values::Int(v)
            }
            TypeFamily::Float => {
                let mut v: Vec<f64> = values.into_iter().map(|x| x.as_f64().expect("float domain value")).collect();
                v.sort_unstable_by(f64::total_cmp);
                v.dedup_by(|a, b| a.total_cmp(b).is_eq());
                Values::Float(v)
            }
            TypeFamily::Str => {
                let mut v: Vec<String> = values
                    .into_iter()
                    .map(|x| match x {
                        Value::Str(s) => s,
                        other => other.to_string(),
                    })
                    .collect();
                v.sort_unstable();
                v.dedup();
                Values::Str(v)
            }
        };
        Dictionary { values }
    }

    pub fn family(&self) -> TypeFamily {
        match self.values {
            Values::Int(_) => TypeFamily::Int,
            Values::Float(_) => TypeFamily::Float,
            Values::Str(_) => TypeFamily::Str,
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            Values::Int(v) => v.len(),
            Values::Float(v) => v.len(),
            Values::Str(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Id of a raw value, or `None` when the value never occurs in the domain.
    pub fn encode(&self, value: &Value) -> Option<Id> {
        let pos = match (&self.values, value) {
            (Values::Int(v), x) => v.binary_search(&as_int(x)?).ok(),
            (Values::Float(v), x) => {
                let x = x.as_f64()?;
                v.binary_search_by(|p| p.total_cmp(&x)).ok()
            }
            (Values::Str(v), Value::Str(s)) => v.binary_search(s).ok(),
            (Values::Str(_), _) => None,
        };
        pos.map(|p| p as Id)
    }

    pub fn encode_int(&self, value: i64) -> Option<Id> {
        match &self.values {
            Values::Int(v) => v.binary_search(&value).ok().map(|p| p as Id),
            _ => self.encode(&Value::Int(value)),
        }
    }

    pub fn decode(&self, id: Id) -> Value {
        match &self.values {
            Values::Int(v) => Value::Int(v[id as usize]),
            Values::Float(v) => Value::Float(v[id as usize]),
            Values::Str(v) => Value::Str(v[id as usize].clone()),
        }
    }
}

fn as_int(v: &Value) -> Option<i64> {
    match v {
        Value::Int(x) => Some(*x),
        Value::Float(f) if f.fract() == 0.0 => Some(*f as i64),
        _ => None,
    }
}
