//! Relation schemas and their JSON form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ColumnKind {
    #[serde(alias = "key")]
    Key,
    #[serde(alias = "annotation")]
    Annotation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    #[serde(alias = "INT")]
    Int,
    #[serde(alias = "LONG")]
    Long,
    #[serde(alias = "FLOAT")]
    Float,
    #[serde(alias = "DOUBLE")]
    Double,
    #[serde(alias = "STRING")]
    String,
}

/// Physical representation shared by several declared types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TypeFamily {
    Int,
    Float,
    Str,
}

impl TypeFamily {
    pub fn name(self) -> &'static str {
        match self {
            TypeFamily::Int => "int",
            TypeFamily::Float => "float",
            TypeFamily::Str => "str",
        }
    }
}

impl ColumnType {
    pub fn family(self) -> TypeFamily {
        match self {
            ColumnType::Int | ColumnType::Long => TypeFamily::Int,
            ColumnType::Float | ColumnType::Double => TypeFamily::Float,
            ColumnType::String => TypeFamily::Str,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(rename = "type")]
    pub ty: ColumnType,
    /// Key columns in the same domain share a dictionary and may be joined.
    /// Defaults to the type family name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

impl ColumnDef {
    pub fn key(name: &str, ty: ColumnType) -> ColumnDef {
        ColumnDef { name: name.into(), kind: ColumnKind::Key, ty, domain: None }
    }

    pub fn annotation(name: &str, ty: ColumnType) -> ColumnDef {
        ColumnDef { name: name.into(), kind: ColumnKind::Annotation, ty, domain: None }
    }

    pub fn domain(&self) -> String {
        self.domain.clone().unwrap_or_else(|| self.ty.family().name().to_string())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DuplicatePolicy {
    #[default]
    Error,
    Combine,
}

/// How `combine` merges numeric annotations of duplicate keys.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineOp {
    #[default]
    Sum,
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub relation: String,
    pub columns: Vec<ColumnDef>,
    /// Trie level order; defaults to the key columns in declaration order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_order: Option<Vec<String>>,
    #[serde(default)]
    pub on_duplicate: DuplicatePolicy,
    #[serde(default)]
    pub combine: CombineOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<char>,
}

impl Schema {
    pub fn new(relation: &str, columns: Vec<ColumnDef>) -> Schema {
        Schema { relation: relation.into(), columns, key_order: None, on_duplicate: DuplicatePolicy::Error, combine: CombineOp::Sum, delimiter: None }
    }

    pub fn with_duplicates(mut self, policy: DuplicatePolicy) -> Schema {
        self.on_duplicate = policy;
        self
    }

    pub fn with_key_order(mut self, order: &[&str]) -> Schema {
        self.key_order = Some(order.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn from_json(text: &str) -> Result<Schema> {
        let schema: Schema = serde_json::from_str(text).map_err(|e| Error::Schema(format!("invalid schema JSON: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Key column indices in trie level order.
    pub fn key_columns(&self) -> Vec<usize> {
        match &self.key_order {
            Some(order) => order.iter().map(|n| self.column_index(n).expect("validated key order")).collect(),
            None => (0..self.columns.len()).filter(|&i| self.columns[i].kind == ColumnKind::Key).collect(),
        }
    }

    pub fn annotation_columns(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&i| self.columns[i].kind == ColumnKind::Annotation).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Schema(format!("relation {}: {m}", self.relation)));
        if self.relation.is_empty() {
            return Err(Error::Schema("relation name must be nonempty".into()));
        }
        if self.columns.is_empty() {
            return err("at least one column is required".into());
        }
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|d| d.name == c.name) {
                return err(format!("duplicate column {}", c.name));
            }
        }
        let keys: Vec<&ColumnDef> = self.columns.iter().filter(|c| c.kind == ColumnKind::Key).collect();
        if keys.is_empty() {
            return err("at least one KEY column is required".into());
        }
        if let Some(order) = &self.key_order {
            if order.len() != keys.len() {
                return err("key_order must list every KEY column exactly once".into());
            }
            for (i, name) in order.iter().enumerate() {
                match self.column_index(name) {
                    Some(c) if self.columns[c].kind == ColumnKind::Key => {}
                    _ => return err(format!("key_order entry {name} is not a KEY column")),
                }
                if order[..i].contains(name) {
                    return err(format!("key_order repeats {name}"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let text = r#"{"relation":"m","columns":[
            {"name":"i","kind":"KEY","type":"int"},
            {"name":"j","kind":"KEY","type":"int"},
            {"name":"v","kind":"ANNOTATION","type":"double"}],
            "key_order":["j","i"],"on_duplicate":"combine"}"#;
        let s = Schema::from_json(text).unwrap();
        assert_eq!(s.key_columns(), vec![1, 0]);
        assert_eq!(s.on_duplicate, DuplicatePolicy::Combine);
        assert_eq!(Schema::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_schemas() {
        let no_key = r#"{"relation":"r","columns":[{"name":"v","kind":"annotation","type":"int"}]}"#;
        assert!(Schema::from_json(no_key).is_err());
        let dup = r#"{"relation":"r","columns":[{"name":"a","kind":"key","type":"int"},{"name":"a","kind":"key","type":"int"}]}"#;
        assert!(Schema::from_json(dup).is_err());
        let bad_order = r#"{"relation":"r","columns":[{"name":"a","kind":"key","type":"int"}],"key_order":["b"]}"#;
        assert!(Schema::from_json(bad_order).is_err());
    }
}
