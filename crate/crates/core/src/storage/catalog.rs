//! The in-memory catalog: encoded relations, shared dictionaries, and a
//! cache for query-time derived structures.

use std::any::Any;
use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use super::column::Column;
use super::dictionary::Dictionary;
use super::ingest::{read_delimited, read_matrix_market, RawTable};
use super::relation::StoredRelation;
use super::schema::{ColumnKind, Schema, TypeFamily};
use super::value::Value;
use crate::error::{Error, Result};
use crate::set::SetConfig;

#[derive(Default)]
pub struct DatabaseBuilder {
    tables: Vec<RawTable>,
    config: SetConfig,
}

impl DatabaseBuilder {
    pub fn new() -> DatabaseBuilder {
        DatabaseBuilder::default()
    }

    pub fn with_set_config(mut self, config: SetConfig) -> DatabaseBuilder {
        self.config = config;
        self
    }

    pub fn add_table(&mut self, table: RawTable) -> Result<&mut Self> {
        if self.tables.iter().any(|t| t.schema.relation == table.schema.relation) {
            return Err(Error::Catalog(format!("relation {} registered twice", table.schema.relation)));
        }
        self.tables.push(table);
        Ok(self)
    }

    pub fn add_columns(&mut self, schema: Schema, columns: Vec<Column>) -> Result<&mut Self> {
        self.add_table(RawTable::new(schema, columns)?)
    }

    /// Adds rows given as values, one inner vector per row.
    pub fn add_rows(&mut self, schema: Schema, rows: &[Vec<Value>]) -> Result<&mut Self> {
        let mut cols: Vec<Column> = schema.columns.iter().map(|c| Column::empty(c.ty.family())).collect();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols.len() {
                return Err(Error::Ingest { relation: schema.relation.clone(), row: r + 1, message: "wrong arity".into() });
            }
            for (c, v) in row.iter().enumerate() {
                if !cols[c].push(v.clone()) {
                    return Err(Error::Ingest {
                        relation: schema.relation.clone(),
                        row: r + 1,
                        message: format!("column {}: expected {} value, found {}", schema.columns[c].name, schema.columns[c].ty.family().name(), v.type_name()),
                    });
                }
            }
        }
        self.add_columns(schema, cols)
    }

    pub fn add_csv_str(&mut self, schema: Schema, text: &str) -> Result<&mut Self> {
        let t = read_delimited(&schema, text.as_bytes())?;
        self.add_table(t)
    }

    pub fn add_csv_path(&mut self, schema: Schema, path: &Path) -> Result<&mut Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let t = read_delimited(&schema, std::io::BufReader::new(f))?;
        self.add_table(t)
    }

    pub fn add_matrix_market_str(&mut self, relation: &str, text: &str) -> Result<&mut Self> {
        let t = read_matrix_market(relation, text.as_bytes())?;
        self.add_table(t)
    }

    pub fn add_matrix_market_path(&mut self, relation: &str, path: &Path) -> Result<&mut Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let t = read_matrix_market(relation, std::io::BufReader::new(f))?;
        self.add_table(t)
    }

    pub fn build(self) -> Result<Database> {
        let mut families: HashMap<String, TypeFamily> = HashMap::new();
        for t in &self.tables {
            for c in t.schema.columns.iter().filter(|c| c.kind == ColumnKind::Key) {
                let d = c.domain();
                match families.get(&d) {
                    Some(f) if *f != c.ty.family() => {
                        return Err(Error::Schema(format!("domain {d} mixes {} and {} keys", f.name(), c.ty.family().name())));
                    }
                    _ => {
                        families.insert(d, c.ty.family());
                    }
                }
            }
        }
        let mut dicts = HashMap::new();
        for (domain, family) in &families {
            let values = self.tables.iter().flat_map(|t| {
                t.schema
                    .columns
                    .iter()
                    .zip(&t.columns)
                    .filter(move |(c, _)| c.kind == ColumnKind::Key && &c.domain() == domain)
                    .flat_map(|(_, col)| (0..col.len()).map(move |r| col.get(r)))
            });
            dicts.insert(domain.clone(), Arc::new(Dictionary::build(*family, values)));
        }
        let mut relations = Vec::new();
        let mut by_name = HashMap::new();
        for t in self.tables {
            by_name.insert(t.schema.relation.clone(), relations.len());
            relations.push(Arc::new(StoredRelation::build(t, &dicts, &self.config)?));
        }
        Ok(Database { relations, by_name, dicts, config: self.config, cache: Mutex::new(HashMap::new()) })
    }
}

type CacheEntry = Arc<dyn Any + Send + Sync>;

pub struct Database {
    relations: Vec<Arc<StoredRelation>>,
    by_name: HashMap<String, usize>,
    dicts: HashMap<String, Arc<Dictionary>>,
    config: SetConfig,
    cache: Mutex<HashMap<String, CacheEntry>>,
}

impl Database {
    pub fn builder() -> DatabaseBuilder {
        DatabaseBuilder::new()
    }

    pub fn relation(&self, name: &str) -> Option<&Arc<StoredRelation>> {
        self.by_name.get(name).map(|&i| &self.relations[i])
    }

    pub fn relations(&self) -> impl Iterator<Item = &Arc<StoredRelation>> {
        self.relations.iter()
    }

    pub fn dictionary(&self, domain: &str) -> Option<&Arc<Dictionary>> {
        self.dicts.get(domain)
    }

    pub fn dictionaries(&self) -> &HashMap<String, Arc<Dictionary>> {
        &self.dicts
    }

    pub fn set_config(&self) -> &SetConfig {
        &self.config
    }

    /// Returns the cached value under `key`, building it on a miss.
    pub fn cached<T: Any + Send + Sync>(&self, key: &str, build: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
        if let Some(hit) = self.cache.lock().unwrap().get(key) {
            if let Ok(v) = hit.clone().downcast::<T>() {
                return Ok(v);
            }
        }
        let value = Arc::new(build()?);
        self.cache.lock().unwrap().insert(key.to_string(), value.clone());
        Ok(value)
    }

    pub fn clear_cache(&self) {
        self.cache.lock().unwrap().clear();
    }

    /// Per-level `(sparse, dense)` set counts of a relation's trie, formatted
    /// one level per line.
    pub fn census(&self, relation: &str) -> Result<String> {
        let r = self.relation(relation).ok_or_else(|| Error::Catalog(format!("unknown relation {relation}")))?;
        let mut out = format!("relation {} rows={}\n", r.name(), r.num_rows());
        for (l, (sparse, dense)) in r.trie().census().iter().enumerate() {
            let col = &r.schema().columns[r.key_columns()[l]].name;
            out.push_str(&format!("level{l} ({col}): {sparse} uint, {dense} bs\n"));
        }
        Ok(out)
    }
}
