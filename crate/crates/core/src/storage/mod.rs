//! Relation storage: schemas, dictionaries, tries, and ingestion.

mod catalog;
mod column;
mod dictionary;
mod ingest;
mod relation;
mod schema;
mod sort;
mod trie;
mod value;

pub use catalog::{Database, DatabaseBuilder};
pub use column::Column;
pub use dictionary::Dictionary;
pub use ingest::{matrix_schema, parse_field, read_delimited, read_matrix_market, write_delimited, write_matrix_market, RawTable};
pub use relation::{AnnotationReader, DenseAnnotationView, StoredRelation};
pub use schema::{ColumnDef, ColumnKind, ColumnType, CombineOp, DuplicatePolicy, Schema, TypeFamily};
pub use sort::{permute, sort_rows};
pub use trie::{build_trie, Level, Trie};
pub use value::Value;
