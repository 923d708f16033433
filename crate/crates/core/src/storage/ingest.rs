//! Readers for delimited files and MatrixMarket coordinate files.

use std::io::{Read, Write};

use super::column::Column;
use super::schema::{ColumnDef, ColumnType, DuplicatePolicy, Schema, TypeFamily};
use super::value::Value;
use crate::error::{Error, Result};

/// Parsed but not yet encoded rows of one relation, stored by column.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub schema: Schema,
    pub columns: Vec<Column>,
}

impl RawTable {
    pub fn new(schema: Schema, columns: Vec<Column>) -> Result<RawTable> {
        schema.validate()?;
        if columns.len() != schema.columns.len() {
            return Err(Error::Schema(format!("relation {}: {} columns supplied for {} declared", schema.relation, columns.len(), schema.columns.len())));
        }
        let n = columns.first().map_or(0, Column::len);
        for (c, def) in columns.iter().zip(&schema.columns) {
            if c.family() != def.ty.family() || c.len() != n {
                return Err(Error::Schema(format!("relation {}: column {} has the wrong type or length", schema.relation, def.name)));
            }
        }
        Ok(RawTable { schema, columns })
    }

    pub fn num_rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }
}

pub fn parse_field(text: &str, ty: ColumnType) -> std::result::Result<Value, String> {
    let t = text.trim();
    match ty.family() {
        TypeFamily::Int => t.parse::<i64>().map(Value::Int).map_err(|_| format!("expected {} value, found {text:?}", type_word(ty))),
        TypeFamily::Float => t.parse::<f64>().map(Value::Float).map_err(|_| format!("expected {} value, found {text:?}", type_word(ty))),
        TypeFamily::Str => Ok(Value::Str(text.to_string())),
    }
}

fn type_word(ty: ColumnType) -> &'static str {
    match ty {
        ColumnType::Int => "int",
        ColumnType::Long => "long",
        ColumnType::Float => "float",
        ColumnType::Double => "double",
        ColumnType::String => "string",
    }
}

/// Reads a delimited file whose first line names the schema's columns (in
/// any order).
pub fn read_delimited(schema: &Schema, input: impl Read) -> Result<RawTable> {
    schema.validate()?;
    let rel = schema.relation.clone();
    let delimiter = schema.delimiter.unwrap_or(',');
    if !delimiter.is_ascii() {
        return Err(Error::Schema(format!("relation {rel}: delimiter must be ASCII")));
    }
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter as u8).has_headers(true).trim(csv::Trim::None).from_reader(input);
    let ingest_err = |row: usize, message: String| Error::Ingest { relation: rel.clone(), row, message };
    let header = reader.headers().map_err(|e| ingest_err(0, format!("unreadable header: {e}")))?.clone();
    let mut source_of = vec![usize::MAX; schema.columns.len()];
    for (pos, name) in header.iter().enumerate() {
        let name = name.trim();
        match schema.column_index(name) {
            Some(c) if source_of[c] == usize::MAX => source_of[c] = pos,
            Some(_) => return Err(ingest_err(0, format!("header repeats column {name}"))),
            None => return Err(ingest_err(0, format!("header names unknown column {name}"))),
        }
    }
    if let Some(c) = source_of.iter().position(|&s| s == usize::MAX) {
        return Err(ingest_err(0, format!("header lacks column {}", schema.columns[c].name)));
    }
    let mut columns: Vec<Column> = schema.columns.iter().map(|c| Column::empty(c.ty.family())).collect();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| ingest_err(row, e.to_string()))?;
        if record.len() != schema.columns.len() {
            return Err(ingest_err(row, format!("expected {} fields, found {}", schema.columns.len(), record.len())));
        }
        for (c, def) in schema.columns.iter().enumerate() {
            let v = parse_field(&record[source_of[c]], def.ty).map_err(|m| ingest_err(row, format!("column {}: {m}", def.name)))?;
            columns[c].push(v);
        }
    }
    RawTable::new(schema.clone(), columns)
}

/// Writes `table` as a delimited file that [`read_delimited`] reads back.
pub fn write_delimited(table: &RawTable, out: impl Write) -> Result<()> {
    let delimiter = table.schema.delimiter.unwrap_or(',');
    let mut w = csv::WriterBuilder::new().delimiter(delimiter as u8).from_writer(out);
    let io = |e: csv::Error| Error::Internal(format!("writing {}: {e}", table.schema.relation));
    w.write_record(table.schema.columns.iter().map(|c| c.name.as_str())).map_err(io)?;
    for row in 0..table.num_rows() {
        w.write_record(table.columns.iter().map(|c| c.get(row).to_string())).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Internal(format!("writing {}: {e}", table.schema.relation)))
}

/// Schema given to MatrixMarket relations: `(i, j)` keys and value `v`.
pub fn matrix_schema(relation: &str) -> Schema {
    Schema::new(relation, vec![ColumnDef::key("i", ColumnType::Int), ColumnDef::key("j", ColumnType::Int), ColumnDef::annotation("v", ColumnType::Double)])
        .with_duplicates(DuplicatePolicy::Combine)
}

/// Reads a `%%MatrixMarket matrix coordinate` file, converting indices to
/// 0-based. `pattern` matrices get value 1.
pub fn read_matrix_market(relation: &str, input: impl Read) -> Result<RawTable> {
    let mut text = String::new();
    let mut input = input;
    let err = |row: usize, message: String| Error::Ingest { relation: relation.to_string(), row, message };
    input.read_to_string(&mut text).map_err(|e| err(0, e.to_string()))?;
    let mut lines = text.lines().enumerate();
    let (_, banner) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let words: Vec<String> = banner.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() < 4 || words[0] != "%%matrixmarket" || words[1] != "matrix" || words[2] != "coordinate" {
        return Err(err(1, "expected a '%%MatrixMarket matrix coordinate' banner".into()));
    }
    let pattern = match words[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" => true,
        other => return Err(err(1, format!("unsupported field type {other}"))),
    };
    if words.get(4).is_some_and(|s| s != "general") {
        return Err(err(1, "only general symmetry is supported".into()));
    }
    let mut size: Option<(i64, i64, usize)> = None;
    let (mut is, mut js, mut vs) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in lines {
        let line_no = n + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        let Some((rows, cols, _)) = size else {
            if f.len() != 3 {
                return Err(err(line_no, "expected 'rows cols nnz' size line".into()));
            }
            let p = |s: &str| s.parse::<i64>().map_err(|_| err(line_no, format!("bad size field {s:?}")));
            size = Some((p(f[0])?, p(f[1])?, p(f[2])? as usize));
            continue;
        };
        let need = if pattern { 2 } else { 3 };
        if f.len() != need {
            return Err(err(line_no, format!("expected {need} fields, found {}", f.len())));
        }
        let idx = |s: &str, bound: i64| -> Result<i64> {
            let v = s.parse::<i64>().map_err(|_| err(line_no, format!("bad index {s:?}")))?;
            if v < 1 || v > bound {
                return Err(err(line_no, format!("index {v} outside 1..={bound}")));
            }
            Ok(v - 1)
        };
        is.push(idx(f[0], rows)?);
        js.push(idx(f[1], cols)?);
        vs.push(if pattern { 1.0 } else { f[2].parse::<f64>().map_err(|_| err(line_no, format!("bad value {:?}", f[2])))? });
    }
    let Some((_, _, nnz)) = size else {
        return Err(err(0, "missing size line".into()));
    };
    if nnz != vs.len() {
        return Err(err(0, format!("size line declares {nnz} entries, found {}", vs.len())));
    }
    RawTable::new(matrix_schema(relation), vec![Column::Int(is), Column::Int(js), Column::Float(vs)])
}

/// Writes a matrix relation back out in MatrixMarket form.
pub fn write_matrix_market(rows: i64, cols: i64, entries: &[(i64, i64, f64)]) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    out.push_str(&format!("{rows} {cols} {}\n", entries.len()));
    for (i, j, v) in entries {
        out.push_str(&format!("{} {} {v}\n", i + 1, j + 1));
    }
    out
}
