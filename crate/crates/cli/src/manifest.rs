//! The `catalog.json` manifest kept in the data directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wcoj::plan::PlanConfig;
use wcoj::storage::{read_matrix_market, Database, Schema};

pub const MANIFEST_FILE: &str = "catalog.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Csv,
    Mtx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub name: String,
    /// Schema file, relative to the data directory unless absolute.
    pub schema: PathBuf,
    pub source: PathBuf,
    pub format: SourceFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub union_density_threshold: f64,
    pub union_dense_universe: u64,
    pub per_worker_max_width: usize,
    /// Worker count used when `--threads` is absent.
    pub threads: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        let c = PlanConfig::default();
        BuildOptions {
            union_density_threshold: c.union_density_threshold,
            union_dense_universe: c.union_dense_universe,
            per_worker_max_width: c.per_worker_max_width,
            threads: None,
        }
    }
}

impl BuildOptions {
    pub fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            union_density_threshold: self.union_density_threshold,
            union_dense_universe: self.union_dense_universe,
            per_worker_max_width: self.per_worker_max_width,
            ..PlanConfig::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalogManifest {
    #[serde(skip)]
    pub data_dir: PathBuf,
    pub relations: Vec<RelationEntry>,
    #[serde(default)]
    pub options: BuildOptions,
}

impl CatalogManifest {
    /// Loads the manifest of `data_dir`, or an empty one when none exists.
    pub fn load(data_dir: &Path) -> Result<CatalogManifest> {
        let path = data_dir.join(MANIFEST_FILE);
        let mut manifest = if path.exists() {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            CatalogManifest::default()
        };
        manifest.data_dir = data_dir.to_path_buf();
        Ok(manifest)
    }

    pub fn save(&self) -> Result<()> {
        std::fs::create_dir_all(&self.data_dir).with_context(|| format!("creating {}", self.data_dir.display()))?;
        let path = self.data_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }

    /// Adds `entry`, replacing any relation of the same name.
    pub fn register(&mut self, entry: RelationEntry) {
        match self.relations.iter_mut().find(|r| r.name == entry.name) {
            Some(slot) => *slot = entry,
            None => self.relations.push(entry),
        }
    }

    pub fn schema(&self, entry: &RelationEntry) -> Result<Schema> {
        let path = self.resolve(&entry.schema);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading schema {}", path.display()))?;
        let schema = Schema::from_json(&text).with_context(|| format!("schema {}", path.display()))?;
        if schema.relation != entry.name {
            bail!("schema {} describes relation {}, registered as {}", path.display(), schema.relation, entry.name);
        }
        Ok(schema)
    }

    /// Builds tries and dictionaries for every registered relation.
    pub fn open(&self) -> Result<Database> {
        let mut b = Database::builder();
        for entry in &self.relations {
            let source = self.resolve(&entry.source);
            let schema = self.schema(entry)?;
            match entry.format {
                SourceFormat::Csv => {
                    b.add_csv_path(schema, &source)?;
                }
                SourceFormat::Mtx => {
                    let file = std::fs::File::open(&source).with_context(|| format!("opening {}", source.display()))?;
                    let mut table = read_matrix_market(&entry.name, std::io::BufReader::new(file))?;
                    if schema.columns != table.schema.columns {
                        bail!("schema {} does not match the matrix columns (i, j, v)", entry.schema.display());
                    }
                    table.schema = schema;
                    b.add_table(table)?;
                }
            }
        }
        Ok(b.build()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = CatalogManifest::load(dir.path()).unwrap();
        assert!(m.relations.is_empty());
        let entry = |src: &str| RelationEntry { name: "a".into(), schema: "a.schema.json".into(), source: src.into(), format: SourceFormat::Csv };
        m.register(entry("one.csv"));
        m.register(entry("two.csv"));
        m.save().unwrap();
        let back = CatalogManifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.relations.len(), 1);
        assert_eq!(back.relations[0].source, PathBuf::from("two.csv"));
    }
}
