//! `wcoj`: ingest data, run and explain queries, generate datasets, and
//! time executions.

mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wcoj::datagen::{dense_matrix, snowflake, sparse_matrix, SnowflakeSpec};
use wcoj::engine::time_runs;
use wcoj::exec::{execute, ExecOptions};
use wcoj::oracle::oracle;
use wcoj::plan::Plan;
use wcoj::result::ResultTable;
use wcoj::storage::{matrix_schema, write_delimited, write_matrix_market, Schema};

use manifest::{CatalogManifest, RelationEntry, SourceFormat};

#[derive(Parser, Debug)]
#[command(name = "wcoj", version, about = "Trie-based worst-case optimal join engine")]
struct Cli {
    /// Directory holding the catalog manifest and generated data.
    #[arg(long, env = "WCOJ_DATA_DIR", default_value = ".", global = true)]
    data_dir: PathBuf,
    /// Worker threads; defaults to the manifest setting, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for generators.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Print executor counters to stderr.
    #[arg(long, global = true)]
    stats: bool,
    /// Write results to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Register a delimited or MatrixMarket file and print its layout census.
    Ingest {
        source: PathBuf,
        /// JSON schema file; required for delimited sources.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Trie level order as comma-separated key columns.
        #[arg(long, value_delimiter = ',')]
        key_order: Vec<String>,
        /// Relation name for MatrixMarket sources; defaults to the file stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Execute a query and write its result table.
    Query(SqlArg),
    /// Print the physical plan of a query.
    Explain(SqlArg),
    /// Generate a dataset into the data directory and register it.
    Gen {
        #[command(subcommand)]
        spec: GenSpec,
    },
    /// Evaluate a query with the nested-loop reference evaluator.
    Oracle(SqlArg),
    /// Time a query's execution.
    Bench {
        #[command(flatten)]
        sql: SqlArg,
        #[arg(long, default_value_t = 7)]
        runs: usize,
    },
}

#[derive(Args, Debug)]
struct SqlArg {
    /// Query text.
    sql: Option<String>,
    /// Read the query from a file.
    #[arg(long, short, conflicts_with = "sql")]
    file: Option<PathBuf>,
}

impl SqlArg {
    fn text(&self) -> Result<String> {
        match (&self.sql, &self.file) {
            (Some(s), _) => Ok(s.clone()),
            (None, Some(p)) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
            (None, None) => bail!("a query is required, either inline or with --file"),
        }
    }
}

#[derive(Subcommand, Debug)]
enum GenSpec {
    /// Snowflake schema with Zipf-skewed foreign keys.
    Snowflake {
        #[arg(long, default_value_t = 0.01)]
        scale: f64,
        #[arg(long, default_value_t = 1.0)]
        zipf: f64,
        /// Override the fact table row count.
        #[arg(long)]
        lineitem: Option<usize>,
    },
    /// Uniform sparse matrix with exactly `nnz` entries.
    Sparse {
        name: String,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        nnz: usize,
    },
    /// Fully dense matrix.
    Dense {
        name: String,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(2),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<wcoj::Error>() {
        Some(err) if !err.is_user_error() => 2,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<()> {
    let manifest = CatalogManifest::load(&cli.data_dir)?;
    match &cli.command {
        Command::Ingest { source, schema, key_order, name } => ingest(manifest, source, schema.as_deref(), key_order, name.as_deref()),
        Command::Query(sql) => {
            let db = manifest.open()?;
            let plan = Plan::build_with(&sql.text()?, &db, manifest.options.plan_config())?;
            let start = Instant::now();
            let (table, stats) = execute(&plan, &db, &exec_options(cli, &manifest))?;
            let elapsed = start.elapsed();
            write_table(&table, cli.output.as_deref())?;
            eprintln!("execution_ms={:.3}", elapsed.as_secs_f64() * 1e3);
            if cli.stats {
                eprintln!("{stats}");
            }
            Ok(())
        }
        Command::Explain(sql) => {
            let db = manifest.open()?;
            let plan = Plan::build_with(&sql.text()?, &db, manifest.options.plan_config())?;
            emit(cli.output.as_deref(), &plan.explain())
        }
        Command::Gen { spec } => generate(manifest, spec, cli.seed),
        Command::Oracle(sql) => {
            let db = manifest.open()?;
            let ir = wcoj::ir::parse(&sql.text()?, &db)?;
            write_table(&oracle(&ir, &db), cli.output.as_deref())
        }
        Command::Bench { sql, runs } => {
            let db = manifest.open()?;
            let plan = Plan::build_with(&sql.text()?, &db, manifest.options.plan_config())?;
            let opts = exec_options(cli, &manifest);
            let ((table, stats), mean) = time_runs(*runs, || execute(&plan, &db, &opts))?;
            if let Some(path) = &cli.output {
                write_table(&table, Some(path))?;
            }
            println!("runs={runs} threads={} mean_ms={:.3} rows={}", opts.threads, mean.as_secs_f64() * 1e3, table.len());
            if cli.stats {
                eprintln!("{stats}");
            }
            Ok(())
        }
    }
}

fn exec_options(cli: &Cli, manifest: &CatalogManifest) -> ExecOptions {
    let threads = cli.threads.or(manifest.options.threads).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    ExecOptions { threads: threads.max(1), ..Default::default() }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_table(table: &ResultTable, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            table.write_csv(std::io::BufWriter::new(file))?;
        }
        None => table.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn schema_file(name: &str) -> PathBuf {
    PathBuf::from(format!("{name}.schema.json"))
}

fn ingest(mut manifest: CatalogManifest, source: &Path, schema: Option<&Path>, key_order: &[String], name: Option<&str>) -> Result<()> {
    let format = if source.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx")) { SourceFormat::Mtx } else { SourceFormat::Csv };
    let mut schema = match (schema, format) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading schema {}", p.display()))?;
            Schema::from_json(&text)?
        }
        (None, SourceFormat::Mtx) => {
            let stem = source.file_stem().and_then(|s| s.to_str()).context("matrix file name is not valid UTF-8")?;
            matrix_schema(name.unwrap_or(stem))
        }
        (None, SourceFormat::Csv) => bail!("delimited sources need --schema"),
    };
    if let Some(n) = name {
        schema.relation = n.to_string();
    }
    if !key_order.is_empty() {
        schema.key_order = Some(key_order.to_vec());
        schema.validate()?;
    }
    let source = std::fs::canonicalize(source).with_context(|| format!("resolving {}", source.display()))?;
    let relation = schema.relation.clone();
    std::fs::create_dir_all(&manifest.data_dir).with_context(|| format!("creating {}", manifest.data_dir.display()))?;
    let schema_path = schema_file(&relation);
    std::fs::write(manifest.resolve(&schema_path), schema.to_json() + "\n").context("writing schema")?;
    manifest.register(RelationEntry { name: relation.clone(), schema: schema_path, source, format });
    let db = manifest.open()?;
    manifest.save()?;
    print!("{}", db.census(&relation)?);
    Ok(())
}

fn write_relation(
    manifest: &mut CatalogManifest,
    schema: &Schema,
    file: String,
    format: SourceFormat,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let path = manifest.resolve(Path::new(&file));
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    body(&mut out)?;
    out.flush().with_context(|| format!("writing {}", path.display()))?;
    let schema_path = schema_file(&schema.relation);
    std::fs::write(manifest.resolve(&schema_path), schema.to_json() + "\n").context("writing schema")?;
    manifest.register(RelationEntry { name: schema.relation.clone(), schema: schema_path, source: file.into(), format });
    Ok(())
}

fn generate(mut manifest: CatalogManifest, spec: &GenSpec, seed: u64) -> Result<()> {
    std::fs::create_dir_all(&manifest.data_dir).with_context(|| format!("creating {}", manifest.data_dir.display()))?;
    let matrix = |manifest: &mut CatalogManifest, name: &str, rows: usize, cols: usize, entries: Vec<(i64, i64, f64)>| {
        let text = write_matrix_market(rows as i64, cols as i64, &entries);
        write_relation(manifest, &matrix_schema(name), format!("{name}.mtx"), SourceFormat::Mtx, |w| Ok(w.write_all(text.as_bytes())?))?;
        println!("{name} rows={rows} cols={cols} nnz={}", entries.len());
        Ok::<_, anyhow::Error>(())
    };
    match spec {
        GenSpec::Snowflake { scale, zipf, lineitem } => {
            let tables = snowflake(&SnowflakeSpec { scale: *scale, zipf: *zipf, lineitem: *lineitem }, seed)?;
            for t in &tables {
                write_relation(&mut manifest, &t.schema, format!("{}.csv", t.schema.relation), SourceFormat::Csv, |w| Ok(write_delimited(t, w)?))?;
                println!("{} rows={}", t.schema.relation, t.num_rows());
            }
        }
        GenSpec::Sparse { name, rows, cols, nnz } => matrix(&mut manifest, name, *rows, *cols, sparse_matrix(*rows, *cols, *nnz, seed)?)?,
        GenSpec::Dense { name, rows, cols } => {
            if *rows == 0 || *cols == 0 {
                bail!("dense matrices need positive dimensions");
            }
            matrix(&mut manifest, name, *rows, *cols, dense_matrix(*rows, *cols, seed))?
        }
    }
    manifest.save()
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn internal_errors_map_to_two() {
        assert_eq!(exit_code(&anyhow::Error::new(wcoj::Error::Internal("x".into()))), 2);
        assert_eq!(exit_code(&anyhow::Error::new(wcoj::Error::Plan("x".into()))), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("usage")), 1);
    }
}
