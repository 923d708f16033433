//! One-call query entry points.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::exec::{execute, ExecOptions, ExecStats};
use crate::plan::Plan;
use crate::result::ResultTable;
use crate::storage::Database;

#[derive(Debug)]
pub struct QueryOutcome {
    pub plan: Plan,
    pub table: ResultTable,
    pub stats: ExecStats,
    /// Execution time, excluding parsing and planning.
    pub elapsed: Duration,
}

/// Parses, plans, and executes `sql`.
pub fn run_query(sql: &str, db: &Database, opts: &ExecOptions) -> Result<QueryOutcome> {
    let plan = Plan::build(sql, db)?;
    let start = Instant::now();
    let (table, stats) = execute(&plan, db, opts)?;
    let elapsed = start.elapsed();
    Ok(QueryOutcome { plan, table, stats, elapsed })
}

/// Mean of `runs` timings with the fastest and slowest dropped when there
/// are at least three.
pub fn trimmed_mean(mut samples: Vec<Duration>) -> Duration {
    samples.sort_unstable();
    let kept = if samples.len() >= 3 { &samples[1..samples.len() - 1] } else { &samples[..] };
    if kept.is_empty() {
        return Duration::ZERO;
    }
    kept.iter().sum::<Duration>() / kept.len() as u32
}

/// Times `f` over `runs` repetitions after one warm-up call.
pub fn time_runs<T>(runs: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, Duration)> {
    let mut last = f()?;
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs.max(1) {
        let start = Instant::now();
        last = f()?;
        samples.push(start.elapsed());
    }
    Ok((last, trimmed_mean(samples)))
}
