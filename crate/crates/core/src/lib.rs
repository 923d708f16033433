//! An in-memory query engine that evaluates aggregate-join SQL and linear
//! algebra through one mechanism: worst-case optimal joins over tries, planned
//! with generalized hypertree decompositions and ordered by a cost model.

pub mod datagen;
pub mod engine;
pub mod error;
pub mod exec;
pub mod ghd;
pub mod ir;
pub mod optimizer;
pub mod oracle;
pub mod plan;
pub mod result;
pub mod semiring;
pub mod set;
pub mod storage;

pub use error::{Error, Result};
