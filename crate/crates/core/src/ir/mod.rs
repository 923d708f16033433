//! SQL front end: parsing, name resolution, and translation to hypergraphs.

pub mod ast;
pub mod expr;
pub mod hypergraph;
pub mod lexer;
pub mod parser;
pub mod query;

pub use ast::{AggFunc, BinOp, CmpOp};
pub use expr::{ColRef, Expr};
pub use hypergraph::*;
pub use parser::parse_sql;
pub use query::{parse, Aggregate, JoinCondition, OutputColumn, QueryIr, RelationRef, Selection};
