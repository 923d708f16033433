//! Name resolution from parsed syntax to the query IR.

use super::ast::*;
use super::expr::{ColRef, Expr};
use super::lexer::Pos;
use super::parser::parse_sql;
use crate::error::Result;
use crate::storage::{ColumnKind, Database, Schema, TypeFamily, Value};

#[derive(Clone, Debug, PartialEq)]
pub struct RelationRef {
    pub alias: String,
    pub relation: String,
    pub schema: Schema,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JoinCondition {
    pub left: ColRef,
    pub right: ColRef,
}

/// `column op literal`. Key columns only take `=`.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub column: ColRef,
    pub op: CmpOp,
    pub value: Value,
    pub on_key: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub func: AggFunc,
    /// `None` for `COUNT(*)`.
    pub expr: Option<Expr>,
    pub name: String,
    /// Whether results are integers (counts, or integer arithmetic over
    /// integer columns).
    pub integral: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputColumn {
    Group(usize),
    Aggregate(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryIr {
    pub relations: Vec<RelationRef>,
    pub joins: Vec<JoinCondition>,
    pub selections: Vec<Selection>,
    pub aggregates: Vec<Aggregate>,
    pub group_by: Vec<ColRef>,
    pub outputs: Vec<OutputColumn>,
    pub output_names: Vec<String>,
}

impl QueryIr {
    pub fn column_name(&self, c: ColRef) -> &str {
        &self.relations[c.rel].schema.columns[c.col].name
    }

    pub fn qualified_name(&self, c: ColRef) -> String {
        format!("{}.{}", self.relations[c.rel].alias, self.column_name(c))
    }

    pub fn kind(&self, c: ColRef) -> ColumnKind {
        self.relations[c.rel].schema.columns[c.col].kind
    }

    pub fn family(&self, c: ColRef) -> TypeFamily {
        self.relations[c.rel].schema.columns[c.col].ty.family()
    }

    pub fn domain(&self, c: ColRef) -> String {
        self.relations[c.rel].schema.columns[c.col].domain()
    }

    /// Column names as written in diagnostics and plans: bare when unique
    /// across the FROM list, qualified otherwise.
    pub fn display_name(&self, c: ColRef) -> String {
        let name = self.column_name(c);
        let clashes = self.relations.iter().enumerate().any(|(i, r)| i != c.rel && r.schema.column_index(name).is_some());
        if clashes {
            self.qualified_name(c)
        } else {
            name.to_string()
        }
    }
}

/// Parses and resolves a query against the catalog.
pub fn parse(sql: &str, db: &Database) -> Result<QueryIr> {
    let stmt = parse_sql(sql)?;
    Resolver::new(db, &stmt)?.resolve(&stmt)
}

struct Resolver {
    relations: Vec<RelationRef>,
}

impl Resolver {
    fn new(db: &Database, stmt: &SelectStatement) -> Result<Resolver> {
        let mut relations: Vec<RelationRef> = Vec::new();
        for item in &stmt.from {
            let rel = db.relation(&item.relation).ok_or_else(|| item.pos.error(format!("unknown relation {}", item.relation)))?;
            let alias = item.alias.clone().unwrap_or_else(|| item.relation.clone());
            if relations.iter().any(|r| r.alias == alias) {
                return Err(item.pos.error(format!("duplicate relation alias {alias}")));
            }
            relations.push(RelationRef { alias, relation: item.relation.clone(), schema: rel.schema().clone() });
        }
        Ok(Resolver { relations })
    }

    fn column(&self, qualifier: &Option<String>, name: &str, pos: Pos) -> Result<ColRef> {
        match qualifier {
            Some(q) => {
                let rel = self.relations.iter().position(|r| &r.alias == q).ok_or_else(|| pos.error(format!("unknown relation {q}")))?;
                let col = self.relations[rel].schema.column_index(name).ok_or_else(|| pos.error(format!("unknown column {q}.{name}")))?;
                Ok(ColRef { rel, col })
            }
            None => {
                let hits: Vec<ColRef> =
                    self.relations.iter().enumerate().filter_map(|(rel, r)| r.schema.column_index(name).map(|col| ColRef { rel, col })).collect();
                match hits.len() {
                    0 => Err(pos.error(format!("unknown column {name}"))),
                    1 => Ok(hits[0]),
                    _ => Err(pos.error(format!("ambiguous column {name}"))),
                }
            }
        }
    }

    fn kind(&self, c: ColRef) -> ColumnKind {
        self.relations[c.rel].schema.columns[c.col].kind
    }

    fn family(&self, c: ColRef) -> TypeFamily {
        self.relations[c.rel].schema.columns[c.col].ty.family()
    }

    fn value_expr(&self, e: &AstExpr) -> Result<Expr> {
        Ok(match e {
            AstExpr::Column { qualifier, name, pos } => {
                let c = self.column(qualifier, name, *pos)?;
                if self.kind(c) == ColumnKind::Key {
                    return Err(pos.error(format!("Keys cannot be aggregated: {name} is a key column")));
                }
                if self.family(c) == TypeFamily::Str {
                    return Err(pos.error(format!("column {name} is not numeric")));
                }
                Expr::Col(c)
            }
            AstExpr::Number { text, pos } => {
                let value: f64 = text.parse().map_err(|_| pos.error(format!("malformed number {text}")))?;
                Expr::Num { value, integral: !text.contains(['.', 'e', 'E']) }
            }
            AstExpr::Str { pos, .. } => return Err(pos.error("string literals are not allowed in arithmetic")),
            AstExpr::Neg { operand, .. } => Expr::Neg(Box::new(self.value_expr(operand)?)),
            AstExpr::Binary { op, lhs, rhs, .. } => Expr::Bin(*op, Box::new(self.value_expr(lhs)?), Box::new(self.value_expr(rhs)?)),
            AstExpr::Aggregate { pos, .. } => return Err(pos.error("aggregates cannot be nested")),
        })
    }

    fn literal(e: &AstExpr) -> Option<Value> {
        match e {
            AstExpr::Number { text, .. } => {
                if text.contains(['.', 'e', 'E']) {
                    text.parse().ok().map(Value::Float)
                } else {
                    text.parse().ok().map(Value::Int).or_else(|| text.parse().ok().map(Value::Float))
                }
            }
            AstExpr::Neg { operand, .. } => match Self::literal(operand)? {
                Value::Int(v) => Some(Value::Int(-v)),
                Value::Float(v) => Some(Value::Float(-v)),
                Value::Str(_) => None,
            },
            AstExpr::Str { value, .. } => Some(Value::Str(value.clone())),
            _ => None,
        }
    }

    fn resolve(self, stmt: &SelectStatement) -> Result<QueryIr> {
        let mut joins = Vec::new();
        let mut selections = Vec::new();
        for cond in &stmt.conditions {
            match (&cond.lhs, &cond.rhs) {
                (AstExpr::Column { qualifier: q1, name: n1, pos: p1 }, AstExpr::Column { qualifier: q2, name: n2, pos: p2 }) => {
                    let (a, b) = (self.column(q1, n1, *p1)?, self.column(q2, n2, *p2)?);
                    if cond.op != CmpOp::Eq {
                        return Err(cond.pos.error("columns may only be compared with ="));
                    }
                    if self.kind(a) != ColumnKind::Key || self.kind(b) != ColumnKind::Key {
                        return Err(cond.pos.error("only key columns can be joined"));
                    }
                    let (da, db) = (self.relations[a.rel].schema.columns[a.col].domain(), self.relations[b.rel].schema.columns[b.col].domain());
                    if da != db {
                        return Err(cond.pos.error(format!("cannot join key domains {da} and {db}")));
                    }
                    joins.push(JoinCondition { left: a, right: b });
                }
                (lhs, rhs) => {
                    let (col_side, lit_side, op) = match (lhs, rhs) {
                        (AstExpr::Column { .. }, r) if Self::literal(r).is_some() => (lhs, r, cond.op),
                        (l, AstExpr::Column { .. }) if Self::literal(l).is_some() => (rhs, l, cond.op.flipped()),
                        _ => return Err(cond.pos.error("predicates must compare a column with a literal or join two key columns")),
                    };
                    let AstExpr::Column { qualifier, name, pos } = col_side else { unreachable!() };
                    let c = self.column(qualifier, name, *pos)?;
                    let value = Self::literal(lit_side).expect("checked literal");
                    let on_key = self.kind(c) == ColumnKind::Key;
                    if on_key && op != CmpOp::Eq {
                        return Err(cond.pos.error("key columns only support equality filters"));
                    }
                    let compatible = match (self.family(c), &value) {
                        (TypeFamily::Str, Value::Str(_)) => true,
                        (TypeFamily::Int, Value::Int(_)) => true,
                        (TypeFamily::Int, Value::Float(_)) => !on_key,
                        (TypeFamily::Float, Value::Int(_) | Value::Float(_)) => true,
                        _ => false,
                    };
                    if !compatible {
                        return Err(lit_side.pos().error(format!("literal {} does not match the type of column {name}", value.literal())));
                    }
                    selections.push(Selection { column: c, op, value, on_key });
                }
            }
        }

        let mut group_by = Vec::new();
        for g in &stmt.group_by {
            let AstExpr::Column { qualifier, name, pos } = g else {
                return Err(g.pos().error("GROUP BY accepts column names only"));
            };
            let c = self.column(qualifier, name, *pos)?;
            if !group_by.contains(&c) {
                group_by.push(c);
            }
        }

        let mut aggregates = Vec::new();
        let mut outputs = Vec::new();
        let mut output_names = Vec::new();
        let mut plain_columns = Vec::new();
        let integral_col = |c: ColRef| self.family(c) == TypeFamily::Int;
        for item in &stmt.select {
            match &item.expr {
                AstExpr::Aggregate { func, arg, .. } => {
                    let expr = match arg {
                        Some(a) => Some(self.value_expr(a)?),
                        None => None,
                    };
                    let integral = *func == AggFunc::Count || expr.as_ref().is_some_and(|e| e.is_integral(&integral_col));
                    let text = match &expr {
                        Some(e) => e.render(&|c| self.display(c)),
                        None => "*".into(),
                    };
                    let name = item.alias.clone().unwrap_or_else(|| format!("{}({text})", func.name()));
                    outputs.push(OutputColumn::Aggregate(aggregates.len()));
                    output_names.push(name.clone());
                    aggregates.push(Aggregate { func: *func, expr, name, integral });
                }
                AstExpr::Column { qualifier, name, pos } => {
                    let c = self.column(qualifier, name, *pos)?;
                    plain_columns.push((c, *pos));
                    outputs.push(OutputColumn::Group(usize::MAX));
                    output_names.push(item.alias.clone().unwrap_or_else(|| name.clone()));
                }
                other => return Err(other.pos().error("select items must be columns or aggregates")),
            }
        }
        if aggregates.is_empty() && group_by.is_empty() {
            // Plain projections group implicitly, giving set semantics.
            for (c, _) in &plain_columns {
                if !group_by.contains(c) {
                    group_by.push(*c);
                }
            }
        }
        let mut plain = plain_columns.iter();
        for out in outputs.iter_mut() {
            if let OutputColumn::Group(slot) = out {
                let (c, pos) = plain.next().expect("one entry per plain column");
                *slot = group_by.iter().position(|g| g == c).ok_or_else(|| pos.error(format!("column {} must appear in GROUP BY", self.display(*c))))?;
            }
        }
        for (i, g) in group_by.iter().enumerate() {
            if !outputs.contains(&OutputColumn::Group(i)) {
                let pos = stmt.group_by.get(i).map_or(Pos { line: 1, column: 1 }, AstExpr::pos);
                return Err(pos.error(format!("GROUP BY column {} must appear in the select list", self.display(*g))));
            }
        }
        Ok(QueryIr { relations: self.relations, joins, selections, aggregates, group_by, outputs, output_names })
    }

    fn display(&self, c: ColRef) -> String {
        let name = &self.relations[c.rel].schema.columns[c.col].name;
        let clashes = self.relations.iter().enumerate().any(|(i, r)| i != c.rel && r.schema.column_index(name).is_some());
        if clashes {
            format!("{}.{name}", self.relations[c.rel].alias)
        } else {
            name.clone()
        }
    }
}
