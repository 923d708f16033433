//! Recursive-descent parser for `SELECT ... FROM ... [WHERE ...] [GROUP BY ...]`.

use super::ast::*;
use super::lexer::{tokenize, Pos, Tok, Token};
use crate::error::Result;

const RESERVED: [&str; 12] = ["select", "from", "where", "group", "by", "and", "or", "as", "order", "having", "not", "distinct"];

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

pub fn parse_sql(text: &str) -> Result<SelectStatement> {
    let mut p = Parser { toks: tokenize(text)?, at: 0 };
    let stmt = p.statement()?;
    let t = p.peek();
    if t.tok != Tok::End {
        return Err(t.pos.error(format!("unexpected {}", t.describe())));
    }
    Ok(stmt)
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.at]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek().is_keyword(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<Pos> {
        let t = self.next();
        if t.is_keyword(kw) {
            Ok(t.pos)
        } else {
            Err(t.pos.error(format!("expected {}, found {}", kw.to_uppercase(), t.describe())))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(&self.peek().tok, Tok::Sym(x) if *x == s) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<Pos> {
        let t = self.next();
        if matches!(&t.tok, Tok::Sym(x) if *x == s) {
            Ok(t.pos)
        } else {
            Err(t.pos.error(format!("expected '{s}', found {}", t.describe())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos)> {
        let t = self.next();
        match t.tok {
            Tok::Ident(s) if !RESERVED.contains(&s.to_ascii_lowercase().as_str()) => Ok((s, t.pos)),
            _ => Err(t.pos.error(format!("expected {what}, found {}", t.describe()))),
        }
    }

    fn statement(&mut self) -> Result<SelectStatement> {
        self.expect_keyword("select")?;
        if self.peek().is_keyword("distinct") {
            return Err(self.peek().pos.error("DISTINCT is not supported"));
        }
        let mut select = Vec::new();
        loop {
            let expr = self.expr()?;
            let alias = if self.eat_keyword("as") {
                Some(self.ident("alias")?.0)
            } else if matches!(&self.peek().tok, Tok::Ident(s) if !RESERVED.contains(&s.to_ascii_lowercase().as_str())) {
                Some(self.ident("alias")?.0)
            } else {
                None
            };
            select.push(SelectItem { expr, alias });
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_keyword("from")?;
        let mut from = Vec::new();
        loop {
            let (relation, pos) = self.ident("relation name")?;
            let alias = if self.eat_keyword("as") {
                Some(self.ident("alias")?.0)
            } else if matches!(&self.peek().tok, Tok::Ident(s) if !RESERVED.contains(&s.to_ascii_lowercase().as_str())) {
                Some(self.ident("alias")?.0)
            } else {
                None
            };
            from.push(FromItem { relation, alias, pos });
            if !self.eat_sym(",") {
                break;
            }
        }
        if self.peek().is_keyword("join") {
            return Err(self.peek().pos.error("explicit JOIN syntax is not supported; list relations in FROM and join in WHERE"));
        }
        let mut conditions = Vec::new();
        if self.eat_keyword("where") {
            loop {
                conditions.push(self.comparison()?);
                if self.peek().is_keyword("or") {
                    return Err(self.peek().pos.error("disjunctive WHERE clauses are not supported"));
                }
                if !self.eat_keyword("and") {
                    break;
                }
            }
        }
        let mut group_by = Vec::new();
        if self.peek().is_keyword("group") {
            self.next();
            self.expect_keyword("by")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        for kw in ["order", "having", "limit", "union"] {
            if self.peek().is_keyword(kw) {
                return Err(self.peek().pos.error(format!("{} is not supported", kw.to_uppercase())));
            }
        }
        Ok(SelectStatement { select, from, conditions, group_by })
    }

    fn comparison(&mut self) -> Result<Comparison> {
        if self.peek().is_keyword("not") {
            return Err(self.peek().pos.error("NOT is not supported"));
        }
        let lhs = self.expr()?;
        let t = self.next();
        let op = match t.tok {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(s @ ("<>" | "!=" | "<=" | ">=")) => {
                return Err(t.pos.error(format!("comparison '{s}' is not supported; use =, < or >")));
            }
            _ => return Err(t.pos.error(format!("expected a comparison operator, found {}", t.describe()))),
        };
        let rhs = self.expr()?;
        Ok(Comparison { op, lhs, rhs, pos: t.pos })
    }

    fn expr(&mut self) -> Result<AstExpr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.next().pos;
            let rhs = self.term()?;
            lhs = AstExpr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
    }

    fn term(&mut self) -> Result<AstExpr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().tok {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                _ => return Ok(lhs),
            };
            let pos = self.next().pos;
            let rhs = self.factor()?;
            lhs = AstExpr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
    }

    fn factor(&mut self) -> Result<AstExpr> {
        let t = self.next();
        match t.tok {
            Tok::Sym("-") => Ok(AstExpr::Neg { operand: Box::new(self.factor()?), pos: t.pos }),
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Number(text) => Ok(AstExpr::Number { text, pos: t.pos }),
            Tok::Str(value) => Ok(AstExpr::Str { value, pos: t.pos }),
            Tok::Ident(name) => {
                let func = match name.to_ascii_uppercase().as_str() {
                    "SUM" => Some(AggFunc::Sum),
                    "COUNT" => Some(AggFunc::Count),
                    "MIN" => Some(AggFunc::Min),
                    "MAX" => Some(AggFunc::Max),
                    "AVG" => return Err(t.pos.error("AVG is not supported; use SUM and COUNT")),
                    _ => None,
                };
                if let (Some(func), Tok::Sym("(")) = (func, &self.peek().tok) {
                    self.next();
                    let arg = if func == AggFunc::Count && self.eat_sym("*") { None } else { Some(Box::new(self.expr()?)) };
                    self.expect_sym(")")?;
                    return Ok(AstExpr::Aggregate { func, arg, pos: t.pos });
                }
                if RESERVED.contains(&name.to_ascii_lowercase().as_str()) {
                    return Err(t.pos.error(format!("unexpected keyword {}", name.to_uppercase())));
                }
                if matches!(self.peek().tok, Tok::Sym("(")) {
                    return Err(t.pos.error(format!("unknown function {name}")));
                }
                if self.eat_sym(".") {
                    let (col, _) = self.ident("column name")?;
                    return Ok(AstExpr::Column { qualifier: Some(name), name: col, pos: t.pos });
                }
                Ok(AstExpr::Column { qualifier: None, name, pos: t.pos })
            }
            _ => Err(t.pos.error(format!("expected an expression, found {}", t.describe()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn parses_matmul() {
        let s = parse_sql("SELECT a.i, b.j, SUM(a.v * b.v) FROM a, b WHERE a.k = b.k GROUP BY a.i, b.j").unwrap();
        assert_eq!(s.select.len(), 3);
        assert_eq!(s.from.len(), 2);
        assert_eq!(s.conditions.len(), 1);
        assert_eq!(s.group_by.len(), 2);
    }

    #[test]
    fn precedence() {
        let s = parse_sql("SELECT SUM(x - y * 2) FROM r").unwrap();
        let AstExpr::Aggregate { arg: Some(arg), .. } = &s.select[0].expr else { panic!() };
        let AstExpr::Binary { op: BinOp::Sub, rhs, .. } = arg.as_ref() else { panic!() };
        assert!(matches!(rhs.as_ref(), AstExpr::Binary { op: BinOp::Mul, .. }));
    }

    #[test]
    fn or_is_rejected_with_position() {
        match parse_sql("SELECT COUNT(*) FROM r\nWHERE a = 1 OR a = 2") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 13)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_clauses() {
        assert!(parse_sql("SELECT a FROM r ORDER BY a").is_err());
        assert!(parse_sql("SELECT a FROM r WHERE a >= 1").is_err());
        assert!(parse_sql("SELECT AVG(a) FROM r").is_err());
        assert!(parse_sql("SELECT FROM r").is_err());
    }
}
