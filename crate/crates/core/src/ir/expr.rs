//! Resolved scalar expressions over relation columns.

use std::collections::BTreeSet;

use super::ast::BinOp;

/// A column of a FROM-list relation: `rel` indexes the FROM list and `col`
/// the relation's schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColRef {
    pub rel: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Col(ColRef),
    /// Numeric literal; `integral` records whether it was written without a
    /// fraction or exponent.
    Num {
        value: f64,
        integral: bool,
    },
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn num(value: f64) -> Expr {
        Expr::Num { value, integral: value.fract() == 0.0 }
    }

    pub fn relations(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit_columns(&mut |c| {
            out.insert(c.rel);
        });
        out
    }

    pub fn columns(&self) -> Vec<ColRef> {
        let mut out = Vec::new();
        self.visit_columns(&mut |c| {
            if !out.contains(&c) {
                out.push(c);
            }
        });
        out
    }

    pub fn visit_columns(&self, f: &mut impl FnMut(ColRef)) {
        match self {
            Expr::Col(c) => f(*c),
            Expr::Num { .. } => {}
            Expr::Neg(e) => e.visit_columns(f),
            Expr::Bin(_, a, b) => {
                a.visit_columns(f);
                b.visit_columns(f);
            }
        }
    }

    /// IEEE double evaluation; `col` supplies column values.
    #[inline]
    pub fn eval(&self, col: &impl Fn(ColRef) -> f64) -> f64 {
        match self {
            Expr::Col(c) => col(*c),
            Expr::Num { value, .. } => *value,
            Expr::Neg(e) => -e.eval(col),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(col), b.eval(col));
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                }
            }
        }
    }

    /// Whether evaluation stays in the integers given integral columns.
    pub fn is_integral(&self, col_integral: &impl Fn(ColRef) -> bool) -> bool {
        match self {
            Expr::Col(c) => col_integral(*c),
            Expr::Num { integral, .. } => *integral,
            Expr::Neg(e) => e.is_integral(col_integral),
            Expr::Bin(BinOp::Div, ..) => false,
            Expr::Bin(_, a, b) => a.is_integral(col_integral) && b.is_integral(col_integral),
        }
    }

    /// Renders with minimal parentheses; `name` prints columns.
    pub fn render(&self, name: &impl Fn(ColRef) -> String) -> String {
        self.render_prec(name, 0)
    }

    fn render_prec(&self, name: &impl Fn(ColRef) -> String, outer: u8) -> String {
        match self {
            Expr::Col(c) => name(*c),
            Expr::Num { value, integral } => {
                if *integral && value.abs() < 1e15 {
                    format!("{}", *value as i64)
                } else {
                    format!("{value}")
                }
            }
            Expr::Neg(e) => format!("-{}", e.render_prec(name, 3)),
            Expr::Bin(op, a, b) => {
                let p = match op {
                    BinOp::Add | BinOp::Sub => 1,
                    BinOp::Mul | BinOp::Div => 2,
                };
                let s = format!("{} {} {}", a.render_prec(name, p), op.symbol(), b.render_prec(name, p + 1));
                if p < outer {
                    format!("({s})")
                } else {
                    s
                }
            }
        }
    }

    /// Splits a product (`x * y`, `x / y`) into factors.
    pub fn factors(&self) -> Vec<Expr> {
        match self {
            Expr::Bin(BinOp::Mul, a, b) => {
                let mut v = a.factors();
                v.extend(b.factors());
                v
            }
            Expr::Bin(BinOp::Div, a, b) => {
                let mut v = a.factors();
                v.push(Expr::Bin(BinOp::Div, Box::new(Expr::num(1.0)), b.clone()));
                v
            }
            other => vec![other.clone()],
        }
    }

    /// Splits a sum (`x + y`, `x - y`) into terms.
    pub fn terms(&self) -> Vec<Expr> {
        match self {
            Expr::Bin(BinOp::Add, a, b) => {
                let mut v = a.terms();
                v.extend(b.terms());
                v
            }
            Expr::Bin(BinOp::Sub, a, b) => {
                let mut v = a.terms();
                v.extend(b.terms().into_iter().map(|t| Expr::Neg(Box::new(t))));
                v
            }
            other => vec![other.clone()],
        }
    }

    /// Folds a list with `op`; an empty list yields `None`.
    pub fn combine(items: Vec<Expr>, op: BinOp) -> Option<Expr> {
        items.into_iter().reduce(|a, b| Expr::Bin(op, Box::new(a), Box::new(b)))
    }
}
