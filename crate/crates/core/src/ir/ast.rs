//! Parsed, unresolved query syntax.

use super::lexer::Pos;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Sum,
    Count,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Sum => "SUM",
            AggFunc::Count => "COUNT",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AstExpr {
    Column {
        qualifier: Option<String>,
        name: String,
        pos: Pos,
    },
    Number {
        text: String,
        pos: Pos,
    },
    Str {
        value: String,
        pos: Pos,
    },
    Neg {
        operand: Box<AstExpr>,
        pos: Pos,
    },
    Binary {
        op: BinOp,
        lhs: Box<AstExpr>,
        rhs: Box<AstExpr>,
        pos: Pos,
    },
    /// `arg` is `None` for `COUNT(*)`.
    Aggregate {
        func: AggFunc,
        arg: Option<Box<AstExpr>>,
        pos: Pos,
    },
}

impl AstExpr {
    pub fn pos(&self) -> Pos {
        match self {
            AstExpr::Column { pos, .. }
            | AstExpr::Number { pos, .. }
            | AstExpr::Str { pos, .. }
            | AstExpr::Neg { pos, .. }
            | AstExpr::Binary { pos, .. }
            | AstExpr::Aggregate { pos, .. } => *pos,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }

    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub op: CmpOp,
    pub lhs: AstExpr,
    pub rhs: AstExpr,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectItem {
    pub expr: AstExpr,
    pub alias: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FromItem {
    pub relation: String,
    pub alias: Option<String>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectStatement {
    pub select: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub conditions: Vec<Comparison>,
    pub group_by: Vec<AstExpr>,
}
