//! Row filter expressions.
//!
//! ```text
//! expr    := or
//! or      := and ("or" and)*
//! and     := unary ("and" unary)*
//! unary   := "not" unary | cmp
//! cmp     := operand OP operand | "(" expr ")"
//! operand := COLUMN | STRING | NUMBER
//! OP      := "==" | "!=" | "<" | "<=" | ">" | ">="
//! ```
//!
//! A bare token made of `[A-Za-z0-9_.-]` is a number when it reads as
//! `-?digits(.digits)?`, a keyword when it is `and`/`or`/`not`, and a column
//! reference otherwise. Strings use single or double quotes with `\` escapes.
//!
//! Evaluation treats cells as text. When both operands parse as decimals the
//! comparison is numeric; otherwise `==`/`!=` compare exact strings and the
//! ordering operators are a type error. A null operand makes the comparison
//! false.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rust_decimal::Decimal;
use thiserror::Error;

use crate::table::RowRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Le,
        CmpOp::Gt,
        CmpOp::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Column(String),
    Str(String),
    Number(Decimal),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterExpr {
    Cmp {
        op: CmpOp,
        lhs: Operand,
        rhs: Operand,
    },
    Not(Box<FilterExpr>),
    And(Box<FilterExpr>, Box<FilterExpr>),
    Or(Box<FilterExpr>, Box<FilterExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterParseError {
    #[error("filter expression is empty")]
    Empty,
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
}

impl FilterParseError {
    /// 1-based character position, when the error has one.
    pub fn position(&self) -> Option<usize> {
        match self {
            FilterParseError::Empty => None,
            FilterParseError::Syntax { position, .. } => Some(*position),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterEvalError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("type error: `{op}` needs numeric operands, got {lhs:?} and {rhs:?}")]
    TypeError {
        op: &'static str,
        lhs: String,
        rhs: String,
    },
}

/// Anything a filter can read cells from.
pub trait RowSource {
    /// `None` when the column does not exist, `Some(None)` for a null cell.
    fn lookup(&self, column: &str) -> Option<Option<&str>>;
}

impl RowSource for RowRef<'_> {
    fn lookup(&self, column: &str) -> Option<Option<&str>> {
        self.get(column)
    }
}

impl RowSource for BTreeMap<String, Option<String>> {
    fn lookup(&self, column: &str) -> Option<Option<&str>> {
        self.get(column).map(|c| c.as_deref())
    }
}

impl<R: RowSource + ?Sized> RowSource for &R {
    fn lookup(&self, column: &str) -> Option<Option<&str>> {
        (**self).lookup(column)
    }
}

// ---------------------------------------------------------------------------
// Lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Op(CmpOp),
    And,
    Or,
    Not,
    Column(String),
    Str(String),
    Number(Decimal),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    pos: usize,
}

fn is_bare_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')
}

fn looks_numeric(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

fn syntax(position: usize, message: impl Into<String>) -> FilterParseError {
    FilterParseError::Syntax {
        position,
        message: message.into(),
    }
}

fn lex(source: &str) -> Result<Vec<Spanned>, FilterParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let two = |a: char, b: char| c == a && chars.get(i + 1) == Some(&b);
        let (tok, len) = if c == '(' {
            (Tok::LParen, 1)
        } else if c == ')' {
            (Tok::RParen, 1)
        } else if two('=', '=') {
            (Tok::Op(CmpOp::Eq), 2)
        } else if two('!', '=') {
            (Tok::Op(CmpOp::Ne), 2)
        } else if two('<', '=') {
            (Tok::Op(CmpOp::Le), 2)
        } else if two('>', '=') {
            (Tok::Op(CmpOp::Ge), 2)
        } else if c == '<' {
            (Tok::Op(CmpOp::Lt), 1)
        } else if c == '>' {
            (Tok::Op(CmpOp::Gt), 1)
        } else if c == '"' || c == '\'' {
            let mut text = String::new();
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None => return Err(syntax(pos, "unterminated string literal")),
                    Some('\\') => match chars.get(j + 1) {
                        Some(&e) => {
                            text.push(e);
                            j += 2;
                        }
                        None => return Err(syntax(pos, "unterminated string literal")),
                    },
                    Some(&q) if q == c => break,
                    Some(&other) => {
                        text.push(other);
                        j += 1;
                    }
                }
            }
            (Tok::Str(text), j + 1 - i)
        } else if is_bare_char(c) {
            let mut j = i;
            while j < chars.len() && is_bare_char(chars[j]) {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            let tok = match word.as_str() {
                "and" => Tok::And,
                "or" => Tok::Or,
                "not" => Tok::Not,
                w if looks_numeric(w) => match Decimal::from_str(w) {
                    Ok(d) => Tok::Number(d),
                    Err(_) => return Err(syntax(pos, "number out of range")),
                },
                _ => Tok::Column(word),
            };
            (tok, j - i)
        } else {
            return Err(syntax(pos, alloc::format!("unexpected character {c:?}")));
        };
        out.push(Spanned { tok, pos });
        i += len;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parsing

struct Parser {
    toks: Vec<Spanned>,
    at: usize,
    end_pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end_pos, |t| t.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.tok.clone());
        self.at += 1;
        t
    }

    fn or(&mut self) -> Result<FilterExpr, FilterParseError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            let rhs = self.and()?;
            lhs = FilterExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<FilterExpr, FilterParseError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.bump();
            let rhs = self.unary()?;
            lhs = FilterExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<FilterExpr, FilterParseError> {
        if self.peek() == Some(&Tok::Not) {
            self.bump();
            return Ok(FilterExpr::Not(Box::new(self.unary()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<FilterExpr, FilterParseError> {
        if self.peek() == Some(&Tok::LParen) {
            self.bump();
            let inner = self.or()?;
            if self.peek() != Some(&Tok::RParen) {
                return Err(syntax(self.pos(), "expected `)`"));
            }
            self.bump();
            return Ok(inner);
        }
        let lhs = self.operand()?;
        let op = match self.peek() {
            Some(Tok::Op(op)) => *op,
            _ => return Err(syntax(self.pos(), "expected a comparison operator")),
        };
        self.bump();
        let rhs = self.operand()?;
        if let Some(Tok::Op(_)) = self.peek() {
            return Err(syntax(self.pos(), "comparisons do not chain"));
        }
        Ok(FilterExpr::Cmp { op, lhs, rhs })
    }

    fn operand(&mut self) -> Result<Operand, FilterParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Column(c)) => Ok(Operand::Column(c)),
            Some(Tok::Str(s)) => Ok(Operand::Str(s)),
            Some(Tok::Number(n)) => Ok(Operand::Number(n)),
            Some(_) => Err(syntax(pos, "expected a column, string or number")),
            None => Err(syntax(pos, "unexpected end of input")),
        }
    }
}

/// Parses a filter expression.
pub fn parse_filter(source: &str) -> Result<FilterExpr, FilterParseError> {
    let toks = lex(source)?;
    if toks.is_empty() {
        return Err(FilterParseError::Empty);
    }
    let mut p = Parser {
        toks,
        at: 0,
        end_pos: source.chars().count() + 1,
    };
    let expr = p.or()?;
    if p.at < p.toks.len() {
        return Err(syntax(p.pos(), "unexpected trailing input"));
    }
    Ok(expr)
}

impl FromStr for FilterExpr {
    type Err = FilterParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_filter(s)
    }
}

// ---------------------------------------------------------------------------
// Printing

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Column(c) => f.write_str(c),
            Operand::Number(n) => write!(f, "{n}"),
            Operand::Str(s) => {
                f.write_str("\"")?;
                for ch in s.chars() {
                    if ch == '"' || ch == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{ch}")?;
                }
                f.write_str("\"")
            }
        }
    }
}

fn precedence(e: &FilterExpr) -> u8 {
    match e {
        FilterExpr::Or(..) => 1,
        FilterExpr::And(..) => 2,
        FilterExpr::Not(_) => 3,
        FilterExpr::Cmp { .. } => 4,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &FilterExpr, min: u8) -> fmt::Result {
    if precedence(child) < min {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for FilterExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterExpr::Cmp { op, lhs, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            FilterExpr::Not(inner) => {
                f.write_str("not ")?;
                write_child(f, inner, 3)
            }
            // left-associative chains: the right child needs parens at equal precedence
            FilterExpr::And(l, r) => {
                write_child(f, l, 2)?;
                f.write_str(" and ")?;
                write_child(f, r, 3)
            }
            FilterExpr::Or(l, r) => {
                write_child(f, l, 1)?;
                f.write_str(" or ")?;
                write_child(f, r, 2)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

impl FilterExpr {
    /// Column names referenced anywhere in the expression, sorted.
    pub fn columns(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            FilterExpr::Cmp { lhs, rhs, .. } => {
                for o in [lhs, rhs] {
                    if let Operand::Column(c) = o {
                        out.insert(c.as_str());
                    }
                }
            }
            FilterExpr::Not(e) => e.collect_columns(out),
            FilterExpr::And(a, b) | FilterExpr::Or(a, b) => {
                a.collect_columns(out);
                b.collect_columns(out);
            }
        }
    }

    pub fn eval<R: RowSource + ?Sized>(&self, row: &R) -> Result<bool, FilterEvalError> {
        eval_filter(self, row)
    }
}

enum Resolved<'a> {
    Null,
    Text(alloc::borrow::Cow<'a, str>),
}

fn resolve<'a, R: RowSource + ?Sized>(
    operand: &'a Operand,
    row: &'a R,
) -> Result<Resolved<'a>, FilterEvalError> {
    use alloc::borrow::Cow;
    Ok(match operand {
        Operand::Column(c) => match row.lookup(c) {
            None => return Err(FilterEvalError::UnknownColumn(c.clone())),
            Some(None) => Resolved::Null,
            Some(Some(v)) => Resolved::Text(Cow::Borrowed(v)),
        },
        Operand::Str(s) => Resolved::Text(Cow::Borrowed(s.as_str())),
        Operand::Number(n) => Resolved::Text(Cow::Owned(n.to_string())),
    })
}

fn compare(op: CmpOp, lhs: &str, rhs: &str) -> Result<bool, FilterEvalError> {
    if let (Ok(a), Ok(b)) = (Decimal::from_str(lhs), Decimal::from_str(rhs)) {
        return Ok(match op {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        });
    }
    match op {
        CmpOp::Eq => Ok(lhs == rhs),
        CmpOp::Ne => Ok(lhs != rhs),
        _ => Err(FilterEvalError::TypeError {
            op: op.symbol(),
            lhs: lhs.into(),
            rhs: rhs.into(),
        }),
    }
}

/// Evaluates `expr` against one row.
pub fn eval_filter<R: RowSource + ?Sized>(
    expr: &FilterExpr,
    row: &R,
) -> Result<bool, FilterEvalError> {
    match expr {
        FilterExpr::Cmp { op, lhs, rhs } => {
            let l = resolve(lhs, row)?;
            let r = resolve(rhs, row)?;
            match (l, r) {
                (Resolved::Text(a), Resolved::Text(b)) => compare(*op, &a, &b),
                _ => Ok(false),
            }
        }
        FilterExpr::Not(e) => Ok(!eval_filter(e, row)?),
        FilterExpr::And(a, b) => Ok(eval_filter(a, row)? && eval_filter(b, row)?),
        FilterExpr::Or(a, b) => Ok(eval_filter(a, row)? || eval_filter(b, row)?),
    }
}
