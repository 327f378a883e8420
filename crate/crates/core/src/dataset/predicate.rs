//! Boolean predicates over hidden fields; they play the role of the oracle.
//!
//! Grammar (keywords are case-insensitive):
//!
//! ```text
//! expr  := and ( OR and )*
//! and   := unary ( AND unary )*
//! unary := NOT unary | atom
//! atom  := '(' expr ')' | TRUE | FALSE
//!        | field op literal
//!        | field IN '[' literal ( ',' literal )* ']'
//! op    := = | == | != | <> | < | <= | > | >=
//! ```
//!
//! Literals are numbers or single/double quoted strings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{DatasetError, FieldKind, HiddenField, HiddenValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Text(String),
    Number(f64),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(x) => write!(f, "{x}"),
            Literal::Text(s) => {
                f.write_str("'")?;
                for c in s.chars() {
                    if c == '\'' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("'")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Const(bool),
    Compare { field: String, op: CmpOp, value: Literal },
    In { field: String, values: Vec<Literal> },
    Not(Box<Predicate>),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Predicate {
    pub fn parse(src: &str) -> Result<Predicate, DatasetError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let expr = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(DatasetError::Predicate(format!(
                "unexpected trailing input near token {}",
                p.pos + 1
            )));
        }
        Ok(expr)
    }

    /// Names of hidden fields referenced by the predicate.
    pub fn fields(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_fields(&mut out);
        out
    }

    fn collect_fields<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Predicate::Const(_) => {}
            Predicate::Compare { field, .. } | Predicate::In { field, .. } => {
                if !out.contains(&field.as_str()) {
                    out.push(field);
                }
            }
            Predicate::Not(p) => p.collect_fields(out),
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().for_each(|p| p.collect_fields(out)),
        }
    }

    /// Resolves field names and checks operand types against the declaration.
    pub(crate) fn compile(&self, fields: &[HiddenField]) -> Result<Compiled, DatasetError> {
        let resolve = |name: &str| -> Result<(usize, FieldKind), DatasetError> {
            fields
                .iter()
                .position(|f| f.name == name)
                .map(|i| (i, fields[i].kind))
                .ok_or_else(|| DatasetError::UnknownField(name.to_string()))
        };
        Ok(match self {
            Predicate::Const(b) => Compiled::Const(*b),
            Predicate::Compare { field, op, value } => {
                let (idx, kind) = resolve(field)?;
                match (kind, value) {
                    (FieldKind::Number, Literal::Number(x)) => Compiled::Num { idx, op: *op, value: *x },
                    (FieldKind::Text, Literal::Text(s)) => match op {
                        CmpOp::Eq => Compiled::TextIn { idx, values: vec![s.clone()], negate: false },
                        CmpOp::Ne => Compiled::TextIn { idx, values: vec![s.clone()], negate: true },
                        _ => {
                            return Err(DatasetError::Predicate(format!(
                                "ordering comparison `{}` on text field `{field}`",
                                op.symbol()
                            )))
                        }
                    },
                    _ => {
                        return Err(DatasetError::Predicate(format!(
                            "literal type does not match field `{field}`"
                        )))
                    }
                }
            }
            Predicate::In { field, values } => {
                let (idx, kind) = resolve(field)?;
                match kind {
                    FieldKind::Text => {
                        let mut out = Vec::with_capacity(values.len());
                        for v in values {
                            match v {
                                Literal::Text(s) => out.push(s.clone()),
                                Literal::Number(_) => {
                                    return Err(DatasetError::Predicate(format!(
                                        "numeric literal in set for text field `{field}`"
                                    )))
                                }
                            }
                        }
                        Compiled::TextIn { idx, values: out, negate: false }
                    }
                    FieldKind::Number => {
                        let mut out = Vec::with_capacity(values.len());
                        for v in values {
                            match v {
                                Literal::Number(x) => out.push(*x),
                                Literal::Text(_) => {
                                    return Err(DatasetError::Predicate(format!(
                                        "text literal in set for numeric field `{field}`"
                                    )))
                                }
                            }
                        }
                        Compiled::NumIn { idx, values: out }
                    }
                }
            }
            Predicate::Not(p) => Compiled::Not(Box::new(p.compile(fields)?)),
            Predicate::And(ps) => Compiled::And(ps.iter().map(|p| p.compile(fields)).collect::<Result<_, _>>()?),
            Predicate::Or(ps) => Compiled::Or(ps.iter().map(|p| p.compile(fields)).collect::<Result<_, _>>()?),
        })
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        // 0 = or, 1 = and, 2 = unary
        match self {
            Predicate::Const(true) => f.write_str("TRUE"),
            Predicate::Const(false) => f.write_str("FALSE"),
            Predicate::Compare { field, op, value } => write!(f, "{field} {} {value}", op.symbol()),
            Predicate::In { field, values } => {
                write!(f, "{field} IN [")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Predicate::Not(p) => {
                f.write_str("NOT ")?;
                p.fmt_prec(f, 2)
            }
            Predicate::And(ps) => join(f, ps, " AND ", 1, parent),
            Predicate::Or(ps) => join(f, ps, " OR ", 0, parent),
        }
    }
}

fn join(f: &mut fmt::Formatter<'_>, ps: &[Predicate], sep: &str, level: u8, parent: u8) -> fmt::Result {
    let wrap = parent > level;
    if wrap {
        f.write_str("(")?;
    }
    for (i, p) in ps.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        p.fmt_prec(f, level + 1)?;
    }
    if wrap {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl FromStr for Predicate {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Predicate::parse(s)
    }
}

impl Serialize for Predicate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Predicate::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Compiled {
    Const(bool),
    Num { idx: usize, op: CmpOp, value: f64 },
    NumIn { idx: usize, values: Vec<f64> },
    TextIn { idx: usize, values: Vec<String>, negate: bool },
    Not(Box<Compiled>),
    And(Vec<Compiled>),
    Or(Vec<Compiled>),
}

impl Compiled {
    pub(crate) fn eval(&self, hidden: &[HiddenValue]) -> bool {
        match self {
            Compiled::Const(b) => *b,
            Compiled::Num { idx, op, value } => match &hidden[*idx] {
                HiddenValue::Number(x) => match op {
                    CmpOp::Eq => x == value,
                    CmpOp::Ne => x != value,
                    CmpOp::Lt => x < value,
                    CmpOp::Le => x <= value,
                    CmpOp::Gt => x > value,
                    CmpOp::Ge => x >= value,
                },
                HiddenValue::Text(_) => false,
            },
            Compiled::NumIn { idx, values } => match &hidden[*idx] {
                HiddenValue::Number(x) => values.contains(x),
                HiddenValue::Text(_) => false,
            },
            Compiled::TextIn { idx, values, negate } => match &hidden[*idx] {
                HiddenValue::Text(s) => values.iter().any(|v| v == s) != *negate,
                HiddenValue::Number(_) => false,
            },
            Compiled::Not(p) => !p.eval(hidden),
            Compiled::And(ps) => ps.iter().all(|p| p.eval(hidden)),
            Compiled::Or(ps) => ps.iter().any(|p| p.eval(hidden)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Str(String),
    Num(f64),
    Op(CmpOp),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Token>, DatasetError> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    let err = |msg: String| DatasetError::Predicate(msg);
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push(Token::LParen);
                i += 1
            }
            ')' => {
                out.push(Token::RParen);
                i += 1
            }
            '[' => {
                out.push(Token::LBracket);
                i += 1
            }
            ']' => {
                out.push(Token::RBracket);
                i += 1
            }
            ',' => {
                out.push(Token::Comma);
                i += 1
            }
            '=' => {
                i += if chars.get(i + 1) == Some(&'=') { 2 } else { 1 };
                out.push(Token::Op(CmpOp::Eq));
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Token::Op(CmpOp::Ne));
                    i += 2;
                } else {
                    return Err(err(format!("unexpected `!` at offset {i}")));
                }
            }
            '≠' => {
                out.push(Token::Op(CmpOp::Ne));
                i += 1
            }
            '≤' => {
                out.push(Token::Op(CmpOp::Le));
                i += 1
            }
            '≥' => {
                out.push(Token::Op(CmpOp::Ge));
                i += 1
            }
            '<' => match chars.get(i + 1) {
                Some('=') => {
                    out.push(Token::Op(CmpOp::Le));
                    i += 2
                }
                Some('>') => {
                    out.push(Token::Op(CmpOp::Ne));
                    i += 2
                }
                _ => {
                    out.push(Token::Op(CmpOp::Lt));
                    i += 1
                }
            },
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Token::Op(CmpOp::Ge));
                    i += 2
                } else {
                    out.push(Token::Op(CmpOp::Gt));
                    i += 1
                }
            }
            '\'' | '"' => {
                let quote = c;
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err("unterminated string literal".into())),
                        Some('\\') => {
                            let next = chars.get(i + 1).ok_or_else(|| err("dangling escape".into()))?;
                            s.push(*next);
                            i += 2;
                        }
                        Some(&ch) if ch == quote => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                out.push(Token::Str(s));
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '.' | '-' | '+'))
                {
                    // stop at a sign that is not an exponent sign
                    if matches!(chars[i], '-' | '+') && !matches!(chars[i - 1], 'e' | 'E') {
                        break;
                    }
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let x: f64 = text.parse().map_err(|_| err(format!("bad number `{text}`")))?;
                out.push(Token::Num(x));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '-' | '.')) {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(err(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.tokens.get(self.pos), Some(Token::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn expect(&mut self, t: &Token) -> Result<(), DatasetError> {
        if self.tokens.get(self.pos) == Some(t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(DatasetError::Predicate(format!("expected {t:?} at token {}", self.pos + 1)))
        }
    }

    fn expr(&mut self) -> Result<Predicate, DatasetError> {
        let mut terms = vec![self.and()?];
        while self.peek_keyword("or") {
            self.pos += 1;
            terms.push(self.and()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Predicate::Or(terms) })
    }

    fn and(&mut self) -> Result<Predicate, DatasetError> {
        let mut terms = vec![self.unary()?];
        while self.peek_keyword("and") {
            self.pos += 1;
            terms.push(self.unary()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Predicate::And(terms) })
    }

    fn unary(&mut self) -> Result<Predicate, DatasetError> {
        if self.peek_keyword("not") {
            self.pos += 1;
            return Ok(Predicate::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn literal(&mut self) -> Result<Literal, DatasetError> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Str(s)) => {
                self.pos += 1;
                Ok(Literal::Text(s))
            }
            Some(Token::Num(x)) => {
                self.pos += 1;
                Ok(Literal::Number(x))
            }
            _ => Err(DatasetError::Predicate(format!("expected literal at token {}", self.pos + 1))),
        }
    }

    fn atom(&mut self) -> Result<Predicate, DatasetError> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(&Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if name.eq_ignore_ascii_case("true") {
                    return Ok(Predicate::Const(true));
                }
                if name.eq_ignore_ascii_case("false") {
                    return Ok(Predicate::Const(false));
                }
                if self.peek_keyword("in") {
                    self.pos += 1;
                    self.expect(&Token::LBracket)?;
                    let mut values = vec![self.literal()?];
                    while self.tokens.get(self.pos) == Some(&Token::Comma) {
                        self.pos += 1;
                        values.push(self.literal()?);
                    }
                    self.expect(&Token::RBracket)?;
                    return Ok(Predicate::In { field: name, values });
                }
                match self.tokens.get(self.pos).cloned() {
                    Some(Token::Op(op)) => {
                        self.pos += 1;
                        let value = self.literal()?;
                        Ok(Predicate::Compare { field: name, op, value })
                    }
                    _ => Err(DatasetError::Predicate(format!("expected operator after `{name}`"))),
                }
            }
            _ => Err(DatasetError::Predicate(format!("unexpected token at {}", self.pos + 1))),
        }
    }
}
