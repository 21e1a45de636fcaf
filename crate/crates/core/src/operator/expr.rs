//! Operator expressions such as `0.5*(sp kron Im + sm kron Ip)`.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '⊗' | 'kron') factor)*
//! factor := atom ('†' | '\'')*
//! atom   := complex-literal | name | '(' expr ')' | '-' factor
//! ```
//!
//! Complex literals are single tokens of the form `a`, `bi`, `a+bi` or `a-bi`
//! with no interior whitespace. Scalars combine with operators by scaling; a
//! scalar added to an operator stands for a multiple of the identity.

use std::collections::HashMap;
use std::fmt;

use faer::c64;

use super::{tensor, OperatorMatrix};
use crate::error::{Error, Result};

pub type SymbolTable = HashMap<String, OperatorMatrix>;

/// Parsed operator expression.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorExpr {
    Literal(c64),
    Symbol(String),
    Sum(Box<OperatorExpr>, Box<OperatorExpr>),
    Difference(Box<OperatorExpr>, Box<OperatorExpr>),
    Product(Box<OperatorExpr>, Box<OperatorExpr>),
    Tensor(Box<OperatorExpr>, Box<OperatorExpr>),
    Dagger(Box<OperatorExpr>),
    Negate(Box<OperatorExpr>),
}

#[derive(Clone, Debug)]
enum Value {
    Scalar(c64),
    Op(OperatorMatrix),
}

impl Value {
    fn into_op(self, dim: usize) -> OperatorMatrix {
        match self {
            Value::Scalar(s) => OperatorMatrix::identity(dim).scale(s),
            Value::Op(op) => op,
        }
    }
}

impl OperatorExpr {
    /// Evaluate against a symbol table. A bare scalar expression evaluates to
    /// a 1×1 operator.
    pub fn evaluate(&self, symbols: &SymbolTable) -> Result<OperatorMatrix> {
        Ok(self.eval(symbols)?.into_op(1))
    }

    /// Dimension the expression would evaluate to, without evaluating it.
    pub fn dimension(&self, symbols: &SymbolTable) -> Result<Option<usize>> {
        Ok(match self {
            OperatorExpr::Literal(_) => None,
            OperatorExpr::Symbol(name) => Some(
                symbols
                    .get(name)
                    .ok_or_else(|| Error::UnknownSymbol(name.clone()))?
                    .dim(),
            ),
            OperatorExpr::Tensor(a, b) => match (a.dimension(symbols)?, b.dimension(symbols)?) {
                (None, None) => None,
                (Some(x), None) | (None, Some(x)) => Some(x),
                (Some(x), Some(y)) => Some(x * y),
            },
            OperatorExpr::Sum(a, b) | OperatorExpr::Difference(a, b) | OperatorExpr::Product(a, b) => {
                a.dimension(symbols)?.or(b.dimension(symbols)?)
            }
            OperatorExpr::Dagger(a) | OperatorExpr::Negate(a) => a.dimension(symbols)?,
        })
    }

    fn eval(&self, symbols: &SymbolTable) -> Result<Value> {
        use OperatorExpr as E;
        Ok(match self {
            E::Literal(z) => Value::Scalar(*z),
            E::Symbol(name) => Value::Op(
                symbols
                    .get(name)
                    .cloned()
                    .ok_or_else(|| Error::UnknownSymbol(name.clone()))?,
            ),
            E::Sum(a, b) | E::Difference(a, b) => {
                let sign = if matches!(self, E::Sum(..)) { 1.0 } else { -1.0 };
                match (a.eval(symbols)?, b.eval(symbols)?) {
                    (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(x + y * sign),
                    (Value::Op(x), Value::Scalar(y)) => {
                        let y = Value::Scalar(y).into_op(x.dim());
                        Value::Op(if sign > 0.0 { x.try_add(&y)? } else { x.try_sub(&y)? })
                    }
                    (Value::Scalar(x), Value::Op(y)) => {
                        let x = Value::Scalar(x).into_op(y.dim());
                        Value::Op(if sign > 0.0 { x.try_add(&y)? } else { x.try_sub(&y)? })
                    }
                    (Value::Op(x), Value::Op(y)) => {
                        Value::Op(if sign > 0.0 { x.try_add(&y)? } else { x.try_sub(&y)? })
                    }
                }
            }
            E::Product(a, b) => match (a.eval(symbols)?, b.eval(symbols)?) {
                (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(x * y),
                (Value::Scalar(x), Value::Op(y)) | (Value::Op(y), Value::Scalar(x)) => Value::Op(y.scale(x)),
                (Value::Op(x), Value::Op(y)) => Value::Op(x.try_mul(&y)?),
            },
            E::Tensor(a, b) => match (a.eval(symbols)?, b.eval(symbols)?) {
                (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(x * y),
                (Value::Scalar(x), Value::Op(y)) | (Value::Op(y), Value::Scalar(x)) => Value::Op(y.scale(x)),
                (Value::Op(x), Value::Op(y)) => Value::Op(tensor(&x, &y)),
            },
            E::Dagger(a) => match a.eval(symbols)? {
                Value::Scalar(x) => Value::Scalar(x.conj()),
                Value::Op(x) => Value::Op(x.dagger()),
            },
            E::Negate(a) => match a.eval(symbols)? {
                Value::Scalar(x) => Value::Scalar(-x),
                Value::Op(x) => Value::Op(x.scale_re(-1.0)),
            },
        })
    }
}

fn fmt_literal(z: c64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    // `{:?}` on f64 is the shortest representation that round-trips.
    let sign = if z.im.is_sign_negative() { "" } else { "+" };
    write!(f, "({:?}{}{:?}i)", z.re, sign, z.im)
}

impl fmt::Display for OperatorExpr {
    /// Fully parenthesized form; re-parsing it reproduces the evaluation order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use OperatorExpr as E;
        match self {
            E::Literal(z) => fmt_literal(*z, f),
            E::Symbol(s) => write!(f, "{s}"),
            E::Sum(a, b) => write!(f, "({a} + {b})"),
            E::Difference(a, b) => write!(f, "({a} - {b})"),
            E::Product(a, b) => write!(f, "({a} * {b})"),
            E::Tensor(a, b) => write!(f, "({a} ⊗ {b})"),
            E::Dagger(a) => write!(f, "({a})†"),
            E::Negate(a) => write!(f, "-({a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(c64),
    Name(String),
    Plus,
    Minus,
    Star,
    Kron,
    Dagger,
    LParen,
    RParen,
}

struct Lexer<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    _src: &'a str,
}

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        position,
        message: message.into(),
    }
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src.char_indices().collect(),
            pos: 0,
            _src: src,
        }
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars
            .get(self.pos)
            .map(|&(o, _)| o)
            .unwrap_or_else(|| self.chars.last().map(|&(o, c)| o + c.len_utf8()).unwrap_or(0))
    }

    /// Length (in chars) of an unsigned real number starting at `self.pos + k`.
    fn real_len(&self, k: usize) -> usize {
        let mut n = 0;
        let digit = |c: Option<char>| c.is_some_and(|c| c.is_ascii_digit());
        while digit(self.peek_at(k + n)) {
            n += 1;
        }
        if self.peek_at(k + n) == Some('.') {
            n += 1;
            while digit(self.peek_at(k + n)) {
                n += 1;
            }
        }
        if n == 0 || (n == 1 && self.peek_at(k) == Some('.')) {
            return 0;
        }
        if matches!(self.peek_at(k + n), Some('e' | 'E')) {
            let mut m = 1;
            if matches!(self.peek_at(k + n + m), Some('+' | '-')) {
                m += 1;
            }
            if digit(self.peek_at(k + n + m)) {
                while digit(self.peek_at(k + n + m)) {
                    m += 1;
                }
                n += m;
            }
        }
        n
    }

    fn slice(&self, from: usize, len: usize) -> String {
        self.chars[from..from + len].iter().map(|&(_, c)| c).collect()
    }

    fn is_ident_char(c: Option<char>) -> bool {
        c.is_some_and(|c| c.is_alphanumeric() || c == '_')
    }

    /// Reads `[-]real[i]` optionally followed by `(+|-)real i`.
    fn number(&mut self, negative: bool) -> Result<c64> {
        let start = self.offset();
        let len = self.real_len(0);
        if len == 0 {
            return Err(syntax(start, "expected a number"));
        }
        let text = self.slice(self.pos, len);
        let mut value: f64 = text.parse().map_err(|_| syntax(start, format!("bad number `{text}`")))?;
        if negative {
            value = -value;
        }
        self.pos += len;
        if self.peek_at(0) == Some('i') && !Self::is_ident_char(self.peek_at(1)) {
            self.pos += 1;
            return Ok(c64::new(0.0, value));
        }
        // complex continuation: sign, digits, trailing 'i'
        if let Some(sign @ ('+' | '-')) = self.peek_at(0) {
            let ilen = self.real_len(1);
            if ilen > 0 && self.peek_at(1 + ilen) == Some('i') && !Self::is_ident_char(self.peek_at(2 + ilen)) {
                let text = self.slice(self.pos + 1, ilen);
                let mut im: f64 = text.parse().map_err(|_| syntax(start, format!("bad number `{text}`")))?;
                if sign == '-' {
                    im = -im;
                }
                self.pos += ilen + 2;
                return Ok(c64::new(value, im));
            }
        }
        Ok(c64::new(value, 0.0))
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>> {
        let mut out: Vec<(usize, Tok)> = Vec::new();
        while let Some(c) = self.peek_at(0) {
            let at = self.offset();
            if c.is_whitespace() {
                self.pos += 1;
                continue;
            }
            let operand_before = matches!(
                out.last(),
                Some((_, Tok::Num(_) | Tok::Name(_) | Tok::RParen | Tok::Dagger))
            );
            let tok = match c {
                '+' => {
                    self.pos += 1;
                    Tok::Plus
                }
                '-' if !operand_before && self.real_len(1) > 0 => {
                    self.pos += 1;
                    Tok::Num(self.number(true)?)
                }
                '-' => {
                    self.pos += 1;
                    Tok::Minus
                }
                '*' => {
                    self.pos += 1;
                    Tok::Star
                }
                '⊗' => {
                    self.pos += 1;
                    Tok::Kron
                }
                '†' | '\'' => {
                    self.pos += 1;
                    Tok::Dagger
                }
                '(' => {
                    self.pos += 1;
                    Tok::LParen
                }
                ')' => {
                    self.pos += 1;
                    Tok::RParen
                }
                c if c.is_ascii_digit() || c == '.' => Tok::Num(self.number(false)?),
                c if c.is_alphabetic() || c == '_' => {
                    let mut n = 0;
                    while Self::is_ident_char(self.peek_at(n)) {
                        n += 1;
                    }
                    let name = self.slice(self.pos, n);
                    self.pos += n;
                    if name == "kron" {
                        Tok::Kron
                    } else {
                        Tok::Name(name)
                    }
                }
                other => return Err(syntax(at, format!("unexpected character `{other}`"))),
            };
            out.push((at, tok));
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|&(o, _)| o).unwrap_or(self.end)
    }

    fn expr(&mut self) -> Result<OperatorExpr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = OperatorExpr::Sum(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = OperatorExpr::Difference(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<OperatorExpr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = OperatorExpr::Product(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Tok::Kron) => {
                    self.pos += 1;
                    lhs = OperatorExpr::Tensor(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<OperatorExpr> {
        let mut base = self.atom()?;
        while self.peek() == Some(&Tok::Dagger) {
            self.pos += 1;
            base = OperatorExpr::Dagger(Box::new(base));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<OperatorExpr> {
        let at = self.here();
        match self.toks.get(self.pos).map(|(_, t)| t.clone()) {
            Some(Tok::Num(z)) => {
                self.pos += 1;
                Ok(OperatorExpr::Literal(z))
            }
            Some(Tok::Name(n)) => {
                self.pos += 1;
                Ok(OperatorExpr::Symbol(n))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(syntax(self.here(), "expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(OperatorExpr::Negate(Box::new(self.factor()?)))
            }
            Some(t) => Err(syntax(at, format!("unexpected token {t:?}"))),
            None => Err(syntax(at, "unexpected end of input")),
        }
    }
}

/// Parse `text` into an expression tree.
pub fn parse_expr(text: &str) -> Result<OperatorExpr> {
    let toks = Lexer::new(text).tokens()?;
    let mut parser = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let e = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return Err(syntax(parser.here(), "trailing input"));
    }
    Ok(e)
}

/// Parse and evaluate `text` against `symbols`.
pub fn parse_operator_expr(text: &str, symbols: &SymbolTable) -> Result<OperatorMatrix> {
    parse_expr(text)?.evaluate(symbols)
}
