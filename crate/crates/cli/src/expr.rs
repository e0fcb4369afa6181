//! Tokens and arithmetic expressions with exact rational literals.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' atom)?
//! atom  := number | identifier | '(' expr ')'
//! ```
//!
//! Numbers are integers, decimals or scientific literals (`2.5`, `1e-3`) and
//! are captured exactly. Purely numeric subexpressions are folded, so `5/2`,
//! `2.5` and `10/4` give the same tree. Division is by constants only. The
//! identifier `base`, when enabled, stands for the base polynomial and is the
//! only thing that takes negative or fractional powers.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use sdecert::poly::{BExpr, PolyError, QPoly};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Num(BigRational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Eq,
    End,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Num(q) => format!("number {q}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::End => "end of line".into(),
            t => format!("`{}`", t.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Caret => "^",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Eq => "=",
            _ => "",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: BTreeSet<String>,
    pub found: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, expected: &[&str], found: impl Into<String>) -> Self {
        ParseError { line, column, expected: expected.iter().map(|s| s.to_string()).collect(), found: found.into() }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let exp: Vec<&str> = self.expected.iter().map(String::as_str).collect();
        write!(f, "line {}, column {}: expected {}, found {}", self.line, self.column, exp.join(" or "), self.found)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

fn digits(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    i
}

fn ten_pow(k: u32) -> BigInt {
    num_traits::pow(BigInt::from(10), k as usize)
}

/// Splits one line into tokens, stopping at `#`. Columns are 1-based and
/// offset by `column0`.
pub fn tokenize(text: &str, line: usize, column0: usize) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = column0 + i;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            '=' => Some(Tok::Eq),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned { tok, line, column });
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let int_end = digits(&chars, i);
            let mut mantissa: String = chars[i..int_end].iter().collect();
            let mut frac_len = 0u32;
            let mut j = int_end;
            if j < chars.len() && chars[j] == '.' {
                let fe = digits(&chars, j + 1);
                if fe == j + 1 {
                    return Err(ParseError::new(line, column0 + j + 1, &["digit"], describe_char(chars.get(j + 1))));
                }
                mantissa.extend(&chars[j + 1..fe]);
                frac_len = (fe - j - 1) as u32;
                j = fe;
            }
            let mut exp: i64 = 0;
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                let neg = chars.get(k) == Some(&'-');
                if matches!(chars.get(k), Some('-') | Some('+')) {
                    k += 1;
                }
                let ee = digits(&chars, k);
                if ee > k {
                    let s: String = chars[k..ee].iter().collect();
                    exp = s
                        .parse::<i64>()
                        .map_err(|_| ParseError::new(line, column0 + k, &["exponent below 10^9"], s.clone()))?;
                    if exp > 1_000 {
                        return Err(ParseError::new(line, column0 + k, &["exponent at most 1000"], s));
                    }
                    if neg {
                        exp = -exp;
                    }
                    j = ee;
                }
            }
            if mantissa.is_empty() {
                mantissa.push('0');
            }
            let m: BigInt = mantissa.parse().expect("digits");
            let scale = exp - frac_len as i64;
            let q = if scale >= 0 {
                BigRational::from_integer(m * ten_pow(scale as u32))
            } else {
                if -scale > 1_100 {
                    return Err(ParseError::new(
                        line,
                        column,
                        &["literal with fewer than 1100 decimals"],
                        "long literal",
                    ));
                }
                BigRational::new(m, ten_pow((-scale) as u32))
            };
            out.push(Spanned { tok: Tok::Num(q), line, column });
            i = j;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            out.push(Spanned { tok: Tok::Ident(chars[i..j].iter().collect()), line, column });
            i = j;
        } else {
            return Err(ParseError::new(line, column, &["token"], format!("character `{c}`")));
        }
    }
    out.push(Spanned { tok: Tok::End, line, column: column0 + chars.len() });
    Ok(out)
}

fn describe_char(c: Option<&char>) -> String {
    match c {
        Some(c) => format!("character `{c}`"),
        None => "end of line".into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(BigRational),
    Var(usize),
    Base,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Division by a nonzero constant.
    Div(Box<Expr>, BigRational),
    Neg(Box<Expr>),
    Pow(Box<Expr>, BigRational),
}

fn rat_pow(q: &BigRational, e: &BigRational) -> Option<BigRational> {
    if !e.is_integer() || e.abs() > BigRational::from_integer(MAX_EXPONENT.into()) {
        return None;
    }
    let k = e.to_integer().to_i32()?;
    if k < 0 && q.is_zero() {
        return None;
    }
    let bits = q.numer().bits() + q.denom().bits();
    if bits * u64::from(k.unsigned_abs()) > 1 << 16 {
        return None;
    }
    Some(num_traits::pow::Pow::pow(q, k))
}

impl Expr {
    pub fn as_num(&self) -> Option<&BigRational> {
        match self {
            Expr::Num(q) => Some(q),
            _ => None,
        }
    }

    fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(x) => Expr::Num(-x),
            a => Expr::Neg(Box::new(a)),
        }
    }

    /// Height of the tree; leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Base => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => 1 + a.depth().max(b.depth()),
            Expr::Div(a, _) | Expr::Neg(a) | Expr::Pow(a, _) => 1 + a.depth(),
        }
    }

    /// Fully parenthesized text that parses back to the same tree.
    pub fn render(&self, vars: &[String]) -> String {
        match self {
            Expr::Num(q) => render_num(q),
            Expr::Var(i) => vars[*i].clone(),
            Expr::Base => "base".into(),
            Expr::Add(a, b) => format!("({} + {})", a.render(vars), b.render(vars)),
            Expr::Sub(a, b) => format!("({} - {})", a.render(vars), b.render(vars)),
            Expr::Mul(a, b) => format!("({} * {})", a.render(vars), b.render(vars)),
            Expr::Div(a, q) => format!("({} / {})", a.render(vars), render_num(q)),
            Expr::Neg(a) => format!("(-{})", a.render(vars)),
            Expr::Pow(a, q) => format!("({}^{})", a.render(vars), render_num(q)),
        }
    }

    /// Value over the given base; `base` maps to `b¹`.
    pub fn to_bexpr(&self, nvars: usize, base: &Arc<QPoly>) -> Result<BExpr, PolyError> {
        Ok(match self {
            Expr::Num(q) => BExpr::constant(q.clone(), base),
            Expr::Var(i) => BExpr::from_poly(QPoly::var(nvars, *i), base)?,
            Expr::Base => BExpr::power(base, BigRational::one())?,
            Expr::Add(a, b) => a.to_bexpr(nvars, base)?.try_add(&b.to_bexpr(nvars, base)?)?,
            Expr::Sub(a, b) => a.to_bexpr(nvars, base)?.try_sub(&b.to_bexpr(nvars, base)?)?,
            Expr::Mul(a, b) => a.to_bexpr(nvars, base)?.try_mul(&b.to_bexpr(nvars, base)?)?,
            Expr::Div(a, q) => a.to_bexpr(nvars, base)?.scale(&(BigRational::one() / q)),
            Expr::Neg(a) => a.to_bexpr(nvars, base)?.neg(),
            Expr::Pow(a, q) if **a == Expr::Base => BExpr::power(base, q.clone())?,
            Expr::Pow(a, q) => {
                let inner = a.to_bexpr(nvars, base)?;
                let k = q.to_integer().to_u32().unwrap_or(0);
                let mut acc = BExpr::constant(BigRational::one(), base);
                for _ in 0..k {
                    acc = acc.try_mul(&inner)?;
                }
                acc
            }
        })
    }

    /// Value as a polynomial; `None` when `base` occurs.
    pub fn to_poly(&self, nvars: usize) -> Option<QPoly> {
        Some(match self {
            Expr::Num(q) => QPoly::constant(nvars, q.clone()),
            Expr::Var(i) => QPoly::var(nvars, *i),
            Expr::Base => return None,
            Expr::Add(a, b) => &a.to_poly(nvars)? + &b.to_poly(nvars)?,
            Expr::Sub(a, b) => &a.to_poly(nvars)? - &b.to_poly(nvars)?,
            Expr::Mul(a, b) => &a.to_poly(nvars)? * &b.to_poly(nvars)?,
            Expr::Div(a, q) => a.to_poly(nvars)?.scale(&(BigRational::one() / q)),
            Expr::Neg(a) => -a.to_poly(nvars)?,
            Expr::Pow(a, q) => a.to_poly(nvars)?.pow(q.to_integer().to_u32()?),
        })
    }

    pub fn mentions_base(&self) -> bool {
        match self {
            Expr::Base => true,
            Expr::Num(_) | Expr::Var(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.mentions_base() || b.mentions_base(),
            Expr::Div(a, _) | Expr::Neg(a) | Expr::Pow(a, _) => a.mentions_base(),
        }
    }
}

pub fn render_num(q: &BigRational) -> String {
    if q.is_integer() && !q.is_negative() {
        q.to_string()
    } else {
        format!("({q})")
    }
}

const OPERATORS: [&str; 5] = ["+", "-", "*", "/", "^"];
const OPERAND: [&str; 4] = ["number", "variable", "(", "-"];

/// Largest exponent accepted; keeps evaluation bounded on hostile input.
pub const MAX_EXPONENT: u32 = 64;
/// Deepest expression tree accepted.
pub const MAX_DEPTH: usize = 200;
/// Recursion guard on the syntax. Rendering at most doubles the nesting of
/// a tree, so rendered text of an accepted tree always parses again.
const MAX_SYNTAX_DEPTH: usize = 2 * MAX_DEPTH + 100;

/// Cursor over one line's tokens.
pub struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    vars: &'a [String],
    allow_base: bool,
    /// Operators that could have continued the last operand.
    continuations: BTreeSet<String>,
    depth: usize,
}

impl<'a> Parser<'a> {
    pub fn new(toks: Vec<Spanned>, vars: &'a [String], allow_base: bool) -> Self {
        Parser { toks, pos: 0, vars, allow_base, continuations: BTreeSet::new(), depth: 0 }
    }

    pub fn set_allow_base(&mut self, allow: bool) {
        self.allow_base = allow;
    }

    pub fn peek(&self) -> &Spanned {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    pub fn bump(&mut self) -> Spanned {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        self.continuations.clear();
        t
    }

    pub fn error(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        let mut e = ParseError::new(t.line, t.column, expected, t.tok.describe());
        e.expected.extend(self.continuations.iter().cloned());
        e
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if &self.peek().tok == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.error(&[tok.symbol()]))
        }
    }

    pub fn expect_end(&mut self) -> Result<(), ParseError> {
        if self.peek().tok == Tok::End {
            Ok(())
        } else {
            Err(self.error(&["end of line"]))
        }
    }

    pub fn ident(&mut self, what: &str) -> Result<(String, usize, usize), ParseError> {
        match self.peek().clone() {
            Spanned { tok: Tok::Ident(s), line, column } => {
                self.bump();
                Ok((s, line, column))
            }
            _ => Err(self.error(&[what])),
        }
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        let start = self.peek().clone();
        self.depth += 1;
        if self.depth > MAX_SYNTAX_DEPTH {
            return Err(self.error(&["shallower nesting"]));
        }
        let mut acc = self.term()?;
        loop {
            if self.eat(&Tok::Plus) {
                acc = Expr::add(acc, self.term()?);
            } else if self.eat(&Tok::Minus) {
                acc = Expr::sub(acc, self.term()?);
            } else {
                break;
            }
        }
        self.depth -= 1;
        if self.depth == 0 && acc.depth() > MAX_DEPTH {
            return Err(ParseError::new(start.line, start.column, &["shallower nesting"], "deeper expression"));
        }
        self.continuations = OPERATORS.iter().map(|s| s.to_string()).collect();
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(&Tok::Star) {
                acc = Expr::mul(acc, self.unary()?);
            } else if self.peek().tok == Tok::Slash {
                self.bump();
                let at = self.peek().clone();
                let d = self.unary()?;
                match d {
                    Expr::Num(q) if !q.is_zero() => {
                        acc = match acc {
                            Expr::Num(x) => Expr::Num(x / q),
                            a => Expr::Div(Box::new(a), q),
                        }
                    }
                    Expr::Num(_) => return Err(ParseError::new(at.line, at.column, &["nonzero divisor"], "zero")),
                    _ => return Err(ParseError::new(at.line, at.column, &["constant divisor"], at.tok.describe())),
                }
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Minus) {
            return self.nested(|p| p.unary()).map(Expr::neg);
        }
        if self.eat(&Tok::Plus) {
            return self.nested(|p| p.unary());
        }
        self.power()
    }

    fn nested(&mut self, f: impl FnOnce(&mut Self) -> Result<Expr, ParseError>) -> Result<Expr, ParseError> {
        self.depth += 1;
        if self.depth > MAX_SYNTAX_DEPTH {
            return Err(self.error(&["shallower nesting"]));
        }
        let out = f(self);
        self.depth -= 1;
        out
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let a = self.atom()?;
        if self.peek().tok != Tok::Caret {
            return Ok(a);
        }
        self.bump();
        let at = self.peek().clone();
        let Expr::Num(q) = self.atom()? else {
            return Err(ParseError::new(at.line, at.column, &["constant exponent"], at.tok.describe()));
        };
        let small = q.is_integer() && !q.is_negative() && q <= BigRational::from_integer(MAX_EXPONENT.into());
        let out = match a {
            Expr::Num(x) => match rat_pow(&x, &q) {
                Some(v) => Expr::Num(v),
                None => {
                    return Err(ParseError::new(
                        at.line,
                        at.column,
                        &["integer exponent of a nonzero constant"],
                        q.to_string(),
                    ))
                }
            },
            Expr::Base if q.abs() <= BigRational::from_integer(MAX_EXPONENT.into()) => {
                Expr::Pow(Box::new(Expr::Base), q)
            }
            a if small => Expr::Pow(Box::new(a), q),
            _ => {
                let want = format!("integer exponent in 0..={MAX_EXPONENT}");
                return Err(ParseError::new(at.line, at.column, &[want.as_str()], q.to_string()));
            }
        };
        self.continuations = ["+", "-", "*", "/"].iter().map(|s| s.to_string()).collect();
        Ok(out)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.peek().clone();
        let out = match t.tok {
            Tok::Num(q) => {
                self.bump();
                Expr::Num(q)
            }
            Tok::Ident(ref s) => {
                if let Some(i) = self.vars.iter().position(|v| v == s) {
                    self.bump();
                    Expr::Var(i)
                } else if s == "base" && self.allow_base {
                    self.bump();
                    Expr::Base
                } else {
                    return Err(ParseError::new(t.line, t.column, &["declared variable"], t.tok.describe()));
                }
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                e
            }
            _ => return Err(self.error(&OPERAND)),
        };
        self.continuations = OPERATORS.iter().map(|s| s.to_string()).collect();
        Ok(out)
    }
}

/// Parses a whole string as one expression over `vars`, with `base`
/// available.
pub fn parse_expr(text: &str, vars: &[String]) -> Result<Expr, ParseError> {
    if text.contains('\n') {
        let line = text.lines().count();
        return Err(ParseError::new(1, text.find('\n').unwrap_or(0) + 1, &["single line"], format!("{line} lines")));
    }
    let toks = tokenize(text, 1, 1)?;
    let mut p = Parser::new(toks, vars, true);
    let e = p.expr()?;
    p.expect_end()?;
    Ok(e)
}
