//! Affine expressions over named signals, and the small lexer shared with the
//! STL parser.
//!
//! Guards, controller outputs and STL predicates are all written as affine
//! text such as `-0.002*RPM - 1.1*Speed + 183` or `(TankHeight - 7) / 3`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `coeffs · x + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(dim: usize, c: f64) -> Self {
        AffineExpr {
            coeffs: vec![0.0; dim],
            constant: c,
        }
    }

    pub fn variable(dim: usize, i: usize) -> Self {
        let mut coeffs = vec![0.0; dim];
        coeffs[i] = 1.0;
        AffineExpr {
            coeffs,
            constant: 0.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(x)
            .fold(self.constant, |acc, (a, v)| acc + a * v)
    }

    fn scale(mut self, k: f64) -> Self {
        for c in &mut self.coeffs {
            *c *= k;
        }
        self.constant *= k;
        self
    }

    fn add(mut self, other: &AffineExpr, sign: f64) -> Self {
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += sign * o;
        }
        self.constant += sign * other.constant;
        self
    }

    /// Renders as `a1*x1 + a2*x2 + c`, omitting zero terms; floats use the
    /// shortest round-trip representation.
    pub fn to_text(&self, signals: &[String]) -> String {
        let mut out = String::new();
        for (c, name) in self.coeffs.iter().zip(signals) {
            if *c == 0.0 {
                continue;
            }
            push_term(&mut out, *c, Some(name));
        }
        if self.constant != 0.0 || out.is_empty() {
            push_term(&mut out, self.constant, None);
        }
        out
    }
}

fn push_term(out: &mut String, c: f64, name: Option<&String>) {
    let neg = c.is_sign_negative();
    let mag = if neg { -c } else { c };
    if out.is_empty() {
        if neg {
            out.push('-');
        }
    } else {
        out.push_str(if neg { " - " } else { " + " });
    }
    match name {
        Some(n) if mag == 1.0 => out.push_str(n),
        Some(n) => {
            out.push_str(&format_num(mag));
            out.push('*');
            out.push_str(n);
        }
        None => out.push_str(&format_num(mag)),
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_num(x: f64) -> String {
    format!("{x:?}")
}

/// Comparison operator of a predicate or guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn is_strict(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Gt)
    }
}

/// `lhs op rhs`, both sides affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub lhs: AffineExpr,
    pub op: CmpOp,
    pub rhs: AffineExpr,
}

impl Comparison {
    /// The comparison as `w·x + b`, positive exactly when it holds (up to the
    /// strict/non-strict boundary).
    pub fn margin(&self) -> AffineExpr {
        match self.op {
            CmpOp::Lt | CmpOp::Le => self.rhs.clone().add(&self.lhs, -1.0),
            CmpOp::Gt | CmpOp::Ge => self.lhs.clone().add(&self.rhs, -1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Cmp(CmpOp),
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Num(x) => format!("number {x}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Cmp(CmpOp::Lt) => "<",
            Tok::Cmp(CmpOp::Le) => "<=",
            Tok::Cmp(CmpOp::Gt) => ">",
            Tok::Cmp(CmpOp::Ge) => ">=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Bang => "!",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

pub(crate) struct Lexer {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Lexer {
    pub(crate) fn new(text: &str) -> Result<Self> {
        let chars: Vec<char> = text.chars().collect();
        let mut toks = Vec::new();
        let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
        while i < chars.len() {
            let c = chars[i];
            let (l0, c0) = (line, col);
            if c == '\n' {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            if c.is_whitespace() {
                i += 1;
                col += 1;
                continue;
            }
            let err = |message: String| Error::Parse {
                line: l0,
                column: c0,
                message,
            };
            let next = chars.get(i + 1).copied();
            let (tok, len) = match c {
                '+' => (Tok::Plus, 1),
                '-' => (Tok::Minus, 1),
                '*' => (Tok::Star, 1),
                '/' => (Tok::Slash, 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                '[' => (Tok::LBracket, 1),
                ']' => (Tok::RBracket, 1),
                ',' => (Tok::Comma, 1),
                '<' if next == Some('=') => (Tok::Cmp(CmpOp::Le), 2),
                '<' => (Tok::Cmp(CmpOp::Lt), 1),
                '>' if next == Some('=') => (Tok::Cmp(CmpOp::Ge), 2),
                '>' => (Tok::Cmp(CmpOp::Gt), 1),
                '&' if next == Some('&') => (Tok::AndAnd, 2),
                '|' if next == Some('|') => (Tok::OrOr, 2),
                '!' => (Tok::Bang, 1),
                d if d.is_ascii_digit() || (d == '.' && next.is_some_and(|n| n.is_ascii_digit())) => {
                    let mut j = i;
                    while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                        j += 1;
                    }
                    if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                        let mut k = j + 1;
                        if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                            k += 1;
                        }
                        if k < chars.len() && chars[k].is_ascii_digit() {
                            while k < chars.len() && chars[k].is_ascii_digit() {
                                k += 1;
                            }
                            j = k;
                        }
                    }
                    let s: String = chars[i..j].iter().collect();
                    let v: f64 = s
                        .parse()
                        .map_err(|_| err(format!("malformed number `{s}`")))?;
                    (Tok::Num(v), j - i)
                }
                a if a.is_alphabetic() || a == '_' => {
                    let mut j = i;
                    while j < chars.len()
                        && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '.')
                    {
                        j += 1;
                    }
                    (Tok::Ident(chars[i..j].iter().collect()), j - i)
                }
                other => return Err(err(format!("unexpected character `{other}`"))),
            };
            toks.push(Spanned {
                tok,
                line: l0,
                column: c0,
            });
            i += len;
            col += len;
        }
        toks.push(Spanned {
            tok: Tok::Eof,
            line,
            column: col,
        });
        Ok(Lexer { toks, pos: 0 })
    }

    pub(crate) fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    pub(crate) fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    pub(crate) fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn error_here(&self, message: impl Into<String>) -> Error {
        let t = self.peek();
        Error::Parse {
            line: t.line,
            column: t.column,
            message: message.into(),
        }
    }

    pub(crate) fn expect(&mut self, tok: Tok) -> Result<Spanned> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.error_here(format!(
                "expected {}, found {}",
                tok.describe(),
                self.peek().tok.describe()
            )))
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    pub(crate) fn expect_eof(&self) -> Result<()> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.error_here(format!("unexpected {}", self.peek().tok.describe())))
        }
    }
}

/// Recursive-descent parser for affine expressions on top of [`Lexer`].
pub(crate) struct ExprParser<'a> {
    pub signals: &'a [String],
    /// Whether `(` may open a sub-expression. The STL grammar reserves
    /// parentheses for formulas.
    pub parens: bool,
}

impl ExprParser<'_> {
    pub(crate) fn expr(&self, lx: &mut Lexer) -> Result<AffineExpr> {
        let mut acc = self.term(lx)?;
        loop {
            let sign = match lx.peek().tok {
                Tok::Plus => 1.0,
                Tok::Minus => -1.0,
                _ => return Ok(acc),
            };
            lx.bump();
            let rhs = self.term(lx)?;
            acc = acc.add(&rhs, sign);
        }
    }

    fn term(&self, lx: &mut Lexer) -> Result<AffineExpr> {
        let mut acc = self.unary(lx)?;
        loop {
            match lx.peek().tok {
                Tok::Star => {
                    let at = lx.bump();
                    let rhs = self.unary(lx)?;
                    acc = if rhs.is_constant() {
                        acc.scale(rhs.constant)
                    } else if acc.is_constant() {
                        rhs.scale(acc.constant)
                    } else {
                        return Err(Error::Parse {
                            line: at.line,
                            column: at.column,
                            message: "product of two signals is not affine".to_string(),
                        });
                    };
                }
                Tok::Slash => {
                    let at = lx.bump();
                    let rhs = self.unary(lx)?;
                    if !rhs.is_constant() || rhs.constant == 0.0 {
                        return Err(Error::Parse {
                            line: at.line,
                            column: at.column,
                            message: "division only by a nonzero constant".to_string(),
                        });
                    }
                    acc = acc.scale(1.0 / rhs.constant);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&self, lx: &mut Lexer) -> Result<AffineExpr> {
        match lx.peek().tok {
            Tok::Minus => {
                lx.bump();
                Ok(self.unary(lx)?.scale(-1.0))
            }
            Tok::Plus => {
                lx.bump();
                self.unary(lx)
            }
            _ => self.primary(lx),
        }
    }

    fn primary(&self, lx: &mut Lexer) -> Result<AffineExpr> {
        let dim = self.signals.len();
        let t = lx.peek().clone();
        match t.tok {
            Tok::Num(v) => {
                lx.bump();
                Ok(AffineExpr::constant(dim, v))
            }
            Tok::Ident(ref name) => {
                lx.bump();
                match self.signals.iter().position(|s| s == name) {
                    Some(i) => Ok(AffineExpr::variable(dim, i)),
                    None => Err(Error::UnknownSignal {
                        name: name.clone(),
                        line: t.line,
                        column: t.column,
                    }),
                }
            }
            Tok::LParen if self.parens => {
                lx.bump();
                let e = self.expr(lx)?;
                lx.expect(Tok::RParen)?;
                Ok(e)
            }
            ref other => Err(lx.error_here(format!(
                "expected a number or signal, found {}",
                other.describe()
            ))),
        }
    }

    pub(crate) fn comparison(&self, lx: &mut Lexer) -> Result<Comparison> {
        let lhs = self.expr(lx)?;
        let op = match lx.peek().tok {
            Tok::Cmp(op) => op,
            ref other => {
                return Err(lx.error_here(format!(
                    "expected a comparison operator, found {}",
                    other.describe()
                )))
            }
        };
        lx.bump();
        let rhs = self.expr(lx)?;
        Ok(Comparison { lhs, op, rhs })
    }
}

/// Parses an affine expression such as `(h - 7) / 3`.
pub fn parse_affine(text: &str, signals: &[String]) -> Result<AffineExpr> {
    let mut lx = Lexer::new(text)?;
    let p = ExprParser {
        signals,
        parens: true,
    };
    let e = p.expr(&mut lx)?;
    lx.expect_eof()?;
    Ok(e)
}

/// Parses a conjunction of comparisons, `e1 op e2 && e3 op e4 && ...`. The empty
/// string and `true` parse to the empty conjunction.
pub fn parse_conjunction(text: &str, signals: &[String]) -> Result<Vec<Comparison>> {
    let mut lx = Lexer::new(text)?;
    if lx.at_eof() {
        return Ok(Vec::new());
    }
    if lx.peek().tok == Tok::Ident("true".to_string()) && *lx.peek2() == Tok::Eof {
        return Ok(Vec::new());
    }
    let p = ExprParser {
        signals,
        parens: true,
    };
    let mut out = vec![p.comparison(&mut lx)?];
    while lx.peek().tok == Tok::AndAnd {
        lx.bump();
        out.push(p.comparison(&mut lx)?);
    }
    lx.expect_eof()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_listing_style_outputs() {
        let s = sig(&["RPM", "Speed"]);
        let e = parse_affine("-RPM*0.002 - Speed*1.1 + 183.0", &s).unwrap();
        assert_eq!(e.coeffs, vec![-0.002, -1.1]);
        assert_eq!(e.constant, 183.0);
        let h = sig(&["h"]);
        let r = parse_affine("(7 - h) / (7 - 5)", &h).unwrap();
        assert_eq!(r.coeffs, vec![-0.5]);
        assert_eq!(r.constant, 3.5);
        assert_eq!(parse_affine("2e-3*h", &h).unwrap().coeffs, vec![0.002]);
    }

    #[test]
    fn rejects_nonlinear_and_unknown() {
        let s = sig(&["x", "y"]);
        assert!(matches!(parse_affine("x*y", &s), Err(Error::Parse { .. })));
        assert!(matches!(parse_affine("x/y", &s), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_affine("x + z", &s),
            Err(Error::UnknownSignal { column: 5, .. })
        ));
        assert!(matches!(
            parse_affine("x +", &s),
            Err(Error::Parse { line: 1, column: 4, .. })
        ));
        assert!(matches!(parse_affine("x $ 1", &s), Err(Error::Parse { column: 3, .. })));
    }

    #[test]
    fn conjunction_and_margin() {
        let s = sig(&["h"]);
        let c = parse_conjunction("h > 5 && h < 7", &s).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].margin().coeffs, vec![1.0]);
        assert_eq!(c[0].margin().constant, -5.0);
        assert_eq!(c[1].margin().coeffs, vec![-1.0]);
        assert_eq!(c[1].margin().constant, 7.0);
        assert!(parse_conjunction("", &s).unwrap().is_empty());
        assert!(parse_conjunction("true", &s).unwrap().is_empty());
    }

    #[test]
    fn text_round_trip() {
        let s = sig(&["a", "b", "c"]);
        let e = AffineExpr {
            coeffs: vec![1.0, -0.1, 0.0],
            constant: -1e-7,
        };
        let text = e.to_text(&s);
        assert_eq!(parse_affine(&text, &s).unwrap(), e);
        assert_eq!(AffineExpr::constant(3, 0.0).to_text(&s), "0.0");
    }
}
