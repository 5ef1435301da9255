//! Recursive-descent parser for the STL text syntax.
//!
//! ```text
//! φ    ::= pred | "!" φ | φ "&&" φ | φ "||" φ | "G[" int "," int "]" φ
//!        | "F[" int "," int "]" φ | φ "U[" int "," int "]" φ | "(" φ ")"
//! pred ::= affine-expr op affine-expr        op ∈ { <, <=, >, >= }
//! ```
//!
//! Precedence from tightest: `!`, then `G`/`F` (applied to the immediately
//! following unit), then `U` (right-associative), `&&`, `||`. Strict and
//! non-strict comparisons give the same robustness: `e <= c` and `e < c` both
//! map to `c - e`.

use alloc::format;
use alloc::string::String;

use super::Formula;
use crate::affine::{ExprParser, Lexer, Tok};
use crate::error::{Error, Result};

/// Parses `text` over the state signals `signals` (in state-vector order).
pub fn parse(text: &str, signals: &[String]) -> Result<Formula> {
    let mut lx = Lexer::new(text)?;
    let p = Parser {
        expr: ExprParser {
            signals,
            parens: false,
        },
    };
    let f = p.or(&mut lx)?;
    lx.expect_eof()?;
    Ok(f)
}

struct Parser<'a> {
    expr: ExprParser<'a>,
}

fn is_op(lx: &Lexer, name: &str) -> bool {
    matches!(&lx.peek().tok, Tok::Ident(s) if s == name) && *lx.peek2() == Tok::LBracket
}

impl Parser<'_> {
    fn or(&self, lx: &mut Lexer) -> Result<Formula> {
        let mut acc = self.and(lx)?;
        while lx.peek().tok == Tok::OrOr {
            lx.bump();
            acc = Formula::or(acc, self.and(lx)?);
        }
        Ok(acc)
    }

    fn and(&self, lx: &mut Lexer) -> Result<Formula> {
        let mut acc = self.until(lx)?;
        while lx.peek().tok == Tok::AndAnd {
            lx.bump();
            acc = Formula::and(acc, self.until(lx)?);
        }
        Ok(acc)
    }

    fn until(&self, lx: &mut Lexer) -> Result<Formula> {
        let lhs = self.unary(lx)?;
        if is_op(lx, "U") {
            lx.bump();
            let (lo, hi) = self.window(lx)?;
            let rhs = self.until(lx)?;
            return Ok(Formula::until(lo, hi, lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&self, lx: &mut Lexer) -> Result<Formula> {
        if lx.peek().tok == Tok::Bang {
            lx.bump();
            return Ok(Formula::not(self.unary(lx)?));
        }
        if is_op(lx, "G") {
            lx.bump();
            let (lo, hi) = self.window(lx)?;
            return Ok(Formula::globally(lo, hi, self.unary(lx)?));
        }
        if is_op(lx, "F") {
            lx.bump();
            let (lo, hi) = self.window(lx)?;
            return Ok(Formula::finally(lo, hi, self.unary(lx)?));
        }
        if lx.peek().tok == Tok::LParen {
            lx.bump();
            let f = self.or(lx)?;
            lx.expect(Tok::RParen)?;
            return Ok(f);
        }
        let cmp = self.expr.comparison(lx)?;
        let m = cmp.margin();
        Ok(Formula::Pred {
            w: m.coeffs,
            b: m.constant,
        })
    }

    fn window(&self, lx: &mut Lexer) -> Result<(usize, usize)> {
        lx.expect(Tok::LBracket)?;
        let lo = self.int(lx)?;
        lx.expect(Tok::Comma)?;
        let hi_at = lx.peek().clone();
        let hi = self.int(lx)?;
        lx.expect(Tok::RBracket)?;
        if lo > hi {
            return Err(Error::Parse {
                line: hi_at.line,
                column: hi_at.column,
                message: format!("window upper bound {hi} is below lower bound {lo}"),
            });
        }
        Ok((lo, hi))
    }

    fn int(&self, lx: &mut Lexer) -> Result<usize> {
        match lx.peek().tok {
            Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => {
                lx.bump();
                Ok(v as usize)
            }
            ref other => Err(lx.error_here(format!(
                "expected a nonnegative integer, found {}",
                other.describe()
            ))),
        }
    }
}
