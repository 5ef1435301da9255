//! Discrete-time STL: formulas, exact quantitative robustness, a Boolean
//! evaluator, and compilation into Bernstein robustness networks.
//!
//! Predicates are affine in the state, `w·x_t + b`, with robustness equal to
//! that value. Time bounds are step indices.

mod compile;
mod parse;

pub use compile::{compile, error_bound, CompileConfig, CompiledStlNet};
pub use parse::parse;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::affine::{format_num, AffineExpr};
use crate::bernstein::BernsteinPoly;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    /// Robustness `w·x_t + b`.
    Pred { w: Vec<f64>, b: f64 },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Globally { lo: usize, hi: usize, f: Box<Formula> },
    Finally { lo: usize, hi: usize, f: Box<Formula> },
    Until {
        lo: usize,
        hi: usize,
        lhs: Box<Formula>,
        rhs: Box<Formula>,
    },
}

impl Formula {
    pub fn pred(w: Vec<f64>, b: f64) -> Self {
        Formula::Pred { w, b }
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn globally(lo: usize, hi: usize, f: Formula) -> Self {
        Formula::Globally {
            lo,
            hi,
            f: Box::new(f),
        }
    }

    pub fn finally(lo: usize, hi: usize, f: Formula) -> Self {
        Formula::Finally {
            lo,
            hi,
            f: Box::new(f),
        }
    }

    pub fn until(lo: usize, hi: usize, lhs: Formula, rhs: Formula) -> Self {
        Formula::Until {
            lo,
            hi,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// Number of steps after `t` the formula reads.
    pub fn needed_steps(&self) -> usize {
        match self {
            Formula::Pred { .. } => 0,
            Formula::Not(f) => f.needed_steps(),
            Formula::And(a, b) | Formula::Or(a, b) => a.needed_steps().max(b.needed_steps()),
            Formula::Globally { hi, f, .. } | Formula::Finally { hi, f, .. } => hi + f.needed_steps(),
            Formula::Until { hi, lhs, rhs, .. } => hi + lhs.needed_steps().max(rhs.needed_steps()),
        }
    }

    /// Checks window bounds and that every predicate has `dim` coefficients.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Formula::Pred { w, b } => {
                if w.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        found: w.len(),
                    });
                }
                if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::arg("predicate coefficients must be finite"));
                }
                Ok(())
            }
            Formula::Not(f) => f.validate(dim),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.validate(dim)?;
                b.validate(dim)
            }
            Formula::Globally { lo, hi, f } | Formula::Finally { lo, hi, f } => {
                if lo > hi {
                    return Err(Error::arg(format!("empty window [{lo},{hi}]")));
                }
                f.validate(dim)
            }
            Formula::Until { lo, hi, lhs, rhs } => {
                if lo > hi {
                    return Err(Error::arg(format!("empty window [{lo},{hi}]")));
                }
                lhs.validate(dim)?;
                rhs.validate(dim)
            }
        }
    }

    /// The same formula with every top-level `G`/`F` window clipped to end
    /// at `horizon - needed_steps(body)`. Used to evaluate a long-horizon
    /// specification on a shorter trace.
    pub fn truncated(&self, horizon: usize) -> Formula {
        match self {
            Formula::Globally { lo, hi, f } => {
                let cap = horizon.saturating_sub(f.needed_steps());
                Formula::globally((*lo).min(cap), (*hi).min(cap), (**f).clone())
            }
            Formula::Finally { lo, hi, f } => {
                let cap = horizon.saturating_sub(f.needed_steps());
                Formula::finally((*lo).min(cap), (*hi).min(cap), (**f).clone())
            }
            Formula::Not(f) => Formula::not(f.truncated(horizon)),
            Formula::And(a, b) => Formula::and(a.truncated(horizon), b.truncated(horizon)),
            Formula::Or(a, b) => Formula::or(a.truncated(horizon), b.truncated(horizon)),
            other => other.clone(),
        }
    }

    /// Fully parenthesized text that [`parse`] maps back to `self`.
    pub fn to_text(&self, signals: &[String]) -> String {
        match self {
            Formula::Pred { w, b } => {
                let lhs = AffineExpr {
                    coeffs: w.clone(),
                    constant: 0.0,
                };
                format!("{} >= {}", lhs.to_text(signals), format_num(-b))
            }
            Formula::Not(f) => format!("!({})", f.to_text(signals)),
            Formula::And(a, b) => format!("({}) && ({})", a.to_text(signals), b.to_text(signals)),
            Formula::Or(a, b) => format!("({}) || ({})", a.to_text(signals), b.to_text(signals)),
            Formula::Globally { lo, hi, f } => format!("G[{lo},{hi}]({})", f.to_text(signals)),
            Formula::Finally { lo, hi, f } => format!("F[{lo},{hi}]({})", f.to_text(signals)),
            Formula::Until { lo, hi, lhs, rhs } => format!(
                "({}) U[{lo},{hi}] ({})",
                lhs.to_text(signals),
                rhs.to_text(signals)
            ),
        }
    }
}

/// States `x_0 ..= x_H` of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    states: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(states: Vec<Vec<f64>>) -> Result<Self> {
        let first = states.first().ok_or(Error::arg("a trace needs at least one state"))?;
        let d = first.len();
        if d == 0 {
            return Err(Error::arg("trace states must be nonempty"));
        }
        if let Some(bad) = states.iter().find(|s| s.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                found: bad.len(),
            });
        }
        Ok(Trace { states })
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.states.iter().flatten().copied().collect()
    }
}

pub(crate) fn pred_value(w: &[f64], b: f64, x: &[f64]) -> f64 {
    w.iter().zip(x).fold(b, |acc, (wi, xi)| acc + wi * xi)
}

fn check(f: &Formula, tr: &Trace, t: usize) -> Result<()> {
    f.validate(tr.dim())?;
    let needed = f.needed_steps();
    if t + needed > tr.horizon() {
        return Err(Error::Horizon {
            needed,
            t,
            horizon: tr.horizon(),
        });
    }
    Ok(())
}

/// Quantitative robustness of `f` on `tr` at time `t`.
pub fn robustness(f: &Formula, tr: &Trace, t: usize) -> Result<f64> {
    check(f, tr, t)?;
    Ok(rho(f, tr.states(), t))
}

fn rho(f: &Formula, xs: &[Vec<f64>], t: usize) -> f64 {
    match f {
        Formula::Pred { w, b } => pred_value(w, *b, &xs[t]),
        Formula::Not(g) => -rho(g, xs, t),
        Formula::And(a, b) => rho(a, xs, t).min(rho(b, xs, t)),
        Formula::Or(a, b) => rho(a, xs, t).max(rho(b, xs, t)),
        Formula::Globally { lo, hi, f } => (t + lo..=t + hi)
            .map(|s| rho(f, xs, s))
            .fold(f64::INFINITY, f64::min),
        Formula::Finally { lo, hi, f } => (t + lo..=t + hi)
            .map(|s| rho(f, xs, s))
            .fold(f64::NEG_INFINITY, f64::max),
        Formula::Until { lo, hi, lhs, rhs } => {
            // The running minimum of the left operand over [t, t + t'] is
            // shared across the window.
            let mut run = f64::INFINITY;
            for s in t..t + lo {
                run = run.min(rho(lhs, xs, s));
            }
            let mut best = f64::NEG_INFINITY;
            for s in t + lo..=t + hi {
                run = run.min(rho(lhs, xs, s));
                best = best.max(rho(rhs, xs, s).min(run));
            }
            best
        }
    }
}

/// Boolean semantics; a predicate holds when `w·x_t + b > 0`.
pub fn satisfies(f: &Formula, tr: &Trace, t: usize) -> Result<bool> {
    check(f, tr, t)?;
    Ok(sat(f, tr.states(), t))
}

fn sat(f: &Formula, xs: &[Vec<f64>], t: usize) -> bool {
    match f {
        Formula::Pred { w, b } => pred_value(w, *b, &xs[t]) > 0.0,
        Formula::Not(g) => !sat(g, xs, t),
        Formula::And(a, b) => sat(a, xs, t) && sat(b, xs, t),
        Formula::Or(a, b) => sat(a, xs, t) || sat(b, xs, t),
        Formula::Globally { lo, hi, f } => (t + lo..=t + hi).all(|s| sat(f, xs, s)),
        Formula::Finally { lo, hi, f } => (t + lo..=t + hi).any(|s| sat(f, xs, s)),
        Formula::Until { lo, hi, lhs, rhs } => {
            (t + lo..=t + hi).any(|s| sat(rhs, xs, s) && (t..=s).all(|r| sat(lhs, xs, r)))
        }
    }
}

fn gadget_arg(a: f64, b: f64, gadget: &BernsteinPoly) -> Result<f64> {
    let d = a - b;
    if !gadget.domain().contains_with_slack(d) {
        return Err(Error::GadgetDomain {
            diff: d,
            bound: gadget.domain().hi,
        });
    }
    gadget.eval(d)
}

/// `((a + b) - B_n(|x|)(a - b)) / 2`, a smooth under-approximation of
/// `min(a, b)`.
pub fn bern_min(a: f64, b: f64, gadget: &BernsteinPoly) -> Result<f64> {
    Ok(0.5 * ((a + b) - gadget_arg(a, b, gadget)?))
}

/// `((a + b) + B_n(|x|)(a - b)) / 2`, a smooth over-approximation of
/// `max(a, b)`.
pub fn bern_max(a: f64, b: f64, gadget: &BernsteinPoly) -> Result<f64> {
    Ok(0.5 * ((a + b) + gadget_arg(a, b, gadget)?))
}
