//! Piecewise-affine control programs and static path-range analysis.
//!
//! A program is a list of paths, each a guard (a conjunction of linear
//! inequalities) paired with an affine control law. The range of a path is the
//! exact min/max of each control output over `{x ∈ state_box : guard}`, found
//! by linear programming over the closure of the guard polytope.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affine::{self, AffineExpr, Comparison};
use crate::bernstein::Interval;
use crate::error::{Error, Result};
use crate::lp::{self, LpOutcome};
use crate::num;
use crate::reach::IntervalBox;

/// `a·x ≤ b`, or `a·x < b` when `strict`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: Vec<f64>,
    pub b: f64,
    pub strict: bool,
}

impl LinearConstraint {
    pub fn new(a: Vec<f64>, b: f64, strict: bool) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::arg("constraint coefficients must be finite"));
        }
        Ok(LinearConstraint { a, b, strict })
    }

    fn lhs(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).fold(0.0, |acc, (a, x)| acc + a * x)
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        let v = self.lhs(x);
        if self.strict {
            v < self.b
        } else {
            v <= self.b
        }
    }

    /// Closure test with an absolute slack.
    pub fn holds_closed(&self, x: &[f64], tol: f64) -> bool {
        self.lhs(x) <= self.b + tol
    }
}

impl From<&Comparison> for LinearConstraint {
    fn from(c: &Comparison) -> Self {
        // margin = w·x + k must be positive, i.e. -w·x ≤ k.
        let m = c.margin();
        LinearConstraint {
            a: m.coeffs.iter().map(|v| -v + 0.0).collect(),
            b: m.constant,
            strict: c.op.is_strict(),
        }
    }
}

/// Conjunction of linear constraints. The empty guard is `true`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Guard {
    pub constraints: Vec<LinearConstraint>,
}

impl Guard {
    pub fn new(constraints: Vec<LinearConstraint>) -> Self {
        Guard { constraints }
    }

    /// Parses `e1 op e2 && ...` over `signals`.
    pub fn parse(text: &str, signals: &[String]) -> Result<Self> {
        let cmps = affine::parse_conjunction(text, signals)?;
        Ok(Guard {
            constraints: cmps.iter().map(LinearConstraint::from).collect(),
        })
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.holds(x))
    }

    pub fn to_text(&self, signals: &[String]) -> String {
        if self.constraints.is_empty() {
            return String::from("true");
        }
        let parts: Vec<String> = self
            .constraints
            .iter()
            .map(|c| {
                let lhs = AffineExpr {
                    coeffs: c.a.clone(),
                    constant: 0.0,
                };
                let op = if c.strict { "<" } else { "<=" };
                alloc::format!("{} {op} {}", lhs.to_text(signals), affine::format_num(c.b))
            })
            .collect();
        parts.join(" && ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub guard: Guard,
    /// One affine law per control signal.
    pub outputs: Vec<AffineExpr>,
}

impl PathSpec {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.outputs.iter().map(|e| e.eval(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlProgram {
    pub signals: Vec<String>,
    pub controls: Vec<String>,
    pub state_box: IntervalBox,
    pub paths: Vec<PathSpec>,
}

impl ControlProgram {
    pub fn new(
        signals: Vec<String>,
        controls: Vec<String>,
        state_box: IntervalBox,
        paths: Vec<PathSpec>,
    ) -> Result<Self> {
        let n = signals.len();
        if state_box.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                found: state_box.dim(),
            });
        }
        if state_box.dims().iter().any(|d| !d.lo.is_finite() || !d.hi.is_finite()) {
            return Err(Error::Unbounded);
        }
        if paths.is_empty() {
            return Err(Error::arg("program has no paths"));
        }
        for p in &paths {
            if p.outputs.len() != controls.len() {
                return Err(Error::Dimension {
                    expected: controls.len(),
                    found: p.outputs.len(),
                });
            }
            for c in &p.guard.constraints {
                if c.a.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        found: c.a.len(),
                    });
                }
            }
            for e in &p.outputs {
                if e.coeffs.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        found: e.coeffs.len(),
                    });
                }
            }
        }
        Ok(ControlProgram {
            signals,
            controls,
            state_box,
            paths,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.signals.len()
    }

    pub fn control_dim(&self) -> usize {
        self.controls.len()
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    /// Index of the first path whose guard holds at `x`.
    pub fn select(&self, x: &[f64]) -> Option<usize> {
        self.paths.iter().position(|p| p.guard.holds(x))
    }

    /// The executed path and its control output.
    pub fn control(&self, x: &[f64]) -> Option<(usize, Vec<f64>)> {
        self.select(x).map(|i| (i, self.paths[i].eval(x)))
    }
}

/// Optimum of `c·x + k` over `{x ∈ bx : guard}`; `None` when empty.
fn optimize(bx: &IntervalBox, guard: &Guard, c: &[f64], k: f64) -> Result<Option<(Vec<f64>, f64)>> {
    let n = bx.dim();
    let lo: Vec<f64> = bx.dims().iter().map(|d| d.lo).collect();
    // Shift to y = x - lo ≥ 0.
    let mut a = Vec::with_capacity(guard.constraints.len() + n);
    let mut b = Vec::with_capacity(guard.constraints.len() + n);
    for g in &guard.constraints {
        a.push(g.a.clone());
        b.push(g.b - g.lhs(&lo));
    }
    for (i, d) in bx.dims().iter().enumerate() {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        a.push(row);
        b.push(d.hi - d.lo);
    }
    match lp::maximize(c, &a, &b) {
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::Unbounded),
        LpOutcome::Optimal { x: y, .. } => {
            let x: Vec<f64> = y
                .iter()
                .zip(bx.dims())
                .map(|(y, d)| (d.lo + y).clamp(d.lo, d.hi))
                .collect();
            let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(num::abs(*v)));
            for g in &guard.constraints {
                let tol = 1e-7 * scale * (1.0 + g.a.iter().fold(0.0, |s, v| s + num::abs(*v)));
                if !g.holds_closed(&x, tol) {
                    return Err(Error::arg("linear program certificate failed re-check"));
                }
            }
            let value = c.iter().zip(&x).fold(k, |acc, (c, x)| acc + c * x);
            Ok(Some((x, value)))
        }
    }
}

/// Exact control range of path `i` over its guard within the state box.
pub fn path_range(prog: &ControlProgram, i: usize) -> Result<IntervalBox> {
    let p = prog
        .paths
        .get(i)
        .ok_or_else(|| Error::arg("path index out of range"))?;
    let mut dims = Vec::with_capacity(p.outputs.len());
    for e in &p.outputs {
        if e.is_constant() {
            if optimize(&prog.state_box, &p.guard, &vec![0.0; prog.state_dim()], 0.0)?.is_none() {
                return Err(Error::InfeasiblePath { path: i });
            }
            dims.push(Interval::point(e.constant));
            continue;
        }
        let neg: Vec<f64> = e.coeffs.iter().map(|v| -v).collect();
        let hi = optimize(&prog.state_box, &p.guard, &e.coeffs, e.constant)?;
        let lo = optimize(&prog.state_box, &p.guard, &neg, -e.constant)?;
        match (lo, hi) {
            (Some((xl, _)), Some((xh, _))) => {
                let (l, h) = (e.eval(&xl), e.eval(&xh));
                dims.push(Interval { lo: l.min(h), hi: l.max(h) });
            }
            _ => return Err(Error::InfeasiblePath { path: i }),
        }
    }
    Ok(IntervalBox::new(dims))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeRow {
    pub path: usize,
    pub range: IntervalBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlRangeTable {
    pub rows: Vec<RangeRow>,
    /// Paths with no feasible state inside the state box.
    pub dropped: Vec<usize>,
}

impl ControlRangeTable {
    pub fn get(&self, path: usize) -> Option<&IntervalBox> {
        self.rows.iter().find(|r| r.path == path).map(|r| &r.range)
    }

    pub fn paths(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().map(|r| r.path)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Hull of every row.
    pub fn hull(&self) -> Option<IntervalBox> {
        let mut it = self.rows.iter();
        let first = it.next()?.range.clone();
        Some(it.fold(first, |acc, r| acc.hull(&r.range)))
    }
}

/// Ranges of every feasible path, in path order. Infeasible paths are listed
/// in `dropped`.
pub fn build_range_table(prog: &ControlProgram) -> Result<ControlRangeTable> {
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..prog.num_paths() {
        match path_range(prog, i) {
            Ok(range) => rows.push(RangeRow { path: i, range }),
            Err(Error::InfeasiblePath { .. }) => dropped.push(i),
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(Error::arg("no program path is feasible within the state box"));
    }
    Ok(ControlRangeTable { rows, dropped })
}

/// Whether `{x ∈ bx : guard}` is nonempty, and its bounding box.
pub fn guard_intersect(bx: &IntervalBox, guard: &Guard) -> Result<(bool, IntervalBox)> {
    let n = bx.dim();
    for c in &guard.constraints {
        if c.a.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: c.a.len(),
            });
        }
    }
    if guard.constraints.is_empty() {
        return Ok((true, bx.clone()));
    }
    let mut dims = Vec::with_capacity(n);
    for i in 0..n {
        let mut c = vec![0.0; n];
        c[i] = 1.0;
        let hi = optimize(bx, guard, &c, 0.0)?;
        c[i] = -1.0;
        let lo = optimize(bx, guard, &c, 0.0)?;
        match (lo, hi) {
            (Some((xl, _)), Some((xh, _))) => {
                let d = bx.dims()[i];
                let l = xl[i].clamp(d.lo, d.hi);
                let h = xh[i].clamp(d.lo, d.hi);
                dims.push(Interval { lo: l.min(h), hi: l.max(h) });
            }
            _ => return Ok((false, bx.clone())),
        }
    }
    Ok((true, IntervalBox::new(dims)))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartitionReport {
    pub samples: usize,
    /// Sampled states accepted by no guard.
    pub holes: Vec<Vec<f64>>,
    /// Sampled states accepted by two or more guards, with those paths.
    pub overlaps: Vec<(Vec<f64>, Vec<usize>)>,
}

impl PartitionReport {
    pub fn is_clean(&self) -> bool {
        self.holes.is_empty() && self.overlaps.is_empty()
    }
}

/// Samples `samples` states uniformly in the state box (plus its corners) and
/// reports states covered by zero or several guards.
pub fn check_partition(prog: &ControlProgram, samples: usize, seed: u64) -> PartitionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PartitionReport {
        samples,
        ..Default::default()
    };
    let n = prog.state_dim();
    let corners = if n <= 10 { 1usize << n } else { 0 };
    for s in 0..samples + corners {
        let x = if s < corners {
            prog.state_box
                .dims()
                .iter()
                .enumerate()
                .map(|(j, d)| if (s >> j) & 1 == 1 { d.hi } else { d.lo })
                .collect()
        } else {
            prog.state_box.sample(&mut rng)
        };
        let hits: Vec<usize> = (0..prog.num_paths())
            .filter(|&i| prog.paths[i].guard.holds(&x))
            .collect();
        match hits.len() {
            0 => report.holes.push(x),
            1 => {}
            _ => report.overlaps.push((x, hits)),
        }
    }
    report.samples = samples + corners;
    report
}
