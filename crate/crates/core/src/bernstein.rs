//! Univariate polynomials in Bernstein form over an explicit domain `[l, u]`.
//!
//! A degree-`n` polynomial is stored as its `n + 1` Bernstein coefficients
//! against the basis
//!
//! ```text
//! b_{n,k}(x) = C(n,k) / (u - l)^n * (x - l)^k * (u - x)^(n - k)
//! ```
//!
//! The representation depends on the domain, so changing the domain means
//! recomputing coefficients ([`BernsteinPoly::subdivide`],
//! [`BernsteinPoly::reparameterize`]). Point evaluation and subdivision both run
//! the de Casteljau recurrence; every intermediate value is a convex combination
//! of the previous level, so for `x` inside the domain the computed value never
//! leaves `[min c_k, max c_k]`, rounding included.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::num;

/// A closed interval `[lo, hi]` with finite endpoints.
#[derive(Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo <= hi {
            Ok(Interval { lo, hi })
        } else {
            Err(Error::InvalidInterval { lo, hi })
        }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    /// Exact membership.
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Membership with the relative `1e-9` slack used for domain checks.
    pub fn contains_with_slack(&self, x: f64) -> bool {
        let s = num::slack(self.lo, self.hi);
        self.lo - s <= x && x <= self.hi + s
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn contains_interval_with_slack(&self, other: &Interval) -> bool {
        let s = num::slack(self.lo, self.hi);
        self.lo - s <= other.lo && other.hi <= self.hi + s
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// Clips `x` into the interval.
    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    /// Scales the interval about its midpoint by `factor`, keeping at least
    /// `min_half_width` on each side.
    pub fn inflate(&self, factor: f64, min_half_width: f64) -> Interval {
        let half = (0.5 * self.width() * factor).max(min_half_width);
        let mid = self.mid();
        Interval {
            lo: mid - half,
            hi: mid + half,
        }
    }

    /// Widens both endpoints outward by `pad`.
    pub fn pad(&self, pad: f64) -> Interval {
        Interval {
            lo: self.lo - pad,
            hi: self.hi + pad,
        }
    }
}

/// `a + t (b - a)` evaluated from whichever endpoint is nearer, so `t = 0` and
/// `t = 1` reproduce `a` and `b` exactly and `t ∈ [0, 1]` never leaves
/// `[min(a, b), max(a, b)]`.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t <= 0.5 {
        a + t * (b - a)
    } else {
        b - (1.0 - t) * (b - a)
    }
}

/// Splits coefficient vector `c` at parameter `t`, returning the coefficients of
/// the left piece on `[0, t]` and the right piece on `[t, 1]` (in unit
/// coordinates). `t` outside `[0, 1]` extrapolates.
fn split(c: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let n = c.len();
    let mut work = c.to_vec();
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    left[0] = work[0];
    right[n - 1] = work[n - 1];
    for j in 1..n {
        for k in 0..n - j {
            work[k] = lerp(work[k], work[k + 1], t);
        }
        left[j] = work[0];
        right[n - 1 - j] = work[n - 1 - j];
    }
    (left, right)
}

fn de_casteljau(work: &mut [f64], t: f64) -> f64 {
    let n = work.len();
    for j in 1..n {
        for k in 0..n - j {
            work[k] = lerp(work[k], work[k + 1], t);
        }
    }
    work[0]
}

/// Value of the basis function `b_{n,k}` on `dom` at `x`.
pub fn eval_basis(n: usize, k: usize, dom: Interval, x: f64) -> Result<f64> {
    if k > n {
        return Err(Error::BasisIndex { k, n });
    }
    if dom.lo >= dom.hi {
        return Err(Error::InvalidInterval {
            lo: dom.lo,
            hi: dom.hi,
        });
    }
    if !dom.contains_with_slack(x) {
        return Err(Error::Domain {
            value: x,
            lo: dom.lo,
            hi: dom.hi,
        });
    }
    let t = ((x - dom.lo) / dom.width()).clamp(0.0, 1.0);
    Ok(basis_row(n, t)[k])
}

/// All `n + 1` basis values at unit parameter `t`.
///
/// Small degrees use the closed form; above degree 30 the values come from the
/// triangle recurrence `b_{m,k} = (1-t) b_{m-1,k} + t b_{m-1,k-1}` and no
/// binomial coefficient is ever formed.
pub(crate) fn basis_row(n: usize, t: f64) -> Vec<f64> {
    if n <= 30 {
        let s = 1.0 - t;
        let mut out = vec![0.0; n + 1];
        let mut binom = 1.0f64;
        for (k, slot) in out.iter_mut().enumerate() {
            if k > 0 {
                binom = binom * (n + 1 - k) as f64 / k as f64;
            }
            *slot = binom * powi(t, k) * powi(s, n - k);
        }
        out
    } else {
        let mut row = vec![0.0; n + 1];
        row[0] = 1.0;
        for m in 1..=n {
            for k in (1..=m).rev() {
                row[k] = (1.0 - t) * row[k] + t * row[k - 1];
            }
            row[0] *= 1.0 - t;
        }
        row
    }
}

fn powi(x: f64, e: usize) -> f64 {
    let mut acc = 1.0;
    for _ in 0..e {
        acc *= x;
    }
    acc
}

/// A polynomial `Σ c_k b_{n,k}(x)` on an explicit domain.
#[derive(Clone, PartialEq)]
pub struct BernsteinPoly {
    domain: Interval,
    coeffs: Vec<f64>,
}

impl fmt::Debug for BernsteinPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BernsteinPoly")
            .field("domain", &self.domain)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl BernsteinPoly {
    pub fn new(domain: Interval, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidPoly("at least one coefficient is required"));
        }
        if !(domain.lo < domain.hi) {
            return Err(Error::InvalidInterval {
                lo: domain.lo,
                hi: domain.hi,
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoly("coefficients must be finite"));
        }
        Ok(BernsteinPoly { domain, coeffs })
    }

    /// Constant polynomial of degree 0.
    pub fn constant(domain: Interval, value: f64) -> Result<Self> {
        Self::new(domain, vec![value])
    }

    /// The identity map `x ↦ x` written in degree `n ≥ 1` on `domain`: its
    /// coefficients are the equally spaced abscissae `l + (u - l) k / n`.
    pub fn ramp(n: usize, domain: Interval) -> Result<Self> {
        let n = n.max(1);
        let coeffs = (0..=n)
            .map(|k| domain.lo + domain.width() * k as f64 / n as f64)
            .collect();
        Self::new(domain, coeffs)
    }

    /// Bernstein-operator approximant of `|x|` on `domain`, with coefficients
    /// `|l + (u - l) k / n|`.
    pub fn abs_approx(n: usize, domain: Interval) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("abs_approx needs degree >= 1"));
        }
        let coeffs = (0..=n)
            .map(|k| num::abs(domain.lo + domain.width() * k as f64 / n as f64))
            .collect();
        Self::new(domain, coeffs)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    fn to_unit(&self, x: f64) -> f64 {
        (x - self.domain.lo) / self.domain.width()
    }

    /// Value at `x`; `x` must lie in the domain up to the relative slack.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !self.domain.contains_with_slack(x) {
            return Err(Error::Domain {
                value: x,
                lo: self.domain.lo,
                hi: self.domain.hi,
            });
        }
        Ok(self.eval_at_unit(self.to_unit(x).clamp(0.0, 1.0)))
    }

    /// Value of the underlying polynomial at any `x`, extrapolating outside the
    /// domain. Used while training, before domains have settled.
    pub fn eval_extrapolated(&self, x: f64) -> f64 {
        self.eval_at_unit(self.to_unit(x))
    }

    fn eval_at_unit(&self, t: f64) -> f64 {
        let n = self.coeffs.len();
        if n <= 16 {
            let mut buf = [0.0; 16];
            buf[..n].copy_from_slice(&self.coeffs);
            de_casteljau(&mut buf[..n], t)
        } else {
            de_casteljau(&mut self.coeffs.clone(), t)
        }
    }

    /// `[min c_k, max c_k]`, which contains the range of the polynomial over
    /// its domain.
    pub fn enclosure(&self) -> Interval {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &c in &self.coeffs {
            lo = lo.min(c);
            hi = hi.max(c);
        }
        Interval { lo, hi }
    }

    /// Exact reparameterization of the polynomial onto `sub ⊆ domain`.
    pub fn subdivide(&self, sub: Interval) -> Result<BernsteinPoly> {
        if !(sub.lo < sub.hi) {
            return Err(Error::InvalidInterval {
                lo: sub.lo,
                hi: sub.hi,
            });
        }
        if !self.domain.contains_interval_with_slack(&sub) {
            return Err(Error::SubInterval {
                lo: sub.lo,
                hi: sub.hi,
                dom_lo: self.domain.lo,
                dom_hi: self.domain.hi,
            });
        }
        if sub == self.domain {
            return Ok(self.clone());
        }
        let sub = Interval {
            lo: sub.lo.max(self.domain.lo),
            hi: sub.hi.min(self.domain.hi),
        };
        if !(sub.lo < sub.hi) {
            return Err(Error::InvalidInterval {
                lo: sub.lo,
                hi: sub.hi,
            });
        }
        Ok(self.reparameterize_unchecked(sub))
    }

    /// The same polynomial written on an arbitrary new domain (extrapolating
    /// when `target` is not inside the current one).
    pub fn reparameterize(&self, target: Interval) -> Result<BernsteinPoly> {
        if !(target.lo < target.hi) {
            return Err(Error::InvalidInterval {
                lo: target.lo,
                hi: target.hi,
            });
        }
        if target == self.domain {
            return Ok(self.clone());
        }
        Ok(self.reparameterize_unchecked(target))
    }

    fn reparameterize_unchecked(&self, target: Interval) -> BernsteinPoly {
        let ta = self.to_unit(target.lo);
        let tb = self.to_unit(target.hi);
        let coeffs = if tb >= 1.0 - ta {
            // Left piece [l, b], then its right part from a.
            let (left, _) = split(&self.coeffs, tb);
            let (_, right) = split(&left, ta / tb);
            right
        } else {
            // Right piece [a, u], then its left part up to b.
            let (_, right) = split(&self.coeffs, ta);
            let (left, _) = split(&right, (tb - ta) / (1.0 - ta));
            left
        };
        BernsteinPoly {
            domain: target,
            coeffs,
        }
    }

    /// `dP/dx` as a Bernstein polynomial of degree `n - 1` on the same domain;
    /// the zero constant for degree 0.
    pub fn derivative(&self) -> BernsteinPoly {
        let n = self.degree();
        if n == 0 {
            return BernsteinPoly {
                domain: self.domain,
                coeffs: vec![0.0],
            };
        }
        let scale = n as f64 / self.domain.width();
        let coeffs = self
            .coeffs
            .windows(2)
            .map(|w| scale * (w[1] - w[0]))
            .collect();
        BernsteinPoly {
            domain: self.domain,
            coeffs,
        }
    }

    /// Basis values `b_{n,k}(x)` for all `k`, extrapolating outside the domain.
    pub(crate) fn basis_values_extrapolated(&self, x: f64) -> Vec<f64> {
        basis_row(self.degree(), self.to_unit(x))
    }

    /// Upper bound on the rounding error of [`BernsteinPoly::eval`] and of the
    /// coefficients produced by [`BernsteinPoly::subdivide`].
    pub(crate) fn rounding_bound(&self) -> f64 {
        let scale = self
            .coeffs
            .iter()
            .fold(0.0f64, |m, c| m.max(num::abs(*c)));
        8.0 * (self.coeffs.len() as f64 + 1.0) * num::EPS * scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    fn quad() -> BernsteinPoly {
        BernsteinPoly::new(unit(), vec![0.0, 2.0, 1.0]).unwrap()
    }

    /// Power-basis form of `quad()`: 4x - 3x².
    fn quad_power(x: f64) -> f64 {
        4.0 * x - 3.0 * x * x
    }

    #[test]
    fn basis_examples() {
        let sym = Interval::new(-1.0, 1.0).unwrap();
        assert!((eval_basis(2, 1, sym, 0.0).unwrap() - 0.5).abs() < 1e-15);
        let dom = Interval::new(-3.0, 4.5).unwrap();
        assert_eq!(eval_basis(5, 0, dom, -3.0).unwrap(), 1.0);
        assert_eq!(eval_basis(3, 2, unit(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn basis_errors() {
        assert_eq!(
            eval_basis(2, 3, unit(), 0.5),
            Err(Error::BasisIndex { k: 3, n: 2 })
        );
        assert!(matches!(
            eval_basis(2, 1, unit(), 1.5),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn high_degree_basis_matches_closed_form_at_the_switch() {
        // Degree 31 takes the recurrence path; compare against degree-30 closed form
        // elevated by one step: b_{31,k} = (1-t) b_{30,k} + t b_{30,k-1}.
        let t = 0.37;
        let low = basis_row(30, t);
        let high = basis_row(31, t);
        for k in 0..=31 {
            let a = if k <= 30 { (1.0 - t) * low[k] } else { 0.0 };
            let b = if k >= 1 { t * low[k - 1] } else { 0.0 };
            assert!((high[k] - (a + b)).abs() < 1e-15);
        }
    }

    #[test]
    fn eval_examples() {
        let c = BernsteinPoly::new(unit(), vec![3.7; 6]).unwrap();
        for x in [0.0, 0.13, 0.5, 0.77, 1.0] {
            assert_eq!(c.eval(x).unwrap(), 3.7);
        }
        let p = quad();
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        assert_eq!(p.eval(1.0).unwrap(), 1.0);
        assert!((p.eval(2.0 / 3.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!(matches!(p.eval(1.1), Err(Error::Domain { .. })));
        // Slack admits round-off just past the endpoint.
        assert_eq!(p.eval(1.0 + 1e-12).unwrap(), 1.0);
    }

    #[test]
    fn enclosure_examples() {
        let p = quad();
        assert_eq!(p.enclosure(), Interval { lo: 0.0, hi: 2.0 });
        // True range of 4x - 3x² on [0, 1] is [0, 4/3] (vertex at x = 2/3).
        assert!(p.enclosure().contains_interval(&Interval {
            lo: 0.0,
            hi: 4.0 / 3.0
        }));
        let c = BernsteinPoly::new(unit(), vec![5.0; 3]).unwrap();
        assert_eq!(c.enclosure(), Interval { lo: 5.0, hi: 5.0 });
        let line = BernsteinPoly::new(Interval::new(-1.0, 1.0).unwrap(), vec![-1.0, 0.0, 1.0])
            .unwrap();
        assert_eq!(line.enclosure(), Interval { lo: -1.0, hi: 1.0 });
    }

    #[test]
    fn subdivide_examples() {
        let p = quad();
        assert_eq!(p.subdivide(unit()).unwrap(), p);
        let q = p.subdivide(Interval::new(0.0, 0.5).unwrap()).unwrap();
        assert_eq!(q.domain(), Interval::new(0.0, 0.5).unwrap());
        assert!((q.eval(0.25).unwrap() - 0.8125).abs() < 1e-15);
        assert!((quad_power(0.25) - 0.8125).abs() < 1e-15);
        assert!(matches!(
            p.subdivide(Interval::new(0.5, 1.5).unwrap()),
            Err(Error::SubInterval { .. })
        ));
        assert!(p.subdivide(Interval::point(0.5)).is_err());
    }

    #[test]
    fn reparameterize_extrapolates_exactly() {
        let p = quad();
        let wide = p.reparameterize(Interval::new(-2.0, 3.0).unwrap()).unwrap();
        for x in [-2.0, -0.5, 0.3, 1.0, 2.2, 3.0] {
            assert!((wide.eval(x).unwrap() - quad_power(x)).abs() < 1e-12);
        }
        let shifted = p.reparameterize(Interval::new(2.0, 5.0).unwrap()).unwrap();
        assert!((shifted.eval(4.0).unwrap() - quad_power(4.0)).abs() < 1e-11);
    }

    #[test]
    fn abs_approx_examples() {
        let sym = Interval::new(-1.0, 1.0).unwrap();
        let a = BernsteinPoly::abs_approx(2, sym).unwrap();
        assert_eq!(a.coeffs(), &[1.0, 0.0, 1.0]);
        assert_eq!(a.eval(-1.0).unwrap(), 1.0);
        assert_eq!(a.eval(1.0).unwrap(), 1.0);
        assert!((a.eval(0.0).unwrap() - 0.5).abs() < 1e-15);
        let skew = BernsteinPoly::abs_approx(7, Interval::new(-2.0, 5.0).unwrap()).unwrap();
        assert_eq!(skew.eval(-2.0).unwrap(), 2.0);
        assert_eq!(skew.eval(5.0).unwrap(), 5.0);
        assert!(BernsteinPoly::abs_approx(0, sym).is_err());
    }

    #[test]
    fn derivative_examples() {
        let line = BernsteinPoly::new(unit(), vec![0.0, 1.0]).unwrap();
        assert_eq!(line.derivative().coeffs(), &[1.0]);
        let c = BernsteinPoly::constant(unit(), 4.0).unwrap();
        assert_eq!(c.derivative().coeffs(), &[0.0]);
        let d = quad().derivative();
        assert_eq!(d.coeffs(), &[4.0, -2.0]);
        // 4 - 6x at the endpoints.
        assert_eq!(d.eval(0.0).unwrap(), 4.0);
        assert_eq!(d.eval(1.0).unwrap(), -2.0);
    }

    #[test]
    fn ramp_is_identity() {
        let dom = Interval::new(-3.0, 2.0).unwrap();
        let r = BernsteinPoly::ramp(4, dom).unwrap();
        for x in [-3.0, -1.2, 0.0, 1.9, 2.0] {
            assert!((r.eval(x).unwrap() - x).abs() < 1e-14);
        }
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(BernsteinPoly::new(unit(), vec![]).is_err());
        assert!(BernsteinPoly::new(Interval::point(1.0), vec![1.0]).is_err());
        assert!(BernsteinPoly::new(unit(), vec![f64::NAN]).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
    }
}
