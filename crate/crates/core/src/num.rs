// Float helpers routed through libm so results do not depend on the platform libm.

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// Unit roundoff of `f64`.
pub(crate) const EPS: f64 = f64::EPSILON * 0.5;

/// Relative slack used by every domain-membership check.
pub(crate) const DOMAIN_SLACK: f64 = 1e-9;

/// Absolute slack for a domain `[lo, hi]`: `1e-9 * max(1, |lo|, |hi|)`.
#[inline]
pub(crate) fn slack(lo: f64, hi: f64) -> f64 {
    DOMAIN_SLACK * abs(lo).max(abs(hi)).max(1.0)
}
