//! Interval-box reachability through DeepBern networks.
//!
//! Affine layers use interval arithmetic; each Bernstein activation is bounded
//! by subdividing its polynomial onto the incoming interval and taking the
//! coefficient min/max. Every bound is widened outward by a floating-point
//! error term, so the boxes also contain the values [`DeepBernNet::forward`]
//! computes in floating point.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::bernstein::{BernsteinPoly, Interval};
use crate::deepbern::{Activation, AffineLayer, DeepBernNet};
use crate::error::{Error, Result};
use crate::num;

/// Axis-aligned box, one interval per dimension.
#[derive(Clone, PartialEq)]
pub struct IntervalBox(Vec<Interval>);

impl fmt::Debug for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl IntervalBox {
    pub fn new(dims: Vec<Interval>) -> Self {
        IntervalBox(dims)
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::arg("a box needs at least one dimension"));
        }
        bounds
            .iter()
            .map(|(lo, hi)| Interval::new(*lo, *hi))
            .collect::<Result<Vec<_>>>()
            .map(IntervalBox)
    }

    pub fn point(x: &[f64]) -> Self {
        IntervalBox(x.iter().map(|v| Interval::point(*v)).collect())
    }

    pub fn dims(&self) -> &[Interval] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn volume(&self) -> f64 {
        self.0.iter().map(|i| i.width()).product()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.0.iter().map(|i| i.width()).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(|i| i.mid()).collect()
    }

    pub fn concat(&self, other: &IntervalBox) -> IntervalBox {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        IntervalBox(v)
    }

    pub fn hull(&self, other: &IntervalBox) -> IntervalBox {
        IntervalBox(self.0.iter().zip(&other.0).map(|(a, b)| a.hull(b)).collect())
    }

    pub fn intersect(&self, other: &IntervalBox) -> Option<IntervalBox> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.intersect(b))
            .collect::<Option<Vec<_>>>()
            .map(IntervalBox)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.0.iter().zip(x).all(|(i, v)| i.contains(*v))
    }

    pub fn contains_box(&self, other: &IntervalBox) -> bool {
        other.dim() == self.dim()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.contains_interval(b))
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.0
            .iter()
            .map(|i| {
                if i.lo < i.hi {
                    rng.random_range(i.lo..=i.hi)
                } else {
                    i.lo
                }
            })
            .collect()
    }

    /// Bounding box of a set of points.
    pub fn bounding(points: &[Vec<f64>]) -> Option<IntervalBox> {
        let first = points.first()?;
        let mut dims: Vec<Interval> = first.iter().map(|v| Interval::point(*v)).collect();
        for p in &points[1..] {
            for (d, v) in dims.iter_mut().zip(p) {
                d.lo = d.lo.min(*v);
                d.hi = d.hi.max(*v);
            }
        }
        Some(IntervalBox(dims))
    }
}

/// Interval arithmetic through `W x + b`, rounded outward.
pub fn propagate_affine(layer: &AffineLayer, input: &IntervalBox) -> Result<IntervalBox> {
    if input.dim() != layer.in_dim {
        return Err(Error::Dimension {
            expected: layer.in_dim,
            found: input.dim(),
        });
    }
    let gamma = 2.0 * (layer.in_dim as f64 + 2.0) * num::EPS;
    let out = (0..layer.out_dim)
        .map(|i| {
            let row = layer.row(i);
            let b = layer.bias[i];
            let (mut lo, mut hi, mut mag) = (b, b, num::abs(b));
            for (w, x) in row.iter().zip(input.dims()) {
                let (p, q) = (w * x.lo, w * x.hi);
                lo += p.min(q);
                hi += p.max(q);
                mag += num::abs(*w) * num::abs(x.lo).max(num::abs(x.hi));
            }
            let pad = gamma * mag + f64::MIN_POSITIVE;
            Interval {
                lo: lo - pad,
                hi: hi + pad,
            }
        })
        .collect();
    Ok(IntervalBox(out))
}

/// Bound of `poly` over `input`: the coefficient range of the polynomial
/// subdivided onto `input`, widened by the evaluation round-off bound.
///
/// `input` may overshoot the domain by the membership slack, and is clipped
/// to it; a larger overshoot is an error.
pub fn propagate_activation(poly: &BernsteinPoly, input: Interval) -> Result<Interval> {
    let dom = poly.domain();
    if !dom.contains_interval_with_slack(&input) {
        return Err(Error::DomainEscape {
            layer: 0,
            neuron: 0,
            lo: input.lo,
            hi: input.hi,
            dom_lo: dom.lo,
            dom_hi: dom.hi,
        });
    }
    let lo = input.lo.max(dom.lo).min(dom.hi);
    let hi = input.hi.min(dom.hi).max(dom.lo);
    let pad = poly.rounding_bound() + f64::MIN_POSITIVE;
    let enc = if lo < hi {
        poly.subdivide(Interval { lo, hi })?.enclosure()
    } else {
        Interval::point(poly.eval(lo)?)
    };
    Ok(enc.pad(pad))
}

/// Applies an activation layer to a pre-activation box; `layer` indexes the
/// error.
pub fn propagate_activation_layer(
    act: &Activation,
    input: &IntervalBox,
    layer: usize,
) -> Result<IntervalBox> {
    match act {
        Activation::Identity => Ok(input.clone()),
        Activation::Bernstein(polys) => input
            .dims()
            .iter()
            .zip(polys)
            .enumerate()
            .map(|(neuron, (iv, p))| {
                propagate_activation(p, *iv).map_err(|e| match e {
                    Error::DomainEscape {
                        lo,
                        hi,
                        dom_lo,
                        dom_hi,
                        ..
                    } => Error::DomainEscape {
                        layer,
                        neuron,
                        lo,
                        hi,
                        dom_lo,
                        dom_hi,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(IntervalBox),
    }
}

/// Box enclosing the network's outputs over `input`; `input` must lie in the
/// network's input domain.
pub fn reach_net(net: &DeepBernNet, input: &IntervalBox) -> Result<IntervalBox> {
    if input.dim() != net.input_dim() {
        return Err(Error::Dimension {
            expected: net.input_dim(),
            found: input.dim(),
        });
    }
    let mut clipped = Vec::with_capacity(input.dim());
    for (dim, (iv, d)) in input.dims().iter().zip(net.input_domain()).enumerate() {
        if !d.contains_interval_with_slack(iv) {
            return Err(Error::InputEscape {
                dim,
                lo: iv.lo,
                hi: iv.hi,
                dom_lo: d.lo,
                dom_hi: d.hi,
            });
        }
        clipped.push(Interval {
            lo: iv.lo.max(d.lo).min(d.hi),
            hi: iv.hi.min(d.hi).max(d.lo),
        });
    }
    let mut bx = IntervalBox(clipped);
    for (li, layer) in net.layers().iter().enumerate() {
        let z = propagate_affine(&layer.affine, &bx)?;
        bx = propagate_activation_layer(&layer.activation, &z, li)?;
    }
    Ok(bx)
}

/// Per-step state boxes `X̂_0 ..= X̂_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachResult {
    pub states: Vec<IntervalBox>,
}

impl ReachResult {
    pub fn last(&self) -> &IntervalBox {
        self.states.last().unwrap()
    }
}

/// `X̂_{t+1} = reach_net(net, X̂_t × controls[t])` for `t < h`.
pub fn multi_step_reach(
    net: &DeepBernNet,
    x0: &IntervalBox,
    controls: &[IntervalBox],
    h: usize,
) -> Result<ReachResult> {
    let (states, err) = multi_step_reach_partial(net, x0, controls, h)?;
    match err {
        None => Ok(ReachResult { states }),
        Some(e) => Err(e),
    }
}

/// Like [`multi_step_reach`] but returns the boxes computed before a step
/// escaped, together with that step's error.
pub(crate) fn multi_step_reach_partial(
    net: &DeepBernNet,
    x0: &IntervalBox,
    controls: &[IntervalBox],
    h: usize,
) -> Result<(Vec<IntervalBox>, Option<Error>)> {
    if controls.len() < h {
        return Err(Error::arg("fewer control boxes than reach steps"));
    }
    if x0.dim() != net.output_dim() {
        return Err(Error::Dimension {
            expected: net.output_dim(),
            found: x0.dim(),
        });
    }
    let mut states = Vec::with_capacity(h + 1);
    states.push(x0.clone());
    for (step, u) in controls.iter().take(h).enumerate() {
        let input = states.last().unwrap().concat(u);
        match reach_net(net, &input) {
            Ok(next) => states.push(next),
            Err(e) => {
                return Ok((
                    states,
                    Some(Error::StepEscape {
                        step,
                        source: alloc::boxed::Box::new(e),
                    }),
                ))
            }
        }
    }
    Ok((states, None))
}

/// Percent excess of a reach-box volume over a sampled ground-truth volume.
pub fn tightness(v_reach: f64, v_sample: f64) -> Result<f64> {
    if !(v_sample > 0.0) || !v_sample.is_finite() {
        return Err(Error::arg("sample volume must be positive"));
    }
    Ok((v_reach - v_sample) / v_sample * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deepbern::Layer;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn affine_examples() {
        let id = AffineLayer::identity(2);
        let b = IntervalBox::new(vec![iv(0.0, 1.0), iv(-2.0, 3.0)]);
        let out = propagate_affine(&id, &b).unwrap();
        for (o, i) in out.dims().iter().zip(b.dims()) {
            assert!(o.contains_interval(i));
            assert!(o.width() - i.width() < 1e-12);
        }
        let diff = AffineLayer::new(2, 1, vec![1.0, -1.0], vec![0.0]).unwrap();
        let out = propagate_affine(&diff, &IntervalBox::new(vec![iv(0.0, 1.0), iv(0.0, 1.0)])).unwrap();
        assert!((out.dims()[0].lo + 1.0).abs() < 1e-12 && (out.dims()[0].hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn activation_examples() {
        let a = BernsteinPoly::abs_approx(2, iv(-1.0, 1.0)).unwrap();
        let full = propagate_activation(&a, iv(-1.0, 1.0)).unwrap();
        assert!(full.contains_interval(&iv(0.0, 1.0)) && full.width() < 1.0 + 1e-12);
        let half = propagate_activation(&a, iv(0.5, 1.0)).unwrap();
        assert!(half.width() < full.width());
        // B_2|x| = (1 + x²)/2 on [-1, 1]; image of [0.5, 1] is [0.625, 1].
        assert!(half.contains_interval(&iv(0.625, 1.0)));
        assert!(matches!(
            propagate_activation(&a, iv(0.0, 1.5)),
            Err(Error::DomainEscape { .. })
        ));
    }

    #[test]
    fn point_box_is_tight() {
        let net = DeepBernNet::new(
            vec![iv(-1.0, 1.0)],
            vec![
                Layer {
                    affine: AffineLayer::new(1, 2, vec![0.7, -0.4], vec![0.1, 0.0]).unwrap(),
                    activation: Activation::Bernstein(vec![
                        BernsteinPoly::new(iv(-1.0, 1.0), vec![0.3, -1.0, 2.0, 0.5]).unwrap(),
                        BernsteinPoly::abs_approx(3, iv(-1.0, 1.0)).unwrap(),
                    ]),
                },
                Layer {
                    affine: AffineLayer::new(2, 1, vec![1.5, -2.0], vec![0.0]).unwrap(),
                    activation: Activation::Identity,
                },
            ],
            0.0,
            1.25,
        )
        .unwrap();
        let x = [0.37];
        let y = net.forward(&x).unwrap()[0];
        let out = reach_net(&net, &IntervalBox::point(&x)).unwrap();
        assert!(out.dims()[0].contains(y));
        assert!(out.dims()[0].width() <= 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let whole = reach_net(&net, &net.input_box()).unwrap();
        for _ in 0..1000 {
            let x = net.input_box().sample(&mut rng);
            assert!(whole.contains_point(&net.forward(&x).unwrap()));
        }
    }

    #[test]
    fn multi_step_edge_cases() {
        // x' = x (control ignored).
        let net = DeepBernNet::new(
            vec![iv(-5.0, 5.0), iv(0.0, 1.0)],
            vec![Layer {
                affine: AffineLayer::new(2, 1, vec![1.0, 0.0], vec![0.0]).unwrap(),
                activation: Activation::Identity,
            }],
            0.0,
            1.25,
        )
        .unwrap();
        let x0 = IntervalBox::new(vec![iv(-1.0, 2.0)]);
        let u = IntervalBox::new(vec![iv(0.0, 1.0)]);
        let r0 = multi_step_reach(&net, &x0, &[], 0).unwrap();
        assert_eq!(r0.states, vec![x0.clone()]);
        let r = multi_step_reach(&net, &x0, &vec![u.clone(); 3], 3).unwrap();
        assert_eq!(r.states.len(), 4);
        for s in &r.states {
            assert!(s.contains_box(&x0));
            assert!(s.dims()[0].width() - 3.0 < 1e-12);
        }
        assert!(multi_step_reach(&net, &x0, &[u.clone()], 2).is_err());
        // x' = 2x escapes [-5, 5] on the third step.
        let grow = DeepBernNet::new(
            vec![iv(-5.0, 5.0), iv(0.0, 1.0)],
            vec![Layer {
                affine: AffineLayer::new(2, 1, vec![2.0, 0.0], vec![0.0]).unwrap(),
                activation: Activation::Identity,
            }],
            0.0,
            1.25,
        )
        .unwrap();
        let err = multi_step_reach(&grow, &x0, &vec![u; 4], 4).unwrap_err();
        assert!(matches!(err, Error::StepEscape { step: 2, .. }));
    }

    #[test]
    fn tightness_examples() {
        assert_eq!(tightness(2.0, 1.0).unwrap(), 100.0);
        assert_eq!(tightness(3.5, 3.5).unwrap(), 0.0);
        assert!((tightness(74.9016, 17.68).unwrap() - 323.59).abs() < 0.5);
        assert!(tightness(1.0, 0.0).is_err());
        assert!(tightness(1.0, -2.0).is_err());
    }
}
