//! Compilation of a formula into a DeepBern robustness network.
//!
//! The formula is unrolled over the trace into a DAG of affine leaves
//! (`±(w·x_t + b)`, negation already pushed to the leaves) and binary min/max
//! nodes. Windows become balanced binary trees. Each min/max is realized as a
//! gadget of two neurons in one layer: `a + b` on a degree-1 identity neuron
//! and `a - b` through `B_n(|x|)` on `[-D, D]`. Values still needed by later
//! layers are carried on identity neurons.
//!
//! Because `B_n(|x|) ≥ |x|`, a BernMin never exceeds the true min and a
//! BernMax never falls below the true max. The compiled net keeps a signed
//! certificate `compiled - exact ∈ [err_lo, err_hi]` built from that per-gadget
//! fact and the 1-Lipschitz monotonicity of min and max.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::Formula;
use crate::bernstein::{BernsteinPoly, Interval};
use crate::deepbern::{Activation, AffineLayer, DeepBernNet, Layer};
use crate::error::{Error, Result};
use crate::num;
use crate::reach::{self, IntervalBox};

#[derive(Debug, Clone, PartialEq)]
pub struct CompileConfig {
    /// Last time index of the input trace; the network reads `H + 1` states.
    pub horizon: usize,
    /// Degree `n` of the `|x|` approximant.
    pub degree: usize,
    /// `D`, the half-width of every gadget domain. When `None`, `D = 4 B`.
    pub gadget_domain: Option<f64>,
    /// `B`, a bound on `|ρ|` of every predicate. When `None`, computed from
    /// `state_domain`.
    pub trace_bound: Option<f64>,
    /// Per-dimension range of the states the network accepts.
    pub state_domain: Vec<Interval>,
}

impl CompileConfig {
    pub fn new(horizon: usize, state_domain: Vec<Interval>) -> Self {
        CompileConfig {
            horizon,
            degree: 64,
            gadget_domain: None,
            trace_bound: None,
            state_domain,
        }
    }
}

/// A robustness network together with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledStlNet {
    pub net: DeepBernNet,
    pub horizon: usize,
    pub state_dim: usize,
    pub degree: usize,
    pub gadget_domain: f64,
    /// Maximum number of gadgets along any input-output path.
    pub d_nest: usize,
    pub gadgets: usize,
    /// Certified `max |B_n(|x|)(d) - |d||` over `[-D, D]`.
    pub e_abs: f64,
    /// `compiled - exact` lies in `[err_lo, err_hi]` whenever every gadget
    /// input stays in its domain.
    pub err_lo: f64,
    pub err_hi: f64,
}

impl CompiledStlNet {
    /// Compiled robustness at time 0.
    pub fn eval(&self, trace: &super::Trace) -> Result<f64> {
        if trace.horizon() != self.horizon || trace.dim() != self.state_dim {
            return Err(Error::Dimension {
                expected: (self.horizon + 1) * self.state_dim,
                found: (trace.horizon() + 1) * trace.dim(),
            });
        }
        match self.net.forward(&trace.flatten()) {
            Ok(v) => Ok(v[0]),
            Err(Error::DomainEscape {
                lo, dom_lo, dom_hi, ..
            }) if dom_lo == -self.gadget_domain && dom_hi == self.gadget_domain => {
                Err(Error::GadgetDomain {
                    diff: lo,
                    bound: self.gadget_domain,
                })
            }
            Err(e) => Err(e),
        }
    }

    /// Interval containing the compiled output over a box-valued trace.
    pub fn reach(&self, states: &[IntervalBox]) -> Result<Interval> {
        if states.len() != self.horizon + 1 {
            return Err(Error::Dimension {
                expected: self.horizon + 1,
                found: states.len(),
            });
        }
        let dims: Vec<Interval> = states.iter().flat_map(|b| b.dims().iter().copied()).collect();
        let out = reach::reach_net(&self.net, &IntervalBox::new(dims))?;
        Ok(out.dims()[0])
    }

    /// The certified absolute error bound `d_nest · e_abs / 2`.
    pub fn nested_bound(&self) -> f64 {
        self.d_nest as f64 * self.e_abs / 2.0
    }
}

/// `max |B_n(|x|)(d) - |d||` over a grid of `10⁴ + 1` points on `[-D, D]`
/// (which includes both endpoints and 0), inflated by 1%.
pub fn error_bound(n: usize, d: f64) -> Result<f64> {
    if n == 0 || !(d > 0.0) || !d.is_finite() {
        return Err(Error::arg("error_bound needs n >= 1 and D > 0"));
    }
    let g = BernsteinPoly::abs_approx(n, Interval { lo: -d, hi: d })?;
    const STEPS: usize = 10_000;
    let mut worst = 0.0f64;
    for i in 0..=STEPS {
        let x = -d + 2.0 * d * i as f64 / STEPS as f64;
        let x = if i == STEPS / 2 { 0.0 } else if i == STEPS { d } else { x };
        worst = worst.max(num::abs(g.eval(x)? - num::abs(x)));
    }
    Ok(worst * 1.01)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Op {
    Min,
    Max,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { t: usize, w: Vec<f64>, b: f64 },
    Gadget { op: Op, a: usize, b: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Leaf(usize, Vec<u64>, u64),
    Gadget(Op, usize, usize),
}

#[derive(Default)]
struct Dag {
    nodes: Vec<Node>,
    level: Vec<usize>,
    index: BTreeMap<Key, usize>,
}

impl Dag {
    fn intern(&mut self, key: Key, node: Node, level: usize) -> usize {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(node);
        self.level.push(level);
        self.index.insert(key, id);
        id
    }

    fn leaf(&mut self, t: usize, w: Vec<f64>, b: f64) -> usize {
        // Normalize -0.0 so equal leaves share a node.
        let w: Vec<f64> = w.into_iter().map(|v| v + 0.0).collect();
        let b = b + 0.0;
        let key = Key::Leaf(t, w.iter().map(|v| v.to_bits()).collect(), b.to_bits());
        self.intern(key, Node::Leaf { t, w, b }, 0)
    }

    fn gadget(&mut self, op: Op, a: usize, b: usize) -> usize {
        if a == b {
            return a;
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let level = 1 + self.level[a].max(self.level[b]);
        self.intern(Key::Gadget(op, a, b), Node::Gadget { op, a, b }, level)
    }

    fn balanced(&mut self, op: Op, items: &[usize]) -> usize {
        let mut uniq: Vec<usize> = Vec::with_capacity(items.len());
        for &i in items {
            if !uniq.contains(&i) {
                uniq.push(i);
            }
        }
        self.tree(op, &uniq)
    }

    fn tree(&mut self, op: Op, items: &[usize]) -> usize {
        match items.len() {
            0 => unreachable!("empty operand list"),
            1 => items[0],
            n => {
                let (l, r) = items.split_at(n.div_ceil(2));
                let a = self.tree(op, l);
                let b = self.tree(op, r);
                self.gadget(op, a, b)
            }
        }
    }

    /// Effective operator of `f` under negation, if it is a min/max.
    fn op_of(f: &Formula, neg: bool) -> Option<Op> {
        let base = match f {
            Formula::And(..) | Formula::Globally { .. } => Op::Min,
            Formula::Or(..) | Formula::Finally { .. } | Formula::Until { .. } => Op::Max,
            _ => return None,
        };
        Some(match (base, neg) {
            (b, false) => b,
            (Op::Min, true) => Op::Max,
            (Op::Max, true) => Op::Min,
        })
    }

    /// Operands of `f` viewed as an n-ary min/max, flattening nested
    /// operators of the same kind.
    fn collect(&mut self, f: &Formula, t: usize, neg: bool, op: Op, out: &mut Vec<usize>) {
        if Self::op_of(f, neg) != Some(op) {
            out.push(self.lower(f, t, neg));
            return;
        }
        match f {
            Formula::And(a, b) | Formula::Or(a, b) => {
                self.collect(a, t, neg, op, out);
                self.collect(b, t, neg, op, out);
            }
            Formula::Globally { lo, hi, f } | Formula::Finally { lo, hi, f } => {
                for s in t + lo..=t + hi {
                    self.collect(f, s, neg, op, out);
                }
            }
            Formula::Until { lo, hi, lhs, rhs } => {
                let inner = if op == Op::Max { Op::Min } else { Op::Max };
                for s in t + lo..=t + hi {
                    let mut items = Vec::new();
                    self.collect(rhs, s, neg, inner, &mut items);
                    for r in t..=s {
                        self.collect(lhs, r, neg, inner, &mut items);
                    }
                    out.push(self.balanced(inner, &items));
                }
            }
            _ => unreachable!(),
        }
    }

    fn lower(&mut self, f: &Formula, t: usize, neg: bool) -> usize {
        match f {
            Formula::Pred { w, b } => {
                if neg {
                    self.leaf(t, w.iter().map(|v| -v).collect(), -b)
                } else {
                    self.leaf(t, w.clone(), *b)
                }
            }
            Formula::Not(g) => self.lower(g, t, !neg),
            _ => {
                let op = Self::op_of(f, neg).unwrap();
                let mut items = Vec::new();
                self.collect(f, t, neg, op, &mut items);
                self.balanced(op, &items)
            }
        }
    }
}

/// Largest `|w·x + b|` of any predicate over the box `dom`.
fn predicate_bound(f: &Formula, dom: &[Interval]) -> f64 {
    match f {
        Formula::Pred { w, b } => {
            let (mut lo, mut hi) = (*b, *b);
            for (wi, d) in w.iter().zip(dom) {
                let (p, q) = (wi * d.lo, wi * d.hi);
                lo += p.min(q);
                hi += p.max(q);
            }
            num::abs(lo).max(num::abs(hi))
        }
        Formula::Not(g) => predicate_bound(g, dom),
        Formula::And(a, b) | Formula::Or(a, b) => predicate_bound(a, dom).max(predicate_bound(b, dom)),
        Formula::Globally { f, .. } | Formula::Finally { f, .. } => predicate_bound(f, dom),
        Formula::Until { lhs, rhs, .. } => predicate_bound(lhs, dom).max(predicate_bound(rhs, dom)),
    }
}

/// How a node's value is read from the previous layer's outputs.
#[derive(Clone, Copy)]
enum Slot {
    /// Gadget computed in the previous layer: neurons `sum` and `diff`.
    Gadget { sum: usize, diff: usize, op: Op },
    /// Value carried on one identity neuron.
    Carried(usize),
}

/// Compiles `f` for traces of `cfg.horizon + 1` states.
pub fn compile(f: &Formula, cfg: &CompileConfig) -> Result<CompiledStlNet> {
    let dim = cfg.state_domain.len();
    if dim == 0 {
        return Err(Error::arg("state domain must have at least one dimension"));
    }
    f.validate(dim)?;
    let needed = f.needed_steps();
    if needed > cfg.horizon {
        return Err(Error::Horizon {
            needed,
            t: 0,
            horizon: cfg.horizon,
        });
    }
    if cfg.degree < 2 {
        return Err(Error::arg("gadget degree must be >= 2"));
    }
    let bound = match cfg.trace_bound {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(_) => return Err(Error::arg("trace bound must be positive")),
        None => predicate_bound(f, &cfg.state_domain).max(1e-6),
    };
    let d = match cfg.gadget_domain {
        Some(d) if d > 0.0 && d.is_finite() => d,
        Some(_) => return Err(Error::arg("gadget domain must be positive")),
        None => 4.0 * bound,
    };
    let n = cfg.degree;
    let width = (cfg.horizon + 1) * dim;
    let input_domain: Vec<Interval> = (0..=cfg.horizon)
        .flat_map(|_| cfg.state_domain.iter().copied())
        .collect();

    let mut dag = Dag::default();
    let root = dag.lower(f, 0, false);
    let d_nest = dag.level[root];

    let leaf_row = |node: &Node| -> (Vec<f64>, f64) {
        match node {
            Node::Leaf { t, w, b } => {
                let mut row = vec![0.0; width];
                row[t * dim..(t + 1) * dim].copy_from_slice(w);
                (row, *b)
            }
            _ => unreachable!(),
        }
    };

    if d_nest == 0 {
        let (row, b) = leaf_row(&dag.nodes[root]);
        let layer = Layer {
            affine: AffineLayer::new(width, 1, row, vec![b])?,
            activation: Activation::Identity,
        };
        let net = DeepBernNet::new(input_domain, vec![layer], 0.0, 1.0)?;
        return Ok(CompiledStlNet {
            net,
            horizon: cfg.horizon,
            state_dim: dim,
            degree: n,
            gadget_domain: d,
            d_nest: 0,
            gadgets: 0,
            e_abs: 0.0,
            err_lo: 0.0,
            err_hi: 0.0,
        });
    }

    let e_abs = error_bound(n, d)?;
    let gadget_dom = Interval { lo: -d, hi: d };
    let abs_poly = BernsteinPoly::abs_approx(n, gadget_dom)?;

    // Last layer (gadget level) at which each node is consumed.
    let mut last_use = vec![0usize; dag.nodes.len()];
    for (id, node) in dag.nodes.iter().enumerate() {
        if let Node::Gadget { a, b, .. } = node {
            let l = dag.level[id];
            last_use[*a] = last_use[*a].max(l);
            last_use[*b] = last_use[*b].max(l);
        }
    }

    let mut layers = Vec::with_capacity(d_nest + 1);
    let mut slots: BTreeMap<usize, Slot> = BTreeMap::new();
    let mut in_dim = width;
    let mut bx = IntervalBox::new(input_domain.clone());
    let mut magnitude = d;
    for stage in 1..=d_nest {
        let row_of = |id: usize, slots: &BTreeMap<usize, Slot>| -> (Vec<f64>, f64) {
            if stage == 1 {
                return leaf_row(&dag.nodes[id]);
            }
            let mut row = vec![0.0; in_dim];
            match slots[&id] {
                Slot::Gadget { sum, diff, op } => {
                    row[sum] = 0.5;
                    row[diff] = if op == Op::Min { -0.5 } else { 0.5 };
                }
                Slot::Carried(i) => row[i] = 1.0,
            }
            (row, 0.0)
        };
        let mut weights = Vec::new();
        let mut bias = Vec::new();
        let mut is_diff = Vec::new();
        let mut next_slots = BTreeMap::new();
        for (id, node) in dag.nodes.iter().enumerate() {
            if dag.level[id] != stage {
                continue;
            }
            let Node::Gadget { op, a, b } = node else { unreachable!() };
            let (ra, ba) = row_of(*a, &slots);
            let (rb, bb) = row_of(*b, &slots);
            let sum = bias.len();
            weights.extend(ra.iter().zip(&rb).map(|(x, y)| x + y));
            bias.push(ba + bb);
            is_diff.push(false);
            weights.extend(ra.iter().zip(&rb).map(|(x, y)| x - y));
            bias.push(ba - bb);
            is_diff.push(true);
            next_slots.insert(
                id,
                Slot::Gadget {
                    sum,
                    diff: sum + 1,
                    op: *op,
                },
            );
        }
        for id in 0..dag.nodes.len() {
            if dag.level[id] < stage && last_use[id] > stage {
                let (r, b) = row_of(id, &slots);
                next_slots.insert(id, Slot::Carried(bias.len()));
                weights.extend(r);
                bias.push(b);
                is_diff.push(false);
            }
        }
        let out_dim = bias.len();
        let affine = AffineLayer::new(in_dim, out_dim, weights, bias)?;
        let z = reach::propagate_affine(&affine, &bx)?;
        let mut polys = Vec::with_capacity(out_dim);
        let mut clipped = Vec::with_capacity(out_dim);
        for (iv, diff) in z.dims().iter().zip(&is_diff) {
            if *diff {
                polys.push(abs_poly.clone());
                clipped.push(Interval {
                    lo: iv.lo.max(-d).min(d),
                    hi: iv.hi.min(d).max(-d),
                });
            } else {
                let pad = 1e-7 * num::abs(iv.lo).max(num::abs(iv.hi)).max(1.0);
                let dom = iv.pad(pad);
                magnitude = magnitude.max(num::abs(dom.lo)).max(num::abs(dom.hi));
                polys.push(BernsteinPoly::ramp(1, dom)?);
                clipped.push(*iv);
            }
        }
        let activation = Activation::Bernstein(polys);
        bx = reach::propagate_activation_layer(&activation, &IntervalBox::new(clipped), stage - 1)?;
        layers.push(Layer { affine, activation });
        slots = next_slots;
        in_dim = out_dim;
    }
    let Slot::Gadget { sum, diff, op } = slots[&root] else { unreachable!() };
    let mut row = vec![0.0; in_dim];
    row[sum] = 0.5;
    row[diff] = if op == Op::Min { -0.5 } else { 0.5 };
    layers.push(Layer {
        affine: AffineLayer::new(in_dim, 1, row, vec![0.0])?,
        activation: Activation::Identity,
    });

    // Signed error intervals, children before parents (ids are topological).
    let slack = 16.0 * (n as f64 + 4.0) * num::EPS * magnitude;
    let mut err = vec![(0.0f64, 0.0f64); dag.nodes.len()];
    let mut gadgets = 0;
    for (id, node) in dag.nodes.iter().enumerate() {
        if let Node::Gadget { op, a, b } = node {
            gadgets += 1;
            let lo = err[*a].0.min(err[*b].0) - slack;
            let hi = err[*a].1.max(err[*b].1) + slack;
            err[id] = match op {
                Op::Min => (lo - e_abs / 2.0, hi),
                Op::Max => (lo, hi + e_abs / 2.0),
            };
        }
    }
    let net = DeepBernNet::new(input_domain, layers, 0.0, 1.0)?;
    Ok(CompiledStlNet {
        net,
        horizon: cfg.horizon,
        state_dim: dim,
        degree: n,
        gadget_domain: d,
        d_nest,
        gadgets,
        e_abs,
        err_lo: err[root].0,
        err_hi: err[root].1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{robustness, Trace};

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn single_predicate_is_one_affine_layer() {
        let f = Formula::pred(vec![-1.0], 8.0);
        let c = compile(&f, &CompileConfig::new(0, vec![iv(0.0, 12.0)])).unwrap();
        assert_eq!(c.net.layers().len(), 1);
        assert_eq!(c.d_nest, 0);
        let tr = Trace::new(vec![vec![6.5]]).unwrap();
        assert_eq!(c.eval(&tr).unwrap(), robustness(&f, &tr, 0).unwrap());
    }

    #[test]
    fn one_gadget_bound() {
        let f = Formula::and(Formula::pred(vec![1.0], 0.0), Formula::pred(vec![-1.0], 3.0));
        let c = compile(&f, &CompileConfig::new(0, vec![iv(-2.0, 5.0)])).unwrap();
        assert_eq!(c.d_nest, 1);
        assert!(c.err_hi <= 1e-9 && c.err_lo >= -c.e_abs / 2.0 - 1e-9);
        for i in 0..=70 {
            let x = -2.0 + 0.1 * i as f64;
            let tr = Trace::new(vec![vec![x]]).unwrap();
            let diff = c.eval(&tr).unwrap() - robustness(&f, &tr, 0).unwrap();
            assert!(diff >= c.err_lo && diff <= c.err_hi, "x={x} diff={diff}");
        }
    }

    #[test]
    fn window_nesting_is_logarithmic() {
        let f = Formula::globally(0, 30, Formula::pred(vec![-1.0], 8.0));
        let c = compile(&f, &CompileConfig::new(30, vec![iv(0.0, 12.0)])).unwrap();
        assert_eq!(c.d_nest, 5);
        assert_eq!(c.gadgets, 30);
    }

    #[test]
    fn negation_is_exact_on_leaves() {
        let f = Formula::not(Formula::pred(vec![2.0], -1.0));
        let c = compile(&f, &CompileConfig::new(0, vec![iv(0.0, 1.0)])).unwrap();
        let tr = Trace::new(vec![vec![0.25]]).unwrap();
        assert_eq!(c.eval(&tr).unwrap(), 0.5);
    }

    #[test]
    fn horizon_mismatch() {
        let f = Formula::globally(0, 5, Formula::pred(vec![1.0], 0.0));
        assert!(matches!(
            compile(&f, &CompileConfig::new(3, vec![iv(0.0, 1.0)])),
            Err(Error::Horizon { .. })
        ));
    }

    #[test]
    fn error_bound_examples() {
        assert!(error_bound(2, 1.0).unwrap() >= 0.5);
        let e1 = error_bound(8, 1.0).unwrap();
        let e10 = error_bound(8, 10.0).unwrap();
        assert!((e10 / e1 - 10.0).abs() < 0.1);
        for n in [2, 8, 32] {
            assert!(error_bound(4 * n, 1.0).unwrap() < error_bound(n, 1.0).unwrap());
        }
    }
}
