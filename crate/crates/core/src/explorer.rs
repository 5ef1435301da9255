//! Breadth-first exploration of the cyber-trajectory tree.
//!
//! A node is a prefix `p_0..p_l` of path indices with the box of states at
//! time `l`. Its robustness is bounded by reaching `X_l` forward through the
//! dynamics net for the remaining `H - l` steps, using `p_l`'s control range
//! now and the hull of every range afterwards, then reaching the whole box
//! trace through the compiled robustness net. Safe and Unsafe nodes prune
//! their subtree; Uncertain interior nodes expand into the children whose
//! guards meet the one-step box.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::bernstein::Interval;
use crate::deepbern::DeepBernNet;
use crate::error::{Error, Result};
use crate::progmodel::{self, ControlProgram, ControlRangeTable};
use crate::reach::{self, IntervalBox};
use crate::stl::CompiledStlNet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Classification {
    Safe,
    Unsafe,
    Uncertain,
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessBounds {
    pub rho_min: f64,
    pub rho_max: f64,
    pub eps_bar: f64,
}

pub fn classify(b: &RobustnessBounds) -> Classification {
    if b.rho_min - b.eps_bar > 0.0 {
        Classification::Safe
    } else if b.rho_max + b.eps_bar < 0.0 {
        Classification::Unsafe
    } else {
        Classification::Uncertain
    }
}

/// A queued prefix. `states[t]` bounds the state at time `t ≤ l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixNode {
    pub paths: Vec<usize>,
    pub states: Vec<IntervalBox>,
}

impl PrefixNode {
    pub fn entry(&self) -> &IntervalBox {
        self.states.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub prefix: Vec<usize>,
    /// `None` when a reach step left a network domain.
    pub bounds: Option<RobustnessBounds>,
    pub class: Classification,
    /// Whether the node was expanded into children.
    pub expanded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub visited: usize,
    pub pruned: usize,
    pub reach_calls: usize,
    pub escapes: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExplorationResult {
    pub safe: Vec<Vec<usize>>,
    pub unsafe_: Vec<Vec<usize>>,
    pub uncertain: Vec<Vec<usize>>,
    pub unreachable: Vec<Vec<usize>>,
    /// Every visited node, in visiting order.
    pub nodes: Vec<NodeRecord>,
    pub counters: Counters,
}

impl ExplorationResult {
    /// The set a prefix was recorded in, if any.
    pub fn class_of(&self, prefix: &[usize]) -> Option<Classification> {
        let sets = [
            (&self.safe, Classification::Safe),
            (&self.unsafe_, Classification::Unsafe),
            (&self.uncertain, Classification::Uncertain),
            (&self.unreachable, Classification::Unreachable),
        ];
        sets.iter()
            .find(|(s, _)| s.iter().any(|p| p == prefix))
            .map(|(_, c)| *c)
    }

    fn record(&mut self, prefix: Vec<usize>, class: Classification) {
        match class {
            Classification::Safe => self.safe.push(prefix),
            Classification::Unsafe => self.unsafe_.push(prefix),
            Classification::Uncertain => self.uncertain.push(prefix),
            Classification::Unreachable => self.unreachable.push(prefix),
        }
    }

    /// Merges one processed node; callers merge in queue order.
    pub fn merge(&mut self, out: NodeOutcome) {
        self.counters.visited += 1;
        self.counters.reach_calls += out.reach_calls;
        self.counters.escapes += usize::from(out.record.bounds.is_none());
        let rec = out.record;
        if !rec.expanded {
            if !out.leaf && matches!(rec.class, Classification::Safe | Classification::Unsafe) {
                self.counters.pruned += 1;
            }
            self.record(rec.prefix.clone(), rec.class);
        }
        for u in out.unreachable {
            self.record(u, Classification::Unreachable);
        }
        self.nodes.push(rec);
    }
}

/// Result of processing one node, before merging.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutcome {
    pub record: NodeRecord,
    pub leaf: bool,
    pub children: Vec<PrefixNode>,
    pub unreachable: Vec<Vec<usize>>,
    pub reach_calls: usize,
}

/// Raw bounds of one node, shared by the explorer and reference enumerators.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEval {
    pub bounds: Option<RobustnessBounds>,
    /// Box of states at time `l + 1`, when that step stayed in domain.
    pub one_step: Option<IntervalBox>,
    pub reach_calls: usize,
}

/// Controls for steps `0..H`: the committed branch ranges, then the hull of
/// every range.
pub fn remaining_control_sequence(prefix: &[usize], table: &ControlRangeTable, h: usize) -> Vec<IntervalBox> {
    let hull = table.hull().expect("range table is nonempty");
    (0..h)
        .map(|t| match prefix.get(t) {
            Some(&p) => table.get(p).cloned().unwrap_or_else(|| hull.clone()),
            None => hull.clone(),
        })
        .collect()
}

pub struct Explorer<'a> {
    pub net: &'a DeepBernNet,
    pub spec: &'a CompiledStlNet,
    pub program: &'a ControlProgram,
    pub table: ControlRangeTable,
    pub x0: IntervalBox,
    pub horizon: usize,
    pub eps_bar: f64,
}

impl<'a> Explorer<'a> {
    pub fn new(
        net: &'a DeepBernNet,
        spec: &'a CompiledStlNet,
        program: &'a ControlProgram,
        x0: IntervalBox,
        horizon: usize,
        eps_bar: f64,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::arg("horizon must be >= 1"));
        }
        if !(eps_bar >= 0.0) {
            return Err(Error::arg("eps_bar must be nonnegative"));
        }
        if spec.horizon != horizon || spec.state_dim != program.state_dim() {
            return Err(Error::arg("compiled spec does not match the horizon or state dimension"));
        }
        if net.output_dim() != program.state_dim()
            || net.input_dim() != program.state_dim() + program.control_dim()
            || x0.dim() != program.state_dim()
        {
            return Err(Error::Dimension {
                expected: program.state_dim() + program.control_dim(),
                found: net.input_dim(),
            });
        }
        let table = progmodel::build_range_table(program)?;
        Ok(Explorer {
            net,
            spec,
            program,
            table,
            x0,
            horizon,
            eps_bar,
        })
    }

    /// First-level nodes, and the first-level branches that are unreachable.
    pub fn roots(&self) -> Result<(Vec<PrefixNode>, Vec<Vec<usize>>)> {
        let mut nodes = Vec::new();
        let mut unreachable = Vec::new();
        for p in self.table.paths() {
            match self.child_entry(&self.x0, p)? {
                Some(b) => nodes.push(PrefixNode {
                    paths: alloc::vec![p],
                    states: alloc::vec![b],
                }),
                None => unreachable.push(alloc::vec![p]),
            }
        }
        Ok((nodes, unreachable))
    }

    /// Entry box of branch `path` from the box `bx`, `None` when the guard
    /// misses it.
    pub fn child_entry(&self, bx: &IntervalBox, path: usize) -> Result<Option<IntervalBox>> {
        let (ok, refined) = progmodel::guard_intersect(bx, &self.program.paths[path].guard)?;
        Ok(ok.then_some(refined))
    }

    /// Bounds for the prefix `paths` given its committed state boxes.
    pub fn evaluate(&self, paths: &[usize], states: &[IntervalBox]) -> Result<NodeEval> {
        let l = paths.len() - 1;
        debug_assert_eq!(states.len(), paths.len());
        let controls = remaining_control_sequence(paths, &self.table, self.horizon);
        let (reached, err) =
            reach::multi_step_reach_partial(self.net, &states[l], &controls[l..], self.horizon - l)?;
        let one_step = reached.get(1).cloned();
        let mut reach_calls = reached.len() - 1 + usize::from(err.is_some());
        if err.is_some() {
            return Ok(NodeEval {
                bounds: None,
                one_step,
                reach_calls,
            });
        }
        let mut trace: Vec<IntervalBox> = states[..l].to_vec();
        trace.extend(reached);
        reach_calls += 1;
        let bounds = match self.spec.reach(&trace) {
            Ok(Interval { lo, hi }) => Some(RobustnessBounds {
                rho_min: lo - self.spec.err_hi,
                rho_max: hi - self.spec.err_lo,
                eps_bar: self.eps_bar,
            }),
            Err(_) => None,
        };
        Ok(NodeEval {
            bounds,
            one_step,
            reach_calls,
        })
    }

    /// Classifies one node and, when it stays Uncertain, builds its children.
    pub fn process(&self, node: &PrefixNode) -> Result<NodeOutcome> {
        let ev = self.evaluate(&node.paths, &node.states)?;
        let class = ev
            .bounds
            .as_ref()
            .map(classify)
            .unwrap_or(Classification::Uncertain);
        let leaf = node.paths.len() == self.horizon;
        let mut out = NodeOutcome {
            record: NodeRecord {
                prefix: node.paths.clone(),
                bounds: ev.bounds,
                class,
                expanded: false,
            },
            leaf,
            children: Vec::new(),
            unreachable: Vec::new(),
            reach_calls: ev.reach_calls,
        };
        if class != Classification::Uncertain || leaf {
            return Ok(out);
        }
        let Some(next) = ev.one_step else {
            return Ok(out);
        };
        out.record.expanded = true;
        for p in self.table.paths() {
            let mut prefix = node.paths.clone();
            prefix.push(p);
            match self.child_entry(&next, p)? {
                Some(b) => {
                    let mut states = node.states.clone();
                    states.push(b);
                    out.children.push(PrefixNode { paths: prefix, states });
                }
                None => out.unreachable.push(prefix),
            }
        }
        Ok(out)
    }

    /// Sequential FIFO exploration.
    pub fn explore(&self) -> Result<ExplorationResult> {
        let mut res = ExplorationResult::default();
        let (roots, unreachable) = self.roots()?;
        for u in unreachable {
            res.record(u, Classification::Unreachable);
        }
        let mut queue: VecDeque<PrefixNode> = roots.into();
        while let Some(node) = queue.pop_front() {
            let out = self.process(&node)?;
            queue.extend(out.children.iter().cloned());
            res.merge(out);
        }
        Ok(res)
    }

    /// Exploration that processes each tree level with `map`, which must
    /// return outcomes in input order (for example a parallel map).
    pub fn explore_levels<F>(&self, mut map: F) -> Result<ExplorationResult>
    where
        F: FnMut(&[PrefixNode]) -> Vec<Result<NodeOutcome>>,
    {
        let mut res = ExplorationResult::default();
        let (mut level, unreachable) = self.roots()?;
        for u in unreachable {
            res.record(u, Classification::Unreachable);
        }
        while !level.is_empty() {
            let outs = map(&level);
            let mut next = Vec::new();
            for out in outs {
                let out = out?;
                next.extend(out.children.iter().cloned());
                res.merge(out);
            }
            level = next;
        }
        Ok(res)
    }
}

/// Recorded prefixes are pairwise disjoint across sets and none is a strict
/// prefix of another.
pub fn check_partition(res: &ExplorationResult) -> bool {
    let all: Vec<&Vec<usize>> = res
        .safe
        .iter()
        .chain(&res.unsafe_)
        .chain(&res.uncertain)
        .chain(&res.unreachable)
        .collect();
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            let n = a.len().min(b.len());
            if a[..n] == b[..n] {
                return false;
            }
        }
    }
    true
}
