//! Plant simulation and simulated-annealing falsification along a path prefix.
//!
//! The controller sees `x_t + s_t`, runs the first path whose guard holds at
//! that view, and the plant steps from the true state `x_t`. A falsification
//! run searches `(x_0, s_0..s_{H-1})` for a trace with negative robustness
//! whose executed paths match a target prefix.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::deepbern::DeepBernNet;
use crate::error::{Error, Result};
use crate::explorer::ExplorationResult;
use crate::num;
use crate::progmodel::ControlProgram;
use crate::reach::IntervalBox;
use crate::stl::{self, Formula, Trace};

/// Discrete-time plant `x_{t+1} = F(x_t, u_t)`.
pub trait Plant {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel {
    /// `h' = h + dt·(q_in·InValve·InValveRate − q_out·OutValve·OutValveRate)`
    /// with controls `[InValve, OutValve, InValveRate, OutValveRate]`.
    WaterTank { dt: f64, q_in: f64, q_out: f64 },
    /// `RPM' = clamp(RPM + dt·(α·Throttle − β·RPM), 0, rpm_max)`,
    /// `Speed' = clamp(Speed + dt·(γ·RPM − ζ·Speed), 0, speed_max)`.
    Engine {
        dt: f64,
        alpha: f64,
        beta: f64,
        gamma: f64,
        zeta: f64,
        rpm_max: f64,
        speed_max: f64,
    },
}

impl PlantModel {
    pub fn watertank() -> Self {
        PlantModel::WaterTank {
            dt: 1.0,
            q_in: 1.0,
            q_out: 1.0,
        }
    }

    pub fn engine() -> Self {
        PlantModel::Engine {
            dt: 0.5,
            alpha: 25.0,
            beta: 0.5,
            gamma: 0.015,
            zeta: 0.5,
            rpm_max: 6000.0,
            speed_max: 160.0,
        }
    }
}

impl Plant for PlantModel {
    fn state_dim(&self) -> usize {
        match self {
            PlantModel::WaterTank { .. } => 1,
            PlantModel::Engine { .. } => 2,
        }
    }

    fn control_dim(&self) -> usize {
        match self {
            PlantModel::WaterTank { .. } => 4,
            PlantModel::Engine { .. } => 1,
        }
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim() || u.len() != self.control_dim() {
            return Err(Error::Dimension {
                expected: self.state_dim() + self.control_dim(),
                found: x.len() + u.len(),
            });
        }
        Ok(match *self {
            PlantModel::WaterTank { dt, q_in, q_out } => {
                vec![x[0] + dt * (q_in * u[0] * u[2] - q_out * u[1] * u[3])]
            }
            PlantModel::Engine {
                dt,
                alpha,
                beta,
                gamma,
                zeta,
                rpm_max,
                speed_max,
            } => {
                let rpm = x[0] + dt * (alpha * u[0] - beta * x[0]);
                let speed = x[1] + dt * (gamma * x[0] - zeta * x[1]);
                vec![rpm.clamp(0.0, rpm_max), speed.clamp(0.0, speed_max)]
            }
        })
    }
}

/// A trained dynamics net used as the plant; inputs are state then controls.
impl Plant for DeepBernNet {
    fn state_dim(&self) -> usize {
        self.output_dim()
    }

    fn control_dim(&self) -> usize {
        self.input_dim() - self.output_dim()
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut input = Vec::with_capacity(x.len() + u.len());
        input.extend_from_slice(x);
        input.extend_from_slice(u);
        self.forward(&input)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trace: Trace,
    pub paths: Vec<usize>,
    pub controls: Vec<Vec<f64>>,
}

/// Runs `h` closed-loop steps from `x0` with sensor perturbations `s`.
pub fn simulate<P: Plant + ?Sized>(
    plant: &P,
    prog: &ControlProgram,
    x0: &[f64],
    s: &[Vec<f64>],
    h: usize,
) -> Result<Simulation> {
    let n = plant.state_dim();
    if x0.len() != n || prog.state_dim() != n || prog.control_dim() != plant.control_dim() {
        return Err(Error::Dimension {
            expected: n,
            found: x0.len(),
        });
    }
    if s.len() < h || s.iter().take(h).any(|v| v.len() != n) {
        return Err(Error::arg("need one perturbation vector per step"));
    }
    let mut states = Vec::with_capacity(h + 1);
    let mut paths = Vec::with_capacity(h);
    let mut controls = Vec::with_capacity(h);
    states.push(x0.to_vec());
    let mut view = vec![0.0; n];
    for (t, st) in s.iter().take(h).enumerate() {
        let x = &states[t];
        for ((v, x), s) in view.iter_mut().zip(x).zip(st) {
            *v = x + s;
        }
        let (path, u) = prog.control(&view).ok_or_else(|| Error::PartitionHole {
            step: t,
            state: view.clone(),
        })?;
        let next = plant.step(x, &u)?;
        states.push(next);
        paths.push(path);
        controls.push(u);
    }
    Ok(Simulation {
        trace: Trace::new(states)?,
        paths,
        controls,
    })
}

/// `max over predicates of Σ_j |w_j|·width_j(bx)`, the natural scale of `ρ`.
pub fn spec_scale(f: &Formula, bx: &IntervalBox) -> f64 {
    match f {
        Formula::Pred { w, .. } => w
            .iter()
            .zip(bx.dims())
            .fold(0.0, |acc, (w, d)| acc + num::abs(*w) * d.width()),
        Formula::Not(g) | Formula::Globally { f: g, .. } | Formula::Finally { f: g, .. } => spec_scale(g, bx),
        Formula::And(a, b) | Formula::Or(a, b) => spec_scale(a, bx).max(spec_scale(b, bx)),
        Formula::Until { lhs, rhs, .. } => spec_scale(lhs, bx).max(spec_scale(rhs, bx)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealConfig {
    /// Geometric cooling factor per evaluation.
    pub cooling: f64,
    /// Proposal standard deviation as a fraction of each variable's range.
    pub step_fraction: f64,
    /// Consecutive rejections that trigger a restart from a fresh point.
    pub restart_after: usize,
    /// Defaults to `0.1 × spec scale`.
    pub initial_temperature: Option<f64>,
    /// Cost per deviating step; defaults to `10 × spec scale`.
    pub penalty: Option<f64>,
    pub log_every: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            cooling: 0.995,
            step_fraction: 0.05,
            restart_after: 1000,
            initial_temperature: None,
            penalty: None,
            log_every: 100,
        }
    }
}

#[derive(Clone, Copy)]
pub struct FalsifyProblem<'a> {
    pub plant: &'a (dyn Plant + Sync),
    pub program: &'a ControlProgram,
    pub formula: &'a Formula,
    /// Path indices the first `prefix.len()` steps must execute.
    pub prefix: &'a [usize],
    pub x0: &'a IntervalBox,
    /// Per-dimension bound on `|s_t|`.
    pub s_max: &'a [f64],
    pub horizon: usize,
    /// Maximum number of simulations.
    pub budget: usize,
    pub seed: u64,
    pub anneal: &'a AnnealConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterExample {
    pub x0: Vec<f64>,
    pub perturbations: Vec<Vec<f64>>,
    pub trace: Vec<Vec<f64>>,
    pub paths: Vec<usize>,
    pub rho: f64,
}

impl CounterExample {
    /// Re-simulates and returns the robustness of the replayed trace.
    pub fn replay<P: Plant + ?Sized>(
        &self,
        plant: &P,
        prog: &ControlProgram,
        formula: &Formula,
    ) -> Result<(Simulation, f64)> {
        let sim = simulate(plant, prog, &self.x0, &self.perturbations, self.perturbations.len())?;
        let rho = stl::robustness(formula, &sim.trace, 0)?;
        Ok((sim, rho))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FalsifyOutcome {
    Found(CounterExample),
    /// Budget exhausted; some candidates followed the prefix.
    NotFound,
    /// Budget exhausted without a single candidate following the prefix.
    InfeasiblePrefix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsifyReport {
    pub outcome: FalsifyOutcome,
    pub simulations: usize,
    /// Best objective so far, every `log_every` evaluations.
    pub log: Vec<f64>,
}

impl FalsifyReport {
    pub fn counterexample(&self) -> Option<&CounterExample> {
        match &self.outcome {
            FalsifyOutcome::Found(c) => Some(c),
            _ => None,
        }
    }
}

struct Search<'a> {
    p: &'a FalsifyProblem<'a>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    penalty: f64,
    n: usize,
}

struct Candidate {
    objective: f64,
    rho: f64,
    deviations: usize,
    sim: Option<Simulation>,
}

impl<'a> Search<'a> {
    fn new(p: &'a FalsifyProblem<'a>) -> Result<Self> {
        let n = p.plant.state_dim();
        if p.x0.dim() != n || p.s_max.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: p.x0.dim(),
            });
        }
        if p.s_max.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::arg("perturbation bounds must be nonnegative"));
        }
        if p.budget == 0 {
            return Err(Error::arg("budget must be >= 1"));
        }
        if p.prefix.len() > p.horizon {
            return Err(Error::arg("prefix is longer than the horizon"));
        }
        let needed = p.formula.needed_steps();
        if needed > p.horizon {
            return Err(Error::Horizon {
                needed,
                t: 0,
                horizon: p.horizon,
            });
        }
        let mut lo: Vec<f64> = p.x0.dims().iter().map(|d| d.lo).collect();
        let mut hi: Vec<f64> = p.x0.dims().iter().map(|d| d.hi).collect();
        for _ in 0..p.horizon {
            lo.extend(p.s_max.iter().map(|s| -s));
            hi.extend(p.s_max.iter().copied());
        }
        let scale = spec_scale(p.formula, &p.program.state_box).max(1e-9);
        let penalty = p.anneal.penalty.unwrap_or(10.0 * scale);
        Ok(Search { p, lo, hi, penalty, n })
    }

    fn random(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| if h > l { rng.random_range(*l..=*h) } else { *l })
            .collect()
    }

    fn split(&self, z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let x0 = z[..self.n].to_vec();
        let s = z[self.n..].chunks(self.n).map(|c| c.to_vec()).collect();
        (x0, s)
    }

    fn evaluate(&self, z: &[f64]) -> Candidate {
        let (x0, s) = self.split(z);
        let sim = match simulate(self.p.plant, self.p.program, &x0, &s, self.p.horizon) {
            Ok(sim) => sim,
            Err(_) => {
                return Candidate {
                    objective: f64::INFINITY,
                    rho: f64::INFINITY,
                    deviations: usize::MAX,
                    sim: None,
                }
            }
        };
        let rho = stl::robustness(self.p.formula, &sim.trace, 0).unwrap_or(f64::INFINITY);
        let deviations = self
            .p
            .prefix
            .iter()
            .zip(&sim.paths)
            .filter(|(a, b)| a != b)
            .count();
        Candidate {
            objective: rho + self.penalty * deviations as f64,
            rho,
            deviations,
            sim: Some(sim),
        }
    }

    fn counterexample(&self, z: &[f64], c: Candidate) -> Option<CounterExample> {
        if c.deviations != 0 || !(c.rho < 0.0) {
            return None;
        }
        let sim = c.sim?;
        let (x0, perturbations) = self.split(z);
        Some(CounterExample {
            x0,
            perturbations,
            trace: sim.trace.states().to_vec(),
            paths: sim.paths,
            rho: c.rho,
        })
    }
}

/// Simulated annealing over `(x_0, s)` minimizing `ρ + penalty·deviations`.
/// Returns on the first candidate with `ρ < 0` that follows the prefix.
pub fn falsify(p: &FalsifyProblem) -> Result<FalsifyReport> {
    let search = Search::new(p)?;
    let scale = spec_scale(p.formula, &p.program.state_box).max(1e-9);
    let t0 = p.anneal.initial_temperature.unwrap_or(0.1 * scale);
    let sd: Vec<f64> = search
        .lo
        .iter()
        .zip(&search.hi)
        .map(|(l, h)| p.anneal.step_fraction * (h - l))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let log_every = p.anneal.log_every.max(1);
    let mut log = Vec::new();
    let mut evals = 0usize;
    let mut best = f64::INFINITY;
    let mut feasible = false;

    let mut z = search.random(&mut rng);
    let c = search.evaluate(&z);
    evals += 1;
    let mut f_cur = c.objective;
    best = best.min(f_cur);
    feasible |= c.deviations == 0;
    if let Some(cx) = search.counterexample(&z, c) {
        log.push(best);
        return Ok(FalsifyReport {
            outcome: FalsifyOutcome::Found(cx),
            simulations: evals,
            log,
        });
    }
    if evals % log_every == 0 {
        log.push(best);
    }
    let mut temp = t0;
    let mut rejects = 0usize;
    while evals < p.budget {
        let restart = rejects >= p.anneal.restart_after;
        let cand: Vec<f64> = if restart {
            rejects = 0;
            temp = t0;
            search.random(&mut rng)
        } else {
            z.iter()
                .zip(&sd)
                .zip(search.lo.iter().zip(&search.hi))
                .map(|((v, s), (l, h))| {
                    if *s > 0.0 {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        (v + s * g).clamp(*l, *h)
                    } else {
                        *v
                    }
                })
                .collect()
        };
        let c = search.evaluate(&cand);
        evals += 1;
        best = best.min(c.objective);
        feasible |= c.deviations == 0;
        let f_new = c.objective;
        if let Some(cx) = search.counterexample(&cand, c) {
            log.push(best);
            return Ok(FalsifyReport {
                outcome: FalsifyOutcome::Found(cx),
                simulations: evals,
                log,
            });
        }
        let accept = restart
            || f_new <= f_cur
            || (temp > 0.0 && f_new.is_finite() && rng.random::<f64>() < num::exp(-(f_new - f_cur) / temp));
        if accept {
            z = cand;
            f_cur = f_new;
            if !restart {
                rejects = 0;
            }
        } else {
            rejects += 1;
        }
        temp *= p.anneal.cooling;
        if evals % log_every == 0 {
            log.push(best);
        }
    }
    Ok(FalsifyReport {
        outcome: if feasible {
            FalsifyOutcome::NotFound
        } else {
            FalsifyOutcome::InfeasiblePrefix
        },
        simulations: evals,
        log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomSearchReport {
    pub samples: usize,
    /// Samples that followed the prefix.
    pub feasible: usize,
    pub violations: usize,
    /// Smallest robustness among samples that followed the prefix.
    pub min_rho: f64,
    pub witness: Option<CounterExample>,
}

/// Uniform random sampling of `(x_0, s)`; the brute-force reference for
/// [`falsify`]. Ignores `p.budget`.
pub fn random_search(p: &FalsifyProblem, samples: usize) -> Result<RandomSearchReport> {
    let search = Search::new(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut rep = RandomSearchReport {
        samples,
        feasible: 0,
        violations: 0,
        min_rho: f64::INFINITY,
        witness: None,
    };
    for _ in 0..samples {
        let z = search.random(&mut rng);
        let c = search.evaluate(&z);
        if c.deviations != 0 {
            continue;
        }
        rep.feasible += 1;
        rep.min_rho = rep.min_rho.min(c.rho);
        if c.rho < 0.0 {
            rep.violations += 1;
            if rep.witness.is_none() {
                rep.witness = search.counterexample(&z, c);
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRun {
    pub prefix: Vec<usize>,
    pub seed: u64,
    pub report: FalsifyReport,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CampaignReport {
    pub runs: Vec<CampaignRun>,
    pub total_simulations: usize,
}

impl CampaignReport {
    pub fn from_runs(runs: Vec<CampaignRun>) -> Self {
        let total_simulations = runs.iter().map(|r| r.report.simulations).sum();
        CampaignReport {
            runs,
            total_simulations,
        }
    }

    pub fn counterexamples(&self) -> impl Iterator<Item = (&[usize], &CounterExample)> {
        self.runs
            .iter()
            .filter_map(|r| r.report.counterexample().map(|c| (r.prefix.as_slice(), c)))
    }

    pub fn found(&self) -> usize {
        self.counterexamples().count()
    }
}

/// Seed of the run on `prefix`, independent of campaign order.
pub fn prefix_seed(seed: u64, prefix: &[usize]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in prefix {
        h = (h ^ p as u64 ^ 0xa5).wrapping_mul(0x0100_0000_01b3).rotate_left(29);
    }
    h
}

/// One falsification run per prefix, in order, using `template` for
/// everything except the prefix and seed.
pub fn run_campaign(prefixes: &[Vec<usize>], template: &FalsifyProblem) -> Result<CampaignReport> {
    let mut runs = Vec::with_capacity(prefixes.len());
    for prefix in prefixes {
        runs.push(run_one(prefix, template)?);
    }
    Ok(CampaignReport::from_runs(runs))
}

pub fn run_one(prefix: &[usize], template: &FalsifyProblem) -> Result<CampaignRun> {
    let seed = prefix_seed(template.seed, prefix);
    let p = FalsifyProblem {
        prefix,
        seed,
        ..*template
    };
    Ok(CampaignRun {
        prefix: prefix.to_vec(),
        seed,
        report: falsify(&p)?,
    })
}

/// Prefixes the guided campaign falsifies: Unsafe first, then Uncertain.
pub fn campaign_prefixes(exploration: &ExplorationResult) -> Vec<Vec<usize>> {
    exploration
        .unsafe_
        .iter()
        .chain(&exploration.uncertain)
        .cloned()
        .collect()
}

pub fn guided_campaign(exploration: &ExplorationResult, template: &FalsifyProblem) -> Result<CampaignReport> {
    run_campaign(&campaign_prefixes(exploration), template)
}

/// Every length-`h` sequence over `paths`, in lexicographic order.
pub fn all_leaf_prefixes(paths: &[usize], h: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..h {
        out = out
            .into_iter()
            .flat_map(|p| {
                paths.iter().map(move |&i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

/// Falsifies every leaf prefix with the template's per-prefix budget.
pub fn exhaustive_campaign(paths: &[usize], template: &FalsifyProblem) -> Result<CampaignReport> {
    run_campaign(&all_leaf_prefixes(paths, template.horizon), template)
}
