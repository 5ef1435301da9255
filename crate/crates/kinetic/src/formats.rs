//! JSON documents for every artifact, and CSV exports.
//!
//! Each document carries `format_version`; readers reject other versions.
//! Parse errors report the file, line and column.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use kinetic_core::affine::{self, AffineExpr};
use kinetic_core::deepbern::{Activation, AffineLayer, Layer, TrainReport};
use kinetic_core::explorer::{Classification, Counters, ExplorationResult, NodeRecord};
use kinetic_core::falsify::{CampaignReport, FalsifyOutcome, Simulation};
use kinetic_core::progmodel::{ControlProgram, ControlRangeTable, Guard, PathSpec};
use kinetic_core::stl::CompiledStlNet;
use kinetic_core::{BernsteinPoly, DeepBernNet, Interval, IntervalBox};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

fn bounds(dims: &[Interval]) -> Vec<[f64; 2]> {
    dims.iter().map(|d| [d.lo, d.hi]).collect()
}

fn intervals(b: &[[f64; 2]]) -> kinetic_core::Result<Vec<Interval>> {
    b.iter().map(|[lo, hi]| Interval::new(*lo, *hi)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyDoc {
    pub domain: [f64; 2],
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationDoc {
    Identity,
    Bernstein { polys: Vec<PolyDoc> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: ActivationDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetDoc {
    pub format_version: u32,
    #[serde(default)]
    pub input_names: Vec<String>,
    #[serde(default)]
    pub output_names: Vec<String>,
    pub input_domain: Vec<[f64; 2]>,
    pub eps_bar: f64,
    pub domain_margin: f64,
    pub layers: Vec<LayerDoc>,
}

impl NetDoc {
    pub fn from_net(net: &DeepBernNet, input_names: &[String], output_names: &[String]) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerDoc {
                in_dim: l.affine.in_dim,
                out_dim: l.affine.out_dim,
                weights: l.affine.weights.clone(),
                bias: l.affine.bias.clone(),
                activation: match &l.activation {
                    Activation::Identity => ActivationDoc::Identity,
                    Activation::Bernstein(ps) => ActivationDoc::Bernstein {
                        polys: ps
                            .iter()
                            .map(|p| PolyDoc {
                                domain: [p.domain().lo, p.domain().hi],
                                coeffs: p.coeffs().to_vec(),
                            })
                            .collect(),
                    },
                },
            })
            .collect();
        NetDoc {
            format_version: FORMAT_VERSION,
            input_names: input_names.to_vec(),
            output_names: output_names.to_vec(),
            input_domain: bounds(net.input_domain()),
            eps_bar: net.eps_bar(),
            domain_margin: net.domain_margin(),
            layers,
        }
    }

    pub fn to_net(&self) -> kinetic_core::Result<DeepBernNet> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let affine = AffineLayer::new(l.in_dim, l.out_dim, l.weights.clone(), l.bias.clone())?;
            let activation = match &l.activation {
                ActivationDoc::Identity => Activation::Identity,
                ActivationDoc::Bernstein { polys } => Activation::Bernstein(
                    polys
                        .iter()
                        .map(|p| {
                            BernsteinPoly::new(Interval::new(p.domain[0], p.domain[1])?, p.coeffs.clone())
                        })
                        .collect::<kinetic_core::Result<_>>()?,
                ),
            };
            layers.push(Layer { affine, activation });
        }
        DeepBernNet::new(
            intervals(&self.input_domain)?,
            layers,
            self.eps_bar,
            self.domain_margin,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReportDoc {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub train_samples: usize,
    pub heldout_samples: usize,
    pub epoch_losses: Vec<f64>,
    pub best_so_far: Vec<f64>,
    pub heldout_mse: f64,
    pub train_mse: f64,
    pub wall_time_s: Option<f64>,
}

impl TrainReportDoc {
    pub fn new(config: serde_json::Value, r: &TrainReport, wall_time_s: Option<f64>) -> Self {
        TrainReportDoc {
            format_version: FORMAT_VERSION,
            config,
            train_samples: r.train_samples,
            heldout_samples: r.heldout_samples,
            epoch_losses: r.epoch_losses.clone(),
            best_so_far: r.best_so_far.clone(),
            heldout_mse: r.heldout_mse,
            train_mse: r.train_mse,
            wall_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledSpecDoc {
    pub format_version: u32,
    pub formula: String,
    pub signals: Vec<String>,
    pub horizon: usize,
    pub state_dim: usize,
    pub degree: usize,
    pub gadget_domain: f64,
    pub d_nest: usize,
    pub gadgets: usize,
    pub e_abs: f64,
    pub err_lo: f64,
    pub err_hi: f64,
    pub net: NetDoc,
}

impl CompiledSpecDoc {
    pub fn new(c: &CompiledStlNet, formula: String, signals: &[String]) -> Self {
        CompiledSpecDoc {
            format_version: FORMAT_VERSION,
            formula,
            signals: signals.to_vec(),
            horizon: c.horizon,
            state_dim: c.state_dim,
            degree: c.degree,
            gadget_domain: c.gadget_domain,
            d_nest: c.d_nest,
            gadgets: c.gadgets,
            e_abs: c.e_abs,
            err_lo: c.err_lo,
            err_hi: c.err_hi,
            net: NetDoc::from_net(&c.net, &[], &["rho".to_string()]),
        }
    }

    pub fn to_compiled(&self) -> kinetic_core::Result<CompiledStlNet> {
        Ok(CompiledStlNet {
            net: self.net.to_net()?,
            horizon: self.horizon,
            state_dim: self.state_dim,
            degree: self.degree,
            gadget_domain: self.gadget_domain,
            d_nest: self.d_nest,
            gadgets: self.gadgets,
            e_abs: self.e_abs,
            err_lo: self.err_lo,
            err_hi: self.err_hi,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDoc {
    /// One comparison (or `&&`-conjunction) per entry; empty means `true`.
    pub guard: Vec<String>,
    /// Affine law per control name.
    pub output: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramDoc {
    pub format_version: u32,
    pub signals: Vec<String>,
    pub state_box: Vec<[f64; 2]>,
    pub controls: Vec<String>,
    pub paths: Vec<PathDoc>,
}

impl ProgramDoc {
    pub fn from_program(p: &ControlProgram) -> Self {
        let paths = p
            .paths
            .iter()
            .map(|path| PathDoc {
                guard: path
                    .guard
                    .constraints
                    .iter()
                    .map(|c| Guard::new(vec![c.clone()]).to_text(&p.signals))
                    .collect(),
                output: p
                    .controls
                    .iter()
                    .zip(&path.outputs)
                    .map(|(name, e)| (name.clone(), e.to_text(&p.signals)))
                    .collect(),
            })
            .collect();
        ProgramDoc {
            format_version: FORMAT_VERSION,
            signals: p.signals.clone(),
            state_box: bounds(p.state_box.dims()),
            controls: p.controls.clone(),
            paths,
        }
    }

    /// Builds the program; errors name the offending path and entry.
    pub fn to_program(&self) -> std::result::Result<ControlProgram, String> {
        let mut paths = Vec::with_capacity(self.paths.len());
        for (i, p) in self.paths.iter().enumerate() {
            let mut guard = Guard::default();
            for (j, g) in p.guard.iter().enumerate() {
                let parsed = Guard::parse(g, &self.signals).map_err(|e| format!("paths[{i}].guard[{j}]: {e}"))?;
                guard.constraints.extend(parsed.constraints);
            }
            let mut outputs: Vec<AffineExpr> = Vec::with_capacity(self.controls.len());
            for c in &self.controls {
                let text = p
                    .output
                    .get(c)
                    .ok_or_else(|| format!("paths[{i}].output: missing control `{c}`"))?;
                outputs.push(
                    affine::parse_affine(text, &self.signals).map_err(|e| format!("paths[{i}].output.{c}: {e}"))?,
                );
            }
            if let Some(extra) = p.output.keys().find(|k| !self.controls.contains(k)) {
                return Err(format!("paths[{i}].output: unknown control `{extra}`"));
            }
            paths.push(PathSpec { guard, outputs });
        }
        let state_box = IntervalBox::new(intervals(&self.state_box).map_err(|e| format!("state_box: {e}"))?);
        ControlProgram::new(self.signals.clone(), self.controls.clone(), state_box, paths).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRowDoc {
    pub path: usize,
    pub range: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeTableDoc {
    pub format_version: u32,
    pub controls: Vec<String>,
    pub rows: Vec<RangeRowDoc>,
    pub dropped: Vec<usize>,
}

impl RangeTableDoc {
    pub fn new(t: &ControlRangeTable, controls: &[String]) -> Self {
        RangeTableDoc {
            format_version: FORMAT_VERSION,
            controls: controls.to_vec(),
            rows: t
                .rows
                .iter()
                .map(|r| RangeRowDoc {
                    path: r.path,
                    range: bounds(r.range.dims()),
                })
                .collect(),
            dropped: t.dropped.clone(),
        }
    }

    pub fn to_table(&self) -> kinetic_core::Result<ControlRangeTable> {
        Ok(ControlRangeTable {
            rows: self
                .rows
                .iter()
                .map(|r| {
                    Ok(kinetic_core::progmodel::RangeRow {
                        path: r.path,
                        range: IntervalBox::new(intervals(&r.range)?),
                    })
                })
                .collect::<kinetic_core::Result<_>>()?,
            dropped: self.dropped.clone(),
        })
    }
}

fn class_name(c: Classification) -> &'static str {
    match c {
        Classification::Safe => "safe",
        Classification::Unsafe => "unsafe",
        Classification::Uncertain => "uncertain",
        Classification::Unreachable => "unreachable",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub prefix: Vec<usize>,
    pub rho_min: Option<f64>,
    pub rho_max: Option<f64>,
    pub classification: String,
    pub expanded: bool,
}

impl From<&NodeRecord> for NodeDoc {
    fn from(n: &NodeRecord) -> Self {
        NodeDoc {
            prefix: n.prefix.clone(),
            rho_min: n.bounds.map(|b| b.rho_min),
            rho_max: n.bounds.map(|b| b.rho_max),
            classification: class_name(n.class).to_string(),
            expanded: n.expanded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationCounters {
    pub visited: usize,
    pub pruned: usize,
    pub reach_calls: usize,
    pub escapes: usize,
    /// `k^H`.
    pub leaves: f64,
    /// `Σ_{l=1..H} k^l`.
    pub max_nodes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationDoc {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub horizon: usize,
    pub branches: usize,
    pub safe: Vec<Vec<usize>>,
    #[serde(rename = "unsafe")]
    pub unsafe_: Vec<Vec<usize>>,
    pub uncertain: Vec<Vec<usize>>,
    pub unreachable: Vec<Vec<usize>>,
    pub nodes: Vec<NodeDoc>,
    pub counters: ExplorationCounters,
    pub wall_time_s: Option<f64>,
}

impl ExplorationDoc {
    pub fn new(
        config: serde_json::Value,
        horizon: usize,
        branches: usize,
        r: &ExplorationResult,
        wall_time_s: Option<f64>,
    ) -> Self {
        let k = branches as f64;
        ExplorationDoc {
            format_version: FORMAT_VERSION,
            config,
            horizon,
            branches,
            safe: r.safe.clone(),
            unsafe_: r.unsafe_.clone(),
            uncertain: r.uncertain.clone(),
            unreachable: r.unreachable.clone(),
            nodes: r.nodes.iter().map(NodeDoc::from).collect(),
            counters: ExplorationCounters {
                visited: r.counters.visited,
                pruned: r.counters.pruned,
                reach_calls: r.counters.reach_calls,
                escapes: r.counters.escapes,
                leaves: k.powi(horizon as i32),
                max_nodes: (1..=horizon).map(|l| k.powi(l as i32)).sum(),
            },
            wall_time_s,
        }
    }

    /// The prefix sets and counters; per-node bounds are not restored.
    pub fn to_result(&self) -> ExplorationResult {
        ExplorationResult {
            safe: self.safe.clone(),
            unsafe_: self.unsafe_.clone(),
            uncertain: self.uncertain.clone(),
            unreachable: self.unreachable.clone(),
            nodes: Vec::new(),
            counters: Counters {
                visited: self.counters.visited,
                pruned: self.counters.pruned,
                reach_calls: self.counters.reach_calls,
                escapes: self.counters.escapes,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRunDoc {
    pub prefix: Vec<usize>,
    pub outcome: String,
    pub found: bool,
    pub rho: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub s: Option<Vec<Vec<f64>>>,
    pub paths: Option<Vec<usize>>,
    pub trace: Option<Vec<Vec<f64>>>,
    pub simulations_used: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignTotals {
    pub runs: usize,
    pub found: usize,
    pub simulations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignDoc {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub runs: Vec<CampaignRunDoc>,
    pub totals: CampaignTotals,
    pub seed: u64,
    pub wall_time_s: Option<f64>,
}

impl CampaignDoc {
    pub fn new(config: serde_json::Value, seed: u64, c: &CampaignReport, wall_time_s: Option<f64>) -> Self {
        let runs = c
            .runs
            .iter()
            .map(|r| {
                let cx = r.report.counterexample();
                CampaignRunDoc {
                    prefix: r.prefix.clone(),
                    outcome: match r.report.outcome {
                        FalsifyOutcome::Found(_) => "found",
                        FalsifyOutcome::NotFound => "not_found",
                        FalsifyOutcome::InfeasiblePrefix => "infeasible_prefix",
                    }
                    .to_string(),
                    found: cx.is_some(),
                    rho: cx.map(|c| c.rho),
                    x0: cx.map(|c| c.x0.clone()),
                    s: cx.map(|c| c.perturbations.clone()),
                    paths: cx.map(|c| c.paths.clone()),
                    trace: cx.map(|c| c.trace.clone()),
                    simulations_used: r.report.simulations,
                    seed: r.seed,
                }
            })
            .collect();
        CampaignDoc {
            format_version: FORMAT_VERSION,
            config,
            runs,
            totals: CampaignTotals {
                runs: c.runs.len(),
                found: c.found(),
                simulations: c.total_simulations,
            },
            seed,
            wall_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub train_s: f64,
    pub compile_s: f64,
    pub explore_s: f64,
    pub falsify_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub train: TrainReportDoc,
    pub exploration: ExplorationDoc,
    pub campaign: CampaignDoc,
    pub timing: Option<Timing>,
}

#[derive(Deserialize)]
struct Probe {
    format_version: Option<u32>,
}

fn json_error(path: &Path, e: &serde_json::Error) -> Error {
    Error::Json {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses a versioned document from text; `path` is only used in errors.
pub fn from_json_str<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let probe: Probe = serde_json::from_str(text).map_err(|e| json_error(path, &e))?;
    match probe.format_version {
        Some(FORMAT_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found,
                expected: FORMAT_VERSION,
            })
        }
        None => {
            return Err(Error::Invalid {
                path: path.to_path_buf(),
                message: "missing format_version".into(),
            })
        }
    }
    serde_json::from_str(text).map_err(|e| json_error(path, &e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json_str(&text, path)
}

pub fn to_json_string<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    write_text(path, &to_json_string(doc))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_program(path: &Path) -> Result<ControlProgram> {
    let doc: ProgramDoc = read_json(path)?;
    doc.to_program().map_err(|message| Error::Invalid {
        path: path.to_path_buf(),
        message,
    })
}

/// CSV with columns `time`, the states, the controls and `path`. The final
/// state has empty control and path cells.
pub fn trace_csv(signals: &[String], controls: &[String], sim: &Simulation) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time".to_string()];
    header.extend(signals.iter().cloned());
    header.extend(controls.iter().cloned());
    header.push("path".into());
    w.write_record(&header)?;
    for (t, x) in sim.trace.states().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| format!("{v:?}")));
        match (sim.controls.get(t), sim.paths.get(t)) {
            (Some(u), Some(p)) => {
                row.extend(u.iter().map(|v| format!("{v:?}")));
                row.push(p.to_string());
            }
            _ => row.extend(std::iter::repeat_n(String::new(), controls.len() + 1)),
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
