//! The stages `train → compile-stl → explore → falsify → report` over an
//! output directory. Each stage reads its inputs from and writes its
//! artifacts (plus `<stage>.log`) to that directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kinetic_core::explorer::Explorer;
use kinetic_core::falsify::{self, FalsifyProblem};
use kinetic_core::progmodel;
use kinetic_core::stl::{compile, CompileConfig, CompiledStlNet};
use kinetic_core::DeepBernNet;

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::formats::{
    self, CampaignDoc, CompiledSpecDoc, ExplorationDoc, NetDoc, RangeTableDoc, RunReport, Timing, TrainReportDoc,
    FORMAT_VERSION,
};
use crate::parallel;

#[derive(Debug, Clone)]
pub struct Options {
    pub out: PathBuf,
    pub jobs: usize,
    /// Omit wall-clock times so reports are byte-identical across runs.
    pub deterministic: bool,
}

impl Options {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Options {
            out: out.into(),
            jobs: 1,
            deterministic: false,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn net(&self) -> PathBuf {
        self.path("net.json")
    }
    pub fn train_report(&self) -> PathBuf {
        self.path("train_report.json")
    }
    pub fn spec_net(&self) -> PathBuf {
        self.path("spec_net.json")
    }
    pub fn ranges(&self) -> PathBuf {
        self.path("ranges.json")
    }
    pub fn exploration(&self) -> PathBuf {
        self.path("exploration.json")
    }
    pub fn campaign(&self) -> PathBuf {
        self.path("campaign.json")
    }
    pub fn run_report(&self) -> PathBuf {
        self.path("run_report.json")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.path("report")
    }

    fn elapsed(&self, t: Instant) -> Option<f64> {
        (!self.deterministic).then(|| t.elapsed().as_secs_f64())
    }

    fn log(&self, stage: &str, text: &str) -> Result<()> {
        formats::write_text(&self.path(&format!("{stage}.log")), text)
    }
}

fn secs(v: Option<f64>) -> String {
    v.map(|s| format!(" in {s:.3}s")).unwrap_or_default()
}

pub fn train(cfg: &PipelineConfig, opts: &Options) -> Result<(DeepBernNet, TrainReportDoc)> {
    cfg.validate()?;
    let prog = cfg.program()?;
    let setup = cfg.surrogate()?;
    let t = Instant::now();
    let (net, report) = setup.train(&cfg.plant(), &prog.signals, &prog.controls)?;
    let wall = opts.elapsed(t);
    let doc = TrainReportDoc::new(cfg.echo(), &report, wall);
    let mut inputs = prog.signals.clone();
    inputs.extend(prog.controls.iter().cloned());
    formats::write_json(&opts.net(), &NetDoc::from_net(&net, &inputs, &prog.signals))?;
    formats::write_json(&opts.train_report(), &doc)?;
    opts.log(
        "train",
        &format!(
            "trained {:?} degree {} on {} samples{}\nheldout_mse {:e}\ntrain_mse {:e}\n",
            cfg.train.arch,
            cfg.train.degree,
            cfg.train.samples,
            secs(wall),
            report.heldout_mse,
            report.train_mse
        ),
    )?;
    Ok((net, doc))
}

/// The robustness net accepts states from the surrogate's state domain, so
/// any reach box the surrogate can process is accepted too.
pub fn compile_stl(cfg: &PipelineConfig, opts: &Options) -> Result<CompiledStlNet> {
    cfg.validate()?;
    let prog = cfg.program()?;
    let f = cfg.formula(&prog.signals)?;
    let setup = cfg.surrogate()?;
    let mut cc = CompileConfig::new(cfg.horizon, setup.state_domain.dims().to_vec());
    cc.degree = cfg.stl.degree;
    cc.gadget_domain = cfg.stl.gadget_domain;
    let t = Instant::now();
    let c = compile(&f, &cc)?;
    let wall = opts.elapsed(t);
    formats::write_json(
        &opts.spec_net(),
        &CompiledSpecDoc::new(&c, f.to_text(&prog.signals), &prog.signals),
    )?;
    opts.log(
        "compile-stl",
        &format!(
            "compiled {}{}\nd_nest {} gadgets {} D {} e_abs {:e} error [{:e}, {:e}]\n",
            f.to_text(&prog.signals),
            secs(wall),
            c.d_nest,
            c.gadgets,
            c.gadget_domain,
            c.e_abs,
            c.err_lo,
            c.err_hi
        ),
    )?;
    Ok(c)
}

pub fn explore(cfg: &PipelineConfig, opts: &Options) -> Result<ExplorationDoc> {
    cfg.validate()?;
    let prog = cfg.program()?;
    let net = formats::read_json::<NetDoc>(&opts.net())?.to_net()?;
    let spec = formats::read_json::<CompiledSpecDoc>(&opts.spec_net())?.to_compiled()?;
    let table = progmodel::build_range_table(&prog)?;
    formats::write_json(&opts.ranges(), &RangeTableDoc::new(&table, &prog.controls))?;
    let explorer = Explorer::new(&net, &spec, &prog, cfg.x0()?, cfg.horizon, cfg.eps_bar)?;
    let t = Instant::now();
    let res = parallel::explore(&explorer, opts.jobs)?;
    let wall = opts.elapsed(t);
    let doc = ExplorationDoc::new(cfg.echo(), cfg.horizon, table.len(), &res, wall);
    formats::write_json(&opts.exploration(), &doc)?;
    let mut log = format!("explored H={} k={}{}\n", cfg.horizon, table.len(), secs(wall));
    for d in &table.dropped {
        let _ = writeln!(log, "warning: path {d} is infeasible within the state box and was dropped");
    }
    let c = &doc.counters;
    let _ = writeln!(
        log,
        "visited {} pruned {} escapes {} safe {} unsafe {} uncertain {} unreachable {}",
        c.visited,
        c.pruned,
        c.escapes,
        doc.safe.len(),
        doc.unsafe_.len(),
        doc.uncertain.len(),
        doc.unreachable.len()
    );
    opts.log("explore", &log)?;
    Ok(doc)
}

pub fn falsify(cfg: &PipelineConfig, opts: &Options) -> Result<CampaignDoc> {
    cfg.validate()?;
    let prog = cfg.program()?;
    let exploration: ExplorationDoc = formats::read_json(&opts.exploration())?;
    let formula = cfg.formula(&prog.signals)?;
    let plant = cfg.plant();
    let x0 = cfg.x0()?;
    let anneal = cfg.anneal();
    let template = FalsifyProblem {
        plant: &plant,
        program: &prog,
        formula: &formula,
        prefix: &[],
        x0: &x0,
        s_max: &cfg.falsify.s_max,
        horizon: cfg.horizon,
        budget: cfg.falsify.budget,
        seed: cfg.falsify.seed,
        anneal: &anneal,
    };
    let prefixes = falsify::campaign_prefixes(&exploration.to_result());
    let t = Instant::now();
    let report = parallel::campaign(&prefixes, &template, opts.jobs)?;
    let wall = opts.elapsed(t);
    let doc = CampaignDoc::new(cfg.echo(), cfg.falsify.seed, &report, wall);
    formats::write_json(&opts.campaign(), &doc)?;
    opts.log(
        "falsify",
        &format!(
            "falsified {} prefixes with {} simulations{}\ncounterexamples {}\n",
            doc.totals.runs,
            doc.totals.simulations,
            secs(wall),
            doc.totals.found
        ),
    )?;
    Ok(doc)
}

fn prefix_text(p: &[usize]) -> String {
    p.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Writes `report/vulnerabilities.csv`, `report/pruning.csv` and one trace
/// CSV per counterexample.
pub fn report(cfg: &PipelineConfig, opts: &Options) -> Result<Vec<PathBuf>> {
    let exploration: ExplorationDoc = formats::read_json(&opts.exploration())?;
    let campaign: CampaignDoc = formats::read_json(&opts.campaign())?;
    let prog = cfg.program()?;
    let dir = opts.report_dir();
    let mut written = Vec::new();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["prefix", "outcome", "rho", "simulations", "seed", "x0"])?;
    for r in &campaign.runs {
        w.write_record([
            prefix_text(&r.prefix),
            r.outcome.clone(),
            num(r.rho),
            r.simulations_used.to_string(),
            r.seed.to_string(),
            r.x0.as_deref().map(|x| format!("{x:?}")).unwrap_or_default(),
        ])?;
    }
    let path = dir.join("vulnerabilities.csv");
    formats::write_text(&path, &String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).unwrap())?;
    written.push(path);

    let c = &exploration.counters;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "horizon",
        "branches",
        "leaves",
        "max_nodes",
        "visited",
        "pruned",
        "safe",
        "unsafe",
        "uncertain",
        "unreachable",
        "escapes",
        "falsifier_runs",
        "falsifier_simulations",
        "counterexamples",
        "visited_over_leaves",
    ])?;
    w.write_record([
        exploration.horizon.to_string(),
        exploration.branches.to_string(),
        c.leaves.to_string(),
        c.max_nodes.to_string(),
        c.visited.to_string(),
        c.pruned.to_string(),
        exploration.safe.len().to_string(),
        exploration.unsafe_.len().to_string(),
        exploration.uncertain.len().to_string(),
        exploration.unreachable.len().to_string(),
        c.escapes.to_string(),
        campaign.totals.runs.to_string(),
        campaign.totals.simulations.to_string(),
        campaign.totals.found.to_string(),
        format!("{:?}", c.visited as f64 / c.leaves),
    ])?;
    let path = dir.join("pruning.csv");
    formats::write_text(&path, &String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).unwrap())?;
    written.push(path);

    let plant = cfg.plant();
    for (i, r) in campaign.runs.iter().filter(|r| r.found).enumerate() {
        let (Some(x0), Some(s)) = (&r.x0, &r.s) else { continue };
        let sim = falsify::simulate(&plant, &prog, x0, s, s.len())?;
        let path = dir.join(format!("counterexample_{i}.csv"));
        formats::write_text(&path, &formats::trace_csv(&prog.signals, &prog.controls, &sim)?)?;
        written.push(path);
    }
    let mut log = String::new();
    for p in &written {
        let _ = writeln!(log, "wrote {}", p.display());
    }
    opts.log("report", &log)?;
    Ok(written)
}

pub struct RunOutcome {
    pub report: RunReport,
    pub counterexamples: usize,
}

/// All stages in order, then `run_report.json`.
pub fn run(cfg: &PipelineConfig, opts: &Options) -> Result<RunOutcome> {
    let t = Instant::now();
    let (_, train_doc) = train(cfg, opts)?;
    let train_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    compile_stl(cfg, opts)?;
    let compile_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let exploration = explore(cfg, opts)?;
    let explore_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let campaign = falsify(cfg, opts)?;
    let falsify_s = t.elapsed().as_secs_f64();
    report(cfg, opts)?;
    let found = campaign.totals.found;
    let report = RunReport {
        format_version: FORMAT_VERSION,
        config: cfg.echo(),
        train: train_doc,
        exploration,
        campaign,
        timing: (!opts.deterministic).then_some(Timing {
            train_s,
            compile_s,
            explore_s,
            falsify_s,
        }),
    };
    formats::write_json(&opts.run_report(), &report)?;
    Ok(RunOutcome {
        report,
        counterexamples: found,
    })
}

/// Whether every upstream artifact of `stage` exists in `dir`.
pub fn missing_inputs(stage: &str, opts: &Options) -> Vec<PathBuf> {
    let need: Vec<PathBuf> = match stage {
        "explore" => vec![opts.net(), opts.spec_net()],
        "falsify" => vec![opts.exploration()],
        "report" => vec![opts.exploration(), opts.campaign()],
        _ => vec![],
    };
    need.into_iter().filter(|p| !Path::new(p).exists()).collect()
}
