use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kinetic::config::PipelineConfig;
use kinetic::pipeline::{self, Options};
use kinetic::{Error, Result};

#[derive(Parser)]
#[command(name = "kinetic", version, about = "Reachability-guided falsification of control programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the surrogate dynamics net.
    Train(Common),
    /// Compile the STL specification into a robustness net.
    CompileStl(Common),
    /// Classify program-path prefixes by reachability.
    Explore(Common),
    /// Run the falsifier on Unsafe and Uncertain prefixes.
    Falsify(Common),
    /// Write CSV summaries from the exploration and campaign reports.
    Report(Common),
    /// All stages in order.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in benchmark used when no config file is given.
    #[arg(long, default_value = "watertank")]
    benchmark: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Leave wall-clock times out of the reports.
    #[arg(long)]
    deterministic: bool,
}

impl Common {
    fn load(&self, stage: &str) -> Result<(PipelineConfig, Options)> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::preset(&self.benchmark)?,
        };
        if let Some(s) = self.seed {
            cfg.set_seed(s);
        }
        let opts = Options {
            out: self.out.clone(),
            jobs: self.jobs.max(1),
            deterministic: self.deterministic,
        };
        if let Some(p) = pipeline::missing_inputs(stage, &opts).into_iter().next() {
            return Err(Error::MissingArtifact(p));
        }
        Ok((cfg, opts))
    }
}

/// Number of counterexamples found, for the exit code.
fn execute(cmd: Command) -> Result<usize> {
    match cmd {
        Command::Train(c) => {
            let (cfg, o) = c.load("train")?;
            let (_, doc) = pipeline::train(&cfg, &o)?;
            println!("heldout mse {:e}", doc.heldout_mse);
            Ok(0)
        }
        Command::CompileStl(c) => {
            let (cfg, o) = c.load("compile-stl")?;
            let net = pipeline::compile_stl(&cfg, &o)?;
            println!("d_nest {} certified error {:e}", net.d_nest, net.nested_bound());
            Ok(0)
        }
        Command::Explore(c) => {
            let (cfg, o) = c.load("explore")?;
            let d = pipeline::explore(&cfg, &o)?;
            println!(
                "visited {} of {} nodes: {} safe, {} unsafe, {} uncertain, {} unreachable",
                d.counters.visited,
                d.counters.max_nodes,
                d.safe.len(),
                d.unsafe_.len(),
                d.uncertain.len(),
                d.unreachable.len()
            );
            Ok(0)
        }
        Command::Falsify(c) => {
            let (cfg, o) = c.load("falsify")?;
            let d = pipeline::falsify(&cfg, &o)?;
            println!(
                "{} runs, {} simulations, {} counterexamples",
                d.totals.runs, d.totals.simulations, d.totals.found
            );
            Ok(d.totals.found)
        }
        Command::Report(c) => {
            let (cfg, o) = c.load("report")?;
            for p in pipeline::report(&cfg, &o)? {
                println!("{}", p.display());
            }
            let campaign: kinetic::formats::CampaignDoc = kinetic::formats::read_json(&o.campaign())?;
            Ok(campaign.totals.found)
        }
        Command::Run(c) => {
            let (cfg, o) = c.load("run")?;
            let r = pipeline::run(&cfg, &o)?;
            println!("wrote {}", o.run_report().display());
            println!("{} counterexamples", r.counterexamples);
            Ok(r.counterexamples)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
