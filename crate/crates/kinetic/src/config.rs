//! Pipeline configuration: built-in benchmark presets overridden by a TOML
//! file. The fully resolved configuration is echoed into every report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kinetic_core::falsify::{AnnealConfig, PlantModel};
use kinetic_core::fixtures::{self, SurrogateSetup};
use kinetic_core::progmodel::ControlProgram;
use kinetic_core::stl::{self, Formula};
use kinetic_core::{Interval, IntervalBox, TrainConfig};

use crate::error::{Error, Result};
use crate::formats;

pub const BENCHMARKS: [&str; 4] = ["watertank", "engine-v1", "engine-v2", "engine-v3"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    Watertank {
        dt: f64,
        q_in: f64,
        q_out: f64,
    },
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

impl From<&PlantModel> for PlantConfig {
    fn from(p: &PlantModel) -> Self {
        match *p {
            PlantModel::WaterTank { dt, q_in, q_out } => PlantConfig::Watertank { dt, q_in, q_out },
            PlantModel::Engine {
                dt,
                alpha,
                beta,
                gamma,
                zeta,
                rpm_max,
                speed_max,
            } => PlantConfig::Engine {
                dt,
                alpha,
                beta,
                gamma,
                zeta,
                rpm_max,
                speed_max,
            },
        }
    }
}

impl From<&PlantConfig> for PlantModel {
    fn from(p: &PlantConfig) -> Self {
        match *p {
            PlantConfig::Watertank { dt, q_in, q_out } => PlantModel::WaterTank { dt, q_in, q_out },
            PlantConfig::Engine {
                dt,
                alpha,
                beta,
                gamma,
                zeta,
                rpm_max,
                speed_max,
            } => PlantModel::Engine {
                dt,
                alpha,
                beta,
                gamma,
                zeta,
                rpm_max,
                speed_max,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StlSection {
    pub degree: usize,
    /// Gadget half-width `D`; defaults to four times the predicate bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gadget_domain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub arch: Vec<usize>,
    pub degree: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub heldout_fraction: f64,
    pub domain_margin: f64,
    pub init_noise: f64,
    pub residual: Vec<usize>,
    pub seed: u64,
    pub samples: usize,
    pub data_seed: u64,
    pub state_domain: Vec<[f64; 2]>,
    pub control_domain: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalsifySection {
    /// Simulations per prefix.
    pub budget: usize,
    pub s_max: Vec<f64>,
    pub seed: u64,
    pub cooling: f64,
    pub step_fraction: f64,
    pub restart_after: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    pub log_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub benchmark: String,
    /// Program document replacing the benchmark's built-in program.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_file: Option<PathBuf>,
    /// STL text; windows beyond `horizon` are truncated.
    pub spec: String,
    pub plant: PlantConfig,
    pub x0: Vec<[f64; 2]>,
    pub horizon: usize,
    pub eps_bar: f64,
    pub stl: StlSection,
    pub train: TrainSection,
    pub falsify: FalsifySection,
}

fn bounds(b: &IntervalBox) -> Vec<[f64; 2]> {
    b.dims().iter().map(|d| [d.lo, d.hi]).collect()
}

fn to_box(b: &[[f64; 2]], what: &str) -> Result<IntervalBox> {
    b.iter()
        .map(|[lo, hi]| Interval::new(*lo, *hi).map_err(|e| Error::Config(format!("{what}: {e}"))))
        .collect::<Result<Vec<_>>>()
        .map(IntervalBox::new)
}

fn train_section(s: &SurrogateSetup) -> TrainSection {
    let t = &s.train;
    TrainSection {
        arch: s.arch.clone(),
        degree: s.degree,
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        clip_norm: t.clip_norm,
        heldout_fraction: t.heldout_fraction,
        domain_margin: t.domain_margin,
        init_noise: t.init_noise,
        residual: t.residual.clone(),
        seed: t.seed,
        samples: s.samples,
        data_seed: s.data_seed,
        state_domain: bounds(&s.state_domain),
        control_domain: bounds(&s.control_domain),
    }
}

fn falsify_section(state_box: &IntervalBox, budget: usize, seed: u64) -> FalsifySection {
    let a = AnnealConfig::default();
    FalsifySection {
        budget,
        s_max: fixtures::default_s_max(state_box),
        seed,
        cooling: a.cooling,
        step_fraction: a.step_fraction,
        restart_after: a.restart_after,
        initial_temperature: a.initial_temperature,
        penalty: a.penalty,
        log_every: a.log_every,
    }
}

impl PipelineConfig {
    /// Built-in benchmark configuration.
    pub fn preset(id: &str) -> Result<Self> {
        match id {
            "watertank" => Ok(PipelineConfig {
                benchmark: id.into(),
                program_file: None,
                spec: fixtures::WATERTANK_SPEC.into(),
                plant: PlantConfig::from(&PlantModel::watertank()),
                x0: bounds(&fixtures::watertank_x0()),
                horizon: 4,
                eps_bar: 0.0,
                stl: StlSection {
                    degree: 64,
                    gadget_domain: None,
                },
                train: train_section(&fixtures::watertank_surrogate()),
                falsify: falsify_section(&fixtures::watertank_state_box(), 200, 3),
            }),
            "engine-v1" | "engine-v2" | "engine-v3" => Ok(PipelineConfig {
                benchmark: id.into(),
                program_file: None,
                spec: fixtures::ENGINE_SPEC.into(),
                plant: PlantConfig::from(&PlantModel::engine()),
                x0: bounds(&fixtures::engine_x0()),
                horizon: 10,
                eps_bar: 0.0,
                stl: StlSection {
                    degree: 64,
                    gadget_domain: None,
                },
                train: train_section(&fixtures::engine_surrogate()),
                falsify: falsify_section(&fixtures::engine_state_box(), 5000, 3),
            }),
            other => Err(Error::Config(format!(
                "unknown benchmark `{other}` (known: {})",
                BENCHMARKS.join(", ")
            ))),
        }
    }

    /// Reads a TOML file. When it names a known `benchmark`, the file only
    /// needs the keys it overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|message| Error::Toml {
            path: path.to_path_buf(),
            message,
        })?;
        if let (Some(file), Some(dir)) = (&cfg.program_file, path.parent()) {
            if file.is_relative() {
                cfg.program_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let user: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        let merged = match user.get("benchmark").and_then(|v| v.as_str()) {
            Some(id) if BENCHMARKS.contains(&id) => {
                let base = Self::preset(id).map_err(|e| e.to_string())?;
                let mut table = toml::Table::try_from(&base).map_err(|e| e.to_string())?;
                merge(&mut table, user);
                table
            }
            _ => user,
        };
        merged.try_into().map_err(|e: toml::de::Error| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Sets every seed (training, data and falsification).
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.train.data_seed = seed;
        self.falsify.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if !(self.eps_bar >= 0.0) {
            return Err(Error::Config("eps_bar must be >= 0".into()));
        }
        if self.falsify.budget == 0 {
            return Err(Error::Config("falsify.budget must be >= 1".into()));
        }
        if let Some(f) = &self.program_file {
            if !f.exists() {
                return Err(Error::Config(format!("program_file {} does not exist", f.display())));
            }
        }
        Ok(())
    }

    pub fn program(&self) -> Result<ControlProgram> {
        if let Some(f) = &self.program_file {
            return formats::read_program(f);
        }
        Ok(match self.benchmark.as_str() {
            "watertank" => fixtures::watertank_program(),
            "engine-v1" => fixtures::engine_program(1)?,
            "engine-v2" => fixtures::engine_program(2)?,
            "engine-v3" => fixtures::engine_program(3)?,
            other => {
                return Err(Error::Config(format!(
                    "benchmark `{other}` has no built-in program; set program_file"
                )))
            }
        })
    }

    /// The spec truncated to the horizon.
    pub fn formula(&self, signals: &[String]) -> Result<Formula> {
        let f = stl::parse(&self.spec, signals)?;
        Ok(f.truncated(self.horizon))
    }

    pub fn plant(&self) -> PlantModel {
        PlantModel::from(&self.plant)
    }

    pub fn x0(&self) -> Result<IntervalBox> {
        to_box(&self.x0, "x0")
    }

    pub fn surrogate(&self) -> Result<SurrogateSetup> {
        let t = &self.train;
        Ok(SurrogateSetup {
            state_domain: to_box(&t.state_domain, "train.state_domain")?,
            control_domain: to_box(&t.control_domain, "train.control_domain")?,
            samples: t.samples,
            data_seed: t.data_seed,
            arch: t.arch.clone(),
            degree: t.degree,
            train: TrainConfig {
                epochs: t.epochs,
                batch_size: t.batch_size,
                learning_rate: t.learning_rate,
                clip_norm: t.clip_norm,
                heldout_fraction: t.heldout_fraction,
                domain_margin: t.domain_margin,
                init_noise: t.init_noise,
                input_domain: None,
                eps_bar: self.eps_bar,
                residual: t.residual.clone(),
                seed: t.seed,
            },
        })
    }

    pub fn anneal(&self) -> AnnealConfig {
        let f = &self.falsify;
        AnnealConfig {
            cooling: f.cooling,
            step_fraction: f.step_fraction,
            restart_after: f.restart_after,
            initial_temperature: f.initial_temperature,
            penalty: f.penalty,
            log_every: f.log_every,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
