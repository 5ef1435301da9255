//! Benchmark fixtures: the water-tank and engine control programs, their
//! specifications, initial sets, plants and surrogate training setups.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affine;
use crate::bernstein::Interval;
use crate::deepbern::{self, Dataset, DeepBernNet, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::falsify::{Plant, PlantModel};
use crate::progmodel::{ControlProgram, Guard, PathSpec};
use crate::reach::IntervalBox;
use crate::stl::{self, Formula};

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn iv(lo: f64, hi: f64) -> Interval {
    Interval { lo, hi }
}

/// Builds a program from `(guard, [output per control])` text rows.
pub fn program_from_text(
    signals: &[&str],
    controls: &[&str],
    state_box: IntervalBox,
    rows: &[(&str, &[&str])],
) -> Result<ControlProgram> {
    let s = names(signals);
    let mut paths = Vec::with_capacity(rows.len());
    for (guard, outs) in rows {
        paths.push(PathSpec {
            guard: Guard::parse(guard, &s)?,
            outputs: outs
                .iter()
                .map(|o| affine::parse_affine(o, &s))
                .collect::<Result<_>>()?,
        });
    }
    ControlProgram::new(s, names(controls), state_box, paths)
}

pub const WATERTANK_SIGNALS: [&str; 1] = ["TankHeight"];
pub const WATERTANK_CONTROLS: [&str; 4] = ["InValve", "OutValve", "InValveRate", "OutValveRate"];
pub const ENGINE_SIGNALS: [&str; 2] = ["RPM", "Speed"];
pub const ENGINE_CONTROLS: [&str; 1] = ["Throttle"];

pub fn watertank_state_box() -> IntervalBox {
    IntervalBox::new(vec![iv(0.0, 12.0)])
}

/// The four-path PLC program. Path 3 is the `else` branch.
pub fn watertank_program() -> ControlProgram {
    program_from_text(
        &WATERTANK_SIGNALS,
        &WATERTANK_CONTROLS,
        watertank_state_box(),
        &[
            ("TankHeight <= 5", &["1", "0", "1", "0"]),
            ("TankHeight >= 10", &["0", "1", "0", "1"]),
            (
                "TankHeight > 5 && TankHeight < 7",
                &["1", "0", "(7 - TankHeight) / (7 - 5)", "0"],
            ),
            (
                "TankHeight >= 7 && TankHeight < 10",
                &["0", "1", "0", "(TankHeight - 7) / (10 - 7)"],
            ),
        ],
    )
    .unwrap()
}

pub const WATERTANK_SPEC: &str = "G[0,30](TankHeight <= 8)";

pub fn watertank_spec() -> Formula {
    stl::parse(WATERTANK_SPEC, &names(&WATERTANK_SIGNALS)).unwrap()
}

pub fn watertank_x0() -> IntervalBox {
    IntervalBox::new(vec![iv(0.0, 8.0)])
}

pub fn engine_state_box() -> IntervalBox {
    IntervalBox::new(vec![iv(0.0, 6000.0), iv(0.0, 160.0)])
}

const ENGINE_NORMAL: &str = "-RPM*0.001 - Speed*0.6 + 139.0";
const ENGINE_SAFETY: &str = "-RPM*0.002 - Speed*1.1 + 183.0";

/// Engine controller versions 1 (single path), 2 (adds a safety mode) and
/// 3 (the four-path switched controller).
pub fn engine_program(version: u8) -> Result<ControlProgram> {
    let rows: Vec<(&str, &[&str])> = match version {
        1 => vec![("true", &[ENGINE_NORMAL])],
        2 => vec![("Speed <= 80", &[ENGINE_NORMAL]), ("Speed > 80", &[ENGINE_SAFETY])],
        3 => vec![
            ("RPM > 3300 && Speed > 80", &[ENGINE_SAFETY]),
            ("RPM > 3300 && Speed <= 80", &["-RPM*0.001 + Speed*0.6 + 19.0"]),
            ("RPM <= 3300 && Speed > 80", &["RPM*0.001 - Speed*1.7 + 216.0"]),
            ("RPM <= 3300 && Speed <= 80", &[ENGINE_NORMAL]),
        ],
        _ => return Err(Error::arg("engine program versions are 1, 2 and 3")),
    };
    program_from_text(&ENGINE_SIGNALS, &ENGINE_CONTROLS, engine_state_box(), &rows)
}

pub const ENGINE_SPEC: &str = "G[0,30](Speed < 100 || RPM < 4300)";

pub fn engine_spec() -> Formula {
    stl::parse(ENGINE_SPEC, &names(&ENGINE_SIGNALS)).unwrap()
}

pub fn engine_x0() -> IntervalBox {
    IntervalBox::new(vec![iv(0.0, 3000.0), iv(0.0, 60.0)])
}

/// 2% of each state-box width.
pub fn default_s_max(state_box: &IntervalBox) -> Vec<f64> {
    state_box.widths().iter().map(|w| 0.02 * w).collect()
}

/// `n` transitions `(x, u) → F(x, u)` with `x` and `u` uniform in their boxes.
pub fn plant_dataset<P: Plant + ?Sized>(
    plant: &P,
    states: &IntervalBox,
    controls: &IntervalBox,
    state_names: &[String],
    control_names: &[String],
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x = states.sample(&mut rng);
        let u = controls.sample(&mut rng);
        targets.push(plant.step(&x, &u)?);
        let mut row = x;
        row.extend(u);
        inputs.push(row);
    }
    let mut input_names = state_names.to_vec();
    input_names.extend_from_slice(control_names);
    let target_names = state_names.iter().map(|s| alloc::format!("next_{s}")).collect();
    Dataset::new(input_names, target_names, inputs, targets)
}

/// Everything needed to reproduce a surrogate dynamics net.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSetup {
    pub state_domain: IntervalBox,
    pub control_domain: IntervalBox,
    pub samples: usize,
    pub data_seed: u64,
    pub arch: Vec<usize>,
    pub degree: usize,
    pub train: TrainConfig,
}

impl SurrogateSetup {
    pub fn input_domain(&self) -> Vec<Interval> {
        self.state_domain.concat(&self.control_domain).dims().to_vec()
    }

    pub fn dataset<P: Plant + ?Sized>(
        &self,
        plant: &P,
        state_names: &[String],
        control_names: &[String],
    ) -> Result<Dataset> {
        plant_dataset(
            plant,
            &self.state_domain,
            &self.control_domain,
            state_names,
            control_names,
            self.samples,
            self.data_seed,
        )
    }

    pub fn train<P: Plant + ?Sized>(
        &self,
        plant: &P,
        state_names: &[String],
        control_names: &[String],
    ) -> Result<(DeepBernNet, TrainReport)> {
        let data = self.dataset(plant, state_names, control_names)?;
        let mut cfg = self.train.clone();
        cfg.input_domain = Some(self.input_domain());
        deepbern::train(&data, &self.arch, self.degree, &cfg)
    }
}

/// Water-tank surrogate: arch [32, 32], degree 3, learning the increment of
/// the tank height.
pub fn watertank_surrogate() -> SurrogateSetup {
    SurrogateSetup {
        state_domain: IntervalBox::new(vec![iv(-10.0, 22.0)]),
        control_domain: IntervalBox::new(vec![iv(0.0, 1.0); 4]),
        samples: 10_000,
        data_seed: 7,
        arch: vec![32, 32],
        degree: 3,
        train: TrainConfig {
            epochs: 30,
            seed: 1,
            residual: vec![0],
            ..TrainConfig::default()
        },
    }
}

pub fn engine_surrogate() -> SurrogateSetup {
    SurrogateSetup {
        state_domain: IntervalBox::new(vec![iv(-600.0, 6600.0), iv(-16.0, 176.0)]),
        control_domain: IntervalBox::new(vec![iv(-60.0, 140.0)]),
        samples: 10_000,
        data_seed: 11,
        arch: vec![32, 32],
        degree: 3,
        train: TrainConfig {
            epochs: 30,
            seed: 2,
            residual: vec![0, 1],
            ..TrainConfig::default()
        },
    }
}

pub fn train_watertank_net() -> Result<(DeepBernNet, TrainReport)> {
    watertank_surrogate().train(
        &PlantModel::watertank(),
        &names(&WATERTANK_SIGNALS),
        &names(&WATERTANK_CONTROLS),
    )
}
