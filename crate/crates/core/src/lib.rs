//! Reachability-guided falsification of control programs.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithm of the
//! toolkit; file formats, parallel drivers and the command line live in the
//! `kinetic` companion crate.
//!
//! The pipeline, bottom-up:
//!
//! * [`bernstein`]: polynomials in Bernstein form, range enclosure, subdivision
//!   and the Bernstein approximant of `|x|`.
//! * [`deepbern`]: feed-forward networks with per-neuron Bernstein activations,
//!   forward inference and SGD training with analytic gradients.
//! * [`reach`]: interval-box forward reachability through those networks,
//!   single- and multi-step.
//! * [`stl`]: STL formulas, exact robustness and compilation of a formula into a
//!   Bernstein robustness network with a certified approximation error.
//! * [`progmodel`]: piecewise-affine control programs and the LP-based
//!   path-range analysis.
//! * [`explorer`]: exploration of the abstract trajectory tree with
//!   SAFE / UNSAFE / UNCERTAIN / UNREACHABLE classification.
//! * [`falsify`]: plants, concrete simulation and simulated-annealing
//!   falsification constrained to a cyber-trajectory prefix.
//! * [`fixtures`]: the water-tank and engine benchmarks.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod affine;
pub mod bernstein;
pub mod deepbern;
pub mod error;
pub mod explorer;
pub mod falsify;
pub mod fixtures;
pub mod lp;
mod num;
pub mod progmodel;
pub mod reach;
pub mod stl;

pub use bernstein::{BernsteinPoly, Interval};
pub use deepbern::{DeepBernNet, Dataset, TrainConfig};
pub use error::{Error, Result};
pub use reach::IntervalBox;
