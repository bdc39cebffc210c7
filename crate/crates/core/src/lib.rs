//! Simulation and parameter estimation for Hong-Ou-Mandel interference of
//! photons emitted by a single spin-3/2 color center.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`], [`timetags`], [`histogram`], [`peaks`], [`spectroscopy`]:
//!   domain types, coincidence histograms, five-peak analysis.
//! * [`spin`]: non-RWA propagation of the ground-state spin quartet.
//! * [`correlation`]: analytic coincidence densities, gated visibility and
//!   the quantum-beat pattern.
//! * [`corrections`]: noise, splitter, fringe and jitter corrections.
//! * [`dephasing`]: temperature dependent dephasing and linewidth bookkeeping.
//! * [`montecarlo`]: seeded time-tag simulation and analytic cross-checks.
//! * [`fitting`]: least-squares estimation on top of the forward models.
//! * [`io`], [`cli`]: file formats and the `homsim` command line.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod correlation;
pub mod corrections;
pub mod dephasing;
pub mod error;
pub mod fitting;
pub mod histogram;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod peaks;
pub mod spectroscopy;
pub mod spin;
pub mod timetags;

pub use error::{Error, Result};
pub use model::{Estimate, EmitterParams, GateWindow, InterferometerParams};
