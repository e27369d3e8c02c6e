//! Event-driven simulation and numerical analysis of locally regulated
//! spatial birth-death populations.
//!
//! A population is a finite set of plants in continuous space. Each plant
//! produces seeds at rate `gamma(x)` (dispersed by a kernel `D`), dies
//! intrinsically at rate `mu(x)`, and dies from competition at rate
//! `alpha(x) * sum_j U(x, x_j)` where `U` is a pairwise competition kernel.
//! The crate provides:
//!
//! - an exact continuous-time simulator with two interchangeable engines
//!   (envelope thinning and exact-rate cell indexing), see [`sim`];
//! - a deterministic solver for the nonlocal logistic mean-field limit
//!   `d/dt xi = gamma xi * D - mu xi - alpha xi (xi * U)`, see [`meanfield`];
//! - ensemble estimators over simulation traces (counts, covariance
//!   measure, moment-equation residual, martingale checks), see [`stats`];
//! - pre-packaged studies: scaling limits, Poisson stationarity, Slivnyak
//!   identity, extinction and lattice survival, see [`experiments`];
//! - a TOML config schema and named presets, see [`config`].

pub mod config;
pub mod domain;
pub mod experiments;
pub mod kernel;
pub mod manifest;
pub mod meanfield;
pub mod params;
pub mod population;
pub mod quad;
pub mod rates;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod testfn;
pub mod trace;

pub use domain::SpatialDomain;
pub use kernel::{Kernel, KernelShape};
pub use params::{make_params, ModelParams, ParamsError};
pub use population::Population;
pub use rates::RateField;
pub use sim::{EngineKind, Horizon, SimError, SimState};
pub use testfn::TestFn;
pub use trace::{SnapshotPlan, Trace};
