//! Immobilization-risk-aware path planning for rovers on heterogeneous
//! deformable terrain.
//!
//! The library covers the full experiment pipeline:
//!
//! * [`terrain`] — synthetic problem instances: fractal heightmaps, Perlin
//!   terrain-class maps, class-dependent ground-truth slip models, and the
//!   Std / ES / AA dataset generators.
//! * [`gp`] — per-class Gaussian-process slip regressors mapping terrain
//!   pitch to a predictive Gaussian over slip.
//! * [`classifier`] — per-cell terrain-class likelihood maps, either from a
//!   synthetic error-injecting classifier or from external rasters.
//! * [`risk`] — mixture-of-GPs slip distributions, the slip-as-risk
//!   transform, and Monte-Carlo EV / VaR / CVaR statistics.
//! * [`planner`] — 8-connected planning graphs, risk-aware travel-time edge
//!   costs, and A* search.
//! * [`executor`] — path execution against ground-truth noisy slip, and the
//!   solved / success / total-time / max-slip metrics.
//! * [`experiment`] — configuration plus end-to-end orchestration used by
//!   the CLI and the acceptance suite.
//!
//! All randomness flows through counter-derived [`rng`] streams so that every
//! artifact is a pure function of its seed.

pub mod classifier;
pub mod executor;
pub mod experiment;
pub mod gp;
pub mod grid;
pub mod planner;
pub mod risk;
pub mod rng;
pub mod terrain;

mod error;

pub use error::{Error, Result};
