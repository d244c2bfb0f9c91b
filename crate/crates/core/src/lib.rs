//! Generalized pair-wise logit (GPL) population dynamics over the action
//! space `[0, 1]` and the mean field game whose myopic limit they are.
//!
//! The crate is organised bottom-up:
//!
//! * [`kappa`] — κ-exponential, κ-logarithm, logit rate and control cost.
//! * [`grid`] — uniform cell grid, discrete measures, fields, trajectories.
//! * [`utility`] — utility models (kernel, angler, competition).
//! * [`gpl`] — the semi-discrete GPL dynamic.
//! * [`mfg`] — HJB/Fokker–Planck forward–backward solver.
//! * [`calibration`] — moment matching and logistic growth fits.
//! * [`convergence`] — multi-resolution error and rate study.

pub mod calibration;
pub mod convergence;
pub mod error;
pub mod gpl;
pub mod grid;
pub mod kappa;
mod kernels;
pub mod mfg;
pub mod utility;

pub use error::{Error, Result};
pub use gpl::{gpl_rhs, gpl_stationary, gpl_step, gpl_transient, kappa_continuity_probe, GplConfig};
pub use grid::{coarsen_field, moments, tv_distance, uniform_measure, GridMeasure, Moments, UniformGrid, UtilityField};
pub use kappa::{kappa_exp, kappa_log, logit_rate, KappaLogit};
pub use mfg::{solve_mfg, MfgConfig, MfgSolution};
pub use utility::UtilityModel;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
