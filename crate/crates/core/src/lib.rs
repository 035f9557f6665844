//! Learning nonlocal diffusion kernels for anomalous solute transport.
//!
//! The pipeline runs fine-scale Darcy flow and particle tracking through a
//! periodic heterogeneous layer ([`flow`], [`particles`]), coarse-grains the
//! particle density into 1D breakthrough curves ([`coarse`]), and fits a
//! nonnegative, time-dependent nonlocal diffusion kernel to those curves
//! ([`nonlocal`], [`learning`]). Local PDE and neural-network baselines live
//! in [`baselines`]; [`experiment`] wires everything to config files.

pub mod baselines;
pub mod coarse;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod learning;
pub mod linalg;
pub mod nonlocal;
pub mod particles;

pub use error::{Error, Result};
