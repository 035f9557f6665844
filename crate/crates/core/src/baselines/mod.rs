//! Comparison models: time-scaled local diffusion (fractal and classical)
//! and a small fully connected surrogate of the breakthrough curves.

mod mlp;
mod pde;

pub use mlp::{surrogate_eval, train_surrogate, Sample, SurrogateNet, SurrogateSettings, TrainedSurrogate};
pub use pde::{fractal_coefficient, fractal_schedule, solve_classical, solve_fractal, ClassicalParams, FractalParams};
