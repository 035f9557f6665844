//! Lagrangian transport of a particle ensemble through a solved flow field.
//!
//! Particles are injected into one unit cell with density proportional to
//! the local speed, then advected without fine-scale diffusion using
//! Pollock's semi-analytical scheme. Particles reaching the outlet `x = L`
//! are frozen there and excluded from all statistics.

mod density;
mod inject;
mod pollock;
mod stats;

pub use density::{fine_density, DensityAccumulator, DensityGrid, FineDensity};
pub use inject::{inject, injection_rng};
pub use pollock::{exit_time_1d, track, Tracker};
pub use stats::{displacement_stats, loglog_slope, DisplacementAccumulator, DisplacementStats};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Injection and recording parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    /// 1-based index `k` of the unit cell receiving the particles.
    pub injection_cell: usize,
    pub num_particles: usize,
    /// Snapshot interval.
    pub dt: f64,
    pub t_end: f64,
    pub rng_seed: u64,
}

impl TrackingConfig {
    pub fn validate(&self, num_cells: usize) -> Result<()> {
        if self.injection_cell < 1 || self.injection_cell > num_cells {
            return Err(Error::config(format!(
                "injection_cell must lie in 1..={num_cells}, got {}",
                self.injection_cell
            )));
        }
        if self.num_particles == 0 {
            return Err(Error::config("num_particles must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::config(format!(
                "t_end = {} must be at least dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(())
    }

    /// Number of recorded intervals; snapshots are `k * dt` for `k = 0..=steps`.
    pub fn num_steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        (0..=self.num_steps()).map(|k| k as f64 * self.dt).collect()
    }
}

/// What happened to a particle over the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fate {
    Active,
    /// Reached `x = L`; frozen from this snapshot on.
    Exited { snapshot: usize },
    /// Velocity fell below the stagnation floor (or the particle became
    /// trapped); flagged from this snapshot on.
    Stagnant { snapshot: usize },
}

/// Status of one particle at one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Active,
    Exited,
    Stagnant,
}

impl Fate {
    pub fn status_at(&self, snapshot: usize) -> Status {
        match *self {
            Fate::Exited { snapshot: s } if snapshot >= s => Status::Exited,
            Fate::Stagnant { snapshot: s } if snapshot >= s => Status::Stagnant,
            _ => Status::Active,
        }
    }
}

/// Particle positions at every snapshot.
///
/// `x[[s, p]]`, `y[[s, p]]` hold particle `p` at `snapshot_times[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub snapshot_times: Vec<f64>,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub fate: Vec<Fate>,
}

impl ParticleEnsemble {
    pub fn num_particles(&self) -> usize {
        self.fate.len()
    }

    pub fn num_snapshots(&self) -> usize {
        self.snapshot_times.len()
    }

    pub fn status(&self, snapshot: usize, particle: usize) -> Status {
        self.fate[particle].status_at(snapshot)
    }

    /// (active, exited, stagnant) counts at a snapshot.
    pub fn counts(&self, snapshot: usize) -> (usize, usize, usize) {
        self.fate.iter().fold((0, 0, 0), |(a, e, s), f| match f.status_at(snapshot) {
            Status::Active => (a + 1, e, s),
            Status::Exited => (a, e + 1, s),
            Status::Stagnant => (a, e, s + 1),
        })
    }
}
