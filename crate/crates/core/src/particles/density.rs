use ndarray::{Array3, ArrayView2};

use super::{ParticleEnsemble, Status};
use crate::error::{Error, Result};

/// Histogram bins over `[0, length] x [0, height]`, aligned with unit cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityGrid {
    pub nx_bins: usize,
    pub ny_bins: usize,
    pub length: f64,
    pub height: f64,
}

impl DensityGrid {
    /// `bins_per_cell` x-bins in each of `num_cells` unit cells.
    pub fn aligned(num_cells: usize, cell_width: f64, height: f64, bins_per_cell: usize, ny_bins: usize) -> Result<Self> {
        if bins_per_cell == 0 || ny_bins == 0 || num_cells == 0 {
            return Err(Error::config("density grid needs at least one bin per direction"));
        }
        Ok(Self {
            nx_bins: num_cells * bins_per_cell,
            ny_bins,
            length: num_cells as f64 * cell_width,
            height,
        })
    }

    pub fn bin_area(&self) -> f64 {
        (self.length / self.nx_bins as f64) * (self.height / self.ny_bins as f64)
    }

    fn bin(&self, x: f64, y: f64) -> (usize, usize) {
        let ix = ((x / self.length * self.nx_bins as f64).floor().max(0.0) as usize).min(self.nx_bins - 1);
        let iy = ((y / self.height * self.ny_bins as f64).floor().max(0.0) as usize).min(self.ny_bins - 1);
        (ix, iy)
    }
}

/// Particle density `c(x, y, t)` per snapshot, normalized so the domain
/// integral is the fraction of particles still inside (1 at `t = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct FineDensity {
    pub grid: DensityGrid,
    pub snapshot_times: Vec<f64>,
    /// `values[[s, ix, iy]]`.
    pub values: Array3<f64>,
}

impl FineDensity {
    pub fn snapshot(&self, s: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(ndarray::Axis(0), s)
    }

    /// Domain integral of the density at snapshot `s`.
    pub fn mass(&self, s: usize) -> f64 {
        self.snapshot(s).sum() * self.grid.bin_area()
    }
}

/// Integer histogram accumulated over ensemble chunks.
#[derive(Debug, Clone)]
pub struct DensityAccumulator {
    grid: DensityGrid,
    snapshot_times: Vec<f64>,
    counts: Array3<u64>,
    particles: usize,
}

impl DensityAccumulator {
    pub fn new(grid: DensityGrid, snapshot_times: Vec<f64>) -> Self {
        let counts = Array3::zeros((snapshot_times.len(), grid.nx_bins, grid.ny_bins));
        Self {
            grid,
            snapshot_times,
            counts,
            particles: 0,
        }
    }

    pub fn add(&mut self, ensemble: &ParticleEnsemble) -> Result<()> {
        if ensemble.snapshot_times != self.snapshot_times {
            return Err(Error::config("ensemble snapshot times do not match the density accumulator"));
        }
        for s in 0..ensemble.num_snapshots() {
            for p in 0..ensemble.num_particles() {
                if ensemble.status(s, p) == Status::Exited {
                    continue;
                }
                let (ix, iy) = self.grid.bin(ensemble.x[[s, p]], ensemble.y[[s, p]]);
                self.counts[[s, ix, iy]] += 1;
            }
        }
        self.particles += ensemble.num_particles();
        Ok(())
    }

    pub fn finish(self) -> Result<FineDensity> {
        if self.particles == 0 {
            return Err(Error::config("cannot build a density from an empty ensemble"));
        }
        let scale = 1.0 / (self.particles as f64 * self.grid.bin_area());
        Ok(FineDensity {
            grid: self.grid,
            snapshot_times: self.snapshot_times,
            values: self.counts.mapv(|c| c as f64 * scale),
        })
    }
}

pub fn fine_density(ensemble: &ParticleEnsemble, grid: DensityGrid) -> Result<FineDensity> {
    let mut acc = DensityAccumulator::new(grid, ensemble.snapshot_times.clone());
    acc.add(ensemble)?;
    acc.finish()
}
