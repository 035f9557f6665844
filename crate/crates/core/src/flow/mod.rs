//! Periodic heterogeneous layer and its steady Darcy flow.
//!
//! The layer `[0, L] x [0, l2]` is a row of `N` identical unit cells of
//! width `l1`, each holding one diamond-shaped inclusion of conductivity
//! `kappa_inclusion` in a matrix of conductivity `kappa_matrix`. Flow is
//! driven by a head drop from `head_left` at `x = 0` to zero at `x = L`,
//! with no-flow walls at `y = 0` and `y = l2`.
//!
//! The flow is discretized with a cell-centred two-point-flux finite volume
//! scheme on a structured `grid_nx x grid_ny` grid. Face velocities are the
//! natural output of that scheme, and they are exactly what the Pollock
//! tracker in [`crate::particles`] consumes.

mod darcy;
mod io;

pub use darcy::{solve_darcy, solve_darcy_with, solve_unit_cell, SolverSettings};
pub use io::{read_flow_field, write_flow_field};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and conductivities of the periodic layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    /// Background conductivity.
    pub kappa_matrix: f64,
    /// Conductivity inside the diamonds.
    pub kappa_inclusion: f64,
    /// Unit cell width `l1`.
    pub cell_width: f64,
    /// Layer thickness `l2`.
    pub layer_height: f64,
    /// Number of unit cells `N`; the layer length is `N * l1`.
    pub num_cells: usize,
    /// Hydraulic head imposed at `x = 0`.
    pub head_left: f64,
    /// Diamond half-diagonals as a fraction of the cell half-width/half-height.
    #[serde(default = "default_inclusion_fraction")]
    pub inclusion_fraction: f64,
}

fn default_inclusion_fraction() -> f64 {
    1.0
}

impl MediumSpec {
    /// Full-size layer: 220 cells of width sqrt(3)/3, unit thickness,
    /// conductivities 1 and 0.01, head 60.
    pub fn reference() -> Self {
        Self {
            kappa_matrix: 1.0,
            kappa_inclusion: 0.01,
            cell_width: 3f64.sqrt() / 3.0,
            layer_height: 1.0,
            num_cells: 220,
            head_left: 60.0,
            inclusion_fraction: 1.0,
        }
    }

    pub fn length(&self) -> f64 {
        self.num_cells as f64 * self.cell_width
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("kappa_matrix", self.kappa_matrix)?;
        positive("kappa_inclusion", self.kappa_inclusion)?;
        positive("cell_width", self.cell_width)?;
        positive("layer_height", self.layer_height)?;
        if self.num_cells == 0 {
            return Err(Error::config("num_cells must be at least 1"));
        }
        if !self.head_left.is_finite() {
            return Err(Error::config("head_left must be finite"));
        }
        if !(self.inclusion_fraction > 0.0 && self.inclusion_fraction <= 1.0) {
            return Err(Error::config(format!(
                "inclusion_fraction must lie in (0, 1], got {}",
                self.inclusion_fraction
            )));
        }
        Ok(())
    }

    /// Whether the point `(x, y)` lies inside the diamond of its unit cell.
    pub fn in_inclusion(&self, x: f64, y: f64) -> bool {
        let local = x - (x / self.cell_width).floor() * self.cell_width;
        let a = 0.5 * self.inclusion_fraction * self.cell_width;
        let b = 0.5 * self.inclusion_fraction * self.layer_height;
        (local - 0.5 * self.cell_width).abs() / a + (y - 0.5 * self.layer_height).abs() / b <= 1.0
    }

    /// Single unit cell under a unit head drop.
    pub fn unit_cell(&self) -> Self {
        Self {
            num_cells: 1,
            head_left: 1.0,
            ..self.clone()
        }
    }
}

/// Structured grid over `[0, length] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub num_cells: usize,
    pub cell_width: f64,
    pub layer_height: f64,
}

impl Grid {
    pub fn new(spec: &MediumSpec, nx: usize, ny: usize) -> Result<Self> {
        spec.validate()?;
        if nx == 0 || nx % spec.num_cells != 0 {
            return Err(Error::config(format!(
                "grid_nx = {nx} must be a positive multiple of num_cells = {}",
                spec.num_cells
            )));
        }
        if ny < 2 {
            return Err(Error::config(format!("grid_ny must be at least 2, got {ny}")));
        }
        Ok(Self {
            nx,
            ny,
            num_cells: spec.num_cells,
            cell_width: spec.cell_width,
            layer_height: spec.layer_height,
        })
    }

    pub fn length(&self) -> f64 {
        self.num_cells as f64 * self.cell_width
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.layer_height / self.ny as f64
    }

    pub fn cells_per_unit(&self) -> usize {
        self.nx / self.num_cells
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy())
    }
}

/// Conductivity sampled at grid-cell centres, repeating exactly every unit cell.
///
/// Cells whose centre satisfies `|x - xc|/a + |y - yc|/b <= 1` get the inclusion
/// conductivity.
pub fn build_conductivity(spec: &MediumSpec, grid_nx: usize, grid_ny: usize) -> Result<Array2<f64>> {
    let grid = Grid::new(spec, grid_nx, grid_ny)?;
    let per = grid.cells_per_unit();
    // One unit cell, then tiled; sampling each cell independently would let
    // floor() rounding break exact periodicity.
    let dy = grid.dy();
    let local_dx = spec.cell_width / per as f64;
    let unit = Array2::from_shape_fn((per, grid_ny), |(i, j)| {
        let x = (i as f64 + 0.5) * local_dx;
        let y = (j as f64 + 0.5) * dy;
        if spec.in_inclusion(x, y) {
            spec.kappa_inclusion
        } else {
            spec.kappa_matrix
        }
    });
    Ok(Array2::from_shape_fn((grid_nx, grid_ny), |(i, j)| unit[[i % per, j]]))
}

/// Discrete Darcy solution: cell heads and face-normal velocities.
///
/// `face_velocity_x[[i, j]]` is the x-velocity on the face at `x = i * dx`
/// (shape `(nx + 1, ny)`); `face_velocity_y[[i, j]]` is the y-velocity on the
/// face at `y = j * dy` (shape `(nx, ny + 1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub grid: Grid,
    pub face_velocity_x: Array2<f64>,
    pub face_velocity_y: Array2<f64>,
    pub head: Array2<f64>,
}

impl FlowField {
    pub fn grid_nx(&self) -> usize {
        self.grid.nx
    }

    pub fn grid_ny(&self) -> usize {
        self.grid.ny
    }

    /// Velocity at the centre of grid cell `(i, j)` (face averages).
    pub fn cell_velocity(&self, i: usize, j: usize) -> (f64, f64) {
        (
            0.5 * (self.face_velocity_x[[i, j]] + self.face_velocity_x[[i + 1, j]]),
            0.5 * (self.face_velocity_y[[i, j]] + self.face_velocity_y[[i, j + 1]]),
        )
    }

    /// Velocity at `(x, y)` with each component linear between its two faces,
    /// which is the field the Pollock tracker integrates.
    pub fn velocity_at(&self, x: f64, y: f64) -> (f64, f64) {
        let (i, j) = self.locate(x, y);
        let dx = self.grid.dx();
        let dy = self.grid.dy();
        let fx = ((x - i as f64 * dx) / dx).clamp(0.0, 1.0);
        let fy = ((y - j as f64 * dy) / dy).clamp(0.0, 1.0);
        let vx0 = self.face_velocity_x[[i, j]];
        let vx1 = self.face_velocity_x[[i + 1, j]];
        let vy0 = self.face_velocity_y[[i, j]];
        let vy1 = self.face_velocity_y[[i, j + 1]];
        (vx0 + fx * (vx1 - vx0), vy0 + fy * (vy1 - vy0))
    }

    /// Grid cell containing `(x, y)`; points on the upper boundaries map to
    /// the last cell.
    pub fn locate(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((x / self.grid.dx()).floor().max(0.0) as usize).min(self.grid.nx - 1);
        let j = ((y / self.grid.dy()).floor().max(0.0) as usize).min(self.grid.ny - 1);
        (i, j)
    }

    /// Mean speed over cell centres.
    pub fn mean_speed(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                let (u, v) = self.cell_velocity(i, j);
                sum += u.hypot(v);
            }
        }
        sum / (self.grid.nx * self.grid.ny) as f64
    }

    /// Net outward volumetric flux of every grid cell.
    pub fn divergence(&self) -> Array2<f64> {
        let dx = self.grid.dx();
        let dy = self.grid.dy();
        Array2::from_shape_fn((self.grid.nx, self.grid.ny), |(i, j)| {
            (self.face_velocity_x[[i + 1, j]] - self.face_velocity_x[[i, j]]) * dy
                + (self.face_velocity_y[[i, j + 1]] - self.face_velocity_y[[i, j]]) * dx
        })
    }

    /// Mean absolute volumetric flux over all faces.
    pub fn mean_face_flux(&self) -> f64 {
        let dx = self.grid.dx();
        let dy = self.grid.dy();
        let sx: f64 = self.face_velocity_x.iter().map(|v| v.abs() * dy).sum();
        let sy: f64 = self.face_velocity_y.iter().map(|v| v.abs() * dx).sum();
        (sx + sy) / (self.face_velocity_x.len() + self.face_velocity_y.len()) as f64
    }

    /// Largest per-cell divergence relative to the mean face flux.
    pub fn max_relative_divergence(&self) -> f64 {
        let scale = self.mean_face_flux();
        let max = self.divergence().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            max
        } else {
            max / scale
        }
    }

    /// Total volumetric flux entering through `x = 0`.
    pub fn inflow(&self) -> f64 {
        let dy = self.grid.dy();
        (0..self.grid.ny).map(|j| self.face_velocity_x[[0, j]] * dy).sum()
    }

    /// Total volumetric flux leaving through `x = L`.
    pub fn outflow(&self) -> f64 {
        let dy = self.grid.dy();
        let nx = self.grid.nx;
        (0..self.grid.ny).map(|j| self.face_velocity_x[[nx, j]] * dy).sum()
    }
}
