//! Upscaling of the 2D particle density to a 1D cell-wise density, time
//! traces at probe locations, homogenized unit-cell advection, and the
//! change to the frame moving with that advection.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowField, MediumSpec};
use crate::particles::FineDensity;

/// Piecewise-constant coarse density, one value per unit cell and snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseDensity {
    /// `values[[s, i]]`: snapshot `s`, unit cell `i` (0-based).
    pub values: Array2<f64>,
    /// Number of unit cells `m` in the averaging window.
    pub window: usize,
    pub cell_width: f64,
    pub layer_height: f64,
    pub snapshot_times: Vec<f64>,
}

impl CoarseDensity {
    pub fn num_cells(&self) -> usize {
        self.values.ncols()
    }

    pub fn length(&self) -> f64 {
        self.num_cells() as f64 * self.cell_width
    }

    pub fn get(&self, cell: usize, snapshot: usize) -> f64 {
        self.values[[snapshot, cell]]
    }

    pub fn profile(&self, snapshot: usize) -> ArrayView1<'_, f64> {
        self.values.row(snapshot)
    }

    pub fn trace(&self, cell: usize) -> ArrayView1<'_, f64> {
        self.values.column(cell)
    }

    /// Clipped window width (in cells) used for cell `i`.
    pub fn window_width(&self, cell: usize) -> usize {
        self.window.min(self.num_cells() - cell)
    }

    /// `sum_i c_i * w_i * l1 * l2 / m`: the particle mass when all of it
    /// lies at or beyond cell `m` (1-based), where every cell is covered by
    /// exactly `m` windows.
    pub fn window_mass(&self, snapshot: usize) -> f64 {
        let area = self.cell_width * self.layer_height;
        self.profile(snapshot)
            .iter()
            .enumerate()
            .map(|(i, c)| c * self.window_width(i) as f64 * area)
            .sum::<f64>()
            / self.window as f64
    }

    /// `sum_i c_i * l1 * l2`, the natural mass of a shifted or model profile.
    pub fn cell_mass(&self, snapshot: usize) -> f64 {
        self.profile(snapshot).sum() * self.cell_width * self.layer_height
    }

    /// 0-based unit cell owning `x`; errors outside `(0, L)`.
    pub fn owning_cell(&self, x: f64) -> Result<usize> {
        owning_cell(x, self.cell_width, self.num_cells())
    }
}

pub(crate) fn owning_cell(x: f64, cell_width: f64, num_cells: usize) -> Result<usize> {
    let length = num_cells as f64 * cell_width;
    if !(x > 0.0 && x < length) {
        return Err(Error::config(format!("location {x} outside the open domain (0, {length})")));
    }
    Ok(((x / cell_width).floor() as usize).min(num_cells - 1))
}

/// Particle mass in each unit cell at snapshot `s`.
fn unit_cell_masses(fine: &FineDensity, num_cells: usize, s: usize) -> Vec<f64> {
    let per = fine.grid.nx_bins / num_cells;
    let area = fine.grid.bin_area();
    let snap = fine.snapshot(s);
    (0..num_cells)
        .map(|c| snap.slice(ndarray::s![c * per..(c + 1) * per, ..]).sum() * area)
        .collect()
}

/// Window average of the fine density over unit cells `i .. i + m - 1`,
/// clipped at the outlet with the denominator shrunk accordingly.
pub fn upscale(fine: &FineDensity, spec: &MediumSpec, m: usize) -> Result<CoarseDensity> {
    spec.validate()?;
    let n = spec.num_cells;
    if m == 0 || m > n {
        return Err(Error::config(format!("window m = {m} must lie in 1..={n}")));
    }
    if fine.grid.nx_bins % n != 0 {
        return Err(Error::config(format!(
            "density grid with {} x-bins is not aligned with {n} unit cells",
            fine.grid.nx_bins
        )));
    }
    if (fine.grid.length - spec.length()).abs() > 1e-9 * spec.length()
        || (fine.grid.height - spec.layer_height).abs() > 1e-9 * spec.layer_height
    {
        return Err(Error::config("density grid does not cover the medium"));
    }
    let area = spec.cell_width * spec.layer_height;
    let ns = fine.snapshot_times.len();
    let mut values = Array2::zeros((ns, n));
    for s in 0..ns {
        let masses = unit_cell_masses(fine, n, s);
        let mut prefix = vec![0.0; n + 1];
        for (k, mk) in masses.iter().enumerate() {
            prefix[k + 1] = prefix[k] + mk;
        }
        for i in 0..n {
            let end = (i + m).min(n);
            values[[s, i]] = (prefix[end] - prefix[i]) / ((end - i) as f64 * area);
        }
    }
    Ok(CoarseDensity {
        values,
        window: m,
        cell_width: spec.cell_width,
        layer_height: spec.layer_height,
        snapshot_times: fine.snapshot_times.clone(),
    })
}

/// Time trace of the coarse density at one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakthroughCurve {
    pub location: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl BreakthroughCurve {
    pub fn new(location: f64, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::format("breakthrough curve times and values differ in length"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::format("breakthrough curve times must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::format("breakthrough curve values must be nonnegative"));
        }
        Ok(Self { location, times, values })
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

pub fn extract_btc(coarse: &CoarseDensity, locations: &[f64]) -> Result<Vec<BreakthroughCurve>> {
    locations
        .iter()
        .map(|&x| {
            let cell = coarse.owning_cell(x)?;
            BreakthroughCurve::new(x, coarse.snapshot_times.clone(), coarse.trace(cell).to_vec())
        })
        .collect()
}

/// Homogenized advection of the unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveAdvection {
    /// Speed-weighted mean x-velocity of the unit cell under unit head drop.
    pub v_bar_cell: f64,
    /// `v_bar_cell * l1`.
    pub kappa_bar_x: f64,
    /// Coarse advection speed `h0 / (N * kappa_bar_x)`.
    pub v_bar: f64,
    /// `v_bar_cell * h0 / N`: the unit-cell speed rescaled to the head drop a
    /// single cell actually sees in the full layer.
    pub v_drift: f64,
}

/// Speed-weighted average of `v_x` along each grid column, then a
/// flux-weighted harmonic average across columns.
pub fn effective_advection(spec: &MediumSpec, unit_flow: &FlowField) -> Result<EffectiveAdvection> {
    spec.validate()?;
    let g = &unit_flow.grid;
    let (dx, dy) = (g.dx(), g.dy());
    let mut total = 0.0;
    let mut harmonic = 0.0;
    for i in 0..g.nx {
        let mut w = 0.0;
        let mut u = 0.0;
        for j in 0..g.ny {
            let (vx, vy) = unit_flow.cell_velocity(i, j);
            let speed = vx.hypot(vy);
            w += speed * dy;
            u += vx * speed * dy;
        }
        if !(u > 0.0 && w > 0.0) {
            return Err(Error::numerical(format!(
                "degenerate unit-cell flow: column {i} carries no forward flux"
            )));
        }
        total += w * dx;
        harmonic += w * w / u * dx;
    }
    let v_bar_cell = total / harmonic;
    let kappa_bar_x = v_bar_cell * spec.cell_width;
    let n = spec.num_cells as f64;
    Ok(EffectiveAdvection {
        v_bar_cell,
        kappa_bar_x,
        v_bar: spec.head_left / (n * kappa_bar_x),
        v_drift: v_bar_cell * spec.head_left / n,
    })
}

/// Re-indexes the density by `x_d = x - v_bar t`, interpolating linearly
/// between cell centres; mass beyond the outlet is zero.
pub fn shift_frame(coarse: &CoarseDensity, v_bar: f64) -> Result<CoarseDensity> {
    if !(v_bar >= 0.0 && v_bar.is_finite()) {
        return Err(Error::config(format!("frame speed must be finite and nonnegative, got {v_bar}")));
    }
    let n = coarse.num_cells();
    let mut values = Array2::zeros(coarse.values.dim());
    for (s, mut row) in values.axis_iter_mut(Axis(0)).enumerate() {
        let shift = v_bar * coarse.snapshot_times[s] / coarse.cell_width;
        let src = coarse.profile(s);
        let at = |k: usize| if k < n { src[k] } else { 0.0 };
        let whole = shift.floor();
        let w = shift - whole;
        let offset = whole as usize;
        for i in 0..n {
            let k = i + offset;
            row[i] = if w == 0.0 { at(k) } else { (1.0 - w) * at(k) + w * at(k + 1) };
        }
    }
    Ok(CoarseDensity {
        values,
        window: coarse.window,
        cell_width: coarse.cell_width,
        layer_height: coarse.layer_height,
        snapshot_times: coarse.snapshot_times.clone(),
    })
}
