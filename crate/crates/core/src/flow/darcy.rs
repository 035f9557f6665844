use ndarray::Array2;

use super::{build_conductivity, FlowField, Grid, MediumSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, SymBand};

/// Linear solver selection for the pressure system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Banded Cholesky up to this many unknowns, Jacobi-PCG above.
    pub direct_max_unknowns: usize,
    pub relative_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            direct_max_unknowns: 200_000,
            relative_tolerance: 1e-12,
            max_iterations: 2_000_000,
        }
    }
}

/// Two-point-flux finite-volume solve of `div(kappa grad h) = 0` with default settings.
pub fn solve_darcy(conductivity: &Array2<f64>, spec: &MediumSpec) -> Result<FlowField> {
    solve_darcy_with(conductivity, spec, &SolverSettings::default())
}

pub fn solve_darcy_with(
    conductivity: &Array2<f64>,
    spec: &MediumSpec,
    settings: &SolverSettings,
) -> Result<FlowField> {
    let (nx, ny) = conductivity.dim();
    let grid = Grid::new(spec, nx, ny)?;
    if let Some((idx, &k)) = conductivity
        .indexed_iter()
        .find(|(_, &k)| !(k > 0.0 && k.is_finite()))
    {
        return Err(Error::Solver {
            reason: format!("conductivity {k} at cell {idx:?} is not strictly positive"),
            residual: f64::NAN,
            iterations: 0,
        });
    }

    let dx = grid.dx();
    let dy = grid.dy();
    let h0 = spec.head_left;
    let n = nx * ny;
    let idx = |i: usize, j: usize| i * ny + j;
    let harmonic = |a: f64, b: f64| 2.0 * a * b / (a + b);

    // Transmissibilities: volumetric flux per unit head difference.
    let tx = |i: usize, j: usize| -> f64 {
        // face at x = i * dx
        if i == 0 {
            conductivity[[0, j]] * dy / (0.5 * dx)
        } else if i == nx {
            conductivity[[nx - 1, j]] * dy / (0.5 * dx)
        } else {
            harmonic(conductivity[[i - 1, j]], conductivity[[i, j]]) * dy / dx
        }
    };
    let ty = |i: usize, j: usize| -> f64 {
        // interior face at y = j * dy, 0 < j < ny
        harmonic(conductivity[[i, j - 1]], conductivity[[i, j]]) * dx / dy
    };

    let mut matrix = SymBand::zeros(n, ny);
    let mut rhs = vec![0.0; n];
    for i in 0..nx {
        for j in 0..ny {
            let p = idx(i, j);
            if i == 0 {
                let t = tx(0, j);
                matrix.add(p, p, t);
                rhs[p] += t * h0;
            }
            if i + 1 < nx {
                let t = tx(i + 1, j);
                let q = idx(i + 1, j);
                matrix.add(p, p, t);
                matrix.add(q, q, t);
                matrix.add(q, p, -t);
            } else {
                matrix.add(p, p, tx(nx, j));
            }
            if j + 1 < ny {
                let t = ty(i, j + 1);
                let q = idx(i, j + 1);
                matrix.add(p, p, t);
                matrix.add(q, q, t);
                matrix.add(q, p, -t);
            }
        }
    }

    // Residual `b - A h` summed face by face. Forming `A h` row-wise cancels
    // terms of size `T h0` down to fluxes of size `T dh`; this form keeps the
    // rounding relative to the fluxes, which is what conservation measures.
    let residual = |h: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; n];
        for i in 0..=nx {
            for j in 0..ny {
                let (left, right) = match i {
                    0 => (h0, h[idx(0, j)]),
                    _ if i == nx => (h[idx(nx - 1, j)], 0.0),
                    _ => (h[idx(i - 1, j)], h[idx(i, j)]),
                };
                let f = tx(i, j) * (left - right);
                if i > 0 {
                    r[idx(i - 1, j)] -= f;
                }
                if i < nx {
                    r[idx(i, j)] += f;
                }
            }
        }
        for i in 0..nx {
            for j in 1..ny {
                let f = ty(i, j) * (h[idx(i, j - 1)] - h[idx(i, j)]);
                r[idx(i, j - 1)] -= f;
                r[idx(i, j)] += f;
            }
        }
        r
    };
    let heads = solve_spd(&matrix, &rhs, settings, residual)?;
    let head = Array2::from_shape_fn((nx, ny), |(i, j)| heads[idx(i, j)]);

    let face_velocity_x = Array2::from_shape_fn((nx + 1, ny), |(i, j)| {
        let area = dy;
        let (hl, hr) = if i == 0 {
            (h0, head[[0, j]])
        } else if i == nx {
            (head[[nx - 1, j]], 0.0)
        } else {
            (head[[i - 1, j]], head[[i, j]])
        };
        tx(i, j) * (hl - hr) / area
    });
    let face_velocity_y = Array2::from_shape_fn((nx, ny + 1), |(i, j)| {
        if j == 0 || j == ny {
            0.0
        } else {
            ty(i, j) * (head[[i, j - 1]] - head[[i, j]]) / dx
        }
    });

    Ok(FlowField {
        grid,
        face_velocity_x,
        face_velocity_y,
        head,
    })
}

fn solve_spd<R>(matrix: &SymBand, rhs: &[f64], settings: &SolverSettings, residual: R) -> Result<Vec<f64>>
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    const REFINEMENTS: usize = 3;
    let n = rhs.len();
    let b_norm = linalg::norm(rhs);
    let relative = |r: &[f64]| if b_norm == 0.0 { 0.0 } else { linalg::norm(r) / b_norm };

    let mut x = vec![0.0; n];
    if n <= settings.direct_max_unknowns {
        let factor = matrix.clone().cholesky()?;
        x.copy_from_slice(rhs);
        factor.solve_in_place(&mut x);
        for _ in 0..REFINEMENTS {
            let mut r = residual(&x);
            factor.solve_in_place(&mut r);
            x.iter_mut().zip(&r).for_each(|(x, d)| *x += d);
        }
        let rel = relative(&residual(&x));
        if !(rel <= settings.relative_tolerance) {
            return Err(Error::Solver {
                reason: "direct solve residual above tolerance (ill-conditioned system)".into(),
                residual: rel,
                iterations: 1,
            });
        }
    } else {
        let diag = matrix.diagonal();
        let matvec = |u: &[f64], v: &mut [f64]| matrix.matvec(u, v);
        linalg::pcg(matvec, &diag, rhs, &mut x, settings.relative_tolerance, settings.max_iterations)?;
        // corrections only need a few digits each
        for _ in 0..REFINEMENTS {
            let r = residual(&x);
            if linalg::norm(&r) == 0.0 {
                break;
            }
            let mut d = vec![0.0; n];
            linalg::pcg(matvec, &diag, &r, &mut d, settings.relative_tolerance.max(1e-8), settings.max_iterations)?;
            x.iter_mut().zip(&d).for_each(|(x, d)| *x += d);
        }
    }
    Ok(x)
}

/// Flow through one unit cell under a unit head drop, `[0, l1] x [0, l2]`.
pub fn solve_unit_cell(spec: &MediumSpec, grid_nx: usize, grid_ny: usize) -> Result<FlowField> {
    let cell = spec.unit_cell();
    let k = build_conductivity(&cell, grid_nx, grid_ny)?;
    solve_darcy(&k, &cell)
}
