use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrackingConfig;
use crate::error::{Error, Result};
use crate::flow::FlowField;

pub fn injection_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Samples `cfg.num_particles` starting points in unit cell `C_k` with
/// density proportional to the interpolated speed `|v(x, y)|`.
///
/// Rejection sampling against the cell's maximum speed. Within a grid cell
/// `|v|^2` is a sum of a convex function of `x` and one of `y`, so the
/// maximum sits on a grid-cell corner.
pub fn inject(flow: &FlowField, cfg: &TrackingConfig) -> Result<Vec<(f64, f64)>> {
    let grid = &flow.grid;
    cfg.validate(grid.num_cells)?;
    let per = grid.cells_per_unit();
    let first = (cfg.injection_cell - 1) * per;
    let x_lo = (cfg.injection_cell - 1) as f64 * grid.cell_width;

    let mut vmax = 0.0f64;
    for i in first..first + per {
        for j in 0..grid.ny {
            for vx in [flow.face_velocity_x[[i, j]], flow.face_velocity_x[[i + 1, j]]] {
                for vy in [flow.face_velocity_y[[i, j]], flow.face_velocity_y[[i, j + 1]]] {
                    vmax = vmax.max(vx.hypot(vy));
                }
            }
        }
    }
    if !(vmax > 0.0) || !vmax.is_finite() {
        return Err(Error::Injection(format!(
            "velocity vanishes everywhere in unit cell {}",
            cfg.injection_cell
        )));
    }

    let mut rng = injection_rng(cfg.rng_seed);
    let mut out = Vec::with_capacity(cfg.num_particles);
    while out.len() < cfg.num_particles {
        let x = x_lo + rng.gen::<f64>() * grid.cell_width;
        let y = rng.gen::<f64>() * grid.layer_height;
        let (vx, vy) = flow.velocity_at(x, y);
        if rng.gen::<f64>() * vmax < vx.hypot(vy) {
            out.push((x, y));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{build_conductivity, solve_darcy, MediumSpec};

    fn cfg(k: usize, n: usize, seed: u64) -> TrackingConfig {
        TrackingConfig {
            injection_cell: k,
            num_particles: n,
            dt: 0.1,
            t_end: 1.0,
            rng_seed: seed,
        }
    }

    /// Asymptotic Kolmogorov distribution tail, P(K > lambda).
    fn kolmogorov_q(lambda: f64) -> f64 {
        let mut s = 0.0;
        for k in 1..100 {
            let k = k as f64;
            s += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        }
        s.clamp(0.0, 1.0)
    }

    fn ks_uniform_pvalue(mut u: Vec<f64>) -> f64 {
        u.sort_by(f64::total_cmp);
        let n = u.len() as f64;
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
            .fold(0.0, f64::max);
        let sn = n.sqrt();
        kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
    }

    #[test]
    fn homogeneous_injection_is_uniform() {
        let spec = MediumSpec {
            kappa_inclusion: 1.0,
            num_cells: 5,
            ..MediumSpec::reference()
        };
        let k = build_conductivity(&spec, 50, 10).unwrap();
        let flow = solve_darcy(&k, &spec).unwrap();
        let pts = inject(&flow, &cfg(3, 10_000, 7)).unwrap();
        assert_eq!(pts.len(), 10_000);
        let x0 = 2.0 * spec.cell_width;
        let ux: Vec<f64> = pts.iter().map(|p| (p.0 - x0) / spec.cell_width).collect();
        let uy: Vec<f64> = pts.iter().map(|p| p.1 / spec.layer_height).collect();
        assert!(ux.iter().all(|&u| (0.0..1.0).contains(&u)));
        assert!(ks_uniform_pvalue(ux) > 0.01);
        assert!(ks_uniform_pvalue(uy) > 0.01);
    }

    #[test]
    fn injection_is_reproducible() {
        let spec = MediumSpec {
            num_cells: 2,
            ..MediumSpec::reference()
        };
        let k = build_conductivity(&spec, 20, 10).unwrap();
        let flow = solve_darcy(&k, &spec).unwrap();
        assert_eq!(inject(&flow, &cfg(1, 100, 3)).unwrap(), inject(&flow, &cfg(1, 100, 3)).unwrap());
        assert_ne!(inject(&flow, &cfg(1, 100, 3)).unwrap(), inject(&flow, &cfg(1, 100, 4)).unwrap());
    }

    #[test]
    fn zero_velocity_cell_is_an_error() {
        let spec = MediumSpec {
            num_cells: 2,
            head_left: 0.0,
            ..MediumSpec::reference()
        };
        let k = build_conductivity(&spec, 20, 10).unwrap();
        let flow = solve_darcy(&k, &spec).unwrap();
        assert!(matches!(inject(&flow, &cfg(1, 10, 0)), Err(Error::Injection(_))));
    }
}
