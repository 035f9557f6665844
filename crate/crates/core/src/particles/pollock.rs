//! Pollock's semi-analytical tracking.
//!
//! Inside a grid cell each velocity component varies linearly between its
//! two faces, `v(x) = v_lo + a (x - x_lo)` with `a = (v_hi - v_lo) / h`, so
//! `dx/dt = v(x)` integrates to `x(t) = x_p + v_p t (e^{a t} - 1) / (a t)`
//! and the time to reach a face is `ln(v_face / v_p) / a`. Particles hop
//! from face to face; snapshots are evaluated from the closed form and never
//! influence the hop sequence.

use ndarray::Array2;
use rayon::prelude::*;

use super::{Fate, ParticleEnsemble, TrackingConfig};
use crate::error::{Error, Result};
use crate::flow::FlowField;

/// Stagnation floor relative to the mean speed of the field.
const STAGNATION_FLOOR: f64 = 1e-14;
/// Safety valve against zero-length hop cycles at corners.
const MAX_ZERO_HOPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Low,
    High,
}

/// `(e^z - 1) / z`, continuous at zero.
#[inline]
fn exprel(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// `ln(1 + z) / z`, continuous at zero.
#[inline]
fn log1p_ratio(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.ln_1p() / z
    }
}

/// Position along one axis after `tau` inside `[lo, lo + h]`.
#[inline]
fn advance_1d(p: f64, lo: f64, v_lo: f64, v_hi: f64, h: f64, tau: f64) -> f64 {
    let a = (v_hi - v_lo) / h;
    let vp = v_lo + a * (p - lo);
    p + vp * tau * exprel(a * tau)
}

/// Time for a particle at `p` to reach one of the faces `lo`, `lo + h`,
/// given linear velocity `v_lo -> v_hi` between them.
///
/// Returns `None` when the particle never leaves along this axis (velocity
/// below `floor` or a stagnation point between the particle and the face).
pub fn exit_time_1d(p: f64, lo: f64, v_lo: f64, v_hi: f64, h: f64, floor: f64) -> Option<(f64, Side)> {
    let a = (v_hi - v_lo) / h;
    let vp = v_lo + a * (p - lo);
    let (d, side) = if vp > floor {
        if v_hi <= 0.0 {
            return None;
        }
        (lo + h - p, Side::High)
    } else if vp < -floor {
        if v_lo >= 0.0 {
            return None;
        }
        (lo - p, Side::Low)
    } else {
        return None;
    };
    let z = a * d / vp;
    let t = (d / vp) * log1p_ratio(z);
    if t.is_finite() {
        Some((t.max(0.0), side))
    } else {
        None
    }
}

/// Tracks particles through one flow field, recording fixed snapshot times.
#[derive(Debug, Clone)]
pub struct Tracker<'a> {
    flow: &'a FlowField,
    dx: f64,
    dy: f64,
    length: f64,
    floor: f64,
    times: Vec<f64>,
}

/// One particle's recorded path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub fate: Fate,
}

impl<'a> Tracker<'a> {
    pub fn new(flow: &'a FlowField, snapshot_times: Vec<f64>) -> Self {
        let floor = STAGNATION_FLOOR * flow.mean_speed();
        Self {
            flow,
            dx: flow.grid.dx(),
            dy: flow.grid.dy(),
            length: flow.grid.length(),
            floor,
            times: snapshot_times,
        }
    }

    pub fn snapshot_times(&self) -> &[f64] {
        &self.times
    }

    /// Advances one particle from `(x, y)` at `t = 0` through all snapshots.
    pub fn trace(&self, x0: f64, y0: f64) -> Trajectory {
        let n = self.times.len();
        let nx = self.flow.grid.nx;
        let fx = &self.flow.face_velocity_x;
        let fy = &self.flow.face_velocity_y;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let (mut i, mut j) = self.flow.locate(x0, y0);
        let (mut x, mut y) = (x0, y0);
        let mut t = 0.0;
        let mut zero_hops = 0usize;
        let mut fate = Fate::Active;

        let fill = |xs: &mut Vec<f64>, ys: &mut Vec<f64>, x: f64, y: f64| {
            while xs.len() < n {
                xs.push(x);
                ys.push(y);
            }
        };

        loop {
            let xlo = i as f64 * self.dx;
            let ylo = j as f64 * self.dy;
            let (vx0, vx1) = (fx[[i, j]], fx[[i + 1, j]]);
            let (vy0, vy1) = (fy[[i, j]], fy[[i, j + 1]]);
            let vxp = vx0 + (vx1 - vx0) / self.dx * (x - xlo);
            let vyp = vy0 + (vy1 - vy0) / self.dy * (y - ylo);
            if vxp.hypot(vyp) <= self.floor {
                fate = Fate::Stagnant { snapshot: xs.len() };
                fill(&mut xs, &mut ys, x, y);
                break;
            }

            let ex = exit_time_1d(x, xlo, vx0, vx1, self.dx, self.floor);
            let ey = exit_time_1d(y, ylo, vy0, vy1, self.dy, self.floor);
            let exit = match (ex, ey) {
                (Some((tx, sx)), Some((ty, sy))) => {
                    if tx <= ty {
                        Some((tx, true, sx))
                    } else {
                        Some((ty, false, sy))
                    }
                }
                (Some((tx, sx)), None) => Some((tx, true, sx)),
                (None, Some((ty, sy))) => Some((ty, false, sy)),
                (None, None) => None,
            };
            let te = exit.map_or(f64::INFINITY, |e| e.0);

            while xs.len() < n && self.times[xs.len()] - t <= te {
                let tau = self.times[xs.len()] - t;
                xs.push(advance_1d(x, xlo, vx0, vx1, self.dx, tau).clamp(xlo, xlo + self.dx));
                ys.push(advance_1d(y, ylo, vy0, vy1, self.dy, tau).clamp(ylo, ylo + self.dy));
            }
            if xs.len() == n {
                break;
            }
            let Some((te, along_x, side)) = exit else {
                // Trapped approaching an internal stagnation point.
                fate = Fate::Stagnant { snapshot: xs.len() };
                break;
            };

            if te == 0.0 {
                zero_hops += 1;
                if zero_hops > MAX_ZERO_HOPS {
                    fate = Fate::Stagnant { snapshot: xs.len() };
                    fill(&mut xs, &mut ys, x, y);
                    break;
                }
            } else {
                zero_hops = 0;
            }

            t += te;
            if along_x {
                y = advance_1d(y, ylo, vy0, vy1, self.dy, te).clamp(ylo, ylo + self.dy);
                match side {
                    Side::High => {
                        i += 1;
                        x = i as f64 * self.dx;
                        if i == nx {
                            x = self.length;
                            fate = Fate::Exited { snapshot: xs.len() };
                            fill(&mut xs, &mut ys, x, y);
                            break;
                        }
                    }
                    Side::Low => {
                        x = xlo;
                        if i == 0 {
                            // inflow boundary; cannot be crossed outward
                            fate = Fate::Stagnant { snapshot: xs.len() };
                            fill(&mut xs, &mut ys, x, y);
                            break;
                        }
                        i -= 1;
                    }
                }
            } else {
                x = advance_1d(x, xlo, vx0, vx1, self.dx, te).clamp(xlo, xlo + self.dx);
                match side {
                    Side::High => {
                        y = ylo + self.dy;
                        if j + 1 == self.flow.grid.ny {
                            fate = Fate::Stagnant { snapshot: xs.len() };
                            fill(&mut xs, &mut ys, x, y);
                            break;
                        }
                        j += 1;
                    }
                    Side::Low => {
                        y = ylo;
                        if j == 0 {
                            fate = Fate::Stagnant { snapshot: xs.len() };
                            fill(&mut xs, &mut ys, x, y);
                            break;
                        }
                        j -= 1;
                    }
                }
            }
        }

        Trajectory { x: xs, y: ys, fate }
    }
}

/// Tracks every particle from its initial position and records snapshots
/// every `cfg.dt` up to `cfg.t_end`.
pub fn track(flow: &FlowField, positions: &[(f64, f64)], cfg: &TrackingConfig) -> Result<ParticleEnsemble> {
    cfg.validate(flow.grid.num_cells)?;
    let length = flow.grid.length();
    let height = flow.grid.layer_height;
    if let Some(&(x, y)) = positions
        .iter()
        .find(|(x, y)| !(*x >= 0.0 && *x < length && *y >= 0.0 && *y <= height))
    {
        return Err(Error::config(format!("particle position ({x}, {y}) outside the domain")));
    }
    let tracker = Tracker::new(flow, cfg.snapshot_times());
    let paths: Vec<Trajectory> = positions.par_iter().map(|&(x, y)| tracker.trace(x, y)).collect();
    let ns = tracker.times.len();
    let np = positions.len();
    let x = Array2::from_shape_fn((ns, np), |(s, p)| paths[p].x[s]);
    let y = Array2::from_shape_fn((ns, np), |(s, p)| paths[p].y[s]);
    Ok(ParticleEnsemble {
        snapshot_times: tracker.times,
        x,
        y,
        fate: paths.into_iter().map(|p| p.fate).collect(),
    })
}
