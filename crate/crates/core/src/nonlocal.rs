//! Piecewise-constant nonlocal diffusion with a separable dynamic kernel
//! `phi_j * t^p`, advanced by implicit Euler with a zero exterior collar.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::coarse::{owning_cell, BreakthroughCurve};
use crate::error::{Error, Result};
use crate::linalg::{BandLu, BandMatrix};

/// Cell-integrated spatial kernel and temporal exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRecord", into = "KernelRecord")]
pub struct DynamicKernel {
    phi: Vec<f64>,
    p: f64,
    cell_width: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelRecord {
    phi: Vec<f64>,
    p: f64,
    #[serde(rename = "N_delta")]
    horizon_cells: usize,
    l1: f64,
}

impl TryFrom<KernelRecord> for DynamicKernel {
    type Error = Error;

    fn try_from(r: KernelRecord) -> Result<Self> {
        if r.phi.len() != 2 * r.horizon_cells + 1 {
            return Err(Error::format(format!(
                "kernel has {} weights but N_delta = {} needs {}",
                r.phi.len(),
                r.horizon_cells,
                2 * r.horizon_cells + 1
            )));
        }
        DynamicKernel::new(r.phi, r.p, r.l1)
    }
}

impl From<DynamicKernel> for KernelRecord {
    fn from(k: DynamicKernel) -> Self {
        KernelRecord {
            horizon_cells: k.horizon_cells(),
            phi: k.phi,
            p: k.p,
            l1: k.cell_width,
        }
    }
}

impl DynamicKernel {
    /// `phi` lists `phi_{-Nd} .. phi_{Nd}`.
    pub fn new(phi: Vec<f64>, p: f64, cell_width: f64) -> Result<Self> {
        if phi.len() < 3 || phi.len() % 2 == 0 {
            return Err(Error::config(format!(
                "kernel needs an odd number (>= 3) of weights, got {}",
                phi.len()
            )));
        }
        if let Some(v) = phi.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::config(format!("kernel weights must be finite and nonnegative, got {v}")));
        }
        if !p.is_finite() {
            return Err(Error::config("temporal exponent must be finite"));
        }
        if !(cell_width > 0.0 && cell_width.is_finite()) {
            return Err(Error::config("cell width must be positive"));
        }
        Ok(Self { phi, p, cell_width })
    }

    /// Mirror-symmetric kernel from `phi_0` and `phi_1 .. phi_Nd`.
    pub fn symmetric(center: f64, half: &[f64], p: f64, cell_width: f64) -> Result<Self> {
        let phi = half.iter().rev().chain(std::iter::once(&center)).chain(half).copied().collect();
        Self::new(phi, p, cell_width)
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn horizon_cells(&self) -> usize {
        self.phi.len() / 2
    }

    pub fn horizon(&self) -> f64 {
        self.horizon_cells() as f64 * self.cell_width
    }

    pub fn weight(&self, j: isize) -> f64 {
        self.phi[(j + self.horizon_cells() as isize) as usize]
    }

    /// Offsets `-Nd ..= Nd` paired with their weights.
    pub fn stencil(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        let nd = self.horizon_cells() as isize;
        (-nd..=nd).zip(self.phi.iter().copied())
    }

    /// `sum_j phi_j j^k` over `j != 0`. `phi_0` multiplies `c_i - c_i` and
    /// never enters the operator.
    pub fn moment(&self, order: u32) -> f64 {
        // summed over mirrored pairs, so odd moments of symmetric kernels are exactly 0
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        (1..=self.horizon_cells() as isize)
            .map(|j| (j as f64).powi(order as i32) * (self.weight(j) + sign * self.weight(-j)))
            .sum()
    }

    /// `(sum_j j phi_j)^2`.
    pub fn advective_penalty(&self) -> f64 {
        self.moment(1).powi(2)
    }

    /// `sum_j phi_j (j l1)^2`: MSD growth rate per unit `theta`.
    pub fn msd_rate(&self) -> f64 {
        self.moment(2) * self.cell_width * self.cell_width
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(format!("kernel JSON: {e}")))
    }
}

/// Banded `A` with `(A c)_i = sum_j phi_j (c_{i+j} - c_i)`, zero outside `0..n`.
pub fn assemble_operator(kernel: &DynamicKernel, n: usize) -> Result<BandMatrix> {
    stencil_operator(kernel.phi(), n)
}

pub(crate) fn stencil_operator(phi: &[f64], n: usize) -> Result<BandMatrix> {
    let nd = phi.len() / 2;
    if n <= 2 * nd {
        return Err(Error::config(format!(
            "{n} cells cannot hold a stencil of horizon {nd}; need more than {}",
            2 * nd
        )));
    }
    let total: f64 = phi.iter().enumerate().filter(|(k, _)| *k != nd).map(|(_, w)| w).sum();
    let mut a = BandMatrix::zeros(n, nd, nd);
    for i in 0..n {
        a.set(i, i, -total);
        for (k, &w) in phi.iter().enumerate() {
            if k == nd {
                continue;
            }
            let col = i as isize + k as isize - nd as isize;
            if (0..n as isize).contains(&col) {
                a.add(i, col as usize, w);
            }
        }
    }
    Ok(a)
}

/// `theta` applied over the step `[t0, t1]` and its derivative in `p`.
///
/// Fully implicit `t1^p`, except on a step starting at 0 where the step
/// average `dt^p / (p + 1)` keeps `p in (-1, 0)` finite.
pub fn theta_step(p: f64, t0: f64, t1: f64) -> Result<(f64, f64)> {
    if t0 <= 0.0 {
        if p <= -1.0 {
            return Err(Error::numerical(format!("t^p with p = {p} is not integrable at t = 0")));
        }
        let dt = t1 - t0;
        let v = dt.powf(p) / (p + 1.0);
        Ok((v, v * (dt.ln() - 1.0 / (p + 1.0))))
    } else {
        let v = t1.powf(p);
        Ok((v, v * t1.ln()))
    }
}

pub fn theta_schedule(p: f64, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times.windows(2).map(|w| theta_step(p, w[0], w[1])).collect()
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::config("time grid needs at least two points"));
    }
    if !(times[0] >= 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("time grid must start at t >= 0 and increase strictly"));
    }
    Ok(())
}

/// `times[k] = k * dt` for `k = 0..=steps`; identical to the particle snapshot grid.
pub fn uniform_times(dt: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 * dt).collect()
}

/// Reuses the last factorization while the step matrix is unchanged.
pub(crate) struct StepFactors<'a> {
    operator: &'a BandMatrix,
    key: Option<f64>,
    lu: Option<BandLu>,
}

impl<'a> StepFactors<'a> {
    pub(crate) fn new(operator: &'a BandMatrix) -> Self {
        Self { operator, key: None, lu: None }
    }

    /// Factor of `I - scale * A`.
    pub(crate) fn get(&mut self, scale: f64) -> Result<&BandLu> {
        if self.key != Some(scale) || self.lu.is_none() {
            let n = self.operator.dim();
            let (kl, ku) = (self.operator.lower(), self.operator.upper());
            let lu = BandMatrix::identity(n, kl, ku).axpy(-scale, self.operator).lu()?;
            self.lu = Some(lu);
            self.key = Some(scale);
        }
        Ok(self.lu.as_ref().expect("set above"))
    }
}

/// Implicit Euler `(I - dt_n theta_n A) c_{n+1} = c_n` over `times`;
/// row `n` of the result is the state at `times[n]`.
pub fn evolve(operator: &BandMatrix, coefficients: &[f64], times: &[f64], initial: &[f64]) -> Result<Array2<f64>> {
    check_times(times)?;
    let n = operator.dim();
    if initial.len() != n {
        return Err(Error::config(format!("initial condition has {} cells, operator {n}", initial.len())));
    }
    if coefficients.len() + 1 != times.len() {
        return Err(Error::config("one coefficient per time step required"));
    }
    let mut out = Array2::zeros((times.len(), n));
    out.row_mut(0).assign(&ArrayView1::from(initial));
    let mut factors = StepFactors::new(operator);
    let mut c = initial.to_vec();
    for (k, w) in times.windows(2).enumerate() {
        let scale = (w[1] - w[0]) * coefficients[k];
        if !scale.is_finite() || scale < 0.0 {
            return Err(Error::numerical(format!("step {k} has invalid coefficient {}", coefficients[k])));
        }
        factors.get(scale)?.solve_in_place(&mut c);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("non-finite state after step {k}")));
        }
        out.row_mut(k + 1).assign(&ArrayView1::from(&c[..]));
    }
    Ok(out)
}

/// Single implicit step from `t_next - dt` to `t_next`.
pub fn step_implicit(c: &[f64], kernel: &DynamicKernel, t_next: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_next > 0.0) || t_next - dt < -1e-12 * t_next {
        return Err(Error::config(format!("invalid step to t = {t_next} with dt = {dt}")));
    }
    let a = assemble_operator(kernel, c.len())?;
    let (theta, _) = theta_step(kernel.p(), (t_next - dt).max(0.0), t_next)?;
    let mut out = c.to_vec();
    StepFactors::new(&a).get(dt * theta)?.solve_in_place(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// Unit value in one 0-based cell.
    Spike { cell: usize },
    Profile { values: Vec<f64> },
}

impl InitialCondition {
    pub fn values(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Self::Spike { cell } if *cell < n => {
                let mut v = vec![0.0; n];
                v[*cell] = 1.0;
                Ok(v)
            }
            Self::Spike { cell } => Err(Error::config(format!("spike cell {cell} outside 0..{n}"))),
            Self::Profile { values } if values.len() == n => {
                if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::config("initial profile must be finite and nonnegative"));
                }
                Ok(values.clone())
            }
            Self::Profile { values } => Err(Error::config(format!(
                "initial profile has {} cells, model has {n}",
                values.len()
            ))),
        }
    }
}

/// Coarse model states on the solver time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalSolution {
    /// `values[[n, i]]`: time `times[n]`, cell `i` (0-based).
    pub values: Array2<f64>,
    pub times: Vec<f64>,
    pub cell_width: f64,
    pub initial: InitialCondition,
}

impl NonlocalSolution {
    pub fn num_cells(&self) -> usize {
        self.values.ncols()
    }

    pub fn profile(&self, n: usize) -> ArrayView1<'_, f64> {
        self.values.row(n)
    }

    pub fn moments(&self, n: usize) -> ProfileMoments {
        ProfileMoments::of(self.profile(n), self.cell_width)
    }

    pub fn msd(&self) -> Vec<f64> {
        (0..self.times.len()).map(|n| self.moments(n).variance).collect()
    }

    pub fn model_btc(&self, locations: &[f64]) -> Result<Vec<BreakthroughCurve>> {
        locations
            .iter()
            .map(|&x| {
                let cell = owning_cell(x, self.cell_width, self.num_cells())?;
                BreakthroughCurve::new(x, self.times.clone(), self.values.column(cell).to_vec())
            })
            .collect()
    }
}

pub fn solve(kernel: &DynamicKernel, n: usize, initial: &InitialCondition, times: &[f64]) -> Result<NonlocalSolution> {
    let a = assemble_operator(kernel, n)?;
    check_times(times)?;
    let theta: Vec<f64> = theta_schedule(kernel.p(), times)?.into_iter().map(|t| t.0).collect();
    let values = evolve(&a, &theta, times, &initial.values(n)?)?;
    Ok(NonlocalSolution {
        values,
        times: times.to_vec(),
        cell_width: kernel.cell_width(),
        initial: initial.clone(),
    })
}

/// Mass-weighted moments of a piecewise-constant profile with cell centres
/// at `(i + 1/2) l1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileMoments {
    /// `sum_i c_i` (cell values, not integrated).
    pub mass: f64,
    pub mean: f64,
    pub variance: f64,
}

impl ProfileMoments {
    pub fn of(profile: ArrayView1<'_, f64>, cell_width: f64) -> Self {
        let x = |i: usize| (i as f64 + 0.5) * cell_width;
        let mass: f64 = profile.sum();
        let mean = profile.iter().enumerate().map(|(i, c)| c * x(i)).sum::<f64>() / mass;
        let variance = profile.iter().enumerate().map(|(i, c)| c * (x(i) - mean).powi(2)).sum::<f64>() / mass;
        Self { mass, mean, variance }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(phi: Vec<f64>, p: f64) -> DynamicKernel {
        DynamicKernel::new(phi, p, 0.5).unwrap()
    }

    #[test]
    fn zero_kernel_gives_zero_operator() {
        let a = assemble_operator(&kernel(vec![0.0; 5], 0.0), 10).unwrap();
        assert!(a.to_dense().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn nearest_neighbour_kernel_is_laplacian() {
        let a = assemble_operator(&kernel(vec![1.0, 0.0, 1.0], 0.0), 6).unwrap();
        for i in 1..5 {
            assert_eq!((a.get(i, i - 1), a.get(i, i), a.get(i, i + 1)), (1.0, -2.0, 1.0));
        }
    }

    #[test]
    fn interior_rows_sum_to_zero() {
        let k = kernel(vec![0.3, 0.7, 5.0, 0.1, 0.2], 0.0);
        let a = assemble_operator(&k, 12).unwrap();
        for i in 2..10 {
            let s: f64 = a.row_range(i).map(|j| a.get(i, j)).sum();
            assert!(s.abs() < 1e-15);
        }
        // boundary rows leak into the collar
        assert!(a.row_range(0).map(|j| a.get(0, j)).sum::<f64>() < 0.0);
    }

    #[test]
    fn operator_needs_room() {
        assert!(assemble_operator(&kernel(vec![1.0; 9], 0.0), 8).is_err());
        assert!(assemble_operator(&kernel(vec![1.0; 9], 0.0), 9).is_ok());
    }

    #[test]
    fn kernel_validation() {
        assert!(DynamicKernel::new(vec![1.0, 1.0], 0.0, 1.0).is_err());
        assert!(DynamicKernel::new(vec![1.0, -1e-3, 1.0], 0.0, 1.0).is_err());
        assert!(DynamicKernel::new(vec![1.0, f64::NAN, 1.0], 0.0, 1.0).is_err());
        let k = DynamicKernel::symmetric(0.5, &[1.0, 2.0], 0.3, 1.0).unwrap();
        assert_eq!(k.phi(), &[2.0, 1.0, 0.5, 1.0, 2.0]);
        assert_eq!(k.advective_penalty(), 0.0);
        assert_eq!(k.moment(2), 2.0 * (1.0 + 8.0));
    }

    #[test]
    fn kernel_json_round_trip() {
        let k = kernel(vec![0.1, 0.123456789012345, 0.0, 3.0e-17, 1.0], -0.25);
        let text = k.to_json();
        assert!(text.contains("\"N_delta\": 2"));
        assert_eq!(DynamicKernel::from_json(&text).unwrap(), k);
        let bad = text.replace("\"N_delta\": 2", "\"N_delta\": 3");
        assert!(DynamicKernel::from_json(&bad).is_err());
    }

    #[test]
    fn theta_rules() {
        assert_eq!(theta_step(0.0, 0.0, 0.1).unwrap().0, 1.0);
        assert_eq!(theta_step(0.0, 0.3, 0.4).unwrap().0, 1.0);
        let (v, _) = theta_step(-0.5, 0.0, 0.04).unwrap();
        assert!((v - 0.04f64.powf(-0.5) / 0.5).abs() < 1e-12);
        assert!(theta_step(-1.0, 0.0, 0.1).is_err());
        assert!(theta_step(-1.5, 0.2, 0.3).unwrap().0.is_finite());
        for (p, t0, t1) in [(1.2, 0.0, 0.1), (1.2, 2.0, 2.1), (-0.4, 0.0, 0.1), (0.7, 0.5, 0.6)] {
            let h = 1e-6;
            let fd = (theta_step(p + h, t0, t1).unwrap().0 - theta_step(p - h, t0, t1).unwrap().0) / (2.0 * h);
            let d = theta_step(p, t0, t1).unwrap().1;
            assert!((fd - d).abs() < 1e-7 * d.abs().max(1.0), "{p} {t0}: {fd} vs {d}");
        }
    }

    #[test]
    fn zero_kernel_freezes_state() {
        let k = kernel(vec![0.0; 3], 1.0);
        let c = vec![0.0, 1.0, 2.0, 0.5];
        assert_eq!(step_implicit(&c, &k, 0.1, 0.1).unwrap(), c);
        let sol = solve(&k, 10, &InitialCondition::Spike { cell: 4 }, &uniform_times(0.1, 20)).unwrap();
        let btc = sol.model_btc(&[4.2 * 0.5, 7.5 * 0.5]).unwrap();
        assert!(btc[0].values.iter().all(|&v| v == 1.0));
        assert!(btc[1].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn btc_is_solution_column() {
        let k = kernel(vec![0.2, 0.1, 0.2], 0.5);
        let sol = solve(&k, 20, &InitialCondition::Spike { cell: 6 }, &uniform_times(0.1, 30)).unwrap();
        let btc = sol.model_btc(&[3.6]).unwrap();
        assert_eq!(btc[0].values, sol.values.column(7).to_vec());
        assert!(sol.model_btc(&[0.0]).is_err());
        assert!(sol.model_btc(&[10.0]).is_err());
    }

    #[test]
    fn symmetric_spike_stays_symmetric() {
        let k = DynamicKernel::symmetric(0.0, &[0.4, 0.2, 0.05], 0.8, 0.5).unwrap();
        let sol = solve(&k, 41, &InitialCondition::Spike { cell: 20 }, &uniform_times(0.1, 50)).unwrap();
        for n in 0..sol.times.len() {
            for d in 1..=20 {
                assert!((sol.values[[n, 20 - d]] - sol.values[[n, 20 + d]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_decays_monotonically_and_stays_nonnegative() {
        let k = kernel(vec![0.5, 1.0, 0.0, 0.3, 2.0], 0.4);
        let sol = solve(&k, 15, &InitialCondition::Spike { cell: 3 }, &uniform_times(0.05, 200)).unwrap();
        assert!(sol.values.iter().all(|&v| v >= 0.0));
        let mass: Vec<f64> = (0..sol.times.len()).map(|n| sol.moments(n).mass).collect();
        assert!(mass.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(mass.last().unwrap() < &0.5);
    }

    #[test]
    fn profile_and_spike_initial_conditions() {
        assert_eq!(InitialCondition::Spike { cell: 2 }.values(4).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        assert!(InitialCondition::Spike { cell: 4 }.values(4).is_err());
        assert!(InitialCondition::Profile { values: vec![1.0] }.values(2).is_err());
        assert!(InitialCondition::Profile { values: vec![1.0, -1.0] }.values(2).is_err());
    }
}
