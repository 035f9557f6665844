//! Fitting coarse models to breakthrough curves: squared-error loss plus a
//! drift penalty, gradients by the discrete adjoint of the implicit stepper,
//! and L-BFGS on softplus-reparameterized weights.

mod lbfgs;

pub use lbfgs::{minimize, Minimum, OptimizerSettings, Termination, TraceEntry};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fractal_schedule, ClassicalParams, FractalParams, SurrogateNet};
use crate::coarse::{owning_cell, BreakthroughCurve};
use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::nonlocal::{
    check_times, stencil_operator, theta_schedule, uniform_times, DynamicKernel, InitialCondition, StepFactors,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Nonlocal,
    Fractal,
    Classical,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Nonlocal => "nonlocal",
            Self::Fractal => "fractal",
            Self::Classical => "classical",
        }
    }
}

/// Discretization shared by the model and the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelTemplate {
    /// `N_delta`; ignored by the local baselines, which use one neighbour.
    pub horizon_cells: usize,
    pub cell_width: f64,
    pub num_cells: usize,
    pub dt: f64,
}

pub fn softplus(r: f64) -> f64 {
    if r > 0.0 {
        r + (-r).exp().ln_1p()
    } else {
        r.exp().ln_1p()
    }
}

/// `softplus'`, flushed to zero below `1e-300`.
pub fn softplus_derivative(r: f64) -> f64 {
    let s = if r >= 0.0 {
        1.0 / (1.0 + (-r).exp())
    } else {
        let e = r.exp();
        e / (1.0 + e)
    };
    if s < 1e-300 {
        0.0
    } else {
        s
    }
}

/// `softplus^-1`, for initializing raw parameters from positive values.
pub fn softplus_inverse(v: f64) -> f64 {
    if v > 30.0 {
        v + (-(-v).exp()).ln_1p()
    } else {
        v.exp_m1().ln()
    }
}

/// Parameters of a fitted model in physical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedParams {
    Nonlocal { kernel: DynamicKernel },
    Fractal(FractalParams),
    Classical(ClassicalParams),
    Mlp(SurrogateNet),
}

impl FittedParams {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Nonlocal { .. } => "nonlocal",
            Self::Fractal(_) => "fractal",
            Self::Classical(_) => "classical",
            Self::Mlp(_) => "mlp",
        }
    }
}

/// Stencil weights and time coefficients for one raw parameter vector, with
/// what the chain rule needs.
struct Realization {
    phi: Vec<f64>,
    /// `(stencil index, raw index, d phi / d raw)`.
    phi_jacobian: Vec<(usize, usize, f64)>,
    coefficients: Vec<f64>,
    /// Raw index of the temporal exponent and `d coefficient_n / d exponent`.
    time_derivative: Option<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct LearningProblem {
    curves: Vec<BreakthroughCurve>,
    cells: Vec<usize>,
    times: Vec<f64>,
    pub beta: f64,
    pub model: ModelKind,
    pub template: KernelTemplate,
    pub initial: InitialCondition,
    initial_values: Vec<f64>,
    pub optimizer: OptimizerSettings,
}

/// `(loss, MSE, M)` with `loss = MSE + beta * M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub loss: f64,
    pub mse: f64,
    pub penalty: f64,
}

impl LearningProblem {
    /// Curves are ordered by location, so the loss does not depend on the
    /// order they are given in. Every curve must sample `k * dt`.
    pub fn new(
        mut curves: Vec<BreakthroughCurve>,
        beta: f64,
        model: ModelKind,
        template: KernelTemplate,
        initial: InitialCondition,
        optimizer: OptimizerSettings,
    ) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::config(format!("penalty weight must be finite and >= 0, got {beta}")));
        }
        if curves.is_empty() {
            return Err(Error::config("at least one training curve is required"));
        }
        let scales = &optimizer.start_scales;
        if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::config("start_scales must be a nonempty list of positive numbers"));
        }
        if !(template.dt > 0.0) || !(template.cell_width > 0.0) {
            return Err(Error::config("template needs positive dt and cell width"));
        }
        let horizon = if model == ModelKind::Nonlocal { template.horizon_cells } else { 1 };
        if horizon == 0 || template.num_cells <= 2 * horizon {
            return Err(Error::config(format!(
                "{} cells cannot hold a stencil of horizon {horizon}",
                template.num_cells
            )));
        }
        curves.sort_by(|a, b| a.location.total_cmp(&b.location));
        let steps = curves[0].times.len().saturating_sub(1);
        let times = uniform_times(template.dt, steps);
        check_times(&times)?;
        for c in &curves {
            if c.times != times {
                return Err(Error::config(format!(
                    "curve at x = {} is not sampled on the solver grid k * {}",
                    c.location, template.dt
                )));
            }
        }
        let cells = curves
            .iter()
            .map(|c| owning_cell(c.location, template.cell_width, template.num_cells))
            .collect::<Result<Vec<_>>>()?;
        let initial_values = initial.values(template.num_cells)?;
        Ok(Self {
            curves,
            cells,
            times,
            beta,
            model,
            template,
            initial,
            initial_values,
            optimizer,
        })
    }

    pub fn curves(&self) -> &[BreakthroughCurve] {
        &self.curves
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn num_parameters(&self) -> usize {
        match self.model {
            ModelKind::Nonlocal => 2 * self.template.horizon_cells + 2,
            ModelKind::Fractal => 2,
            ModelKind::Classical => 1,
        }
    }

    /// Documented starting point: every `phi_j = 0.1` (or `D = 0.1 l1^2`)
    /// and a zero temporal exponent.
    pub fn initial_parameters(&self) -> Vec<f64> {
        self.initial_parameters_at(0.1)
    }

    /// Symmetric start with every weight equal to `scale`.
    pub fn initial_parameters_at(&self, scale: f64) -> Vec<f64> {
        let r = softplus_inverse(scale);
        match self.model {
            ModelKind::Nonlocal => {
                let mut v = vec![r; 2 * self.template.horizon_cells + 1];
                v.push(0.0);
                v
            }
            ModelKind::Fractal => vec![r, 0.0],
            ModelKind::Classical => vec![r],
        }
    }

    /// Raw parameters reproducing given physical ones (inverse of the map).
    pub fn raw_parameters(&self, params: &FittedParams) -> Result<Vec<f64>> {
        let l2 = self.template.cell_width.powi(2);
        let raw = match (self.model, params) {
            (ModelKind::Nonlocal, FittedParams::Nonlocal { kernel }) => {
                if kernel.horizon_cells() != self.template.horizon_cells {
                    return Err(Error::config("kernel horizon does not match the problem"));
                }
                let mut v: Vec<f64> = kernel.phi().iter().map(|&w| softplus_inverse(w)).collect();
                v.push(kernel.p());
                v
            }
            (ModelKind::Fractal, FittedParams::Fractal(f)) => vec![softplus_inverse(f.d_bar / l2), f.q],
            (ModelKind::Classical, FittedParams::Classical(c)) => vec![softplus_inverse(c.d0 / l2)],
            _ => return Err(Error::config("parameters do not match the problem's model")),
        };
        Ok(raw)
    }

    pub fn physical(&self, raw: &[f64]) -> Result<FittedParams> {
        self.check_raw(raw)?;
        let l2 = self.template.cell_width.powi(2);
        Ok(match self.model {
            ModelKind::Nonlocal => {
                let nphi = raw.len() - 1;
                let phi = raw[..nphi].iter().map(|&r| softplus(r)).collect();
                FittedParams::Nonlocal {
                    kernel: DynamicKernel::new(phi, raw[nphi], self.template.cell_width)?,
                }
            }
            ModelKind::Fractal => FittedParams::Fractal(FractalParams {
                d_bar: softplus(raw[0]) * l2,
                q: raw[1],
            }),
            ModelKind::Classical => FittedParams::Classical(ClassicalParams { d0: softplus(raw[0]) * l2 }),
        })
    }

    fn check_raw(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.num_parameters() {
            return Err(Error::config(format!(
                "{} model takes {} parameters, got {}",
                self.model.name(),
                self.num_parameters(),
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("non-finite parameters {raw:?}")));
        }
        Ok(())
    }

    fn realize(&self, raw: &[f64]) -> Result<Realization> {
        self.check_raw(raw)?;
        Ok(match self.model {
            ModelKind::Nonlocal => {
                let nphi = raw.len() - 1;
                let sched = theta_schedule(raw[nphi], &self.times)?;
                Realization {
                    phi: raw[..nphi].iter().map(|&r| softplus(r)).collect(),
                    phi_jacobian: (0..nphi).map(|j| (j, j, softplus_derivative(raw[j]))).collect(),
                    coefficients: sched.iter().map(|s| s.0).collect(),
                    time_derivative: Some((nphi, sched.iter().map(|s| s.1).collect())),
                }
            }
            ModelKind::Fractal | ModelKind::Classical => {
                // raw[0] parameterizes D / l1^2 so both weights equal softplus(raw[0])
                let w = softplus(raw[0]);
                let dw = softplus_derivative(raw[0]);
                let (coefficients, time_derivative) = if self.model == ModelKind::Fractal {
                    let sched = fractal_schedule(raw[1], &self.times)?;
                    (sched.iter().map(|s| s.0).collect(), Some((1, sched.iter().map(|s| s.1).collect())))
                } else {
                    (vec![1.0; self.times.len() - 1], None)
                };
                Realization {
                    phi: vec![w, 0.0, w],
                    phi_jacobian: vec![(0, 0, dw), (2, 0, dw)],
                    coefficients,
                    time_derivative,
                }
            }
        })
    }

    fn forward(&self, r: &Realization) -> Result<(BandMatrix, Array2<f64>)> {
        let a = stencil_operator(&r.phi, self.template.num_cells)?;
        let states = crate::nonlocal::evolve(&a, &r.coefficients, &self.times, &self.initial_values)?;
        Ok((a, states))
    }

    fn penalty_of(phi: &[f64]) -> (f64, f64) {
        // mirrored pairs cancel exactly for symmetric kernels
        let nd = phi.len() / 2;
        let first: f64 = (1..=nd).map(|j| j as f64 * (phi[nd + j] - phi[nd - j])).sum();
        (first * first, first)
    }

    fn mse_of(&self, states: &Array2<f64>) -> f64 {
        let mut total = 0.0;
        for (curve, &cell) in self.curves.iter().zip(&self.cells) {
            for n in 1..self.times.len() {
                total += (states[[n, cell]] - curve.values[n]).powi(2);
            }
        }
        total
    }

    /// Loss at raw parameters; forward failures carry the parameters.
    pub fn evaluate_loss(&self, raw: &[f64]) -> Result<LossParts> {
        let r = self.realize(raw)?;
        let (_, states) = self.forward(&r).map_err(|e| with_params(e, raw))?;
        let mse = self.mse_of(&states);
        let penalty = Self::penalty_of(&r.phi).0;
        Ok(LossParts {
            loss: mse + self.beta * penalty,
            mse,
            penalty,
        })
    }

    /// Loss and its exact gradient with respect to the raw parameters.
    pub fn loss_and_gradient(&self, raw: &[f64]) -> Result<(LossParts, Vec<f64>)> {
        let r = self.realize(raw)?;
        let (a, states) = self.forward(&r).map_err(|e| with_params(e, raw))?;
        let mse = self.mse_of(&states);
        let (penalty, first) = Self::penalty_of(&r.phi);
        let n = self.template.num_cells;
        let nphi = r.phi.len();
        let nd = (nphi / 2) as isize;
        let steps = self.times.len() - 1;

        let mut g_phi = vec![0.0; nphi];
        let mut g_coef = vec![0.0; steps];
        // lambda = total derivative of the loss with respect to c_{k+1}
        let mut lambda = vec![0.0; n];
        let mut ac = vec![0.0; n];
        let mut factors = StepFactors::new(&a);
        for k in (0..steps).rev() {
            let row = k + 1;
            for (curve, &cell) in self.curves.iter().zip(&self.cells) {
                lambda[cell] += 2.0 * (states[[row, cell]] - curve.values[row]);
            }
            let dt = self.times[k + 1] - self.times[k];
            let mut mu = lambda.clone();
            factors.get(dt * r.coefficients[k])?.solve_transpose_in_place(&mut mu);
            let c = states.row(row);
            let c = c.as_slice().expect("standard layout");
            a.matvec(c, &mut ac);
            g_coef[k] = dt * mu.iter().zip(&ac).map(|(m, v)| m * v).sum::<f64>();
            let mc: f64 = mu.iter().zip(c).map(|(m, v)| m * v).sum();
            let scale = dt * r.coefficients[k];
            for (idx, g) in g_phi.iter_mut().enumerate() {
                let j = idx as isize - nd;
                if j == 0 {
                    continue;
                }
                let lo = (-j).max(0) as usize;
                let hi = (n as isize - j).min(n as isize) as usize;
                let shifted: f64 = (lo..hi).map(|i| mu[i] * c[(i as isize + j) as usize]).sum();
                *g += scale * (shifted - mc);
            }
            lambda = mu;
        }
        for (idx, g) in g_phi.iter_mut().enumerate() {
            *g += self.beta * 2.0 * first * (idx as f64 - nd as f64);
        }
        let mut grad = vec![0.0; raw.len()];
        for &(j, k, d) in &r.phi_jacobian {
            if d != 0.0 {
                grad[k] += g_phi[j] * d;
            }
        }
        if let Some((k, dcoef)) = &r.time_derivative {
            grad[*k] += g_coef.iter().zip(dcoef).map(|(g, d)| g * d).sum::<f64>();
        }
        Ok((
            LossParts {
                loss: mse + self.beta * penalty,
                mse,
                penalty,
            },
            grad,
        ))
    }

    pub fn gradient(&self, raw: &[f64]) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(raw)?.1)
    }

    /// L-BFGS from a symmetric start at each of `optimizer.start_scales`;
    /// the lowest final loss wins, earlier scales on ties. Starts whose
    /// first evaluation fails are skipped.
    pub fn fit(&self) -> Result<FitResult> {
        let runs: Vec<Result<FitResult>> = self
            .optimizer
            .start_scales
            .par_iter()
            .map(|&s| {
                let mut fit = self.fit_from(&self.initial_parameters_at(s))?;
                fit.start_scale = Some(s);
                Ok(fit)
            })
            .collect();
        let mut best: Option<FitResult> = None;
        let mut first_error = None;
        for run in runs {
            match run {
                Ok(f) if best.as_ref().map_or(true, |b| f.loss < b.loss) => best = Some(f),
                Ok(_) => {}
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        best.ok_or_else(|| first_error.expect("at least one start scale"))
    }

    pub fn fit_from(&self, start: &[f64]) -> Result<FitResult> {
        let m = minimize(|x| self.loss_and_gradient(x).map(|(l, g)| (l.loss, g)), start, &self.optimizer)?;
        let parts = self.evaluate_loss(&m.x)?;
        Ok(FitResult {
            params: self.physical(&m.x)?,
            raw: m.x,
            beta: self.beta,
            loss: parts.loss,
            mse: parts.mse,
            penalty: parts.penalty,
            iterations: m.iterations,
            gradient_norm: m.gradient.iter().fold(0.0, |a, g| a.max(g.abs())),
            converged: m.termination.converged(),
            termination: m.termination,
            trace: m.trace,
            start_scale: None,
        })
    }
}

fn with_params(e: Error, raw: &[f64]) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("{msg} (parameters {raw:?})")),
        Error::Config(msg) => Error::Numerical(format!("{msg} (parameters {raw:?})")),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FittedParams,
    pub raw: Vec<f64>,
    pub beta: f64,
    pub loss: f64,
    pub mse: f64,
    /// `(sum_j j phi_j)^2`.
    pub penalty: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub termination: Termination,
    pub trace: Vec<TraceEntry>,
    /// Start scale of the winning run when several were tried.
    #[serde(default)]
    pub start_scale: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlocal::solve;

    fn synthetic(kernel: &DynamicKernel, n: usize, spike: usize, steps: usize, locations: &[f64]) -> Vec<BreakthroughCurve> {
        let sol = solve(kernel, n, &InitialCondition::Spike { cell: spike }, &uniform_times(0.1, steps)).unwrap();
        sol.model_btc(locations).unwrap()
    }

    fn problem(curves: Vec<BreakthroughCurve>, model: ModelKind, nd: usize, n: usize, spike: usize, beta: f64) -> LearningProblem {
        LearningProblem::new(
            curves,
            beta,
            model,
            KernelTemplate {
                horizon_cells: nd,
                cell_width: 0.5,
                num_cells: n,
                dt: 0.1,
            },
            InitialCondition::Spike { cell: spike },
            OptimizerSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn softplus_pieces() {
        for v in [1e-12, 0.1, 1.0, 25.0, 40.0, 1e3] {
            assert!((softplus(softplus_inverse(v)) - v).abs() <= 1e-12 * v.max(1.0), "{v}");
        }
        assert_eq!(softplus_derivative(-800.0), 0.0);
        assert!((softplus_derivative(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let k = DynamicKernel::symmetric(0.0, &[0.05, 0.02], 0.6, 0.5).unwrap();
        let curves = synthetic(&k, 30, 12, 40, &[6.3, 7.9, 5.1]);
        for (model, beta) in [(ModelKind::Nonlocal, 3.0), (ModelKind::Fractal, 0.0), (ModelKind::Classical, 0.0)] {
            let p = problem(curves.clone(), model, 2, 30, 12, beta);
            let mut raw = p.initial_parameters();
            for (i, r) in raw.iter_mut().enumerate() {
                *r += 0.3 * ((i * 7 % 5) as f64 - 2.0) / 2.0;
            }
            let g = p.gradient(&raw).unwrap();
            for i in 0..raw.len() {
                let h = 1e-6;
                let mut a = raw.clone();
                let mut b = raw.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (p.evaluate_loss(&a).unwrap().loss - p.evaluate_loss(&b).unwrap().loss) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1e-8);
                assert!(rel < 1e-5, "{model:?} {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn center_weight_has_no_gradient() {
        let k = DynamicKernel::symmetric(0.0, &[0.05], 0.0, 0.5).unwrap();
        let p = problem(synthetic(&k, 12, 5, 10, &[3.3]), ModelKind::Nonlocal, 1, 12, 5, 1.0);
        let g = p.gradient(&p.initial_parameters()).unwrap();
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn true_parameters_fit_exactly() {
        let k = DynamicKernel::new(vec![0.01, 0.04, 0.2, 0.03, 0.02], 0.9, 0.5).unwrap();
        let curves = synthetic(&k, 30, 12, 60, &[6.3, 7.9]);
        let p = problem(curves, ModelKind::Nonlocal, 2, 30, 12, 0.0);
        let raw = p.raw_parameters(&FittedParams::Nonlocal { kernel: k }).unwrap();
        assert!(p.evaluate_loss(&raw).unwrap().mse < 1e-20);
    }

    #[test]
    fn symmetric_kernel_has_no_penalty_and_loss_adds_up() {
        let k = DynamicKernel::symmetric(0.1, &[0.05, 0.01], 0.3, 0.5).unwrap();
        let curves = synthetic(&k, 20, 8, 20, &[4.7]);
        let p = problem(curves, ModelKind::Nonlocal, 2, 20, 8, 7.0);
        let raw = p.raw_parameters(&FittedParams::Nonlocal { kernel: k }).unwrap();
        assert_eq!(p.evaluate_loss(&raw).unwrap().penalty, 0.0);
        let mut skew = raw.clone();
        skew[0] += 1.0;
        let parts = p.evaluate_loss(&skew).unwrap();
        assert!(parts.penalty > 0.0);
        assert!((parts.loss - (parts.mse + 7.0 * parts.penalty)).abs() <= 1e-12 * parts.loss);
    }

    #[test]
    fn vanishing_kernel_leaves_data_energy() {
        let k = DynamicKernel::symmetric(0.0, &[0.05], 0.0, 0.5).unwrap();
        let curves = synthetic(&k, 20, 8, 20, &[6.1, 2.3]);
        let p = problem(curves.clone(), ModelKind::Nonlocal, 1, 20, 8, 0.0);
        let raw = vec![-800.0, -800.0, -800.0, 0.0];
        let energy: f64 = curves.iter().map(|c| c.values[1..].iter().map(|v| v * v).sum::<f64>()).sum();
        let mse = p.evaluate_loss(&raw).unwrap().mse;
        assert!((mse - energy).abs() <= 1e-14 * energy);
        assert!(p.gradient(&raw).unwrap().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn curve_order_does_not_matter() {
        let k = DynamicKernel::symmetric(0.1, &[0.05, 0.02], 0.4, 0.5).unwrap();
        let curves = synthetic(&k, 24, 10, 30, &[3.1, 5.6, 7.7]);
        let mut reversed = curves.clone();
        reversed.reverse();
        let a = problem(curves, ModelKind::Nonlocal, 2, 24, 10, 1.0);
        let b = problem(reversed, ModelKind::Nonlocal, 2, 24, 10, 1.0);
        let raw = a.initial_parameters();
        assert_eq!(a.loss_and_gradient(&raw).unwrap(), b.loss_and_gradient(&raw).unwrap());
    }

    #[test]
    fn classical_self_recovery() {
        let t = uniform_times(0.1, 200);
        let ic = InitialCondition::Spike { cell: 20 };
        let sol = crate::baselines::solve_classical(ClassicalParams { d0: 0.02 }, 40, 0.5, &ic, &t).unwrap();
        let p = problem(sol.model_btc(&[10.2, 11.7, 12.9]).unwrap(), ModelKind::Classical, 1, 40, 20, 0.0);
        let fit = p.fit().unwrap();
        let FittedParams::Classical(c) = fit.params else { panic!() };
        assert!((c.d0 - 0.02).abs() < 1e-3 * 0.02, "{c:?}");
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let c = BreakthroughCurve::new(1.1, vec![0.0, 0.2, 0.4], vec![0.0; 3]).unwrap();
        let r = LearningProblem::new(
            vec![c],
            0.0,
            ModelKind::Classical,
            KernelTemplate {
                horizon_cells: 1,
                cell_width: 0.5,
                num_cells: 10,
                dt: 0.1,
            },
            InitialCondition::Spike { cell: 2 },
            OptimizerSettings::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
