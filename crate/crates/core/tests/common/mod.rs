//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use nlk_core::experiment::ExperimentConfig;
use nlk_core::flow::MediumSpec;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn shipped_config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&workspace_root().join("configs").join(name)).expect("shipped config loads")
}

/// Periodic diamond medium with the reference conductivities.
pub fn diamond_medium(num_cells: usize, head: f64) -> MediumSpec {
    MediumSpec {
        num_cells,
        head_left: head,
        ..MediumSpec::reference()
    }
}

pub fn homogeneous_medium(num_cells: usize, head: f64) -> MediumSpec {
    MediumSpec {
        kappa_inclusion: 1.0,
        ..diamond_medium(num_cells, head)
    }
}

/// Dense `(A c)_i = sum_j phi_j (c_{i+j} - c_i)` with zero values outside
/// `0..n`, assembled entry by entry from the definition.
pub fn dense_operator(phi: &[f64], n: usize) -> DMatrix<f64> {
    let nd = (phi.len() / 2) as isize;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n as isize {
        for j in -nd..=nd {
            let w = phi[(j + nd) as usize];
            a[(i as usize, i as usize)] -= w;
            let k = i + j;
            if (0..n as isize).contains(&k) {
                a[(i as usize, k as usize)] += w;
            }
        }
    }
    a
}

/// `exp(t A) c0` for symmetric `A` by eigendecomposition.
pub fn expm_apply(a: &DMatrix<f64>, t: f64, c0: &[f64]) -> Vec<f64> {
    let eig = a.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    let coef = q.transpose() * DVector::from_column_slice(c0);
    let scaled = DVector::from_iterator(coef.len(), coef.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c * (l * t).exp()));
    (q * scaled).iter().copied().collect()
}

/// `(mass, mean, variance)` of cell values at centres `(i + 1/2) h`.
pub fn moments(c: &[f64], h: f64) -> (f64, f64, f64) {
    let mass: f64 = c.iter().sum();
    let x = |i: usize| (i as f64 + 0.5) * h;
    let mean = c.iter().enumerate().map(|(i, v)| v * x(i)).sum::<f64>() / mass;
    let var = c.iter().enumerate().map(|(i, v)| v * (x(i) - mean).powi(2)).sum::<f64>() / mass;
    (mass, mean, var)
}

/// Least-squares `(slope, intercept)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn loglog_fit(t: &[f64], y: &[f64]) -> f64 {
    let lt: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lt, &ly).0
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Kolmogorov-Smirnov statistic of a sample against `U(lo, hi)`.
pub fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = (x - lo) / (hi - lo);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub mod measure {
    //! Quantities shared by the property tests and the acceptance gate.

    use super::*;
    use nlk_core::nonlocal::{solve, uniform_times, DynamicKernel, InitialCondition};

    /// Max-norm errors of the implicit solver against `exp(T A) c0` on 16
    /// cells at `T = 1` for `dt = 0.1 / 2^k`, and the successive ratios.
    pub fn expm_error_ratios() -> (Vec<f64>, Vec<f64>) {
        let kernel = DynamicKernel::symmetric(0.0, &[1.0, 0.3], 0.0, 0.5).unwrap();
        let n = 16;
        let ic = InitialCondition::Spike { cell: 7 };
        let c0 = ic.values(n).unwrap();
        let exact = expm_apply(&dense_operator(kernel.phi(), n), 1.0, &c0);
        let errors: Vec<f64> = (0..5)
            .map(|k| {
                let steps = 10 << k;
                let sol = solve(&kernel, n, &ic, &uniform_times(1.0 / steps as f64, steps)).unwrap();
                sol.profile(steps).iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .collect();
        let ratios = errors.windows(2).map(|w| w[0] / w[1]).collect();
        (errors, ratios)
    }

    pub fn msd_kernel(p: f64) -> DynamicKernel {
        DynamicKernel::symmetric(0.0, &[1.0, 0.5, 0.2], p, 0.5).unwrap()
    }

    /// `(fitted slope, predicted slope)` of MSD against t for `p = 0`.
    pub fn affine_msd_slope() -> (f64, f64) {
        let kernel = msd_kernel(0.0);
        let times = uniform_times(0.05, 200);
        let sol = solve(&kernel, 200, &InitialCondition::Spike { cell: 100 }, &times).unwrap();
        (linear_fit(&times, &sol.msd()).0, kernel.msd_rate())
    }

    /// Log-log slope of `MSD(t) - MSD(0)` over `t in [1, 10]` for `p = 1.2`,
    /// and the smallest mass seen (1 while mass stays interior).
    pub fn power_msd_slope() -> (f64, f64) {
        let kernel = msd_kernel(1.2);
        let times = uniform_times(0.01, 1000);
        let sol = solve(&kernel, 500, &InitialCondition::Spike { cell: 250 }, &times).unwrap();
        let msd = sol.msd();
        let (t, y): (Vec<f64>, Vec<f64>) = times.iter().zip(&msd).filter(|(t, _)| **t >= 1.0).map(|(t, m)| (*t, m - msd[0])).unzip();
        let min_mass = (0..times.len()).map(|n| sol.moments(n).mass).fold(f64::INFINITY, f64::min);
        (loglog_fit(&t, &y), min_mass)
    }
}

pub mod learn {
    //! Synthetic learning problems for the gradient, recovery and penalty checks.

    use nlk_core::coarse::BreakthroughCurve;
    use nlk_core::learning::{FitResult, FittedParams, KernelTemplate, LearningProblem, ModelKind, OptimizerSettings};
    use nlk_core::nonlocal::{solve, uniform_times, DynamicKernel, InitialCondition, NonlocalSolution};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const L1: f64 = 0.5773502691896257;

    pub struct Synthetic {
        pub kernel: DynamicKernel,
        pub num_cells: usize,
        pub spike: usize,
        pub solution: NonlocalSolution,
    }

    impl Synthetic {
        pub fn new(kernel: DynamicKernel, num_cells: usize, spike: usize, steps: usize) -> Self {
            let solution = solve(&kernel, num_cells, &InitialCondition::Spike { cell: spike }, &uniform_times(0.1, steps)).unwrap();
            Self {
                kernel,
                num_cells,
                spike,
                solution,
            }
        }

        pub fn curves(&self, locations: &[f64], steps: usize) -> Vec<BreakthroughCurve> {
            self.solution
                .model_btc(locations)
                .unwrap()
                .into_iter()
                .map(|c| BreakthroughCurve::new(c.location, c.times[..=steps].to_vec(), c.values[..=steps].to_vec()).unwrap())
                .collect()
        }

        pub fn problem(&self, curves: Vec<BreakthroughCurve>, model: ModelKind, horizon: usize, beta: f64, optimizer: OptimizerSettings) -> LearningProblem {
            LearningProblem::new(
                curves,
                beta,
                model,
                KernelTemplate {
                    horizon_cells: horizon,
                    cell_width: self.kernel.cell_width(),
                    num_cells: self.num_cells,
                    dt: 0.1,
                },
                InitialCondition::Spike { cell: self.spike },
                optimizer,
            )
            .unwrap()
        }
    }

    pub fn kernel_of(fit: &FitResult) -> &DynamicKernel {
        match &fit.params {
            FittedParams::Nonlocal { kernel } => kernel,
            other => panic!("expected a nonlocal fit, got {}", other.name()),
        }
    }

    /// Worst relative error of central differences (step 1e-6) against the
    /// analytic gradient over 6 random coordinates at 3 random points, for
    /// each PDE model.
    pub fn gradient_check() -> Vec<(ModelKind, f64)> {
        let truth = DynamicKernel::new(vec![0.004, 0.01, 0.03, 0.02, 0.05, 0.015, 0.006], 0.8, L1).unwrap();
        let data = Synthetic::new(truth, 40, 18, 150);
        let curves = data.curves(&[8.0, 10.2, 12.5], 150);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        [(ModelKind::Nonlocal, 10.0), (ModelKind::Fractal, 0.0), (ModelKind::Classical, 0.0)]
            .into_iter()
            .map(|(model, beta)| {
                let problem = data.problem(curves.clone(), model, 3, beta, OptimizerSettings::default());
                let dim = problem.num_parameters();
                let mut worst = 0.0f64;
                for _ in 0..3 {
                    let raw: Vec<f64> = match model {
                        ModelKind::Nonlocal => (0..dim).map(|k| if k + 1 == dim { rng.gen_range(-0.5..1.5) } else { rng.gen_range(-6.0..-1.0) }).collect(),
                        ModelKind::Fractal => vec![rng.gen_range(-4.0..0.0), rng.gen_range(-0.5..0.8)],
                        ModelKind::Classical => vec![rng.gen_range(-4.0..0.0)],
                    };
                    let g = problem.gradient(&raw).unwrap();
                    for _ in 0..6 {
                        let i = rng.gen_range(0..dim);
                        let h = 1e-6;
                        let mut a = raw.clone();
                        let mut b = raw.clone();
                        a[i] += h;
                        b[i] -= h;
                        let fd = (problem.evaluate_loss(&a).unwrap().loss - problem.evaluate_loss(&b).unwrap().loss) / (2.0 * h);
                        let scale = fd.abs().max(g[i].abs());
                        let rel = if scale == 0.0 { 0.0 } else { (fd - g[i]).abs() / scale };
                        worst = worst.max(rel);
                    }
                }
                (model, worst)
            })
            .collect()
    }

    pub struct Recovery {
        pub p: f64,
        /// `(fitted, true)` for moment orders 0, 2 and 4.
        pub moments: Vec<(u32, f64, f64)>,
        /// Worst held-out mean squared error over peak squared.
        pub held_out: f64,
        pub fit: FitResult,
    }

    pub const RECOVERY_LOCATIONS: [f64; 3] = [15.0, 18.6, 21.5];

    /// Fit a kernel to noise-free curves of a known `(phi*, p* = 1.2)` on 60
    /// cells over 720 steps; score on steps 721..=1080.
    pub fn manufactured_recovery(optimizer: OptimizerSettings) -> Recovery {
        let truth = DynamicKernel::symmetric(0.01, &[0.002, 0.001, 0.0004, 0.0001], 1.2, L1).unwrap();
        let data = Synthetic::new(truth.clone(), 60, 30, 1080);
        let problem = data.problem(data.curves(&RECOVERY_LOCATIONS, 720), ModelKind::Nonlocal, 4, 100.0, optimizer);
        let fit = problem.fit().unwrap();
        let kernel = kernel_of(&fit).clone();
        let moments = [0, 2, 4].iter().map(|&k| (k, kernel.moment(k), truth.moment(k))).collect();
        let predicted = solve(&kernel, 60, &InitialCondition::Spike { cell: 30 }, &data.solution.times).unwrap();
        let reference = data.solution.model_btc(&RECOVERY_LOCATIONS).unwrap();
        let model = predicted.model_btc(&RECOVERY_LOCATIONS).unwrap();
        let held_out = reference
            .iter()
            .zip(&model)
            .map(|(r, m)| {
                let mse = r.values[721..].iter().zip(&m.values[721..]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 360.0;
                mse / r.peak().powi(2)
            })
            .fold(0.0, f64::max);
        Recovery {
            p: kernel.p(),
            moments,
            held_out,
            fit,
        }
    }

    /// `|sum_j j phi_j|` of the trained kernel for each `beta`, on data from a
    /// drifting (asymmetric) kernel.
    pub fn penalty_sweep(betas: &[f64]) -> Vec<(f64, f64, FitResult)> {
        let truth = DynamicKernel::new(vec![0.002, 0.004, 0.0, 0.012, 0.006], 0.5, L1).unwrap();
        let data = Synthetic::new(truth, 40, 14, 200);
        let curves = data.curves(&[7.0, 9.0, 11.0], 200);
        betas
            .iter()
            .map(|&beta| {
                let fit = data.problem(curves.clone(), ModelKind::Nonlocal, 2, beta, OptimizerSettings::default()).fit().unwrap();
                (beta, kernel_of(&fit).moment(1).abs(), fit)
            })
            .collect()
    }
}

/// A 12-cell experiment that runs end to end in about a second.
pub const TINY_TOML: &str = include_str!("../../../../configs/tiny.toml");

pub fn tiny_config(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(TINY_TOML).expect("tiny config is valid");
    cfg.output_dir = out.to_path_buf();
    cfg
}
