use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Stop once `max |g_k| <= gradient_tolerance`.
    pub gradient_tolerance: f64,
    /// Stop once an accepted step lowers the loss by less than this fraction.
    pub loss_tolerance: f64,
    pub history: usize,
    /// Sufficient-decrease constant of the line search.
    pub armijo: f64,
    /// Curvature constant of the strong Wolfe condition.
    pub curvature: f64,
    /// Function evaluations allowed per line search.
    pub max_backtracks: usize,
    /// Largest change of any single parameter in one iteration.
    pub max_step: f64,
    /// Initial kernel weights tried by the learner, best fit kept.
    pub start_scales: Vec<f64>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            loss_tolerance: 1e-15,
            history: 10,
            armijo: 1e-4,
            curvature: 0.9,
            max_backtracks: 60,
            max_step: 10.0,
            start_scales: vec![0.1, 0.01, 0.001, 0.0001],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub loss: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    LossStagnation,
    MaxIterations,
    LineSearchFailure,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Self::GradientTolerance | Self::LossStagnation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<TraceEntry>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

type Point = (Vec<f64>, f64, Vec<f64>);

/// Bracketing search for a step satisfying the strong Wolfe conditions,
/// zooming with safeguarded quadratic interpolation. Steps are capped so no
/// parameter moves by more than `max_step`. A failed evaluation
/// counts as an infinite loss. Falls back to the best sufficient-decrease
/// point seen when the evaluation budget runs out.
fn line_search<F>(f: &mut F, x: &[f64], fx: f64, d: &[f64], slope: f64, first: f64, s: &OptimizerSettings) -> Option<Point>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut evals = 0;
    let mut best: Option<Point> = None;
    let mut probe = |step: f64, best: &mut Option<Point>| -> (f64, f64, Option<Point>) {
        let trial: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + step * di).collect();
        match f(&trial) {
            Ok((ft, gt)) if ft.is_finite() && gt.iter().all(|v| v.is_finite()) => {
                let dd = gt.iter().zip(d).map(|(g, di)| g * di).sum();
                let p = (trial, ft, gt);
                if ft <= fx + s.armijo * step * slope && best.as_ref().map_or(true, |b| ft < b.1) {
                    *best = Some(p.clone());
                }
                (ft, dd, Some(p))
            }
            _ => (f64::INFINITY, f64::NAN, None),
        }
    };
    let sufficient = |step: f64, ft: f64| ft <= fx + s.armijo * step * slope;
    let curvature_ok = |dd: f64| dd.abs() <= -s.curvature * slope;

    // (step, loss, directional derivative) at the bracket ends
    let mut lo = (0.0, fx, slope);
    let mut hi: Option<(f64, f64, f64)> = None;
    let longest = s.max_step / inf_norm(d);
    let mut step = first.min(longest);
    while evals < s.max_backtracks {
        evals += 1;
        let (ft, dd, p) = probe(step, &mut best);
        match hi {
            None => {
                if !sufficient(step, ft) || ft >= lo.1 {
                    hi = Some((step, ft, dd));
                } else if curvature_ok(dd) {
                    return p;
                } else if dd >= 0.0 {
                    hi = Some(lo);
                    lo = (step, ft, dd);
                } else if step >= longest {
                    // still descending at the step bound: take it
                    return p;
                } else {
                    lo = (step, ft, dd);
                    step = (2.0 * step).min(longest);
                    continue;
                }
            }
            Some(h) => {
                if !sufficient(step, ft) || ft >= lo.1 {
                    hi = Some((step, ft, dd));
                } else if curvature_ok(dd) {
                    return p;
                } else {
                    if dd * (h.0 - lo.0) >= 0.0 {
                        hi = Some(lo);
                    }
                    lo = (step, ft, dd);
                }
            }
        }
        let h = hi.expect("bracket set above");
        let width = h.0 - lo.0;
        if width.abs() <= 1e-16 * lo.0.abs().max(h.0.abs()) {
            break;
        }
        // minimizer of the quadratic through (lo, f_lo, d_lo) and (hi, f_hi)
        let denom = 2.0 * (h.1 - lo.1 - lo.2 * width);
        let mut next = lo.0 - lo.2 * width * width / denom;
        let (a, b) = if lo.0 < h.0 { (lo.0, h.0) } else { (h.0, lo.0) };
        let margin = 0.1 * (b - a);
        if !next.is_finite() || next < a + margin || next > b - margin {
            next = 0.5 * (a + b);
        }
        step = next;
    }
    best
}

/// Limited-memory BFGS with two-loop recursion and a strong Wolfe line search.
///
/// `f` returns the loss and gradient; an error is treated as an infinite
/// loss so the line search backs off. An error at the starting point is
/// returned.
pub fn minimize<F>(mut f: F, x0: &[f64], settings: &OptimizerSettings) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    let mut trace = vec![TraceEntry {
        iteration: 0,
        loss: fx,
        gradient_norm: inf_norm(&g),
    }];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for it in 1..=settings.max_iterations {
        if inf_norm(&g) <= settings.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alpha = vec![0.0; s_hist.len()];
        for k in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            alpha[k] = rho * dot(&s_hist[k], &d);
            d.iter_mut().zip(&y_hist[k]).for_each(|(di, yi)| *di -= alpha[k] * yi);
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for k in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            let beta = rho * dot(&y_hist[k], &d);
            d.iter_mut().zip(&s_hist[k]).for_each(|(di, si)| *di += (alpha[k] - beta) * si);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let step = if s_hist.is_empty() { (1.0 / inf_norm(&g)).min(1.0) } else { 1.0 };

        let Some((xn, fn_, gn)) = line_search(&mut f, &x, fx, &d, slope, step, settings) else {
            termination = Termination::LineSearchFailure;
            break;
        };
        iterations = it;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let decrease = fx - fn_;
        x = xn;
        g = gn;
        let previous = fx;
        fx = fn_;
        trace.push(TraceEntry {
            iteration: it,
            loss: fx,
            gradient_norm: inf_norm(&g),
        });
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > settings.history {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        if decrease <= settings.loss_tolerance * previous.abs() {
            termination = if inf_norm(&g) <= settings.gradient_tolerance {
                Termination::GradientTolerance
            } else {
                Termination::LossStagnation
            };
            break;
        }
    }
    if termination == Termination::MaxIterations && inf_norm(&g) <= settings.gradient_tolerance {
        termination = Termination::GradientTolerance;
    }
    Ok(Minimum {
        x,
        loss: fx,
        gradient: g,
        iterations,
        termination,
        trace,
    })
}
