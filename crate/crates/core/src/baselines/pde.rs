use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlocal::{check_times, evolve, stencil_operator, InitialCondition, NonlocalSolution};

/// `c_t = (D / t^q) c_xx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractalParams {
    pub d_bar: f64,
    pub q: f64,
}

/// `c_t = D0 c_xx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalParams {
    pub d0: f64,
}

/// Step average of `t^-q` over `[t0, t1]` and its derivative in `q`.
/// Exactly 1 when `q == 0`.
pub fn fractal_coefficient(q: f64, t0: f64, t1: f64) -> Result<(f64, f64)> {
    if t0 <= 0.0 && q >= 1.0 {
        return Err(Error::config(format!("t^-q with q = {q} is not integrable at t = 0")));
    }
    let dt = t1 - t0;
    let e = 1.0 - q;
    let lg = |t: f64| if t > 0.0 { t.powf(e) * t.ln() } else { 0.0 };
    let pw = |t: f64| if t > 0.0 { t.powf(e) } else { 0.0 };
    let value = if q == 0.0 { 1.0 } else { (pw(t1) - pw(t0)) / (e * dt) };
    // d/de [(t1^e - t0^e) / (e dt)], and dq = -de
    let d_de = ((lg(t1) - lg(t0)) * e - (pw(t1) - pw(t0))) / (e * e * dt);
    Ok((value, -d_de))
}

pub fn fractal_schedule(q: f64, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times.windows(2).map(|w| fractal_coefficient(q, w[0], w[1])).collect()
}

/// Second-difference stencil `(D/l1^2, 0, D/l1^2)`.
pub(crate) fn diffusion_stencil(d: f64, cell_width: f64) -> [f64; 3] {
    let w = d / (cell_width * cell_width);
    [w, 0.0, w]
}

pub fn solve_fractal(
    params: FractalParams,
    n: usize,
    cell_width: f64,
    initial: &InitialCondition,
    times: &[f64],
) -> Result<NonlocalSolution> {
    if !(params.d_bar >= 0.0 && params.d_bar.is_finite()) || !params.q.is_finite() {
        return Err(Error::config(format!("invalid fractal parameters {params:?}")));
    }
    check_times(times)?;
    let a = stencil_operator(&diffusion_stencil(params.d_bar, cell_width), n)?;
    let coef: Vec<f64> = fractal_schedule(params.q, times)?.into_iter().map(|c| c.0).collect();
    Ok(NonlocalSolution {
        values: evolve(&a, &coef, times, &initial.values(n)?)?,
        times: times.to_vec(),
        cell_width,
        initial: initial.clone(),
    })
}

pub fn solve_classical(
    params: ClassicalParams,
    n: usize,
    cell_width: f64,
    initial: &InitialCondition,
    times: &[f64],
) -> Result<NonlocalSolution> {
    solve_fractal(FractalParams { d_bar: params.d0, q: 0.0 }, n, cell_width, initial, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlocal::uniform_times;

    #[test]
    fn coefficient_derivative_matches_differences() {
        for (q, t0, t1) in [(0.0, 0.0, 0.1), (0.3, 0.0, 0.1), (-0.5, 1.0, 1.1), (0.6, 3.0, 3.1), (0.0, 2.0, 2.1)] {
            let h = 1e-6;
            let fd = (fractal_coefficient(q + h, t0, t1).unwrap().0 - fractal_coefficient(q - h, t0, t1).unwrap().0) / (2.0 * h);
            let d = fractal_coefficient(q, t0, t1).unwrap().1;
            assert!((fd - d).abs() < 1e-6 * d.abs().max(1.0), "{q} {t0}: {fd} vs {d}");
        }
    }

    #[test]
    fn non_integrable_start_is_rejected() {
        assert!(fractal_coefficient(1.0, 0.0, 0.1).is_err());
        assert!(fractal_coefficient(1.5, 1.0, 1.1).is_ok());
        let ic = InitialCondition::Spike { cell: 3 };
        let r = solve_fractal(FractalParams { d_bar: 1.0, q: 1.2 }, 8, 1.0, &ic, &uniform_times(0.1, 3));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn zero_diffusivity_freezes() {
        let ic = InitialCondition::Spike { cell: 3 };
        let s = solve_classical(ClassicalParams { d0: 0.0 }, 8, 0.5, &ic, &uniform_times(0.1, 10)).unwrap();
        let f = solve_fractal(FractalParams { d_bar: 0.0, q: 0.4 }, 8, 0.5, &ic, &uniform_times(0.1, 10)).unwrap();
        for sol in [s, f] {
            assert!(sol.values.rows().into_iter().all(|r| r.to_vec() == ic.values(8).unwrap()));
        }
    }

    #[test]
    fn fractal_without_exponent_is_classical() {
        let ic = InitialCondition::Spike { cell: 10 };
        let t = uniform_times(0.1, 40);
        let a = solve_fractal(FractalParams { d_bar: 0.37, q: 0.0 }, 25, 0.577, &ic, &t).unwrap();
        let b = solve_classical(ClassicalParams { d0: 0.37 }, 25, 0.577, &ic, &t).unwrap();
        assert_eq!(a, b);
    }
}
