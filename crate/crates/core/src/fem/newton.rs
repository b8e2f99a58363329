//! Newton iteration on the stationarity conditions of an assembled
//! incremental potential, restricted to the free DOFs.

use super::assembly::Evaluation;
use super::sparse::{factor_solve, LdltFactor};
use crate::error::{Error, Result};
use crate::numerics::norm;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineSearch {
    /// Full Newton steps
    None,
    /// Backtracking on the potential value (minimization problems)
    Potential,
    /// Backtracking on the free residual norm (saddle-point problems)
    ResidualNorm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonControl {
    /// Converged when ‖r‖ ≤ tol·(1 + ‖r₀‖)
    pub tol: f64,
    /// Absolute residual below which the iteration stops regardless
    pub abs_tol: f64,
    pub max_iter: usize,
    pub line_search: LineSearch,
    /// Smallest step length tried by the backtracking
    pub min_step: f64,
}

impl Default for NewtonControl {
    fn default() -> Self {
        NewtonControl { tol: 1e-10, abs_tol: 1e-13, max_iter: 25, line_search: LineSearch::ResidualNorm, min_step: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub residual: f64,
    pub max_asymmetry: f64,
}

fn free_residual(g: &[f64], free: &[bool]) -> Vec<f64> {
    g.iter().zip(free).filter(|(_, &f)| f).map(|(v, _)| *v).collect()
}

/// Drives the free entries of `x` to a stationary point of the potential
/// evaluated by `eval`; constrained entries keep their values. Evaluation
/// errors at trial points (e.g. leaving an admissible range) shorten the step.
pub fn solve_newton<F>(x: &mut [f64], free: &[bool], ctrl: &NewtonControl, mut eval: F) -> Result<NewtonReport>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let mut ev = eval(x)?;
    let mut r = free_residual(&ev.gradient, free);
    let mut rn = norm(&r);
    let r0 = rn;
    let target = (ctrl.tol * (1.0 + r0)).max(ctrl.abs_tol);
    let mut max_asym = ev.max_asymmetry;
    for it in 0..ctrl.max_iter {
        if rn <= target {
            return Ok(NewtonReport { iterations: it, initial_residual: r0, residual: rn, max_asymmetry: max_asym });
        }
        let k = ev.hessian.restrict(free);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx_free = factor_solve(&k, &rhs)?;
        let mut dx = vec![0.0; x.len()];
        let mut m = 0;
        for (i, &f) in free.iter().enumerate() {
            if f {
                dx[i] = dx_free[m];
                m += 1;
            }
        }
        let base: Vec<f64> = x.to_vec();
        let mut step = 1.0;
        let mut accepted = None;
        while step >= ctrl.min_step {
            for i in 0..x.len() {
                x[i] = base[i] + step * dx[i];
            }
            if let Ok(trial) = eval(x) {
                let rt = free_residual(&trial.gradient, free);
                let rtn = norm(&rt);
                let ok = match ctrl.line_search {
                    LineSearch::None => true,
                    LineSearch::ResidualNorm => rtn < rn || rtn <= target,
                    LineSearch::Potential => {
                        trial.value <= ev.value + 1e-12 * ev.value.abs().max(1.0) || rtn <= target
                    }
                };
                if ok && rtn.is_finite() {
                    accepted = Some((trial, rt, rtn));
                    break;
                }
            }
            if ctrl.line_search == LineSearch::None {
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, rt, rtn)) => {
                ev = trial;
                r = rt;
                rn = rtn;
                max_asym = max_asym.max(ev.max_asymmetry);
            }
            None => {
                x.copy_from_slice(&base);
                return Err(Error::NewtonDivergence { iterations: it + 1, residual: rn });
            }
        }
    }
    if rn <= target {
        Ok(NewtonReport { iterations: ctrl.max_iter, initial_residual: r0, residual: rn, max_asymmetry: max_asym })
    } else {
        Err(Error::NewtonDivergence { iterations: ctrl.max_iter, residual: rn })
    }
}

/// Complementarity residual of a box-constrained stationarity problem,
/// `c_i (x_i − clamp(x_i − g_i/c_i, l_i, u_i))`, which reduces to `g_i`
/// away from the bounds.
fn complementarity(x: &[f64], g: &[f64], c: &[f64], free: &[bool], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    (0..x.len())
        .filter(|&i| free[i])
        .map(|i| c[i] * (x[i] - (x[i] - g[i] / c[i]).clamp(lower[i], upper[i])))
        .collect()
}

/// Which side of its box a DOF is held at in the quadratic subproblem
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pin {
    Free,
    Lower,
    Upper,
}

/// Newton step from the box-constrained quadratic model
/// `min g·d + ½ dᵀ H d` subject to `lower ≤ x + d ≤ upper`, solved by a
/// primal-dual active-set iteration. The Hessian of the unpinned block is
/// shifted towards positive definiteness when its inertia requires it.
/// Returns the step and whether the active set settled.
fn box_qp_step(ev: &Evaluation, x: &[f64], free: &[bool], lower: &[f64], upper: &[f64], max_inner: usize) -> Result<(Vec<f64>, bool)> {
    let n = x.len();
    let g = &ev.gradient;
    let mut pins: Vec<Pin> = (0..n)
        .map(|i| {
            if !free[i] {
                Pin::Free
            } else if x[i] <= lower[i] && g[i] > 0.0 {
                Pin::Lower
            } else if x[i] >= upper[i] && g[i] < 0.0 {
                Pin::Upper
            } else {
                Pin::Free
            }
        })
        .collect();
    let mut dx = vec![0.0; n];
    for _ in 0..max_inner {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            match pins[i] {
                Pin::Lower => dx[i] = lower[i] - x[i],
                Pin::Upper => dx[i] = upper[i] - x[i],
                Pin::Free => {}
            }
        }
        let solve_set: Vec<bool> = (0..n).map(|i| free[i] && pins[i] == Pin::Free).collect();
        let hdx = ev.hessian.mul_vec(&dx);
        let rhs: Vec<f64> = (0..n).filter(|&i| solve_set[i]).map(|i| -g[i] - hdx[i]).collect();
        let mut k = ev.hessian.restrict(&solve_set);
        let scale = k.max_abs().max(1e-300);
        let mut shift = 0.0;
        let mut sol = None;
        for _ in 0..30 {
            if let Ok(f) = LdltFactor::factor(&k) {
                let (_, neg, zero) = f.inertia();
                if neg == 0 && zero == 0 {
                    sol = Some(f.solve(&rhs));
                    break;
                }
            }
            let next = if shift == 0.0 { 1e-8 * scale } else { 4.0 * shift };
            for i in 0..k.dim() {
                k.add(i, i, next - shift);
            }
            shift = next;
        }
        let sol = sol.ok_or(Error::SingularMatrix { dof: 0, pivot: 0.0 })?;
        let mut m = 0;
        for i in 0..n {
            if solve_set[i] {
                dx[i] = sol[m];
                m += 1;
            }
        }
        let model_grad: Vec<f64> = {
            let hd = ev.hessian.mul_vec(&dx);
            (0..n).map(|i| g[i] + hd[i]).collect()
        };
        let mut changed = false;
        for i in 0..n {
            if !free[i] {
                continue;
            }
            let next = match pins[i] {
                Pin::Lower if model_grad[i] < 0.0 => Pin::Free,
                Pin::Upper if model_grad[i] > 0.0 => Pin::Free,
                Pin::Free if x[i] + dx[i] < lower[i] => Pin::Lower,
                Pin::Free if x[i] + dx[i] > upper[i] => Pin::Upper,
                other => other,
            };
            if next != pins[i] {
                pins[i] = next;
                changed = true;
            }
        }
        if !changed {
            return Ok((dx, true));
        }
    }
    Ok((dx, false))
}

/// Minimizes the potential over the free DOFs subject to
/// `lower[i] ≤ x[i] ≤ upper[i]` (infinite bounds for unconstrained DOFs).
///
/// The converged point satisfies the Kuhn-Tucker conditions: `g_i = 0`
/// strictly inside the box, `g_i ≥ 0` at a lower and `g_i ≤ 0` at an upper
/// bound. Each iteration takes the step of the box-constrained quadratic
/// model (active set resolved on the model, so a growing support is found
/// in one linearization) and backtracks along the projected path on an
/// Armijo condition for the potential. Near convergence, where potential
/// differences drown in round-off, a step is also accepted if it reduces
/// the complementarity residual without increasing the potential beyond
/// round-off; a line-search failure within a factor 100 of the tolerance is
/// accepted as round-off stagnation.
pub fn minimize_bounded<F>(
    x: &mut [f64],
    free: &[bool],
    lower: &[f64],
    upper: &[f64],
    ctrl: &NewtonControl,
    mut eval: F,
) -> Result<NewtonReport>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    const MAX_INNER: usize = 50;
    let n = x.len();
    let project = |x: &mut [f64]| {
        for (i, v) in x.iter_mut().enumerate() {
            if free[i] {
                *v = v.clamp(lower[i], upper[i]);
            }
        }
    };
    let diag_scale = |ev: &Evaluation| -> Vec<f64> {
        let m = ev.hessian.max_abs().max(1e-300);
        (0..n).map(|i| ev.hessian.get(i, i).abs().max(1e-8 * m)).collect()
    };
    project(x);
    let mut ev = eval(x)?;
    let mut rn = norm(&complementarity(x, &ev.gradient, &diag_scale(&ev), free, lower, upper));
    let r0 = rn;
    let target = (ctrl.tol * (1.0 + r0)).max(ctrl.abs_tol);
    let mut max_asym = ev.max_asymmetry;
    let mut unsettled = 0usize;
    for it in 0..ctrl.max_iter {
        if rn <= target {
            return Ok(NewtonReport { iterations: it, initial_residual: r0, residual: rn, max_asymmetry: max_asym });
        }
        let (dx, settled) = box_qp_step(&ev, x, free, lower, upper, MAX_INNER)?;
        unsettled = if settled { 0 } else { unsettled + 1 };
        let base: Vec<f64> = x.to_vec();
        let f0 = ev.value;
        let mut step = 1.0;
        let mut accepted = None;
        while step >= ctrl.min_step {
            for i in 0..n {
                x[i] = base[i] + step * dx[i];
            }
            project(x);
            if let Ok(trial) = eval(x) {
                let slope: f64 = (0..n).map(|i| ev.gradient[i] * (x[i] - base[i])).sum();
                let rt = norm(&complementarity(x, &trial.gradient, &diag_scale(&trial), free, lower, upper));
                let armijo = slope < 0.0 && trial.value - f0 <= 1e-4 * slope;
                let flat = trial.value <= f0 + 1e-12 * f0.abs().max(1.0) && rt < rn;
                if rt.is_finite() && (armijo || flat || rt <= target) {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, rt)) => {
                ev = trial;
                rn = rt;
                max_asym = max_asym.max(ev.max_asymmetry);
            }
            None => {
                x.copy_from_slice(&base);
                if rn <= 100.0 * target {
                    return Ok(NewtonReport { iterations: it + 1, initial_residual: r0, residual: rn, max_asymmetry: max_asym });
                }
                return Err(if unsettled >= 3 {
                    Error::ActiveSetCycling(MAX_INNER)
                } else {
                    Error::NewtonDivergence { iterations: it + 1, residual: rn }
                });
            }
        }
    }
    if rn <= target {
        Ok(NewtonReport { iterations: ctrl.max_iter, initial_residual: r0, residual: rn, max_asymmetry: max_asym })
    } else if unsettled >= 3 {
        Err(Error::ActiveSetCycling(MAX_INNER))
    } else {
        Err(Error::NewtonDivergence { iterations: ctrl.max_iter, residual: rn })
    }
}

/// Solver failures after which a step is retried with a smaller increment
pub fn is_recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::NewtonDivergence { .. }
            | Error::SingularMatrix { .. }
            | Error::LocalNewtonDivergence(_)
            | Error::NonPositiveJacobian(_)
            | Error::NonPositiveTemperature(_)
            | Error::ActiveSetCycling(_)
            | Error::ZeroNormDirection
    )
}

/// Advances `state` over (t0, t1) with `step(state, t0, t1)`. A recoverable
/// failure splits the interval into two halves, recursively up to
/// `max_halvings` levels. Returns the new state and the deepest level used.
pub fn advance_with_halving<S, F>(state: &S, t0: f64, t1: f64, max_halvings: u32, step: &mut F) -> Result<(S, u32)>
where
    F: FnMut(&S, f64, f64) -> Result<S>,
{
    fn go<S, F>(state: &S, t0: f64, t1: f64, depth: u32, max: u32, step: &mut F) -> Result<(S, u32)>
    where
        F: FnMut(&S, f64, f64) -> Result<S>,
    {
        match step(state, t0, t1) {
            Ok(s) => Ok((s, depth)),
            Err(e) if is_recoverable(&e) => {
                if depth == max {
                    return Err(if max == 0 { e } else { Error::StepSizeFloor(t1 - t0) });
                }
                let tm = 0.5 * (t0 + t1);
                let (mid, d1) = go(state, t0, tm, depth + 1, max, step)?;
                let (end, d2) = go(&mid, tm, t1, depth + 1, max, step)?;
                Ok((end, d1.max(d2)))
            }
            Err(e) => Err(e),
        }
    }
    go(state, t0, t1, 0, max_halvings, step)
}
