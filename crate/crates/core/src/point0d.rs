//! Thermo-visco-elastic rheological device: a spring in series with a
//! dashpot (internal strain q), a parallel dashpot on the total strain, and a
//! thermal expansion coupling. Both incremental updates (implicit and the
//! semi-explicit isentropic split) are implemented as Newton solves of the
//! stationarity conditions of the incremental potential.

use crate::error::{Error, Result};
use crate::numerics::{norm, solve_dense};
use serde::{Deserialize, Serialize};

/// Material constants of the device
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceParams {
    /// Young's modulus (MPa)
    #[serde(rename = "E")]
    pub e: f64,
    /// Thermal expansion coefficient (1/K)
    pub alpha_t: f64,
    /// Viscosity of the dashpot on the total strain (MPa·s)
    #[serde(rename = "H1")]
    pub h1: f64,
    /// Viscosity of the dashpot on the internal strain (MPa·s)
    #[serde(rename = "H2")]
    pub h2: f64,
    /// Heat capacity per unit volume (MPa/K)
    #[serde(rename = "C")]
    pub c_heat: f64,
    /// Reference temperature (K)
    pub theta0: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams { e: 1000.0, alpha_t: 1e-5, h1: 0.0, h2: 10.0, c_heat: 1.0, theta0: 293.0 }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.e > 0.0, "E > 0"),
            (self.h1 >= 0.0, "H1 >= 0"),
            (self.h2 >= 0.0, "H2 >= 0"),
            (self.c_heat > 0.0, "C > 0"),
            (self.theta0 > 0.0, "theta0 > 0"),
            (self.alpha_t.is_finite(), "alpha_T finite"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::InvalidParameter(format!("device: {what}")));
            }
        }
        Ok(())
    }
}

/// State (ε, q, η, θ) of the device
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceState0D {
    pub eps: f64,
    pub q: f64,
    pub eta: f64,
    pub theta: f64,
}

impl DeviceState0D {
    /// Stress-free state at the reference temperature
    pub fn rest(p: &DeviceParams) -> Self {
        DeviceState0D { eps: 0.0, q: 0.0, eta: 0.0, theta: p.theta0 }
    }

    /// State-consistency defect |η + ∂θψ|
    pub fn consistency_defect(&self, p: &DeviceParams) -> Result<f64> {
        let (_, d, _) = free_energy(self.eps, self.q, self.theta, p)?;
        Ok((self.eta + d[2]).abs())
    }
}

/// Prescribed quantity at the end of the step
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Drive {
    /// Total strain ε(t_{n+1})
    Strain(f64),
    /// External stress σ_ext(t_{n+1})
    Stress(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Implicit,
    SemiExplicit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    pub tau: f64,
    pub drive: Drive,
    pub algorithm: Algorithm,
    /// Residual tolerance, relative to the stress level of the step
    pub newton_tol: f64,
    pub max_iter: usize,
}

impl StepControl {
    pub fn new(tau: f64, drive: Drive, algorithm: Algorithm) -> Self {
        StepControl { tau, drive, algorithm, newton_tol: 1e-12, max_iter: 50 }
    }
}

/// Free energy ψ(ε, q, θ) with gradient and Hessian in the order (ε, q, θ)
pub fn free_energy(eps: f64, q: f64, theta: f64, p: &DeviceParams) -> Result<(f64, [f64; 3], [[f64; 3]; 3])> {
    if theta.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::NonPositiveTemperature(theta));
    }
    let (e, a, c, t0) = (p.e, p.alpha_t, p.c_heat, p.theta0);
    let el = eps - q;
    let dt = theta - t0;
    let ln = (theta / t0).ln();
    let psi = 0.5 * e * el * el - e * a * el * dt + c * (dt - theta * ln);
    let grad = [e * el - e * a * dt, -e * el + e * a * dt, -e * a * el - c * ln];
    let hess = [[e, -e, -e * a], [-e, e, e * a], [-e * a, e * a, -c / theta]];
    Ok((psi, grad, hess))
}

/// Dissipation potential φ(ε̇, q̇) with gradient and Hessian
pub fn dissipation_potential(deps: f64, dq: f64, p: &DeviceParams) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let phi = 0.5 * p.h1 * deps * deps + 0.5 * p.h2 * dq * dq;
    (phi, [p.h1 * deps, p.h2 * dq], [[p.h1, 0.0], [0.0, p.h2]])
}

/// Temperature rate θ̇ = −[∂²θθψ]⁻¹(η̇ + ∂²θ𝔠ψ · 𝔠̇)
pub fn temperature_rate(s: &DeviceState0D, rates: (f64, f64, f64), p: &DeviceParams) -> Result<f64> {
    let (deps, dq, deta) = rates;
    let (_, _, h) = free_energy(s.eps, s.q, s.theta, p)?;
    Ok(-(deta + h[2][0] * deps + h[2][1] * dq) / h[2][2])
}

/// Residuals of equilibrium, the Biot equation, the state equation and the
/// entropy evolution for a state and its rates (adiabatic, no sources)
pub fn check_governing_residuals(
    s: &DeviceState0D,
    rates: (f64, f64, f64),
    sigma_ext: f64,
    p: &DeviceParams,
) -> Result<[f64; 4]> {
    let (deps, dq, deta) = rates;
    let (_, d, _) = free_energy(s.eps, s.q, s.theta, p)?;
    let (phi, dphi, _) = dissipation_potential(deps, dq, p);
    Ok([d[0] + dphi[0] - sigma_ext, d[1] + dphi[1], s.eta + d[2], s.theta * deta - 2.0 * phi])
}

/// Unknowns of the implicit potential: optional ε, then q, η, θ, T
struct Layout {
    stress_driven: bool,
}

impl Layout {
    fn dim(&self) -> usize {
        if self.stress_driven {
            5
        } else {
            4
        }
    }
    fn off(&self) -> usize {
        usize::from(self.stress_driven)
    }
}

/// Incremental potential of the implicit update and its derivatives
///
/// π̂ = ψ(𝔠, θ) − ψ_n + θη − θ_nη_n − T(η − η_n) + τφ((T/θ_n)𝔠̇) − σ_ext(ε − ε_n)
/// over (ε if stress driven, q, η, θ, T).
pub fn implicit_potential(
    s_n: &DeviceState0D,
    z: &[f64],
    ctrl: &StepControl,
    p: &DeviceParams,
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let lay = Layout { stress_driven: matches!(ctrl.drive, Drive::Stress(_)) };
    let o = lay.off();
    let (eps, sigma) = match ctrl.drive {
        Drive::Strain(e) => (e, 0.0),
        Drive::Stress(s) => (z[0], s),
    };
    let (q, eta, theta, t) = (z[o], z[o + 1], z[o + 2], z[o + 3]);
    let (psi, d, h) = free_energy(eps, q, theta, p)?;
    let (psi_n, _, _) = free_energy(s_n.eps, s_n.q, s_n.theta, p)?;
    let tau = ctrl.tau;
    let rho = t / s_n.theta;
    let (de, dq) = (eps - s_n.eps, q - s_n.q);
    let quad = p.h1 * de * de + p.h2 * dq * dq;
    let value = psi - psi_n + theta * eta - s_n.theta * s_n.eta - t * (eta - s_n.eta) + rho * rho * quad / (2.0 * tau)
        - sigma * de;
    let n = lay.dim();
    let mut g = vec![0.0; n];
    let mut hm = vec![vec![0.0; n]; n];
    let (iq, ie, ith, it) = (o, o + 1, o + 2, o + 3);
    g[iq] = d[1] + rho * rho * p.h2 * dq / tau;
    g[ie] = theta - t;
    g[ith] = d[2] + eta;
    g[it] = -(eta - s_n.eta) + rho * quad / (tau * s_n.theta);
    hm[iq][iq] = h[1][1] + rho * rho * p.h2 / tau;
    hm[iq][ith] = h[1][2];
    hm[iq][it] = 2.0 * rho * p.h2 * dq / (tau * s_n.theta);
    hm[ie][ith] = 1.0;
    hm[ie][it] = -1.0;
    hm[ith][ith] = h[2][2];
    hm[it][it] = quad / (tau * s_n.theta * s_n.theta);
    if lay.stress_driven {
        g[0] = d[0] + rho * rho * p.h1 * de / tau - sigma;
        hm[0][0] = h[0][0] + rho * rho * p.h1 / tau;
        hm[0][iq] = h[0][1];
        hm[0][ith] = h[0][2];
        hm[0][it] = 2.0 * rho * p.h1 * de / (tau * s_n.theta);
    }
    for i in 0..n {
        for j in 0..i {
            hm[i][j] = hm[j][i];
        }
    }
    Ok((value, g, hm))
}

/// Potential of the isentropic predictor: η frozen at η_n and T = θ_n,
/// over (ε if stress driven, q, θ)
pub fn predictor_potential(
    s_n: &DeviceState0D,
    z: &[f64],
    ctrl: &StepControl,
    p: &DeviceParams,
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let stress = matches!(ctrl.drive, Drive::Stress(_));
    let o = usize::from(stress);
    let (eps, sigma) = match ctrl.drive {
        Drive::Strain(e) => (e, 0.0),
        Drive::Stress(s) => (z[0], s),
    };
    let (q, theta) = (z[o], z[o + 1]);
    let (psi, d, h) = free_energy(eps, q, theta, p)?;
    let tau = ctrl.tau;
    let (de, dq) = (eps - s_n.eps, q - s_n.q);
    let value = psi + (theta - s_n.theta) * s_n.eta + (p.h1 * de * de + p.h2 * dq * dq) / (2.0 * tau) - sigma * de;
    let n = o + 2;
    let mut g = vec![0.0; n];
    let mut hm = vec![vec![0.0; n]; n];
    g[o] = d[1] + p.h2 * dq / tau;
    g[o + 1] = d[2] + s_n.eta;
    hm[o][o] = h[1][1] + p.h2 / tau;
    hm[o][o + 1] = h[1][2];
    hm[o + 1][o] = h[1][2];
    hm[o + 1][o + 1] = h[2][2];
    if stress {
        g[0] = d[0] + p.h1 * de / tau - sigma;
        hm[0][0] = h[0][0] + p.h1 / tau;
        hm[0][1] = h[0][1];
        hm[1][0] = h[0][1];
        hm[0][2] = h[0][2];
        hm[2][0] = h[0][2];
    }
    Ok((value, g, hm))
}

/// Newton iteration on ∇f = 0 with backtracking on the residual norm; the
/// entries listed in `positive` must stay strictly positive
fn newton<F>(mut z: Vec<f64>, positive: &[usize], tol: f64, max_iter: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)>,
{
    let (_, mut g, mut h) = f(&z)?;
    let mut r = norm(&g);
    for _ in 0..max_iter {
        if r <= tol {
            return Ok(z);
        }
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let dz = solve_dense(&h, &rhs).ok_or(Error::NewtonDivergence { iterations: 0, residual: r })?;
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-10 {
            let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + step * b).collect();
            if positive.iter().all(|&i| trial[i] > 0.0) {
                if let Ok((_, gt, ht)) = f(&trial) {
                    let rt = norm(&gt);
                    if rt < r || rt <= tol {
                        z = trial;
                        g = gt;
                        h = ht;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // stagnation at round-off level counts as converged
            if r <= 1e3 * tol {
                return Ok(z);
            }
            return Err(Error::NewtonDivergence { iterations: max_iter, residual: r });
        }
    }
    if r <= tol {
        Ok(z)
    } else {
        Err(Error::NewtonDivergence { iterations: max_iter, residual: r })
    }
}

/// Stress magnitude of the step, used to make the Newton tolerance relative
fn residual_scale(s_n: &DeviceState0D, ctrl: &StepControl, p: &DeviceParams) -> f64 {
    let load = match ctrl.drive {
        Drive::Strain(e) => p.e * e.abs(),
        Drive::Stress(s) => s.abs(),
    };
    1.0 + load + p.e * s_n.eps.abs().max(s_n.q.abs())
}

/// Implicit update: stationary point of the implicit incremental potential
pub fn step_implicit(s_n: &DeviceState0D, ctrl: &StepControl, p: &DeviceParams) -> Result<DeviceState0D> {
    let stress = matches!(ctrl.drive, Drive::Stress(_));
    let mut z0 = Vec::new();
    if stress {
        z0.push(s_n.eps);
    }
    z0.extend([s_n.q, s_n.eta, s_n.theta, s_n.theta]);
    let o = usize::from(stress);
    // warm start from the isentropic predictor
    if let Ok(pred) = step_semi_explicit(s_n, ctrl, p) {
        if stress {
            z0[0] = pred.eps;
        }
        z0[o] = pred.q;
        z0[o + 1] = pred.eta;
        z0[o + 2] = pred.theta;
        z0[o + 3] = pred.theta;
    }
    let z = newton(z0, &[o + 2, o + 3], ctrl.newton_tol * residual_scale(s_n, ctrl, p), ctrl.max_iter, |z| implicit_potential(s_n, z, ctrl, p))?;
    let eps = match ctrl.drive {
        Drive::Strain(e) => e,
        Drive::Stress(_) => z[0],
    };
    Ok(DeviceState0D { eps, q: z[o], eta: z[o + 1], theta: z[o + 2] })
}

/// Semi-explicit update: isentropic predictor for (ε, q, θ) at frozen η_n
/// with T = θ_n, followed by the entropy corrector η = η_n + (τ/θ_n)·2φ(𝔠̇^τ)
pub fn step_semi_explicit(s_n: &DeviceState0D, ctrl: &StepControl, p: &DeviceParams) -> Result<DeviceState0D> {
    let stress = matches!(ctrl.drive, Drive::Stress(_));
    let mut z0 = Vec::new();
    if stress {
        z0.push(s_n.eps);
    }
    z0.extend([s_n.q, s_n.theta]);
    let o = usize::from(stress);
    let z = newton(z0, &[o + 1], ctrl.newton_tol * residual_scale(s_n, ctrl, p), ctrl.max_iter, |z| predictor_potential(s_n, z, ctrl, p))?;
    let eps = match ctrl.drive {
        Drive::Strain(e) => e,
        Drive::Stress(_) => z[0],
    };
    let q = z[o];
    let eta = s_n.eta + entropy_increment_semi_explicit(s_n, eps, q, ctrl.tau, p);
    Ok(DeviceState0D { eps, q, eta, theta: z[o + 1] })
}

/// (τ/θ_n)·2φ(𝔠̇^τ), the entropy increment of the semi-explicit corrector
pub fn entropy_increment_semi_explicit(s_n: &DeviceState0D, eps: f64, q: f64, tau: f64, p: &DeviceParams) -> f64 {
    let (phi, _, _) = dissipation_potential((eps - s_n.eps) / tau, (q - s_n.q) / tau, p);
    tau / s_n.theta * 2.0 * phi
}

/// Entropy increment carried by the implicit update at temperature θ:
/// (τ/θ)·2φ((θ/θ_n)𝔠̇^τ), the stationarity condition in T evaluated at T = θ
pub fn entropy_increment_implicit(s_n: &DeviceState0D, s: &DeviceState0D, tau: f64, p: &DeviceParams) -> f64 {
    let rho = s.theta / s_n.theta;
    let (phi, _, _) = dissipation_potential(rho * (s.eps - s_n.eps) / tau, rho * (s.q - s_n.q) / tau, p);
    tau / s.theta * 2.0 * phi
}

/// One advance with either algorithm
pub fn step(s_n: &DeviceState0D, ctrl: &StepControl, p: &DeviceParams) -> Result<DeviceState0D> {
    match ctrl.algorithm {
        Algorithm::Implicit => step_implicit(s_n, ctrl, p),
        Algorithm::SemiExplicit => step_semi_explicit(s_n, ctrl, p),
    }
}

/// One row of a device trajectory
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub eps: f64,
    pub q: f64,
    pub eta: f64,
    pub theta: f64,
    /// Thermal driving force of the step (θ for implicit, θ_n for semi-explicit)
    #[serde(rename = "T")]
    pub t_force: f64,
    pub sigma: f64,
    /// 2τφ(𝔠̇^τ) of the step
    pub dissipation_increment: f64,
}

/// Loading history of a trajectory
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Loading {
    /// ε(t) = rate·t
    StrainRamp { rate: f64 },
    /// σ_ext(t) = rate·t
    StressRamp { rate: f64 },
    /// σ_ext(t) = value for t > 0
    StressStep { value: f64 },
    /// ε(t) = value for t > 0
    StrainStep { value: f64 },
}

impl Loading {
    pub fn drive(&self, t: f64) -> Drive {
        match *self {
            Loading::StrainRamp { rate } => Drive::Strain(rate * t),
            Loading::StressRamp { rate } => Drive::Stress(rate * t),
            Loading::StressStep { value } => Drive::Stress(value),
            Loading::StrainStep { value } => Drive::Strain(value),
        }
    }
}

/// Integrates the device over `steps` uniform increments of size `tau`
pub fn simulate(
    s0: DeviceState0D,
    loading: Loading,
    algorithm: Algorithm,
    tau: f64,
    steps: usize,
    p: &DeviceParams,
) -> Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::with_capacity(steps + 1);
    let (_, d0, _) = free_energy(s0.eps, s0.q, s0.theta, p)?;
    rows.push(TrajectoryRow {
        t: 0.0,
        eps: s0.eps,
        q: s0.q,
        eta: s0.eta,
        theta: s0.theta,
        t_force: s0.theta,
        sigma: d0[0],
        dissipation_increment: 0.0,
    });
    let mut s = s0;
    for n in 0..steps {
        let t = (n + 1) as f64 * tau;
        let ctrl = StepControl::new(tau, loading.drive(t), algorithm);
        let next = step(&s, &ctrl, p).map_err(|e| e.at_step(n + 1))?;
        let (de, dq) = ((next.eps - s.eps) / tau, (next.q - s.q) / tau);
        let (phi, dphi, _) = dissipation_potential(de, dq, p);
        let (_, d, _) = free_energy(next.eps, next.q, next.theta, p)?;
        let t_force = match algorithm {
            Algorithm::Implicit => next.theta,
            Algorithm::SemiExplicit => s.theta,
        };
        rows.push(TrajectoryRow {
            t,
            eps: next.eps,
            q: next.q,
            eta: next.eta,
            theta: next.theta,
            t_force,
            sigma: d[0] + dphi[0],
            dissipation_increment: 2.0 * tau * phi,
        });
        s = next;
    }
    Ok(rows)
}

/// Result of a time-step refinement study against a fine reference run
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauStudy {
    pub taus: Vec<f64>,
    pub reference_tau: f64,
    pub errors_implicit: Vec<f64>,
    pub errors_semi_explicit: Vec<f64>,
    /// log2 of consecutive error ratios (taus are expected to halve)
    pub orders_implicit: Vec<f64>,
    pub orders_semi_explicit: Vec<f64>,
}

fn trajectory_error(coarse: &[TrajectoryRow], fine: &[TrajectoryRow], stride: usize, p: &DeviceParams) -> f64 {
    let peak = |f: &dyn Fn(&TrajectoryRow) -> f64| fine.iter().map(f).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let (se, sq, sh, st) =
        (peak(&|r| r.eps), peak(&|r| r.q), peak(&|r| r.eta), peak(&|r| r.theta - p.theta0));
    coarse
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let f = &fine[i * stride];
            ((c.eps - f.eps).abs() / se)
                .max((c.q - f.q).abs() / sq)
                .max((c.eta - f.eta).abs() / sh)
                .max((c.theta - f.theta).abs() / st)
        })
        .fold(0.0, f64::max)
}

/// Runs both algorithms over `t_end` for each τ and measures the maximum
/// normalized state deviation from an implicit run at τ_0/`ref_divisor`
pub fn tau_study(
    p: &DeviceParams,
    loading: Loading,
    t_end: f64,
    taus: &[f64],
    ref_divisor: usize,
) -> Result<TauStudy> {
    let reference_tau = taus[0] / ref_divisor as f64;
    let ref_steps = (t_end / reference_tau).round() as usize;
    let fine = simulate(DeviceState0D::rest(p), loading, Algorithm::Implicit, reference_tau, ref_steps, p)?;
    let mut errs = [Vec::new(), Vec::new()];
    for &tau in taus {
        let stride = (tau / reference_tau).round() as usize;
        if (stride as f64 * reference_tau - tau).abs() > 1e-9 * tau {
            return Err(Error::InvalidParameter(format!("tau {tau} is not a multiple of the reference step")));
        }
        for (k, alg) in [Algorithm::Implicit, Algorithm::SemiExplicit].into_iter().enumerate() {
            let rows = simulate(DeviceState0D::rest(p), loading, alg, tau, ref_steps / stride, p)?;
            errs[k].push(trajectory_error(&rows, &fine, stride, p));
        }
    }
    let orders = |e: &[f64]| e.windows(2).map(|w| (w[0] / w[1]).log2()).collect::<Vec<_>>();
    Ok(TauStudy {
        taus: taus.to_vec(),
        reference_tau,
        orders_implicit: orders(&errs[0]),
        orders_semi_explicit: orders(&errs[1]),
        errors_implicit: errs[0].clone(),
        errors_semi_explicit: errs[1].clone(),
    })
}

/// Internal energy of the single-dashpot canonical form, e(η) = Cθ₀(e^{η/C} − 1)
pub fn canonical_internal_energy(eta: f64, p: &DeviceParams) -> f64 {
    p.c_heat * p.theta0 * ((eta / p.c_heat).exp() - 1.0)
}

/// Dissipation function of the single-dashpot canonical form,
/// v(ε̇, η̇; θ) = −θ²/(2H) (η̇/ε̇)²
pub fn canonical_dissipation(eps_rate: f64, eta_rate: f64, theta: f64, h: f64) -> f64 {
    -theta * theta / (2.0 * h) * (eta_rate / eps_rate).powi(2)
}
