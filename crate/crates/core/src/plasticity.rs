//! Additive Hencky gradient plasticity with thermal softening.
//!
//! The quadrature-point engine works in the mixed setting: the hardening
//! variable α and its dual force β are global fields, while the plastic
//! strain and the temperature are condensed locally. For the viscous
//! over-force dissipation the local problem in ε^p and the deviatoric force s
//! has a closed-form solution, so after elimination the density depends on
//! (ε, α, ∇α, β) and θ only. θ is then removed by a scalar Newton on the
//! local state equation.

use nalgebra::SVector;
use num_dual::{hessian, second_derivative, Dual2, DualNum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point0d::Algorithm;
use crate::tensor::{plane_strain_dc_df, right_cauchy_green, HenckyStrain, SymTensor3, Tensor3};

const SQRT_2_3: f64 = 0.816_496_580_927_726;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlastParams {
    pub kappa: f64,
    pub mu: f64,
    #[serde(rename = "alpha_T")]
    pub alpha_t: f64,
    #[serde(rename = "C")]
    pub c_heat: f64,
    pub theta0: f64,
    pub h0: f64,
    pub w_h: f64,
    pub y0: f64,
    pub w0: f64,
    pub l: f64,
    pub eta_f: f64,
    /// Heat conductivity, used only by [`conduction_potential`]
    pub k: f64,
}

impl Default for PlastParams {
    fn default() -> Self {
        PlastParams {
            kappa: 164_206.0,
            mu: 80_194.0,
            alpha_t: 1e-5,
            c_heat: 3.588,
            theta0: 293.0,
            h0: -500.0,
            w_h: 0.002,
            y0: 450.0,
            w0: 0.002,
            l: 0.2,
            eta_f: 0.01,
            k: 45.0,
        }
    }
}

impl PlastParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("kappa", self.kappa), ("mu", self.mu), ("C", self.c_heat), ("theta0", self.theta0), ("y0", self.y0)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [("l", self.l), ("eta_f", self.eta_f), ("k", self.k)];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        if ![self.h0, self.w_h, self.w0, self.alpha_t].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("h0, w_h, w0 and alpha_T must be finite".into()));
        }
        Ok(())
    }

    /// Temperature-dependent hardening modulus ĥ(θ)
    pub fn hardening(&self, theta: f64) -> f64 {
        self.h0 * (1.0 - self.w_h * (theta - self.theta0))
    }

    /// Temperature-dependent yield stress ŷ(θ)
    pub fn yield_stress(&self, theta: f64) -> f64 {
        self.y0 * (1.0 - self.w0 * (theta - self.theta0))
    }
}

/// History of a quadrature point
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlastPointState {
    /// Logarithmic plastic strain, deviatoric
    pub eps_p: SymTensor3,
    /// Equivalent plastic strain accumulated by the local flow rule
    pub alpha: f64,
    pub eta: f64,
    pub theta: f64,
}

impl PlastPointState {
    pub fn initial(p: &PlastParams) -> Self {
        PlastPointState { eps_p: SymTensor3::zero(), alpha: 0.0, eta: 0.0, theta: p.theta0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlastEnergy {
    pub psi: f64,
    /// σ^e = ∂ψ/∂ε
    pub sigma_e: SymTensor3,
    /// 𝔅^e = ∂ψ/∂ε^p = −2μ Dev ε^e
    pub beta_tensor: SymTensor3,
    /// Local part ∂ψ_p/∂α of the hardening force
    pub beta_local: f64,
    pub eta_tilde: f64,
}

fn thermal_energy(theta: f64, p: &PlastParams) -> (f64, f64) {
    let r = (theta / p.theta0).ln();
    (p.c_heat * ((theta - p.theta0) - theta * r), -p.c_heat * r)
}

/// Free energy and driving forces at a point
pub fn plast_free_energy(
    eps: &SymTensor3,
    eps_p: &SymTensor3,
    alpha: f64,
    grad_alpha: &[f64],
    theta: f64,
    p: &PlastParams,
) -> Result<PlastEnergy> {
    if theta.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::NonPositiveTemperature(theta));
    }
    let tr = eps.trace();
    let dev_e = (*eps - *eps_p).deviator();
    let dt = theta - p.theta0;
    let (psi_t, dpsi_t) = thermal_energy(theta, p);
    let g2: f64 = grad_alpha.iter().map(|g| g * g).sum();
    let psi = 0.5 * p.kappa * tr * tr
        + p.mu * dev_e.ddot(&dev_e)
        + 0.5 * p.hardening(theta) * alpha * alpha
        + 0.5 * p.mu * p.l * p.l * g2
        - p.kappa * p.alpha_t * tr * dt
        + psi_t;
    let sigma_e = SymTensor3::identity().scale(p.kappa * (tr - p.alpha_t * dt)) + dev_e.scale(2.0 * p.mu);
    let eta_tilde = -0.5 * p.h0 * p.w_h * alpha * alpha - p.kappa * p.alpha_t * tr + dpsi_t;
    Ok(PlastEnergy { psi, sigma_e, beta_tensor: dev_e.scale(-2.0 * p.mu), beta_local: p.hardening(theta) * alpha, eta_tilde })
}

/// Von Mises threshold `|s| − √(2/3)(ŷ(θ) − β)`
pub fn yield_function(s: &SymTensor3, beta: f64, theta: f64, p: &PlastParams) -> f64 {
    s.norm() - SQRT_2_3 * (p.yield_stress(theta) - beta)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowUpdate {
    pub eps_p: SymTensor3,
    pub alpha: f64,
    /// Rate of |ε^p| over the step, so that |Δε^p| = τ·λ_eff
    pub lambda_eff: f64,
}

/// Local over-force update from the trial forces at the frozen plastic
/// strain ε^p_n. `hardening` is dβ^e/dα seen by the local problem: zero in
/// the mixed setting where β is a field, ĥ for a purely local model. With
/// `eta_f = 0` this is the rate-independent radial return.
pub fn viscous_flow_update(
    beta_trial: &SymTensor3,
    beta_e: f64,
    theta_n: f64,
    state_n: &PlastPointState,
    tau: f64,
    hardening: f64,
    p: &PlastParams,
) -> Result<FlowUpdate> {
    let s_tr = beta_trial.scale(-1.0);
    let f_tr = yield_function(&s_tr, -beta_e, theta_n, p);
    if f_tr <= 0.0 {
        return Ok(FlowUpdate { eps_p: state_n.eps_p, alpha: state_n.alpha, lambda_eff: 0.0 });
    }
    let norm = s_tr.norm();
    if norm == 0.0 {
        return Err(Error::ZeroNormDirection);
    }
    let stiffness = 2.0 * p.mu + 2.0 / 3.0 * hardening + p.eta_f / tau;
    if !(stiffness > 0.0) {
        return Err(Error::InvalidParameter(format!("local return stiffness {stiffness} is not positive")));
    }
    let gamma = f_tr / stiffness;
    Ok(FlowUpdate {
        eps_p: state_n.eps_p + s_tr.scale(gamma / norm),
        alpha: state_n.alpha + SQRT_2_3 * gamma,
        lambda_eff: gamma / tau,
    })
}

/// Intrinsic dissipation `s : ε̇^p + β α̇`
pub fn intrinsic_dissipation_plast(s: &SymTensor3, beta: f64, eps_p_rate: &SymTensor3, alpha_rate: f64) -> f64 {
    s.ddot(eps_p_rate) + beta * alpha_rate
}

/// Conductive dissipation potential `½ θ_n k C_n⁻¹ : (g ⊗ g)` with
/// `g = −∇T/T`, returned with its gradient with respect to g
pub fn conduction_potential(g: &[f64; 3], theta_n: f64, c_n: &SymTensor3, p: &PlastParams) -> Result<(f64, [f64; 3])> {
    let c_inv = c_n.inverse().ok_or_else(|| Error::NonPositiveJacobian("singular C_n".into()))?;
    let m = c_inv.to_matrix();
    let mut q = [0.0; 3];
    for i in 0..3 {
        q[i] = theta_n * p.k * (0..3).map(|j| m[i][j] * g[j]).sum::<f64>();
    }
    let value = 0.5 * (0..3).map(|i| q[i] * g[i]).sum::<f64>();
    Ok((value, q))
}

/// Data of the point frozen during a step
#[derive(Clone, Copy, Debug)]
struct Frozen {
    eps_p_n: SymTensor3,
    alpha_n: f64,
    eta_n: f64,
    theta_n: f64,
    tau: f64,
    yield_n: f64,
    implicit: bool,
}

/// Incremental density after elimination of ε^p and s, as a function of
/// (ε, α, β, θ) without the gradient term
fn reduced_density<D: DualNum<Primitive = f64>>(eps: &[D; 6], alpha: D, beta: D, theta: D, fz: &Frozen, p: &PlastParams) -> D {
    let tr = eps[0].clone() + &eps[1] + &eps[2];
    let third = tr.clone() / 3.0;
    let mut r2 = D::from(0.0);
    for i in 0..3 {
        let e = eps[i].clone() - &third - fz.eps_p_n.0[i];
        r2 += e.clone() * e;
    }
    for i in 3..6 {
        let e = eps[i].clone() - fz.eps_p_n.0[i];
        r2 += e.clone() * e * 2.0;
    }
    let rho = if fz.implicit { theta.clone() / fz.theta_n } else { D::from(1.0) };
    let k = (-beta.clone() + fz.yield_n) * SQRT_2_3;
    let a = rho.clone() * &rho * (p.eta_f / fz.tau) + 2.0 * p.mu;
    let mut phi = r2.clone() * p.mu;
    if r2.re() > 0.0 {
        let q = r2.sqrt() * (2.0 * p.mu) - rho.clone() * k;
        if q.re() > 0.0 {
            phi -= q.clone() * q / (a * 2.0);
        }
    }
    let dt = theta.clone() - p.theta0;
    let hard = (-dt.clone() * p.w_h + 1.0) * p.h0;
    let psi_t = (dt.clone() - theta.clone() * (theta.clone() / p.theta0).ln()) * p.c_heat;
    phi + tr.clone() * &tr * (0.5 * p.kappa) + hard * &alpha * &alpha * 0.5 - tr * dt * (p.kappa * p.alpha_t)
        + psi_t
        + (theta - fz.theta_n) * fz.eta_n
        + rho * beta * (alpha - fz.alpha_n)
}

/// Solution of the local problem at given (ε, β, θ)
struct LocalReturn {
    gamma: f64,
    direction: SymTensor3,
    s: SymTensor3,
}

fn local_return(eps: &SymTensor3, beta: f64, theta: f64, fz: &Frozen, p: &PlastParams) -> Result<LocalReturn> {
    let e = eps.deviator() - fz.eps_p_n;
    let r = e.norm();
    let rho = if fz.implicit { theta / fz.theta_n } else { 1.0 };
    let k = SQRT_2_3 * (fz.yield_n - beta);
    let a = 2.0 * p.mu + rho * rho * p.eta_f / fz.tau;
    let q = 2.0 * p.mu * r - rho * k;
    if q <= 0.0 {
        let direction = if r > 0.0 { e.scale(1.0 / r) } else { SymTensor3::zero() };
        return Ok(LocalReturn { gamma: 0.0, direction, s: e.scale(2.0 * p.mu) });
    }
    if r == 0.0 {
        return Err(Error::ZeroNormDirection);
    }
    let gamma = q / a;
    let direction = e.scale(1.0 / r);
    // s = −𝔅^e/ρ with the scaling factor of the implicit update
    Ok(LocalReturn { gamma, direction, s: direction.scale(2.0 * p.mu * (r - gamma) / rho) })
}

#[derive(Clone, Copy, Debug)]
pub struct PlastDensityInput {
    pub f: Tensor3,
    pub alpha: f64,
    pub grad_alpha: [f64; 2],
    pub beta: f64,
    pub history: PlastPointState,
    pub tau: f64,
    pub algorithm: Algorithm,
}

/// Condensed density with exact derivatives with respect to
/// (F11, F12, F21, F22, α, α,1, α,2, β)
#[derive(Clone, Copy, Debug)]
pub struct PlastDensityEval {
    pub value: f64,
    pub gradient: [f64; 8],
    pub hessian: [[f64; 8]; 8],
    /// Point state at the end of the step
    pub state: PlastPointState,
    /// Plastic multiplier increment |Δε^p|
    pub gamma: f64,
    /// s : Δε^p + β Δα over the step (per unit volume)
    pub dissipation: f64,
    pub s: SymTensor3,
}

fn local_temperature(eps: &[f64; 6], alpha: f64, beta: f64, fz: &Frozen, p: &PlastParams) -> Result<f64> {
    let mut theta = fz.theta_n;
    for _ in 0..50 {
        let (_, d1, d2) = second_derivative(
            |t| {
                let e = eps.map(Dual2::from_re);
                reduced_density(&e, Dual2::from_re(alpha), Dual2::from_re(beta), t, fz, p)
            },
            theta,
        );
        if !(d2 != 0.0 && d2.is_finite() && d1.is_finite()) {
            break;
        }
        let mut dtheta = -d1 / d2;
        while theta + dtheta <= 0.0 {
            dtheta *= 0.5;
        }
        theta += dtheta;
        if dtheta.abs() <= 1e-13 * theta {
            return Ok(theta);
        }
    }
    Err(Error::LocalNewtonDivergence(format!("temperature at alpha = {alpha:e}, beta = {beta:e}")))
}

pub fn incremental_density_plast(inp: &PlastDensityInput, p: &PlastParams) -> Result<PlastDensityEval> {
    let det = inp.f.det();
    if !(det > 0.0) {
        return Err(Error::NonPositiveJacobian(format!("det F = {det:e}")));
    }
    let h = &inp.history;
    if !(h.theta > 0.0) {
        return Err(Error::NonPositiveTemperature(h.theta));
    }
    let fz = Frozen {
        eps_p_n: h.eps_p,
        alpha_n: h.alpha,
        eta_n: h.eta,
        theta_n: h.theta,
        tau: inp.tau,
        yield_n: p.yield_stress(h.theta),
        implicit: inp.algorithm == Algorithm::Implicit,
    };
    let c = right_cauchy_green(&inp.f)?;
    let hencky = HenckyStrain::new(&c)?;
    let eps = hencky.strain;
    let theta = local_temperature(&eps.0, inp.alpha, inp.beta, &fz, p)?;

    // plane strain: the out-of-plane shear slots and their stresses vanish
    let mut w = SVector::<f64, 7>::zeros();
    for k in 0..4 {
        w[k] = eps.0[k];
    }
    w[4] = inp.alpha;
    w[5] = inp.beta;
    w[6] = theta;
    let (value, g, hm) = hessian(
        |v| {
            let zero = v[0].clone() * 0.0;
            let e = [v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone(), zero.clone(), zero];
            reduced_density(&e, v[4].clone(), v[5].clone(), v[6].clone(), &fz, p)
        },
        &w,
    );
    // condensation of θ: θ is stationary, so only the tangent changes
    let htt = hm[(6, 6)];
    let mut hz = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            hz[i][j] = hm[(i, j)] - hm[(i, 6)] * hm[(6, j)] / htt;
        }
    }

    // chain rule ε(C(F)) for the in-plane strain slots
    let de_dc = hencky.first();
    let (dc_df, d2c_df2) = plane_strain_dc_df(&inp.f);
    let mut de_df = [[0.0; 4]; 4];
    for k in 0..4 {
        for a in 0..4 {
            de_df[k][a] = (0..6).map(|l| de_dc[k][l] * dc_df[l][a]).sum();
        }
    }
    let g_eps: [f64; 6] = std::array::from_fn(|k| if k < 4 { g[k] } else { 0.0 });
    let g_c: [f64; 6] = std::array::from_fn(|l| (0..4).map(|k| g_eps[k] * de_dc[k][l]).sum());
    let second = hencky.second_contracted(&g_eps);

    // z = (ε0..ε3, α, β) → y = (F11, F12, F21, F22, α, α,1, α,2, β)
    let mut jac = [[0.0; 8]; 6];
    for k in 0..4 {
        jac[k][..4].copy_from_slice(&de_df[k]);
    }
    jac[4][4] = 1.0;
    jac[5][7] = 1.0;
    let mut gradient = [0.0; 8];
    let mut hess = [[0.0; 8]; 8];
    let gz: [f64; 6] = std::array::from_fn(|i| g[i]);
    let mut hj = [[0.0; 8]; 6];
    for i in 0..6 {
        for b in 0..8 {
            hj[i][b] = (0..6).map(|j| hz[i][j] * jac[j][b]).sum();
        }
    }
    for a in 0..8 {
        gradient[a] = (0..6).map(|i| gz[i] * jac[i][a]).sum();
        for b in 0..8 {
            hess[a][b] = (0..6).filter(|&i| jac[i][a] != 0.0).map(|i| jac[i][a] * hj[i][b]).sum();
        }
    }
    for a in 0..4 {
        for b in 0..4 {
            let mut v = 0.0;
            for l in 0..6 {
                v += g_c[l] * d2c_df2[l][a][b];
                for m in 0..6 {
                    v += second[l][m] * dc_df[l][a] * dc_df[m][b];
                }
            }
            hess[a][b] += v;
        }
    }
    let ml2 = p.mu * p.l * p.l;
    let g2 = inp.grad_alpha[0].powi(2) + inp.grad_alpha[1].powi(2);
    gradient[5] = ml2 * inp.grad_alpha[0];
    gradient[6] = ml2 * inp.grad_alpha[1];
    hess[5][5] = ml2;
    hess[6][6] = ml2;

    let ret = local_return(&eps, inp.beta, theta, &fz, p)?;
    let d_alpha = SQRT_2_3 * ret.gamma;
    let dissipation = ret.s.ddot(&ret.direction) * ret.gamma + inp.beta * d_alpha;
    let eta = match inp.algorithm {
        Algorithm::SemiExplicit => h.eta + dissipation / h.theta,
        Algorithm::Implicit => {
            -plast_free_energy(&eps, &(h.eps_p + ret.direction.scale(ret.gamma)), inp.alpha, &[], theta, p)?.eta_tilde
        }
    };
    let state = PlastPointState {
        eps_p: h.eps_p + ret.direction.scale(ret.gamma),
        alpha: h.alpha + d_alpha,
        eta,
        theta,
    };
    Ok(PlastDensityEval {
        value: value + 0.5 * ml2 * g2,
        gradient,
        hessian: hess,
        state,
        gamma: ret.gamma,
        dissipation,
        s: ret.s,
    })
}

/// Entropy increment of a converged step recomputed with the scaling factor
/// `rho` on the dissipation, `rho·D/θ_n`
pub fn scaled_entropy_increment(eval: &PlastDensityEval, theta_n: f64, rho: f64) -> f64 {
    rho * eval.dissipation / theta_n
}
