//! Thermo-gradient damage at finite strain and its 1-D bar discretization.
//!
//! The bar is in uniaxial strain, `C = diag(λ², 1, 1)`, with linear elements
//! for the displacement and the damage field and one quadrature point per
//! element. Temperature lives at the element quadrature point and is
//! condensed out of the element potential, so the global unknowns are the
//! nodal pairs `(u_i, d_i)` stored interleaved.

use serde::{Deserialize, Serialize};

use crate::cahn_hilliard::log_mean;
use crate::error::{Error, Result};
use crate::fem::{minimize_bounded, Assembler, Evaluation, LocalEval, NewtonControl};
use crate::point0d::Algorithm;
use crate::tensor::{SymTensor3, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DamageParams {
    pub mu: f64,
    pub delta: f64,
    #[serde(rename = "alpha_T")]
    pub alpha_t: f64,
    #[serde(rename = "C")]
    pub c_heat: f64,
    pub theta0: f64,
    pub c0: f64,
    pub w_c: f64,
    pub l: f64,
    pub k_b: f64,
    pub eta_f: f64,
}

impl Default for DamageParams {
    fn default() -> Self {
        DamageParams {
            mu: 1000.0,
            delta: 2.0,
            alpha_t: 1e-5,
            c_heat: 1.0,
            theta0: 293.0,
            c0: 10.0,
            w_c: 1e-3,
            l: 1.0,
            k_b: 0.05,
            eta_f: 0.01,
        }
    }
}

impl DamageParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu", self.mu),
            ("delta", self.delta),
            ("C", self.c_heat),
            ("theta0", self.theta0),
            ("c0", self.c0),
            ("l", self.l),
            ("k_b", self.k_b),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eta_f >= 0.0 && self.eta_f.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta_f must be non-negative, got {}", self.eta_f)));
        }
        if !(self.w_c >= 0.0 && self.alpha_t.is_finite()) {
            return Err(Error::InvalidParameter("w_c must be non-negative and alpha_T finite".into()));
        }
        Ok(())
    }

    /// Temperature-dependent damage threshold ĉ(θ)
    pub fn threshold(&self, theta: f64) -> f64 {
        self.c0 * (1.0 - self.w_c * (theta - self.theta0))
    }
}

/// Threshold function f = β − ĉ(θ)
pub fn damage_threshold(beta: f64, theta: f64, p: &DamageParams) -> f64 {
    beta - p.threshold(theta)
}

fn degradation(d: f64) -> (f64, f64, f64) {
    ((1.0 - d) * (1.0 - d), -2.0 * (1.0 - d), 2.0)
}

fn thermal_energy(theta: f64, p: &DamageParams) -> (f64, f64, f64) {
    let r = (theta / p.theta0).ln();
    (p.c_heat * ((theta - p.theta0) - theta * r), -p.c_heat * r, -p.c_heat / theta)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DamagePointState {
    pub c: SymTensor3,
    pub d: f64,
    pub eta: f64,
    pub theta: f64,
}

/// Free energy and its driving quantities at one material point
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DamageEnergy {
    pub psi: f64,
    /// ∂ψ/∂C (half the second Piola-Kirchhoff stress)
    pub dpsi_dc: SymTensor3,
    /// β^e = ∂ψ/∂d
    pub beta_e: f64,
    /// η̃ = ∂ψ/∂θ
    pub eta_tilde: f64,
    /// Undegraded elastic energy ψ̂_e(C^e)
    pub psi_e: f64,
}

pub fn damage_free_energy(c: &SymTensor3, d: f64, theta: f64, p: &DamageParams) -> Result<DamageEnergy> {
    if !(theta > 0.0) {
        return Err(Error::NonPositiveTemperature(theta));
    }
    let det = c.det();
    if !(det > 0.0) {
        return Err(Error::NonPositiveJacobian(format!("det C = {det}")));
    }
    let c_inv = c.inverse().ok_or_else(|| Error::NonPositiveJacobian("singular C".into()))?;
    let t = theta - p.theta0;
    let iso = (-2.0 * p.alpha_t * t).exp();
    let tr_e = iso * c.trace();
    let det_pow = (3.0 * p.delta * p.alpha_t * t).exp() * det.powf(-0.5 * p.delta);
    let psi_e = 0.5 * p.mu * (tr_e - 3.0) + p.mu / p.delta * (det_pow - 1.0);
    let dpsi_e_dc = (0.5 * p.mu * iso) * SymTensor3::identity() - (0.5 * p.mu * det_pow) * c_inv;
    let dpsi_e_dt = -p.mu * p.alpha_t * tr_e + 3.0 * p.mu * p.alpha_t * det_pow;
    let (g, dg, _) = degradation(d);
    let (psi_t, dpsi_t, _) = thermal_energy(theta, p);
    Ok(DamageEnergy {
        psi: g * psi_e + psi_t,
        dpsi_dc: g * dpsi_e_dc,
        beta_e: dg * psi_e,
        eta_tilde: g * dpsi_e_dt + dpsi_t,
        psi_e,
    })
}

/// First Piola-Kirchhoff stress P^e = 2F ∂ψ/∂C
pub fn first_piola(f: &Tensor3, d: f64, theta: f64, p: &DamageParams) -> Result<Tensor3> {
    let c = crate::tensor::right_cauchy_green(f)?;
    let e = damage_free_energy(&c, d, theta, p)?;
    let s = Tensor3(e.dpsi_dc.scale(2.0).to_matrix());
    Ok(f.matmul(&s))
}

/// Undegraded elastic energy of the uniaxial-strain bar and its partial
/// derivatives in (λ, θ).
#[derive(Clone, Copy, Debug)]
struct ElasticJet {
    v: f64,
    l: f64,
    t: f64,
    ll: f64,
    lt: f64,
    tt: f64,
}

fn elastic_1d(lambda: f64, theta: f64, p: &DamageParams) -> ElasticJet {
    let t = theta - p.theta0;
    let (mu, dl, a) = (p.mu, p.delta, p.alpha_t);
    let e = (-2.0 * a * t).exp();
    let f = (3.0 * dl * a * t).exp();
    let lp = lambda.powf(-dl);
    let s = lambda * lambda + 2.0;
    ElasticJet {
        v: 0.5 * mu * (e * s - 3.0) + mu / dl * (lp * f - 1.0),
        l: mu * e * lambda - mu * lp * f / lambda,
        t: -mu * a * e * s + 3.0 * mu * a * lp * f,
        ll: mu * e + mu * (dl + 1.0) * lp * f / (lambda * lambda),
        lt: -2.0 * mu * a * e * lambda - 3.0 * dl * a * mu * lp * f / lambda,
        tt: 2.0 * mu * a * a * e * s + 9.0 * dl * mu * a * a * lp * f,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DamageMode {
    /// Rate-independent threshold with the Kuhn-Tucker conditions
    Kkt,
    /// Perzyna over-force regularization with viscosity η_f
    Viscous,
}

/// Nodal and element fields of the discretized bar
#[derive(Clone, Debug, PartialEq)]
pub struct DamageBar {
    /// Node coordinates in the reference configuration
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    /// Element entropy
    pub eta: Vec<f64>,
    /// Element temperature
    pub theta: Vec<f64>,
    /// Per-element multiplier on ĉ (1 except at the imperfection)
    pub threshold_factor: Vec<f64>,
}

impl DamageBar {
    /// Uniform mesh at rest; `imperfection` reduces ĉ of the central element
    /// by that fraction.
    pub fn new(length: f64, n_el: usize, imperfection: f64, p: &DamageParams) -> Result<Self> {
        p.validate()?;
        if n_el == 0 || !(length > 0.0) {
            return Err(Error::InvalidParameter("bar needs positive length and at least one element".into()));
        }
        if !(0.0..1.0).contains(&imperfection) {
            return Err(Error::InvalidParameter(format!("imperfection {imperfection} outside [0, 1)")));
        }
        let x: Vec<f64> = (0..=n_el).map(|i| length * i as f64 / n_el as f64).collect();
        let mut threshold_factor = vec![1.0; n_el];
        threshold_factor[n_el / 2] = 1.0 - imperfection;
        Ok(DamageBar {
            x,
            u: vec![0.0; n_el + 1],
            d: vec![0.0; n_el + 1],
            eta: vec![0.0; n_el],
            theta: vec![p.theta0; n_el],
            threshold_factor,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.x.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn element_length(&self, e: usize) -> f64 {
        self.x[e + 1] - self.x[e]
    }

    pub fn stretch(&self, e: usize) -> f64 {
        1.0 + (self.u[e + 1] - self.u[e]) / self.element_length(e)
    }

    pub fn element_centers(&self) -> Vec<f64> {
        (0..self.n_elements()).map(|e| 0.5 * (self.x[e] + self.x[e + 1])).collect()
    }

    /// Local damage driving force β^e per element
    pub fn beta_e(&self, p: &DamageParams) -> Vec<f64> {
        (0..self.n_elements())
            .map(|e| {
                let db = 0.5 * (self.d[e] + self.d[e + 1]);
                degradation(db).1 * elastic_1d(self.stretch(e), self.theta[e], p).v
            })
            .collect()
    }

    /// Nominal stress per element
    pub fn stress(&self, p: &DamageParams) -> Vec<f64> {
        (0..self.n_elements())
            .map(|e| {
                let db = 0.5 * (self.d[e] + self.d[e + 1]);
                degradation(db).0 * elastic_1d(self.stretch(e), self.theta[e], p).l
            })
            .collect()
    }

    pub fn max_damage(&self) -> f64 {
        self.d.iter().cloned().fold(0.0, f64::max)
    }

    /// Free energy of the bar ∫ψ dX
    pub fn energy(&self, p: &DamageParams) -> f64 {
        (0..self.n_elements())
            .map(|e| {
                let db = 0.5 * (self.d[e] + self.d[e + 1]);
                let psi = degradation(db).0 * elastic_1d(self.stretch(e), self.theta[e], p).v
                    + thermal_energy(self.theta[e], p).0;
                psi * self.element_length(e)
            })
            .sum()
    }
}

/// Length of the set where the piecewise-linear nodal field exceeds half of
/// its maximum.
pub fn half_max_width(x: &[f64], v: &[f64]) -> f64 {
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(vmax > 0.0) {
        return 0.0;
    }
    let h = 0.5 * vmax;
    let mut w = 0.0;
    for i in 0..x.len().saturating_sub(1) {
        let (a, b) = (v[i] - h, v[i + 1] - h);
        let len = x[i + 1] - x[i];
        if a >= 0.0 && b >= 0.0 {
            w += len;
        } else if a > 0.0 || b > 0.0 {
            w += len * a.max(b) / (a - b).abs();
        }
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DamageStepControl {
    pub tau: f64,
    pub mode: DamageMode,
    pub algorithm: Algorithm,
    /// Heat conduction between elements (semi-explicit only)
    pub conduction: bool,
    pub newton: NewtonControl,
}

impl DamageStepControl {
    pub fn new(tau: f64, mode: DamageMode, algorithm: Algorithm) -> Self {
        DamageStepControl {
            tau,
            mode,
            algorithm,
            conduction: false,
            newton: NewtonControl { max_iter: 100, abs_tol: 5e-10, ..NewtonControl::default() },
        }
    }
}

/// Element-wise values of the condensed potential at a solution
#[derive(Clone, Copy, Debug)]
struct ElementSolution {
    value: f64,
    theta: f64,
}

/// One time step of the bar: the incremental potential over the nodal
/// unknowns with element temperatures condensed.
pub struct DamageStepProblem<'a> {
    bar: &'a DamageBar,
    ctrl: DamageStepControl,
    p: DamageParams,
    u_end: f64,
    assembler: Assembler,
}

impl<'a> DamageStepProblem<'a> {
    pub fn new(bar: &'a DamageBar, u_end: f64, ctrl: &DamageStepControl, p: &DamageParams) -> Result<Self> {
        p.validate()?;
        if !(ctrl.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", ctrl.tau)));
        }
        if ctrl.conduction && ctrl.algorithm == Algorithm::Implicit {
            return Err(Error::InvalidParameter("conduction in the damage bar requires the semi-explicit algorithm".into()));
        }
        let n_el = bar.n_elements();
        let elements = (0..n_el).map(|e| vec![2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3]).collect();
        Ok(DamageStepProblem { bar, ctrl: *ctrl, p: *p, u_end, assembler: Assembler::new(2 * (n_el + 1), elements) })
    }

    pub fn n_dofs(&self) -> usize {
        self.assembler.n_dofs()
    }

    /// Previous-step state with the new end displacement applied
    pub fn initial_guess(&self) -> Vec<f64> {
        let n = self.bar.n_nodes();
        let length = self.bar.x[n - 1] - self.bar.x[0];
        let du = self.u_end - self.bar.u[n - 1];
        let mut x = Vec::with_capacity(self.n_dofs());
        for i in 0..n {
            x.push(self.bar.u[i] + du * (self.bar.x[i] - self.bar.x[0]) / length);
            x.push(self.bar.d[i]);
        }
        x
    }

    /// Free DOFs: everything except the two displacement supports and the
    /// damage values pinned at their previous value.
    pub fn free_mask(&self, pinned: &[bool]) -> Vec<bool> {
        let mut free = vec![true; self.n_dofs()];
        free[0] = false;
        free[self.n_dofs() - 2] = false;
        for (i, &pin) in pinned.iter().enumerate() {
            if pin {
                free[2 * i + 1] = false;
            }
        }
        free
    }

    fn viscosity(&self) -> f64 {
        match self.ctrl.mode {
            DamageMode::Kkt => 0.0,
            DamageMode::Viscous => self.p.eta_f,
        }
    }

    /// Dissipative part of the element potential divided by ρ-scaling, split
    /// as (ρ-linear part, ρ²-part) so that the term reads ρ·a + ρ²·b.
    fn dissipative_parts(&self, e: usize, xl: &[f64]) -> (f64, f64) {
        let le = self.bar.element_length(e);
        let (dn_a, dn_b) = (self.bar.d[e], self.bar.d[e + 1]);
        let grad = (xl[3] - xl[1]) / le;
        let grad_n = (dn_b - dn_a) / le;
        let c_hat = self.bar.threshold_factor[e] * self.p.threshold(self.bar.theta[e]);
        let (da, db) = (xl[1] - dn_a, xl[3] - dn_b);
        let lin = le * 0.5 * self.p.mu * self.p.l * self.p.l * (grad * grad - grad_n * grad_n) + 0.5 * le * c_hat * (da + db);
        let quad = 0.5 * le * self.viscosity() / (2.0 * self.ctrl.tau) * (da * da + db * db);
        (lin, quad)
    }

    fn rho_derivative(&self, e: usize) -> f64 {
        match self.ctrl.algorithm {
            Algorithm::Implicit => 1.0 / self.bar.theta[e],
            Algorithm::SemiExplicit => 0.0,
        }
    }

    /// Element potential as a function of the local unknowns and the element
    /// temperature: value, ∂/∂z, ∂²/∂z², ∂²/∂z∂θ, ∂/∂θ, ∂²/∂θ² with
    /// z = (λ, d̄, d′, Δd_a, Δd_b).
    #[allow(clippy::type_complexity)]
    fn element_jet(&self, e: usize, xl: &[f64], theta: f64) -> (f64, [f64; 5], [[f64; 5]; 5], [f64; 5], f64, f64) {
        let p = &self.p;
        let le = self.bar.element_length(e);
        let theta_n = self.bar.theta[e];
        let eta_n = self.bar.eta[e];
        let lambda = 1.0 + (xl[2] - xl[0]) / le;
        let dbar = 0.5 * (xl[1] + xl[3]);
        let grad = (xl[3] - xl[1]) / le;
        let grad_n = (self.bar.d[e + 1] - self.bar.d[e]) / le;
        let dd = [xl[1] - self.bar.d[e], xl[3] - self.bar.d[e + 1]];
        let c_hat = self.bar.threshold_factor[e] * p.threshold(theta_n);
        let visc = self.viscosity() / self.ctrl.tau;
        let rp = self.rho_derivative(e);
        let rho = match self.ctrl.algorithm {
            Algorithm::Implicit => theta / theta_n,
            Algorithm::SemiExplicit => 1.0,
        };
        let kl2 = p.mu * p.l * p.l;

        let el = elastic_1d(lambda, theta, p);
        let (g, dg, ddg) = degradation(dbar);
        let (pt, dpt, ddpt) = thermal_energy(theta, p);

        let mut v = le * (g * el.v + pt + eta_n * (theta - theta_n));
        let mut gz = [0.0; 5];
        let mut hz = [[0.0; 5]; 5];
        let mut hzt = [0.0; 5];
        let mut gt = le * (g * el.t + dpt + eta_n);
        let mut htt = le * (g * el.tt + ddpt);

        gz[0] = le * g * el.l;
        gz[1] = le * dg * el.v;
        hz[0][0] = le * g * el.ll;
        hz[0][1] = le * dg * el.l;
        hz[1][0] = hz[0][1];
        hz[1][1] = le * ddg * el.v;
        hzt[0] = le * g * el.lt;
        hzt[1] = le * dg * el.t;

        let grad_term = 0.5 * kl2 * (grad * grad - grad_n * grad_n);
        v += le * rho * grad_term;
        gz[2] = le * rho * kl2 * grad;
        hz[2][2] = le * rho * kl2;
        gt += le * rp * grad_term;
        hzt[2] = le * rp * kl2 * grad;

        for (a, &da) in dd.iter().enumerate() {
            let w = 0.5 * le;
            v += w * (c_hat * rho * da + 0.5 * visc * rho * rho * da * da);
            gz[3 + a] = w * (c_hat * rho + visc * rho * rho * da);
            hz[3 + a][3 + a] = w * visc * rho * rho;
            gt += w * (c_hat * rp * da + visc * rho * rp * da * da);
            hzt[3 + a] = w * (c_hat * rp + 2.0 * visc * rho * rp * da);
            htt += w * visc * rp * rp * da * da;
        }
        (v, gz, hz, hzt, gt, htt)
    }

    /// Solves the element temperature equation ∂θ = 0 by Newton's method.
    fn element_temperature(&self, e: usize, xl: &[f64]) -> Result<f64> {
        let lambda = 1.0 + (xl[2] - xl[0]) / self.bar.element_length(e);
        if !(lambda > 0.0) {
            return Err(Error::NonPositiveJacobian(format!("element {e}: stretch {lambda}")));
        }
        let mut theta = self.bar.theta[e];
        let scale = self.p.c_heat * self.bar.element_length(e);
        for _ in 0..60 {
            let (_, _, _, _, gt, htt) = self.element_jet(e, xl, theta);
            if gt.abs() <= 1e-14 * scale * (1.0 + theta.abs()) {
                return Ok(theta);
            }
            if !(htt < 0.0) {
                return Err(Error::LocalNewtonDivergence(format!("element {e}: temperature equation lost concavity")));
            }
            let mut dt = -gt / htt;
            while theta + dt <= 0.0 {
                dt *= 0.5;
            }
            theta += dt;
            if dt.abs() <= 1e-15 * theta {
                return Ok(theta);
            }
        }
        Err(Error::LocalNewtonDivergence(format!("element {e}: temperature iteration did not converge")))
    }

    fn local(&self, e: usize, xl: &[f64]) -> Result<(LocalEval, ElementSolution)> {
        let theta = self.element_temperature(e, xl)?;
        let (v, gz, hz, hzt, _, htt) = self.element_jet(e, xl, theta);
        let le = self.bar.element_length(e);
        let jac: [[f64; 4]; 5] = [
            [-1.0 / le, 0.0, 1.0 / le, 0.0],
            [0.0, 0.5, 0.0, 0.5],
            [0.0, -1.0 / le, 0.0, 1.0 / le],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let mut hc = hz;
        for i in 0..5 {
            for j in 0..5 {
                hc[i][j] -= hzt[i] * hzt[j] / htt;
            }
        }
        let mut g = vec![0.0; 4];
        let mut h = vec![vec![0.0; 4]; 4];
        for a in 0..4 {
            for i in 0..5 {
                g[a] += jac[i][a] * gz[i];
            }
            for b in 0..4 {
                let mut s = 0.0;
                for i in 0..5 {
                    for j in 0..5 {
                        s += jac[i][a] * hc[i][j] * jac[j][b];
                    }
                }
                h[a][b] = s;
            }
        }
        Ok(((v, g, h), ElementSolution { value: v, theta }))
    }

    /// Condensed incremental potential, its gradient and Hessian
    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        self.assembler.assemble(x, |e, xl| Ok(self.local(e, xl)?.0))
    }

    fn element_solutions(&self, x: &[f64]) -> Result<Vec<ElementSolution>> {
        (0..self.bar.n_elements())
            .map(|e| {
                let xl = &x[2 * e..2 * e + 4];
                Ok(self.local(e, xl)?.1)
            })
            .collect()
    }

    /// Condensed potential value only
    pub fn potential(&self, x: &[f64]) -> Result<f64> {
        Ok(self.element_solutions(x)?.iter().map(|s| s.value).sum())
    }

    /// Entropy increment of element `e` from its dissipative terms with the
    /// scaling ρ applied to the viscous part: (1/θ_n)[ĉΔd + ρ(η_f/τ)Δd² + φ_∇^τ]
    /// averaged over the element.
    pub fn dissipative_entropy_increment(&self, x: &[f64], e: usize, rho: f64) -> f64 {
        let xl = &x[2 * e..2 * e + 4];
        let (lin, quad) = self.dissipative_parts(e, xl);
        (lin + 2.0 * rho * quad) / (self.bar.theta[e] * self.bar.element_length(e))
    }

    /// Explicit entropy exchange from conduction evaluated on the previous
    /// temperatures, per element.
    fn conduction_entropy(&self) -> Vec<f64> {
        let bar = self.bar;
        let n_el = bar.n_elements();
        let mut out = vec![0.0; n_el];
        if !self.ctrl.conduction {
            return out;
        }
        for e in 0..n_el.saturating_sub(1) {
            let node = e + 1;
            let (ta, tb) = (bar.theta[e], bar.theta[e + 1]);
            let h = 0.5 * (bar.element_length(e) + bar.element_length(e + 1));
            let c_inv = 0.5 * (1.0 / bar.stretch(e).powi(2) + 1.0 / bar.stretch(e + 1).powi(2));
            let k = degradation(bar.d[node]).0 * self.p.k_b * c_inv;
            let flow = self.ctrl.tau * k * log_mean(ta, tb) * (tb / ta).ln() / h;
            out[e] += flow / (ta * bar.element_length(e));
            out[e + 1] -= flow / (tb * bar.element_length(e + 1));
        }
        out
    }

    /// Builds the new bar state from converged nodal unknowns.
    pub fn finish(&self, x: &[f64]) -> Result<DamageBar> {
        let sols = self.element_solutions(x)?;
        let mut next = self.bar.clone();
        for i in 0..next.n_nodes() {
            next.u[i] = x[2 * i];
            next.d[i] = x[2 * i + 1];
        }
        let cond = self.conduction_entropy();
        for (e, s) in sols.iter().enumerate() {
            match self.ctrl.algorithm {
                Algorithm::Implicit => {
                    let db = 0.5 * (next.d[e] + next.d[e + 1]);
                    let el = elastic_1d(next.stretch(e), s.theta, &self.p);
                    next.theta[e] = s.theta;
                    next.eta[e] = -(degradation(db).0 * el.t + thermal_energy(s.theta, &self.p).1);
                }
                Algorithm::SemiExplicit => {
                    next.theta[e] = s.theta;
                    next.eta[e] = self.bar.eta[e] + self.dissipative_entropy_increment(x, e, 1.0) + cond[e];
                }
            }
        }
        Ok(next)
    }
}

/// Per-step diagnostics
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DamageStepInfo {
    pub newton_iterations: usize,
    /// −Σ β^e (d − d_n) w over the elements
    pub dissipation: f64,
    /// End reaction force per unit reference area
    pub reaction: f64,
    pub max_asymmetry: f64,
}

/// Discrete Kuhn-Tucker quantities at a node
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktNode {
    /// d − d_n
    pub increment: f64,
    /// Nodal threshold function −∂π/∂d_i / w_i (≤ 0 when admissible)
    pub threshold: f64,
    /// |(d − d_n) ∂π/∂d_i|, the complementarity product in weak form
    pub complementarity: f64,
}

/// Kuhn-Tucker triplet of the reduced problem at the nodes of `next`
pub fn kkt_residuals(prev: &DamageBar, next: &DamageBar, u_end: f64, ctrl: &DamageStepControl, p: &DamageParams) -> Result<Vec<KktNode>> {
    let prob = DamageStepProblem::new(prev, u_end, ctrl, p)?;
    let mut x = Vec::with_capacity(prob.n_dofs());
    for (u, d) in next.u.iter().zip(&next.d) {
        x.push(*u);
        x.push(*d);
    }
    let ev = prob.evaluate(&x)?;
    let n = prev.n_nodes();
    Ok((0..n)
        .map(|i| {
            let w = if i > 0 { 0.5 * prev.element_length(i - 1) } else { 0.0 }
                + if i + 1 < n { 0.5 * prev.element_length(i) } else { 0.0 };
            let f = -ev.gradient[2 * i + 1] / w;
            let inc = next.d[i] - prev.d[i];
            KktNode { increment: inc, threshold: f, complementarity: (inc * f * w).abs() }
        })
        .collect())
}

/// Advances the bar by one step with end displacement `u_end`.
///
/// The condensed potential is minimized over the nodal unknowns subject to
/// d_n ≤ d ≤ 1 node-wise, so irreversibility holds exactly and the
/// Kuhn-Tucker triplet is the optimality condition of the bound-constrained
/// problem.
pub fn step_damage_bar(bar: &DamageBar, u_end: f64, ctrl: &DamageStepControl, p: &DamageParams) -> Result<(DamageBar, DamageStepInfo)> {
    let prob = DamageStepProblem::new(bar, u_end, ctrl, p)?;
    let n = bar.n_nodes();
    let mut x = prob.initial_guess();
    let free = prob.free_mask(&vec![false; n]);
    let lower: Vec<f64> = (0..2 * n).map(|k| if k % 2 == 1 { bar.d[k / 2] } else { f64::NEG_INFINITY }).collect();
    let upper: Vec<f64> = (0..2 * n).map(|k| if k % 2 == 1 { 1.0 } else { f64::INFINITY }).collect();
    let rep = minimize_bounded(&mut x, &free, &lower, &upper, &ctrl.newton, |y| prob.evaluate(y))?;
    let ev = prob.evaluate(&x)?;
    let next = prob.finish(&x)?;
    let beta = next.beta_e(p);
    let dissipation = (0..bar.n_elements())
        .map(|e| {
            let dd = 0.5 * ((next.d[e] - bar.d[e]) + (next.d[e + 1] - bar.d[e + 1]));
            -beta[e] * dd * bar.element_length(e)
        })
        .sum();
    let info = DamageStepInfo {
        newton_iterations: rep.iterations,
        dissipation,
        reaction: ev.gradient[2 * (n - 1)],
        max_asymmetry: rep.max_asymmetry,
    };
    Ok((next, info))
}

/// Time-history record of a bar run
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DamageRecord {
    pub t: f64,
    pub u_end: f64,
    pub reaction: f64,
    pub max_damage: f64,
    pub dissipation: f64,
    pub max_theta: f64,
    pub band_width: f64,
    pub newton_iterations: usize,
    pub max_asymmetry: f64,
}

/// Loads the bar by an end-displacement ramp `u_end = rate·t` up to `t_end`,
/// halving the step on solver failure.
#[allow(clippy::too_many_arguments)]
pub fn run_damage_bar<F>(
    mut bar: DamageBar,
    rate: f64,
    t_end: f64,
    steps: usize,
    ctrl: &DamageStepControl,
    max_halvings: u32,
    p: &DamageParams,
    mut observe: F,
) -> Result<(DamageBar, Vec<DamageRecord>)>
where
    F: FnMut(&DamageBar, &DamageRecord),
{
    p.validate()?;
    if steps == 0 {
        return Err(Error::InvalidParameter("at least one step required".into()));
    }
    let tau = t_end / steps as f64;
    let mut t = 0.0;
    let mut level = 0u32;
    let mut records = Vec::new();
    let mut step_no = 0usize;
    while t < t_end * (1.0 - 1e-12) {
        let dt = (tau / f64::from(1u32 << level)).min(t_end - t);
        let c = DamageStepControl { tau: dt, ..*ctrl };
        match step_damage_bar(&bar, rate * (t + dt), &c, p) {
            Ok((next, info)) => {
                t += dt;
                step_no += 1;
                bar = next;
                let rec = DamageRecord {
                    t,
                    u_end: rate * t,
                    reaction: info.reaction,
                    max_damage: bar.max_damage(),
                    dissipation: info.dissipation,
                    max_theta: bar.theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    band_width: half_max_width(&bar.x, &bar.d),
                    newton_iterations: info.newton_iterations,
                    max_asymmetry: info.max_asymmetry,
                };
                observe(&bar, &rec);
                records.push(rec);
                level = level.saturating_sub(1);
            }
            Err(
                Error::NewtonDivergence { .. }
                | Error::SingularMatrix { .. }
                | Error::LocalNewtonDivergence(_)
                | Error::NonPositiveJacobian(_)
                | Error::ActiveSetCycling(_),
            ) => {
                if level >= max_halvings {
                    return Err(Error::StepSizeFloor(dt).at_step(step_no + 1));
                }
                level += 1;
            }
            Err(e) => return Err(e.at_step(step_no + 1)),
        }
    }
    Ok((bar, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniaxial_jet_matches_tensor_form() {
        let p = DamageParams::default();
        let (lambda, theta) = (1.07, 305.0);
        let c = SymTensor3::diag(lambda * lambda, 1.0, 1.0);
        let full = damage_free_energy(&c, 0.0, theta, &p).unwrap();
        let jet = elastic_1d(lambda, theta, &p);
        assert!((full.psi_e - jet.v).abs() < 1e-10 * jet.v.abs().max(1.0));
        assert!((2.0 * lambda * full.dpsi_dc.0[0] - jet.l).abs() < 1e-9 * jet.l.abs().max(1.0));
    }

    #[test]
    fn half_max_width_of_hat() {
        let x = [0.0, 1.0, 2.0];
        assert!((half_max_width(&x, &[0.0, 1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(half_max_width(&x, &[0.0, 0.0, 0.0]), 0.0);
    }
}
