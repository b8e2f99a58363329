//! Cahn-Hilliard diffusion with temperature on a 1-D staggered grid.
//!
//! Concentration, entropy and temperature live on cells, the species flux
//! ℍ on faces. One step solves the stationarity of the flux-based incremental
//! potential for ℍ (and for the thermal driving force T in the implicit
//! coupled update); the concentration follows from c = c_n − τ Div ℍ, so the
//! total species content is conserved by construction.

use crate::error::{Error, Result};
use crate::fem::{solve_newton, Assembler, Evaluation, LineSearch, LocalEval, NewtonControl};
use serde::{Deserialize, Serialize};

/// Material constants of the diffusion model
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChParams {
    /// Threshold (entropic) energy (MPa)
    #[serde(rename = "A")]
    pub a: f64,
    /// Mixing energy (MPa)
    #[serde(rename = "B")]
    pub b: f64,
    /// Interface parameter (MPa·mm²)
    #[serde(rename = "D")]
    pub d: f64,
    /// Mobility at θ₀ (mm²/(MPa·s))
    #[serde(rename = "M0")]
    pub m0: f64,
    /// Activation temperature of the mobility (K), 0 for a constant mobility
    #[serde(rename = "Q")]
    pub q_act: f64,
    /// Thermal conductivity (MPa·mm²/(s·K))
    pub k: f64,
    /// Heat capacity per unit volume (MPa/K)
    #[serde(rename = "C")]
    pub c_heat: f64,
    pub theta0: f64,
}

impl Default for ChParams {
    fn default() -> Self {
        ChParams { a: 1.0, b: 3.0, d: 1e-3, m0: 1.0, q_act: 0.0, k: 1e-3, c_heat: 1.0, theta0: 293.0 }
    }
}

impl ChParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.a > 0.0, "A > 0"),
            (self.b > 0.0, "B > 0"),
            (self.d > 0.0, "D > 0"),
            (self.m0 > 0.0, "M0 > 0"),
            (self.q_act >= 0.0, "Q >= 0"),
            (self.k > 0.0, "k > 0"),
            (self.c_heat > 0.0, "C > 0"),
            (self.theta0 > 0.0, "theta0 > 0"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::InvalidParameter(format!("cahn-hilliard: {what}")));
            }
        }
        Ok(())
    }

    /// M̂(θ) = M₀ exp(−Q(1/θ − 1/θ₀))
    pub fn mobility(&self, theta: f64) -> f64 {
        self.m0 * (-self.q_act * (1.0 / theta - 1.0 / self.theta0)).exp()
    }
}

/// Local free energy ψ_l(c) with its first two derivatives
pub fn local_energy(c: f64, p: &ChParams) -> Result<(f64, f64, f64)> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::ConcentrationOutOfRange { cell: usize::MAX, value: c });
    }
    let l = c.ln();
    let m = (1.0 - c).ln();
    Ok((
        p.a * (c * l + (1.0 - c) * m) + p.b * c * (1.0 - c),
        p.a * (l - m) + p.b * (1.0 - 2.0 * c),
        p.a / (c * (1.0 - c)) - 2.0 * p.b,
    ))
}

/// Purely thermal free energy C[(θ − θ₀) − θ ln(θ/θ₀)] and derivatives
fn thermal_energy(theta: f64, c_heat: f64, theta0: f64) -> Result<(f64, f64, f64)> {
    if theta.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::NonPositiveTemperature(theta));
    }
    let ln = (theta / theta0).ln();
    Ok((c_heat * ((theta - theta0) - theta * ln), -c_heat * ln, -c_heat / theta))
}

/// Logarithmic mean (a − b)/(ln a − ln b)
pub fn log_mean(a: f64, b: f64) -> f64 {
    let r = a / b - 1.0;
    if r.abs() < 1e-6 {
        b * (1.0 + r / 2.0 - r * r / 12.0)
    } else {
        (a - b) / (a / b).ln()
    }
}

/// Boundary conditions of the species problem
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConcentrationBc {
    Periodic,
    /// ℍ·n = 0 at both ends
    NoFlux,
    /// Prescribed chemical potential μ̄ at both ends
    Potential { left: f64, right: f64 },
}

/// Thermal boundary conditions at the two ends (ignored when periodic)
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThermalBc {
    Insulated,
    /// Prescribed temperature (implicit update only)
    Dirichlet { left: f64, right: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    Isothermal,
    Thermal,
}

pub use crate::point0d::Algorithm;

/// Cell and face fields of the 1-D grid
#[derive(Clone, Debug, PartialEq)]
pub struct ChGrid {
    pub dx: f64,
    pub c: Vec<f64>,
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
    /// Face fluxes; N entries when periodic, N + 1 otherwise
    pub flux: Vec<f64>,
    pub bc: ConcentrationBc,
    pub thermal_bc: ThermalBc,
}

impl ChGrid {
    /// Grid at uniform temperature θ₀ with zero entropy and flux
    pub fn new(c: Vec<f64>, length: f64, bc: ConcentrationBc, p: &ChParams) -> Result<Self> {
        let n = c.len();
        if n < 3 {
            return Err(Error::InvalidParameter("cahn-hilliard: at least 3 cells".into()));
        }
        if let Some((cell, &value)) = c.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v < 1.0)) {
            return Err(Error::ConcentrationOutOfRange { cell, value });
        }
        let faces = if bc == ConcentrationBc::Periodic { n } else { n + 1 };
        Ok(ChGrid {
            dx: length / n as f64,
            c,
            eta: vec![0.0; n],
            theta: vec![p.theta0; n],
            flux: vec![0.0; faces],
            bc,
            thermal_bc: ThermalBc::Insulated,
        })
    }

    pub fn cells(&self) -> usize {
        self.c.len()
    }

    fn periodic(&self) -> bool {
        self.bc == ConcentrationBc::Periodic
    }

    fn n_faces(&self) -> usize {
        if self.periodic() {
            self.cells()
        } else {
            self.cells() + 1
        }
    }

    /// Cell-center coordinates
    pub fn x(&self) -> Vec<f64> {
        (0..self.cells()).map(|i| (i as f64 + 0.5) * self.dx).collect()
    }

    /// Total species content Σ c Δx
    pub fn mass(&self) -> f64 {
        self.c.iter().sum::<f64>() * self.dx
    }

    fn neighbour_c(&self, i: usize, right: bool) -> f64 {
        let n = self.cells();
        match (right, self.periodic()) {
            (true, true) => self.c[(i + 1) % n],
            (false, true) => self.c[(i + n - 1) % n],
            (true, false) => self.c[if i + 1 < n { i + 1 } else { i }],
            (false, false) => self.c[if i > 0 { i - 1 } else { i }],
        }
    }

    /// Chemical potential μ = ψ_l′(c) − D Δc with mirror ghosts at the ends
    pub fn chemical_potential(&self, p: &ChParams) -> Result<Vec<f64>> {
        let mut mu = Vec::with_capacity(self.cells());
        for i in 0..self.cells() {
            let (_, d1, _) = local_energy(self.c[i], p).map_err(|e| cell_error(e, i))?;
            let lap = (self.neighbour_c(i, true) - 2.0 * self.c[i] + self.neighbour_c(i, false)) / (self.dx * self.dx);
            mu.push(d1 - p.d * lap);
        }
        Ok(mu)
    }

    /// Stored energy Σ ψ_l Δx + Σ_faces Δx D/2 |∇c|² (thermal part excluded)
    pub fn energy(&self, p: &ChParams) -> Result<f64> {
        let n = self.cells();
        let mut e = 0.0;
        for i in 0..n {
            e += self.dx * local_energy(self.c[i], p).map_err(|e| cell_error(e, i))?.0;
        }
        let pairs = if self.periodic() { n } else { n - 1 };
        for k in 0..pairs {
            let g = (self.c[(k + 1) % n] - self.c[k]) / self.dx;
            e += self.dx * 0.5 * p.d * g * g;
        }
        Ok(e)
    }

    /// Total entropy Σ η Δx
    pub fn entropy(&self) -> f64 {
        self.eta.iter().sum::<f64>() * self.dx
    }
}

fn cell_error(e: Error, cell: usize) -> Error {
    match e {
        Error::ConcentrationOutOfRange { value, .. } => Error::ConcentrationOutOfRange { cell, value },
        other => other,
    }
}

/// Control of one diffusion step
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChStepControl {
    pub tau: f64,
    pub coupling: Coupling,
    pub algorithm: Algorithm,
    pub newton: NewtonControl,
}

impl ChStepControl {
    pub fn new(tau: f64, coupling: Coupling, algorithm: Algorithm) -> Self {
        let line_search = match (coupling, algorithm) {
            (Coupling::Thermal, Algorithm::Implicit) => LineSearch::ResidualNorm,
            _ => LineSearch::Potential,
        };
        ChStepControl { tau, coupling, algorithm, newton: NewtonControl { line_search, max_iter: 40, ..NewtonControl::default() } }
    }
}

/// DOF layout of one step: face flux H_f and cell driving force T_i,
/// interleaved so that the saddle partners are adjacent
#[derive(Clone, Debug)]
pub struct ChLayout {
    pub n_cells: usize,
    pub n_faces: usize,
    pub periodic: bool,
}

impl ChLayout {
    fn of(grid: &ChGrid) -> Self {
        ChLayout { n_cells: grid.cells(), n_faces: grid.n_faces(), periodic: grid.periodic() }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_faces + self.n_cells
    }

    pub fn flux_dof(&self, f: usize) -> usize {
        if f < self.n_cells {
            2 * f
        } else {
            2 * self.n_cells
        }
    }

    pub fn temperature_dof(&self, i: usize) -> usize {
        2 * i + 1
    }

    /// Faces (left, right) of a cell
    fn cell_faces(&self, i: usize) -> (usize, usize) {
        if self.periodic {
            (i, (i + 1) % self.n_cells)
        } else {
            (i, i + 1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Element {
    Cell(usize),
    /// Interior face between cells (left, right)
    Face(usize, usize, usize),
    /// Boundary face at the left (false) or right (true) end
    Boundary(usize, bool),
}

/// Which parts of the incremental potential enter an evaluation
#[derive(Clone, Copy, Debug)]
struct Parts {
    storage: bool,
    thermal: bool,
}

/// Incremental potential of one step as an assembled system
pub struct ChStepProblem<'a> {
    grid_n: &'a ChGrid,
    p: &'a ChParams,
    ctrl: ChStepControl,
    layout: ChLayout,
    elements: Vec<Element>,
    assembler: Assembler,
}

impl<'a> ChStepProblem<'a> {
    pub fn new(grid_n: &'a ChGrid, ctrl: ChStepControl, p: &'a ChParams) -> Result<Self> {
        if matches!(grid_n.thermal_bc, ThermalBc::Dirichlet { .. })
            && ctrl.coupling == Coupling::Thermal
            && ctrl.algorithm == Algorithm::SemiExplicit
            && !grid_n.periodic()
        {
            return Err(Error::InvalidParameter(
                "cahn-hilliard: prescribed temperatures need the implicit update".into(),
            ));
        }
        let layout = ChLayout::of(grid_n);
        let n = layout.n_cells;
        let mut elements = Vec::new();
        let mut dofs = Vec::new();
        for i in 0..n {
            let (l, r) = layout.cell_faces(i);
            elements.push(Element::Cell(i));
            dofs.push(vec![layout.flux_dof(l), layout.flux_dof(r), layout.temperature_dof(i)]);
        }
        let interior: Vec<usize> = if layout.periodic { (0..n).collect() } else { (1..n).collect() };
        for f in interior {
            let (cl, cr) = ((f + n - 1) % n, f % n);
            let (fl, _) = layout.cell_faces(cl);
            let (_, fr) = layout.cell_faces(cr);
            elements.push(Element::Face(f, cl, cr));
            dofs.push(vec![
                layout.flux_dof(fl),
                layout.flux_dof(f),
                layout.flux_dof(fr),
                layout.temperature_dof(cl),
                layout.temperature_dof(cr),
            ]);
        }
        if !layout.periodic {
            elements.push(Element::Boundary(0, false));
            dofs.push(vec![layout.flux_dof(0), layout.temperature_dof(0)]);
            elements.push(Element::Boundary(n, true));
            dofs.push(vec![layout.flux_dof(n), layout.temperature_dof(n - 1)]);
        }
        let assembler = Assembler::new(layout.n_dofs(), dofs);
        Ok(ChStepProblem { grid_n, p, ctrl, layout, elements, assembler })
    }

    pub fn layout(&self) -> &ChLayout {
        &self.layout
    }

    /// DOFs solved for: all fluxes except no-flux ends, temperatures only
    /// in the implicit coupled update
    pub fn free_mask(&self) -> Vec<bool> {
        let mut free = vec![false; self.layout.n_dofs()];
        for f in 0..self.layout.n_faces {
            let boundary = !self.layout.periodic && (f == 0 || f == self.layout.n_cells);
            free[self.layout.flux_dof(f)] = !(boundary && self.grid_n.bc == ConcentrationBc::NoFlux);
        }
        if self.ctrl.coupling == Coupling::Thermal && self.ctrl.algorithm == Algorithm::Implicit {
            for i in 0..self.layout.n_cells {
                free[self.layout.temperature_dof(i)] = true;
            }
        }
        free
    }

    /// Starting point: zero flux, T = θ_n
    pub fn initial_guess(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.layout.n_dofs()];
        for i in 0..self.layout.n_cells {
            x[self.layout.temperature_dof(i)] = self.grid_n.theta[i];
        }
        x
    }

    /// Concentrations c = c_n − τ Div ℍ for the unknowns `x`
    pub fn concentrations(&self, x: &[f64]) -> Vec<f64> {
        let g = self.grid_n;
        (0..self.layout.n_cells)
            .map(|i| {
                let (l, r) = self.layout.cell_faces(i);
                g.c[i] - self.ctrl.tau * (x[self.layout.flux_dof(r)] - x[self.layout.flux_dof(l)]) / g.dx
            })
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        self.evaluate_parts(x, Parts { storage: true, thermal: self.ctrl.coupling == Coupling::Thermal })
    }

    fn evaluate_parts(&self, x: &[f64], parts: Parts) -> Result<Evaluation> {
        self.assembler.assemble(x, |e, xl| self.element(self.elements[e], xl, parts))
    }

    fn face_mobility(&self, l: usize, r: usize) -> (f64, f64) {
        let g = self.grid_n;
        let c = 0.5 * (g.c[l] + g.c[r]);
        let th = 0.5 * (g.theta[l] + g.theta[r]);
        (self.p.mobility(th) * c * (1.0 - c), th)
    }

    fn element(&self, el: Element, xl: &[f64], parts: Parts) -> Result<LocalEval> {
        let (g, p, tau) = (self.grid_n, self.p, self.ctrl.tau);
        let dx = g.dx;
        match el {
            Element::Cell(i) => {
                let mut v = 0.0;
                let mut gr = vec![0.0; 3];
                let mut h = vec![vec![0.0; 3]; 3];
                if parts.storage {
                    let c = g.c[i] - tau * (xl[1] - xl[0]) / dx;
                    let (psi, d1, d2) = local_energy(c, p).map_err(|e| cell_error(e, i))?;
                    let s = [tau / dx, -tau / dx];
                    v += dx * psi;
                    for a in 0..2 {
                        gr[a] += dx * d1 * s[a];
                        for b in 0..2 {
                            h[a][b] += dx * d2 * s[a] * s[b];
                        }
                    }
                    if parts.thermal {
                        let t = xl[2];
                        let (pt, d1t, d2t) = thermal_energy(t, p.c_heat, p.theta0)?;
                        v += dx * (pt + g.eta[i] * (t - g.theta[i]));
                        gr[2] += dx * (d1t + g.eta[i]);
                        h[2][2] += dx * d2t;
                    }
                }
                Ok((v, gr, h))
            }
            Element::Face(_, l, r) => {
                let mut v = 0.0;
                let mut gr = vec![0.0; 5];
                let mut h = vec![vec![0.0; 5]; 5];
                if parts.storage {
                    let cl = g.c[l] - tau * (xl[1] - xl[0]) / dx;
                    let cr = g.c[r] - tau * (xl[2] - xl[1]) / dx;
                    let grad = (cr - cl) / dx;
                    let dg = [-tau / (dx * dx), 2.0 * tau / (dx * dx), -tau / (dx * dx)];
                    v += dx * 0.5 * p.d * grad * grad;
                    for a in 0..3 {
                        gr[a] += dx * p.d * grad * dg[a];
                        for b in 0..3 {
                            h[a][b] += dx * p.d * dg[a] * dg[b];
                        }
                    }
                }
                let (m, th_f) = self.face_mobility(l, r);
                let t_idx = [3, 4];
                self.add_dissipation(dx, m, th_f, xl[1], 1, &t_idx, xl, parts.thermal, &mut v, &mut gr, &mut h);
                if parts.thermal {
                    let kf = tau * p.k * log_mean(g.theta[l], g.theta[r]) / (2.0 * dx);
                    add_conduction(kf, Some(3), Some(4), xl[3], xl[4], &mut v, &mut gr, &mut h)?;
                }
                Ok((v, gr, h))
            }
            Element::Boundary(_, right) => {
                let cell = if right { g.cells() - 1 } else { 0 };
                let mut v = 0.0;
                let mut gr = vec![0.0; 2];
                let mut h = vec![vec![0.0; 2]; 2];
                let (m, th_f) = self.face_mobility(cell, cell);
                self.add_dissipation(0.5 * dx, m, th_f, xl[0], 0, &[1, 1], xl, parts.thermal, &mut v, &mut gr, &mut h);
                if parts.storage {
                    if let ConcentrationBc::Potential { left, right: rv } = g.bc {
                        let (mu_bar, n) = if right { (rv, 1.0) } else { (left, -1.0) };
                        v += tau * mu_bar * n * xl[0];
                        gr[0] += tau * mu_bar * n;
                    }
                }
                if parts.thermal {
                    if let ThermalBc::Dirichlet { left, right: rv } = g.thermal_bc {
                        let t_bar = if right { rv } else { left };
                        let kf = tau * p.k * log_mean(t_bar, g.theta[cell]) / dx;
                        if right {
                            add_conduction(kf, Some(1), None, xl[1], t_bar, &mut v, &mut gr, &mut h)?;
                        } else {
                            add_conduction(kf, None, Some(1), t_bar, xl[1], &mut v, &mut gr, &mut h)?;
                        }
                    }
                }
                Ok((v, gr, h))
            }
        }
    }

    /// τ w ½ (T_f/θ_nf)² H²/m with T_f the mean of the listed T slots
    #[allow(clippy::too_many_arguments)]
    fn add_dissipation(
        &self,
        w: f64,
        m: f64,
        th_f: f64,
        flux: f64,
        ih: usize,
        t_idx: &[usize; 2],
        xl: &[f64],
        thermal: bool,
        v: &mut f64,
        gr: &mut [f64],
        h: &mut [Vec<f64>],
    ) {
        let q = self.ctrl.tau * w / (2.0 * m);
        if !thermal {
            *v += q * flux * flux;
            gr[ih] += 2.0 * q * flux;
            h[ih][ih] += 2.0 * q;
            return;
        }
        let rho = 0.5 * (xl[t_idx[0]] + xl[t_idx[1]]) / th_f;
        *v += q * rho * rho * flux * flux;
        gr[ih] += 2.0 * q * rho * rho * flux;
        h[ih][ih] += 2.0 * q * rho * rho;
        // ∂ρ/∂T of each slot; both slots coincide at a boundary face
        let dr = 0.5 / th_f;
        for &a in t_idx {
            gr[a] += 2.0 * q * rho * dr * flux * flux;
            h[ih][a] += 4.0 * q * rho * dr * flux;
            h[a][ih] += 4.0 * q * rho * dr * flux;
            for &b in t_idx {
                h[a][b] += 2.0 * q * dr * dr * flux * flux;
            }
        }
    }
}

/// −K (ln T_R − ln T_L)² with either side possibly prescribed
#[allow(clippy::too_many_arguments)]
fn add_conduction(
    kf: f64,
    il: Option<usize>,
    ir: Option<usize>,
    tl: f64,
    tr: f64,
    v: &mut f64,
    gr: &mut [f64],
    h: &mut [Vec<f64>],
) -> Result<()> {
    for t in [tl, tr] {
        if t.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::NonPositiveTemperature(t));
        }
    }
    let u = (tr / tl).ln();
    *v -= kf * u * u;
    let slots = [(il, -1.0 / tl, 1.0 / (tl * tl)), (ir, 1.0 / tr, -1.0 / (tr * tr))];
    for &(ia, da, dda) in &slots {
        let Some(a) = ia else { continue };
        gr[a] -= 2.0 * kf * u * da;
        h[a][a] -= 2.0 * kf * u * dda;
        for &(ib, db, _) in &slots {
            if let Some(b) = ib {
                h[a][b] -= 2.0 * kf * da * db;
            }
        }
    }
    Ok(())
}

/// Diagnostics of an accepted step
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChStepInfo {
    pub newton_iterations: usize,
    pub max_asymmetry: f64,
    /// Σ τ 2φ_dif Δx of the step (unscaled)
    pub dissipation: f64,
}

/// Advances the grid by one step
pub fn step_ch(grid_n: &ChGrid, ctrl: &ChStepControl, p: &ChParams) -> Result<(ChGrid, ChStepInfo)> {
    let prob = ChStepProblem::new(grid_n, *ctrl, p)?;
    let free = prob.free_mask();
    let mut x = prob.initial_guess();
    let report = solve_newton(&mut x, &free, &ctrl.newton, |x| prob.evaluate(x))?;
    let lay = prob.layout();
    let c = prob.concentrations(&x);
    let flux: Vec<f64> = (0..lay.n_faces).map(|f| x[lay.flux_dof(f)]).collect();
    let mut next = grid_n.clone();
    next.c = c;
    next.flux = flux.clone();
    if ctrl.coupling == Coupling::Thermal {
        match ctrl.algorithm {
            Algorithm::Implicit => {
                for i in 0..lay.n_cells {
                    let t = x[lay.temperature_dof(i)];
                    next.theta[i] = t;
                    next.eta[i] = p.c_heat * (t / p.theta0).ln();
                }
            }
            Algorithm::SemiExplicit => {
                // isentropic predictor: θ from the state equation at frozen η_n;
                // entropy corrector: the dissipative T-derivative at T = θ_n
                let ev = prob.evaluate_parts(&x, Parts { storage: false, thermal: true })?;
                for i in 0..lay.n_cells {
                    next.theta[i] = p.theta0 * (grid_n.eta[i] / p.c_heat).exp();
                    next.eta[i] = grid_n.eta[i] + ev.gradient[lay.temperature_dof(i)] / grid_n.dx;
                }
            }
        }
    }
    let dissipation = flux_dissipation(grid_n, &flux, ctrl.tau, p);
    Ok((next, ChStepInfo { newton_iterations: report.iterations, max_asymmetry: report.max_asymmetry, dissipation }))
}

/// Σ_faces w τ H²/m, the unscaled incremental diffusion dissipation
fn flux_dissipation(g: &ChGrid, flux: &[f64], tau: f64, p: &ChParams) -> f64 {
    let n = g.cells();
    let face_m = |l: usize, r: usize| {
        let c = 0.5 * (g.c[l] + g.c[r]);
        p.mobility(0.5 * (g.theta[l] + g.theta[r])) * c * (1.0 - c)
    };
    let mut d = 0.0;
    for (f, &hf) in flux.iter().enumerate() {
        let (w, m) = if g.periodic() {
            (g.dx, face_m((f + n - 1) % n, f))
        } else if f == 0 {
            (0.5 * g.dx, face_m(0, 0))
        } else if f == n {
            (0.5 * g.dx, face_m(n - 1, n - 1))
        } else {
            (g.dx, face_m(f - 1, f))
        };
        d += w * tau * hf * hf / m;
    }
    d
}

/// Amplification factor of Fourier mode `k` per implicit isothermal step
/// about a uniform state c̄ on a periodic grid of `n` cells
pub fn discrete_amplification(c_bar: f64, k: usize, n: usize, dx: f64, tau: f64, p: &ChParams) -> Result<f64> {
    let (_, _, d2) = local_energy(c_bar, p)?;
    let s = (std::f64::consts::PI * k as f64 / n as f64).sin();
    let omega = 4.0 / (dx * dx) * s * s;
    let m = p.mobility(p.theta0) * c_bar * (1.0 - c_bar);
    Ok(1.0 / (1.0 + tau * m * omega * (d2 + p.d * omega)))
}

/// Phase concentrations of the common-tangent construction. ψ_l is
/// symmetric about c = ½, so the tangent is horizontal and touches at the
/// two minima; `None` when B ≤ 2A (no phase separation).
pub fn binodal(p: &ChParams) -> Option<(f64, f64)> {
    if p.b <= 2.0 * p.a {
        return None;
    }
    let slope = |c: f64| p.a * (c / (1.0 - c)).ln() + p.b * (1.0 - 2.0 * c);
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 0.5 - 1e-12);
    if slope(lo) >= 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // below the spinodal branch the slope is negative
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    Some((c, 1.0 - c))
}

/// One recorded step of a diffusion run
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChRecord {
    pub t: f64,
    pub tau: f64,
    pub energy: f64,
    pub mass: f64,
    pub entropy: f64,
    pub dissipation: f64,
    pub newton_iterations: usize,
    pub max_asymmetry: f64,
}

/// Runs to `t_end` with step `tau`, halving the step after a rejection (down
/// to tau/2^max_halvings) and growing it back after successes. `observe` is
/// called after every accepted step.
pub fn run_ch<F>(
    mut grid: ChGrid,
    t_end: f64,
    tau: f64,
    coupling: Coupling,
    algorithm: Algorithm,
    max_halvings: u32,
    p: &ChParams,
    mut observe: F,
) -> Result<(ChGrid, Vec<ChRecord>)>
where
    F: FnMut(&ChGrid, &ChRecord),
{
    p.validate()?;
    let mut t = 0.0;
    let mut level = 0u32;
    let mut records = Vec::new();
    let mut step_no = 0usize;
    while t < t_end * (1.0 - 1e-12) {
        let dt = (tau / f64::from(1u32 << level)).min(t_end - t);
        let ctrl = ChStepControl::new(dt, coupling, algorithm);
        match step_ch(&grid, &ctrl, p) {
            Ok((next, info)) => {
                t += dt;
                step_no += 1;
                grid = next;
                let rec = ChRecord {
                    t,
                    tau: dt,
                    energy: grid.energy(p)?,
                    mass: grid.mass(),
                    entropy: grid.entropy(),
                    dissipation: info.dissipation,
                    newton_iterations: info.newton_iterations,
                    max_asymmetry: info.max_asymmetry,
                };
                observe(&grid, &rec);
                records.push(rec);
                level = level.saturating_sub(1);
            }
            Err(Error::NewtonDivergence { .. } | Error::ConcentrationOutOfRange { .. } | Error::SingularMatrix { .. }) => {
                if level >= max_halvings {
                    return Err(Error::StepSizeFloor(dt).at_step(step_no + 1));
                }
                level += 1;
            }
            Err(e) => return Err(e.at_step(step_no + 1)),
        }
    }
    Ok((grid, records))
}
