//! Plane-strain gradient plasticity on quad meshes and the cross shear band
//! scenario.
//!
//! Nodes carry (u_x, u_y, α, β); the plastic strain and the temperature live
//! at the quadrature points and are condensed by the point engine. The
//! optional enhancement adds four incompatible modes of the displacement
//! gradient per element, condensed by a local Newton.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    advance_with_halving, factor_solve, quad4_eval, quad_rule, solve_newton, Assembler, DofMap, Evaluation, LineSearch, LocalEval, Mesh,
    NewtonControl, QuadPoint, Ramp, VtkField, write_vtk,
};
use crate::plasticity::{incremental_density_plast, plast_free_energy, PlastDensityInput, PlastParams, PlastPointState};
use crate::point0d::Algorithm;
use crate::tensor::{right_cauchy_green, HenckyStrain, SymTensor3, Tensor3};

const UX: usize = 0;
const UY: usize = 1;
const ALPHA: usize = 2;
const BETA: usize = 3;
const N_LOCAL: usize = 16;

/// Finite element model of the mixed (u, α, β) problem
#[derive(Clone, Debug)]
pub struct PlastFe {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub params: PlastParams,
    /// Factor on the initial yield stress of each element
    pub yield_factor: Vec<f64>,
    pub algorithm: Algorithm,
    pub eas: bool,
    /// DOFs whose summed residual is the reported reaction
    pub reaction_dofs: Vec<usize>,
    pub reaction_scale: f64,
    rule: Vec<QuadPoint>,
    assembler: Assembler,
}

#[derive(Clone, Debug)]
pub struct PlastFeState {
    pub x: Vec<f64>,
    /// Quadrature-point histories per element
    pub history: Vec<Vec<PlastPointState>>,
    /// Dissipation per unit volume accumulated at each quadrature point
    pub dissipation: Vec<Vec<f64>>,
    pub time: f64,
    pub load: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlastStepInfo {
    pub newton_iterations: usize,
    pub reaction: f64,
    pub max_asymmetry: f64,
    /// Smallest dissipation increment of any quadrature point
    pub min_dissipation: f64,
}

/// Quantities of one quadrature point after a converged step
#[derive(Clone, Copy, Debug)]
struct PointResult {
    state: PlastPointState,
    dissipation: f64,
}

/// Sparse row of the map from element unknowns to the point arguments
#[derive(Clone, Copy, Default)]
struct BRow {
    len: usize,
    entries: [(usize, f64); 3],
}

impl BRow {
    fn push(&mut self, col: usize, v: f64) {
        self.entries[self.len] = (col, v);
        self.len += 1;
    }

    fn iter(&self) -> impl Iterator<Item = &(usize, f64)> {
        self.entries[..self.len].iter()
    }
}

impl PlastFe {
    pub fn new(mesh: Mesh, params: PlastParams, algorithm: Algorithm, eas: bool) -> Result<Self> {
        params.validate()?;
        if mesh.kind != crate::fem::ElementKind::Quad4 {
            return Err(Error::InvalidParameter("plasticity needs a quad mesh".into()));
        }
        if params.eta_f <= 0.0 {
            return Err(Error::InvalidParameter("the field model needs eta_f > 0".into()));
        }
        let fields = ["ux", "uy", "alpha", "beta"];
        let dofs = if eas {
            let anchors: Vec<usize> = mesh.elements.iter().map(|c| *c.iter().max().expect("quad")).collect();
            DofMap::with_extras(mesh.n_nodes(), &fields, &anchors, 4)
        } else {
            DofMap::new(mesh.n_nodes(), &fields)
        };
        let element_dofs = mesh
            .elements
            .iter()
            .enumerate()
            .map(|(e, c)| {
                let mut d = dofs.element_dofs(c);
                if eas {
                    d.extend(dofs.extra_dofs(e));
                }
                d
            })
            .collect();
        let assembler = Assembler::new(dofs.n_dofs(), element_dofs);
        Ok(PlastFe {
            yield_factor: vec![1.0; mesh.n_elements()],
            mesh,
            dofs,
            params,
            algorithm,
            eas,
            reaction_dofs: Vec::new(),
            reaction_scale: 1.0,
            rule: quad_rule(2),
            assembler,
        })
    }

    pub fn n_points(&self) -> usize {
        self.rule.len()
    }

    /// Number of unknowns, including four enhanced modes per element
    pub fn n_unknowns(&self) -> usize {
        self.assembler.n_dofs()
    }

    pub fn initial_state(&self) -> PlastFeState {
        let n_el = self.mesh.n_elements();
        let mut x = vec![0.0; self.n_unknowns()];
        self.dofs.apply(&mut x, 0.0);
        PlastFeState {
            x,
            history: vec![vec![PlastPointState::initial(&self.params); self.rule.len()]; n_el],
            dissipation: vec![vec![0.0; self.rule.len()]; n_el],
            time: 0.0,
            load: 0.0,
        }
    }

    /// Enhanced-mode parameters of element `e`
    pub fn enhanced(&self, state: &PlastFeState, e: usize) -> [f64; 4] {
        if !self.eas {
            return [0.0; 4];
        }
        let o = self.dofs.extra_dofs(e).start;
        [state.x[o], state.x[o + 1], state.x[o + 2], state.x[o + 3]]
    }

    fn element_params(&self, e: usize) -> PlastParams {
        PlastParams { y0: self.params.y0 * self.yield_factor[e], ..self.params }
    }

    /// Element potential in the 16 nodal DOFs, followed by the 4 enhanced modes
    fn element(
        &self,
        e: usize,
        xl: &[f64],
        hist: &[PlastPointState],
        tau: f64,
        mut record: Option<&mut Vec<PointResult>>,
    ) -> Result<LocalEval> {
        let p = self.element_params(e);
        let c = self.mesh.element_coords(e);
        let xy = [c[0], c[1], c[2], c[3]];
        let n_all = xl.len();
        let mut value = 0.0;
        let mut g = vec![0.0; n_all];
        let mut k = vec![vec![0.0; n_all]; n_all];
        let centre = quad4_eval(&xy, [0.0, 0.0])?;
        let j0 = centre.det_j;
        let j0_inv = inv2(&centre.jac);
        let mut b = vec![BRow::default(); n_all];
        let mut bh = vec![[0.0; 8]; n_all];
        for (q, qp) in self.rule.iter().enumerate() {
            let sh = quad4_eval(&xy, qp.xi)?;
            // rows of B: y = (F11, F12, F21, F22, α, α,1, α,2, β)
            b.iter_mut().for_each(|r| r.len = 0);
            for n in 0..4 {
                let (dx, dy) = (sh.dn[n][0], sh.dn[n][1]);
                b[4 * n + UX].push(0, dx);
                b[4 * n + UX].push(1, dy);
                b[4 * n + UY].push(2, dx);
                b[4 * n + UY].push(3, dy);
                b[4 * n + ALPHA].push(4, sh.n[n]);
                b[4 * n + ALPHA].push(5, dx);
                b[4 * n + ALPHA].push(6, dy);
                b[4 * n + BETA].push(7, sh.n[n]);
            }
            if self.eas {
                let s = j0 / sh.det_j;
                let (xi, eta) = (qp.xi[0], qp.xi[1]);
                for j in 0..2 {
                    b[N_LOCAL].push(j, s * xi * j0_inv[0][j]);
                    b[N_LOCAL + 1].push(j, s * eta * j0_inv[1][j]);
                    b[N_LOCAL + 2].push(2 + j, s * xi * j0_inv[0][j]);
                    b[N_LOCAL + 3].push(2 + j, s * eta * j0_inv[1][j]);
                }
            }
            let mut y = [0.0; 8];
            for (row, v) in b.iter().zip(xl) {
                for &(m, bm) in row.iter() {
                    y[m] += bm * v;
                }
            }
            let f = Tensor3([[1.0 + y[0], y[1], 0.0], [y[2], 1.0 + y[3], 0.0], [0.0, 0.0, 1.0]]);
            let inp = PlastDensityInput {
                f,
                alpha: y[4],
                grad_alpha: [y[5], y[6]],
                beta: y[7],
                history: hist[q],
                tau,
                algorithm: self.algorithm,
            };
            let ev = incremental_density_plast(&inp, &p)?;
            let w = qp.weight * sh.det_j;
            value += w * ev.value;
            for (i, row) in b.iter().enumerate() {
                bh[i] = [0.0; 8];
                for &(m, bm) in row.iter() {
                    g[i] += w * bm * ev.gradient[m];
                    for l in 0..8 {
                        bh[i][l] += bm * ev.hessian[m][l];
                    }
                }
            }
            for i in 0..n_all {
                for j in 0..=i {
                    let v: f64 = b[j].iter().map(|&(l, bl)| bh[i][l] * bl).sum();
                    k[i][j] += w * v;
                }
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.push(PointResult { state: ev.state, dissipation: ev.dissipation });
            }
        }
        for i in 0..n_all {
            for j in 0..i {
                k[j][i] = k[i][j];
            }
        }
        Ok((value, g, k))
    }

    /// Assembled incremental potential of the step from `state_n` with step size `tau`
    pub fn evaluate(&self, state_n: &PlastFeState, x: &[f64], tau: f64) -> Result<Evaluation> {
        self.assembler.assemble(x, |e, xl| self.element(e, xl, &state_n.history[e], tau, None))
    }

    /// Linearization about the converged state driven by the increment of
    /// the prescribed values
    fn predictor(&self, state_n: &PlastFeState, load1: f64, tau: f64, free: &[bool]) -> Result<Vec<f64>> {
        let ev = self.evaluate(state_n, &state_n.x, tau)?;
        let mut dx = vec![0.0; state_n.x.len()];
        for (d, r) in self.dofs.constraints() {
            dx[d] = r.value(load1) - state_n.x[d];
        }
        let kd = ev.hessian.mul_vec(&dx);
        let rhs: Vec<f64> = (0..dx.len()).filter(|&i| free[i]).map(|i| -(ev.gradient[i] + kd[i])).collect();
        let sol = factor_solve(&ev.hessian.restrict(free), &rhs)?;
        let mut m = 0;
        for (i, &f) in free.iter().enumerate() {
            if f {
                dx[i] = sol[m];
                m += 1;
            }
        }
        Ok(state_n.x.iter().zip(&dx).map(|(a, b)| a + b).collect())
    }

    /// Solves the step to (t1, load1) from `state_n`
    pub fn step(&self, state_n: &PlastFeState, t1: f64, load1: f64, ctrl: &NewtonControl) -> Result<(PlastFeState, PlastStepInfo)> {
        let tau = t1 - state_n.time;
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("non-positive step {tau}")));
        }
        let free = self.dofs.free_mask();
        let mut x = self.predictor(state_n, load1, tau, &free).unwrap_or_else(|_| {
            let mut x = state_n.x.clone();
            self.dofs.apply(&mut x, load1);
            x
        });
        let report = solve_newton(&mut x, &free, ctrl, |y| self.evaluate(state_n, y, tau))?;

        let n_el = self.mesh.n_elements();
        let mut points: Vec<Vec<PointResult>> = vec![Vec::new(); n_el];
        let ev = self.assembler.assemble(&x, |e, xl| self.element(e, xl, &state_n.history[e], tau, Some(&mut points[e])))?;
        let mut next = PlastFeState {
            x,
            history: Vec::with_capacity(n_el),
            dissipation: state_n.dissipation.clone(),
            time: t1,
            load: load1,
        };
        let mut min_dissipation = f64::INFINITY;
        for (e, pts) in points.iter().enumerate() {
            next.history.push(pts.iter().map(|pr| pr.state).collect());
            for (q, pr) in pts.iter().enumerate() {
                next.dissipation[e][q] += pr.dissipation;
                min_dissipation = min_dissipation.min(pr.dissipation);
            }
        }
        let reaction = self.reaction_scale * self.reaction_dofs.iter().map(|&d| ev.gradient[d]).sum::<f64>();
        Ok((
            next,
            PlastStepInfo {
                newton_iterations: report.iterations,
                reaction,
                max_asymmetry: report.max_asymmetry.max(ev.max_asymmetry),
                min_dissipation,
            },
        ))
    }

    /// Hencky strain and the stress σ^e at every quadrature point
    pub fn gauss_stresses(&self, state: &PlastFeState) -> Result<Vec<Vec<SymTensor3>>> {
        let mut out = Vec::with_capacity(self.mesh.n_elements());
        for e in 0..self.mesh.n_elements() {
            let c = self.mesh.element_coords(e);
            let xy = [c[0], c[1], c[2], c[3]];
            let p = self.element_params(e);
            let mut row = Vec::with_capacity(self.rule.len());
            for (q, qp) in self.rule.iter().enumerate() {
                let sh = quad4_eval(&xy, qp.xi)?;
                let mut f = Tensor3::identity();
                for (n, &node) in self.mesh.elements[e].iter().enumerate() {
                    for i in 0..2 {
                        let u = state.x[self.dofs.dof(node, i)];
                        for j in 0..2 {
                            f.0[i][j] += u * sh.dn[n][j];
                        }
                    }
                }
                if self.eas {
                    let centre = quad4_eval(&xy, [0.0, 0.0])?;
                    let j0_inv = inv2(&centre.jac);
                    let s = centre.det_j / sh.det_j;
                    let a = self.enhanced(state, e);
                    for j in 0..2 {
                        f.0[0][j] += s * (qp.xi[0] * a[0] * j0_inv[0][j] + qp.xi[1] * a[1] * j0_inv[1][j]);
                        f.0[1][j] += s * (qp.xi[0] * a[2] * j0_inv[0][j] + qp.xi[1] * a[3] * j0_inv[1][j]);
                    }
                }
                let eps = HenckyStrain::new(&right_cauchy_green(&f)?)?.strain;
                let h = &state.history[e][q];
                row.push(plast_free_energy(&eps, &h.eps_p, h.alpha, &[], h.theta, &p)?.sigma_e);
            }
            out.push(row);
        }
        Ok(out)
    }

    /// Nodal values of one of the four fields
    pub fn nodal(&self, state: &PlastFeState, field: usize) -> Vec<f64> {
        (0..self.mesh.n_nodes()).map(|n| state.x[self.dofs.dof(n, field)]).collect()
    }

    /// Element means of a quadrature-point quantity
    pub fn element_mean<F: Fn(&PlastPointState) -> f64>(&self, state: &PlastFeState, f: F) -> Vec<f64> {
        state.history.iter().map(|h| h.iter().map(&f).sum::<f64>() / h.len() as f64).collect()
    }

    /// Nodal average of the element means (for output)
    pub fn nodal_average(&self, element_values: &[f64]) -> Vec<f64> {
        let mut sum = vec![0.0; self.mesh.n_nodes()];
        let mut count = vec![0usize; self.mesh.n_nodes()];
        for (e, conn) in self.mesh.elements.iter().enumerate() {
            for &n in conn {
                sum[n] += element_values[e];
                count[n] += 1;
            }
        }
        sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect()
    }
}

fn inv2(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

/// Which part of the plate is discretized
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// The upper right quarter with symmetry conditions on the center lines
    Quarter,
    Full,
}

/// Geometry, mesh and loading of the plate in tension
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShearBandSetup {
    /// Plate width L (mm); the height is 2L
    pub width: f64,
    /// Elements across the discretized domain
    pub nx: usize,
    pub ny: usize,
    pub domain: Domain,
    /// Relative yield stress reduction of the center element
    pub imperfection: f64,
    /// Displacement of the top edge relative to the mid-plane at `t_end` (mm)
    pub u_end: f64,
    pub t_end: f64,
    pub steps: usize,
    pub algorithm: Algorithm,
    pub eas: bool,
    pub max_halvings: u32,
    pub max_iter: usize,
}

impl Default for ShearBandSetup {
    fn default() -> Self {
        ShearBandSetup {
            width: 50.0,
            nx: 10,
            ny: 20,
            domain: Domain::Quarter,
            imperfection: 0.03,
            u_end: 1.2,
            t_end: 1.0,
            steps: 200,
            algorithm: Algorithm::SemiExplicit,
            eas: true,
            max_halvings: 4,
            max_iter: 25,
        }
    }
}

impl ShearBandSetup {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.t_end > 0.0) || self.steps == 0 || self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidParameter("shear band setup needs positive sizes, time and steps".into()));
        }
        if self.domain == Domain::Full && (self.nx % 2 != 0 || self.ny % 2 != 0) {
            return Err(Error::InvalidParameter("the full plate needs even element counts".into()));
        }
        if !(0.0..1.0).contains(&self.imperfection) {
            return Err(Error::InvalidParameter(format!("imperfection {} outside [0, 1)", self.imperfection)));
        }
        Ok(())
    }

    /// Newton settings; the absolute floor is relative to the force scale y0·L
    pub fn newton(&self, params: &PlastParams) -> NewtonControl {
        NewtonControl {
            tol: 1e-9,
            abs_tol: 1e-12 * params.y0 * self.width,
            max_iter: self.max_iter,
            line_search: LineSearch::ResidualNorm,
            min_step: 1e-3,
        }
    }
}

/// Builds the plate model with its boundary conditions. The load parameter
/// is the top-edge displacement ū; the bottom edge of the full plate moves by −ū.
pub fn build_shear_band(setup: &ShearBandSetup, params: &PlastParams) -> Result<PlastFe> {
    setup.validate()?;
    let (w, h) = (setup.width, 2.0 * setup.width);
    let (origin, lx, ly) = match setup.domain {
        Domain::Quarter => ([0.0, 0.0], 0.5 * w, 0.5 * h),
        Domain::Full => ([-0.5 * w, -0.5 * h], w, h),
    };
    let mesh = Mesh::rectangle(origin, lx, ly, setup.nx, setup.ny)?;
    let mut fe = PlastFe::new(mesh, *params, setup.algorithm, setup.eas)?;
    let top = fe.mesh.node_set("top")?.to_vec();
    let bottom = fe.mesh.node_set("bottom")?.to_vec();
    fe.dofs.constrain_nodes(&top, UY, Ramp::proportional(1.0));
    match setup.domain {
        Domain::Quarter => {
            let left = fe.mesh.node_set("left")?.to_vec();
            fe.dofs.constrain_nodes(&left, UX, Ramp::fixed(0.0));
            fe.dofs.constrain_nodes(&bottom, UY, Ramp::fixed(0.0));
            fe.reaction_scale = 2.0;
        }
        Domain::Full => {
            fe.dofs.constrain_nodes(&bottom, UY, Ramp::proportional(-1.0));
            let centre = fe.mesh.node_at([0.0, 0.0], 1e-9 * w).ok_or_else(|| Error::InvalidParameter("no center node".into()))?;
            fe.dofs.constrain(fe.dofs.dof(centre, UX), Ramp::fixed(0.0));
        }
    }
    fe.reaction_dofs = top.iter().map(|&n| fe.dofs.dof(n, UY)).collect();
    // weakened element(s) at the plate center
    let tol = 1e-9 * w;
    for e in 0..fe.mesh.n_elements() {
        if fe.mesh.element_coords(e).iter().any(|c| c[0].abs() < tol && c[1].abs() < tol) {
            fe.yield_factor[e] = 1.0 - setup.imperfection;
        }
    }
    Ok(fe)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShearBandRecord {
    pub step: usize,
    pub t: f64,
    pub u_bar: f64,
    /// Edge force of the full plate per unit thickness (N/mm)
    pub reaction: f64,
    pub max_alpha: f64,
    pub max_dtheta: f64,
    pub min_theta: f64,
    pub max_trace_eps_p: f64,
    pub min_dissipation: f64,
    pub max_asymmetry: f64,
    pub newton_iterations: usize,
    pub halvings: u32,
}

/// Band diagnostics of a plastic strain field given per element
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandMeasure {
    /// Area above half the maximum divided by the diagonal of its bounding box (mm)
    pub width: f64,
    /// Thickness in elements: the median count of band elements along grid
    /// lines (rows, columns or diagonals) crossing the band, taking the
    /// family with the smallest median
    pub cells: usize,
}

/// Band measure of the element field `v` on a structured `nx`-column mesh
pub fn band_measure(mesh: &Mesh, nx: usize, v: &[f64]) -> BandMeasure {
    let vmax = v.iter().cloned().fold(0.0, f64::max);
    if vmax <= 0.0 {
        return BandMeasure { width: 0.0, cells: 0 };
    }
    let ny = v.len() / nx;
    let mut area = 0.0;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    // line index of element (i, j) in each family
    let families: [(usize, fn(usize, usize, usize) -> usize); 4] = [
        (ny, |_, j, _| j),
        (nx, |i, _, _| i),
        (nx + ny, |i, j, _| i + j),
        (nx + ny, |i, j, ny| i + ny - 1 - j),
    ];
    let mut counts: Vec<Vec<usize>> = families.iter().map(|(n, _)| vec![0; *n]).collect();
    for (e, &x) in v.iter().enumerate() {
        if x >= 0.5 * vmax {
            let c = mesh.element_coords(e);
            // shoelace area of the quad
            let a: f64 = (0..4).map(|i| c[i][0] * c[(i + 1) % 4][1] - c[(i + 1) % 4][0] * c[i][1]).sum::<f64>() * 0.5;
            area += a;
            for p in &c {
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
            let (i, j) = (e % nx, e / nx);
            for (f, (_, line)) in families.iter().enumerate() {
                counts[f][line(i, j, ny)] += 1;
            }
        }
    }
    let length = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
    let cells = counts
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().filter(|&k| k > 0).collect();
            c.sort_unstable();
            c[c.len() / 2]
        })
        .min()
        .unwrap_or(0);
    BandMeasure { width: area / length, cells }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShearBandSummary {
    pub peak_load: f64,
    pub u_at_peak: f64,
    pub max_alpha: f64,
    pub max_dtheta: f64,
    pub band: BandMeasure,
    pub min_theta: f64,
    pub max_trace_eps_p: f64,
    pub min_dissipation: f64,
    pub max_asymmetry: f64,
    pub max_halvings: u32,
    pub max_newton_iterations: usize,
}

pub fn summarize(fe: &PlastFe, setup: &ShearBandSetup, state: &PlastFeState, records: &[ShearBandRecord]) -> ShearBandSummary {
    let peak = records.iter().fold((0.0, 0.0), |m, r| if r.reaction > m.0 { (r.reaction, r.u_bar) } else { m });
    let alpha_e = fe.element_mean(state, |s| s.alpha);
    let fold = |f: fn(&ShearBandRecord) -> f64, init: f64, max: bool| {
        records.iter().map(f).fold(init, |a, b| if max { a.max(b) } else { a.min(b) })
    };
    ShearBandSummary {
        peak_load: peak.0,
        u_at_peak: peak.1,
        max_alpha: fold(|r| r.max_alpha, 0.0, true),
        max_dtheta: fold(|r| r.max_dtheta, f64::NEG_INFINITY, true),
        band: band_measure(&fe.mesh, setup.nx, &alpha_e),
        min_theta: fold(|r| r.min_theta, f64::INFINITY, false),
        max_trace_eps_p: fold(|r| r.max_trace_eps_p, 0.0, true),
        min_dissipation: fold(|r| r.min_dissipation, f64::INFINITY, false),
        max_asymmetry: fold(|r| r.max_asymmetry, 0.0, true),
        max_halvings: records.iter().map(|r| r.halvings).max().unwrap_or(0),
        max_newton_iterations: records.iter().map(|r| r.newton_iterations).max().unwrap_or(0),
    }
}

/// Runs the displacement ramp ū = u_end·t/t_end in `steps` equal increments,
/// halving a failed increment up to `max_halvings` times
pub fn run_shear_band<F>(setup: &ShearBandSetup, params: &PlastParams, mut observe: F) -> Result<(PlastFe, PlastFeState, Vec<ShearBandRecord>)>
where
    F: FnMut(&PlastFe, &PlastFeState, &ShearBandRecord),
{
    let fe = build_shear_band(setup, params)?;
    let ctrl = setup.newton(params);
    let mut state = fe.initial_state();
    let mut records = Vec::with_capacity(setup.steps);
    let rate = setup.u_end / setup.t_end;
    for k in 1..=setup.steps {
        let t0 = state.time;
        let t1 = setup.t_end * k as f64 / setup.steps as f64;
        let mut info = PlastStepInfo::default();
        let mut iterations = 0;
        let mut asym: f64 = 0.0;
        let mut min_d = f64::INFINITY;
        let mut sub = |s: &PlastFeState, _a: f64, b: f64| -> Result<PlastFeState> {
            let (next, i) = fe.step(s, b, rate * b, &ctrl)?;
            iterations = iterations.max(i.newton_iterations);
            asym = asym.max(i.max_asymmetry);
            min_d = min_d.min(i.min_dissipation);
            info = i;
            Ok(next)
        };
        let (next, halvings) = advance_with_halving(&state, t0, t1, setup.max_halvings, &mut sub).map_err(|e| e.at_step(k))?;
        state = next;
        let all = state.history.iter().flatten();
        let (mut max_alpha, mut max_dt, mut min_t, mut max_tr) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY, 0.0f64);
        for s in all {
            max_alpha = max_alpha.max(s.alpha);
            max_dt = max_dt.max(s.theta - params.theta0);
            min_t = min_t.min(s.theta);
            max_tr = max_tr.max(s.eps_p.trace().abs());
        }
        let rec = ShearBandRecord {
            step: k,
            t: t1,
            u_bar: state.load,
            reaction: info.reaction,
            max_alpha,
            max_dtheta: max_dt,
            min_theta: min_t,
            max_trace_eps_p: max_tr,
            min_dissipation: min_d,
            max_asymmetry: asym,
            newton_iterations: iterations,
            halvings,
        };
        observe(&fe, &state, &rec);
        records.push(rec);
    }
    Ok((fe, state, records))
}

/// Legacy VTK snapshot: nodal displacement, α and β; element means of the
/// local plastic strain, the temperature and the accumulated dissipation
pub fn write_shear_band_vtk<W: std::io::Write>(w: &mut W, fe: &PlastFe, state: &PlastFeState) -> std::io::Result<()> {
    let ux = fe.nodal(state, UX);
    let uy = fe.nodal(state, UY);
    let u: Vec<[f64; 2]> = ux.iter().zip(&uy).map(|(&a, &b)| [a, b]).collect();
    let alpha = fe.nodal(state, ALPHA);
    let beta = fe.nodal(state, BETA);
    let alpha_local = fe.element_mean(state, |h| h.alpha);
    let theta = fe.element_mean(state, |h| h.theta);
    let dissipation: Vec<f64> = state.dissipation.iter().map(|d| d.iter().sum::<f64>() / d.len() as f64).collect();
    write_vtk(
        w,
        &format!("shear band t = {:e}", state.time),
        &fe.mesh,
        &[VtkField::Vector("displacement", &u), VtkField::Scalar("alpha", &alpha), VtkField::Scalar("beta", &beta)],
        &[
            VtkField::Scalar("alpha_local", &alpha_local),
            VtkField::Scalar("theta", &theta),
            VtkField::Scalar("dissipation", &dissipation),
        ],
    )
}
