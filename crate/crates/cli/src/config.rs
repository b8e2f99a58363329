//! Scenario files.
//!
//! A scenario is a TOML document with a top-level `model` key and nested
//! sections. The user document is merged over the full default scenario of
//! that model, so every omitted key takes its documented default and the
//! resolved scenario can be echoed verbatim into the outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thermovar::cahn_hilliard::{ChParams, ConcentrationBc, Coupling, ThermalBc};
use thermovar::damage::{DamageMode, DamageParams};
use thermovar::plasticity::PlastParams;
use thermovar::point0d::{Algorithm, DeviceParams, Loading};
use thermovar::shearband::{Domain, ShearBandSetup};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Point0d,
    Ch1d,
    Damage1d,
    Shearband2d,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Point0d => "point0d",
            Model::Ch1d => "ch1d",
            Model::Damage1d => "damage1d",
            Model::Shearband2d => "shearband2d",
        }
    }

    /// Scalar results reported by a run of this model
    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            Model::Point0d => &[
                "final_theta",
                "max_dtheta",
                "final_sigma",
                "total_dissipation",
                "min_dissipation",
                "min_theta",
                "error_implicit",
                "error_semi_explicit",
                "order_implicit",
                "order_semi_explicit",
            ],
            Model::Ch1d => &[
                "final_energy",
                "max_energy_increase",
                "mass_drift",
                "min_c",
                "max_c",
                "binodal_fraction",
                "max_dtheta",
                "min_theta",
                "min_dissipation",
                "max_asymmetry",
            ],
            Model::Damage1d => &[
                "peak_reaction",
                "final_reaction",
                "max_damage",
                "band_width",
                "max_dtheta",
                "min_theta",
                "min_dissipation",
                "max_asymmetry",
            ],
            Model::Shearband2d => &[
                "peak_load",
                "u_at_peak",
                "final_load",
                "max_alpha",
                "max_dtheta",
                "band_width",
                "band_cells",
                "min_theta",
                "max_trace_eps_p",
                "min_dissipation",
                "max_asymmetry",
            ],
        }
    }

    /// Study axes this model can vary
    pub fn axes(self) -> &'static [Axis] {
        match self {
            Model::Point0d => &[Axis::Tau],
            Model::Ch1d => &[Axis::Mesh, Axis::Tau],
            Model::Damage1d | Model::Shearband2d => &[Axis::Mesh, Axis::L, Axis::EtaF, Axis::Tau],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub t_end: f64,
    pub steps: usize,
}

impl TimeBlock {
    pub fn tau(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(CliError::config("time.t_end", "must be positive"));
        }
        if self.steps == 0 {
            return Err(CliError::config("time.steps", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    /// Step halvings allowed after a failed increment
    pub max_halvings: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Output directory, overridden by `--out`
    pub dir: String,
    /// Per-step CSV tables
    pub csv: bool,
    /// Field snapshots (CSV in 1-D, VTK in 2-D)
    pub fields: bool,
    /// Snapshot every `cadence` accepted steps; 0 keeps only the final state
    pub cadence: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: "out".into(), csv: true, fields: true, cadence: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "mesh")]
    Mesh,
    #[serde(rename = "l")]
    L,
    #[serde(rename = "eta_f")]
    EtaF,
    #[serde(rename = "tau")]
    Tau,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Mesh => "mesh",
            Axis::L => "l",
            Axis::EtaF => "eta_f",
            Axis::Tau => "tau",
        }
    }
}

/// Assertion evaluated on the study table
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Check {
    /// Strictly decreasing along `over`, with the other axes held fixed
    Decreasing { quantity: String, over: Axis },
    /// Strictly increasing along `over`, with the other axes held fixed
    Increasing { quantity: String, over: Axis },
    /// min ≤ value ≤ max in every row that reports the quantity
    Within { quantity: String, min: f64, max: f64 },
    /// (max − min)/max|·| along `over` at most `max`
    Spread { quantity: String, over: Axis, max: f64 },
}

impl Check {
    pub fn quantity(&self) -> &str {
        match self {
            Check::Decreasing { quantity, .. }
            | Check::Increasing { quantity, .. }
            | Check::Within { quantity, .. }
            | Check::Spread { quantity, .. } => quantity,
        }
    }

    pub fn axis(&self) -> Option<Axis> {
        match self {
            Check::Decreasing { over, .. } | Check::Increasing { over, .. } | Check::Spread { over, .. } => Some(*over),
            Check::Within { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    /// Mesh sizes: cells (ch1d), elements (damage1d) or elements along x (shearband2d)
    pub mesh: Vec<usize>,
    pub tau: Vec<f64>,
    pub l: Vec<f64>,
    pub eta_f: Vec<f64>,
    /// Reference step of the point0d convergence table is tau[0]/reference_divisor
    pub reference_divisor: usize,
    pub checks: Vec<Check>,
}

impl Default for StudyBlock {
    fn default() -> Self {
        StudyBlock { mesh: vec![], tau: vec![], l: vec![], eta_f: vec![], reference_divisor: 1000, checks: vec![] }
    }
}

impl StudyBlock {
    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty() && self.tau.is_empty() && self.l.is_empty() && self.eta_f.is_empty()
    }

    pub fn series(&self, axis: Axis) -> Vec<f64> {
        match axis {
            Axis::Mesh => self.mesh.iter().map(|&m| m as f64).collect(),
            Axis::L => self.l.clone(),
            Axis::EtaF => self.eta_f.clone(),
            Axis::Tau => self.tau.clone(),
        }
    }

    fn validate(&self, model: Model) -> Result<()> {
        for axis in [Axis::Mesh, Axis::L, Axis::EtaF, Axis::Tau] {
            let values = self.series(axis);
            if values.is_empty() {
                continue;
            }
            let path = format!("study.{}", axis.name());
            if !model.axes().contains(&axis) {
                return Err(CliError::config(path, format!("not a study axis of {}", model.name())));
            }
            let ok = match axis {
                Axis::L => values.iter().all(|v| *v >= 0.0 && v.is_finite()),
                _ => values.iter().all(|v| *v > 0.0 && v.is_finite()),
            };
            if !ok {
                return Err(CliError::config(path, "values must be positive (l may be zero)"));
            }
        }
        if self.reference_divisor == 0 {
            return Err(CliError::config("study.reference_divisor", "must be at least 1"));
        }
        for (k, check) in self.checks.iter().enumerate() {
            if !model.metrics().contains(&check.quantity()) {
                return Err(CliError::config(
                    format!("study.checks[{k}].quantity"),
                    format!("unknown quantity `{}` for {}", check.quantity(), model.name()),
                ));
            }
            if let Some(axis) = check.axis() {
                if !model.axes().contains(&axis) {
                    return Err(CliError::config(format!("study.checks[{k}].over"), format!("not a study axis of {}", model.name())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point0dScenario {
    pub algorithm: Algorithm,
    pub material: DeviceParams,
    pub loading: Loading,
    pub time: TimeBlock,
    pub study: StudyBlock,
    pub output: OutputBlock,
}

impl Default for Point0dScenario {
    fn default() -> Self {
        Point0dScenario {
            algorithm: Algorithm::SemiExplicit,
            material: DeviceParams::default(),
            loading: Loading::StrainRamp { rate: 0.01 },
            time: TimeBlock { t_end: 1.0, steps: 100 },
            study: StudyBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

fn half() -> f64 {
    0.5
}

/// Initial concentration field
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    Uniform { value: f64 },
    /// mean + amplitude·U(−1, 1) per cell from a ChaCha8 stream
    Noise {
        seed: u64,
        amplitude: f64,
        #[serde(default = "half")]
        mean: f64,
    },
    /// mean + amplitude·sin(2πk x/L)
    Sine {
        k: usize,
        amplitude: f64,
        #[serde(default = "half")]
        mean: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChScenario {
    pub algorithm: Algorithm,
    pub coupling: Coupling,
    pub material: ChParams,
    pub mesh: GridBlock,
    pub bc: ConcentrationBc,
    pub thermal_bc: ThermalBc,
    pub ic: InitialCondition,
    pub time: TimeBlock,
    pub solver: SolverBlock,
    pub study: StudyBlock,
    pub output: OutputBlock,
}

impl Default for ChScenario {
    fn default() -> Self {
        ChScenario {
            algorithm: Algorithm::SemiExplicit,
            coupling: Coupling::Thermal,
            material: ChParams::default(),
            mesh: GridBlock { n: 256, length: 1.0 },
            bc: ConcentrationBc::Periodic,
            thermal_bc: ThermalBc::Insulated,
            ic: InitialCondition::Noise { seed: 1, amplitude: 0.01, mean: 0.5 },
            time: TimeBlock { t_end: 0.05, steps: 250 },
            solver: SolverBlock { max_halvings: 4 },
            study: StudyBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarBlock {
    pub length: f64,
    pub elements: usize,
    /// Relative reduction of the threshold in the central element
    pub imperfection: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplacementLoading {
    /// End displacement reached at t_end (linear ramp)
    pub u_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamageScenario {
    pub algorithm: Algorithm,
    pub mode: DamageMode,
    pub conduction: bool,
    pub material: DamageParams,
    pub mesh: BarBlock,
    pub loading: DisplacementLoading,
    pub time: TimeBlock,
    pub solver: SolverBlock,
    pub study: StudyBlock,
    pub output: OutputBlock,
}

impl Default for DamageScenario {
    fn default() -> Self {
        DamageScenario {
            algorithm: Algorithm::SemiExplicit,
            mode: DamageMode::Kkt,
            conduction: false,
            material: DamageParams { l: 0.25, ..DamageParams::default() },
            mesh: BarBlock { length: 20.0, elements: 200, imperfection: 0.1 },
            loading: DisplacementLoading { u_end: 1.2 },
            time: TimeBlock { t_end: 60.0, steps: 240 },
            solver: SolverBlock { max_halvings: 4 },
            study: StudyBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateBlock {
    /// Width of the full plate; its height is twice the width
    pub width: f64,
    pub nx: usize,
    pub ny: usize,
    pub domain: Domain,
    /// Relative yield reduction of the element(s) at the plate center
    pub imperfection: f64,
    /// Enhanced assumed strain modes on the displacement gradient
    pub eas: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateSolver {
    pub max_halvings: u32,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShearBandScenario {
    pub algorithm: Algorithm,
    pub material: PlastParams,
    pub mesh: PlateBlock,
    pub loading: DisplacementLoading,
    pub time: TimeBlock,
    pub solver: PlateSolver,
    pub study: StudyBlock,
    pub output: OutputBlock,
}

impl Default for ShearBandScenario {
    fn default() -> Self {
        let s = ShearBandSetup::default();
        ShearBandScenario {
            algorithm: s.algorithm,
            material: PlastParams::default(),
            mesh: PlateBlock { width: s.width, nx: 15, ny: 30, domain: s.domain, imperfection: s.imperfection, eas: s.eas },
            loading: DisplacementLoading { u_end: s.u_end },
            time: TimeBlock { t_end: s.t_end, steps: 1000 },
            solver: PlateSolver { max_halvings: s.max_halvings, max_iter: s.max_iter },
            study: StudyBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

impl ShearBandScenario {
    pub fn setup(&self) -> ShearBandSetup {
        ShearBandSetup {
            width: self.mesh.width,
            nx: self.mesh.nx,
            ny: self.mesh.ny,
            domain: self.mesh.domain,
            imperfection: self.mesh.imperfection,
            u_end: self.loading.u_end,
            t_end: self.time.t_end,
            steps: self.time.steps,
            algorithm: self.algorithm,
            eas: self.mesh.eas,
            max_halvings: self.solver.max_halvings,
            max_iter: self.solver.max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    Point0d(Point0dScenario),
    Ch1d(ChScenario),
    Damage1d(DamageScenario),
    Shearband2d(ShearBandScenario),
}

fn wrap(path: &str, e: thermovar::Error) -> CliError {
    CliError::config(path, e.to_string())
}

impl Scenario {
    pub fn default_for(model: Model) -> Scenario {
        match model {
            Model::Point0d => Scenario::Point0d(Point0dScenario::default()),
            Model::Ch1d => Scenario::Ch1d(ChScenario::default()),
            Model::Damage1d => Scenario::Damage1d(DamageScenario::default()),
            Model::Shearband2d => Scenario::Shearband2d(ShearBandScenario::default()),
        }
    }

    pub fn model(&self) -> Model {
        match self {
            Scenario::Point0d(_) => Model::Point0d,
            Scenario::Ch1d(_) => Model::Ch1d,
            Scenario::Damage1d(_) => Model::Damage1d,
            Scenario::Shearband2d(_) => Model::Shearband2d,
        }
    }

    pub fn study(&self) -> &StudyBlock {
        match self {
            Scenario::Point0d(s) => &s.study,
            Scenario::Ch1d(s) => &s.study,
            Scenario::Damage1d(s) => &s.study,
            Scenario::Shearband2d(s) => &s.study,
        }
    }

    pub fn output(&self) -> &OutputBlock {
        match self {
            Scenario::Point0d(s) => &s.output,
            Scenario::Ch1d(s) => &s.output,
            Scenario::Damage1d(s) => &s.output,
            Scenario::Shearband2d(s) => &s.output,
        }
    }

    pub fn time(&self) -> &TimeBlock {
        match self {
            Scenario::Point0d(s) => &s.time,
            Scenario::Ch1d(s) => &s.time,
            Scenario::Damage1d(s) => &s.time,
            Scenario::Shearband2d(s) => &s.time,
        }
    }

    pub fn time_mut(&mut self) -> &mut TimeBlock {
        match self {
            Scenario::Point0d(s) => &mut s.time,
            Scenario::Ch1d(s) => &mut s.time,
            Scenario::Damage1d(s) => &mut s.time,
            Scenario::Shearband2d(s) => &mut s.time,
        }
    }

    /// Replaces the seed of a noise initial condition
    pub fn set_seed(&mut self, seed: u64) {
        if let Scenario::Ch1d(s) = self {
            if let InitialCondition::Noise { seed: old, .. } = &mut s.ic {
                *old = seed;
            }
        }
    }

    /// Fully resolved scenario including the model key
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = match self {
            Scenario::Point0d(s) => serde_json::to_value(s),
            Scenario::Ch1d(s) => serde_json::to_value(s),
            Scenario::Damage1d(s) => serde_json::to_value(s),
            Scenario::Shearband2d(s) => serde_json::to_value(s),
        }
        .expect("scenario types serialize to JSON");
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("model".into(), self.model().name().into());
        }
        v
    }

    fn to_toml(&self) -> toml::Table {
        let v = match self {
            Scenario::Point0d(s) => toml::Table::try_from(s),
            Scenario::Ch1d(s) => toml::Table::try_from(s),
            Scenario::Damage1d(s) => toml::Table::try_from(s),
            Scenario::Shearband2d(s) => toml::Table::try_from(s),
        };
        v.expect("default scenarios serialize to TOML")
    }

    /// Checks every parameter against the invariants of its model
    pub fn validate(&self) -> Result<()> {
        self.time().validate()?;
        self.study().validate(self.model())?;
        match self {
            Scenario::Point0d(s) => {
                s.material.validate().map_err(|e| wrap("material", e))?;
            }
            Scenario::Ch1d(s) => {
                s.material.validate().map_err(|e| wrap("material", e))?;
                if s.mesh.n < 3 {
                    return Err(CliError::config("mesh.N", "at least 3 cells"));
                }
                if !(s.mesh.length > 0.0) {
                    return Err(CliError::config("mesh.L", "must be positive"));
                }
                let (lo, hi) = match s.ic {
                    InitialCondition::Uniform { value } => (value, value),
                    InitialCondition::Noise { amplitude, mean, .. } | InitialCondition::Sine { amplitude, mean, .. } => {
                        (mean - amplitude.abs(), mean + amplitude.abs())
                    }
                };
                if !(lo > 0.0 && hi < 1.0) {
                    return Err(CliError::config("ic", "concentrations must stay inside (0, 1)"));
                }
                if s.algorithm == Algorithm::SemiExplicit && matches!(s.thermal_bc, ThermalBc::Dirichlet { .. }) {
                    return Err(CliError::config("thermal_bc", "prescribed temperatures need the implicit algorithm"));
                }
            }
            Scenario::Damage1d(s) => {
                s.material.validate().map_err(|e| wrap("material", e))?;
                if s.mode == DamageMode::Viscous && s.material.eta_f <= 0.0 {
                    return Err(CliError::config("material.eta_f", "viscous mode needs eta_f > 0"));
                }
                if s.mesh.elements == 0 || !(s.mesh.length > 0.0) {
                    return Err(CliError::config("mesh", "positive length and at least one element"));
                }
                if !(0.0..1.0).contains(&s.mesh.imperfection) {
                    return Err(CliError::config("mesh.imperfection", "must lie in [0, 1)"));
                }
                if s.conduction && s.algorithm == Algorithm::Implicit {
                    return Err(CliError::config("conduction", "requires the semi-explicit algorithm"));
                }
            }
            Scenario::Shearband2d(s) => {
                s.material.validate().map_err(|e| wrap("material", e))?;
                if !(s.material.eta_f > 0.0) {
                    return Err(CliError::config("material.eta_f", "must be positive"));
                }
                s.setup().validate().map_err(|e| wrap("mesh", e))?;
                if !(s.mesh.width > 0.0) {
                    return Err(CliError::config("mesh.width", "must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Deep merge of `user` over `base`. Tables carrying a `kind` tag replace
/// the default wholesale; keys unknown to the defaults are rejected.
fn merge(base: &mut toml::Table, user: toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in user {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (None, _) => return Err(CliError::config(path, "unknown key")),
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if !u.contains_key("kind") => merge(b, u, &path)?,
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

fn typed<T: serde::de::DeserializeOwned>(table: toml::Table) -> Result<T> {
    serde_path_to_error::deserialize(table).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(path, e.into_inner().to_string())
    })
}

/// Parses and validates a scenario document
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut user: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::config("", e.to_string().trim_end()))?;
    let model = match user.remove("model") {
        None => return Err(CliError::config("model", "missing (point0d | ch1d | damage1d | shearband2d)")),
        Some(v) => Model::deserialize(v).map_err(|e| CliError::config("model", e.to_string()))?,
    };
    let mut table = Scenario::default_for(model).to_toml();
    merge(&mut table, user, "")?;
    let scenario = match model {
        Model::Point0d => Scenario::Point0d(typed(table)?),
        Model::Ch1d => Scenario::Ch1d(typed(table)?),
        Model::Damage1d => Scenario::Damage1d(typed(table)?),
        Model::Shearband2d => Scenario::Shearband2d(typed(table)?),
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_scenario(&text)
}
