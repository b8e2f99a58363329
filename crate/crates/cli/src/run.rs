//! Single scenario runs and their artifacts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thermovar::cahn_hilliard::{binodal, run_ch, ChGrid};
use thermovar::damage::{run_damage_bar, DamageBar, DamageStepControl};
use thermovar::point0d::{simulate, DeviceState0D};
use thermovar::shearband::{run_shear_band, summarize, write_shear_band_vtk};

use crate::config::{ChScenario, DamageScenario, InitialCondition, Point0dScenario, Scenario, ShearBandScenario};
use crate::error::{CliError, Result};

/// Named scalar results of a run, in a stable order
pub type Metrics = BTreeMap<String, f64>;

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Omit wall-clock data so repeated runs give identical bytes
    pub reproducible: bool,
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

pub(crate) fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..columns[0].len() {
        w.write_record(columns.iter().map(|c| c[i].to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

/// Snapshot bookkeeping shared by the drivers
struct Snapshots<'a> {
    dir: &'a Path,
    enabled: bool,
    cadence: usize,
    step: usize,
    error: Option<CliError>,
}

impl<'a> Snapshots<'a> {
    fn new(out: &'a Path, enabled: bool, cadence: usize) -> Result<Self> {
        let dir = out;
        if enabled {
            create_dir(&dir.join("fields"))?;
        }
        Ok(Snapshots { dir, enabled, cadence, step: 0, error: None })
    }

    /// Advances the step counter and returns the snapshot path when due
    fn due(&mut self, ext: &str) -> Option<std::path::PathBuf> {
        self.step += 1;
        (self.enabled && self.cadence > 0 && self.step % self.cadence == 0 && self.error.is_none())
            .then(|| self.path(self.step, ext))
    }

    fn path(&self, step: usize, ext: &str) -> std::path::PathBuf {
        self.dir.join("fields").join(format!("step_{step:06}.{ext}"))
    }

    fn keep(&mut self, r: Result<()>) {
        if let Err(e) = r {
            self.error.get_or_insert(e);
        }
    }

    fn finish(self) -> Result<()> {
        self.error.map_or(Ok(()), Err)
    }
}

fn run_point0d(s: &Point0dScenario, out: &Path) -> Result<Metrics> {
    let p = &s.material;
    let rows = simulate(DeviceState0D::rest(p), s.loading, s.algorithm, s.time.tau(), s.time.steps, p)?;
    if s.output.csv {
        write_csv(&out.join("trajectory.csv"), &rows)?;
    }
    let last = rows.last().expect("trajectory has the initial row");
    Ok(Metrics::from([
        ("final_theta".into(), last.theta),
        ("max_dtheta".into(), max_of(rows.iter().map(|r| (r.theta - p.theta0).abs()))),
        ("final_sigma".into(), last.sigma),
        ("total_dissipation".into(), rows.iter().map(|r| r.dissipation_increment).sum()),
        ("min_dissipation".into(), min_of(rows.iter().map(|r| r.dissipation_increment))),
        ("min_theta".into(), min_of(rows.iter().map(|r| r.theta))),
    ]))
}

/// Initial concentrations of the cells
pub fn initial_concentration(ic: &InitialCondition, n: usize) -> Vec<f64> {
    match *ic {
        InitialCondition::Uniform { value } => vec![value; n],
        InitialCondition::Noise { seed, amplitude, mean } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| mean + amplitude * rng.gen_range(-1.0..1.0)).collect()
        }
        InitialCondition::Sine { k, amplitude, mean } => (0..n)
            .map(|i| mean + amplitude * (2.0 * std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).sin())
            .collect(),
    }
}

fn write_ch_snapshot(path: &Path, g: &ChGrid, p: &thermovar::cahn_hilliard::ChParams) -> Result<()> {
    let mu = g.chemical_potential(p)?;
    write_columns(path, &["x", "c", "mu", "theta", "eta"], &[&g.x(), &g.c, &mu, &g.theta, &g.eta])
}

fn run_ch1d(s: &ChScenario, out: &Path) -> Result<Metrics> {
    let p = &s.material;
    let mut grid = ChGrid::new(initial_concentration(&s.ic, s.mesh.n), s.mesh.length, s.bc, p)?;
    grid.thermal_bc = s.thermal_bc;
    let (m0, e0) = (grid.mass(), grid.energy(p)?);
    let mut snaps = Snapshots::new(out, s.output.fields, s.output.cadence)?;
    let mut min_theta = min_of(grid.theta.iter().copied());
    let (end, records) = run_ch(grid, s.time.t_end, s.time.tau(), s.coupling, s.algorithm, s.solver.max_halvings, p, |g, _| {
        min_theta = min_theta.min(min_of(g.theta.iter().copied()));
        if let Some(path) = snaps.due("csv") {
            let r = write_ch_snapshot(&path, g, p);
            snaps.keep(r);
        }
    })?;
    if s.output.fields {
        let last = snaps.path(snaps.step, "csv");
        snaps.keep(write_ch_snapshot(&last, &end, p));
    }
    snaps.finish()?;
    if s.output.csv {
        write_csv(&out.join("history.csv"), &records)?;
    }
    let mut prev = e0;
    let mut max_rise = f64::NEG_INFINITY;
    for r in &records {
        max_rise = max_rise.max((r.energy - prev) / e0.abs().max(f64::MIN_POSITIVE));
        prev = r.energy;
    }
    let mut m = Metrics::from([
        ("final_energy".into(), end.energy(p)?),
        ("max_energy_increase".into(), max_rise),
        ("mass_drift".into(), (end.mass() - m0).abs() / m0),
        ("min_c".into(), min_of(end.c.iter().copied())),
        ("max_c".into(), max_of(end.c.iter().copied())),
        ("max_dtheta".into(), max_of(end.theta.iter().map(|t| t - p.theta0))),
        ("min_theta".into(), min_theta),
        ("min_dissipation".into(), min_of(records.iter().map(|r| r.dissipation))),
        ("max_asymmetry".into(), max_of(records.iter().map(|r| r.max_asymmetry))),
    ]);
    if let Some((a, b)) = binodal(p) {
        let tol = 0.25 * (b - a);
        let near = end.c.iter().filter(|&&c| (c - a).abs() < tol || (c - b).abs() < tol).count();
        m.insert("binodal_fraction".into(), near as f64 / end.cells() as f64);
    }
    Ok(m)
}

fn write_bar_snapshot(path: &Path, bar: &DamageBar, p: &thermovar::damage::DamageParams) -> Result<()> {
    // element values averaged to the nodes
    let beta = bar.beta_e(p);
    let n = bar.n_nodes();
    let nodal = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| match (i, i + 1 == n) {
                (0, _) => v[0],
                (_, true) => v[n - 2],
                _ => 0.5 * (v[i - 1] + v[i]),
            })
            .collect()
    };
    write_columns(path, &["x", "u", "d", "beta_e", "theta"], &[&bar.x, &bar.u, &bar.d, &nodal(&beta), &nodal(&bar.theta)])
}

fn run_damage1d(s: &DamageScenario, out: &Path) -> Result<Metrics> {
    let p = &s.material;
    let bar = DamageBar::new(s.mesh.length, s.mesh.elements, s.mesh.imperfection, p)?;
    let mut ctrl = DamageStepControl::new(s.time.tau(), s.mode, s.algorithm);
    ctrl.conduction = s.conduction;
    let rate = s.loading.u_end / s.time.t_end;
    let mut snaps = Snapshots::new(out, s.output.fields, s.output.cadence)?;
    let mut min_theta = p.theta0;
    let (end, records) = run_damage_bar(bar, rate, s.time.t_end, s.time.steps, &ctrl, s.solver.max_halvings, p, |b, _| {
        min_theta = min_theta.min(min_of(b.theta.iter().copied()));
        if let Some(path) = snaps.due("csv") {
            let r = write_bar_snapshot(&path, b, p);
            snaps.keep(r);
        }
    })?;
    if s.output.fields {
        let last = snaps.path(snaps.step, "csv");
        snaps.keep(write_bar_snapshot(&last, &end, p));
    }
    snaps.finish()?;
    if s.output.csv {
        write_csv(&out.join("load_displacement.csv"), &records)?;
    }
    let last = records.last().expect("at least one step");
    Ok(Metrics::from([
        ("peak_reaction".into(), max_of(records.iter().map(|r| r.reaction))),
        ("final_reaction".into(), last.reaction),
        ("max_damage".into(), end.max_damage()),
        ("band_width".into(), last.band_width),
        ("max_dtheta".into(), max_of(records.iter().map(|r| r.max_theta - p.theta0))),
        ("min_theta".into(), min_theta),
        ("min_dissipation".into(), min_of(records.iter().map(|r| r.dissipation))),
        ("max_asymmetry".into(), max_of(records.iter().map(|r| r.max_asymmetry))),
    ]))
}

fn run_shearband2d(s: &ShearBandScenario, out: &Path) -> Result<Metrics> {
    let setup = s.setup();
    let mut snaps = Snapshots::new(out, s.output.fields, s.output.cadence)?;
    let vtk = |path: &Path, fe: &_, state: &_| -> Result<()> {
        let mut w = create_file(path)?;
        write_shear_band_vtk(&mut w, fe, state)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    };
    let (fe, state, records) = run_shear_band(&setup, &s.material, |fe, state, _| {
        if let Some(path) = snaps.due("vtk") {
            let r = vtk(&path, fe, state);
            snaps.keep(r);
        }
    })?;
    if s.output.fields {
        let last = snaps.path(snaps.step, "vtk");
        snaps.keep(vtk(&last, &fe, &state));
    }
    snaps.finish()?;
    if s.output.csv {
        write_csv(&out.join("load_displacement.csv"), &records)?;
    }
    let sum = summarize(&fe, &setup, &state, &records);
    Ok(Metrics::from([
        ("peak_load".into(), sum.peak_load),
        ("u_at_peak".into(), sum.u_at_peak),
        ("final_load".into(), records.last().map_or(0.0, |r| r.reaction)),
        ("max_alpha".into(), sum.max_alpha),
        ("max_dtheta".into(), sum.max_dtheta),
        ("band_width".into(), sum.band.width),
        ("band_cells".into(), sum.band.cells as f64),
        ("min_theta".into(), sum.min_theta),
        ("max_trace_eps_p".into(), sum.max_trace_eps_p),
        ("min_dissipation".into(), sum.min_dissipation),
        ("max_asymmetry".into(), sum.max_asymmetry),
    ]))
}

/// Runs the scenario and writes its per-step tables and field snapshots
/// into `out`; returns the scalar results.
pub fn simulate_scenario(scenario: &Scenario, out: &Path) -> Result<Metrics> {
    create_dir(out)?;
    match scenario {
        Scenario::Point0d(s) => run_point0d(s, out),
        Scenario::Ch1d(s) => run_ch1d(s, out),
        Scenario::Damage1d(s) => run_damage1d(s, out),
        Scenario::Shearband2d(s) => run_shearband2d(s, out),
    }
}

pub(crate) fn metrics_json(m: &Metrics) -> serde_json::Value {
    // non-finite values have no JSON representation
    m.iter().map(|(k, v)| (k.clone(), if v.is_finite() { (*v).into() } else { serde_json::Value::Null })).collect()
}

/// `run` subcommand: artifacts plus `summary.json` with the resolved scenario
pub fn run(scenario: &Scenario, out: &Path, opts: &RunOptions) -> Result<serde_json::Value> {
    let start = Instant::now();
    let metrics = simulate_scenario(scenario, out)?;
    let mut summary = serde_json::json!({
        "model": scenario.model().name(),
        "version": env!("CARGO_PKG_VERSION"),
        "metrics": metrics_json(&metrics),
        "config": scenario.to_json(),
    });
    if !opts.reproducible {
        summary["elapsed_seconds"] = start.elapsed().as_secs_f64().into();
    }
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
