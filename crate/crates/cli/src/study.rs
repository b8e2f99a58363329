//! Parameter studies over the cartesian product of the configured series.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use thermovar::point0d::tau_study;

use crate::config::{Axis, Check, Model, Scenario};
use crate::error::{CliError, Result};
use crate::run::{create_dir, metrics_json, simulate_scenario, write_json, Metrics};

/// One simulation of the study
#[derive(Clone, Debug)]
pub struct Case {
    pub axes: BTreeMap<Axis, f64>,
    pub scenario: Scenario,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyRow {
    pub axes: BTreeMap<Axis, f64>,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyReport {
    pub model: &'static str,
    pub axes: Vec<Axis>,
    pub rows: Vec<StudyRow>,
    pub checks: Vec<CheckOutcome>,
}

impl StudyReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

fn apply(s: &mut Scenario, axis: Axis, v: f64) -> Result<()> {
    let n = v.round() as usize;
    match (s, axis) {
        (s, Axis::Tau) => {
            let t = s.time_mut();
            let steps = (t.t_end / v).round().max(1.0) as usize;
            if (steps as f64 * v - t.t_end).abs() > 1e-9 * t.t_end {
                return Err(CliError::config("study.tau", format!("{v} does not divide t_end = {}", t.t_end)));
            }
            t.steps = steps;
        }
        (Scenario::Ch1d(c), Axis::Mesh) => c.mesh.n = n,
        (Scenario::Damage1d(d), Axis::Mesh) => d.mesh.elements = n,
        (Scenario::Shearband2d(b), Axis::Mesh) => {
            // keep the aspect ratio of the base mesh
            b.mesh.ny = (n * b.mesh.ny + b.mesh.nx / 2) / b.mesh.nx;
            b.mesh.nx = n;
        }
        (Scenario::Damage1d(d), Axis::L) => d.material.l = v,
        (Scenario::Shearband2d(b), Axis::L) => b.material.l = v,
        (Scenario::Damage1d(d), Axis::EtaF) => d.material.eta_f = v,
        (Scenario::Shearband2d(b), Axis::EtaF) => b.material.eta_f = v,
        (s, axis) => {
            return Err(CliError::config(format!("study.{}", axis.name()), format!("not a study axis of {}", s.model().name())))
        }
    }
    Ok(())
}

/// Cartesian product of the non-empty series (mesh, l, eta_f, tau order)
pub fn expand(base: &Scenario) -> Result<Vec<Case>> {
    let study = base.study();
    let mut cases = vec![Case { axes: BTreeMap::new(), scenario: base.clone() }];
    for axis in [Axis::Mesh, Axis::L, Axis::EtaF, Axis::Tau] {
        let series = study.series(axis);
        if series.is_empty() {
            continue;
        }
        let mut next = Vec::with_capacity(cases.len() * series.len());
        for case in &cases {
            for &v in &series {
                let mut c = case.clone();
                apply(&mut c.scenario, axis, v)?;
                c.axes.insert(axis, v);
                next.push(c);
            }
        }
        cases = next;
    }
    for c in &cases {
        c.scenario.validate()?;
    }
    Ok(cases)
}

fn point0d_rows(base: &Scenario) -> Result<Vec<StudyRow>> {
    let Scenario::Point0d(s) = base else { unreachable!("point0d study on another model") };
    let study = &s.study;
    if study.tau.is_empty() {
        return Err(CliError::config("study.tau", "point0d studies need a tau series"));
    }
    let res = tau_study(&s.material, s.loading, s.time.t_end, &study.tau, study.reference_divisor)?;
    Ok((0..res.taus.len())
        .map(|i| {
            let mut m = Metrics::from([
                ("error_implicit".to_string(), res.errors_implicit[i]),
                ("error_semi_explicit".to_string(), res.errors_semi_explicit[i]),
            ]);
            if i > 0 {
                m.insert("order_implicit".into(), res.orders_implicit[i - 1]);
                m.insert("order_semi_explicit".into(), res.orders_semi_explicit[i - 1]);
            }
            StudyRow { axes: BTreeMap::from([(Axis::Tau, res.taus[i])]), metrics: m }
        })
        .collect())
}

/// Runs the cases on up to `jobs` threads; rows keep the case order
fn run_cases(cases: &[Case], out: &Path, jobs: usize, log: &(dyn Fn(&str) + Sync)) -> Result<Vec<StudyRow>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Metrics>>>> = Mutex::new((0..cases.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, cases.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= cases.len() {
                    break;
                }
                let label: Vec<String> = cases[k].axes.iter().map(|(a, v)| format!("{}={v}", a.name())).collect();
                log(&format!("case {}/{}: {}", k + 1, cases.len(), label.join(" ")));
                let r = simulate_scenario(&cases[k].scenario, &out.join(format!("case-{k:03}")));
                results.lock().expect("no panics while holding the lock")[k] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("no panics while holding the lock");
    cases
        .iter()
        .zip(results)
        .map(|(c, r)| Ok(StudyRow { axes: c.axes.clone(), metrics: r.expect("every case ran")? }))
        .collect()
}

fn group_key(row: &StudyRow, over: Axis) -> Vec<(Axis, u64)> {
    row.axes.iter().filter(|(a, _)| **a != over).map(|(a, v)| (*a, v.to_bits())).collect()
}

/// Rows reporting `quantity`, grouped by the axes other than `over` and
/// sorted along `over`
fn series_along<'a>(rows: &'a [StudyRow], quantity: &str, over: Axis) -> BTreeMap<Vec<(Axis, u64)>, Vec<(f64, f64)>> {
    let mut groups: BTreeMap<_, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        if let (Some(&x), Some(&q)) = (r.axes.get(&over), r.metrics.get(quantity)) {
            groups.entry(group_key(r, over)).or_default().push((x, q));
        }
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    groups
}

fn fmt_series(g: &[(f64, f64)]) -> String {
    g.iter().map(|(x, q)| format!("{x}: {q:.6}")).collect::<Vec<_>>().join(", ")
}

pub fn evaluate_check(check: &Check, rows: &[StudyRow]) -> CheckOutcome {
    let (passed, detail) = match check {
        Check::Decreasing { quantity, over } | Check::Increasing { quantity, over } => {
            let decreasing = matches!(check, Check::Decreasing { .. });
            let groups = series_along(rows, quantity, *over);
            let mut ok = !groups.is_empty();
            let mut detail = Vec::new();
            for g in groups.values() {
                let monotone = g.len() >= 2 && g.windows(2).all(|w| if decreasing { w[1].1 < w[0].1 } else { w[1].1 > w[0].1 });
                ok &= monotone;
                detail.push(format!("[{}]", fmt_series(g)));
            }
            (ok, detail.join(" "))
        }
        Check::Within { quantity, min, max } => {
            let values: Vec<f64> = rows.iter().filter_map(|r| r.metrics.get(quantity).copied()).collect();
            let ok = !values.is_empty() && values.iter().all(|v| (*min..=*max).contains(v));
            (ok, format!("{values:?} in [{min}, {max}]"))
        }
        Check::Spread { quantity, over, max } => {
            let groups = series_along(rows, quantity, *over);
            let mut ok = !groups.is_empty();
            let mut detail = Vec::new();
            for g in groups.values() {
                let hi = g.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                let lo = g.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let spread = (hi - lo) / hi.abs().max(lo.abs());
                ok &= g.len() >= 2 && spread <= *max;
                detail.push(format!("spread {spread:.4} of [{}]", fmt_series(g)));
            }
            (ok, detail.join(" "))
        }
    };
    CheckOutcome { check: check.clone(), passed, detail }
}

fn headline(model: Model) -> &'static [&'static str] {
    match model {
        Model::Point0d => &["error_implicit", "order_implicit", "error_semi_explicit", "order_semi_explicit"],
        Model::Ch1d => &["final_energy", "mass_drift", "binodal_fraction", "max_dtheta"],
        Model::Damage1d => &["peak_reaction", "max_damage", "band_width", "max_dtheta"],
        Model::Shearband2d => &["peak_load", "max_alpha", "max_dtheta", "band_width", "band_cells"],
    }
}

/// Plain-text report table
pub fn format_table(report: &StudyReport, model: Model) -> String {
    let mut header: Vec<String> = report.axes.iter().map(|a| a.name().to_string()).collect();
    header.extend(headline(model).iter().map(|s| s.to_string()));
    let mut lines = vec![header.iter().map(|h| format!("{h:>14}")).collect::<String>()];
    for r in &report.rows {
        let mut cells: Vec<String> = report.axes.iter().map(|a| format!("{:>14}", r.axes[a])).collect();
        for m in headline(model) {
            cells.push(r.metrics.get(*m).map_or(format!("{:>14}", "-"), |v| format!("{v:>14.6e}")));
        }
        lines.push(cells.concat());
    }
    for c in &report.checks {
        lines.push(format!("{} {:?}: {}", if c.passed { "PASS" } else { "FAIL" }, c.check, c.detail));
    }
    lines.join("\n")
}

fn write_table(path: &Path, report: &StudyReport) -> Result<()> {
    let mut names: Vec<&String> = report.rows.iter().flat_map(|r| r.metrics.keys()).collect();
    names.sort();
    names.dedup();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = report.axes.iter().map(|a| a.name()).collect();
    header.extend(names.iter().map(|s| s.as_str()));
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec: Vec<String> = report.axes.iter().map(|a| r.axes[a].to_string()).collect();
        rec.extend(names.iter().map(|n| r.metrics.get(*n).map_or(String::new(), |v| v.to_string())));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

#[derive(Clone, Debug)]
pub struct StudyOptions {
    pub jobs: usize,
    pub reproducible: bool,
}

/// `study` subcommand: runs the series, writes `study.csv` and `study.json`
/// and evaluates the configured checks
pub fn study(base: &Scenario, out: &Path, opts: &StudyOptions, log: &(dyn Fn(&str) + Sync)) -> Result<StudyReport> {
    let start = Instant::now();
    let cfg = base.study();
    if cfg.is_empty() {
        return Err(CliError::config("study", "no series given"));
    }
    create_dir(out)?;
    let axes: Vec<Axis> = [Axis::Mesh, Axis::L, Axis::EtaF, Axis::Tau].into_iter().filter(|a| !cfg.series(*a).is_empty()).collect();
    let rows = match base.model() {
        Model::Point0d => point0d_rows(base)?,
        _ => run_cases(&expand(base)?, out, opts.jobs, log)?,
    };
    let checks = cfg.checks.iter().map(|c| evaluate_check(c, &rows)).collect();
    let report = StudyReport { model: base.model().name(), axes, rows, checks };
    write_table(&out.join("study.csv"), &report)?;
    let rows_json: Vec<serde_json::Value> = report
        .rows
        .iter()
        .map(|r| {
            let axes: serde_json::Map<String, serde_json::Value> = r.axes.iter().map(|(a, v)| (a.name().to_string(), (*v).into())).collect();
            serde_json::json!({ "axes": axes, "metrics": metrics_json(&r.metrics) })
        })
        .collect();
    let mut json = serde_json::json!({
        "model": report.model,
        "version": env!("CARGO_PKG_VERSION"),
        "rows": rows_json,
        "checks": serde_json::to_value(&report.checks)?,
        "config": base.to_json(),
    });
    if !opts.reproducible {
        json["elapsed_seconds"] = start.elapsed().as_secs_f64().into();
    }
    write_json(&out.join("study.json"), &json)?;
    Ok(report)
}
