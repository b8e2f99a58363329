use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn thermovar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermovar")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn run_ok(config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = thermovar(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

const SPINODAL: &str = "model = \"ch1d\"\n[material]\nD = 2e-4\n[mesh]\nN = 128\n[time]\nt_end = 0.02\nsteps = 100\n[output]\nfields = false\n";

#[test]
fn rest_state_stays_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rest.toml", "model = \"point0d\"\n[loading]\nkind = \"strain-step\"\nvalue = 0.0\n[time]\nt_end = 1.0\nsteps = 10\n");
    let out = dir.path().join("out");
    run_ok(&cfg, &out, &[]);
    let mut rdr = csv::Reader::from_path(out.join("trajectory.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 11);
    for row in &rows {
        for (h, v) in headers.iter().zip(row.iter()) {
            if h != "t" {
                assert_eq!(v, rows[0].get(headers.iter().position(|x| x == h).unwrap()).unwrap(), "{h}");
            }
        }
    }
    let s = summary(&out);
    assert_eq!(s["model"], "point0d");
    assert_eq!(s["metrics"]["max_dtheta"], 0.0);
    // the echoed config carries the defaults that were not written
    assert_eq!(s["config"]["time"]["steps"], 10);
    assert!(s["config"]["material"]["E"].is_number());
}

#[test]
fn config_errors_exit_with_code_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "model = \"ch1d\"\n[mesh]\nN = 64\ncells = 3\n");
    let o = thermovar(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mesh.cells"));

    let cfg = write_config(dir.path(), "typed.toml", "model = \"damage1d\"\n[loading]\nu_end = \"far\"\n");
    let o = thermovar(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("loading.u_end"));

    let o = thermovar(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reproducible_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ch.toml", SPINODAL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&cfg, &a, &["--reproducible", "--seed", "7"]);
    run_ok(&cfg, &b, &["--reproducible", "--seed", "7"]);
    for file in ["summary.json", "history.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert!(summary(&a).get("elapsed_seconds").is_none());

    let c = dir.path().join("c");
    run_ok(&cfg, &c, &["--reproducible", "--seed", "8"]);
    assert_ne!(std::fs::read(a.join("history.csv")).unwrap(), std::fs::read(c.join("history.csv")).unwrap());
    assert_eq!(summary(&c)["config"]["ic"]["seed"], 8);
}

#[test]
fn spinodal_mixture_separates_towards_the_binodal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "spinodal.toml",
        "model = \"ch1d\"\n[material]\nD = 2e-4\n[time]\nt_end = 0.1\nsteps = 500\n[output]\ncadence = 250\n",
    );
    let out = dir.path().join("out");
    run_ok(&cfg, &out, &["--reproducible"]);
    let m = &summary(&out)["metrics"];
    assert!(m["binodal_fraction"].as_f64().unwrap() > 0.7, "{m}");
    assert!(m["mass_drift"].as_f64().unwrap() < 1e-12);
    assert!(m["max_energy_increase"].as_f64().unwrap() <= 0.0);
    assert!(m["min_c"].as_f64().unwrap() < 0.15 && m["max_c"].as_f64().unwrap() > 0.85);
    let snaps: Vec<_> = std::fs::read_dir(out.join("fields")).unwrap().collect();
    assert_eq!(snaps.len(), 2);
}

#[test]
fn damage_bar_run_writes_load_displacement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bar.toml",
        "model = \"damage1d\"\n[mesh]\nelements = 80\n[time]\nt_end = 60.0\nsteps = 120\n[output]\nfields = false\n",
    );
    let out = dir.path().join("out");
    run_ok(&cfg, &out, &[]);
    let m = &summary(&out)["metrics"];
    let peak = m["peak_reaction"].as_f64().unwrap();
    assert!(m["final_reaction"].as_f64().unwrap() < peak);
    assert!(m["max_damage"].as_f64().unwrap() > 0.0);
    assert!(m["min_dissipation"].as_f64().unwrap() >= -1e-12);
    let rows = csv::Reader::from_path(out.join("load_displacement.csv")).unwrap().records().count();
    assert_eq!(rows, 120);
}

#[test]
fn small_shear_band_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "plate.toml",
        "model = \"shearband2d\"\n[material]\nl = 0.2\n[mesh]\nnx = 4\nny = 8\n[time]\nsteps = 40\n[output]\ncadence = 20\n",
    );
    let out = dir.path().join("out");
    run_ok(&cfg, &out, &[]);
    let m = &summary(&out)["metrics"];
    assert!(m["peak_load"].as_f64().unwrap() > 0.0);
    assert!(m["max_trace_eps_p"].as_f64().unwrap().abs() < 1e-12);
    assert!(m["min_dissipation"].as_f64().unwrap() >= -1e-12);
    assert!(out.join("fields").join("step_000040.vtk").exists());
}

#[test]
fn study_checks_set_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let base = "model = \"point0d\"\n[loading]\nkind = \"strain-ramp\"\nrate = 0.1\n[time]\nt_end = 0.08\nsteps = 8\n[study]\ntau = [0.01, 0.005, 0.0025]\nreference_divisor = 100\n";
    let pass = write_config(
        dir.path(),
        "pass.toml",
        &format!("{base}[[study.checks]]\nkind = \"within\"\nquantity = \"order_semi_explicit\"\nmin = 0.8\nmax = 1.2\n"),
    );
    let o = thermovar(&["study", pass.to_str().unwrap(), "--out", dir.path().join("p").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("p").join("study.csv").exists());

    let fail = write_config(
        dir.path(),
        "fail.toml",
        &format!("{base}[[study.checks]]\nkind = \"within\"\nquantity = \"order_semi_explicit\"\nmin = 1.9\nmax = 2.1\n"),
    );
    let o = thermovar(&["study", fail.to_str().unwrap(), "--out", dir.path().join("f").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
