use std::collections::BTreeMap;

use thermovar_cli::config::{Axis, Check};
use thermovar_cli::study::{evaluate_check, expand, StudyRow};
use thermovar_cli::{parse_scenario, Scenario};

fn row(mesh: f64, l: f64, q: f64) -> StudyRow {
    StudyRow {
        axes: BTreeMap::from([(Axis::Mesh, mesh), (Axis::L, l)]),
        metrics: BTreeMap::from([("q".to_string(), q)]),
    }
}

fn rows() -> Vec<StudyRow> {
    vec![row(10.0, 0.1, 3.0), row(10.0, 0.2, 2.0), row(20.0, 0.1, 3.1), row(20.0, 0.2, 1.9)]
}

#[test]
fn monotone_checks_group_by_the_other_axes() {
    let dec = Check::Decreasing { quantity: "q".into(), over: Axis::L };
    assert!(evaluate_check(&dec, &rows()).passed);
    let inc = Check::Increasing { quantity: "q".into(), over: Axis::L };
    assert!(!evaluate_check(&inc, &rows()).passed);
    // along mesh the two groups disagree
    let over_mesh = Check::Increasing { quantity: "q".into(), over: Axis::Mesh };
    assert!(!evaluate_check(&over_mesh, &rows()).passed);
}

#[test]
fn spread_is_relative_to_the_largest_magnitude() {
    let tight = Check::Spread { quantity: "q".into(), over: Axis::Mesh, max: 0.06 };
    assert!(evaluate_check(&tight, &rows()).passed);
    let tighter = Check::Spread { quantity: "q".into(), over: Axis::Mesh, max: 0.03 };
    assert!(!evaluate_check(&tighter, &rows()).passed);
}

#[test]
fn within_and_missing_quantities() {
    assert!(evaluate_check(&Check::Within { quantity: "q".into(), min: 1.9, max: 3.1 }, &rows()).passed);
    assert!(!evaluate_check(&Check::Within { quantity: "q".into(), min: 2.0, max: 3.1 }, &rows()).passed);
    assert!(!evaluate_check(&Check::Within { quantity: "absent".into(), min: 0.0, max: 1.0 }, &rows()).passed);
    assert!(!evaluate_check(&Check::Decreasing { quantity: "absent".into(), over: Axis::L }, &rows()).passed);
}

#[test]
fn expansion_is_a_cartesian_product() {
    let s = parse_scenario("model = \"damage1d\"\n[study]\nmesh = [40, 80]\nl = [0.1, 0.2, 0.4]\ntau = [0.5]\n").unwrap();
    let cases = expand(&s).unwrap();
    assert_eq!(cases.len(), 6);
    let last = &cases[5];
    assert_eq!(last.axes[&Axis::Mesh], 80.0);
    assert_eq!(last.axes[&Axis::L], 0.4);
    let Scenario::Damage1d(d) = &last.scenario else { panic!("wrong model") };
    assert_eq!(d.mesh.elements, 80);
    assert_eq!(d.material.l, 0.4);
    assert_eq!(d.time.steps, 120);
}

#[test]
fn shear_band_mesh_keeps_the_aspect_ratio() {
    let s = parse_scenario("model = \"shearband2d\"\n[study]\nmesh = [10]\n").unwrap();
    let Scenario::Shearband2d(b) = &expand(&s).unwrap()[0].scenario else { panic!("wrong model") };
    assert_eq!((b.mesh.nx, b.mesh.ny), (10, 20));
}

#[test]
fn step_sizes_must_divide_the_horizon() {
    let s = parse_scenario("model = \"damage1d\"\n[study]\ntau = [0.7]\n").unwrap();
    assert!(expand(&s).is_err());
}
