use std::collections::BTreeMap;

use thermovar::fem::*;
use thermovar::Error;

#[test]
fn rectangle_mesh_numbering_and_sets() {
    let m = Mesh::rectangle([1.0, -2.0], 3.0, 2.0, 3, 2).unwrap();
    assert_eq!(m.n_nodes(), 12);
    assert_eq!(m.n_elements(), 6);
    assert_eq!(m.elements[0], vec![0, 1, 5, 4]);
    assert_eq!(m.nodes[5], [2.0, -1.0]);
    assert_eq!(m.node_set("left").unwrap(), &[0, 4, 8]);
    assert_eq!(m.node_set("top").unwrap(), &[8, 9, 10, 11]);
    assert_eq!(m.element_center(4), [2.5, -0.5]);
    assert_eq!(m.node_at([4.0, 0.0], 1e-9), Some(11));
    assert_eq!(m.node_at([4.1, 0.0], 1e-9), None);
    assert!(m.node_set("front").is_err());
}

#[test]
fn invalid_meshes_are_rejected() {
    assert!(Mesh::rectangle([0.0, 0.0], 1.0, 1.0, 0, 2).is_err());
    assert!(Mesh::line(-1.0, 4).is_err());
    let nodes = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let bad_conn = Mesh::new(ElementKind::Quad4, nodes.clone(), vec![vec![0, 1, 2]], BTreeMap::new());
    assert!(matches!(bad_conn, Err(Error::InvalidParameter(_))));
    // clockwise numbering inverts the element
    let inverted = Mesh::new(ElementKind::Quad4, nodes, vec![vec![0, 3, 2, 1]], BTreeMap::new());
    assert!(matches!(inverted, Err(Error::NonPositiveJacobian(_))));
}

#[test]
fn shape_functions_partition_unity_and_match_fd_gradients() {
    let xy = [[0.0, 0.0], [2.0, 0.3], [2.4, 1.9], [-0.2, 1.5]];
    for xi in [[0.1, -0.3], [-0.7, 0.6], [0.0, 0.0]] {
        let s = quad4_eval(&xy, xi).unwrap();
        assert!((s.n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let gsum: [f64; 2] = [s.dn.iter().map(|d| d[0]).sum(), s.dn.iter().map(|d| d[1]).sum()];
        assert!(gsum[0].abs() < 1e-14 && gsum[1].abs() < 1e-14);
        // the bilinear interpolation of X reproduces X exactly, so ∇X = I
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..4).map(|a| xy[a][i] * s.dn[a][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        // natural derivatives by central differences
        let h = 1e-6;
        for k in 0..2 {
            let mut p = xi;
            let mut m = xi;
            p[k] += h;
            m[k] -= h;
            let (np, _) = quad4_shape(p);
            let (nm, _) = quad4_shape(m);
            let (_, dn) = quad4_shape(xi);
            for a in 0..4 {
                assert!(((np[a] - nm[a]) / (2.0 * h) - dn[a][k]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn gauss_rules_integrate_polynomials_exactly() {
    for n in 1..=3 {
        let rule = gauss_legendre(n);
        for deg in 0..2 * n {
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            let q: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((q - exact).abs() < 1e-14, "n = {n}, degree {deg}");
        }
    }
    let area: f64 = quad_rule(2).iter().map(|p| p.weight).sum();
    assert_eq!(area, 4.0);
}

#[test]
fn dof_layout_with_extra_blocks() {
    let plain = DofMap::new(3, &["u", "v"]);
    assert_eq!(plain.n_dofs(), 6);
    assert_eq!(plain.dof(2, 1), 5);
    assert_eq!(plain.element_dofs(&[2, 0]), vec![4, 5, 0, 1]);
    assert_eq!(plain.field("v").unwrap(), 1);
    assert!(plain.field("w").is_err());

    // two blocks of size 3, anchored at nodes 1 and 0
    let m = DofMap::with_extras(3, &["u", "v"], &[1, 0], 3);
    assert_eq!(m.n_dofs(), 12);
    assert_eq!(m.dof(0, 0), 0);
    assert_eq!(m.extra_dofs(1), 2..5);
    assert_eq!(m.dof(1, 0), 5);
    assert_eq!(m.extra_dofs(0), 7..10);
    assert_eq!(m.dof(2, 1), 11);
}

#[test]
fn constraints_ramp_with_the_load() {
    let mut m = DofMap::new(2, &["u"]);
    m.constrain(0, Ramp::fixed(0.5));
    m.constrain_nodes(&[1], 0, Ramp::proportional(-2.0));
    let mut x = vec![9.0; 2];
    m.apply(&mut x, 0.25);
    assert_eq!(x, vec![0.5, -0.5]);
    assert_eq!(m.free_mask(), vec![false, false]);
    assert!(m.is_constrained(1));
    m.constrain(1, Ramp { offset: 1.0, scale: 1.0 });
    m.apply(&mut x, 2.0);
    assert_eq!(x[1], 3.0);
}

/// Potential ½∫|∇u|² − ∫f u on a quad mesh
fn poisson(mesh: &Mesh, f: f64) -> impl Fn(usize, &[f64]) -> thermovar::Result<LocalEval> + '_ {
    move |e, xl| {
        let c = mesh.element_coords(e);
        let xy = [c[0], c[1], c[2], c[3]];
        let mut v = 0.0;
        let mut g = vec![0.0; 4];
        let mut k = vec![vec![0.0; 4]; 4];
        for qp in quad_rule(2) {
            let s = quad4_eval(&xy, qp.xi)?;
            let w = qp.weight * s.det_j;
            let grad = [0, 1].map(|d| (0..4).map(|a| xl[a] * s.dn[a][d]).sum::<f64>());
            let u: f64 = (0..4).map(|a| xl[a] * s.n[a]).sum();
            v += w * (0.5 * (grad[0] * grad[0] + grad[1] * grad[1]) - f * u);
            for a in 0..4 {
                g[a] += w * (grad[0] * s.dn[a][0] + grad[1] * s.dn[a][1] - f * s.n[a]);
                for b in 0..4 {
                    k[a][b] += w * (s.dn[a][0] * s.dn[b][0] + s.dn[a][1] * s.dn[b][1]);
                }
            }
        }
        Ok((v, g, k))
    }
}

#[test]
fn quadratic_potential_converges_in_one_newton_step() {
    let mesh = Mesh::rectangle([0.0, 0.0], 1.0, 1.0, 6, 6).unwrap();
    let mut dofs = DofMap::new(mesh.n_nodes(), &["u"]);
    for set in ["left", "right", "bottom", "top"] {
        let nodes = mesh.node_set(set).unwrap().to_vec();
        dofs.constrain_nodes(&nodes, 0, Ramp::proportional(1.0));
    }
    let asm = Assembler::new(dofs.n_dofs(), mesh.elements.clone());
    let mut x = vec![0.0; dofs.n_dofs()];
    dofs.apply(&mut x, 0.7);
    let local = poisson(&mesh, 3.0);
    let report = solve_newton(&mut x, &dofs.free_mask(), &NewtonControl::default(), |y| asm.assemble(y, &local)).unwrap();
    assert_eq!(report.iterations, 1);
    // prescribed values are kept exactly
    for (d, r) in dofs.constraints() {
        assert_eq!(x[d], r.value(0.7));
    }
    assert!(report.max_asymmetry <= 1e-14);
}

#[test]
fn assembled_gradient_matches_finite_differences() {
    let mesh = Mesh::rectangle([0.0, 0.0], 2.0, 1.0, 3, 2).unwrap();
    let asm = Assembler::new(mesh.n_nodes(), mesh.elements.clone());
    let local = poisson(&mesh, 1.5);
    let x: Vec<f64> = (0..mesh.n_nodes()).map(|i| (0.37 * i as f64).sin()).collect();
    let ev = asm.assemble(&x, &local).unwrap();
    let h = 1e-6;
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let vp = asm.assemble(&xp, &local).unwrap().value;
        let vm = asm.assemble(&xm, &local).unwrap().value;
        assert!(((vp - vm) / (2.0 * h) - ev.gradient[i]).abs() < 1e-8);
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Clock(Vec<(f64, f64)>);

#[test]
fn halving_splits_failed_intervals() {
    // steps longer than 0.3 fail
    let mut step = |s: &Clock, a: f64, b: f64| -> thermovar::Result<Clock> {
        if b - a > 0.3 {
            return Err(Error::NewtonDivergence { iterations: 1, residual: 1.0 });
        }
        let mut v = s.0.clone();
        v.push((a, b));
        Ok(Clock(v))
    };
    let (s, depth) = advance_with_halving(&Clock(vec![]), 0.0, 1.0, 3, &mut step).unwrap();
    assert_eq!(depth, 2);
    assert_eq!(s.0, vec![(0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0)]);

    let (s, depth) = advance_with_halving(&Clock(vec![]), 0.0, 0.2, 3, &mut step).unwrap();
    assert_eq!((s.0.len(), depth), (1, 0));

    let err = advance_with_halving(&Clock(vec![]), 0.0, 1.0, 1, &mut step).unwrap_err();
    assert!(matches!(err, Error::StepSizeFloor(dt) if dt == 0.5));
    let err = advance_with_halving(&Clock(vec![]), 0.0, 1.0, 0, &mut step).unwrap_err();
    assert!(matches!(err, Error::NewtonDivergence { .. }));
}

#[test]
fn unrecoverable_errors_are_not_retried() {
    let mut calls = 0;
    let mut step = |_: &Clock, _: f64, _: f64| -> thermovar::Result<Clock> {
        calls += 1;
        Err(Error::InvalidParameter("bad".into()))
    };
    let err = advance_with_halving(&Clock(vec![]), 0.0, 1.0, 4, &mut step).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter(_)));
    assert_eq!(calls, 1);
    assert!(is_recoverable(&Error::NonPositiveTemperature(-1.0)));
    assert!(!is_recoverable(&Error::AsymmetricTangent(1.0)));
}

#[test]
fn vtk_output_is_deterministic_and_well_formed() {
    let mesh = Mesh::rectangle([0.0, 0.0], 1.0, 2.0, 2, 3).unwrap();
    let p: Vec<f64> = (0..mesh.n_nodes()).map(|i| i as f64 / 7.0).collect();
    let u: Vec<[f64; 2]> = (0..mesh.n_nodes()).map(|i| [i as f64, -(i as f64)]).collect();
    let c: Vec<f64> = (0..mesh.n_elements()).map(|e| e as f64).collect();
    let write = || {
        let mut buf = Vec::new();
        write_vtk(&mut buf, "test", &mesh, &[VtkField::Scalar("p", &p), VtkField::Vector("u", &u)], &[VtkField::Scalar("c", &c)])
            .unwrap();
        String::from_utf8(buf).unwrap()
    };
    let a = write();
    assert_eq!(a, write());
    assert!(a.starts_with("# vtk DataFile Version 3.0\ntest\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 12 double\n"));
    assert!(a.contains("CELLS 6 30\n4 0 1 4 3\n"));
    assert!(a.contains("CELL_TYPES 6\n9\n"));
    assert!(a.contains("POINT_DATA 12\nSCALARS p double 1\nLOOKUP_TABLE default\n"));
    assert!(a.contains("VECTORS u double\n"));
    assert!(a.contains("CELL_DATA 6\nSCALARS c double 1\n"));
    assert_eq!(a.lines().count(), 5 + 12 + 1 + 6 + 1 + 6 + 1 + 2 + 12 + 1 + 12 + 1 + 2 + 6);
}
