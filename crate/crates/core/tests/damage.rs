use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermovar::damage::*;
use thermovar::point0d::Algorithm;
use thermovar::{Error, SymTensor3, Tensor3};

fn random_f(rng: &mut ChaCha8Rng) -> Tensor3 {
    let mut f = Tensor3::identity();
    for row in f.0.iter_mut() {
        for v in row.iter_mut() {
            *v += rng.gen_range(-0.15..0.15);
        }
    }
    f
}

fn sym_unit(i: usize, j: usize) -> SymTensor3 {
    let mut m = [[0.0; 3]; 3];
    m[i][j] = 1.0;
    m[j][i] = 1.0;
    SymTensor3::from_matrix(&m)
}

#[test]
fn reference_state_is_stress_free() {
    let p = DamageParams::default();
    for d in [0.0, 0.4, 0.9] {
        let e = damage_free_energy(&SymTensor3::identity(), d, p.theta0, &p).unwrap();
        assert!(e.psi_e.abs() < 1e-12);
        assert!(e.beta_e.abs() < 1e-12);
        assert!(e.dpsi_dc.max_abs() < 1e-12);
    }
}

#[test]
fn fully_damaged_point_carries_no_stress() {
    let p = DamageParams::default();
    let c = SymTensor3::diag(1.3, 0.9, 1.1);
    let e = damage_free_energy(&c, 1.0, 310.0, &p).unwrap();
    assert_eq!(e.beta_e, 0.0);
    assert_eq!(e.dpsi_dc.max_abs(), 0.0);
    assert!(e.psi_e > 0.0);
}

#[test]
fn free_energy_derivatives_match_finite_differences() {
    let p = DamageParams { alpha_t: 2e-4, ..DamageParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let psi = |c: &SymTensor3, d: f64, t: f64| damage_free_energy(c, d, t, &p).unwrap().psi;
    for _ in 0..20 {
        let f = random_f(&mut rng);
        let c = thermovar::tensor::right_cauchy_green(&f).unwrap();
        let d = rng.gen_range(0.0..0.95);
        let theta = rng.gen_range(250.0..350.0);
        let e = damage_free_energy(&c, d, theta, &p).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for j in i..3 {
                let dc = sym_unit(i, j).scale(0.5 * h);
                let fd = (psi(&(c + dc), d, theta) - psi(&(c - dc), d, theta)) / h;
                let scale = e.dpsi_dc.max_abs().max(1.0);
                // an off-diagonal perturbation moves both C_ij and C_ji
                let exact = if i == j { e.dpsi_dc.get(i, i) } else { 2.0 * e.dpsi_dc.get(i, j) };
                assert!((fd - exact).abs() < 1e-6 * scale, "dψ/dC[{i}{j}] {fd} vs {exact}");
            }
        }
        let fd_d = (psi(&c, d + h, theta) - psi(&c, d - h, theta)) / (2.0 * h);
        assert!((fd_d - e.beta_e).abs() < 1e-6 * e.beta_e.abs().max(1.0));
        let ht = 1e-4;
        let fd_t = (psi(&c, d, theta + ht) - psi(&c, d, theta - ht)) / (2.0 * ht);
        assert!((fd_t - e.eta_tilde).abs() < 1e-6 * e.eta_tilde.abs().max(1.0));
    }
}

#[test]
fn first_piola_is_the_deformation_gradient_derivative() {
    let p = DamageParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = random_f(&mut rng);
    let (d, theta) = (0.3, 300.0);
    let pk = first_piola(&f, d, theta, &p).unwrap();
    let psi = |f: &Tensor3| {
        let c = thermovar::tensor::right_cauchy_green(f).unwrap();
        damage_free_energy(&c, d, theta, &p).unwrap().psi
    };
    let h = 1e-6;
    for i in 0..3 {
        for j in 0..3 {
            let (mut fp, mut fm) = (f, f);
            fp.0[i][j] += h;
            fm.0[i][j] -= h;
            let fd = (psi(&fp) - psi(&fm)) / (2.0 * h);
            assert!((fd - pk.0[i][j]).abs() < 1e-6 * pk.norm().max(1.0));
        }
    }
}

#[test]
fn free_energy_rejects_inadmissible_states() {
    let p = DamageParams::default();
    let c = SymTensor3::identity();
    assert!(matches!(damage_free_energy(&c, 0.0, 0.0, &p), Err(Error::NonPositiveTemperature(_))));
    let flat = SymTensor3::diag(1.0, 1.0, 0.0);
    assert!(matches!(damage_free_energy(&flat, 0.0, 300.0, &p), Err(Error::NonPositiveJacobian(_))));
}

#[test]
fn threshold_function_examples() {
    let p = DamageParams::default();
    assert_eq!(damage_threshold(0.0, p.theta0, &p), -p.c0);
    assert!(damage_threshold(p.threshold(320.0), 320.0, &p).abs() < 1e-14);
    assert!(damage_threshold(5.0, p.theta0 + 20.0, &p) > damage_threshold(5.0, p.theta0, &p));
}

#[test]
fn parameters_are_validated() {
    let bad = DamageParams { l: 0.0, ..DamageParams::default() };
    assert!(matches!(bad.validate(), Err(Error::InvalidParameter(_))));
    let bad = DamageParams { eta_f: -1.0, ..DamageParams::default() };
    assert!(bad.validate().is_err());
    let toml_src = "mu = 500.0\nc0 = 4.0\nalpha_T = 2e-5\n";
    let p: DamageParams = toml::from_str(toml_src).unwrap();
    assert_eq!((p.mu, p.c0, p.alpha_t), (500.0, 4.0, 2e-5));
}

fn random_bar(rng: &mut ChaCha8Rng, p: &DamageParams) -> DamageBar {
    let mut bar = DamageBar::new(2.0, 8, 0.1, p).unwrap();
    for i in 0..bar.n_nodes() {
        bar.u[i] = 0.05 * bar.x[i] + rng.gen_range(-0.01..0.01);
        bar.d[i] = rng.gen_range(0.0..0.3);
    }
    for e in 0..bar.n_elements() {
        bar.theta[e] = p.theta0 + rng.gen_range(-3.0..3.0);
        bar.eta[e] = rng.gen_range(-0.01..0.01);
    }
    bar
}

#[test]
fn residual_and_tangent_match_finite_differences() {
    let p = DamageParams { l: 0.5, eta_f: 2.0, ..DamageParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for alg in [Algorithm::Implicit, Algorithm::SemiExplicit] {
        for mode in [DamageMode::Kkt, DamageMode::Viscous] {
            let bar = random_bar(&mut rng, &p);
            let ctrl = DamageStepControl::new(0.25, mode, alg);
            let prob = DamageStepProblem::new(&bar, 0.12, &ctrl, &p).unwrap();
            let mut x = prob.initial_guess();
            for (i, v) in x.iter_mut().enumerate() {
                *v += if i % 2 == 1 { rng.gen_range(0.0..0.1) } else { rng.gen_range(-0.01..0.01) };
            }
            let ev = prob.evaluate(&x).unwrap();
            assert!(ev.max_asymmetry <= 1e-10);
            let gscale = ev.gradient.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let hscale = ev.hessian.max_abs();
            let h = 1e-6;
            for i in 0..x.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let (ep, em) = (prob.evaluate(&xp).unwrap(), prob.evaluate(&xm).unwrap());
                let g = (ep.value - em.value) / (2.0 * h);
                assert!((g - ev.gradient[i]).abs() < 1e-6 * gscale, "{alg:?} {mode:?} gradient {i}");
                for j in 0..x.len() {
                    let hij = (ep.gradient[j] - em.gradient[j]) / (2.0 * h);
                    assert!((hij - ev.hessian.get(i.max(j), i.min(j))).abs() < 1e-6 * hscale, "{alg:?} {mode:?} hessian {i},{j}");
                }
            }
        }
    }
}

#[test]
fn zero_load_leaves_the_bar_unchanged() {
    let p = DamageParams::default();
    let bar = DamageBar::new(20.0, 50, 0.1, &p).unwrap();
    for alg in [Algorithm::Implicit, Algorithm::SemiExplicit] {
        let ctrl = DamageStepControl::new(1.0, DamageMode::Kkt, alg);
        let (next, info) = step_damage_bar(&bar, 0.0, &ctrl, &p).unwrap();
        assert_eq!(next.d, bar.d);
        assert!(next.u.iter().all(|u| u.abs() < 1e-14));
        assert!(next.theta.iter().all(|t| (t - p.theta0).abs() < 1e-10));
        assert_eq!(info.dissipation, 0.0);
        assert!(info.reaction.abs() < 1e-10);
    }
}

/// Stretch at which 2ψ̂_e(λ) = ĉ(θ₀) for the isothermal uniaxial-strain bar
fn onset_stretch(p: &DamageParams) -> f64 {
    let psi_e = |l: f64| 0.5 * p.mu * (l * l - 1.0) + p.mu / p.delta * (l.powf(-p.delta) - 1.0);
    let (mut a, mut b) = (1.0, 2.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if 2.0 * psi_e(m) < p.c0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn damage_starts_at_the_closed_form_onset_stretch() {
    let p = DamageParams { alpha_t: 0.0, w_c: 0.0, ..DamageParams::default() };
    let lc = onset_stretch(&p);
    let length = 10.0;
    let ctrl = DamageStepControl::new(1.0, DamageMode::Kkt, Algorithm::Implicit);
    let bar = DamageBar::new(length, 20, 0.0, &p).unwrap();
    let (below, _) = step_damage_bar(&bar, (lc - 1.0) * length * (1.0 - 1e-6), &ctrl, &p).unwrap();
    assert!(below.d.iter().all(|&d| d == 0.0));
    let (above, _) = step_damage_bar(&below, (lc - 1.0) * length * (1.0 + 1e-4), &ctrl, &p).unwrap();
    assert!(above.max_damage() > 0.0);
}

#[test]
fn response_below_threshold_is_thermoelastic() {
    let p = DamageParams::default();
    let length = 10.0;
    let mut bar = DamageBar::new(length, 20, 0.0, &p).unwrap();
    let ctrl = DamageStepControl::new(1.0, DamageMode::Kkt, Algorithm::Implicit);
    for k in 1..=10 {
        let u = 0.04 * k as f64;
        let (next, info) = step_damage_bar(&bar, u, &ctrl, &p).unwrap();
        bar = next;
        assert!(bar.d.iter().all(|&d| d == 0.0));
        let lambda = 1.0 + u / length;
        let c = SymTensor3::diag(lambda * lambda, 1.0, 1.0);
        let e = damage_free_energy(&c, 0.0, bar.theta[0], &p).unwrap();
        let sigma = 2.0 * lambda * e.dpsi_dc.get(0, 0);
        assert!((info.reaction - sigma).abs() < 1e-8 * sigma);
        // the adiabatic state law of the undamaged bar
        assert!((bar.eta[0] + e.eta_tilde).abs() < 1e-12);
    }
    // thermoelastic cooling under tension
    assert!(bar.theta.iter().all(|&t| t < p.theta0));
}

fn ramp(p: &DamageParams, mode: DamageMode, alg: Algorithm, n_el: usize, steps: usize, u_end: f64) -> Vec<(DamageBar, DamageBar, DamageStepInfo, f64)> {
    let mut bar = DamageBar::new(20.0, n_el, 0.1, p).unwrap();
    let ctrl = DamageStepControl::new(0.25, mode, alg);
    let mut out = Vec::new();
    for k in 1..=steps {
        let u = u_end * k as f64 / steps as f64;
        let (next, info) = step_damage_bar(&bar, u, &ctrl, p).unwrap();
        out.push((bar, next.clone(), info, u));
        bar = next;
    }
    out
}

#[test]
fn kkt_triplet_holds_at_every_node() {
    let p = DamageParams { l: 0.25, ..DamageParams::default() };
    let ctrl = DamageStepControl::new(0.25, DamageMode::Kkt, Algorithm::SemiExplicit);
    let history = ramp(&p, DamageMode::Kkt, Algorithm::SemiExplicit, 100, 60, 1.2);
    let mut evolved = 0;
    for (prev, next, _, u) in &history {
        let kkt = kkt_residuals(prev, next, *u, &ctrl, &p).unwrap();
        for (i, node) in kkt.iter().enumerate() {
            assert!(node.increment >= 0.0);
            if next.d[i] < 1.0 {
                assert!(node.threshold <= 1e-6, "node {i}: f = {}", node.threshold);
            }
            assert!(node.complementarity <= 1e-10, "node {i}: {}", node.complementarity);
            if node.increment > 0.0 {
                evolved += 1;
            }
        }
    }
    assert!(evolved > 0);
}

#[test]
fn viscous_update_is_the_over_force_law() {
    let p = DamageParams { l: 0.25, eta_f: 0.5, ..DamageParams::default() };
    let tau = 0.25;
    let kkt_ctrl = DamageStepControl::new(tau, DamageMode::Kkt, Algorithm::SemiExplicit);
    let history = ramp(&p, DamageMode::Viscous, Algorithm::SemiExplicit, 100, 60, 1.2);
    let mut checked = 0;
    for (prev, next, _, u) in &history {
        // the threshold function without the viscous term is the over-force
        let over = kkt_residuals(prev, next, *u, &kkt_ctrl, &p).unwrap();
        for (i, node) in over.iter().enumerate() {
            if next.d[i] >= 1.0 {
                continue;
            }
            let expected = tau / p.eta_f * node.threshold.max(0.0);
            assert!((node.increment - expected).abs() < 1e-8, "node {i}: {} vs {expected}", node.increment);
            checked += usize::from(node.increment > 0.0);
        }
    }
    assert!(checked > 0);
}

#[test]
fn state_laws_fix_the_temperatures() {
    let p = DamageParams { l: 0.25, eta_f: 0.1, ..DamageParams::default() };
    for alg in [Algorithm::Implicit, Algorithm::SemiExplicit] {
        for (prev, next, _, _) in ramp(&p, DamageMode::Viscous, alg, 50, 50, 1.2) {
            for e in 0..next.n_elements() {
                let lambda = next.stretch(e);
                let db = 0.5 * (next.d[e] + next.d[e + 1]);
                let c = SymTensor3::diag(lambda * lambda, 1.0, 1.0);
                let et = damage_free_energy(&c, db, next.theta[e], &p).unwrap().eta_tilde;
                let eta_k = match alg {
                    Algorithm::Implicit => next.eta[e],
                    Algorithm::SemiExplicit => prev.eta[e],
                };
                assert!((et + eta_k).abs() < 1e-10, "{alg:?} element {e}");
            }
        }
    }
}

#[test]
fn semi_explicit_entropy_has_no_temperature_ratio() {
    let p = DamageParams { l: 0.25, eta_f: 0.5, ..DamageParams::default() };
    let ctrl = DamageStepControl::new(0.25, DamageMode::Viscous, Algorithm::SemiExplicit);
    let history = ramp(&p, DamageMode::Viscous, Algorithm::SemiExplicit, 100, 60, 1.2);
    let mut seen_difference = false;
    for (prev, next, _, u) in &history {
        let prob = DamageStepProblem::new(prev, *u, &ctrl, &p).unwrap();
        let x: Vec<f64> = next.u.iter().zip(&next.d).flat_map(|(a, b)| [*a, *b]).collect();
        for e in 0..next.n_elements() {
            let stored = next.eta[e] - prev.eta[e];
            assert!((stored - prob.dissipative_entropy_increment(&x, e, 1.0)).abs() < 1e-14);
            let ratio = next.theta[e] / prev.theta[e];
            let scaled = prob.dissipative_entropy_increment(&x, e, ratio);
            let at_theta_n = prob.dissipative_entropy_increment(&x, e, prev.theta[e] / prev.theta[e]);
            assert_eq!(at_theta_n, prob.dissipative_entropy_increment(&x, e, 1.0));
            if (stored - scaled).abs() > 1e-12 {
                assert!((ratio - 1.0).abs() > 0.0);
                seen_difference = true;
            }
        }
    }
    assert!(seen_difference);
}

#[test]
fn conduction_moves_heat_down_the_gradient_and_conserves_it() {
    let p = DamageParams { k_b: 5.0, ..DamageParams::default() };
    let mut bar = DamageBar::new(2.0, 4, 0.0, &p).unwrap();
    bar.theta = vec![300.0, 293.0, 293.0, 293.0];
    bar.eta = bar.theta.iter().map(|t| p.c_heat * (t / p.theta0).ln()).collect();
    let mut ctrl = DamageStepControl::new(0.1, DamageMode::Kkt, Algorithm::SemiExplicit);
    ctrl.conduction = true;
    let (next, _) = step_damage_bar(&bar, 0.0, &ctrl, &p).unwrap();
    assert!(next.eta[0] < bar.eta[0]);
    assert!(next.eta[1] > bar.eta[1]);
    let heat: f64 = (0..4).map(|e| bar.theta[e] * (next.eta[e] - bar.eta[e]) * bar.element_length(e)).sum();
    assert!(heat.abs() < 1e-12);
    ctrl.algorithm = Algorithm::Implicit;
    assert!(matches!(step_damage_bar(&bar, 0.0, &ctrl, &p), Err(Error::InvalidParameter(_))));
}

#[test]
fn band_width_grows_with_the_length_scale() {
    let widths: Vec<f64> = [0.125, 0.25, 0.5]
        .iter()
        .map(|&l| {
            let p = DamageParams { l, ..DamageParams::default() };
            let bar = DamageBar::new(20.0, 200, 0.1, &p).unwrap();
            let ctrl = DamageStepControl::new(0.25, DamageMode::Kkt, Algorithm::SemiExplicit);
            let (bar, _) = run_damage_bar(bar, 0.02, 60.0, 240, &ctrl, 0, &p, |_, _| {}).unwrap();
            // the band sits at the imperfection, away from the ends
            let peak = bar.d.iter().enumerate().fold((0, 0.0), |m, (i, &d)| if d > m.1 { (i, d) } else { m }).0;
            assert!((bar.x[peak] - 10.0).abs() < 1.0);
            half_max_width(&bar.x, &bar.d)
        })
        .collect();
    assert!(widths[0] < widths[1] && widths[1] < widths[2], "{widths:?}");
    assert!(widths[2] < 20.0);
}

#[test]
fn viscous_solutions_converge_to_the_threshold_solution() {
    let run = |mode: DamageMode, eta_f: f64| {
        let p = DamageParams { l: 0.25, eta_f, ..DamageParams::default() };
        let bar = DamageBar::new(20.0, 200, 0.1, &p).unwrap();
        let ctrl = DamageStepControl::new(0.25, mode, Algorithm::SemiExplicit);
        run_damage_bar(bar, 0.02, 60.0, 240, &ctrl, 0, &p, |_, _| {}).unwrap().0
    };
    let reference = run(DamageMode::Kkt, 0.0);
    let errors: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&eta| {
            let v = run(DamageMode::Viscous, eta);
            reference.d.iter().zip(&v.d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log10();
        assert!((0.8..=1.2).contains(&order), "{errors:?}");
    }
}

#[test]
fn half_max_width_of_piecewise_linear_fields() {
    let x = [0.0, 1.0, 2.0, 3.0];
    assert!((half_max_width(&x, &[0.0, 1.0, 1.0, 0.0]) - 2.0).abs() < 1e-15);
    assert!((half_max_width(&x, &[0.0, 0.0, 1.0, 0.0]) - 1.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, .. ProptestConfig::default() })]

    #[test]
    fn damage_is_irreversible_and_dissipative(
        l in 0.2f64..1.0,
        imperfection in 0.0f64..0.3,
        eta_f in 0.0f64..1.0,
        semi in any::<bool>(),
    ) {
        let p = DamageParams { l, eta_f, ..DamageParams::default() };
        let mode = if eta_f > 0.0 { DamageMode::Viscous } else { DamageMode::Kkt };
        let alg = if semi { Algorithm::SemiExplicit } else { Algorithm::Implicit };
        let mut bar = DamageBar::new(5.0, 40, imperfection, &p).unwrap();
        let ctrl = DamageStepControl::new(0.5, mode, alg);
        for k in 1..=30 {
            let (next, info) = step_damage_bar(&bar, 0.01 * k as f64, &ctrl, &p).unwrap();
            for (a, b) in next.d.iter().zip(&bar.d) {
                prop_assert!(a >= b);
                prop_assert!(*a <= 1.0);
            }
            prop_assert!(info.dissipation >= -1e-12);
            bar = next;
        }
    }
}
