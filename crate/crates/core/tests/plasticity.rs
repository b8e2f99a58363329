use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermovar::plasticity::*;
use thermovar::point0d::Algorithm;
use thermovar::{Error, SymTensor3, Tensor3};

const SQRT_2_3: f64 = 0.816_496_580_927_726;

fn random_sym(rng: &mut ChaCha8Rng, scale: f64) -> SymTensor3 {
    SymTensor3(std::array::from_fn(|_| rng.gen_range(-scale..scale)))
}

fn random_dev(rng: &mut ChaCha8Rng, scale: f64) -> SymTensor3 {
    random_sym(rng, scale).deviator()
}

fn unit(k: usize) -> SymTensor3 {
    let mut v = [0.0; 6];
    v[k] = 1.0;
    SymTensor3(v)
}

#[test]
fn reference_state_has_no_forces() {
    let p = PlastParams::default();
    let z = SymTensor3::zero();
    let e = plast_free_energy(&z, &z, 0.0, &[0.0, 0.0], p.theta0, &p).unwrap();
    assert_eq!(e.psi, 0.0);
    assert_eq!(e.sigma_e.max_abs(), 0.0);
    assert_eq!(e.beta_tensor.max_abs(), 0.0);
    assert_eq!(e.beta_local, 0.0);
    assert_eq!(e.eta_tilde, 0.0);
}

#[test]
fn uniaxial_strain_stress_closed_form() {
    let p = PlastParams { alpha_t: 0.0, ..PlastParams::default() };
    let a = 2e-3;
    let e = plast_free_energy(&SymTensor3::diag(a, 0.0, 0.0), &SymTensor3::zero(), 0.0, &[], 300.0, &p).unwrap();
    let expected = SymTensor3::identity().scale(p.kappa * a) + SymTensor3::diag(2.0 * a / 3.0, -a / 3.0, -a / 3.0).scale(2.0 * p.mu);
    assert!((e.sigma_e - expected).max_abs() < 1e-12 * p.kappa);
}

#[test]
fn free_energy_derivatives_match_finite_differences() {
    let p = PlastParams { alpha_t: 1e-4, ..PlastParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let eps = random_sym(&mut rng, 0.05);
        let eps_p = random_dev(&mut rng, 0.05);
        let alpha = rng.gen_range(0.0..0.3);
        let grad = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let theta = rng.gen_range(250.0..400.0);
        let e = plast_free_energy(&eps, &eps_p, alpha, &grad, theta, &p).unwrap();
        let psi = |eps: &SymTensor3, eps_p: &SymTensor3, alpha: f64, theta: f64| {
            plast_free_energy(eps, eps_p, alpha, &grad, theta, &p).unwrap().psi
        };
        let h = 1e-7;
        let sig = e.sigma_e.to_gradient();
        let bet = e.beta_tensor.to_gradient();
        for k in 0..6 {
            let d = unit(k).scale(h);
            let fd = (psi(&(eps + d), &eps_p, alpha, theta) - psi(&(eps - d), &eps_p, alpha, theta)) / (2.0 * h);
            assert!((fd - sig[k]).abs() < 1e-6 * e.sigma_e.max_abs().max(1.0), "sigma {k}");
            let fd = (psi(&eps, &(eps_p + d), alpha, theta) - psi(&eps, &(eps_p - d), alpha, theta)) / (2.0 * h);
            assert!((fd - bet[k]).abs() < 1e-6 * e.beta_tensor.max_abs().max(1.0), "beta {k}");
        }
        let fd = (psi(&eps, &eps_p, alpha + h, theta) - psi(&eps, &eps_p, alpha - h, theta)) / (2.0 * h);
        assert!((fd - e.beta_local).abs() < 1e-6 * e.beta_local.abs().max(1.0));
        let ht = 1e-4;
        let fd = (psi(&eps, &eps_p, alpha, theta + ht) - psi(&eps, &eps_p, alpha, theta - ht)) / (2.0 * ht);
        assert!((fd - e.eta_tilde).abs() < 1e-6 * e.eta_tilde.abs().max(1.0));
    }
}

#[test]
fn free_energy_rejects_non_positive_temperature() {
    let p = PlastParams::default();
    let z = SymTensor3::zero();
    assert!(matches!(plast_free_energy(&z, &z, 0.0, &[], -1.0, &p), Err(Error::NonPositiveTemperature(_))));
}

#[test]
fn yield_function_examples() {
    let p = PlastParams::default();
    let f0 = yield_function(&SymTensor3::zero(), 0.0, p.theta0, &p);
    assert!((f0 + SQRT_2_3 * p.y0).abs() < 1e-12);
    let s = SymTensor3::diag(1.0, -1.0, 0.0).scale(SQRT_2_3 * p.y0 / 2f64.sqrt());
    assert!(yield_function(&s, 0.0, p.theta0, &p).abs() < 1e-12);
    // a uniaxial stress at the yield stress sits on the surface
    let sigma = SymTensor3::diag(p.y0, 0.0, 0.0);
    assert!(yield_function(&sigma.deviator(), 0.0, p.theta0, &p).abs() < 1e-12);
    assert!(yield_function(&sigma.deviator(), 0.0, p.theta0 + 50.0, &p) > 0.0);
}

#[test]
fn parameters_are_validated_and_parsed() {
    assert!(PlastParams::default().validate().is_ok());
    assert!(PlastParams { mu: 0.0, ..PlastParams::default() }.validate().is_err());
    assert!(PlastParams { eta_f: -1.0, ..PlastParams::default() }.validate().is_err());
    let p: PlastParams = toml::from_str("y0 = 300.0\nalpha_T = 0.0\nC = 4.0\n").unwrap();
    assert_eq!((p.y0, p.alpha_t, p.c_heat), (300.0, 0.0, 4.0));
}

#[test]
fn elastic_trial_leaves_the_state() {
    let p = PlastParams::default();
    let state = PlastPointState::initial(&p);
    let trial = SymTensor3::diag(1.0, -1.0, 0.0).scale(-10.0);
    let up = viscous_flow_update(&trial, 0.0, p.theta0, &state, 0.01, 0.0, &p).unwrap();
    assert_eq!(up.eps_p, state.eps_p);
    assert_eq!(up.alpha, state.alpha);
    assert_eq!(up.lambda_eff, 0.0);
}

#[test]
fn one_step_flow_geometry() {
    let p = PlastParams { eta_f: 5.0, ..PlastParams::default() };
    let state = PlastPointState::initial(&p);
    let tau = 0.01;
    let trial = SymTensor3([-300.0, 500.0, -200.0, 120.0, 0.0, -40.0]);
    let up = viscous_flow_update(&trial, 0.0, p.theta0, &state, tau, 0.0, &p).unwrap();
    assert!(up.lambda_eff > 0.0);
    assert!((up.alpha - state.alpha - SQRT_2_3 * tau * up.lambda_eff).abs() < 1e-15);
    assert!(((up.eps_p - state.eps_p).norm() - tau * up.lambda_eff).abs() < 1e-15);
    assert!(up.eps_p.trace().abs() < 1e-15);
    // the converged over-force equals η_f λ
    let converged = trial + (up.eps_p - state.eps_p).scale(2.0 * p.mu);
    let f = yield_function(&converged.scale(-1.0), 0.0, p.theta0, &p);
    assert!((f - p.eta_f * up.lambda_eff).abs() < 1e-9);
}

#[test]
fn vanishing_viscosity_recovers_the_rate_independent_return() {
    let p0 = PlastParams::default();
    let hard = p0.hardening(p0.theta0);
    let state = PlastPointState { alpha: 0.01, ..PlastPointState::initial(&p0) };
    let beta_e = hard * state.alpha;
    let trial = SymTensor3([-400.0, 300.0, 100.0, 150.0, 0.0, 0.0]).scale(1.2);
    let norm = trial.norm();
    // consistency f(Δα) = 0 of the local rate-independent problem, by bisection
    let f = |da: f64| norm - 2.0 * p0.mu * da / SQRT_2_3 - SQRT_2_3 * (p0.y0 + beta_e + hard * da);
    let (mut lo, mut hi) = (0.0, 1.0);
    assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if f(m) > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let exact = 0.5 * (lo + hi);
    let tau = 1e-3;
    let errors: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&eta_f| {
            let p = PlastParams { eta_f, ..p0 };
            let up = viscous_flow_update(&trial, beta_e, p.theta0, &state, tau, hard, &p).unwrap();
            (up.alpha - state.alpha - exact).abs()
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log10();
        assert!((0.9..=1.1).contains(&order), "{errors:?}");
    }
    let p = PlastParams { eta_f: 0.0, ..p0 };
    let up = viscous_flow_update(&trial, beta_e, p.theta0, &state, tau, hard, &p).unwrap();
    assert!((up.alpha - state.alpha - exact).abs() < 1e-14);
}

#[test]
fn intrinsic_dissipation_examples() {
    let p = PlastParams { eta_f: 2.0, ..PlastParams::default() };
    let z = SymTensor3::zero();
    assert_eq!(intrinsic_dissipation_plast(&SymTensor3::diag(1.0, 2.0, -3.0), 5.0, &z, 0.0), 0.0);
    let state = PlastPointState::initial(&p);
    let tau = 0.01;
    let trial = SymTensor3([-500.0, 500.0, 0.0, 100.0, 0.0, 0.0]);
    let beta = 30.0;
    let up = viscous_flow_update(&trial, -beta, p.theta0, &state, tau, 0.0, &p).unwrap();
    let s = (trial + (up.eps_p - state.eps_p).scale(2.0 * p.mu)).scale(-1.0);
    let d = intrinsic_dissipation_plast(&s, beta, &(up.eps_p - state.eps_p).scale(1.0 / tau), (up.alpha - state.alpha) / tau);
    let lower = SQRT_2_3 * up.lambda_eff * p.yield_stress(p.theta0);
    assert!(d >= lower - 1e-12);
    assert!(d > lower);
    // the excess is the over-force term
    assert!((d - lower - p.eta_f * up.lambda_eff * up.lambda_eff).abs() < 1e-9 * d);
}

#[test]
fn conduction_potential_is_quadratic_and_convex() {
    let p = PlastParams::default();
    let c = SymTensor3::diag(1.2, 0.9, 1.0);
    let (v0, q0) = conduction_potential(&[0.0; 3], 300.0, &c, &p).unwrap();
    assert_eq!((v0, q0), (0.0, [0.0; 3]));
    let g = [0.01, -0.02, 0.005];
    let (v, q) = conduction_potential(&g, 300.0, &c, &p).unwrap();
    assert!(v > 0.0);
    let h = 1e-7;
    for i in 0..3 {
        let (mut gp, mut gm) = (g, g);
        gp[i] += h;
        gm[i] -= h;
        let fd = (conduction_potential(&gp, 300.0, &c, &p).unwrap().0 - conduction_potential(&gm, 300.0, &c, &p).unwrap().0) / (2.0 * h);
        assert!((fd - q[i]).abs() < 1e-6 * q[i].abs().max(1e-3));
    }
}

fn random_input(rng: &mut ChaCha8Rng, algorithm: Algorithm) -> PlastDensityInput {
    let mut f = Tensor3::identity();
    for i in 0..2 {
        for j in 0..2 {
            f.0[i][j] += rng.gen_range(-0.02..0.02);
        }
    }
    let history = PlastPointState {
        eps_p: SymTensor3([rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01), 0.0, rng.gen_range(-0.01..0.01), 0.0, 0.0]).deviator(),
        alpha: rng.gen_range(0.0..0.05),
        eta: rng.gen_range(-0.01..0.05),
        theta: rng.gen_range(280.0..340.0),
    };
    PlastDensityInput {
        f,
        alpha: history.alpha + rng.gen_range(0.0..0.01),
        grad_alpha: [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)],
        beta: rng.gen_range(-100.0..100.0),
        history,
        tau: 0.01,
        algorithm,
    }
}

fn perturbed(inp: &PlastDensityInput, a: usize, h: f64) -> PlastDensityInput {
    let mut out = *inp;
    match a {
        0..=3 => out.f.0[a / 2][a % 2] += h,
        4 => out.alpha += h,
        5 | 6 => out.grad_alpha[a - 5] += h,
        _ => out.beta += h,
    }
    out
}

#[test]
fn density_derivatives_match_finite_differences() {
    let p = PlastParams { eta_f: 1.0, ..PlastParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut plastic = 0;
    for alg in [Algorithm::SemiExplicit, Algorithm::Implicit] {
        for _ in 0..50 {
            let inp = random_input(&mut rng, alg);
            let ev = incremental_density_plast(&inp, &p).unwrap();
            plastic += usize::from(ev.gamma > 0.0);
            let gs = ev.gradient.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let hs = ev.hessian.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            for a in 0..8 {
                for b in 0..a {
                    assert!((ev.hessian[a][b] - ev.hessian[b][a]).abs() <= 1e-12 * hs);
                }
                let h = if a < 4 { 1e-7 } else if a == 7 { 1e-4 } else { 1e-6 };
                let ep = incremental_density_plast(&perturbed(&inp, a, h), &p).unwrap();
                let em = incremental_density_plast(&perturbed(&inp, a, -h), &p).unwrap();
                let fd = (ep.value - em.value) / (2.0 * h);
                assert!((fd - ev.gradient[a]).abs() < 1e-6 * gs, "{alg:?} gradient {a}: {fd} vs {}", ev.gradient[a]);
                for b in 0..8 {
                    let fd = (ep.gradient[b] - em.gradient[b]) / (2.0 * h);
                    assert!((fd - ev.hessian[a][b]).abs() < 1e-5 * hs, "{alg:?} hessian {a},{b}: {fd} vs {}", ev.hessian[a][b]);
                }
            }
        }
    }
    assert!(plastic > 10, "only {plastic} plastic samples");
}

#[test]
fn elastic_point_coupling_block() {
    let p = PlastParams::default();
    let history = PlastPointState::initial(&p);
    let inp = PlastDensityInput {
        f: Tensor3::identity(),
        alpha: 0.0,
        grad_alpha: [0.0; 2],
        beta: 0.0,
        history,
        tau: 0.01,
        algorithm: Algorithm::SemiExplicit,
    };
    let ev = incremental_density_plast(&inp, &p).unwrap();
    assert!(ev.gradient.iter().all(|g| g.abs() < 1e-12));
    assert!((ev.hessian[4][4] - p.hardening(p.theta0)).abs() < 1e-9);
    assert_eq!(ev.hessian[4][7], 1.0);
    assert_eq!(ev.hessian[7][7], 0.0);
    assert_eq!(ev.gamma, 0.0);
    let ml2 = p.mu * p.l * p.l;
    assert_eq!((ev.hessian[5][5], ev.hessian[6][6]), (ml2, ml2));
}

#[test]
fn plastic_point_beta_block_is_the_viscous_compliance() {
    let p = PlastParams::default();
    let tau = 0.01;
    let mut f = Tensor3::identity();
    f.0[0][1] = 0.02;
    let inp = PlastDensityInput {
        f,
        alpha: 0.0,
        grad_alpha: [0.0; 2],
        beta: 0.0,
        history: PlastPointState::initial(&p),
        tau,
        algorithm: Algorithm::SemiExplicit,
    };
    let ev = incremental_density_plast(&inp, &p).unwrap();
    assert!(ev.gamma > 0.0);
    let expected = -2.0 / 3.0 / (2.0 * p.mu + p.eta_f / tau);
    assert!((ev.hessian[7][7] - expected).abs() < 1e-12 * expected.abs());
}

#[test]
fn density_rejects_inverted_elements() {
    let p = PlastParams::default();
    let inp = PlastDensityInput {
        f: Tensor3::diag(-1.0, 1.0, 1.0),
        alpha: 0.0,
        grad_alpha: [0.0; 2],
        beta: 0.0,
        history: PlastPointState::initial(&p),
        tau: 0.01,
        algorithm: Algorithm::SemiExplicit,
    };
    assert!(matches!(incremental_density_plast(&inp, &p), Err(Error::NonPositiveJacobian(_))));
}

/// Stationary point of the density in (α, β) at a single point with l = 0,
/// the material-point analogue of the field problem
fn solve_point(f: Tensor3, history: PlastPointState, tau: f64, algorithm: Algorithm, p: &PlastParams) -> PlastDensityEval {
    let mut inp = PlastDensityInput { f, alpha: history.alpha, grad_alpha: [0.0; 2], beta: 0.0, history, tau, algorithm };
    inp.beta = -p.hardening(history.theta) * history.alpha;
    for _ in 0..50 {
        let ev = incremental_density_plast(&inp, p).unwrap();
        let (g1, g2) = (ev.gradient[4], ev.gradient[7]);
        if g1.abs().max(g2.abs()) < 1e-11 {
            return ev;
        }
        let (a, b, d) = (ev.hessian[4][4], ev.hessian[4][7], ev.hessian[7][7]);
        let det = a * d - b * b;
        inp.alpha -= (d * g1 - b * g2) / det;
        inp.beta -= (a * g2 - b * g1) / det;
    }
    panic!("point solve did not converge");
}

fn shear(gamma: f64) -> Tensor3 {
    let mut f = Tensor3::identity();
    f.0[0][1] = gamma;
    f
}

fn shear_history(p: &PlastParams, algorithm: Algorithm, steps: usize, total: f64, tau: f64) -> Vec<(PlastPointState, PlastDensityEval)> {
    let mut state = PlastPointState::initial(p);
    let mut out = Vec::new();
    for k in 1..=steps {
        let ev = solve_point(shear(total * k as f64 / steps as f64), state, tau, algorithm, p);
        out.push((state, ev));
        state = ev.state;
    }
    out
}

#[test]
fn point_solve_matches_the_local_flow_rule() {
    let p = PlastParams { eta_f: 0.5, h0: 500.0, ..PlastParams::default() };
    for (prev, ev) in shear_history(&p, Algorithm::SemiExplicit, 40, 0.02, 0.01) {
        // the field α coincides with the locally accumulated α at a single point
        assert!((ev.state.alpha - prev.alpha - SQRT_2_3 * ev.gamma).abs() < 1e-14);
        assert!(ev.state.eps_p.trace().abs() < 1e-12);
        assert!(ev.state.alpha >= prev.alpha);
        assert!(ev.dissipation >= -1e-12);
        if ev.gamma > 0.0 {
            let lambda = ev.gamma / 0.01;
            assert!(ev.dissipation >= SQRT_2_3 * ev.gamma * p.yield_stress(prev.theta) - 1e-12);
            // β from the α-equation ĥ(θ)α + β = 0 at a single point
            let beta = -p.hardening(ev.state.theta) * ev.state.alpha;
            let f = yield_function(&ev.s, beta, prev.theta, &p);
            assert!(f <= p.eta_f * lambda + 1e-10);
            assert!(f > 0.0);
        }
    }
}

#[test]
fn adiabatic_plastic_flow_heats() {
    let p = PlastParams { alpha_t: 0.0, k: 0.0, ..PlastParams::default() };
    let history = shear_history(&p, Algorithm::SemiExplicit, 40, 0.05, 0.01);
    let mut flowing = 0;
    let mut prev_theta = p.theta0;
    for (prev, ev) in &history {
        if ev.gamma > 0.0 {
            flowing += 1;
            assert!(ev.state.theta >= prev.theta);
        }
        prev_theta = ev.state.theta;
    }
    assert!(flowing > 10);
    assert!(prev_theta > p.theta0);
}

#[test]
fn semi_explicit_entropy_is_the_unscaled_dissipation() {
    let p = PlastParams { eta_f: 0.5, ..PlastParams::default() };
    let total = 0.03;
    let mut discrepancies = Vec::new();
    for steps in [50, 100, 200] {
        let tau = 1.0 / steps as f64;
        let mut sum = 0.0;
        for (prev, ev) in shear_history(&p, Algorithm::SemiExplicit, steps, total, tau) {
            let stored = ev.state.eta - prev.eta;
            let unscaled = scaled_entropy_increment(&ev, prev.theta, 1.0);
            assert!((stored - unscaled).abs() <= 1e-14 * unscaled.abs().max(prev.eta.abs()));
            let rho = ev.state.theta / prev.theta;
            sum += (scaled_entropy_increment(&ev, prev.theta, rho) - stored).abs();
        }
        discrepancies.push(sum);
    }
    for w in discrepancies.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((0.8..=1.2).contains(&order), "{discrepancies:?}");
    }
}

#[test]
fn implicit_state_law_holds_after_the_step() {
    let p = PlastParams { eta_f: 0.5, ..PlastParams::default() };
    let history = shear_history(&p, Algorithm::Implicit, 30, 0.03, 0.01);
    for (_, ev) in &history {
        assert!(ev.state.theta > 0.0);
        assert!(ev.state.eps_p.trace().abs() < 1e-12);
    }
    let (_, last) = history.last().unwrap();
    let f = shear(0.03);
    let eps = thermovar::tensor::HenckyStrain::new(&thermovar::tensor::right_cauchy_green(&f).unwrap()).unwrap().strain;
    let e = plast_free_energy(&eps, &last.state.eps_p, last.state.alpha, &[], last.state.theta, &p).unwrap();
    assert!((e.eta_tilde + last.state.eta).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, .. ProptestConfig::default() })]

    #[test]
    fn local_updates_keep_the_invariants(
        seed in any::<u64>(),
        eta_f in 0.01f64..10.0,
        tau in 1e-3f64..1e-1,
        steps in 1usize..30,
    ) {
        let p = PlastParams { eta_f, ..PlastParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = PlastPointState::initial(&p);
        let mut eps = SymTensor3::zero();
        let hard = p.hardening(p.theta0);
        for _ in 0..steps {
            eps = eps + random_dev(&mut rng, 5e-3);
            let trial = (eps - state.eps_p).deviator().scale(-2.0 * p.mu);
            let beta_e = hard * state.alpha;
            let up = viscous_flow_update(&trial, beta_e, p.theta0, &state, tau, hard.max(0.0), &p).unwrap();
            prop_assert!(up.eps_p.trace().abs() <= 1e-12);
            prop_assert!(up.alpha >= state.alpha);
            prop_assert!((tau * up.lambda_eff - (up.alpha - state.alpha) / SQRT_2_3).abs() <= 1e-12);
            let converged = trial + (up.eps_p - state.eps_p).scale(2.0 * p.mu);
            let beta_conv = beta_e + hard.max(0.0) * (up.alpha - state.alpha);
            let f = yield_function(&converged.scale(-1.0), -beta_conv, p.theta0, &p);
            prop_assert!(f <= p.eta_f * up.lambda_eff + 1e-10);
            state.eps_p = up.eps_p;
            state.alpha = up.alpha;
        }
    }
}
