mod common;

use annular::certify::{certify, CertifyOutcome, SearchConfig};
use annular::lmi::{
    gamma_condition_slack, phi, sup_exp_bound, Extremum, HkmEngine, PForm, Side, VarLayout,
};
use annular::lyapunov::{alpha_lower, alpha_upper, eval_v, AlphaStrategy, LyapunovParams};
use annular::model::{QueryKind, SectorIntegralBounds, StabilityQuery};
use annular::rnn::{augment_bias, augmented_initial_state, ctrnn_to_persidskii, tanh_bounds, Ctrnn};
use annular::simulate::{integrate, integrate_fn, sample_annulus, vdot_identity_residual, InputSignal, IntegratorConfig};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vdot_identity_holds(seed in any::<u64>(), remark1 in any::<bool>(), upper in any::<bool>()) {
        let mut r = rng(seed);
        let sys = random_system(&mut r);
        let v = random_vars(&mut r, &sys);
        let side = if upper { Side::Upper } else { Side::Lower };
        for _ in 0..5 {
            let x = uniform_vector(&mut r, sys.n(), 2.0);
            let u = uniform_vector(&mut r, sys.n(), 2.0);
            let res = vdot_identity_residual(&sys, side, &v, &x, &u, remark1, None);
            prop_assert!(res <= 1e-10, "residual {res}");
        }
    }

    #[test]
    fn sup_bound_dominates_grid(a in 0.0f64..5.0, c in 0.0f64..5.0, beta in -5.0f64..5.0, t in 0.01f64..3.0) {
        let sup = sup_exp_bound(a, c, beta, t, Extremum::Sup);
        let inf = sup_exp_bound(a, c, beta, t, Extremum::Inf);
        for k in 0..=200 {
            let s = t * k as f64 / 200.0;
            let g = (beta * s).exp();
            let scale = 1.0 + sup.abs().max(inf.abs());
            prop_assert!(a * g + c * phi(beta, s) <= sup + 1e-12 * scale);
            prop_assert!(a * g - c * phi(beta, s) >= inf - 1e-12 * scale);
        }
    }

    #[test]
    fn gamma_slack_is_monotone(
        start in 0.0f64..2.0, target in 0.0f64..2.0, g in 0.0f64..2.0, g0 in 0.0f64..3.0,
        beta in -3.0f64..3.0, t in 0.1f64..2.0, interval in any::<bool>(), d in 0.0f64..1.0,
    ) {
        let up = |st: f64, tg: f64, gm: f64| gamma_condition_slack(Side::Upper, interval, st, tg, gm, g0, beta, t);
        prop_assert!(up(start, target + d, g) >= up(start, target, g));
        prop_assert!(up(start, target, g + d) <= up(start, target, g) + 1e-12);
        prop_assert!(up(start + d, target, g) <= up(start, target, g) + 1e-12);
        let lo = |st: f64, tg: f64, gm: f64| gamma_condition_slack(Side::Lower, interval, st, tg, gm, g0, beta, t);
        prop_assert!(lo(start, target + d, g) <= lo(start, target, g));
        prop_assert!(lo(start, target, g + d) <= lo(start, target, g) + 1e-12);
        prop_assert!(lo(start + d, target, g) >= lo(start, target, g) - 1e-12);
    }

    #[test]
    fn pack_unpack_round_trip(seed in any::<u64>(), form_ix in 0usize..3, upper in any::<bool>(), beta in -2.0f64..2.0) {
        let mut r = rng(seed);
        let sys = random_system(&mut r);
        let form = [PForm::Full, PForm::OutputSplit, PForm::OutputOnly][form_ix];
        let side = if upper { Side::Upper } else { Side::Lower };
        let layout = VarLayout::new(&sys, side, form, beta);
        let x: Vec<f64> = (0..layout.len()).map(|_| r.random_range(-3.0..3.0)).collect();
        let v = layout.unpack(&sys, &x);
        prop_assert_eq!(layout.pack(&v), x);
    }

    #[test]
    fn sector_integral_sandwich(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sys = random_system(&mut r);
        let lambdas: Vec<DVector<f64>> = sys.widths().iter().map(|&k| DVector::from_fn(k, |_, _| r.random_range(0.0..2.0))).collect();
        let b = SectorIntegralBounds::generate(&sys.families(), sys.n(), &lambdas);
        let h = sys.h_mats();
        for _ in 0..10 {
            let x = uniform_vector(&mut r, sys.n(), 3.0);
            let nu = sys.arguments(&x);
            let f = sys.nonlinear_terms(&x);
            for i in 0..sys.m() {
                let (lo, mid, hi) = b.sandwich(i, &nu, &f, &h, &lambdas[i], &sys.blocks[i].family);
                let tol = 1e-10 * (1.0 + mid.abs());
                prop_assert!(lo <= mid + tol && mid <= hi + tol, "{lo} {mid} {hi}");
            }
        }
    }

    #[test]
    fn class_k_sandwich(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sys = random_system(&mut r);
        let params = LyapunovParams {
            p: spd(&mut r, sys.n()),
            lambda: sys.widths().iter().map(|&k| DVector::from_fn(k, |_, _| r.random_range(0.0..2.0))).collect(),
            rho: 0.0,
        };
        let lo = alpha_lower(&params, &sys, &AlphaStrategy::QuadraticCertified).unwrap();
        let hi = alpha_upper(&params, &sys).unwrap();
        for _ in 0..10 {
            let x = uniform_vector(&mut r, sys.n(), 3.0);
            let v = eval_v(&params, &sys, &x).unwrap();
            let s = x.norm();
            let tol = 1e-10 * (1.0 + v.abs());
            prop_assert!(lo.eval(s) <= v + tol && v <= hi.eval(s) + tol);
        }
    }

    #[test]
    fn annulus_samples_stay_in_annulus(seed in any::<u64>(), n in 1usize..6, e1 in 0.0f64..1.0, w in 0.01f64..2.0) {
        let mut r = rng(seed);
        let x = sample_annulus(&mut r, n, e1, e1 + w);
        let s = x.norm();
        prop_assert!(s >= e1 * (1.0 - 1e-12) && s <= (e1 + w) * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ctrnn_and_persidskii_trajectories_agree(seed in any::<u64>(), biased in any::<bool>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=3);
        let big_n = r.random_range(n..=6);
        let net = Ctrnn {
            a: -DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| r.random_range(0.5..3.0))),
            w0: uniform_matrix(&mut r, n, big_n, 1.0),
            w1: uniform_matrix(&mut r, big_n, n, 1.0),
            b0: biased.then(|| uniform_vector(&mut r, big_n, 1.0)),
            c: uniform_matrix(&mut r, 1, n, 1.0),
            activation: annular::model::ScalarNonlinearity::Tanh,
        };
        let chi0 = uniform_vector(&mut r, n, 1.0);
        let u = InputSignal::Constant { value: uniform_vector(&mut r, n, 1.0).iter().copied().collect() };
        let cfg = IntegratorConfig { rtol: 1e-10, atol: 1e-10, ..Default::default() };
        let (_, states, _, _) = integrate_fn(|t, x| net.rhs(x, &u.eval(t)), &chi0, 0.0, 1.0, &[], &cfg).unwrap();
        let direct = states.last().unwrap().clone();
        let (sys, x0, u_sys) = if biased {
            let mut v = vec![0.0; n + big_n];
            v[..n].copy_from_slice(u.eval(0.0).as_slice());
            (augment_bias(&net).unwrap(), augmented_initial_state(&net, &chi0), InputSignal::Constant { value: v })
        } else {
            (ctrnn_to_persidskii(&net).unwrap(), chi0.clone(), u.clone())
        };
        let traj = integrate(&sys, &x0, &u_sys, 1.0, &cfg).unwrap();
        let end = traj.final_state();
        prop_assert!((end.rows(0, n) - &direct).norm() <= 1e-7 * (1.0 + direct.norm()));
        let y_direct = &net.c * &direct;
        prop_assert!((traj.output_at(1.0) - y_direct).norm() <= 1e-7 * (1.0 + direct.norm()));
    }

    #[test]
    fn tanh_bounds_sandwich(seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = r.random_range(1..=50);
        let lambda = DVector::from_fn(k, |_, _| r.random_range(0.0..3.0));
        let b = tanh_bounds(&lambda);
        let fam = annular::model::NonlinearityFamily::tanh(k);
        for _ in 0..60 {
            let nu = vec![uniform_vector(&mut r, k, 6.0)];
            let f = vec![nu[0].map(f64::tanh)];
            let h = vec![DMatrix::identity(k, k)];
            let (lo, mid, hi) = b.sandwich(0, &nu, &f, &h, &lambda, &fam);
            prop_assert!(lo <= mid + 1e-12 && mid <= hi + 1e-10 * (1.0 + hi));
        }
    }
}

#[test]
fn certify_is_deterministic() {
    let sys = scalar_tanh();
    let q = StabilityQuery::stbnz(1.0, 0.5, 1.0, 1.0);
    let cfg = SearchConfig::default();
    let a = certify(&sys, &q, &cfg, &HkmEngine::default()).unwrap();
    let b = certify(&sys, &q, &cfg, &HkmEngine::default()).unwrap();
    let (CertifyOutcome::Certified { certificate: ca, .. }, CertifyOutcome::Certified { certificate: cb, .. }) = (&a, &b) else {
        panic!("scalar STBNZ query should certify");
    };
    assert_eq!(ca.upper, cb.upper);
    assert_eq!(a.trace(), b.trace());
}

#[test]
fn certificates_respect_query_monotonicity() {
    // a certificate for δ₂ also certifies any larger δ₂
    let sys = scalar_tanh();
    let cfg = SearchConfig::default();
    let mut prev = false;
    for d2 in [0.55, 0.7, 1.0, 1.5, 3.0] {
        let q = StabilityQuery::new(QueryKind::Stbnz, 1.0, (0.0, 0.5), (0.0, d2), 1.0);
        let ok = certify(&sys, &q, &cfg, &HkmEngine::default()).unwrap().certificate().is_some();
        assert!(ok || !prev, "certified at a smaller δ₂ but not at {d2}");
        prev = ok;
    }
    assert!(prev);
}
