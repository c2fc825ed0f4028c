use proptest::prelude::*;

use lyapdim::bounds::{mackey_glass_bound, LambdaMode};
use lyapdim::charroots::{char_roots, CharProblem};
use lyapdim::dde::{
    integrate, integrate_with_estimate, invariant_ball_check, numerical_lyapunov_spectrum, DelayModel, HistorySegment,
    LinearDelay, LyapunovConfig, MackeyGlass, SuarezSchopf,
};

fn smooth_history(tau: f64) -> HistorySegment {
    HistorySegment::from_fn(1, tau, 1700, |t| vec![0.9 + 0.2 * (0.3 * t).sin()], |t| vec![0.06 * (0.3 * t).cos()])
        .unwrap()
}

#[test]
fn step_halving_is_fourth_order() {
    let model = MackeyGlass::classical(17.0);
    let h = smooth_history(17.0);
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| integrate_with_estimate(&model, &h, 34.0, dt).unwrap().halving_error.unwrap())
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 3.5, "{errs:?}");
    }
}

#[test]
fn linear_exponents_are_root_real_parts() {
    let model = LinearDelay::scalar(-0.5, -1.0, 2.0).unwrap();
    let h = HistorySegment::from_fn(1, 2.0, 200, |t| vec![(1.7 * t).cos()], |t| vec![-1.7 * (1.7 * t).sin()]).unwrap();
    let mut cfg = LyapunovConfig::new(0.05, 4000.0, 4);
    cfg.burn_in_delays = 0.0;
    let spec = numerical_lyapunov_spectrum(&model, &h, &cfg).unwrap();
    let roots = char_roots(&CharProblem::new(-0.5, -1.0, 2.0).unwrap(), 4).unwrap();
    let mut want = Vec::new();
    for p in &roots.roots {
        if p.im > 1e-12 {
            want.extend([p.re, p.re]);
        } else if p.im.abs() <= 1e-12 {
            want.push(p.re);
        }
    }
    for (got, w) in spec.exponents.iter().zip(&want[..4]) {
        assert!((got - w).abs() <= 1e-3, "{:?} vs {want:?}", spec.exponents);
    }
}

#[test]
fn numerical_dimension_stays_below_bound() {
    let model = MackeyGlass::classical(17.0);
    let cfg = LyapunovConfig::new(0.1, 5000.0, 6);
    let spec = numerical_lyapunov_spectrum(&model, &smooth_history(17.0), &cfg).unwrap();
    let bound = mackey_glass_bound(0.2, 0.1, 10.0, 17.0, LambdaMode::Rough).unwrap();
    let ky = spec.kaplan_yorke.unwrap();
    assert!(ky >= 1.0 && ky <= bound.d_star, "KY {ky} vs {}", bound.d_star);
    assert!(spec.exponents[0] > 0.0);
}

#[test]
fn stable_regime_has_negative_leading_exponent() {
    let model = MackeyGlass::classical(2.0);
    let h = HistorySegment::constant(&[0.7], 2.0, 20).unwrap();
    let mut cfg = LyapunovConfig::new(0.1, 400.0, 2);
    cfg.burn_in_delays = 20.0;
    let spec = numerical_lyapunov_spectrum(&model, &h, &cfg).unwrap();
    assert!(spec.exponents[0] < 0.0, "{:?}", spec.exponents);
    assert_eq!(spec.kaplan_yorke, Some(0.0));
}

#[test]
fn ball_check_rejects_a_radius_below_the_attractor() {
    let model = MackeyGlass::classical(17.0);
    let small = invariant_ball_check(&model, 0.5, 8, 20.0 * 17.0, 0.1, 3).unwrap();
    assert!(!small.pass && small.witness.is_some());
    assert!(small.max_sup_norm > 0.5);
}

#[test]
fn suarez_schopf_equilibria_solve_the_fixed_point_equation() {
    let model = SuarezSchopf::new(0.75, 0.0, 1.6).unwrap();
    let eq = model.equilibria();
    assert_eq!(eq.len(), 3);
    for x in eq {
        assert!((x - 0.75 * x - x.powi(3)).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mackey_glass_stays_positive_and_bounded(c in 0.05f64..1.4, amp in 0.0f64..0.04, tau in 5.0f64..30.0) {
        let tau = (tau * 10.0).round() / 10.0;
        let model = MackeyGlass::classical(tau);
        let h = HistorySegment::from_fn(1, tau, 10 * tau as usize, |t| vec![c + amp * t.sin()], |t| vec![amp * t.cos()]);
        prop_assume!(h.is_ok());
        let tr = integrate(&model, &h.unwrap(), 10.0 * tau, 0.1).unwrap();
        prop_assert!(tr.rows(1).all(|(_, x)| x[0] > 0.0));
        prop_assert!(tr.sup_norm_from(tau) <= 1.45);
    }

    #[test]
    fn linear_flow_is_linear(s in -3.0f64..3.0) {
        let model = LinearDelay::scalar(-0.3, 0.8, 1.0).unwrap();
        let f = |t: f64| vec![(2.0 * t).sin() + 0.5];
        let df = |t: f64| vec![2.0 * (2.0 * t).cos()];
        let h1 = HistorySegment::from_fn(1, 1.0, 20, f, df).unwrap();
        let hs = HistorySegment::from_fn(1, 1.0, 20, |t| vec![s * f(t)[0]], |t| vec![s * df(t)[0]]).unwrap();
        let a = integrate(&model, &h1, 5.0, 0.05).unwrap();
        let b = integrate(&model, &hs, 5.0, 0.05).unwrap();
        for k in 0..a.nodes() {
            prop_assert!((s * a.node_value(k)[0] - b.node_value(k)[0]).abs() <= 1e-12 * (1.0 + s.abs()));
        }
        prop_assert_eq!(model.dim(), 1);
    }
}
