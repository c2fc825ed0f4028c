use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lyapdim::charroots::{
    argument_principle_count, asymptotic_slope, certified_count_right_of, char_roots, linear_fit, local_dimension,
    log_grid, pseudospectral_seeds, unstable_count, CharProblem, Quantity,
};

fn top_real_parts(mut z: Vec<Complex64>, n: usize) -> Vec<f64> {
    z.sort_by(|a, b| b.re.total_cmp(&a.re));
    z.iter().take(n).map(|p| p.re).collect()
}

#[test]
fn argument_principle_matches_root_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases = 0;
    while cases < 10 {
        let prob =
            CharProblem::new(rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.5..5.0)).unwrap();
        let c = rng.gen_range(-0.5..0.2);
        let rs = char_roots(&prob, 40).unwrap();
        let re = rs.real_parts();
        // the requested roots must reach past the line
        if re.last().is_none_or(|&r| r > c) || re.iter().any(|r| (r - c).abs() < 1e-6) {
            continue;
        }
        let counted = re.iter().filter(|&&r| r > c).count() as i64;
        assert_eq!(certified_count_right_of(&prob, c).unwrap(), counted, "{prob:?} c={c}");
        cases += 1;
    }
}

#[test]
fn rectangle_count_matches_roots_inside() {
    let prob = CharProblem::mackey_glass_symmetric(0.2, 0.1, 10.0, 22.0).unwrap();
    let rs = char_roots(&prob, 30).unwrap();
    let (re_lo, re_hi, im_lo, im_hi) = (-0.05, 1.0, 0.01, 1.2);
    let inside = rs.roots.iter().filter(|p| p.re > re_lo && p.re < re_hi && p.im > im_lo && p.im < im_hi).count();
    assert_eq!(argument_principle_count(&prob, re_lo, re_hi, im_lo, im_hi).unwrap(), inside as i64);
}

#[test]
fn pseudospectral_refinement_converges() {
    for prob in [
        CharProblem::mackey_glass_symmetric(0.2, 0.1, 10.0, 22.0).unwrap(),
        CharProblem::mackey_glass_zero(0.2, 0.1, 17.0).unwrap(),
        CharProblem::suarez_schopf_symmetric(0.75, 1.596).unwrap(),
        CharProblem::new(-0.5, -1.0, 2.0).unwrap(),
    ] {
        let coarse = top_real_parts(pseudospectral_seeds(&prob, 96), 10);
        let fine = top_real_parts(pseudospectral_seeds(&prob, 192), 10);
        let gap = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-9, "{prob:?}: {gap:e}");
    }
}

#[test]
fn real_root_matches_bisection() {
    // for b > 0 the dominant root is real and h is monotone on the real line
    let prob = CharProblem::new(-0.3, 0.8, 1.7).unwrap();
    let h = |x: f64| prob.a + prob.b * (-prob.tau * x).exp() - x;
    let (mut lo, mut hi) = (-0.3, 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rs = char_roots(&prob, 1).unwrap();
    assert!((rs.roots[0].re - lo).abs() < 1e-12 && rs.roots[0].im == 0.0);
}

#[test]
fn small_examples() {
    let ode = char_roots(&CharProblem::new(-1.0, 0.0, 1.0).unwrap(), 1).unwrap();
    assert!((ode.roots[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    let zero = char_roots(&CharProblem::mackey_glass_zero(0.2, 0.1, 22.0).unwrap(), 12).unwrap();
    assert_eq!(unstable_count(&zero).unwrap(), 1);
    let ld = local_dimension(&zero).unwrap();
    assert!(ld > 3.0 && ld < 4.0, "{ld}");
    let g = log_grid(10.0, 500.0, 12);
    let fit = linear_fit(&g, &g.iter().map(|x| 0.3 * x + 2.0).collect::<Vec<_>>()).unwrap();
    assert!((fit.slope - 0.3).abs() < 1e-12 && (fit.intercept - 2.0).abs() < 1e-9);
}

/// Large-delay limit of the local-dimension slope. Roots with `Im p ≈ ω`
/// have `τ Re p → ln(|b| / |iω − a|)` at density `τ/2π`, plus a real root
/// near `a` when `a > 0`; the slope is `Ω/π` where the real parts sum to zero.
fn limiting_local_slope(a: f64, b: f64) -> f64 {
    let mu = |w: f64| (b.abs() / a.hypot(w)).ln();
    let integral = |w_max: f64| {
        let n = 4000;
        let h = w_max / n as f64;
        (0..=n)
            .map(|i| {
                mu(i as f64 * h)
                    * h
                    * if i == 0 || i == n {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    }
                    / 3.0
            })
            .sum::<f64>()
    };
    let balance = |w: f64| a.max(0.0) * std::f64::consts::PI + integral(w);
    let (mut lo, mut hi) = (1e-9, 50.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / std::f64::consts::PI
}

#[test]
fn slope_matches_large_delay_root_density() {
    let taus = log_grid(100.0, 500.0, 8);
    for (a, b) in [(-0.1, -0.4), (0.25, -0.75), (1.0, -0.75)] {
        let fit = asymptotic_slope(|t| CharProblem::new(a, b, t), Quantity::LocalDimension, &taus).unwrap();
        let want = limiting_local_slope(a, b);
        assert!((fit.slope - want).abs() < 5e-3, "a={a} b={b}: {} vs {want}", fit.slope);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residuals_and_conjugate_pairs(a in -1.0f64..1.0, b in -2.0f64..2.0, tau in 0.3f64..10.0) {
        let prob = CharProblem::new(a, b, tau).unwrap();
        let rs = char_roots(&prob, 12).unwrap();
        for (p, r) in rs.roots.iter().zip(&rs.residuals) {
            prop_assert!(*r <= 1e-10 * (1.0 + p.norm()));
            prop_assert!((prob.h(*p).norm() - r).abs() <= 1e-12 * (1.0 + p.norm()));
            if p.im.abs() > 1e-8 {
                let gap = rs.roots.iter().map(|q| (q - p.conj()).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(gap < 1e-8);
            }
        }
        prop_assert!(rs.roots.windows(2).all(|w| w[0].re >= w[1].re));
    }
}
