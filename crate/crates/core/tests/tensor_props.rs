use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lyapdim::tensor::{
    binomial, compound_additive, compound_multiplicative, omega_d, operator_norm, singular_values,
    sorted_hermitian_eigenvalues, trace_numbers, wedge_gram, WedgeIndex,
};

fn matrix(seed: u64, n: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

fn complex_matrix(seed: u64, n: usize) -> DMatrix<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// All permutations of `0..m` with their signs.
fn permutations(m: usize) -> Vec<(Vec<usize>, f64)> {
    if m == 0 {
        return vec![(vec![], 1.0)];
    }
    let mut out = Vec::new();
    for (p, s) in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            // inserting at `pos` moves the new largest element past `len − pos` entries
            let sign = if (p.len() - pos) % 2 == 0 { s } else { -s };
            out.push((q, sign));
        }
    }
    out
}

fn leibniz_det(a: &DMatrix<f64>) -> f64 {
    permutations(a.nrows())
        .iter()
        .map(|(p, s)| s * p.iter().enumerate().map(|(i, &j)| a[(i, j)]).product::<f64>())
        .sum()
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

#[test]
fn wedge_gram_matches_permutation_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(1..=n);
        let g = matrix(rng.gen(), n);
        let metric = &g * g.transpose() + DMatrix::identity(n, n);
        let u: Vec<DVector<f64>> = (0..m).map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let v: Vec<DVector<f64>> = (0..m).map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let mut want = 0.0;
        for (p, s) in permutations(m) {
            want += s * (0..m).map(|i| v[p[i]].dot(&(&metric * &u[i]))).product::<f64>();
        }
        want /= factorial(m);
        let got = wedge_gram(&u, &v, &metric).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn compound_entries_are_minors() {
    let a = matrix(5, 5);
    for m in 1..=5 {
        let c = compound_multiplicative(&a, m).unwrap();
        let idx = WedgeIndex::new(5, m).unwrap();
        for (r, rows) in idx.tuples().iter().enumerate() {
            for (k, cols) in idx.tuples().iter().enumerate() {
                let sub = DMatrix::from_fn(m, m, |i, j| a[(rows[i], cols[j])]);
                assert!((c[(r, k)] - leibniz_det(&sub)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn small_examples() {
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 5.0]));
    let c = compound_multiplicative(&d, 2).unwrap();
    assert_eq!(c, DMatrix::from_diagonal(&DVector::from_vec(vec![6.0, 10.0, 15.0])));
    let s = compound_additive(&d, 2).unwrap();
    assert_eq!(s, DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 7.0, 8.0])));
    let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.25]));
    assert!((omega_d(&diag, 2.5).unwrap() - 2.0).abs() < 1e-14);
    assert_eq!(omega_d(&diag, 0.0).unwrap(), 1.0);
    assert!(omega_d(&diag, -0.1).is_err());
    assert_eq!(singular_values(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -2.0]))).values(), &[3.0, 2.0]);
    assert_eq!(binomial(6, 3), 20);
    assert!(trace_numbers(&diag, 4).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn compound_norm_is_product_of_singular_values(seed in any::<u64>(), n in 1usize..=6) {
        let l = matrix(seed, n);
        let sv = singular_values(&l);
        for m in 1..=n {
            let want: f64 = sv.values()[..m].iter().product();
            let got = operator_norm(&compound_multiplicative(&l, m).unwrap());
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1e-300));
        }
    }

    #[test]
    fn complex_compound_is_multiplicative(seed in any::<u64>(), n in 2usize..=5) {
        let (a, b) = (complex_matrix(seed, n), complex_matrix(seed ^ 1, n));
        for m in 1..=n {
            let lhs = compound_multiplicative(&(&a * &b), m).unwrap();
            let rhs = compound_multiplicative(&a, m).unwrap() * compound_multiplicative(&b, m).unwrap();
            prop_assert!((lhs - rhs).iter().all(|z| z.norm() <= 1e-11));
        }
    }

    #[test]
    fn horn_inequality(seed in any::<u64>(), n in 2usize..=6, frac in 0.0f64..1.0) {
        let (a, b) = (matrix(seed, n), matrix(seed ^ 7, n));
        let d = frac * n as f64;
        let lhs = omega_d(&(&a * &b), d).unwrap();
        let rhs = omega_d(&a, d).unwrap() * omega_d(&b, d).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn omega_interpolates_between_integers(seed in any::<u64>(), n in 2usize..=6, m in 0usize..6, gamma in 0.0f64..1.0) {
        prop_assume!(m < n);
        let l = matrix(seed, n);
        let lo = omega_d(&l, m as f64).unwrap();
        let hi = omega_d(&l, (m + 1) as f64).unwrap();
        let mid = omega_d(&l, m as f64 + gamma).unwrap();
        let want = lo.powf(1.0 - gamma) * hi.powf(gamma);
        prop_assert!((mid - want).abs() <= 1e-12 * want.max(1e-300));
    }

    #[test]
    fn additive_compound_spectrum_of_symmetric(seed in any::<u64>(), n in 2usize..=6) {
        let a = matrix(seed, n);
        let s = (&a + a.transpose()) * 0.5;
        let eig = sorted_hermitian_eigenvalues(&s);
        for m in 1..=n {
            let top = sorted_hermitian_eigenvalues(&compound_additive(&s, m).unwrap())[0];
            prop_assert!((top - eig[..m].iter().sum::<f64>()).abs() <= 1e-9);
        }
    }

    #[test]
    fn additive_compound_generates_multiplicative(seed in any::<u64>(), n in 2usize..=5) {
        let t = matrix(seed, n);
        for m in 1..=n {
            let lhs = (compound_additive(&t, m).unwrap() * 0.3).exp();
            let rhs = compound_multiplicative(&(&t * 0.3).exp(), m).unwrap();
            prop_assert!((&lhs - &rhs).amax() <= 1e-9 * rhs.amax().max(1.0));
        }
    }

    #[test]
    fn trace_numbers_are_nonincreasing_and_sum_to_trace(seed in any::<u64>(), n in 1usize..=6) {
        let a = matrix(seed, n);
        let beta = trace_numbers(&a, n).unwrap();
        prop_assert!(beta.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((beta.iter().sum::<f64>() - a.trace()).abs() <= 1e-12);
    }

    #[test]
    fn trace_numbers_dominate_random_frames(seed in any::<u64>(), n in 2usize..=6) {
        let a = matrix(seed, n);
        let beta = trace_numbers(&a, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 99);
        for _ in 0..50 {
            let k = rng.gen_range(1..=n);
            let q = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
            let tr = (q.transpose() * &a * &q).trace();
            prop_assert!(tr <= beta[..k].iter().sum::<f64>() + 1e-12);
        }
    }

    #[test]
    fn skew_matrices_have_zero_trace_numbers(seed in any::<u64>(), n in 1usize..=6) {
        let a = matrix(seed, n);
        let skew = &a - a.transpose();
        prop_assert!(trace_numbers(&skew, n).unwrap().iter().all(|b| b.abs() <= 1e-14));
    }
}
