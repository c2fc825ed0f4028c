//! Property suites run by `lyapdim verify`. Each check compares a module
//! result against an independent computation or a closed form.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{
    lambert_root, mackey_glass_bound, mackey_glass_r0, mackey_glass_scaled, suarez_schopf_bound, suarez_schopf_scaled,
    LambdaMode,
};
use crate::charroots::{certified_count_right_of, char_roots, local_dimension, unstable_count, CharProblem};
use crate::cocycle::{
    evp_finite_base, kaplan_yorke, liouville_check, product_log_omegas, uniform_exponents, MatrixCocycle,
    DEFAULT_HORIZON_TOL,
};
use crate::dde::{
    integrate, invariant_ball_check, linearized_monodromy, monodromy_multipliers, propagate_tangent, HistorySegment,
    LinearDelay, MackeyGlass,
};
use crate::delayop::{symmetrized_matrix, trace_number_probe, DelayOperatorSpec, WeightProfile};
use crate::error::{Error, Result};
use crate::tensor::{
    compound_additive, compound_multiplicative, omega_d, operator_norm, singular_values, sorted_hermitian_eigenvalues,
    trace_numbers,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Tensor,
    Cocycle,
    Delayop,
    Bounds,
    Dde,
    Charroots,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Tensor, Suite::Cocycle, Suite::Delayop, Suite::Bounds, Suite::Dde, Suite::Charroots];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Tensor => "tensor",
            Suite::Cocycle => "cocycle",
            Suite::Delayop => "delayop",
            Suite::Bounds => "bounds",
            Suite::Dde => "dde",
            Suite::Charroots => "charroots",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.iter().copied().find(|x| x.name() == s).ok_or_else(|| Error::input(format!("unknown suite {s}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check { name, pass: false, detail: format!("error: {e}") },
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<Check> {
    match suite {
        Suite::Tensor => tensor_suite(seed),
        Suite::Cocycle => cocycle_suite(seed),
        Suite::Delayop => delayop_suite(),
        Suite::Bounds => bounds_suite(),
        Suite::Dde => dde_suite(seed),
        Suite::Charroots => charroots_suite(seed),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

fn tensor_suite(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats: Vec<DMatrix<f64>> = (0..100).map(|i| random_matrix(&mut rng, 2 + i % 5)).collect();
    let mut out = Vec::new();
    out.push(check("compound_norm_identity", || {
        let mut worst: f64 = 0.0;
        for l in &mats {
            let sv = singular_values(l);
            for m in 1..=l.nrows() {
                let c = compound_multiplicative(l, m)?;
                let prod: f64 = sv.values()[..m].iter().product();
                worst = worst.max((operator_norm(&c) - prod).abs() / prod.max(1e-300));
            }
        }
        Ok((worst <= 1e-9, format!("max rel err {worst:.2e}")))
    }));
    out.push(check("cauchy_binet", || {
        let mut worst: f64 = 0.0;
        for pair in mats.chunks(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.nrows() != b.nrows() {
                continue;
            }
            for m in 1..=a.nrows() {
                let lhs = compound_multiplicative(&(a * b), m)?;
                let rhs = compound_multiplicative(a, m)? * compound_multiplicative(b, m)?;
                worst = worst.max((lhs - rhs).amax());
            }
        }
        Ok((worst <= 1e-12, format!("max abs err {worst:.2e}")))
    }));
    out.push(check("horn_inequality", || {
        let mut violations = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..200 {
            let n = rng.gen_range(2..=6);
            let (a, b) = (random_matrix(&mut rng, n), random_matrix(&mut rng, n));
            let d = rng.gen_range(0.0..n as f64);
            if omega_d(&(&a * &b), d)? > omega_d(&a, d)? * omega_d(&b, d)? * (1.0 + 1e-12) + 1e-12 {
                violations += 1;
            }
        }
        Ok((violations == 0, format!("{violations} violations")))
    }));
    out.push(check("trace_numbers_dominate_frames", || {
        let mut violations = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        for _ in 0..40 {
            let n = rng.gen_range(2..=6);
            let a = random_matrix(&mut rng, n);
            let beta = trace_numbers(&a, n)?;
            for _ in 0..20 {
                let k = rng.gen_range(1..=n);
                let q = random_matrix(&mut rng, n).columns(0, k).into_owned().qr().q();
                let tr = (q.transpose() * &a * &q).trace();
                if tr > beta[..k].iter().sum::<f64>() + 1e-12 {
                    violations += 1;
                }
            }
        }
        Ok((violations == 0, format!("{violations} violations")))
    }));
    out.push(check("additive_compound_spectrum", || {
        let mut worst: f64 = 0.0;
        for l in &mats {
            let s = (l + l.transpose()) * 0.5;
            let eig = sorted_hermitian_eigenvalues(&s);
            for m in 1..=s.nrows() {
                let top = sorted_hermitian_eigenvalues(&compound_additive(&s, m)?)[0];
                worst = worst.max((top - eig[..m].iter().sum::<f64>()).abs());
            }
        }
        Ok((worst <= 1e-9, format!("max abs err {worst:.2e}")))
    }));
    out
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(v))
}

fn cocycle_suite(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let ule = || {
        MatrixCocycle::from_equilibria(
            &[diag(&[1.0, -1.0, -1.0]), diag(&[0.5, 0.0, -1.0]), diag(&[0.2, 0.2, 0.2])],
            0.5,
        )
    };
    out.push(check("nonmonotone_exponents", || {
        let rep = uniform_exponents(&ule()?, 3, 1.0, DEFAULT_HORIZON_TOL)?;
        let err = rep.lambdas.iter().zip([1.0, -0.5, 0.1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let ky = kaplan_yorke(&rep.lambdas, 3);
        Ok((err <= 1e-12 && ky == 3.0, format!("λ = {:?}, KY = {ky}", rep.lambdas)))
    }));
    out.push(check("evp_max_over_equilibria", || {
        let coc = ule()?;
        let mut worst: f64 = 0.0;
        for m in 1..=3 {
            let r = evp_finite_base(&coc, m, 4.0)?;
            worst = worst.max((r.max_rate - r.uniform_rate).abs());
        }
        Ok((worst <= 1e-12, format!("max gap {worst:.2e}")))
    }));
    out.push(check("qr_volume_matches_svd", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let mats: Vec<DMatrix<f64>> = (0..12).map(|_| random_matrix(&mut rng, 4) * 0.9).collect();
        let refs: Vec<&DMatrix<f64>> = mats.iter().collect();
        let prod = mats.iter().fold(DMatrix::identity(4, 4), |acc, m| m * acc);
        let sv = singular_values(&prod);
        let g = product_log_omegas(&refs, 3, 1)?;
        let want: f64 = sv.values()[..3].iter().map(|s| s.ln()).sum();
        let err = (g.log_volume - want).abs() / want.abs().max(1.0);
        Ok((err <= 1e-9, format!("rel err {err:.2e}")))
    }));
    out.push(check("liouville_trace_formula", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let (a0, a1) = (random_matrix(&mut rng, 4), random_matrix(&mut rng, 4));
        let frame = random_matrix(&mut rng, 4).columns(0, 2).into_owned();
        let r = liouville_check(|t| &a0 + &a1 * t.sin(), &frame, 2.0 * std::f64::consts::PI, 1e-3)?;
        Ok((r.max_relative_error <= 1e-5, format!("rel err {:.2e}", r.max_relative_error)))
    }));
    out
}

fn delayop_suite() -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check("mackey_glass_symmetrized_eigenvalue", || {
        let (gamma, beta, fp, kappa, tau) = (0.1, 0.2, -2.0, 0.05, 22.0);
        let spec = DelayOperatorSpec::scalar(tau, -gamma, beta * fp)?;
        let (_, eig) = symmetrized_matrix(&spec, &WeightProfile::uniform(kappa, &spec)?)?;
        let want = 1.0 - 2.0 * gamma + beta * beta * (kappa * tau).exp() * fp * fp;
        let err = (eig[0] - want).abs();
        Ok((err <= 1e-10 * want.abs().max(1.0), format!("abs err {err:.2e}")))
    }));
    out.push(check("probe_flags_decreasing_weight", || {
        let spec = DelayOperatorSpec::new(
            1.0,
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 0.5),
            vec![(0.5, DMatrix::from_element(1, 1, 0.5))],
        )?;
        let bad = trace_number_probe(&spec, &WeightProfile::new(vec![2.0, 0.0], spec.partition())?, 16, 1 << 14)?;
        let good = trace_number_probe(&spec, &WeightProfile::new(vec![0.5, 2.0], spec.partition())?, 16, 128)?;
        Ok((
            bad.unbounded && !good.unbounded,
            format!("bad unbounded = {}, good unbounded = {}", bad.unbounded, good.unbounded),
        ))
    }));
    out.push(check("vanishing_jump_rejected", || {
        let spec = DelayOperatorSpec::new(
            2.0,
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            vec![(1.0, DMatrix::from_element(1, 1, 1.0))],
        )?;
        let r = symmetrized_matrix(&spec, &WeightProfile::new(vec![0.5, 0.5], spec.partition())?);
        Ok((matches!(r, Err(Error::DegenerateMetric(_))), format!("{:?}", r.err())))
    }));
    out
}

fn bounds_suite() -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check("mackey_glass_lambert", || {
        let p = lambert_root(0.8 / 0.164025)?;
        let b = mackey_glass_bound(0.2, 0.1, 10.0, 22.0, LambdaMode::Rough)?;
        let ok = (p - 0.8034).abs() <= 5e-4 && (b.slope - 0.9957).abs() <= 5e-4 && b.d_star <= 0.9958 * 22.0 + 1.0;
        Ok((ok, format!("p* = {p:.6}, slope = {:.6}, d* = {:.4}", b.slope, b.d_star)))
    }));
    out.push(check("suarez_schopf_bound", || {
        let b = suarez_schopf_bound(0.75, 1.0, 1.596)?;
        let ok = (b.p_star - 0.843807).abs() <= 1e-5 && (b.d_star - 6.675).abs() <= 5e-3;
        Ok((ok, format!("p* = {:.6}, d* = {:.4}", b.p_star, b.d_star)))
    }));
    out.push(check("scaled_bounds", || {
        let ss = suarez_schopf_scaled(0.75, 1.0, 1.596)?;
        let mg = mackey_glass_scaled(0.2, 0.1, 10.0, 22.0, LambdaMode::Rough)?;
        let (ks, km) = (ss.scale_opt.unwrap_or(f64::NAN), mg.scale_opt.unwrap_or(f64::NAN));
        let ok = (ks - 0.346771).abs() <= 1e-4 && (ss.d_star - 5.603).abs() <= 5e-3 && (km - 1.00431).abs() <= 1e-3;
        Ok((ok, format!("κ*_SS = {ks:.6}, d*_SS = {:.4}, κ*_MG = {km:.5}", ss.d_star)))
    }));
    out.push(check("tight_lambda_not_worse", || {
        let rough = mackey_glass_bound(0.2, 0.1, 10.0, 17.0, LambdaMode::Rough)?;
        let tight = mackey_glass_bound(0.2, 0.1, 10.0, 17.0, LambdaMode::Tight)?;
        Ok((tight.d_star <= rough.d_star, format!("rough {:.4}, tight {:.4}", rough.d_star, tight.d_star)))
    }));
    out
}

fn dde_suite(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check("method_of_steps_closed_form", || {
        let model = LinearDelay::scalar(0.0, -1.0, 1.0)?;
        let tr = integrate(&model, &HistorySegment::constant(&[1.0], 1.0, 100)?, 2.0, 0.01)?;
        let err = tr
            .rows(1)
            .map(|(t, x)| {
                let exact = if t <= 1.0 { 1.0 - t } else { 1.0 - t + (t - 1.0).powi(2) / 2.0 };
                (x[0] - exact).abs()
            })
            .fold(0.0, f64::max);
        Ok((err <= 1e-12, format!("max err {err:.2e}")))
    }));
    out.push(check("equilibrium_is_fixed", || {
        let model = MackeyGlass::classical(17.0);
        let xe = model.equilibria()[2];
        let tr = integrate(&model, &HistorySegment::constant(&[xe], 17.0, 170)?, 170.0, 0.1)?;
        let dev = tr.rows(1).map(|(_, x)| (x[0] - xe).abs()).fold(0.0, f64::max);
        Ok((dev < 1e-12, format!("max deviation {dev:.2e}")))
    }));
    out.push(check("monodromy_cocycle_identity", || {
        let model = MackeyGlass::classical(17.0);
        let tr = integrate(&model, &HistorySegment::constant(&[0.5], 17.0, 170)?, 200.0, 0.1)?;
        let n = 34;
        let m1 = linearized_monodromy(&model, &tr, 100.0, n)?;
        let m2 = linearized_monodromy(&model, &tr, 117.0, n)?;
        let both = propagate_tangent(&model, &tr, 100.0, n, 2, &DMatrix::identity(n + 1, n + 1))?;
        let prod = m2 * m1;
        let err = (&both - &prod).norm() / prod.norm();
        Ok((err <= 1e-6, format!("rel err {err:.2e}")))
    }));
    out.push(check("equilibrium_multipliers", || {
        let tau = 22.0;
        let model = MackeyGlass::classical(tau);
        let xe = model.equilibria()[2];
        let tr = integrate(&model, &HistorySegment::constant(&[xe], tau, 220)?, tau, 0.1)?;
        let mu = monodromy_multipliers(&linearized_monodromy(&model, &tr, 0.0, 64)?);
        let roots = char_roots(&CharProblem::mackey_glass_symmetric(0.2, 0.1, 10.0, tau)?, 6)?;
        let err = roots
            .roots
            .iter()
            .take(4)
            .zip(&mu)
            .map(|(p, m)| {
                let e = (p * tau).exp();
                (m - e).norm() / e.norm()
            })
            .fold(0.0, f64::max);
        Ok((err <= 1e-3, format!("max rel err {err:.2e}")))
    }));
    out.push(check("invariant_ball", || {
        let model = MackeyGlass::classical(17.0);
        let r0 = mackey_glass_r0(0.2, 0.1, 10.0);
        let rep = invariant_ball_check(&model, r0, 16, 10.0 * 17.0, 0.1, seed)?;
        Ok((rep.pass, format!("R₀ = {r0:.5}, max sup {:.5}", rep.max_sup_norm)))
    }));
    out
}

fn charroots_suite(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check("imaginary_pair", || {
        let tau = 1.3;
        let rs = char_roots(&CharProblem::new(0.0, -std::f64::consts::FRAC_PI_2 / tau, tau)?, 2)?;
        let want = std::f64::consts::FRAC_PI_2 / tau;
        let err = rs.roots.iter().map(|r| r.re.abs() + (r.im.abs() - want).abs()).fold(0.0, f64::max);
        Ok((rs.len() == 2 && err < 1e-10, format!("err {err:.2e}")))
    }));
    out.push(check("mackey_glass_zero_equilibrium", || {
        let rs = char_roots(&CharProblem::mackey_glass_zero(0.2, 0.1, 22.0)?, 12)?;
        let (nu, ld) = (unstable_count(&rs)?, local_dimension(&rs)?);
        Ok((nu == 1 && ld > 3.0 && ld < 4.0, format!("N^u = {nu}, local dimension {ld:.4}")))
    }));
    out.push(check("argument_principle_agrees", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let mut mismatches = 0;
        for _ in 0..5 {
            let prob = CharProblem::new(rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.5..5.0))?;
            let c = rng.gen_range(-0.5..0.2);
            let rs = char_roots(&prob, 30)?;
            let counted = rs.real_parts().iter().filter(|&&r| r > c).count() as i64;
            if rs.real_parts().last().is_some_and(|&r| r > c) {
                continue;
            }
            if certified_count_right_of(&prob, c)? != counted {
                mismatches += 1;
            }
        }
        Ok((mismatches == 0, format!("{mismatches} mismatches")))
    }));
    out.push(check("conjugate_symmetry_and_residuals", || {
        let rs = char_roots(&CharProblem::mackey_glass_symmetric(0.2, 0.1, 10.0, 22.0)?, 20)?;
        let asym = rs
            .roots
            .iter()
            .filter(|r| r.im.abs() > 1e-8)
            .map(|r| rs.roots.iter().map(|s| (s - r.conj()).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        let res_ok = rs.roots.iter().zip(&rs.residuals).all(|(p, r)| *r <= 1e-10 * (1.0 + p.norm()));
        Ok((asym < 1e-8 && res_ok, format!("conjugate gap {asym:.2e}")))
    }));
    out
}
