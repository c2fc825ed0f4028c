//! Characteristic roots of the scalar delay equation `ẋ = a x(t) + b x(t−τ)`,
//! i.e. zeros of `h(p) = a + b e^{−τp} − p`.
//!
//! Seeds come from two independent sources: a Chebyshev pseudospectral
//! discretization of the generator on `[−τ, 0]`, and the Lambert-W branches
//! `p = a + W_k(bτ e^{−aτ})/τ`. Every seed is polished by Newton on `h`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::mg_f_prime;
use crate::cocycle::kaplan_yorke_partial;
use crate::delayop::{chebyshev_diff_matrix, lobatto_nodes};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharProblem {
    pub a: f64,
    pub b: f64,
    pub tau: f64,
}

impl CharProblem {
    pub fn new(a: f64, b: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) || !a.is_finite() || !b.is_finite() {
            return Err(Error::input(format!("invalid characteristic problem a={a}, b={b}, τ={tau}")));
        }
        Ok(Self { a, b, tau })
    }

    /// Linearization of `ẋ = −γx + βF(x(t−τ))` at `±(β/γ − 1)^{1/k}`.
    pub fn mackey_glass_symmetric(beta: f64, gamma: f64, k: f64, tau: f64) -> Result<Self> {
        if !(beta > gamma && gamma > 0.0) {
            return Err(Error::input("nonzero Mackey-Glass equilibria need β > γ > 0"));
        }
        let x = (beta / gamma - 1.0).powf(1.0 / k);
        Self::new(-gamma, beta * mg_f_prime(x, k), tau)
    }

    /// Linearization of Mackey-Glass at the zero equilibrium.
    pub fn mackey_glass_zero(beta: f64, gamma: f64, tau: f64) -> Result<Self> {
        Self::new(-gamma, beta, tau)
    }

    /// Unforced `ẋ = x − αx(t−τ) − x³` at `x² = 1 − α`.
    pub fn suarez_schopf_symmetric(alpha: f64, tau: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::input("nonzero Suarez-Schopf equilibria need 0 < α < 1"));
        }
        Self::new(1.0 - 3.0 * (1.0 - alpha), -alpha, tau)
    }

    pub fn suarez_schopf_zero(alpha: f64, tau: f64) -> Result<Self> {
        Self::new(1.0, -alpha, tau)
    }

    pub fn h(&self, p: Complex64) -> Complex64 {
        self.a + self.b * (-self.tau * p).exp() - p
    }

    pub fn h_prime(&self, p: Complex64) -> Complex64 {
        -self.b * self.tau * (-self.tau * p).exp() - 1.0
    }
}

/// Roots sorted by real part (descending), then imaginary part (descending).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootSet {
    pub problem: CharProblem,
    pub roots: Vec<Complex64>,
    pub residuals: Vec<f64>,
    /// 2 for numerically double roots, 1 otherwise.
    pub multiplicities: Vec<u8>,
    pub count_requested: usize,
    /// Fewer roots than requested could be certified.
    pub partial: bool,
    pub warnings: Vec<String>,
}

impl RootSet {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Real parts with double roots listed twice.
    pub fn real_parts(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.roots.len());
        for (r, &m) in self.roots.iter().zip(&self.multiplicities) {
            for _ in 0..m {
                out.push(r.re);
            }
        }
        out
    }

    /// `Σ_{j≤m} Re λ_j`.
    pub fn partial_sum(&self, m: usize) -> f64 {
        self.real_parts().iter().take(m).sum()
    }
}

const NEWTON_MAX: usize = 60;

fn residual_ok(p: Complex64, res: f64) -> bool {
    res <= 1e-10 * (1.0 + p.norm())
}

/// Newton on `h`; returns the root and its residual if it converges.
fn polish(prob: &CharProblem, seed: Complex64) -> Option<(Complex64, f64)> {
    let mut p = seed;
    let start = prob.h(seed).norm();
    if !start.is_finite() {
        return None;
    }
    let mut res = start;
    for _ in 0..NEWTON_MAX {
        let d = prob.h_prime(p);
        if d.norm() == 0.0 {
            break;
        }
        let step = prob.h(p) / d;
        p -= step;
        res = prob.h(p).norm();
        if !res.is_finite() {
            return None;
        }
        if step.norm() <= 1e-15 * (1.0 + p.norm()) {
            break;
        }
    }
    // a seed counts as refined when the residual dropped by six orders or
    // sits at the roundoff floor
    let floor = 1e-13 * (1.0 + p.norm());
    (residual_ok(p, res) && (res <= 1e-6 * start || res <= floor)).then_some((p, res))
}

/// Solves `w + Log w = ln z + 2πik` for the branch `W_k(z)`, with
/// `ln z = ln|bτ| − aτ + iπ[b<0]`, then maps to `p = a + w/τ`.
fn lambert_seed(prob: &CharProblem, k: i64) -> Complex64 {
    let ln_z = Complex64::new(
        (prob.b * prob.tau).abs().ln() - prob.a * prob.tau,
        if prob.b < 0.0 { std::f64::consts::PI } else { 0.0 },
    );
    let target = ln_z + Complex64::new(0.0, 2.0 * std::f64::consts::PI * k as f64);
    let mut w = if target.norm() > 1.0 { target - target.ln() } else { Complex64::new(0.5, 0.0) };
    for _ in 0..80 {
        if w.norm() == 0.0 {
            break;
        }
        let g = w + w.ln() - target;
        let step = g / (1.0 + 1.0 / w);
        w -= step;
        if step.norm() <= 1e-15 * (1.0 + w.norm()) {
            break;
        }
    }
    prob.a + w / prob.tau
}

/// Eigenvalues of the collocated generator with `size + 1` Chebyshev nodes.
pub fn pseudospectral_seeds(prob: &CharProblem, size: usize) -> Vec<Complex64> {
    let m = size.max(4);
    let d = chebyshev_diff_matrix(m + 1) * (2.0 / prob.tau);
    let mut a = nalgebra::DMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..=m {
            a[(i, j)] = d[(i, j)];
        }
    }
    // the last node is θ = 0, the first θ = −τ
    a[(m, m)] = prob.a;
    a[(m, 0)] += prob.b;
    debug_assert_eq!(lobatto_nodes(m + 1)[m], 1.0);
    a.complex_eigenvalues().iter().copied().collect()
}

/// Cap on the pseudospectral discretization size.
pub const MAX_PSEUDOSPECTRAL: usize = 384;

fn sort_roots(v: &mut [(Complex64, f64)]) {
    v.sort_by(|x, y| y.0.re.total_cmp(&x.0.re).then(y.0.im.total_cmp(&x.0.im)));
}

fn dedup(mut found: Vec<(Complex64, f64)>) -> Vec<(Complex64, f64)> {
    sort_roots(&mut found);
    let mut out: Vec<(Complex64, f64)> = Vec::with_capacity(found.len());
    for (p, r) in found {
        if !out.iter().any(|(q, _)| (p - q).norm() <= 1e-8 * (1.0 + p.norm())) {
            out.push((p, r));
        }
    }
    out
}

/// The `count` roots with largest real parts. If the cut would split a
/// conjugate pair, the partner is kept as well.
pub fn char_roots(prob: &CharProblem, count: usize) -> Result<RootSet> {
    if count == 0 {
        return Err(Error::input("root count must be at least 1"));
    }
    let mut warnings = Vec::new();
    if prob.b == 0.0 {
        return Ok(RootSet {
            problem: *prob,
            roots: vec![Complex64::new(prob.a, 0.0)],
            residuals: vec![0.0],
            multiplicities: vec![1],
            count_requested: count,
            partial: false,
            warnings,
        });
    }
    let size = (4 * count).clamp(16, MAX_PSEUDOSPECTRAL);
    let mut seeds = pseudospectral_seeds(prob, size);
    // every root lies on exactly one Lambert branch; real parts fall off in |k|
    let mut kmax = count as i64 + 2;
    let roots = loop {
        let mut all = seeds.clone();
        all.extend((-kmax..=kmax).map(|k| lambert_seed(prob, k)));
        let results: Vec<Option<(Complex64, f64)>> = all.par_iter().map(|&s| polish(prob, s)).collect();
        let dropped = results.iter().filter(|r| r.is_none()).count();
        let found = dedup(results.into_iter().flatten().collect());
        let edge = [-kmax, -kmax + 1, kmax - 1, kmax]
            .iter()
            .filter_map(|&k| polish(prob, lambert_seed(prob, k)))
            .map(|(p, _)| p.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let cutoff = found.get(count - 1).map(|r| r.0.re).unwrap_or(f64::NEG_INFINITY);
        if (found.len() >= count && edge < cutoff) || kmax > 64 * count as i64 + 1024 {
            if dropped > 0 {
                warnings.push(format!("{dropped} seeds failed to converge and were dropped"));
            }
            break found;
        }
        kmax *= 2;
        seeds.clear();
    };
    let mut take = count.min(roots.len());
    if take < roots.len() && take > 0 {
        let last = roots[take - 1].0;
        if last.im.abs() > 1e-12 * (1.0 + last.norm())
            && (roots[take].0 - last.conj()).norm() <= 1e-8 * (1.0 + last.norm())
        {
            take += 1;
        }
    }
    let chosen = &roots[..take];
    let partial = take < count;
    if partial {
        warnings.push(format!("only {take} of {count} roots certified"));
    }
    Ok(RootSet {
        problem: *prob,
        roots: chosen.iter().map(|r| r.0).collect(),
        residuals: chosen.iter().map(|r| r.1).collect(),
        multiplicities: chosen.iter().map(|r| if prob.h_prime(r.0).norm() < 1e-8 { 2 } else { 1 }).collect(),
        count_requested: count,
        partial,
        warnings,
    })
}

/// Kaplan-Yorke value of the spectrum real parts.
pub fn local_dimension(rs: &RootSet) -> Result<f64> {
    kaplan_yorke_partial(&rs.real_parts())
        .ok_or_else(|| Error::NeedsMoreRoots(format!("partial sums stay nonnegative over {} roots", rs.len())))
}

/// `N^u`: roots with positive real part.
pub fn unstable_count(rs: &RootSet) -> Result<usize> {
    let re = rs.real_parts();
    if re.iter().all(|&r| r > 0.0) {
        return Err(Error::NeedsMoreRoots(format!("all {} returned roots are unstable", re.len())));
    }
    Ok(re.iter().filter(|&&r| r > 0.0).count())
}

/// `N_L`: the largest `m` with a nonnegative partial sum.
pub fn lyapunov_count(rs: &RootSet) -> Result<usize> {
    Ok(local_dimension(rs)?.floor() as usize)
}

/// Requests roots, doubling the count until `f` succeeds.
pub fn with_enough_roots<T>(
    prob: &CharProblem,
    start: usize,
    f: impl Fn(&RootSet) -> Result<T>,
) -> Result<(T, RootSet)> {
    let mut count = start.max(1);
    loop {
        let rs = char_roots(prob, count)?;
        match f(&rs) {
            Ok(v) => return Ok((v, rs)),
            Err(Error::NeedsMoreRoots(msg)) => {
                if count > 8192 || rs.len() < count {
                    return Err(Error::NeedsMoreRoots(msg));
                }
                count *= 2;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Winding number of `h` around the rectangle `[re_lo, re_hi] × [im_lo, im_hi]`,
/// i.e. the number of zeros inside. Each edge is subdivided until the
/// Lipschitz bound `|h′(z)| ≤ 1 + |b|τ e^{−τ Re z}` keeps `h` inside a disk
/// of radius `|h(z₀)|/2` around its value at the segment start, so every
/// recorded phase increment is exact.
pub fn argument_principle_count(prob: &CharProblem, re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Result<i64> {
    if !(re_lo < re_hi && im_lo < im_hi) {
        return Err(Error::input("empty contour rectangle"));
    }
    let corners = [
        Complex64::new(re_lo, im_lo),
        Complex64::new(re_hi, im_lo),
        Complex64::new(re_hi, im_hi),
        Complex64::new(re_lo, im_hi),
    ];
    let lipschitz = |x: f64| 1.0 + prob.b.abs() * prob.tau * (-prob.tau * x).exp();
    let mut total = 0.0;
    for i in 0..4 {
        let (z0, z1) = (corners[i], corners[(i + 1) % 4]);
        let len = (z1 - z0).norm();
        let mut t = 0.0f64;
        let mut h0 = prob.h(z0);
        let m = lipschitz(z0.re.min(z1.re));
        while t < 1.0 {
            let step = (0.5 * h0.norm() / (m * len)).min(1.0 - t);
            if !(step > 1e-13) {
                return Err(Error::NonConvergence("contour passes too close to a root".into()));
            }
            let h1 = prob.h(z0 + (z1 - z0) * (t + step));
            total += (h1 / h0).arg();
            h0 = h1;
            t += step;
        }
    }
    Ok((total / (2.0 * std::f64::consts::PI)).round() as i64)
}

/// Number of roots with `Re p > c`, certified by the argument principle on
/// the box that must contain all of them: `|p − a| ≤ |b| e^{−τc}`.
pub fn certified_count_right_of(prob: &CharProblem, c: f64) -> Result<i64> {
    let r = prob.b.abs() * (-prob.tau * c).exp();
    let pad = 1.0 + 0.1 * r;
    let re_hi = (prob.a + r).max(c) + pad;
    let im = r + pad;
    argument_principle_count(prob, c, re_hi, -im, im)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    LocalDimension,
    UnstableCount,
}

impl std::str::FromStr for Quantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local_dim" | "local_dimension" => Ok(Self::LocalDimension),
            "unstable" | "unstable_count" => Ok(Self::UnstableCount),
            other => Err(Error::input(format!("unknown quantity {other}"))),
        }
    }
}

pub fn evaluate_quantity(prob: &CharProblem, quantity: Quantity) -> Result<f64> {
    match quantity {
        Quantity::LocalDimension => with_enough_roots(prob, 16, local_dimension).map(|r| r.0),
        Quantity::UnstableCount => with_enough_roots(prob, 16, unstable_count).map(|r| r.0 as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub low_confidence: bool,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::input("linear fit needs at least two paired samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::input("fit abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        residual: (ss_res / n).sqrt(),
        low_confidence: r_squared < 0.99,
        taus: x.to_vec(),
        values: y.to_vec(),
    })
}

/// `count` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Least-squares slope of `quantity` against `τ` over the family.
pub fn asymptotic_slope<F>(family: F, quantity: Quantity, taus: &[f64]) -> Result<SlopeFit>
where
    F: Fn(f64) -> Result<CharProblem> + Sync,
{
    if taus.len() < 2 {
        return Err(Error::input("slope fit needs at least two delays"));
    }
    let values: Vec<Result<f64>> = taus.par_iter().map(|&t| evaluate_quantity(&family(t)?, quantity)).collect();
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    linear_fit(taus, &values)
}
