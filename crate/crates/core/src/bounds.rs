//! Dimension bounds: trace-exponent sums `α⁺(m)`, the scalar Lambert-type
//! lemma, `ϰ`-optimization and the spatio-temporal `κ` rescaling.

use serde::Serialize;

use crate::delayop::{symmetrized_matrix, DelayOperatorSpec, WeightProfile};
use crate::error::{Error, Result};

/// Scalar bound data: `d*(ϰ) = (a + b e^{ϰτ})/ϰ + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundProblem {
    pub tau: f64,
    pub a: f64,
    pub b: f64,
    pub vdot_sup: f64,
}

impl BoundProblem {
    pub fn new(tau: f64, a: f64, b: f64) -> Self {
        Self { tau, a, b, vdot_sup: 0.0 }
    }

    pub fn with_vdot(mut self, vdot_sup: f64) -> Self {
        self.vdot_sup = vdot_sup;
        self
    }

    /// `a` with the `V̇` contribution folded in.
    pub fn effective_a(&self) -> f64 {
        self.a + 2.0 * self.vdot_sup
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::input(format!("delay must be positive, got {}", self.tau)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::input(format!("b must be positive, got {}", self.b)));
        }
        if !self.a.is_finite() || !self.vdot_sup.is_finite() {
            return Err(Error::input("nonfinite bound coefficients"));
        }
        if self.effective_a() + self.b < 0.0 {
            return Err(Error::input(format!("a + b = {} is negative", self.effective_a() + self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ScalarLemma,
    Scaled,
    MackeyGlass {
        lambda: f64,
        tight: bool,
    },
    SuarezSchopf,
    /// The attractor reduces to the zero equilibrium.
    TrivialAttractor,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionBound {
    pub d_star: f64,
    /// `⌊d*⌋`.
    pub m: usize,
    /// `d* − m`.
    pub gamma: f64,
    pub p_star: f64,
    /// `ϰ* = (p* + 1)/τ`.
    pub kappa_opt: f64,
    /// Optimal spatio-temporal scale `κ*`, if rescaled.
    pub scale_opt: Option<f64>,
    /// Slope `b e^{p*+1}` multiplying `τ`.
    pub slope: f64,
    pub provenance: Provenance,
}

impl DimensionBound {
    fn from_d(d_star: f64, p_star: f64, kappa_opt: f64, slope: f64, provenance: Provenance) -> Self {
        let m = d_star.max(0.0).floor();
        Self { d_star, m: m as usize, gamma: d_star - m, p_star, kappa_opt, scale_opt: None, slope, provenance }
    }
}

/// Unique `p ≥ −1` with `p e^{p+1} = c`.
pub fn lambert_root(c: f64) -> Result<f64> {
    if !(c >= -1.0) || !c.is_finite() {
        return Err(Error::input(format!("p e^(p+1) = {c} has no root with p ≥ -1")));
    }
    if c == -1.0 {
        return Ok(-1.0);
    }
    let f = |p: f64| p * (p + 1.0).exp() - c;
    let (mut lo, mut hi) = (-1.0f64, 20.0f64);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let tol = 1e-15 * c.abs().max(1.0);
    let mut p = c.abs().ln_1p().max(0.0).clamp(lo, hi);
    for _ in 0..200 {
        let fp = f(p);
        if fp.abs() <= tol {
            return Ok(p);
        }
        if fp < 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let deriv = (p + 1.0) * (p + 1.0).exp();
        let newton = p - fp / deriv;
        p = if deriv > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(p)
}

/// `d*(ϰ) = (a + b e^{ϰτ})/ϰ + 1` for `ϰ > 0`.
pub fn d_star_at(prob: &BoundProblem, kappa: f64) -> f64 {
    (prob.effective_a() + prob.b * (kappa * prob.tau).exp()) / kappa + 1.0
}

/// Global minimum of `d*(ϰ)` over `ϰ > 0`: `τ b e^{p*+1} + 1`, `p* e^{p*+1} = a/b`.
pub fn scalar_bound(prob: &BoundProblem) -> Result<DimensionBound> {
    prob.validate()?;
    let p = lambert_root(prob.effective_a() / prob.b)?;
    let slope = prob.b * (p + 1.0).exp();
    let d = prob.tau * slope + 1.0;
    Ok(DimensionBound::from_d(d, p, (p + 1.0) / prob.tau, slope, Provenance::ScalarLemma))
}

/// Minimizes the scalar bound of `family(κ)` over `κ ∈ [lo, hi]` by
/// golden-section search on `ln κ` after a coarse bracketing scan.
pub fn scaled_bound<F>(family: F, range: (f64, f64), tol: f64) -> Result<DimensionBound>
where
    F: Fn(f64) -> BoundProblem,
{
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::input(format!("invalid scale range [{lo}, {hi}]")));
    }
    let value = |u: f64| scalar_bound(&family(u.exp())).map(|b| b.d_star).unwrap_or(f64::INFINITY);
    let (ulo, uhi) = (lo.ln(), hi.ln());
    const SCAN: usize = 200;
    let grid: Vec<f64> = (0..=SCAN).map(|i| ulo + (uhi - ulo) * i as f64 / SCAN as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&u| value(u)).collect();
    let best = vals
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::input("a(κ) + b(κ) < 0 on the whole scale range"))?;
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(SCAN)];
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (value(c), value(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = value(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = value(d);
        }
    }
    let kappa = (0.5 * (a + b)).exp();
    let mut out = scalar_bound(&family(kappa))?;
    out.scale_opt = Some(kappa);
    out.provenance = Provenance::Scaled;
    Ok(out)
}

/// `α⁺(m) = V̇ + ½ Σ_{k≤min(m,K)} λ_k − (ϰ₀/2) max(0, m − K)` with
/// `K = #{k : λ_k ≥ −ϰ₀}`; `eigenvalues` must be nonincreasing.
pub fn alpha_plus(m: usize, eigenvalues: &[f64], kappa0: f64, vdot_sup: f64) -> f64 {
    let k = eigenvalues.iter().take_while(|&&l| l >= -kappa0).count();
    let used = m.min(k);
    vdot_sup + 0.5 * eigenvalues[..used].iter().sum::<f64>() - 0.5 * kappa0 * m.saturating_sub(k) as f64
}

/// Piecewise-linear interpolation `σ(d)` of `α⁺` between integer orders.
pub fn sigma_curve(d: f64, eigenvalues: &[f64], kappa0: f64, vdot_sup: f64) -> f64 {
    let m = d.max(0.0).floor() as usize;
    let g = d - m as f64;
    let lo = if m == 0 { vdot_sup } else { alpha_plus(m, eigenvalues, kappa0, vdot_sup) };
    if g == 0.0 {
        return lo;
    }
    lo + g * (alpha_plus(m + 1, eigenvalues, kappa0, vdot_sup) - lo)
}

/// Smallest `d ≥ 0` past which `σ` stays negative. Needs `ϰ₀ > 0` so the
/// curve eventually decreases.
pub fn sigma_root(eigenvalues: &[f64], kappa0: f64, vdot_sup: f64) -> Result<f64> {
    if !(kappa0 > 0.0) {
        return Err(Error::DegenerateMetric("ϰ₀ must be positive for a finite root".into()));
    }
    let k = eigenvalues.iter().take_while(|&&l| l >= -kappa0).count();
    // σ is concave, so the last nonnegative integer order brackets the root
    let mut m = 0usize;
    while sigma_curve((m + 1) as f64, eigenvalues, kappa0, vdot_sup) >= 0.0 {
        m += 1;
        if m > k {
            // linear tail with slope −ϰ₀/2
            let at = sigma_curve(k as f64, eigenvalues, kappa0, vdot_sup);
            return Ok(k as f64 + 2.0 * at / kappa0);
        }
    }
    let s0 = sigma_curve(m as f64, eigenvalues, kappa0, vdot_sup);
    let s1 = sigma_curve((m + 1) as f64, eigenvalues, kappa0, vdot_sup);
    if s0 < 0.0 {
        return Ok(0.0);
    }
    Ok(m as f64 + s0 / (s0 - s1))
}

/// Worst case over linearizations of the root of `σ` for a fixed weight.
pub fn spectral_bound(specs: &[DelayOperatorSpec], weight: &WeightProfile, vdot_sup: f64) -> Result<f64> {
    if specs.is_empty() {
        return Err(Error::input("no linearizations supplied"));
    }
    let mut worst = 0.0f64;
    for spec in specs {
        let (_, eig) = symmetrized_matrix(spec, weight)?;
        worst = worst.max(sigma_root(&eig, weight.kappas()[0], vdot_sup)?);
    }
    Ok(worst)
}

/// Nested golden-section search over `(ϰ₀, …, ϰ_J)` parametrized as
/// `ϰ₀ = e^{u₀}`, `ϰ_j = ϰ_{j−1} + e^{u_j}`. Returns the best weight found
/// and its bound; no global optimality is claimed.
pub fn optimize_weight(specs: &[DelayOperatorSpec], vdot_sup: f64, tol: f64) -> Result<(WeightProfile, f64)> {
    let spec = specs.first().ok_or_else(|| Error::input("no linearizations supplied"))?;
    let partition = spec.partition();
    let levels = partition.len() - 1;
    let eval = |u: &[f64]| -> f64 {
        let mut kappas = Vec::with_capacity(u.len());
        let mut acc = 0.0;
        for (j, &x) in u.iter().enumerate() {
            acc = if j == 0 { x.exp() } else { acc + x.exp() };
            kappas.push(acc);
        }
        WeightProfile::new(kappas, partition.clone())
            .and_then(|w| spectral_bound(specs, &w, vdot_sup))
            .unwrap_or(f64::INFINITY)
    };
    let mut u = vec![0.0; levels];
    let best = nested_golden(&eval, &mut u, 0, tol);
    let mut kappas = Vec::with_capacity(levels);
    let mut acc = 0.0;
    for (j, &x) in u.iter().enumerate() {
        acc = if j == 0 { x.exp() } else { acc + x.exp() };
        kappas.push(acc);
    }
    Ok((WeightProfile::new(kappas, partition)?, best))
}

fn nested_golden(eval: &dyn Fn(&[f64]) -> f64, u: &mut Vec<f64>, level: usize, tol: f64) -> f64 {
    let inner = |u: &mut Vec<f64>, x: f64| -> f64 {
        u[level] = x;
        if level + 1 == u.len() {
            eval(u)
        } else {
            nested_golden(eval, u, level + 1, tol)
        }
    };
    // coarse scan over log-parameters, then golden refinement
    let grid: Vec<f64> = (0..=24).map(|i| -9.0 + 15.0 * i as f64 / 24.0).collect();
    let vals: Vec<f64> = grid.iter().map(|&x| inner(u, x)).collect();
    let i = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let mut a = grid[i.saturating_sub(1)];
    let mut b = grid[(i + 1).min(grid.len() - 1)];
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = inner(u, c);
    let mut fd = inner(u, d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = inner(u, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = inner(u, d);
        }
    }
    let x = 0.5 * (a + b);
    let v = inner(u, x);
    if vals[i] < v {
        inner(u, grid[i])
    } else {
        v
    }
}

/// Mackey-Glass nonlinearity `F(y) = y/(1+|y|^k)`.
pub fn mg_f(y: f64, k: f64) -> f64 {
    y / (1.0 + y.abs().powf(k))
}

/// `F′(y) = (1 + (1−k)|y|^k)/(1+|y|^k)²`.
pub fn mg_f_prime(y: f64, k: f64) -> f64 {
    let yk = y.abs().powf(k);
    (1.0 + (1.0 - k) * yk) / (1.0 + yk).powi(2)
}

/// Radius of the absorbing ball: `β γ⁻¹ k⁻¹ (k−1)^{(k−1)/k}` if `β > γ`, else 0.
pub fn mackey_glass_r0(beta: f64, gamma: f64, k: f64) -> f64 {
    if beta <= gamma {
        0.0
    } else {
        beta / gamma / k * (k - 1.0).powf((k - 1.0) / k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `max{1, (k−1)²/4k}`, a bound on `|F′|` over the whole line.
    Rough,
    /// `max |F′|` over `|y| ≤ R₀`.
    Tight,
}

/// Maximum of `|F′|` over `[0, r]` by grid scan and golden refinement.
pub fn max_abs_f_prime(k: f64, r: f64) -> f64 {
    let g = |y: f64| mg_f_prime(y, k).abs();
    if r <= 0.0 {
        return g(0.0);
    }
    const GRID: usize = 4000;
    let h = r / GRID as f64;
    let (i, mut best) =
        (0..=GRID)
            .map(|i| (i, g(i as f64 * h)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let (mut a, mut b) = ((i as f64 - 1.0).max(0.0) * h, ((i + 1) as f64 * h).min(r));
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-14 * r.max(1.0) {
        let c = b - invphi * (b - a);
        let d = a + invphi * (b - a);
        if g(c) >= g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best = best.max(g(0.5 * (a + b)));
    best
}

pub fn mackey_glass_lambda(beta: f64, gamma: f64, k: f64, mode: LambdaMode) -> f64 {
    match mode {
        LambdaMode::Rough => 1f64.max((k - 1.0).powi(2) / (4.0 * k)),
        LambdaMode::Tight => max_abs_f_prime(k, mackey_glass_r0(beta, gamma, k)),
    }
}

fn check_mg(beta: f64, gamma: f64, k: f64, tau: f64) -> Result<()> {
    if !(gamma >= 0.0) || !(beta > 0.0) || !(k > 1.0) || !(tau > 0.0) {
        return Err(Error::input(format!(
            "Mackey-Glass needs β > 0, γ ≥ 0, k > 1, τ > 0 (got β={beta}, γ={gamma}, k={k}, τ={tau})"
        )));
    }
    Ok(())
}

fn trivial_bound() -> DimensionBound {
    DimensionBound::from_d(0.0, f64::NAN, f64::NAN, 0.0, Provenance::TrivialAttractor)
}

/// Bound for `ẋ = −γx + βF(x(t−τ))`: `a = 1 − 2γ`, `b = (βΛ)²`.
pub fn mackey_glass_bound(beta: f64, gamma: f64, k: f64, tau: f64, mode: LambdaMode) -> Result<DimensionBound> {
    check_mg(beta, gamma, k, tau)?;
    if beta <= gamma {
        return Ok(trivial_bound());
    }
    let lambda = mackey_glass_lambda(beta, gamma, k, mode);
    let mut out = scalar_bound(&BoundProblem::new(tau, 1.0 - 2.0 * gamma, (beta * lambda).powi(2)))?;
    out.provenance = Provenance::MackeyGlass { lambda, tight: mode == LambdaMode::Tight };
    Ok(out)
}

/// Mackey-Glass family under `t ↦ κt`: `a = 1 − 2κγ`, `b = (κβΛ)²`, delay `τ/κ`.
pub fn mackey_glass_family(beta: f64, gamma: f64, lambda: f64, tau: f64) -> impl Fn(f64) -> BoundProblem {
    move |kappa| BoundProblem::new(tau / kappa, 1.0 - 2.0 * kappa * gamma, (kappa * beta * lambda).powi(2))
}

pub const DEFAULT_SCALE_RANGE: (f64, f64) = (1e-3, 1e3);
pub const DEFAULT_SCALE_TOL: f64 = 1e-6;

pub fn mackey_glass_scaled(beta: f64, gamma: f64, k: f64, tau: f64, mode: LambdaMode) -> Result<DimensionBound> {
    check_mg(beta, gamma, k, tau)?;
    if beta <= gamma {
        return Ok(trivial_bound());
    }
    let lambda = mackey_glass_lambda(beta, gamma, k, mode);
    scaled_bound(mackey_glass_family(beta, gamma, lambda, tau), DEFAULT_SCALE_RANGE, DEFAULT_SCALE_TOL)
}

fn check_ss(alpha: f64, gamma: f64, tau: f64) -> Result<()> {
    if !(alpha > 0.0) || !(gamma > 0.0) || !(tau > 0.0) {
        return Err(Error::input(format!("Suarez-Schopf needs α, γ, τ > 0 (got α={alpha}, γ={gamma}, τ={tau})")));
    }
    Ok(())
}

/// Bound for the forced delayed oscillator: `a = 1 + 2γ`, `b = α²`.
pub fn suarez_schopf_bound(alpha: f64, gamma: f64, tau: f64) -> Result<DimensionBound> {
    check_ss(alpha, gamma, tau)?;
    let mut out = scalar_bound(&BoundProblem::new(tau, 1.0 + 2.0 * gamma, alpha * alpha))?;
    out.provenance = Provenance::SuarezSchopf;
    Ok(out)
}

pub fn suarez_schopf_family(alpha: f64, gamma: f64, tau: f64) -> impl Fn(f64) -> BoundProblem {
    move |kappa| BoundProblem::new(tau / kappa, 1.0 + 2.0 * kappa * gamma, (kappa * alpha).powi(2))
}

pub fn suarez_schopf_scaled(alpha: f64, gamma: f64, tau: f64) -> Result<DimensionBound> {
    check_ss(alpha, gamma, tau)?;
    scaled_bound(suarez_schopf_family(alpha, gamma, tau), DEFAULT_SCALE_RANGE, DEFAULT_SCALE_TOL)
}
