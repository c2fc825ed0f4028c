//! Finite-dimensional cocycles: volume growth, uniform Lyapunov exponents,
//! Lyapunov and Kaplan-Yorke dimensions, Lyapunov metrics, the Liouville
//! trace formula and the variational principle over equilibria.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A linear cocycle over a finite base sampled at a fixed time step `h`.
///
/// Each base point `q` carries the one-step fiber map `fiber(q, h)` and the
/// index of `ϑ^h(q)`. Longer fiber maps are products along the base orbit.
#[derive(Debug, Clone)]
pub struct MatrixCocycle {
    n: usize,
    h: f64,
    labels: Vec<String>,
    next: Vec<usize>,
    steps: Vec<DMatrix<f64>>,
}

impl MatrixCocycle {
    pub fn new(h: f64, labels: Vec<String>, next: Vec<usize>, steps: Vec<DMatrix<f64>>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::input(format!("base step must be positive, got {h}")));
        }
        if steps.is_empty() {
            return Err(Error::input("cocycle needs at least one base point"));
        }
        if labels.len() != steps.len() || next.len() != steps.len() {
            return Err(Error::DimensionMismatch { expected: steps.len(), found: labels.len().min(next.len()) });
        }
        let n = steps[0].nrows();
        for s in &steps {
            if s.nrows() != n || s.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: s.ncols() });
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::input("fiber matrix has nonfinite entries"));
            }
        }
        if let Some(&bad) = next.iter().find(|&&k| k >= steps.len()) {
            return Err(Error::input(format!("base transition points to missing index {bad}")));
        }
        if n == 0 {
            return Err(Error::input("empty fiber"));
        }
        Ok(Self { n, h, labels, next, steps })
    }

    /// Base of equilibria, each with its own constant generator: `fiber(q, h) = exp(h A_q)`.
    pub fn from_equilibria(generators: &[DMatrix<f64>], h: f64) -> Result<Self> {
        let steps = generators.iter().map(|a| (a * h).exp()).collect();
        let k = generators.len();
        Self::new(h, (0..k).map(|i| format!("q{i}")).collect(), (0..k).collect(), steps)
    }

    /// Time-periodic generator `A(t)` sampled at `steps_per_period` phases;
    /// each one-step map is an RK4 propagator with `substeps` inner steps.
    pub fn from_periodic_generator<F>(a: F, period: f64, steps_per_period: usize, substeps: usize) -> Result<Self>
    where
        F: Fn(f64) -> DMatrix<f64> + Sync,
    {
        if steps_per_period == 0 || substeps == 0 || !(period > 0.0) {
            return Err(Error::input("periodic sampler needs positive period and step counts"));
        }
        let h = period / steps_per_period as f64;
        let steps: Vec<DMatrix<f64>> =
            (0..steps_per_period).into_par_iter().map(|i| rk4_propagator(&a, i as f64 * h, h, substeps)).collect();
        let labels = (0..steps_per_period).map(|i| format!("t={:.6}", i as f64 * h)).collect();
        let next = (0..steps_per_period).map(|i| (i + 1) % steps_per_period).collect();
        Self::new(h, labels, next, steps)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn base_step(&self) -> f64 {
        self.h
    }

    pub fn base_len(&self) -> usize {
        self.steps.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn next(&self, q: usize) -> usize {
        self.next[q]
    }

    pub fn step_matrix(&self, q: usize) -> &DMatrix<f64> {
        &self.steps[q]
    }

    /// `Ξ^t(q) = Ξ^{κt}(q)`: same maps, base step `h/κ`.
    pub fn time_rescaled(&self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::input("rescaling factor must be positive"));
        }
        Self::new(self.h / kappa, self.labels.clone(), self.next.clone(), self.steps.clone())
    }

    fn steps_for(&self, t: f64) -> Result<usize> {
        let k = (t / self.h).round();
        if !(t >= 0.0) || (k * self.h - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::input(format!("time {t} is not a multiple of the base step {}", self.h)));
        }
        Ok(k as usize)
    }

    /// Step matrices along the orbit of `q` for `k` steps.
    pub fn orbit(&self, q: usize, k: usize) -> Vec<&DMatrix<f64>> {
        let mut out = Vec::with_capacity(k);
        let mut p = q;
        for _ in 0..k {
            out.push(&self.steps[p]);
            p = self.next[p];
        }
        out
    }

    pub fn point_after(&self, q: usize, t: f64) -> Result<usize> {
        let mut p = q;
        for _ in 0..self.steps_for(t)? {
            p = self.next[p];
        }
        Ok(p)
    }

    /// Explicit product `fiber(q, t)`; may overflow for long horizons.
    pub fn fiber(&self, q: usize, t: f64) -> Result<DMatrix<f64>> {
        let k = self.steps_for(t)?;
        let mut acc = DMatrix::identity(self.n, self.n);
        for m in self.orbit(q, k) {
            acc = m * acc;
        }
        Ok(acc)
    }
}

fn rk4_propagator<F: Fn(f64) -> DMatrix<f64>>(a: &F, t0: f64, h: f64, substeps: usize) -> DMatrix<f64> {
    let n = a(t0).nrows();
    let dt = h / substeps as f64;
    let mut phi = DMatrix::identity(n, n);
    for s in 0..substeps {
        let t = t0 + s as f64 * dt;
        let a0 = a(t);
        let am = a(t + 0.5 * dt);
        let a1 = a(t + dt);
        let k1 = &a0 * &phi;
        let k2 = &am * (&phi + &k1 * (0.5 * dt));
        let k3 = &am * (&phi + &k2 * (0.5 * dt));
        let k4 = &a1 * (&phi + &k3 * dt);
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    phi
}

/// Deterministic generic orthonormal `n × m` starting frame.
pub fn generic_frame(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
    raw.qr().q().columns(0, m).into_owned()
}

/// Forward QR re-orthonormalization of an evolving `m`-frame.
///
/// Push the image `M·Q` of the current frame after each step; the column-wise
/// logarithms of `|R_jj|` are accumulated.
#[derive(Debug, Clone)]
pub struct QrAccumulator {
    q: DMatrix<f64>,
    column_sums: Vec<f64>,
    per_step: Vec<f64>,
    collapsed: bool,
}

impl QrAccumulator {
    pub fn new(frame: DMatrix<f64>) -> Self {
        let m = frame.ncols();
        Self { q: frame, column_sums: vec![0.0; m], per_step: Vec::new(), collapsed: false }
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn push(&mut self, image: DMatrix<f64>) {
        let m = self.q.ncols();
        if image.iter().any(|x| !x.is_finite()) {
            self.collapsed = true;
            self.per_step.push(f64::NAN);
            return;
        }
        let qr = image.qr();
        let r = qr.r();
        let mut step_sum = 0.0;
        for j in 0..m {
            let d = r[(j, j)].abs();
            let l = if d > 0.0 { d.ln() } else { f64::NEG_INFINITY };
            if !(d > f64::MIN_POSITIVE) {
                self.collapsed = true;
            }
            self.column_sums[j] += l;
            step_sum += l;
        }
        self.per_step.push(step_sum);
        self.q = qr.q().columns(0, m).into_owned();
    }

    pub fn column_sums(&self) -> &[f64] {
        &self.column_sums
    }

    pub fn per_step(&self) -> &[f64] {
        &self.per_step
    }

    pub fn collapsed(&self) -> bool {
        self.collapsed
    }

    pub fn log_volume(&self) -> f64 {
        self.column_sums.iter().sum()
    }
}

/// Result of [`volume_growth_qr`].
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrowth {
    pub m: usize,
    pub horizon: f64,
    /// `ln ω_m(fiber(q, T))`.
    pub log_volume: f64,
    /// `ln ω_j(fiber(q, T))` for `j = 1..=m`.
    pub log_omegas: Vec<f64>,
    /// Log-volume increments per re-orthonormalization interval.
    pub per_step_sums: Vec<f64>,
    /// `log_volume / T`.
    pub rate: f64,
    /// Growth slope over the second half of the horizon.
    pub asymptotic_rate: f64,
    pub collapsed: bool,
    pub sweeps: usize,
}

/// Exact `ln ω_j` of a product of matrices (applied first to last) via
/// alternating forward/adjoint QR sweeps, i.e. orthogonal iteration on
/// `PᵀP` without forming `P`.
pub fn product_log_omegas(mats: &[&DMatrix<f64>], m: usize, reorth_every: usize) -> Result<VolumeGrowth> {
    let n = mats.first().map(|a| a.nrows()).unwrap_or(0);
    if mats.is_empty() {
        return Err(Error::input("empty matrix product"));
    }
    if m == 0 || m > n {
        return Err(Error::input(format!("order {m} outside 1..={n}")));
    }
    let every = reorth_every.max(1);
    let forward = |q0: DMatrix<f64>| {
        let mut acc = QrAccumulator::new(q0);
        let mut chunk = acc.frame().clone();
        for (i, a) in mats.iter().enumerate() {
            chunk = *a * chunk;
            if (i + 1) % every == 0 || i + 1 == mats.len() {
                acc.push(chunk);
                chunk = acc.frame().clone();
            }
        }
        acc
    };
    let backward = |q0: DMatrix<f64>| {
        let mut acc = QrAccumulator::new(q0);
        for a in mats.iter().rev() {
            acc.push(a.transpose() * acc.frame());
        }
        acc
    };
    let mut q = generic_frame(n, m, 0x5eed);
    let mut prev: Option<Vec<f64>> = None;
    let mut sweeps = 0;
    let result = loop {
        sweeps += 1;
        let fwd = forward(q);
        let sums = fwd.column_sums().to_vec();
        let scale = sums.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let done = fwd.collapsed()
            || sweeps >= 500
            || prev.as_ref().is_some_and(|p| p.iter().zip(&sums).all(|(a, b)| (a - b).abs() <= 1e-14 * scale));
        if done {
            break fwd;
        }
        prev = Some(sums);
        let bwd = backward(fwd.frame().clone());
        if bwd.collapsed() {
            break fwd;
        }
        q = bwd.frame().clone();
    };
    let mut log_omegas = Vec::with_capacity(m);
    let mut running = 0.0;
    for s in result.column_sums() {
        running += s;
        log_omegas.push(running);
    }
    let per_step = result.per_step().to_vec();
    let half = per_step.len() / 2;
    let tail = &per_step[half..];
    Ok(VolumeGrowth {
        m,
        horizon: 0.0,
        log_volume: if result.collapsed() { f64::NEG_INFINITY } else { running },
        log_omegas,
        per_step_sums: per_step.clone(),
        rate: 0.0,
        asymptotic_rate: tail.iter().sum::<f64>() / tail.len().max(1) as f64,
        collapsed: result.collapsed(),
        sweeps,
    })
}

/// `ln ω_m(fiber(q, T))` by accumulated QR re-orthonormalization every `dt`.
pub fn volume_growth_qr(coc: &MatrixCocycle, q: usize, m: usize, t: f64, dt: f64) -> Result<VolumeGrowth> {
    if q >= coc.base_len() {
        return Err(Error::input(format!("base point {q} out of range")));
    }
    let total = coc.steps_for(t)?;
    let every = coc.steps_for(dt)?;
    if total == 0 || every == 0 || total % every != 0 {
        return Err(Error::input("re-orthonormalization interval must divide the horizon"));
    }
    let mats = coc.orbit(q, total);
    let mut g = product_log_omegas(&mats, m, every)?;
    g.horizon = t;
    g.rate = g.log_volume / t;
    g.asymptotic_rate /= dt;
    Ok(g)
}

/// Uniform exponents over the base.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentReport {
    pub m: usize,
    pub lambdas: Vec<f64>,
    /// `λ₁ + … + λ_j`, the sup-over-base volume growth rates.
    pub partial_sums: Vec<f64>,
    pub horizon: f64,
    /// Log-volume increments of the maximizing base point at order `m`.
    pub per_step_sums: Vec<f64>,
    pub converged: bool,
    pub base_sample_size: usize,
    /// Whether `Σ_{j≤m} λ_j` failed to be nonincreasing past the last positive partial sum.
    pub nonmonotone_partial_sums: bool,
}

/// Finite-horizon sup-over-base growth rates of `ω_1 … ω_{m_max}`.
fn sup_rates(coc: &MatrixCocycle, m_max: usize, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = coc.steps_for(t)?;
    let per_point: Vec<Result<VolumeGrowth>> = (0..coc.base_len())
        .into_par_iter()
        .map(|q| {
            let mats = coc.orbit(q, k);
            let mut best: Option<VolumeGrowth> = None;
            let mut logs = Vec::with_capacity(m_max);
            for m in 1..=m_max {
                let g = product_log_omegas(&mats, m, 1)?;
                logs.push(*g.log_omegas.last().unwrap());
                best = Some(g);
            }
            let mut g = best.unwrap();
            g.log_omegas = logs;
            Ok(g)
        })
        .collect();
    let mut sums = vec![f64::NEG_INFINITY; m_max];
    let mut arg = vec![0usize; m_max];
    let mut growths = Vec::with_capacity(per_point.len());
    for r in per_point {
        growths.push(r?);
    }
    for (q, g) in growths.iter().enumerate() {
        for j in 0..m_max {
            let r = g.log_omegas[j] / t;
            if r > sums[j] {
                sums[j] = r;
                arg[j] = q;
            }
        }
    }
    Ok((sums, growths[arg[m_max - 1]].per_step_sums.clone()))
}

/// Default convergence tolerance between horizons `T` and `2T`.
pub const DEFAULT_HORIZON_TOL: f64 = 1e-4;
/// Horizon doubling stops after this many base steps.
pub const MAX_HORIZON_STEPS: usize = 1 << 12;

/// `λ₁ + … + λ_m = sup_q` growth rate of `ω_m`, exponents by differencing.
/// The horizon doubles from `t` until two successive horizons agree within
/// `tol` or the step budget is exhausted.
pub fn uniform_exponents(coc: &MatrixCocycle, m_max: usize, t: f64, tol: f64) -> Result<ExponentReport> {
    if m_max == 0 || m_max > coc.dim() {
        return Err(Error::input(format!("order {m_max} outside 1..={}", coc.dim())));
    }
    let mut horizon = t;
    let (mut sums, mut per_step) = sup_rates(coc, m_max, horizon)?;
    let mut converged = false;
    while coc.steps_for(2.0 * horizon)? <= MAX_HORIZON_STEPS.max(coc.steps_for(t)?) {
        let (s2, p2) = sup_rates(coc, m_max, 2.0 * horizon)?;
        horizon *= 2.0;
        let close = sums.iter().zip(&s2).all(|(a, b)| (a - b).abs() <= tol || (a.is_infinite() && a == b));
        sums = s2;
        per_step = p2;
        if close {
            converged = true;
            break;
        }
    }
    Ok(report_from_sums(m_max, sums, horizon, per_step, converged, coc.base_len()))
}

fn report_from_sums(
    m: usize,
    sums: Vec<f64>,
    horizon: f64,
    per_step_sums: Vec<f64>,
    converged: bool,
    base_sample_size: usize,
) -> ExponentReport {
    let mut lambdas = Vec::with_capacity(m);
    let mut prev = 0.0;
    for &s in &sums {
        lambdas.push(s - prev);
        prev = s;
    }
    let last_pos = sums.iter().rposition(|&s| s > 0.0).map_or(0, |i| i + 1);
    let nonmonotone = sums[last_pos.min(sums.len())..].windows(2).any(|w| w[1] > w[0]);
    ExponentReport {
        m,
        lambdas,
        partial_sums: sums,
        horizon,
        per_step_sums,
        converged,
        base_sample_size,
        nonmonotone_partial_sums: nonmonotone,
    }
}

/// Kaplan-Yorke value of a possibly truncated exponent list: `None` when no
/// partial sum of the given exponents turns negative.
pub fn kaplan_yorke_partial(lambdas: &[f64]) -> Option<f64> {
    let mut sums = Vec::with_capacity(lambdas.len());
    let mut acc = 0.0;
    for &l in lambdas {
        acc += l;
        sums.push(acc);
    }
    if sums.last().is_none_or(|&s| s >= 0.0) {
        return None;
    }
    // largest m with Σ_{j≤m} λ_j ≥ 0, where the empty sum counts
    let m = sums.iter().rposition(|&s| s >= 0.0).map_or(0, |i| i + 1);
    let partial = if m == 0 { 0.0 } else { sums[m - 1] };
    Some(m as f64 + partial / lambdas[m].abs())
}

/// Kaplan-Yorke dimension for exponents `λ₁, …, λ_n`; saturates at `n`.
pub fn kaplan_yorke(lambdas: &[f64], n: usize) -> f64 {
    let used = &lambdas[..lambdas.len().min(n)];
    kaplan_yorke_partial(used).unwrap_or(used.len() as f64)
}

/// Result of [`lyapunov_dimension`].
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionEstimate {
    pub dimension: f64,
    pub saturated: bool,
    pub horizon: f64,
    /// Sup-over-base growth rates of `ω_j` for `j = 0..=n`.
    pub omega_rates: Vec<f64>,
}

/// `inf{d : sup_q ln ω_d(fiber(q, T)) < 0}` by bisection in `d`.
pub fn lyapunov_dimension(coc: &MatrixCocycle, t: f64, tol: f64) -> Result<DimensionEstimate> {
    let n = coc.dim();
    let k = coc.steps_for(t)?;
    if k == 0 {
        return Err(Error::input("horizon must be positive"));
    }
    let per_point: Vec<Result<Vec<f64>>> = (0..coc.base_len())
        .into_par_iter()
        .map(|q| {
            let mats = coc.orbit(q, k);
            let mut logs = vec![0.0];
            for m in 1..=n {
                logs.push(*product_log_omegas(&mats, m, 1)?.log_omegas.last().unwrap());
            }
            Ok(logs)
        })
        .collect();
    let mut table = Vec::with_capacity(per_point.len());
    for r in per_point {
        table.push(r?);
    }
    let f = |d: f64| -> f64 {
        let m = (d.floor() as usize).min(n);
        let gamma = d - m as f64;
        table
            .iter()
            .map(|logs| {
                if m == n {
                    if gamma > 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        logs[n]
                    }
                } else if gamma == 0.0 {
                    logs[m]
                } else {
                    (1.0 - gamma) * logs[m] + gamma * logs[m + 1]
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut omega_rates = vec![0.0; n + 1];
    for (j, r) in omega_rates.iter_mut().enumerate() {
        *r = table.iter().map(|l| l[j]).fold(f64::NEG_INFINITY, f64::max) / t;
    }
    if f(n as f64) >= 0.0 {
        return Ok(DimensionEstimate { dimension: n as f64, saturated: true, horizon: t, omega_rates });
    }
    if f(tol.clamp(f64::EPSILON, 1e-12)) < 0.0 || omega_rates[1] < 0.0 {
        return Ok(DimensionEstimate { dimension: 0.0, saturated: false, horizon: t, omega_rates });
    }
    let (mut lo, mut hi) = (0.0, n as f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(DimensionEstimate { dimension: 0.5 * (lo + hi), saturated: false, horizon: t, omega_rates })
}

/// Result of [`lyapunov_metric`].
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovMetric {
    /// `n_q(ξ)`.
    pub value: f64,
    /// Infinitesimal growth exponent `α` in the metric.
    pub alpha: f64,
    /// Set when the observed growth over `[0, T]` reaches `ν`.
    pub nu_warning: bool,
}

/// Lyapunov metric `n_q(ξ) = (∫₀^T ‖e^{−νt} Ξ^t(q) ξ‖^p dt)^{1/p}` with
/// composite Simpson quadrature on the base-step grid, and the exponent
/// `α = ν + (‖e^{−νT}Ξ^T ξ‖^p − ‖ξ‖^p) / (p n^p)`.
pub fn lyapunov_metric(
    coc: &MatrixCocycle,
    nu: f64,
    t: f64,
    p: f64,
    q: usize,
    xi: &DVector<f64>,
) -> Result<LyapunovMetric> {
    if !(p >= 1.0) {
        return Err(Error::input(format!("metric exponent must be ≥ 1, got {p}")));
    }
    if xi.len() != coc.dim() {
        return Err(Error::DimensionMismatch { expected: coc.dim(), found: xi.len() });
    }
    if q >= coc.base_len() {
        return Err(Error::input(format!("base point {q} out of range")));
    }
    let norm0 = xi.norm();
    if norm0 == 0.0 {
        return Err(Error::DegenerateMetric("zero vector has no growth exponent".into()));
    }
    let k = coc.steps_for(t)?;
    if k == 0 {
        return Err(Error::input("horizon must be positive"));
    }
    let h = coc.base_step();
    let mut samples = Vec::with_capacity(k + 1);
    let mut v = xi.clone();
    let mut point = q;
    samples.push(norm0.powf(p));
    let mut max_growth = f64::NEG_INFINITY;
    for i in 1..=k {
        v = coc.step_matrix(point) * v;
        point = coc.next(point);
        let s = i as f64 * h;
        max_growth = max_growth.max((v.norm() / norm0).ln() / s);
        samples.push((v.norm() * (-nu * s).exp()).powf(p));
    }
    let integral = composite_simpson(&samples, h);
    let value = integral.powf(1.0 / p);
    let alpha = nu + (samples[k] - samples[0]) / (p * integral);
    Ok(LyapunovMetric { value, alpha, nu_warning: max_growth >= nu })
}

/// Simpson on a uniform grid, with a trailing Simpson 3/8 panel for odd counts.
pub(crate) fn composite_simpson(f: &[f64], h: f64) -> f64 {
    let intervals = f.len().saturating_sub(1);
    match intervals {
        0 => 0.0,
        1 => 0.5 * h * (f[0] + f[1]),
        2 => h / 3.0 * (f[0] + 4.0 * f[1] + f[2]),
        _ => {
            let (even, tail) = if intervals.is_multiple_of(2) { (intervals, 0) } else { (intervals - 3, 3) };
            let mut s = 0.0;
            for i in (0..even).step_by(2) {
                s += f[i] + 4.0 * f[i + 1] + f[i + 2];
            }
            let mut total = s * h / 3.0;
            if tail == 3 {
                let i = even;
                total += 3.0 * h / 8.0 * (f[i] + 3.0 * f[i + 1] + 3.0 * f[i + 2] + f[i + 3]);
            }
            total
        }
    }
}

/// Result of [`liouville_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct LiouvilleReport {
    pub max_relative_error: f64,
    /// `ln` of the final volume ratio.
    pub log_volume: f64,
    /// Final value of `∫₀^T Tr(Π A Π) ds`.
    pub trace_integral: f64,
}

fn gram_log_det(v: &DMatrix<f64>) -> Option<f64> {
    let g = v.transpose() * v;
    g.cholesky().map(|c| 2.0 * c.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

fn projected_trace(a: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    // Tr(Π A) with Π = V (VᵀV)⁻¹ Vᵀ
    let g = v.transpose() * v;
    let av = a * v;
    let rhs = v.transpose() * av;
    match g.cholesky() {
        Some(c) => c.solve(&rhs).trace(),
        None => f64::NAN,
    }
}

/// Integrates `v̇ = A(t)v` for an `m`-frame together with the projected trace
/// by one RK4 scheme and compares the frame volume with the exponential of
/// the accumulated trace.
pub fn liouville_check<F>(a: F, frame: &DMatrix<f64>, t: f64, dt: f64) -> Result<LiouvilleReport>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let n = frame.nrows();
    let a0 = a(0.0);
    if a0.nrows() != n || a0.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a0.nrows() });
    }
    if !(dt > 0.0) || !(t > 0.0) {
        return Err(Error::input("horizon and step must be positive"));
    }
    let Some(ld0) = gram_log_det(frame) else {
        return Err(Error::input("initial frame is degenerate"));
    };
    let svals = frame.singular_values();
    let smin = svals.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = svals.iter().cloned().fold(0.0, f64::max);
    if frame.ncols() == 0 || smin <= 1e-12 * smax {
        return Err(Error::input("initial frame is degenerate"));
    }
    let steps = (t / dt).round() as usize;
    let rhs = |time: f64, v: &DMatrix<f64>| -> (DMatrix<f64>, f64) {
        let at = a(time);
        let tr = projected_trace(&at, v);
        (at * v, tr)
    };
    let mut v = frame.clone();
    let mut s = 0.0;
    let mut worst: f64 = 0.0;
    let mut log_vol = 0.0;
    for i in 0..steps {
        let t0 = i as f64 * dt;
        let (k1, s1) = rhs(t0, &v);
        let (k2, s2) = rhs(t0 + 0.5 * dt, &(&v + &k1 * (0.5 * dt)));
        let (k3, s3) = rhs(t0 + 0.5 * dt, &(&v + &k2 * (0.5 * dt)));
        let (k4, s4) = rhs(t0 + dt, &(&v + &k3 * dt));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        s += (s1 + 2.0 * s2 + 2.0 * s3 + s4) * (dt / 6.0);
        let ld = gram_log_det(&v).ok_or_else(|| Error::NonConvergence("frame collapsed".into()))?;
        log_vol = 0.5 * (ld - ld0);
        worst = worst.max((log_vol - s).exp_m1().abs());
        if !worst.is_finite() {
            return Err(Error::Blowup { t: t0 + dt });
        }
    }
    Ok(LiouvilleReport { max_relative_error: worst, log_volume: log_vol, trace_integral: s })
}

/// Per-equilibrium growth exponents of `ω_m` and their maximum, next to the
/// uniform exponent computed from volume growth over the base.
#[derive(Debug, Clone, PartialEq)]
pub struct EvpReport {
    pub m: usize,
    pub per_equilibrium: Vec<f64>,
    pub max_rate: f64,
    pub argmax: usize,
    pub uniform_rate: f64,
}

/// The variational principle over a base of equilibria.
pub fn evp_finite_base(coc: &MatrixCocycle, m: usize, t: f64) -> Result<EvpReport> {
    if m == 0 || m > coc.dim() {
        return Err(Error::input(format!("order {m} outside 1..={}", coc.dim())));
    }
    if let Some(q) = (0..coc.base_len()).find(|&q| coc.next(q) != q) {
        return Err(Error::input(format!("base point {} is not an equilibrium", coc.labels()[q])));
    }
    let h = coc.base_step();
    let per_equilibrium: Vec<f64> = (0..coc.base_len())
        .map(|q| {
            let mut moduli: Vec<f64> = coc.step_matrix(q).complex_eigenvalues().iter().map(|z| z.norm().ln()).collect();
            moduli.sort_by(|a, b| b.total_cmp(a));
            moduli[..m].iter().sum::<f64>() / h
        })
        .collect();
    let (argmax, max_rate) =
        per_equilibrium
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    let (sums, _) = sup_rates(coc, m, t)?;
    Ok(EvpReport { m, per_equilibrium, max_rate, argmax, uniform_rate: sums[m - 1] })
}
