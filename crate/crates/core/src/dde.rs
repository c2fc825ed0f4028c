//! Method-of-steps RK4 integration of delay equations, linearized monodromy
//! maps and numerical Lyapunov spectra.
//!
//! Grids are uniform with the step dividing every delay, so breakpoints at
//! multiples of the delays fall on grid nodes and no RK4 stage straddles one.
//! The nonlinear solver interpolates delayed values with cubic Hermite
//! polynomials built from stored slopes, keeping one-sided slopes at `t = 0`.
//! Tangent vectors are histories sampled on a grid; within each delay window
//! they are advanced with values-only cubic interpolation so that a window map
//! depends on nothing but the grid values at the window start.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{mg_f, mg_f_prime};
use crate::cocycle::{generic_frame, kaplan_yorke_partial, QrAccumulator};
use crate::error::{Error, Result};

/// A system `ẋ(t) = f(t, x(t), x(t−τ₁), …, x(t−τ_J))`.
pub trait DelayModel: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Strictly increasing positive delays; the last one is `τ`.
    fn delays(&self) -> Vec<f64>;
    fn tau(&self) -> f64 {
        *self.delays().last().expect("at least one delay")
    }
    /// `delayed` holds `x(t−τ_j)` for each delay, concatenated.
    fn rhs(&self, t: f64, x: &[f64], delayed: &[f64], out: &mut [f64]);
    /// `(∂f/∂x(t), [∂f/∂x(t−τ_j)])`.
    fn jacobians(&self, t: f64, x: &[f64], delayed: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>);
    fn forcing_period(&self) -> Option<f64> {
        None
    }
}

/// `ẋ = −γx + βF(x(t−τ))` with `F(y) = y/(1+|y|^k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MackeyGlass {
    pub beta: f64,
    pub gamma: f64,
    pub k: f64,
    pub tau: f64,
}

impl MackeyGlass {
    pub fn new(beta: f64, gamma: f64, k: f64, tau: f64) -> Result<Self> {
        if !(beta > 0.0 && gamma >= 0.0 && k > 1.0 && tau > 0.0) {
            return Err(Error::input("Mackey-Glass needs β > 0, γ ≥ 0, k > 1, τ > 0"));
        }
        Ok(Self { beta, gamma, k, tau })
    }

    pub fn classical(tau: f64) -> Self {
        Self { beta: 0.2, gamma: 0.1, k: 10.0, tau }
    }

    /// `0` and, for `β > γ`, `±(β/γ − 1)^{1/k}`.
    pub fn equilibria(&self) -> Vec<f64> {
        if self.beta > self.gamma && self.gamma > 0.0 {
            let x = (self.beta / self.gamma - 1.0).powf(1.0 / self.k);
            vec![-x, 0.0, x]
        } else {
            vec![0.0]
        }
    }
}

impl DelayModel for MackeyGlass {
    fn name(&self) -> &str {
        "mackey_glass"
    }
    fn dim(&self) -> usize {
        1
    }
    fn delays(&self) -> Vec<f64> {
        vec![self.tau]
    }
    fn rhs(&self, _t: f64, x: &[f64], delayed: &[f64], out: &mut [f64]) {
        out[0] = -self.gamma * x[0] + self.beta * mg_f(delayed[0], self.k);
    }
    fn jacobians(&self, _t: f64, _x: &[f64], delayed: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        (
            DMatrix::from_element(1, 1, -self.gamma),
            vec![DMatrix::from_element(1, 1, self.beta * mg_f_prime(delayed[0], self.k))],
        )
    }
}

/// Forced delayed oscillator `ẋ = x − αx(t−τ) − x³ + A sin t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuarezSchopf {
    pub alpha: f64,
    pub amplitude: f64,
    pub tau: f64,
}

impl SuarezSchopf {
    pub fn new(alpha: f64, amplitude: f64, tau: f64) -> Result<Self> {
        if !(alpha > 0.0 && tau > 0.0 && amplitude.is_finite()) {
            return Err(Error::input("Suarez-Schopf needs α > 0, τ > 0 and finite A"));
        }
        Ok(Self { alpha, amplitude, tau })
    }

    /// Real solutions of `x − αx − x³ = 0`.
    pub fn equilibria(&self) -> Vec<f64> {
        if self.alpha < 1.0 {
            let x = (1.0 - self.alpha).sqrt();
            vec![-x, 0.0, x]
        } else {
            vec![0.0]
        }
    }
}

impl DelayModel for SuarezSchopf {
    fn name(&self) -> &str {
        "suarez_schopf"
    }
    fn dim(&self) -> usize {
        1
    }
    fn delays(&self) -> Vec<f64> {
        vec![self.tau]
    }
    fn rhs(&self, t: f64, x: &[f64], delayed: &[f64], out: &mut [f64]) {
        out[0] = x[0] - self.alpha * delayed[0] - x[0].powi(3) + self.amplitude * t.sin();
    }
    fn jacobians(&self, _t: f64, x: &[f64], _delayed: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        (DMatrix::from_element(1, 1, 1.0 - 3.0 * x[0] * x[0]), vec![DMatrix::from_element(1, 1, -self.alpha)])
    }
    fn forcing_period(&self) -> Option<f64> {
        (self.amplitude != 0.0).then_some(2.0 * std::f64::consts::PI)
    }
}

/// `ẋ = A₀x(t) + A_τ x(t−τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDelay {
    pub a0: DMatrix<f64>,
    pub a_tau: DMatrix<f64>,
    pub tau: f64,
}

impl LinearDelay {
    pub fn new(a0: DMatrix<f64>, a_tau: DMatrix<f64>, tau: f64) -> Result<Self> {
        if a0.nrows() == 0 || a0.shape() != (a0.nrows(), a0.nrows()) || a_tau.shape() != a0.shape() {
            return Err(Error::input("linear delay model needs square matrices of equal size"));
        }
        if !(tau > 0.0) {
            return Err(Error::input("delay must be positive"));
        }
        Ok(Self { a0, a_tau, tau })
    }

    pub fn scalar(a: f64, b: f64, tau: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b), tau)
    }
}

impl DelayModel for LinearDelay {
    fn name(&self) -> &str {
        "custom"
    }
    fn dim(&self) -> usize {
        self.a0.nrows()
    }
    fn delays(&self) -> Vec<f64> {
        vec![self.tau]
    }
    fn rhs(&self, _t: f64, x: &[f64], delayed: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut s = 0.0;
            for j in 0..n {
                s += self.a0[(i, j)] * x[j] + self.a_tau[(i, j)] * delayed[j];
            }
            *o = s;
        }
    }
    fn jacobians(&self, _t: f64, _x: &[f64], _delayed: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        (self.a0.clone(), vec![self.a_tau.clone()])
    }
}

/// Largest relative mismatch between the model Jacobians and central
/// differences of the right-hand side on random states in `[-scale, scale]`.
pub fn jacobian_consistency(model: &dyn DelayModel, samples: usize, scale: f64, seed: u64) -> f64 {
    let n = model.dim();
    let nd = model.delays().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for _ in 0..samples {
        let t = rng.gen_range(0.0..10.0);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
        let d: Vec<f64> = (0..n * nd).map(|_| rng.gen_range(-scale..scale)).collect();
        let (j0, jd) = model.jacobians(t, &x, &d);
        for c in 0..n {
            let h = 1e-6 * x[c].abs().max(1.0);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += h;
            xm[c] -= h;
            model.rhs(t, &xp, &d, &mut plus);
            model.rhs(t, &xm, &d, &mut minus);
            for r in 0..n {
                let fd = (plus[r] - minus[r]) / (2.0 * h);
                worst = worst.max((fd - j0[(r, c)]).abs() / j0[(r, c)].abs().max(1.0));
            }
        }
        for (k, jk) in jd.iter().enumerate() {
            for c in 0..n {
                let idx = k * n + c;
                let h = 1e-6 * d[idx].abs().max(1.0);
                let (mut dp, mut dm) = (d.clone(), d.clone());
                dp[idx] += h;
                dm[idx] -= h;
                model.rhs(t, &x, &dp, &mut plus);
                model.rhs(t, &x, &dm, &mut minus);
                for r in 0..n {
                    let fd = (plus[r] - minus[r]) / (2.0 * h);
                    worst = worst.max((fd - jk[(r, c)]).abs() / jk[(r, c)].abs().max(1.0));
                }
            }
        }
    }
    worst
}

fn hermite(v0: f64, v1: f64, s0: f64, s1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * v0 + (s3 - 2.0 * s2 + s) * h * s0 + (-2.0 * s3 + 3.0 * s2) * v1 + (s3 - s2) * h * s1
}

/// Samples of a history on the uniform grid `θ_i = −τ + i·τ/M`, `i = 0..=M`,
/// with slopes for cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySegment {
    pub n: usize,
    pub tau: f64,
    /// Node-major values, `(M+1)·n` entries.
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl HistorySegment {
    /// Samples `f` and its derivative `df` on `M + 1` nodes.
    pub fn from_fn<F, G>(n: usize, tau: f64, intervals: usize, f: F, df: G) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
        G: Fn(f64) -> Vec<f64>,
    {
        if intervals == 0 || !(tau > 0.0) {
            return Err(Error::input("history needs a positive delay and at least one interval"));
        }
        let h = tau / intervals as f64;
        let mut values = Vec::with_capacity((intervals + 1) * n);
        let mut slopes = Vec::with_capacity((intervals + 1) * n);
        for i in 0..=intervals {
            let t = -tau + i as f64 * h;
            let (v, d) = (f(t), df(t));
            if v.len() != n || d.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len().min(d.len()) });
            }
            values.extend(v);
            slopes.extend(d);
        }
        Ok(Self { n, tau, values, slopes })
    }

    pub fn constant(x: &[f64], tau: f64, intervals: usize) -> Result<Self> {
        let n = x.len();
        Self::from_fn(n, tau, intervals, |_| x.to_vec(), |_| vec![0.0; n])
    }

    /// Samples with three-point difference slopes.
    pub fn from_samples(n: usize, tau: f64, values: Vec<f64>) -> Result<Self> {
        if n == 0 || !values.len().is_multiple_of(n) || values.len() / n < 2 {
            return Err(Error::input("history samples must hold at least two nodes"));
        }
        let nodes = values.len() / n;
        let h = tau / (nodes - 1) as f64;
        let mut slopes = vec![0.0; values.len()];
        for i in 0..nodes {
            for c in 0..n {
                let v = |k: usize| values[k * n + c];
                slopes[i * n + c] = if nodes == 2 {
                    (v(1) - v(0)) / h
                } else if i == 0 {
                    (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h)
                } else if i == nodes - 1 {
                    (3.0 * v(i) - 4.0 * v(i - 1) + v(i - 2)) / (2.0 * h)
                } else {
                    (v(i + 1) - v(i - 1)) / (2.0 * h)
                };
            }
        }
        Ok(Self { n, tau, values, slopes })
    }

    pub fn intervals(&self) -> usize {
        self.values.len() / self.n - 1
    }

    pub fn step(&self) -> f64 {
        self.tau / self.intervals() as f64
    }

    pub fn head(&self) -> &[f64] {
        &self.values[self.values.len() - self.n..]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }

    /// Hermite interpolant at `θ ∈ [−τ, 0]`.
    pub fn eval(&self, theta: f64) -> Vec<f64> {
        let h = self.step();
        let m = self.intervals();
        let pos = ((theta + self.tau) / h).clamp(0.0, m as f64);
        let cell = (pos.floor() as usize).min(m - 1);
        let s = pos - cell as f64;
        (0..self.n)
            .map(|c| {
                let i0 = cell * self.n + c;
                let i1 = i0 + self.n;
                hermite(self.values[i0], self.values[i1], self.slopes[i0], self.slopes[i1], h, s)
            })
            .collect()
    }

    /// Derivative of the Hermite interpolant.
    fn eval_slope(&self, theta: f64) -> Vec<f64> {
        let h = self.step();
        let m = self.intervals();
        let pos = ((theta + self.tau) / h).clamp(0.0, m as f64);
        let cell = (pos.floor() as usize).min(m - 1);
        let s = pos - cell as f64;
        (0..self.n)
            .map(|c| {
                let i0 = cell * self.n + c;
                let i1 = i0 + self.n;
                let (v0, v1, s0, s1) = (self.values[i0], self.values[i1], self.slopes[i0], self.slopes[i1]);
                ((6.0 * s * s - 6.0 * s) * (v0 - v1)) / h
                    + (3.0 * s * s - 4.0 * s + 1.0) * s0
                    + (3.0 * s * s - 2.0 * s) * s1
            })
            .collect()
    }

    /// The same history on a grid with `intervals` cells.
    pub fn resampled(&self, intervals: usize) -> Result<Self> {
        if intervals == self.intervals() {
            return Ok(self.clone());
        }
        Self::from_fn(self.n, self.tau, intervals, |t| self.eval(t), |t| self.eval_slope(t))
    }
}

fn grid_count(span: f64, dt: f64, what: &str) -> Result<usize> {
    let k = (span / dt).round();
    if !(dt > 0.0) || k < 1.0 || ((k * dt - span).abs() > 1e-9 * span.max(1.0)) {
        return Err(Error::input(format!("step {dt} must divide the {what} {span}")));
    }
    Ok(k as usize)
}

/// A solution on a uniform grid starting at `t = −τ`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: usize,
    pub dt: f64,
    /// Grid cells per delay `τ`; node `m` is `t = 0`.
    pub m: usize,
    values: Vec<f64>,
    /// Right slopes at every node.
    slopes: Vec<f64>,
    /// Slope of the initial history at `t = 0⁻`.
    left_slope_at_zero: Vec<f64>,
}

impl Trajectory {
    pub fn nodes(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn t_end(&self) -> f64 {
        (self.nodes() - 1 - self.m) as f64 * self.dt
    }

    pub fn time_of(&self, node: usize) -> f64 {
        (node as f64 - self.m as f64) * self.dt
    }

    pub fn node_value(&self, node: usize) -> &[f64] {
        &self.values[node * self.n..(node + 1) * self.n]
    }

    fn left_slope(&self, node: usize) -> &[f64] {
        if node == self.m {
            &self.left_slope_at_zero
        } else {
            &self.slopes[node * self.n..(node + 1) * self.n]
        }
    }

    /// Hermite interpolant at `t ∈ [−τ, T]`.
    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let pos = (t / self.dt + self.m as f64).clamp(0.0, (self.nodes() - 1) as f64);
        let cell = (pos.floor() as usize).min(self.nodes() - 2);
        let s = pos - cell as f64;
        let (v0, v1) = (self.node_value(cell), self.node_value(cell + 1));
        let s0 = &self.slopes[cell * self.n..(cell + 1) * self.n];
        let s1 = self.left_slope(cell + 1);
        for c in 0..self.n {
            out[c] = hermite(v0[c], v1[c], s0[c], s1[c], self.dt, s);
        }
    }

    /// History `x_t` on the integration grid; `t` must be a grid time.
    pub fn history_at(&self, t: f64) -> Result<HistorySegment> {
        let end = grid_count(t + self.m as f64 * self.dt, self.dt, "time offset")?;
        if end < self.m || end >= self.nodes() {
            return Err(Error::input(format!("time {t} outside the trajectory")));
        }
        let start = end - self.m;
        let values = self.values[start * self.n..(end + 1) * self.n].to_vec();
        let mut slopes = self.slopes[start * self.n..(end + 1) * self.n].to_vec();
        // slope at the window end is the left one
        slopes[self.m * self.n..].copy_from_slice(self.left_slope(end));
        Ok(HistorySegment { n: self.n, tau: self.m as f64 * self.dt, values, slopes })
    }

    /// Largest `|x_c(t)|` over nodes with `t ≥ t0`.
    pub fn sup_norm_from(&self, t0: f64) -> f64 {
        let first = ((t0 / self.dt).ceil() as isize + self.m as isize).max(0) as usize;
        self.values[first.min(self.nodes()) * self.n..].iter().fold(0.0, |a, &b| a.max(b.abs()))
    }

    /// Rows `t, x_1, …, x_n` for nodes with `t ≥ 0`, every `stride` nodes.
    pub fn rows(&self, stride: usize) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        (self.m..self.nodes()).step_by(stride.max(1)).map(move |k| (self.time_of(k), self.node_value(k)))
    }
}

/// Result of [`integrate`].
#[derive(Debug, Clone)]
pub struct Integration {
    pub trajectory: Trajectory,
    /// Max node difference against a run with half the step, when requested.
    pub halving_error: Option<f64>,
}

/// RK4 method of steps on `[0, T]` from history `h0`.
pub fn integrate(model: &dyn DelayModel, h0: &HistorySegment, t_end: f64, dt: f64) -> Result<Trajectory> {
    let n = model.dim();
    if h0.n != n {
        return Err(Error::DimensionMismatch { expected: n, found: h0.n });
    }
    let tau = model.tau();
    if (h0.tau - tau).abs() > 1e-12 * tau {
        return Err(Error::input(format!("history covers {} but the delay is {tau}", h0.tau)));
    }
    let m = grid_count(tau, dt, "delay")?;
    if m < 10 {
        return Err(Error::input(format!("step {dt} exceeds τ/10")));
    }
    let lags: Vec<usize> = model.delays().iter().map(|&d| grid_count(d, dt, "delay")).collect::<Result<_>>()?;
    let steps = if t_end <= 0.0 { 0 } else { grid_count(t_end, dt, "horizon")? };
    let h = h0.resampled(m)?;
    let total = m + steps + 1;
    let mut values = Vec::with_capacity(total * n);
    let mut slopes = Vec::with_capacity(total * n);
    values.extend_from_slice(&h.values);
    slopes.extend_from_slice(&h.slopes);
    let left0 = h.slopes[m * n..].to_vec();
    let nd = lags.len();
    let mut delayed = vec![0.0; nd * n];
    let mut f0 = vec![0.0; n];
    // right slope at t = 0
    for (j, &l) in lags.iter().enumerate() {
        delayed[j * n..(j + 1) * n].copy_from_slice(&values[(m - l) * n..(m - l + 1) * n]);
    }
    model.rhs(0.0, &values[m * n..(m + 1) * n], &delayed, &mut f0);
    slopes[m * n..(m + 1) * n].copy_from_slice(&f0);

    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut stage = vec![0.0; n];
    let mut mid_delayed = vec![0.0; nd * n];
    let mut end_delayed = vec![0.0; nd * n];
    for i in 0..steps {
        let p = m + i;
        let t = i as f64 * dt;
        for (j, &l) in lags.iter().enumerate() {
            let c = p - l;
            for comp in 0..n {
                let v0 = values[c * n + comp];
                let v1 = values[(c + 1) * n + comp];
                let s0 = slopes[c * n + comp];
                let s1 = if c + 1 == m { left0[comp] } else { slopes[(c + 1) * n + comp] };
                delayed[j * n + comp] = v0;
                mid_delayed[j * n + comp] = 0.5 * (v0 + v1) + dt * (s0 - s1) / 8.0;
                end_delayed[j * n + comp] = v1;
            }
        }
        let x: Vec<f64> = values[p * n..(p + 1) * n].to_vec();
        k[0].copy_from_slice(&slopes[p * n..(p + 1) * n]);
        for c in 0..n {
            stage[c] = x[c] + 0.5 * dt * k[0][c];
        }
        model.rhs(t + 0.5 * dt, &stage, &mid_delayed, &mut k[1]);
        for c in 0..n {
            stage[c] = x[c] + 0.5 * dt * k[1][c];
        }
        model.rhs(t + 0.5 * dt, &stage, &mid_delayed, &mut k[2]);
        for c in 0..n {
            stage[c] = x[c] + dt * k[2][c];
        }
        model.rhs(t + dt, &stage, &end_delayed, &mut k[3]);
        for c in 0..n {
            let v = x[c] + dt / 6.0 * (k[0][c] + 2.0 * k[1][c] + 2.0 * k[2][c] + k[3][c]);
            if !v.is_finite() {
                return Err(Error::Blowup { t: t + dt });
            }
            values.push(v);
        }
        model.rhs(t + dt, &values[(p + 1) * n..(p + 2) * n], &end_delayed, &mut f0);
        slopes.extend_from_slice(&f0);
    }
    Ok(Trajectory { n, dt, m, values, slopes, left_slope_at_zero: left0 })
}

/// [`integrate`] plus a step-halving comparison at the shared nodes.
pub fn integrate_with_estimate(
    model: &dyn DelayModel,
    h0: &HistorySegment,
    t_end: f64,
    dt: f64,
) -> Result<Integration> {
    let coarse = integrate(model, h0, t_end, dt)?;
    let fine = integrate(model, h0, t_end, dt / 2.0)?;
    let mut err: f64 = 0.0;
    for k in coarse.m..coarse.nodes() {
        let kf = fine.m + 2 * (k - coarse.m);
        for (a, b) in coarse.node_value(k).iter().zip(fine.node_value(kf)) {
            err = err.max((a - b).abs());
        }
    }
    Ok(Integration { trajectory: coarse, halving_error: Some(err) })
}

/// Outcome of [`invariant_ball_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallReport {
    pub radius: f64,
    pub samples: usize,
    pub max_sup_norm: f64,
    pub pass: bool,
    /// Index of the first violating sample, if any.
    pub witness: Option<usize>,
    pub blowup: Option<f64>,
}

/// Random smooth histories with sup-norm at most `r`: constants, sinusoids
/// and their mixtures, drawn from a seeded generator.
pub fn random_history(n: usize, tau: f64, intervals: usize, r: f64, rng: &mut ChaCha8Rng) -> Result<HistorySegment> {
    let kind = rng.gen_range(0..3);
    let amp: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let freq: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..3.0) * std::f64::consts::TAU / tau).collect();
    let phase: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let offset: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let raw = move |t: f64| -> Vec<f64> {
        (0..n)
            .map(|c| match kind {
                0 => amp[c],
                1 => amp[c] * (freq[c] * t + phase[c]).sin(),
                _ => 0.5 * offset[c] + 0.5 * amp[c] * (freq[c] * t + phase[c]).sin(),
            })
            .collect()
    };
    let draw = HistorySegment::from_fn(n, tau, intervals, &raw, |_| vec![0.0; n])?;
    let sup = draw.sup_norm().max(1e-300);
    let scale = r * rng.gen_range(0.05..1.0) / sup;
    HistorySegment::from_samples(n, tau, draw.values.iter().map(|v| v * scale).collect())
}

/// Integrates random histories inside the ball of radius `r` and checks
/// that the trajectories stay in it.
pub fn invariant_ball_check(
    model: &dyn DelayModel,
    r: f64,
    sample_count: usize,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<BallReport> {
    if !(r > 0.0) {
        return Err(Error::input("ball radius must be positive"));
    }
    let tau = model.tau();
    let m = grid_count(tau, dt, "delay")?;
    let results: Vec<(usize, Result<f64>)> = (0..sample_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let h = match random_history(model.dim(), tau, m, r, &mut rng) {
                Ok(h) => h,
                Err(e) => return (i, Err(e)),
            };
            (i, integrate(model, &h, t_end, dt).map(|tr| tr.sup_norm_from(-tau)))
        })
        .collect();
    let mut report =
        BallReport { radius: r, samples: sample_count, max_sup_norm: 0.0, pass: true, witness: None, blowup: None };
    for (i, res) in results {
        match res {
            Ok(s) => {
                report.max_sup_norm = report.max_sup_norm.max(s);
                if s > r * (1.0 + 1e-6) && report.witness.is_none() {
                    report.witness = Some(i);
                    report.pass = false;
                }
            }
            Err(Error::Blowup { t }) => {
                report.pass = false;
                report.blowup = Some(t);
                report.witness.get_or_insert(i);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// Advances tangent histories through whole delay windows.
///
/// `frame` has `(N+1)·n` rows, node-major with node 0 at `θ = −τ` and node
/// `N` the head. Returns the frame at `t_start + windows·τ`.
pub fn propagate_tangent(
    model: &dyn DelayModel,
    traj: &Trajectory,
    t_start: f64,
    intervals: usize,
    windows: usize,
    frame: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = model.dim();
    let tau = model.tau();
    let big_n = intervals;
    if frame.nrows() != (big_n + 1) * n {
        return Err(Error::DimensionMismatch { expected: (big_n + 1) * n, found: frame.nrows() });
    }
    let h = tau / big_n as f64;
    let lags: Vec<usize> = model.delays().iter().map(|&d| grid_count(d, h, "delay")).collect::<Result<_>>()?;
    if lags.iter().any(|&l| l < 2) {
        return Err(Error::input("each delay must span at least two tangent grid cells"));
    }
    if t_start < -1e-12 || t_start + windows as f64 * tau > traj.t_end() + 1e-9 * tau.max(1.0) {
        return Err(Error::input("tangent window exceeds the trajectory"));
    }
    let cols = frame.ncols();
    let nd = lags.len();
    let mut current = frame.clone();
    let mut x = vec![0.0; n];
    let mut xd = vec![0.0; nd * n];
    let jac_at = |t: f64, x: &mut [f64], xd: &mut [f64]| {
        traj.value_at(t, x);
        for (j, &d) in model.delays().iter().enumerate() {
            traj.value_at(t - d, &mut xd[j * n..(j + 1) * n]);
        }
        model.jacobians(t, x, xd)
    };
    for w in 0..windows {
        let t0 = t_start + w as f64 * tau;
        // u[node][comp][col]
        let width = n * cols;
        let mut u = vec![0.0; (2 * big_n + 1) * width];
        for node in 0..=big_n {
            for c in 0..n {
                for k in 0..cols {
                    u[node * width + c * cols + k] = current[(node * n + c, k)];
                }
            }
        }
        let mut stage = vec![0.0; width];
        let mut acc = vec![0.0; width];
        let mut kv = vec![0.0; width];
        let mut delayed = vec![0.0; nd * width];
        for i in 0..big_n {
            let t = t0 + i as f64 * h;
            let (a0, b0) = jac_at(t, &mut x, &mut xd);
            let (am, bm) = jac_at(t + 0.5 * h, &mut x, &mut xd);
            let (a1, b1) = jac_at(t + h, &mut x, &mut xd);
            let p = big_n + i;
            let base: Vec<f64> = u[p * width..(p + 1) * width].to_vec();
            // delayed samples at the stage times
            let fill = |which: u8, delayed: &mut [f64], u: &[f64]| {
                for (j, &l) in lags.iter().enumerate() {
                    let c = p - l;
                    for e in 0..width {
                        let at = |k: usize| u[k * width + e];
                        delayed[j * width + e] = match which {
                            0 => at(c),
                            2 => at(c + 1),
                            _ => {
                                if c == 0 {
                                    (5.0 * at(0) + 15.0 * at(1) - 5.0 * at(2) + at(3)) / 16.0
                                } else {
                                    (-at(c - 1) + 9.0 * at(c) + 9.0 * at(c + 1) - at(c + 2)) / 16.0
                                }
                            }
                        };
                    }
                }
            };
            let eval = |a: &DMatrix<f64>, b: &[DMatrix<f64>], v: &[f64], d: &[f64], out: &mut [f64]| {
                for r in 0..n {
                    for k in 0..cols {
                        let mut s = 0.0;
                        for c in 0..n {
                            s += a[(r, c)] * v[c * cols + k];
                            for (j, bj) in b.iter().enumerate() {
                                s += bj[(r, c)] * d[j * width + c * cols + k];
                            }
                        }
                        out[r * cols + k] = s;
                    }
                }
            };
            fill(0, &mut delayed, &u);
            eval(&a0, &b0, &base, &delayed, &mut kv);
            for e in 0..width {
                acc[e] = kv[e];
                stage[e] = base[e] + 0.5 * h * kv[e];
            }
            fill(1, &mut delayed, &u);
            eval(&am, &bm, &stage, &delayed, &mut kv);
            for e in 0..width {
                acc[e] += 2.0 * kv[e];
                stage[e] = base[e] + 0.5 * h * kv[e];
            }
            eval(&am, &bm, &stage, &delayed, &mut kv);
            for e in 0..width {
                acc[e] += 2.0 * kv[e];
                stage[e] = base[e] + h * kv[e];
            }
            fill(2, &mut delayed, &u);
            eval(&a1, &b1, &stage, &delayed, &mut kv);
            for e in 0..width {
                let v = base[e] + h / 6.0 * (acc[e] + kv[e]);
                if !v.is_finite() {
                    return Err(Error::Blowup { t: t + h });
                }
                u[(p + 1) * width + e] = v;
            }
        }
        for node in 0..=big_n {
            for c in 0..n {
                for k in 0..cols {
                    current[(node * n + c, k)] = u[(big_n + node) * width + c * cols + k];
                }
            }
        }
    }
    Ok(current)
}

/// Default tangent grid size per delay interval.
pub const DEFAULT_MONODROMY_NODES: usize = 64;

/// Matrix of the linearized map from the history grid at `t` to the
/// history grid at `t + τ`, of size `(N+1)·n`.
pub fn linearized_monodromy(
    model: &dyn DelayModel,
    traj: &Trajectory,
    t: f64,
    intervals: usize,
) -> Result<DMatrix<f64>> {
    let dim = (intervals + 1) * model.dim();
    propagate_tangent(model, traj, t, intervals, 1, &DMatrix::identity(dim, dim))
}

const DUMP_MAGIC: &[u8; 4] = b"LYPD";

/// Binary dump: magic `LYPD`, `n` and `N` as little-endian `u64`, then the
/// `(N+1)·n` square matrix row-major as little-endian `f64`.
pub fn write_matrix_dump<W: Write>(mut w: W, n: usize, intervals: usize, matrix: &DMatrix<f64>) -> Result<()> {
    let dim = (intervals + 1) * n;
    if matrix.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: matrix.nrows() });
    }
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&(intervals as u64).to_le_bytes())?;
    for r in 0..dim {
        for c in 0..dim {
            w.write_all(&matrix[(r, c)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_dump<R: Read>(mut r: R) -> Result<(usize, usize, DMatrix<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Io("not a monodromy dump".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let intervals = u64::from_le_bytes(word) as usize;
    let dim = (intervals + 1) * n;
    let mut data = vec![0.0; dim * dim];
    for v in data.iter_mut() {
        r.read_exact(&mut word)?;
        *v = f64::from_le_bytes(word);
    }
    Ok((n, intervals, DMatrix::from_row_slice(dim, dim, &data)))
}

/// Writes `t, x_1, …, x_n` rows for `t ≥ 0`.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory, stride: usize) -> Result<()> {
    writeln!(w, "# lyapdim v1")?;
    let cols: Vec<String> = (1..=traj.n).map(|i| format!("x_{i}")).collect();
    writeln!(w, "t,{}", cols.join(","))?;
    for (t, x) in traj.rows(stride) {
        let vals: Vec<String> = x.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(w, "{t:.12e},{}", vals.join(","))?;
    }
    Ok(())
}

/// Parameters of [`numerical_lyapunov_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovConfig {
    pub dt: f64,
    /// Transient discarded before accumulation, in units of `τ`.
    pub burn_in_delays: f64,
    pub horizon: f64,
    pub m: usize,
    pub seed: u64,
}

impl LyapunovConfig {
    pub fn new(dt: f64, horizon: f64, m: usize) -> Self {
        Self { dt, burn_in_delays: 50.0, horizon, m, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSpectrum {
    pub exponents: Vec<f64>,
    /// Estimates over the first half of the horizon.
    pub half_horizon_exponents: Vec<f64>,
    pub max_change: f64,
    /// `None` when all partial sums of the `m` exponents stay nonnegative.
    pub kaplan_yorke: Option<f64>,
    pub horizon: f64,
    pub windows: usize,
}

/// QR-accumulated exponents of the tangent cocycle along a trajectory.
/// The horizon is rounded down to whole delay windows.
pub fn numerical_lyapunov_spectrum(
    model: &dyn DelayModel,
    h0: &HistorySegment,
    cfg: &LyapunovConfig,
) -> Result<LyapunovSpectrum> {
    let tau = model.tau();
    let m_grid = grid_count(tau, cfg.dt, "delay")?;
    let dim = (m_grid + 1) * model.dim();
    if cfg.m == 0 || cfg.m > dim {
        return Err(Error::input(format!("order {} outside 1..={dim}", cfg.m)));
    }
    let windows = (cfg.horizon / tau).floor() as usize;
    if windows < 2 {
        return Err(Error::input("horizon must cover at least two delays"));
    }
    let burn = (cfg.burn_in_delays.max(0.0)).round() as usize;
    let traj = integrate(model, h0, (burn + windows) as f64 * tau, cfg.dt)?;
    let mut acc = QrAccumulator::new(generic_frame(dim, cfg.m, cfg.seed));
    let mut half = Vec::new();
    for w in 0..windows {
        let t = (burn + w) as f64 * tau;
        let next = propagate_tangent(model, &traj, t, m_grid, 1, acc.frame())?;
        acc.push(next);
        if acc.collapsed() {
            return Err(Error::NonConvergence("tangent frame collapsed".into()));
        }
        if w + 1 == windows / 2 {
            half = acc.column_sums().iter().map(|s| s / ((w + 1) as f64 * tau)).collect();
        }
    }
    let horizon = windows as f64 * tau;
    let exponents: Vec<f64> = acc.column_sums().iter().map(|s| s / horizon).collect();
    let max_change = exponents.iter().zip(&half).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(LyapunovSpectrum {
        kaplan_yorke: kaplan_yorke_partial(&exponents),
        exponents,
        half_horizon_exponents: half,
        max_change,
        horizon,
        windows,
    })
}

/// Leading eigenvalues (by modulus) of a monodromy matrix.
pub fn monodromy_multipliers(matrix: &DMatrix<f64>) -> Vec<num_complex::Complex64> {
    let mut ev: Vec<num_complex::Complex64> = matrix.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    ev
}
