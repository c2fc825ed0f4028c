//! Discretized delay-operator calculus on `ℝⁿ × L₂(−τ, 0; ℝⁿ)`.
//!
//! The history interval is split at the tap delays `0 = τ₀ < τ₁ < … < τ_J <
//! τ_{J+1} = τ`. Segment `j` is `[−τ_{j+1}, −τ_j]`, carries the weight
//! `ρ(θ) = e^{ϰ_j θ}` and is sampled at Chebyshev–Lobatto nodes in increasing
//! `θ`. Interior partition nodes therefore appear twice, once per adjacent
//! segment, which lets a sampled function carry both one-sided limits.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::sorted_hermitian_eigenvalues;

pub type Kernel = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

pub const DEFAULT_NODES: usize = 32;
/// Relative tolerance for discrete domain membership.
pub const DOMAIN_TOL: f64 = 1e-8;
/// Rayleigh quotients above this are reported as unbounded trace numbers.
pub const UNBOUNDED_THRESHOLD: f64 = 1e6;

/// `L̃φ = L₀φ(0) + L_{−τ}φ(−τ) + Σ_j L_{−τ_j}φ(−τ_j) + Σ_i ∫ M_i(θ)φ(θ) dθ`.
#[derive(Clone)]
pub struct DelayOperatorSpec {
    pub n: usize,
    pub tau: f64,
    pub l0: DMatrix<f64>,
    pub l_tau: DMatrix<f64>,
    pub taps: Vec<(f64, DMatrix<f64>)>,
    pub kernels: Vec<Kernel>,
}

impl fmt::Debug for DelayOperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelayOperatorSpec")
            .field("n", &self.n)
            .field("tau", &self.tau)
            .field("l0", &self.l0)
            .field("l_tau", &self.l_tau)
            .field("taps", &self.taps)
            .field("kernels", &self.kernels.len())
            .finish()
    }
}

impl DelayOperatorSpec {
    pub fn new(tau: f64, l0: DMatrix<f64>, l_tau: DMatrix<f64>, taps: Vec<(f64, DMatrix<f64>)>) -> Result<Self> {
        let n = l0.nrows();
        if n == 0 || l0.ncols() != n {
            return Err(Error::input("L₀ must be a nonempty square matrix"));
        }
        if l_tau.shape() != (n, n) {
            return Err(Error::DimensionMismatch { expected: n, found: l_tau.nrows() });
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::input(format!("delay must be positive, got {tau}")));
        }
        let mut last = 0.0;
        for (d, m) in &taps {
            if m.shape() != (n, n) {
                return Err(Error::DimensionMismatch { expected: n, found: m.nrows() });
            }
            if !(*d > last && *d < tau) {
                return Err(Error::input("tap delays must increase strictly inside (0, τ)"));
            }
            last = *d;
        }
        Ok(Self { n, tau, l0, l_tau, taps, kernels: Vec::new() })
    }

    pub fn scalar(tau: f64, l0: f64, l_tau: f64) -> Result<Self> {
        Self::new(tau, DMatrix::from_element(1, 1, l0), DMatrix::from_element(1, 1, l_tau), Vec::new())
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernels.push(kernel);
        self
    }

    /// `[0, τ₁, …, τ_J, τ]`.
    pub fn partition(&self) -> Vec<f64> {
        let mut p = vec![0.0];
        p.extend(self.taps.iter().map(|t| t.0));
        p.push(self.tau);
        p
    }

    fn kernel_sum(&self, theta: f64) -> Option<DMatrix<f64>> {
        let mut it = self.kernels.iter();
        let first = it.next()?;
        let mut acc = first(theta);
        for k in it {
            acc += k(theta);
        }
        Some(acc)
    }
}

/// Piecewise exponential weight `ρ(θ) = e^{ϰ_j θ}` on segment `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    kappas: Vec<f64>,
    partition: Vec<f64>,
}

impl WeightProfile {
    /// `partition = [0, τ₁, …, τ_J, τ]`, one `ϰ` per segment.
    pub fn new(kappas: Vec<f64>, partition: Vec<f64>) -> Result<Self> {
        if partition.len() < 2 || kappas.len() + 1 != partition.len() {
            return Err(Error::DimensionMismatch { expected: partition.len().saturating_sub(1), found: kappas.len() });
        }
        if partition[0] != 0.0 || partition.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("partition must start at 0 and increase strictly"));
        }
        if kappas.iter().any(|k| !k.is_finite()) {
            return Err(Error::input("nonfinite weight exponent"));
        }
        Ok(Self { kappas, partition })
    }

    pub fn uniform(kappa: f64, spec: &DelayOperatorSpec) -> Result<Self> {
        let p = spec.partition();
        Self::new(vec![kappa; p.len() - 1], p)
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn segments(&self) -> usize {
        self.kappas.len()
    }

    pub fn rho(&self, segment: usize, theta: f64) -> f64 {
        (self.kappas[segment] * theta).exp()
    }

    /// `ρ(−τ) = e^{−ϰ_J τ}`.
    pub fn rho_at_minus_tau(&self) -> f64 {
        let j = self.segments() - 1;
        (-self.kappas[j] * self.partition[j + 1]).exp()
    }

    /// `Δ_j(ρ) = e^{−ϰ_{j−1}τ_j} − e^{−ϰ_j τ_j}` for `j = 1..=J`.
    pub fn jump(&self, j: usize) -> f64 {
        let t = self.partition[j];
        (-self.kappas[j - 1] * t).exp() - (-self.kappas[j] * t).exp()
    }

    pub fn is_increasing(&self) -> bool {
        self.kappas.windows(2).all(|w| w[1] > w[0])
    }

    fn matches(&self, spec: &DelayOperatorSpec) -> Result<()> {
        let p = spec.partition();
        if p.len() != self.partition.len()
            || p.iter().zip(&self.partition).any(|(a, b)| (a - b).abs() > 1e-12 * spec.tau)
        {
            return Err(Error::input("weight partition does not match the tap delays"));
        }
        Ok(())
    }
}

/// Chebyshev–Lobatto nodes on `[−1, 1]` in increasing order.
pub fn lobatto_nodes(count: usize) -> Vec<f64> {
    let n = (count - 1) as f64;
    (0..count).map(|k| -(std::f64::consts::PI * k as f64 / n).cos()).collect()
}

/// Clenshaw–Curtis weights on `[−1, 1]` for [`lobatto_nodes`].
pub fn clenshaw_curtis_weights(count: usize) -> Vec<f64> {
    let n = count - 1;
    let mut w = vec![0.0; count];
    for (k, wk) in w.iter_mut().enumerate() {
        let theta = std::f64::consts::PI * k as f64 / n as f64;
        let mut s = 0.0;
        for j in 1..=n / 2 {
            let b = if 2 * j == n { 1.0 } else { 2.0 };
            s += b / (4.0 * (j * j) as f64 - 1.0) * (2.0 * j as f64 * theta).cos();
        }
        let c = if k == 0 || k == n { 1.0 } else { 2.0 };
        *wk = c / n as f64 * (1.0 - s);
    }
    w
}

/// Spectral differentiation matrix for [`lobatto_nodes`] on `[−1, 1]`.
pub fn chebyshev_diff_matrix(count: usize) -> DMatrix<f64> {
    let x = lobatto_nodes(count);
    let n = count - 1;
    let bary: Vec<f64> = (0..count)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                0.5 * s
            } else {
                s
            }
        })
        .collect();
    let mut d = DMatrix::zeros(count, count);
    for i in 0..count {
        let mut diag = 0.0;
        for j in 0..count {
            if i != j {
                let v = bary[j] / bary[i] / (x[i] - x[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Quadrature and differentiation data for a partitioned history interval.
#[derive(Debug, Clone)]
pub struct DelayGrid {
    partition: Vec<f64>,
    nodes: usize,
    /// `θ` samples per segment.
    thetas: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    diffs: Vec<DMatrix<f64>>,
}

impl DelayGrid {
    pub fn new(partition: &[f64], nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::input("need at least 3 nodes per segment"));
        }
        if partition.len() < 2 || partition.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("partition must increase strictly"));
        }
        let x = lobatto_nodes(nodes);
        let w = clenshaw_curtis_weights(nodes);
        let d = chebyshev_diff_matrix(nodes);
        let mut thetas = Vec::new();
        let mut weights = Vec::new();
        let mut diffs = Vec::new();
        for j in 0..partition.len() - 1 {
            let (left, right) = (-partition[j + 1], -partition[j]);
            let half = 0.5 * (right - left);
            thetas.push(x.iter().map(|&s| left + half * (s + 1.0)).collect());
            weights.push(w.iter().map(|&v| v * half).collect());
            diffs.push(&d / half);
        }
        Ok(Self { partition: partition.to_vec(), nodes, thetas, weights, diffs })
    }

    pub fn for_spec(spec: &DelayOperatorSpec, nodes: usize) -> Result<Self> {
        Self::new(&spec.partition(), nodes)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn segments(&self) -> usize {
        self.thetas.len()
    }

    pub fn thetas(&self, segment: usize) -> &[f64] {
        &self.thetas[segment]
    }

    pub fn weights(&self, segment: usize) -> &[f64] {
        &self.weights[segment]
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }
}

/// `(x, φ)` with `tail[j]` an `n × nodes` matrix of samples on segment `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedElement {
    pub head: DVector<f64>,
    pub tail: Vec<DMatrix<f64>>,
}

impl DiscretizedElement {
    /// Samples `f(segment, θ)`, letting `f` choose one-sided values at nodes.
    pub fn from_fn<F>(grid: &DelayGrid, head: DVector<f64>, f: F) -> Self
    where
        F: Fn(usize, f64) -> DVector<f64>,
    {
        let n = head.len();
        let tail = (0..grid.segments())
            .map(|j| {
                let mut m = DMatrix::zeros(n, grid.nodes());
                for (k, &t) in grid.thetas(j).iter().enumerate() {
                    m.set_column(k, &f(j, t));
                }
                m
            })
            .collect();
        Self { head, tail }
    }

    /// A continuous history `φ` with head `φ(0)`.
    pub fn from_history<F>(grid: &DelayGrid, f: F) -> Self
    where
        F: Fn(f64) -> DVector<f64>,
    {
        let head = f(0.0);
        Self::from_fn(grid, head, |_, t| f(t))
    }

    pub fn zeros(grid: &DelayGrid, n: usize) -> Self {
        Self::from_fn(grid, DVector::zeros(n), |_, _| DVector::zeros(n))
    }

    pub fn n(&self) -> usize {
        self.head.len()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { head: &self.head * c, tail: self.tail.iter().map(|m| m * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { head: &self.head + &other.head, tail: self.tail.iter().zip(&other.tail).map(|(a, b)| a + b).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.tail.iter().flat_map(|m| m.iter()).chain(self.head.iter()).fold(0.0, |a, &b| a.max(b.abs()))
    }

    fn check_grid(&self, grid: &DelayGrid) -> Result<()> {
        if self.tail.len() != grid.segments() {
            return Err(Error::DimensionMismatch { expected: grid.segments(), found: self.tail.len() });
        }
        for m in &self.tail {
            if m.ncols() != grid.nodes() || m.nrows() != self.n() {
                return Err(Error::input("tail samples do not match the grid"));
            }
        }
        Ok(())
    }

    /// Right limit `φ(−τ_j +)` for `j ≥ 1`, and `φ(0)` for `j = 0`.
    fn right_of(&self, j: usize) -> DVector<f64> {
        if j == 0 {
            self.tail[0].column(self.tail[0].ncols() - 1).into_owned()
        } else {
            self.tail[j - 1].column(0).into_owned()
        }
    }

    /// Left limit `φ(−τ_j −)`, with `φ(−τ)` for `j = J + 1`.
    fn left_of(&self, j: usize) -> DVector<f64> {
        let m = &self.tail[j];
        if j == self.tail.len() {
            unreachable!()
        }
        m.column(m.ncols() - 1).into_owned()
    }

    fn at_minus_tau(&self) -> DVector<f64> {
        self.tail.last().unwrap().column(0).into_owned()
    }
}

/// `⟨x, y⟩ + ∫ ρ(θ)⟨φ(θ), ψ(θ)⟩ dθ` by Clenshaw–Curtis per segment.
pub fn weighted_inner(
    v: &DiscretizedElement,
    w: &DiscretizedElement,
    rho: &WeightProfile,
    grid: &DelayGrid,
) -> Result<f64> {
    v.check_grid(grid)?;
    w.check_grid(grid)?;
    if v.n() != w.n() {
        return Err(Error::DimensionMismatch { expected: v.n(), found: w.n() });
    }
    if rho.segments() != grid.segments() {
        return Err(Error::DimensionMismatch { expected: grid.segments(), found: rho.segments() });
    }
    let mut s = v.head.dot(&w.head);
    for j in 0..grid.segments() {
        for (k, (&t, &q)) in grid.thetas(j).iter().zip(grid.weights(j)).enumerate() {
            s += q * rho.rho(j, t) * v.tail[j].column(k).dot(&w.tail[j].column(k));
        }
    }
    Ok(s)
}

fn tol_for(v: &DiscretizedElement) -> f64 {
    DOMAIN_TOL * v.max_abs().max(1.0)
}

/// Residuals of the `D(L)` constraints: continuity at interior nodes and `φ(0) = x`.
pub fn domain_residuals(v: &DiscretizedElement) -> Vec<f64> {
    let mut r = vec![(v.right_of(0) - &v.head).amax()];
    for j in 1..v.tail.len() {
        r.push((v.right_of(j) - v.left_of(j)).amax());
    }
    r
}

fn kernel_integral(spec: &DelayOperatorSpec, v: &DiscretizedElement, grid: &DelayGrid) -> DVector<f64> {
    let mut acc = DVector::zeros(spec.n);
    if spec.kernels.is_empty() {
        return acc;
    }
    for j in 0..grid.segments() {
        for (k, (&t, &q)) in grid.thetas(j).iter().zip(grid.weights(j)).enumerate() {
            let m = spec.kernel_sum(t).unwrap();
            acc += (m * v.tail[j].column(k)) * q;
        }
    }
    acc
}

/// `(x, φ) ↦ (L̃φ, φ′)` on the discrete domain of `L`.
pub fn apply_l(spec: &DelayOperatorSpec, v: &DiscretizedElement, grid: &DelayGrid) -> Result<DiscretizedElement> {
    v.check_grid(grid)?;
    if v.n() != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, found: v.n() });
    }
    if grid.segments() != spec.taps.len() + 1 {
        return Err(Error::input("grid partition does not match the tap delays"));
    }
    let res = domain_residuals(v);
    let tol = tol_for(v);
    if res.iter().any(|&r| r > tol) {
        return Err(Error::input(format!("element violates D(L): residuals {res:?}")));
    }
    let mut head = &spec.l0 * &v.head + &spec.l_tau * v.at_minus_tau();
    for (j, (_, m)) in spec.taps.iter().enumerate() {
        head += m * v.right_of(j + 1);
    }
    head += kernel_integral(spec, v, grid);
    let tail = v.tail.iter().zip(&grid.diffs).map(|(phi, d)| phi * d.transpose()).collect();
    Ok(DiscretizedElement { head, tail })
}

/// Residuals of the adjoint boundary conditions in order
/// `[ρ(−τ)ψ(−τ) − L_{−τ}ᵀy, Δ_1(ρψ) − L_{−τ_1}ᵀy, …]`.
pub fn adjoint_residuals(spec: &DelayOperatorSpec, rho: &WeightProfile, w: &DiscretizedElement) -> Vec<f64> {
    let y = &w.head;
    let mut r = vec![(w.at_minus_tau() * rho.rho_at_minus_tau() - spec.l_tau.transpose() * y).amax()];
    for (j, (d, m)) in spec.taps.iter().enumerate() {
        let idx = j + 1;
        let right = w.right_of(idx) * rho.rho(idx - 1, -d);
        let left = w.left_of(idx) * rho.rho(idx, -d);
        r.push((right - left - m.transpose() * y).amax());
    }
    r
}

/// `(y, ψ) ↦ (L₀ᵀy + ρ(0)ψ(0), −ψ′ − ϰ_jψ + (ΣM_iᵀ/ρ) y)`.
pub fn apply_l_star(
    spec: &DelayOperatorSpec,
    rho: &WeightProfile,
    w: &DiscretizedElement,
    grid: &DelayGrid,
) -> Result<DiscretizedElement> {
    w.check_grid(grid)?;
    rho.matches(spec)?;
    if w.n() != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, found: w.n() });
    }
    let res = adjoint_residuals(spec, rho, w);
    let tol = tol_for(w) * spec.l_tau.amax().max(1.0);
    if res.iter().any(|&r| r > tol) {
        return Err(Error::input(format!("element violates D(L*): residuals {res:?}")));
    }
    let head = spec.l0.transpose() * &w.head + w.right_of(0);
    let mut tail: Vec<DMatrix<f64>> = Vec::with_capacity(grid.segments());
    for j in 0..grid.segments() {
        let mut t = -(&w.tail[j] * grid.diffs[j].transpose()) - &w.tail[j] * rho.kappas()[j];
        if !spec.kernels.is_empty() {
            for (k, &theta) in grid.thetas(j).iter().enumerate() {
                let m = spec.kernel_sum(theta).unwrap();
                let add = m.transpose() * &w.head / rho.rho(j, theta);
                let mut col = t.column_mut(k);
                col += add;
            }
        }
        tail.push(t);
    }
    Ok(DiscretizedElement { head, tail })
}

/// Head block of `2S_L`: `L₀ + L₀ᵀ + ρ(0)I + L_{−τ}L_{−τ}ᵀ/ρ(−τ) + Σ L_{−τ_j}L_{−τ_j}ᵀ/Δ_j(ρ)`.
fn head_block(spec: &DelayOperatorSpec, rho: &WeightProfile) -> Result<DMatrix<f64>> {
    rho.matches(spec)?;
    let n = spec.n;
    let mut m = &spec.l0 + spec.l0.transpose() + DMatrix::identity(n, n);
    m += &spec.l_tau * spec.l_tau.transpose() / rho.rho_at_minus_tau();
    for (j, (_, l)) in spec.taps.iter().enumerate() {
        let delta = rho.jump(j + 1);
        if delta == 0.0 {
            return Err(Error::DegenerateMetric(format!("Δ_{}(ρ) = 0: no densely defined symmetrization", j + 1)));
        }
        m += l * l.transpose() / delta;
    }
    Ok(m)
}

/// Additive symmetrization `S_L(x, φ) = ½(y, ψ)`.
pub fn symmetrize_s(
    spec: &DelayOperatorSpec,
    rho: &WeightProfile,
    v: &DiscretizedElement,
    grid: &DelayGrid,
) -> Result<DiscretizedElement> {
    v.check_grid(grid)?;
    if v.n() != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, found: v.n() });
    }
    let m = head_block(spec, rho)?;
    let y = &m * &v.head + kernel_integral(spec, v, grid);
    let mut tail = Vec::with_capacity(grid.segments());
    for j in 0..grid.segments() {
        let mut t = &v.tail[j] * (-rho.kappas()[j]);
        if !spec.kernels.is_empty() {
            for (k, &theta) in grid.thetas(j).iter().enumerate() {
                let add = spec.kernel_sum(theta).unwrap().transpose() * &v.head / rho.rho(j, theta);
                let mut col = t.column_mut(k);
                col += add;
            }
        }
        tail.push(t);
    }
    Ok(DiscretizedElement { head: y, tail }.scale(0.5))
}

/// The bound matrix `L₀ + L₀ᵀ + e^{ϰ_Jτ}L_{−τ}L_{−τ}ᵀ + Σ_j L_{−τ_j}L_{−τ_j}ᵀ/Δ_j(ρ) + I`
/// and its eigenvalues in nonincreasing order. Kernels are ignored.
pub fn symmetrized_matrix(spec: &DelayOperatorSpec, rho: &WeightProfile) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if !rho.is_increasing() {
        return Err(Error::DegenerateMetric(format!("weight exponents {:?} do not increase strictly", rho.kappas())));
    }
    let m = head_block(spec, rho)?;
    let m = (&m + m.transpose()) * 0.5;
    let eig = sorted_hermitian_eigenvalues(&m);
    Ok((m, eig))
}

/// Flattening of discrete elements: head first, then segments in order,
/// node-major within a segment.
fn flatten(v: &DiscretizedElement) -> DVector<f64> {
    let mut out = Vec::with_capacity(v.n() * (1 + v.tail.iter().map(|m| m.ncols()).sum::<usize>()));
    out.extend(v.head.iter());
    for m in &v.tail {
        for k in 0..m.ncols() {
            out.extend(m.column(k).iter());
        }
    }
    DVector::from_vec(out)
}

fn unflatten(x: &DVector<f64>, n: usize, grid: &DelayGrid) -> DiscretizedElement {
    let head = DVector::from_iterator(n, x.iter().take(n).copied());
    let mut offset = n;
    let mut tail = Vec::with_capacity(grid.segments());
    for _ in 0..grid.segments() {
        let m = DMatrix::from_iterator(n, grid.nodes(), x.iter().skip(offset).take(n * grid.nodes()).copied());
        offset += n * grid.nodes();
        tail.push(m);
    }
    DiscretizedElement { head, tail }
}

fn weight_diagonal(rho: &WeightProfile, grid: &DelayGrid, n: usize) -> DVector<f64> {
    let mut w = vec![1.0; n];
    for j in 0..grid.segments() {
        for (&t, &q) in grid.thetas(j).iter().zip(grid.weights(j)) {
            w.extend(std::iter::repeat_n(q * rho.rho(j, t), n));
        }
    }
    DVector::from_vec(w)
}

/// Eigenvalues of the discretized `2S_L`, symmetrized in the weighted inner product.
pub fn discrete_s_spectrum(spec: &DelayOperatorSpec, rho: &WeightProfile, grid: &DelayGrid) -> Result<Vec<f64>> {
    let n = spec.n;
    let dim = n * (1 + grid.segments() * grid.nodes());
    let mut a = DMatrix::zeros(dim, dim);
    let mut e = DVector::zeros(dim);
    for c in 0..dim {
        e[c] = 1.0;
        let v = unflatten(&e, n, grid);
        a.set_column(c, &flatten(&symmetrize_s(spec, rho, &v, grid)?));
        e[c] = 0.0;
    }
    let w = weight_diagonal(rho, grid, n).map(f64::sqrt);
    let sym = DMatrix::from_fn(dim, dim, |i, j| 2.0 * w[i] * a[(i, j)] / w[j]);
    let sym = (&sym + sym.transpose()) * 0.5;
    Ok(sorted_hermitian_eigenvalues(&sym))
}

/// Outcome of the degeneracy probe.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceProbe {
    /// `(nodes, largest Rayleigh quotient found)` per refinement level.
    pub quotients: Vec<(usize, f64)>,
    pub unbounded: bool,
}

/// Rayleigh quotient `⟨Lv, v⟩/⟨v, v⟩` of a discrete `D(L)` vector that
/// equals a unit direction at one partition node and vanishes at every
/// other node. Uses closed forms for the endpoint entries of the
/// Chebyshev differentiation matrix and Clenshaw–Curtis weights.
fn node_bump_quotient(rho: &WeightProfile, node: usize, nodes: usize) -> f64 {
    let p = rho.partition();
    let n1 = (nodes - 1) as f64;
    let w_end = |len: f64| {
        let base = if (nodes - 1).is_multiple_of(2) { 1.0 / (n1 * n1 - 1.0) } else { 1.0 / (n1 * n1) };
        0.5 * len * base
    };
    let d_end = |len: f64| (2.0 * n1 * n1 + 1.0) / 6.0 * 2.0 / len;
    let t = p[node];
    // segment `node` ends at −τ_node on its right; segment `node − 1` starts there
    let (mut num, mut den) = (0.0, 0.0);
    if node < rho.segments() {
        let len = p[node + 1] - p[node];
        let r = rho.rho(node, -t);
        num += w_end(len) * r * d_end(len);
        den += w_end(len) * r;
    }
    if node >= 1 {
        let len = p[node] - p[node - 1];
        let r = rho.rho(node - 1, -t);
        num -= w_end(len) * r * d_end(len);
        den += w_end(len) * r;
    }
    num / den
}

/// Searches for unbounded Rayleigh quotients of the symmetric part of `L`
/// under grid refinement. Interior nodes with `Δ_j(ρ) < 0` yield quotients
/// growing like the squared node count.
pub fn trace_number_probe(
    spec: &DelayOperatorSpec,
    rho: &WeightProfile,
    start_nodes: usize,
    max_nodes: usize,
) -> Result<TraceProbe> {
    rho.matches(spec)?;
    let mut quotients = Vec::new();
    let mut nodes = start_nodes.max(3);
    let mut unbounded = false;
    while nodes <= max_nodes.max(start_nodes) {
        let mut best = f64::NEG_INFINITY;
        for node in 1..rho.segments() {
            best = best.max(node_bump_quotient(rho, node, nodes));
        }
        if nodes <= 128 {
            best = best.max(resolved_max_quotient(spec, rho, nodes)?);
        }
        quotients.push((nodes, best));
        if best > UNBOUNDED_THRESHOLD {
            unbounded = true;
            break;
        }
        nodes *= 2;
    }
    Ok(TraceProbe { quotients, unbounded })
}

/// Largest generalized Rayleigh quotient of the symmetric part of discrete
/// `L` over resolved elements of `D(L)`: continuous histories that are
/// polynomials of degree at most `nodes/2` on each segment. Restricting to
/// resolved functions keeps quadrature aliasing of the collocation
/// derivative out of the quotient.
pub fn resolved_max_quotient(spec: &DelayOperatorSpec, rho: &WeightProfile, nodes: usize) -> Result<f64> {
    let grid = DelayGrid::for_spec(spec, nodes)?;
    let n = spec.n;
    let segs = grid.segments();
    let degree = nodes / 2;
    let s = lobatto_nodes(nodes);
    let cheb = |k: usize, x: f64| (k as f64 * x.clamp(-1.0, 1.0).acos()).cos();
    // free parameters: head x and the coefficients of T_1..T_degree per segment;
    // the T_0 coefficients follow from φ(0) = x and continuity at the taps
    let free = n + segs * degree * n;
    let full = n * (1 + segs * nodes);
    let mut basis = DMatrix::zeros(full, free);
    for f in 0..free {
        let mut unit = vec![0.0; free];
        unit[f] = 1.0;
        let x = &unit[..n];
        let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(segs);
        for j in 0..segs {
            let mut c = vec![0.0; (degree + 1) * n];
            for k in 1..=degree {
                for comp in 0..n {
                    c[k * n + comp] = unit[n + (j * degree + k - 1) * n + comp];
                }
            }
            for comp in 0..n {
                let right_target = if j == 0 {
                    x[comp]
                } else {
                    let prev = &coeffs[j - 1];
                    (0..=degree).map(|k| if k % 2 == 0 { prev[k * n + comp] } else { -prev[k * n + comp] }).sum()
                };
                let rest: f64 = (1..=degree).map(|k| c[k * n + comp]).sum();
                c[comp] = right_target - rest;
            }
            coeffs.push(c);
        }
        for comp in 0..n {
            basis[(comp, f)] = x[comp];
        }
        for (j, c) in coeffs.iter().enumerate() {
            for (node, &sv) in s.iter().enumerate() {
                for comp in 0..n {
                    let v: f64 = (0..=degree).map(|k| c[k * n + comp] * cheb(k, sv)).sum();
                    basis[(n + (j * nodes + node) * n + comp, f)] = v;
                }
            }
        }
    }
    let mut lb = DMatrix::zeros(full, free);
    for c in 0..free {
        let v = unflatten(&basis.column(c).into_owned(), n, &grid);
        lb.set_column(c, &flatten(&apply_l(spec, &v, &grid)?));
    }
    let w = DMatrix::from_diagonal(&weight_diagonal(rho, &grid, n));
    let h = basis.transpose() * &w * lb;
    let h = (&h + h.transpose()) * 0.5;
    let g = basis.transpose() * w * &basis;
    let chol = g.cholesky().ok_or_else(|| Error::NonConvergence("singular Gram matrix".into()))?;
    let linv = chol.l().try_inverse().ok_or_else(|| Error::NonConvergence("singular Gram factor".into()))?;
    let c = &linv * h * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    Ok(c.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn quadrature_and_differentiation() {
        let w = clenshaw_curtis_weights(9);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        let x = lobatto_nodes(9);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(6)).sum();
        assert_relative_eq!(q, 2.0 / 7.0, epsilon = 1e-14);
        let d = chebyshev_diff_matrix(9);
        let f = DVector::from_iterator(9, x.iter().map(|x| x.powi(5)));
        let df = &d * f;
        for (i, xi) in x.iter().enumerate() {
            assert_relative_eq!(df[i], 5.0 * xi.powi(4), epsilon = 1e-12);
        }
    }

    #[test]
    fn endpoint_closed_forms() {
        for nodes in [8usize, 9, 32, 33] {
            let d = chebyshev_diff_matrix(nodes);
            let w = clenshaw_curtis_weights(nodes);
            let n1 = (nodes - 1) as f64;
            assert_relative_eq!(d[(nodes - 1, nodes - 1)], (2.0 * n1 * n1 + 1.0) / 6.0, max_relative = 1e-12);
            assert_relative_eq!(d[(0, 0)], -(2.0 * n1 * n1 + 1.0) / 6.0, max_relative = 1e-12);
            let base = if (nodes - 1) % 2 == 0 { 1.0 / (n1 * n1 - 1.0) } else { 1.0 / (n1 * n1) };
            assert_relative_eq!(w[0], base, max_relative = 1e-12);
        }
    }

    #[test]
    fn weighted_inner_examples() {
        let spec = DelayOperatorSpec::scalar(2.0, 0.0, 0.0).unwrap();
        let grid = DelayGrid::for_spec(&spec, 32).unwrap();
        let flat = WeightProfile::uniform(0.0, &spec).unwrap();
        let a = DiscretizedElement::from_fn(&grid, v1(3.0), |_, _| v1(0.0));
        let b = DiscretizedElement::from_fn(&grid, v1(-2.0), |_, _| v1(0.0));
        assert_eq!(weighted_inner(&a, &b, &flat, &grid).unwrap(), -6.0);
        let kappa = 0.7;
        let rho = WeightProfile::uniform(kappa, &spec).unwrap();
        let one = DiscretizedElement::from_fn(&grid, v1(0.0), |_, _| v1(1.0));
        let got = weighted_inner(&one, &one, &rho, &grid).unwrap();
        assert_relative_eq!(got, (1.0 - (-kappa * 2.0).exp()) / kappa, epsilon = 1e-10);
        let c = DiscretizedElement::from_history(&grid, |t| v1(t.sin()));
        let d = DiscretizedElement::from_history(&grid, |t| v1(t * t + 1.0));
        assert_relative_eq!(
            weighted_inner(&c, &d, &rho, &grid).unwrap(),
            weighted_inner(&d, &c, &rho, &grid).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn apply_l_examples() {
        let spec = DelayOperatorSpec::new(
            1.5,
            DMatrix::from_element(1, 1, -0.3),
            DMatrix::from_element(1, 1, 0.8),
            vec![(0.5, DMatrix::from_element(1, 1, 0.25))],
        )
        .unwrap();
        let grid = DelayGrid::for_spec(&spec, 32).unwrap();
        let c = DiscretizedElement::from_history(&grid, |_| v1(2.0));
        let lc = apply_l(&spec, &c, &grid).unwrap();
        assert_relative_eq!(lc.head[0], (-0.3 + 0.8 + 0.25) * 2.0, epsilon = 1e-13);
        assert!(lc.tail.iter().all(|m| m.amax() < 1e-11));
        let lambda = 0.4;
        let e = DiscretizedElement::from_history(&grid, |t| v1((lambda * t).exp()));
        let le = apply_l(&spec, &e, &grid).unwrap();
        let expect = -0.3 + 0.8 * (-lambda * 1.5).exp() + 0.25 * (-lambda * 0.5).exp();
        assert_relative_eq!(le.head[0], expect, epsilon = 1e-13);
        for j in 0..grid.segments() {
            for (k, &t) in grid.thetas(j).iter().enumerate() {
                assert!((le.tail[j][(0, k)] - lambda * (lambda * t).exp()).abs() < 1e-11);
            }
        }
        let broken = DiscretizedElement::from_fn(&grid, v1(1.0), |_, _| v1(0.0));
        assert!(apply_l(&spec, &broken, &grid).is_err());
    }

    #[test]
    fn apply_l_star_examples() {
        let spec = DelayOperatorSpec::scalar(1.0, 0.5, 0.0).unwrap();
        let grid = DelayGrid::for_spec(&spec, 32).unwrap();
        let flat = WeightProfile::uniform(0.0, &spec).unwrap();
        // transport with reversed sign
        let w = DiscretizedElement::from_fn(&grid, v1(1.0), |_, t| v1((t + 1.0).powi(2)));
        let lw = apply_l_star(&spec, &flat, &w, &grid).unwrap();
        assert_relative_eq!(lw.head[0], 0.5 + 1.0, epsilon = 1e-13);
        for (k, &t) in grid.thetas(0).iter().enumerate() {
            assert!((lw.tail[0][(0, k)] + 2.0 * (t + 1.0)).abs() < 1e-11);
        }
        // ρψ constant kills the transport part
        let kappa = 0.9;
        let spec = DelayOperatorSpec::scalar(1.0, 0.0, 3.0).unwrap();
        let rho = WeightProfile::uniform(kappa, &spec).unwrap();
        let y = 1.0;
        let cst = spec.l_tau[(0, 0)] * y;
        let w = DiscretizedElement::from_fn(&grid, v1(y), |_, t| v1(cst * (-kappa * t).exp()));
        let lw = apply_l_star(&spec, &rho, &w, &grid).unwrap();
        assert!(lw.tail[0].amax() < 1e-9);
        let bad = DiscretizedElement::from_fn(&grid, v1(y), |_, _| v1(0.0));
        assert!(apply_l_star(&spec, &rho, &bad, &grid).is_err());
    }

    #[test]
    fn symmetrize_examples() {
        let spec = DelayOperatorSpec::scalar(2.0, -0.1, 0.4).unwrap();
        let grid = DelayGrid::for_spec(&spec, 16).unwrap();
        let rho = WeightProfile::uniform(0.6, &spec).unwrap();
        let v = DiscretizedElement::from_fn(&grid, v1(0.0), |_, t| v1(t.cos()));
        let s = symmetrize_s(&spec, &rho, &v, &grid).unwrap();
        assert_eq!(s.head[0], 0.0);
        for (k, &t) in grid.thetas(0).iter().enumerate() {
            assert_relative_eq!(s.tail[0][(0, k)], -0.3 * t.cos(), epsilon = 1e-15);
        }
        let x = DiscretizedElement::from_fn(&grid, v1(1.5), |_, _| v1(0.0));
        let sx = symmetrize_s(&spec, &rho, &x, &grid).unwrap();
        let (m, _) = symmetrized_matrix(&spec, &rho).unwrap();
        assert_relative_eq!(sx.head[0], 0.5 * m[(0, 0)] * 1.5, epsilon = 1e-14);
    }

    #[test]
    fn symmetrized_matrix_examples() {
        let (gamma, beta, fp, kappa, tau) = (0.1, 0.2, -2.0, 0.05, 22.0);
        let spec = DelayOperatorSpec::scalar(tau, -gamma, beta * fp).unwrap();
        let rho = WeightProfile::uniform(kappa, &spec).unwrap();
        let (_, eig) = symmetrized_matrix(&spec, &rho).unwrap();
        let expect = 1.0 - 2.0 * gamma + beta * beta * (kappa * tau).exp() * fp * fp;
        assert!((eig[0] - expect).abs() <= 1e-10 * expect.abs().max(1.0));
        let zero = DelayOperatorSpec::new(1.0, DMatrix::zeros(3, 3), DMatrix::zeros(3, 3), vec![]).unwrap();
        let (m, eig) = symmetrized_matrix(&zero, &WeightProfile::uniform(0.3, &zero).unwrap()).unwrap();
        assert_eq!(m, DMatrix::identity(3, 3));
        assert!(eig.iter().all(|&e| e == 1.0));
        let tapped = DelayOperatorSpec::new(
            2.0,
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            vec![(1.0, DMatrix::from_element(1, 1, 1.0))],
        )
        .unwrap();
        let flat = WeightProfile::new(vec![0.5, 0.5], tapped.partition()).unwrap();
        assert!(matches!(symmetrized_matrix(&tapped, &flat), Err(Error::DegenerateMetric(_))));
        assert!(matches!(
            symmetrize_s(
                &tapped,
                &flat,
                &DiscretizedElement::zeros(&DelayGrid::for_spec(&tapped, 8).unwrap(), 1),
                &DelayGrid::for_spec(&tapped, 8).unwrap()
            ),
            Err(Error::DegenerateMetric(_))
        ));
    }

    #[test]
    fn degeneracy_probe() {
        let spec = DelayOperatorSpec::new(
            1.0,
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 0.5),
            vec![(0.5, DMatrix::from_element(1, 1, 0.5))],
        )
        .unwrap();
        let bad = WeightProfile::new(vec![2.0, 0.0], spec.partition()).unwrap();
        let probe = trace_number_probe(&spec, &bad, 16, 1 << 14).unwrap();
        assert!(probe.unbounded, "{probe:?}");
        assert!(probe.quotients.windows(2).all(|w| w[1].1 > 2.5 * w[0].1), "{probe:?}");
        let good = WeightProfile::new(vec![0.5, 2.0], spec.partition()).unwrap();
        let probe = trace_number_probe(&spec, &good, 16, 128).unwrap();
        assert!(!probe.unbounded);
        // resolved quotients approach the top eigenvalue of S_L from below
        let (_, eig) = symmetrized_matrix(&spec, &good).unwrap();
        let beta1 = 0.5 * eig[0];
        assert!(probe.quotients.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-9), "{probe:?}");
        assert!(probe.quotients.iter().all(|q| q.1 <= beta1 + 1e-6), "{probe:?}");
        assert!(beta1 - probe.quotients.last().unwrap().1 < 1e-2, "{probe:?}");
    }
}
