//! Exterior-power linear algebra on small dense matrices.
//!
//! Compound matrices are expressed in the un-normalized basis
//! `e_{j1} ∧ … ∧ e_{jm}` with index tuples in lexicographic order, so the
//! entries of a multiplicative compound are plain `m × m` minors. The `1/m!`
//! normalization of the induced inner product appears only in
//! [`wedge_gram`].

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};

/// Lexicographically ordered strictly increasing `m`-subsets of `{0, …, n-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WedgeIndex {
    n: usize,
    m: usize,
    tuples: Vec<Vec<usize>>,
}

impl WedgeIndex {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if m > n {
            return Err(Error::input(format!("compound order {m} exceeds dimension {n}")));
        }
        let mut tuples = Vec::with_capacity(binomial(n, m));
        let mut current: Vec<usize> = (0..m).collect();
        loop {
            tuples.push(current.clone());
            // advance to the next combination in lexicographic order
            let mut i = m;
            loop {
                if i == 0 {
                    return Ok(Self { n, m, tuples });
                }
                i -= 1;
                if current[i] < n - m + i {
                    current[i] += 1;
                    for j in i + 1..m {
                        current[j] = current[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    /// Position of a strictly increasing tuple in the basis.
    pub fn position(&self, tuple: &[usize]) -> Option<usize> {
        self.tuples.binary_search_by(|t| t.as_slice().cmp(tuple)).ok()
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Nonincreasing sequence of singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    values: Vec<f64>,
}

impl SingularSpectrum {
    pub fn from_unsorted(mut values: Vec<f64>) -> Self {
        for v in values.iter_mut() {
            *v = v.abs();
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `σ_k` with 1-based `k`; zero past the end.
    pub fn get(&self, k: usize) -> f64 {
        if k == 0 {
            return f64::INFINITY;
        }
        self.values.get(k - 1).copied().unwrap_or(0.0)
    }

    /// `ln ω_d` for this spectrum; `-∞` when a required singular value vanishes.
    pub fn log_omega(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::input(format!("ω_d needs a finite d ≥ 0, got {d}")));
        }
        let m = d.floor() as usize;
        let gamma = d - m as f64;
        let mut acc = 0.0;
        for k in 1..=m {
            acc += self.get(k).ln();
        }
        if gamma > 0.0 {
            acc += gamma * self.get(m + 1).ln();
        }
        Ok(acc)
    }

    pub fn omega(&self, d: f64) -> Result<f64> {
        Ok(self.log_omega(d)?.exp())
    }
}

fn check_square<T: ComplexField>(a: &DMatrix<T>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
    }
    if a.nrows() == 0 {
        return Err(Error::input("empty matrix"));
    }
    Ok(a.nrows())
}

/// `(1/m!)·det[⟨u_k, v_j⟩]` where `⟨x, y⟩ = y^H G x` for the metric `G`.
pub fn wedge_gram<T>(u: &[DVector<T>], v: &[DVector<T>], metric: &DMatrix<T>) -> Result<T>
where
    T: ComplexField<RealField = f64>,
{
    let m = u.len();
    if v.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: v.len() });
    }
    let n = check_square(metric)?;
    if m > n {
        return Err(Error::input(format!("{m} vectors in dimension {n}")));
    }
    for w in u.iter().chain(v.iter()) {
        if w.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: w.len() });
        }
    }
    let asym = (metric - metric.adjoint()).norm();
    if asym > 1e-12 * metric.norm().max(1.0) {
        return Err(Error::input("metric is not symmetric"));
    }
    if metric.clone().cholesky().is_none() {
        return Err(Error::input("metric is not positive definite"));
    }
    if m == 0 {
        return Ok(T::one());
    }
    let gram = DMatrix::from_fn(m, m, |k, j| v[j].dotc(&(metric * &u[k])));
    let factorial: f64 = (1..=m).map(|i| i as f64).product();
    Ok(gram.determinant() * T::from_real(1.0 / factorial))
}

/// Matrix of `L^{∧m}` in the lexicographic wedge basis: the `m × m` minors of `L`.
pub fn compound_multiplicative<T>(l: &DMatrix<T>, m: usize) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64>,
{
    let n = check_square(l)?;
    if m == 0 || m > n {
        return Err(Error::input(format!("compound order {m} outside 1..={n}")));
    }
    let idx = WedgeIndex::new(n, m)?;
    let size = idx.len();
    let mut out = DMatrix::zeros(size, size);
    let mut sub = DMatrix::zeros(m, m);
    for (r, rows) in idx.tuples().iter().enumerate() {
        for (c, cols) in idx.tuples().iter().enumerate() {
            for (a, &i) in rows.iter().enumerate() {
                for (b, &j) in cols.iter().enumerate() {
                    sub[(a, b)] = l[(i, j)].clone();
                }
            }
            out[(r, c)] = sub.clone().determinant();
        }
    }
    Ok(out)
}

/// Matrix of `T^{[∧m]}`, acting as `Σ_j ξ₁ ∧ … ∧ Tξ_j ∧ … ∧ ξ_m`.
pub fn compound_additive<T>(t: &DMatrix<T>, m: usize) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64>,
{
    let n = check_square(t)?;
    if m == 0 || m > n {
        return Err(Error::input(format!("compound order {m} outside 1..={n}")));
    }
    let idx = WedgeIndex::new(n, m)?;
    let size = idx.len();
    let mut out = DMatrix::zeros(size, size);
    let mut scratch = vec![0usize; m];
    for (c, cols) in idx.tuples().iter().enumerate() {
        for p in 0..m {
            let jp = cols[p];
            for i in 0..n {
                let coef = t[(i, jp)].clone();
                if coef == T::zero() {
                    continue;
                }
                if i != jp && cols.contains(&i) {
                    continue;
                }
                scratch.copy_from_slice(cols);
                scratch[p] = i;
                let sign = sort_with_sign(&mut scratch);
                let r = idx.position(&scratch).expect("tuple is strictly increasing");
                let v = if sign > 0 { coef } else { -coef };
                out[(r, c)] += v;
            }
        }
    }
    Ok(out)
}

/// Insertion sort returning the permutation sign.
fn sort_with_sign(v: &mut [usize]) -> i32 {
    let mut sign = 1;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    sign
}

pub fn singular_values<T>(l: &DMatrix<T>) -> SingularSpectrum
where
    T: ComplexField<RealField = f64>,
{
    if l.is_empty() {
        return SingularSpectrum { values: Vec::new() };
    }
    SingularSpectrum::from_unsorted(l.singular_values().iter().copied().collect())
}

/// Largest singular value.
pub fn operator_norm<T>(l: &DMatrix<T>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    singular_values(l).get(1)
}

/// `ω_d(L) = σ₁ ⋯ σ_m · σ_{m+1}^γ` for `d = m + γ`; `ω₀ = 1`.
pub fn omega_d<T>(l: &DMatrix<T>, d: f64) -> Result<f64>
where
    T: ComplexField<RealField = f64>,
{
    singular_values(l).omega(d)
}

/// Hermitian part `(A + A^H)/2`.
pub fn hermitian_part<T>(a: &DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    (a + a.adjoint()) * T::from_real(0.5)
}

/// Eigenvalues of a Hermitian matrix in nonincreasing order; equal values
/// keep the backend's original index order.
pub fn sorted_hermitian_eigenvalues<T>(s: &DMatrix<T>) -> Vec<f64>
where
    T: ComplexField<RealField = f64>,
{
    let ev = s.clone().symmetric_eigenvalues();
    let mut indexed: Vec<(usize, f64)> = ev.iter().copied().enumerate().collect();
    indexed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    indexed.into_iter().map(|(_, v)| v).collect()
}

/// First `k` trace numbers: the leading eigenvalues of the Hermitian part.
pub fn trace_numbers<T>(a: &DMatrix<T>, k: usize) -> Result<Vec<f64>>
where
    T: ComplexField<RealField = f64>,
{
    let n = check_square(a)?;
    if k > n {
        return Err(Error::input(format!("requested {k} trace numbers of a {n}×{n} matrix")));
    }
    let mut ev = sorted_hermitian_eigenvalues(&hermitian_part(a));
    ev.truncate(k);
    Ok(ev)
}
