//! Helpers shared by the integration targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lyapdim::delayop::{
    apply_l, apply_l_star, symmetrize_s, weighted_inner, DelayGrid, DelayOperatorSpec, DiscretizedElement,
    WeightProfile,
};

/// Random history with a `|θ − c|^{5/2}` kink, so quadrature errors decay algebraically.
#[derive(Clone)]
pub struct Profile {
    coef: Vec<[f64; 4]>,
    kink: f64,
    rough: f64,
}

impl Profile {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, tau: f64, rough: f64) -> Self {
        let coef = (0..n).map(|_| [0; 4].map(|_| rng.gen_range(-1.0..1.0))).collect();
        Self { coef, kink: -rng.gen_range(0.1..0.9) * tau, rough }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.coef.len(),
            self.coef.iter().map(|c| {
                c[0] + c[1] * (1.3 * t).sin()
                    + c[2] * (0.7 * t).cos()
                    + c[3] * self.rough * (t - self.kink).abs().powf(2.5)
            }),
        )
    }
}

pub fn grid_bounds(spec: &DelayOperatorSpec, j: usize) -> (f64, f64) {
    let p = spec.partition();
    (-p[j + 1], -p[j])
}

/// Adds a linear correction per segment so that the end values hit `left[j]` and `right[j]`.
pub fn corrected(
    grid: &DelayGrid,
    spec: &DelayOperatorSpec,
    head: DVector<f64>,
    base: &Profile,
    left: &[Option<DVector<f64>>],
    right: &[Option<DVector<f64>>],
) -> DiscretizedElement {
    DiscretizedElement::from_fn(grid, head, |j, t| {
        let (a, b) = grid_bounds(spec, j);
        let s = (t - a) / (b - a);
        let mut v = base.eval(t);
        if let Some(l) = &left[j] {
            v += (l - base.eval(a)) * (1.0 - s);
        }
        if let Some(r) = &right[j] {
            v += (r - base.eval(b)) * s;
        }
        v
    })
}

/// Element of the discrete domain of `L`.
pub fn in_domain_l(grid: &DelayGrid, base: &Profile) -> DiscretizedElement {
    DiscretizedElement::from_history(grid, |t| base.eval(t))
}

/// Element satisfying the adjoint boundary conditions with head `y`.
pub fn in_domain_l_star(
    grid: &DelayGrid,
    spec: &DelayOperatorSpec,
    rho: &WeightProfile,
    y: DVector<f64>,
    base: &Profile,
) -> DiscretizedElement {
    let segs = grid.segments();
    let p = spec.partition();
    let mut left = vec![None; segs];
    left[segs - 1] = Some(spec.l_tau.transpose() * &y / rho.rho_at_minus_tau());
    // ρ_{j−1}ψ_{j−1}(−τ_j) = ρ_jψ_j(−τ_j) + L_{−τ_j}ᵀy with ψ_j(−τ_j) left as the base value
    for j in (1..segs).rev() {
        let t = -p[j];
        let from_right = base.eval(t) * rho.rho(j, t) + spec.taps[j - 1].1.transpose() * &y;
        left[j - 1] = Some(from_right / rho.rho(j - 1, t));
    }
    corrected(grid, spec, y, base, &left, &vec![None; segs])
}

/// Element of both domains: continuous, with node values fixed by `x`.
pub fn in_both_domains(
    grid: &DelayGrid,
    spec: &DelayOperatorSpec,
    rho: &WeightProfile,
    x: DVector<f64>,
    base: &Profile,
) -> DiscretizedElement {
    let segs = grid.segments();
    let mut nodes = vec![x.clone()];
    for j in 1..segs {
        nodes.push(spec.taps[j - 1].1.transpose() * &x / rho.jump(j));
    }
    nodes.push(spec.l_tau.transpose() * &x / rho.rho_at_minus_tau());
    let left: Vec<_> = (0..segs).map(|j| Some(nodes[j + 1].clone())).collect();
    let right: Vec<_> = (0..segs).map(|j| Some(nodes[j].clone())).collect();
    corrected(grid, spec, x, base, &left, &right)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Scalar and 2-D operators with zero or one interior tap, and increasing weights.
pub fn cases() -> Vec<(DelayOperatorSpec, WeightProfile)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();
    for n in [1usize, 2] {
        for taps in [0usize, 1] {
            let tau = 1.5;
            let tap = (0..taps).map(|_| (0.6, random_matrix(&mut rng, n))).collect();
            let spec =
                DelayOperatorSpec::new(tau, random_matrix(&mut rng, n), random_matrix(&mut rng, n), tap).unwrap();
            let kappas = if taps == 0 { vec![0.8] } else { vec![0.4, 1.1] };
            let rho = WeightProfile::new(kappas, spec.partition()).unwrap();
            out.push((spec, rho));
        }
    }
    out
}

pub const NODES: [usize; 3] = [32, 64, 128];

pub fn adjoint_residual(spec: &DelayOperatorSpec, rho: &WeightProfile, nodes: usize, seed: u64, rough: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = DelayGrid::for_spec(spec, nodes).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let v = in_domain_l(&grid, &Profile::random(&mut rng, spec.n, spec.tau, rough));
        let y = random_vector(&mut rng, spec.n);
        let w = in_domain_l_star(&grid, spec, rho, y, &Profile::random(&mut rng, spec.n, spec.tau, rough));
        let lhs = weighted_inner(&apply_l(spec, &v, &grid).unwrap(), &w, rho, &grid).unwrap();
        let rhs = weighted_inner(&v, &apply_l_star(spec, rho, &w, &grid).unwrap(), rho, &grid).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

pub fn symmetrization_residual(
    spec: &DelayOperatorSpec,
    rho: &WeightProfile,
    nodes: usize,
    seed: u64,
    rough: f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = DelayGrid::for_spec(spec, nodes).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = random_vector(&mut rng, spec.n);
        let v = in_both_domains(&grid, spec, rho, x, &Profile::random(&mut rng, spec.n, spec.tau, rough));
        let x = random_vector(&mut rng, spec.n);
        let w = in_both_domains(&grid, spec, rho, x, &Profile::random(&mut rng, spec.n, spec.tau, rough));
        let lv_w = weighted_inner(&apply_l(spec, &v, &grid).unwrap(), &w, rho, &grid).unwrap();
        let v_lw = weighted_inner(&v, &apply_l(spec, &w, &grid).unwrap(), rho, &grid).unwrap();
        let s = weighted_inner(&symmetrize_s(spec, rho, &v, &grid).unwrap(), &w, rho, &grid).unwrap();
        worst = worst.max((lv_w + v_lw - 2.0 * s).abs());
    }
    worst
}

/// Observed orders `log2(r_k / r_{k+1})` between successive refinements.
pub fn observed_orders(res: &[f64]) -> Vec<f64> {
    res.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Residuals below this are treated as converged to rounding.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

/// Every refinement either reduces the residual at order `≥ order` or both
/// residuals already sit at the rounding floor.
pub fn converges_at_order(res: &[f64], order: f64) -> bool {
    res.windows(2).all(|w| (w[0] <= ROUNDOFF_FLOOR && w[1] <= ROUNDOFF_FLOOR) || (w[0] / w[1]).log2() >= order)
}
