//! Parameter grids and a sized worker pool for sweeps.

use rayon::prelude::*;

use crate::charroots::log_grid;
use crate::error::{Error, Result};

pub const DEFAULT_POINTS: usize = 12;

/// Parses `lo:hi[:count][:log|lin]`. The default spacing is linear with
/// [`DEFAULT_POINTS`] points; a bare number gives a one-point grid.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::input(format!("bad number {s:?} in range {spec:?}")))
    };
    if parts.len() == 1 {
        return Ok(vec![num(parts[0])?]);
    }
    let (lo, hi) = (num(parts[0])?, num(parts[1])?);
    let mut count = DEFAULT_POINTS;
    let mut log = false;
    for p in &parts[2..] {
        match *p {
            "log" => log = true,
            "lin" => log = false,
            other => {
                count = other.parse().map_err(|_| Error::input(format!("bad count {other:?} in range {spec:?}")))?
            }
        }
    }
    if !(lo.is_finite() && hi.is_finite()) || hi < lo || count == 0 {
        return Err(Error::input(format!("empty range {spec:?}")));
    }
    if log && lo <= 0.0 {
        return Err(Error::input("log ranges need a positive lower end"));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok(if log {
        let mut g = log_grid(lo, hi, count);
        // pin the endpoints exactly
        g[0] = lo;
        g[count - 1] = hi;
        g
    } else {
        (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
    })
}

pub fn is_range(s: &str) -> bool {
    s.contains(':')
}

/// Evaluates `f` over `grid` on `jobs` worker threads; results keep grid order.
pub fn run_cells<T, F>(grid: &[f64], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(f64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::input(format!("worker pool: {e}")))?;
    Ok(pool.install(|| grid.par_iter().map(|&x| f(x)).collect()))
}
