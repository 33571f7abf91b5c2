//! Monotone inversion: geometric bracketing followed by a safeguarded
//! Newton/bisection hybrid.

use crate::error::{Error, Result};

const MAX_ITER: usize = 400;
const CEILING: f64 = 1e300;
const FLOOR: f64 = 1e-300;

/// Finds `0 < lo <= hi` with `f(lo) <= target <= f(hi)` for an increasing
/// `f` on `(0, inf)`, starting the geometric search at `start`.
pub fn bracket_increasing<F>(mut f: F, target: f64, start: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut x = if start > 0.0 && start.is_finite() { start } else { 1.0 };
    let fx = f(x)?;
    if fx >= target {
        let mut hi = x;
        loop {
            let lo = hi / 4.0;
            if lo < FLOOR {
                return Err(Error::Bracket(format!("no lower bracket for target {target}")));
            }
            if f(lo)? <= target {
                return Ok((lo, hi));
            }
            hi = lo;
        }
    }
    loop {
        let next = x * 4.0;
        if next > CEILING {
            return Err(Error::Bracket(format!("target {target} not reached below {CEILING:e}")));
        }
        match f(next) {
            Ok(v) if v >= target => return Ok((x, next)),
            Ok(_) => x = next,
            Err(Error::Overflow(msg)) => {
                return Err(Error::Overflow(format!("overflow before reaching target {target}: {msg}")))
            }
            Err(e) => return Err(e),
        }
    }
}

/// Solves `f(x) = target` on a bracket of an increasing function. `df`,
/// when supplied, enables Newton steps; otherwise pure bisection (geometric
/// while the bracket spans more than a factor of four).
pub fn solve_increasing<F, D>(
    mut f: F,
    mut df: Option<D>,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
    D: FnMut(f64) -> Result<f64>,
{
    let flo = f(lo)?;
    if flo == target {
        return Ok(lo);
    }
    let fhi = f(hi)?;
    if fhi == target {
        return Ok(hi);
    }
    if !(flo <= target && target <= fhi) {
        return Err(Error::Bracket(format!("f({lo}) = {flo}, f({hi}) = {fhi} do not bracket {target}")));
    }
    let mut x = if lo > 0.0 && hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
    let mut width = hi - lo;
    for _ in 0..MAX_ITER {
        let fx = f(x)?;
        if fx == target {
            return Ok(x);
        }
        if fx < target {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= rel_tol * hi.abs().max(f64::MIN_POSITIVE) {
            return Ok(0.5 * (lo + hi));
        }
        // Newton must at least halve the bracket every step, else bisect.
        let stalled = hi - lo > 0.5 * width;
        width = hi - lo;
        let mut next = None;
        if let (false, Some(d)) = (stalled, df.as_mut()) {
            let slope = d(x)?;
            if slope > 0.0 && slope.is_finite() {
                let cand = x - (fx - target) / slope;
                if cand > lo && cand < hi {
                    next = Some(cand);
                }
            }
        }
        x = match next {
            Some(c) => {
                // Newton converged: confirm by straddling the root.
                if (c - x).abs() <= 0.25 * rel_tol * c.abs() {
                    let h = rel_tol * c.abs();
                    let (a, b) = ((c - h).max(lo), (c + h).min(hi));
                    if f(a)? <= target && f(b)? >= target {
                        return Ok(c);
                    }
                }
                c
            }
            None if lo > 0.0 && hi / lo > 4.0 => (lo * hi).sqrt(),
            None => 0.5 * (lo + hi),
        };
    }
    Err(Error::Bracket(format!("no convergence after {MAX_ITER} iterations in [{lo}, {hi}]")))
}

/// Inverse of an increasing `f` on `[lower, inf)`: returns `lower` when
/// `f(lower) >= target`, otherwise brackets from `start` and solves.
pub fn invert_increasing<F>(mut f: F, target: f64, lower: f64, start: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if f(lower)? >= target {
        return Ok(lower);
    }
    let (lo, hi) = bracket_increasing(&mut f, target, start.max(lower))?;
    let lo = lo.max(lower);
    solve_increasing(f, None::<fn(f64) -> Result<f64>>, target, lo, hi, rel_tol)
}
