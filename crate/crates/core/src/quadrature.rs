//! Globally adaptive Gauss-Kronrod (10/21) quadrature on finite and
//! semi-infinite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::profile::Tolerances;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub node_count: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub node_budget: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-10, rel_tol: 1e-8, node_budget: 200_000 }
    }
}

impl From<&Tolerances> for QuadOptions {
    fn from(t: &Tolerances) -> Self {
        QuadOptions { abs_tol: t.quad_abs, rel_tol: t.quad_rel, node_budget: t.node_budget }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn check(v: f64, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Quadrature(format!("integrand is not finite at {x}")))
    }
}

/// One 21-point Kronrod rule with embedded 10-point Gauss estimate.
fn kronrod<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = check(f(center)?, center)?;
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv = [(0.0, 0.0); 10];
    for (j, slot) in fv.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let f1 = check(f(x1)?, x1)?;
        let f2 = check(f(x2)?, x2)?;
        *slot = (f1, f2);
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        res_asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok((value, err))
}

fn adaptive<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadratureResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (value, error) = kronrod(&mut f, a, b)?;
    let mut nodes = 21;
    let mut heap = BinaryHeap::new();
    let mut frozen_value = 0.0;
    let mut frozen_error = 0.0;
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol {
            return Ok(QuadratureResult {
                value: total,
                abs_error_estimate: total_err,
                node_count: nodes,
                converged: true,
            });
        }
        if nodes + 42 > opts.node_budget {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        let width = (worst.b - worst.a).abs();
        if width <= 1e3 * f64::EPSILON * (worst.a.abs() + worst.b.abs()) || mid == worst.a || mid == worst.b {
            // Cannot resolve further in floating point.
            frozen_value += worst.value;
            frozen_error += worst.error;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let (v1, e1) = kronrod(&mut f, worst.a, mid)?;
        let (v2, e2) = kronrod(&mut f, mid, worst.b)?;
        nodes += 42;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        // Recompute sums from scratch to keep them free of drift.
        total = frozen_value + heap.iter().map(|s| s.value).sum::<f64>();
        total_err = frozen_error + heap.iter().map(|s| s.error).sum::<f64>();
    }
    let total = frozen_value + heap.iter().map(|s| s.value).sum::<f64>();
    let total_err = frozen_error + heap.iter().map(|s| s.error).sum::<f64>();
    let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
    Ok(QuadratureResult { value: total, abs_error_estimate: total_err, node_count: nodes, converged: total_err <= tol })
}

/// Integrates `f` over `[a, b]`; `b` may be `f64::INFINITY`, in which case
/// the interval is mapped onto `(0, 1]`. Integrand errors
/// propagate; non-convergence is reported through `converged`, with the
/// best estimate and its error bound.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadratureResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a.is_nan() || b.is_nan() || a.is_infinite() {
        return Err(Error::Invalid(format!("bad integration limits [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadratureResult { value: 0.0, abs_error_estimate: 0.0, node_count: 0, converged: true });
    }
    if b == f64::INFINITY {
        // s = a + c (e^v - 1) turns algebraic decay into exponential decay,
        // and v = (1 - y)/y puts the point at infinity at y = 0.
        let c = a.abs().max(1.0);
        let mut r = adaptive(
            |y| {
                if y == 0.0 {
                    return Ok(0.0);
                }
                let d = c * ((1.0 - y) / y).exp_m1();
                let jac = d + c;
                if !jac.is_finite() || !(a + d).is_finite() {
                    return Ok(0.0);
                }
                // Intermediate overflow this far out means the integrand
                // underflows relative to anything representable.
                match f(a + d) {
                    Ok(v) => Ok(v * jac / (y * y)),
                    Err(Error::Overflow(_)) if a + d > 1e30 => Ok(0.0),
                    Err(e) => Err(e),
                }
            },
            0.0,
            1.0,
            opts,
        )?;
        // Mass beyond the largest abscissa (to a decade step of ten) where
        // the integrand is representable, estimated as s f(s) there; a
        // slowly decaying tail is reported, not dropped.
        let far = (3..=30).rev().map(|k| 10f64.powi(10 * k)).find_map(|s| match f(s) {
            Ok(v) => Some(Ok((v * s).abs())),
            Err(Error::Overflow(_)) => None,
            Err(e) => Some(Err(e)),
        });
        let beyond = far.transpose()?.unwrap_or(0.0);
        if beyond > opts.abs_tol.max(opts.rel_tol * r.value.abs()) {
            r.converged = false;
            r.abs_error_estimate += beyond;
        }
        return Ok(r);
    }
    if b < a {
        let r = adaptive(f, b, a, opts)?;
        return Ok(QuadratureResult { value: -r.value, ..r });
    }
    adaptive(f, a, b, opts)
}

/// As [`integrate`], but non-convergence is an error.
pub fn integrate_strict<F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = integrate(f, a, b, opts)?;
    if r.converged {
        Ok(r.value)
    } else {
        Err(Error::Quadrature(format!(
            "[{a}, {b}]: estimate {} with error {:e} after {} nodes",
            r.value, r.abs_error_estimate, r.node_count
        )))
    }
}
