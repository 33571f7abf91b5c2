//! Numerical certificates: radial residuals of constructed profiles,
//! pointwise residuals on the group, weak-form residuals against bump
//! functions, and the structural identities of the group itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barrier::Barrier;
use crate::error::{Error, Result};
use crate::heisenberg::poly::{apply_x, apply_y, Polynomial};
use crate::heisenberg::{
    gauge_field, phi_laplacian_fd_at, phi_laplacian_hessian_at, radial_field, radial_phi_laplacian_at, Geometry,
    RadialKind, RadialProfile, ScalarField,
};
use crate::profile::{ProblemSpec, Profile};

/// Relative slack of radial residuals (analytic derivatives).
pub const RADIAL_SLACK: f64 = 1e-9;
/// Relative slack of pointwise residuals (finite differences).
pub const FULLSPACE_SLACK: f64 = 1e-6;
/// Weak residuals are rejected when halving the grid moves them by more
/// than this fraction of the integrals involved.
pub const WEAK_DOUBLING_TOL: f64 = 0.05;
pub const WEAK_MAX_N: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sign {
    /// Supersolution: `operator - rhs <= 0`.
    SuperLE,
    /// Subsolution: `operator - rhs >= 0`.
    SubGE,
}

impl Sign {
    fn respects(self, residual: f64, slack: f64) -> bool {
        match self {
            Sign::SuperLE => residual <= slack,
            Sign::SubGE => residual >= -slack,
        }
    }

    /// How far `residual` is on the wrong side, as a non-negative number
    /// when it violates and negative otherwise.
    fn badness(self, residual: f64) -> f64 {
        match self {
            Sign::SuperLE => residual,
            Sign::SubGE => -residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub location: Vec<f64>,
    pub residual: f64,
    /// Magnitude of the largest term, the reference for the slack.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualGrid {
    pub sign: Sign,
    pub points: Vec<ResidualPoint>,
    /// Largest residual for `SuperLE`, smallest for `SubGE`.
    pub worst: f64,
    pub worst_location: Option<Vec<f64>>,
    pub pass: bool,
    pub skipped: usize,
    pub slack_rel: f64,
    pub seed: Option<u64>,
}

impl ResidualGrid {
    fn new(sign: Sign, slack_rel: f64, seed: Option<u64>) -> Self {
        let worst = match sign {
            Sign::SuperLE => f64::NEG_INFINITY,
            Sign::SubGE => f64::INFINITY,
        };
        ResidualGrid { sign, points: Vec::new(), worst, worst_location: None, pass: true, skipped: 0, slack_rel, seed }
    }

    fn push(&mut self, location: Vec<f64>, residual: f64, scale: f64) {
        if self.sign.badness(residual) > self.sign.badness(self.worst) {
            self.worst = residual;
            self.worst_location = Some(location.clone());
        }
        if !self.sign.respects(residual, self.slack_rel * scale) {
            self.pass = false;
        }
        self.points.push(ResidualPoint { location, residual, scale });
    }

    fn finish(mut self) -> Self {
        if self.points.is_empty() {
            self.pass = false;
        }
        self
    }

    /// First point violating the sign, if any.
    pub fn witness(&self) -> Option<&ResidualPoint> {
        self.points.iter().find(|p| !self.sign.respects(p.residual, self.slack_rel * p.scale))
    }
}

/// `phi'(a') a'' + kappa/t phi(a') - rhs` on `grid`, per the barrier's
/// kind. Points where the profile overflows are counted as skipped.
pub fn radial_residual(b: &Barrier, spec: &ProblemSpec, sign: Sign, grid: &[f64]) -> Result<ResidualGrid> {
    let mut out = ResidualGrid::new(sign, RADIAL_SLACK, None);
    for &t in grid {
        match b.residual_at(spec, t) {
            Ok((r, scale)) => out.push(vec![t], r, scale),
            Err(Error::Overflow(_)) => out.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out.finish())
}

/// Sampling region for pointwise residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    /// Range of the radial coordinate (gauge or `|z|`).
    pub radius: (f64, f64),
    /// `|t| <= height` for functions of `|z|`.
    pub height: f64,
    /// Radius of a C^1 seam to stay away from.
    pub seam: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FullspaceOptions {
    pub n_points: usize,
    pub step: f64,
    pub seed: u64,
    pub sign: Sign,
    pub slack_rel: f64,
}

impl FullspaceOptions {
    pub fn new(sign: Sign, seed: u64) -> Self {
        FullspaceOptions { n_points: 200, step: 1e-4, seed, sign, slack_rel: FULLSPACE_SLACK }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Random point of `H^m` at the given gauge radius, kept away from the
/// `t`-axis by `psi >= 0.05`.
fn gauge_point(rng: &mut ChaCha8Rng, m: usize, r: f64) -> Vec<f64> {
    let psi: f64 = rng.gen_range(0.05..1.0);
    let dir = unit_vector(rng, 2 * m);
    let rho = r * psi.sqrt();
    let t = r * r * (1.0 - psi * psi).max(0.0).sqrt() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mut x: Vec<f64> = dir.into_iter().map(|d| d * rho).collect();
    x.push(t);
    x
}

/// Checks `Delta^phi u` (finite differences of the flux) against the
/// spec's right-hand side at the true horizontal gradient of
/// `u = alpha(rho)`, at seeded random points of `region`.
pub fn fullspace_residual<P: RadialProfile + Sync + ?Sized>(
    alpha: &P,
    kind: RadialKind,
    spec: &ProblemSpec,
    region: &Region,
    opts: &FullspaceOptions,
) -> Result<ResidualGrid> {
    let geometry = spec.geometry;
    let (lo, hi) = region.radius;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Invalid(format!("bad sampling radii ({lo}, {hi})")));
    }
    let field = radial_field(geometry, alpha, None, kind).with_fd_step(opts.step);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = ResidualGrid::new(opts.sign, opts.slack_rel, Some(opts.seed));
    let n = geometry.dim();
    for _ in 0..opts.n_points {
        let rad = rng.gen_range(lo..hi);
        let x = match (geometry, kind) {
            (Geometry::Heisenberg { m }, RadialKind::GaugeRadial) => gauge_point(&mut rng, m, rad),
            (Geometry::Heisenberg { m }, _) => {
                let mut x: Vec<f64> = unit_vector(&mut rng, 2 * m).into_iter().map(|d| d * rad).collect();
                x.push(rng.gen_range(-region.height..=region.height));
                x
            }
            (Geometry::Euclidean { .. }, _) => unit_vector(&mut rng, n).into_iter().map(|d| d * rad).collect(),
        };
        if let Some(seam) = region.seam {
            let rho = geometry.horizontal_radius(&x);
            if (rho - seam).abs() < 2.0 * opts.step * rho.max(1.0) {
                out.skipped += 1;
                continue;
            }
        }
        let eval = || -> Result<(f64, f64)> {
            let lap = phi_laplacian_fd_at(geometry, &field, &x, &spec.phi, opts.step)?;
            let u = field.value(&x)?;
            let g = norm(&geometry.horizontal_from_gradient(&x, &field.gradient(&x)?));
            let rhs = spec.rhs.eval(u, g)?;
            Ok((lap - rhs, lap.abs().max(rhs.abs())))
        };
        match eval() {
            Ok((r, scale)) if r.is_finite() => out.push(x, r, scale),
            _ => out.skipped += 1,
        }
    }
    Ok(out.finish())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smooth bump `exp(1 - 1/(1 - |x - c|^2/R^2))` supported in the
/// Euclidean ball `B(c, R)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Bump {
    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let r2 = self.radius * self.radius;
        let q = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / r2;
        if q >= 1.0 {
            return (0.0, vec![0.0; x.len()]);
        }
        let z = (1.0 - 1.0 / (1.0 - q)).exp();
        let dq = -z / ((1.0 - q) * (1.0 - q));
        (z, x.iter().zip(&self.center).map(|(a, c)| dq * 2.0 * (a - c) / r2).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidual {
    /// `-int A(|grad_H u|) grad_H u . grad_H zeta - int rhs(u, |grad_H u|) zeta`.
    pub value: f64,
    /// Change under grid halving (tensor Simpson) or the standard error
    /// (Monte Carlo).
    pub error_estimate: f64,
    pub flux_term: f64,
    pub source_term: f64,
    pub n: usize,
    pub method: WeakMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeakMethod {
    TensorSimpson,
    MonteCarlo { seed: u64 },
}

/// Integrand pair `(flux, source)` at `x`.
fn weak_integrand(spec: &ProblemSpec, u: &ScalarField, zeta: &Bump, x: &[f64]) -> Result<(f64, f64)> {
    let (z, dz) = zeta.value_and_gradient(x);
    if z == 0.0 {
        return Ok((0.0, 0.0));
    }
    let geometry = spec.geometry;
    let gu = geometry.horizontal_from_gradient(x, &u.gradient(x)?);
    let gz = geometry.horizontal_from_gradient(x, &dz);
    let g = norm(&gu);
    let flux = if g == 0.0 { 0.0 } else { spec.phi.eval(g)? / g * gu.iter().zip(&gz).map(|(a, b)| a * b).sum::<f64>() };
    let source = spec.rhs.eval(u.value(x)?, g)? * z;
    Ok((flux, source))
}

fn simpson(spec: &ProblemSpec, u: &ScalarField, zeta: &Bump, n: usize) -> Result<(f64, f64)> {
    let d = zeta.center.len();
    let h = 2.0 * zeta.radius / n as f64;
    let w = |i: usize| {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut idx = vec![0usize; d];
    let (mut flux, mut source) = (0.0, 0.0);
    let mut x = vec![0.0; d];
    loop {
        let mut weight = 1.0;
        for k in 0..d {
            x[k] = zeta.center[k] - zeta.radius + h * idx[k] as f64;
            weight *= w(idx[k]);
        }
        let (f, s) = weak_integrand(spec, u, zeta, &x)?;
        flux += weight * f;
        source += weight * s;
        let mut k = 0;
        loop {
            if k == d {
                let vol = (h / 3.0).powi(d as i32);
                return Ok((flux * vol, source * vol));
            }
            idx[k] += 1;
            if idx[k] <= n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Weak-form residual of `u` against the bump `zeta`: non-negative for
/// subsolutions, non-positive for supersolutions. On `H^1` this is tensor
/// Simpson with `quad_n` (even, at most 64) intervals per axis; higher
/// dimensions use `quad_n^3` seeded Monte-Carlo samples.
pub fn weak_residual(
    spec: &ProblemSpec,
    u: &ScalarField,
    zeta: &Bump,
    quad_n: usize,
    seed: u64,
) -> Result<WeakResidual> {
    let d = spec.geometry.dim();
    if zeta.center.len() != d {
        return Err(Error::Invalid(format!("bump center has {} coordinates, expected {d}", zeta.center.len())));
    }
    if !(zeta.radius > 0.0) {
        return Err(Error::Invalid(format!("bump radius must be positive, got {}", zeta.radius)));
    }
    if d == 3 {
        if !(4..=WEAK_MAX_N).contains(&quad_n) || !quad_n.is_multiple_of(4) {
            return Err(Error::Invalid(format!("quad_n must be a multiple of 4 in [4, {WEAK_MAX_N}], got {quad_n}")));
        }
        let (f1, s1) = simpson(spec, u, zeta, quad_n)?;
        let (f2, s2) = simpson(spec, u, zeta, quad_n / 2)?;
        let (v1, v2) = (-f1 - s1, -f2 - s2);
        let err = (v1 - v2).abs();
        let size = f1.abs() + s1.abs();
        if err > WEAK_DOUBLING_TOL * size {
            return Err(Error::Quadrature(format!(
                "weak residual moved by {err:.3e} under grid halving (integrals of size {size:.3e})"
            )));
        }
        return Ok(WeakResidual {
            value: v1,
            error_estimate: err,
            flux_term: f1,
            source_term: s1,
            n: quad_n,
            method: WeakMethod::TensorSimpson,
        });
    }
    let samples = quad_n.pow(3).max(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vol = (2.0 * zeta.radius).powi(d as i32);
    let (mut sf, mut ss, mut sum2) = (0.0, 0.0, 0.0);
    let mut x = vec![0.0; d];
    for _ in 0..samples {
        for k in 0..d {
            x[k] = zeta.center[k] + rng.gen_range(-zeta.radius..zeta.radius);
        }
        let (f, s) = weak_integrand(spec, u, zeta, &x)?;
        sf += f;
        ss += s;
        sum2 += (f + s) * (f + s);
    }
    let n = samples as f64;
    let (mf, ms) = (sf / n, ss / n);
    let var = (sum2 / n - (mf + ms) * (mf + ms)).max(0.0);
    Ok(WeakResidual {
        value: -(mf + ms) * vol,
        error_estimate: vol * (var / n).sqrt(),
        flux_term: mf * vol,
        source_term: ms * vol,
        n: samples,
        method: WeakMethod::MonteCarlo { seed },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryCheck {
    pub name: String,
    pub m: usize,
    /// Worst relative (or, for exact identities, scaled) error observed.
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryReport {
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub checks: Vec<GeometryCheck>,
    pub pass: bool,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn check(name: &str, m: usize, worst: f64, tolerance: f64) -> GeometryCheck {
    GeometryCheck { name: name.into(), m, worst, tolerance, pass: worst <= tolerance }
}

/// Commutation relations, gauge identities, Cauchy-Schwarz and left
/// invariance on `H^m`, at `n_trials` seeded random points.
pub fn geometry_checks(m: usize, n_trials: usize, seed: u64) -> Result<GeometryReport> {
    let geometry = Geometry::Heisenberg { m };
    geometry.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = geometry.dim();
    let mut checks = Vec::new();

    // [X_j, Y_k] = -4 delta_jk d/dt, [X_j, X_k] = [Y_j, Y_k] = 0.
    let mut worst: f64 = 0.0;
    for _ in 0..n_trials.div_ceil(20).max(1) {
        let p = Polynomial::random(dim, 3, &mut rng);
        let dt = p.partial(2 * m);
        for j in 0..m {
            for k in 0..m {
                let xy = apply_x(&apply_y(&p, m, k), m, j).minus(&apply_y(&apply_x(&p, m, j), m, k));
                let xx = apply_x(&apply_x(&p, m, k), m, j).minus(&apply_x(&apply_x(&p, m, j), m, k));
                let yy = apply_y(&apply_y(&p, m, k), m, j).minus(&apply_y(&apply_y(&p, m, j), m, k));
                let expect = if j == k { dt.scaled(-4.0) } else { Polynomial::zero(dim) };
                for _ in 0..5 {
                    let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    let e = expect.eval(&x);
                    let scale = e.abs().max(1.0);
                    worst = worst.max((xy.eval(&x) - e).abs() / scale);
                    worst = worst.max(xx.eval(&x).abs() / scale).max(yy.eval(&x).abs() / scale);
                }
            }
        }
    }
    checks.push(check("commutators", m, worst, 1e-12));

    // |grad_H r|^2 = psi and Delta_H r = (2m+1) psi / r.
    let r = gauge_field(m);
    let linear = Profile::parse("t")?;
    let (mut w_grad, mut w_lap, mut w_cs) = (0.0f64, 0.0f64, 0.0f64);
    let points: Vec<Vec<f64>> = (0..n_trials)
        .map(|_| {
            let r = rng.gen_range(0.2..3.0);
            gauge_point(&mut rng, m, r)
        })
        .collect();
    for x in &points {
        let k = geometry.gauge(x);
        let gh = geometry.horizontal_from_gradient(x, &r.gradient(x)?);
        let g2: f64 = gh.iter().map(|v| v * v).sum();
        w_grad = w_grad.max(rel_err(g2, k.psi));
        let lap = phi_laplacian_hessian_at(geometry, &r, x, &linear)?;
        w_lap = w_lap.max(rel_err(lap, geometry.gauge_constant() * k.psi / k.r));
        // Cauchy-Schwarz for horizontal gradients of random quadratics.
        let p = Polynomial::random(dim, 2, &mut rng);
        let q = Polynomial::random(dim, 2, &mut rng);
        let a = geometry.horizontal_from_gradient(x, &p.gradient(x));
        let b = geometry.horizontal_from_gradient(x, &q.gradient(x));
        let dot: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
        let bound = norm(&a) * norm(&b);
        w_cs = w_cs.max(((dot.abs() - bound) / bound.max(f64::MIN_POSITIVE)).max(0.0));
        w_cs = w_cs.max((k.psi - 1.0).max(-k.psi));
    }
    checks.push(check("gauge gradient |grad_H r|^2 = psi", m, w_grad, 1e-6));
    checks.push(check("gauge sub-Laplacian (2m+1) psi / r", m, w_lap, 1e-6));
    checks.push(check("Cauchy-Schwarz and 0 <= psi <= 1", m, w_cs, 1e-12));

    // Delta^phi(alpha(r(q0^-1 o q))) at q equals Delta^phi(alpha o r) at q0^-1 o q.
    let phi = Profile::parse("t^2 + t")?;
    let alpha = |t: f64| -> Result<[f64; 3]> { Ok([t * t * t + t, 3.0 * t * t + 1.0, 6.0 * t]) };
    let mut w_inv: f64 = 0.0;
    for x in points.iter().take(n_trials) {
        let base: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let moved = geometry.left_translate(&base, x);
        if geometry.gauge(&moved).r < 0.1 || geometry.horizontal_radius(&moved) < 1e-3 {
            continue;
        }
        let lhs = radial_phi_laplacian_at(geometry, &alpha, x, Some(&base), &phi, RadialKind::GaugeRadial)?;
        let rhs = radial_phi_laplacian_at(geometry, &alpha, &moved, None, &phi, RadialKind::GaugeRadial)?;
        w_inv = w_inv.max(rel_err(lhs, rhs));
        let field = radial_field(geometry, &alpha, Some(base), RadialKind::GaugeRadial);
        let via_hessian = phi_laplacian_hessian_at(geometry, &field, x, &phi)?;
        w_inv = w_inv.max(rel_err(via_hessian, rhs));
    }
    checks.push(check("left invariance", m, w_inv, 1e-8));

    let pass = checks.iter().all(|c| c.pass);
    Ok(GeometryReport { m, trials: n_trials, seed, checks, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{build_annulus_profile, build_subsolution_p, build_supersolution, DEFAULT_GLUING_RATE};
    use crate::profile::Constants;

    const H1: Geometry = Geometry::Heisenberg { m: 1 };

    fn p2(f: &str) -> ProblemSpec {
        ProblemSpec::product(H1, "t", f, "1", Constants::default()).unwrap()
    }

    #[test]
    fn geometry_suite_passes() {
        for m in [1, 3] {
            let r = geometry_checks(m, 50, 7).unwrap();
            assert!(r.pass, "{r:#?}");
        }
    }

    #[test]
    fn radial_residual_signs() {
        let spec = p2("t^2");
        let b = build_supersolution(&spec, 0.1, 0.2, 1.0, 2.0, 1.0).unwrap();
        let grid = b.audit_grid(100);
        assert!(radial_residual(&b, &spec, Sign::SuperLE, &grid).unwrap().pass);
        let flipped = radial_residual(&b, &spec, Sign::SubGE, &grid).unwrap();
        assert!(!flipped.pass);
        assert!(flipped.witness().is_some());
    }

    #[test]
    fn annulus_residual_vanishes() {
        let spec = p2("t^2");
        let b = build_annulus_profile(&spec, 2.0, 0.0, 1.0).unwrap();
        let g = radial_residual(&b, &spec, Sign::SuperLE, &b.audit_grid(64)).unwrap();
        assert!(g.pass && g.worst.abs() <= 1e-8, "{}", g.worst);
    }

    #[test]
    fn supersolution_on_the_group() {
        let spec = p2("t^2");
        let b = build_supersolution(&spec, 0.1, 0.2, 1.0, 2.0, 1.0).unwrap();
        let region = Region { radius: (1.01, b.t_end() - 1.0), height: 0.0, seam: None };
        let g =
            fullspace_residual(&b, RadialKind::GaugeRadial, &spec, &region, &FullspaceOptions::new(Sign::SuperLE, 3))
                .unwrap();
        assert!(g.pass, "worst {} at {:?}", g.worst, g.worst_location);
        assert_eq!(g.points.len() + g.skipped, 200);
    }

    #[test]
    fn subsolution_pointwise_and_weak() {
        let spec = p2("t^0.5");
        let s = build_subsolution_p(&spec, None, DEFAULT_GLUING_RATE).unwrap();
        let region = Region { radius: (0.05 * s.t_sigma, 20.0), height: 2.0, seam: Some(s.t_sigma) };
        let g = fullspace_residual(
            &s,
            RadialKind::StationaryRadial,
            &spec,
            &region,
            &FullspaceOptions::new(Sign::SubGE, 11),
        )
        .unwrap();
        assert!(g.pass, "worst {} at {:?}", g.worst, g.worst_location);

        let u = radial_field(H1, &s, None, RadialKind::StationaryRadial);
        let zeta = Bump { center: vec![s.t_sigma, 0.0, 0.0], radius: 0.5 * s.t_sigma };
        let w = weak_residual(&spec, &u, &zeta, 32, 0).unwrap();
        assert!(w.value >= -w.error_estimate, "{w:?}");
    }

    #[test]
    fn weak_residual_of_an_exact_solution() {
        // Delta_H (x^2 + y^2) = 4 on H^1.
        let spec = ProblemSpec::product(H1, "t", "4", "1", Constants::default()).unwrap();
        let mut p = Polynomial::zero(3);
        p.add_term(vec![2, 0, 0], 1.0);
        p.add_term(vec![0, 2, 0], 1.0);
        let u = ScalarField::polynomial(&p);
        let zeta = Bump { center: vec![0.3, -0.2, 0.1], radius: 0.8 };
        let w = weak_residual(&spec, &u, &zeta, 32, 0).unwrap();
        assert!(w.value.abs() <= 1e-3 * w.source_term.abs(), "{w:?}");
        assert!(w.value.abs() <= w.error_estimate.max(1e-6), "{w:?}");
    }

    #[test]
    fn weak_residual_of_a_constant() {
        let spec = ProblemSpec::product(H1, "t", "t^2", "1", Constants::default()).unwrap();
        let u = ScalarField::constant(0.0);
        let zeta = Bump { center: vec![0.0, 0.0, 5.0], radius: 1.0 };
        let w = weak_residual(&spec, &u, &zeta, 16, 0).unwrap();
        assert_eq!(w.value, 0.0);
    }

    #[test]
    fn constant_is_not_a_subsolution() {
        let spec = p2("t^2 + 1");
        let one = |_t: f64| -> Result<[f64; 3]> { Ok([2.0, 0.0, 0.0]) };
        let region = Region { radius: (0.5, 2.0), height: 1.0, seam: None };
        let g =
            fullspace_residual(&one, RadialKind::GaugeRadial, &spec, &region, &FullspaceOptions::new(Sign::SubGE, 1))
                .unwrap();
        assert!(!g.pass);
        assert!((g.worst + 5.0).abs() <= 1e-12, "{}", g.worst);
    }
}
