//! The Heisenberg group `H^m`: group law, Koranyi gauge, left-invariant
//! horizontal frame and three independent evaluations of the
//! phi-Laplacian (finite-difference divergence form, Hessian formula and
//! closed radial formulas). Euclidean space is carried along as a second
//! geometry so every operator also has a flat counterpart.

pub mod poly;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::Profile;

pub use poly::{apply_x, apply_y, Polynomial};

/// Minimum `|z|` at which stationary-radial quantities are evaluated.
pub const AXIS_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Geometry {
    Heisenberg { m: usize },
    Euclidean { m: usize },
}

impl Geometry {
    pub fn m(&self) -> usize {
        match *self {
            Geometry::Heisenberg { m } | Geometry::Euclidean { m } => m,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.m() == 0 {
            return Err(Error::Spec("geometry dimension m must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of Euclidean coordinates.
    pub fn dim(&self) -> usize {
        match *self {
            Geometry::Heisenberg { m } => 2 * m + 1,
            Geometry::Euclidean { m } => m,
        }
    }

    pub fn horizontal_dim(&self) -> usize {
        match *self {
            Geometry::Heisenberg { m } => 2 * m,
            Geometry::Euclidean { m } => m,
        }
    }

    pub fn is_heisenberg(&self) -> bool {
        matches!(self, Geometry::Heisenberg { .. })
    }

    /// Coefficient of `phi(alpha')/r` in the gauge-radial operator:
    /// `2m+1` (homogeneous dimension minus one) or `m-1`.
    pub fn gauge_constant(&self) -> f64 {
        match *self {
            Geometry::Heisenberg { m } => (2 * m + 1) as f64,
            Geometry::Euclidean { m } => m as f64 - 1.0,
        }
    }

    /// Coefficient of `phi(w')/|z|` for functions of `|z|` alone.
    pub fn stationary_constant(&self) -> f64 {
        match *self {
            Geometry::Heisenberg { m } => (2 * m) as f64 - 1.0,
            Geometry::Euclidean { m } => m as f64 - 1.0,
        }
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// `b = (2y, -2x)`, the border column of `B`; empty in Euclidean space.
    fn border(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            Geometry::Heisenberg { m } => {
                let mut b = Vec::with_capacity(2 * m);
                b.extend(x[m..2 * m].iter().map(|y| 2.0 * y));
                b.extend(x[..m].iter().map(|x| -2.0 * x));
                b
            }
            Geometry::Euclidean { .. } => Vec::new(),
        }
    }

    /// Frame components of a Euclidean gradient.
    pub fn horizontal_from_gradient(&self, x: &[f64], grad: &[f64]) -> Vec<f64> {
        match *self {
            Geometry::Heisenberg { m } => {
                let ut = grad[2 * m];
                self.border(x).iter().zip(grad).map(|(b, g)| g + b * ut).collect()
            }
            Geometry::Euclidean { .. } => grad.to_vec(),
        }
    }

    /// `B grad u` as a Euclidean vector, given the frame components `h`.
    fn flux_direction(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        match self {
            Geometry::Heisenberg { .. } => {
                let b = self.border(x);
                let mut out = h.to_vec();
                out.push(b.iter().zip(h).map(|(b, h)| b * h).sum());
                out
            }
            Geometry::Euclidean { .. } => h.to_vec(),
        }
    }

    /// Koranyi gauge and density (Heisenberg) or Euclidean norm with
    /// density 1.
    pub fn gauge(&self, x: &[f64]) -> Koranyi {
        match *self {
            Geometry::Heisenberg { m } => koranyi_coords(&x[..2 * m], x[2 * m]),
            Geometry::Euclidean { .. } => {
                let r = norm(x);
                Koranyi { r, psi: if r > 0.0 { 1.0 } else { 0.0 } }
            }
        }
    }

    /// `|z|` in `H^m`, `|x|` in Euclidean space.
    pub fn horizontal_radius(&self, x: &[f64]) -> f64 {
        norm(&x[..self.horizontal_dim()])
    }

    /// Left translation `q0^{-1} o x` (plain subtraction in Euclidean space).
    pub fn left_translate(&self, base: &[f64], x: &[f64]) -> Vec<f64> {
        match *self {
            Geometry::Heisenberg { m } => {
                let mut out: Vec<f64> = x.iter().zip(base).map(|(a, b)| a - b).collect();
                let twist: f64 = (0..m).map(|i| base[i] * x[m + i] - base[m + i] * x[i]).sum();
                out[2 * m] += 2.0 * twist;
                out
            }
            Geometry::Euclidean { .. } => x.iter().zip(base).map(|(a, b)| a - b).collect(),
        }
    }

    /// Jacobian of `x -> q0^{-1} o x`, row-major.
    fn left_jacobian(&self, base: &[f64]) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut j: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|k| if i == k { 1.0 } else { 0.0 }).collect()).collect();
        if let Geometry::Heisenberg { m } = *self {
            for i in 0..m {
                j[2 * m][i] = -2.0 * base[m + i];
                j[2 * m][m + i] = 2.0 * base[i];
            }
        }
        j
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// An element of `H^m`: `z = (x_1..x_m, y_1..y_m)` and `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub m: usize,
    pub z: Vec<f64>,
    pub t: f64,
}

impl Point {
    pub fn new(m: usize, z: Vec<f64>, t: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::Invalid("m must be >= 1".into()));
        }
        if z.len() != 2 * m {
            return Err(Error::DimensionMismatch { expected: 2 * m, got: z.len() });
        }
        if !t.is_finite() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("point coordinates must be finite".into()));
        }
        Ok(Point { m, z, t })
    }

    pub fn origin(m: usize) -> Self {
        Point { m, z: vec![0.0; 2 * m], t: 0.0 }
    }

    pub fn from_coords(m: usize, coords: &[f64]) -> Result<Self> {
        if coords.len() != 2 * m + 1 {
            return Err(Error::DimensionMismatch { expected: 2 * m + 1, got: coords.len() });
        }
        Point::new(m, coords[..2 * m].to_vec(), coords[2 * m])
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.z.clone();
        c.push(self.t);
        c
    }

    pub fn inverse(&self) -> Self {
        Point { m: self.m, z: self.z.iter().map(|v| -v).collect(), t: -self.t }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::Heisenberg { m: self.m }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupMode {
    Multiply,
    InverseOfFirstThenMultiply,
}

/// `a o b`, or `a^{-1} o b`, with
/// `(z, t) o (z', t') = (z + z', t + t' + 2 sum(y_i x'_i - x_i y'_i))`.
pub fn group_op(a: &Point, b: &Point, mode: GroupMode) -> Result<Point> {
    if a.m != b.m {
        return Err(Error::DimensionMismatch { expected: a.m, got: b.m });
    }
    let a = match mode {
        GroupMode::Multiply => a.clone(),
        GroupMode::InverseOfFirstThenMultiply => a.inverse(),
    };
    let m = a.m;
    let z = a.z.iter().zip(&b.z).map(|(p, q)| p + q).collect();
    let twist: f64 = (0..m).map(|i| a.z[m + i] * b.z[i] - a.z[i] * b.z[m + i]).sum();
    Ok(Point { m, z, t: a.t + b.t + 2.0 * twist })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Koranyi {
    pub r: f64,
    pub psi: f64,
}

fn koranyi_coords(z: &[f64], t: f64) -> Koranyi {
    let z2: f64 = z.iter().map(|v| v * v).sum();
    let r = (z2 * z2 + t * t).sqrt().sqrt();
    let psi = if r > 0.0 { (z2 / (r * r)).min(1.0) } else { 0.0 };
    Koranyi { r, psi }
}

/// Gauge `r = (|z|^4 + t^2)^{1/4}` and density `psi = |z|^2/r^2` of `q`, or
/// of `base^{-1} o q` when a base point is given. `psi(o) = 0`.
pub fn koranyi(q: &Point, base: Option<&Point>) -> Result<Koranyi> {
    let q = match base {
        Some(b) => group_op(b, q, GroupMode::InverseOfFirstThenMultiply)?,
        None => q.clone(),
    };
    Ok(koranyi_coords(&q.z, q.t))
}

/// Components along `X_1..X_m, Y_1..Y_m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizontalVector {
    pub m: usize,
    pub coeffs: Vec<f64>,
}

impl HorizontalVector {
    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

type ValueFn<'a> = Box<dyn Fn(&[f64]) -> Result<f64> + Send + Sync + 'a>;
type VectorFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'a>;
type MatrixFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<Vec<f64>>> + Send + Sync + 'a>;

/// A scalar function of the Euclidean coordinates with optional analytic
/// gradient and Hessian. Missing derivatives fall back to central
/// differences with step `fd_step * max(1, |x_k|)`.
pub struct ScalarField<'a> {
    value: ValueFn<'a>,
    gradient: Option<VectorFn<'a>>,
    hessian: Option<MatrixFn<'a>>,
    pub fd_step: f64,
}

impl<'a> ScalarField<'a> {
    pub fn new(value: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'a) -> Self {
        ScalarField { value: Box::new(value), gradient: None, hessian: None, fd_step: 1e-4 }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'a) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64]) -> Result<Vec<Vec<f64>>> + Send + Sync + 'a) -> Self {
        self.hessian = Some(Box::new(h));
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    /// Polynomial field with exact derivatives.
    pub fn polynomial(p: &'a Polynomial) -> Self {
        ScalarField::new(move |x| Ok(p.eval(x)))
            .with_gradient(move |x| Ok(p.gradient(x)))
            .with_hessian(move |x| Ok(p.hessian(x)))
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new(move |_| Ok(c))
            .with_gradient(|x| Ok(vec![0.0; x.len()]))
            .with_hessian(|x| Ok(vec![vec![0.0; x.len()]; x.len()]))
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = match &self.gradient {
            Some(g) => g(x)?,
            None => {
                let mut xs = x.to_vec();
                let mut g = Vec::with_capacity(x.len());
                for k in 0..x.len() {
                    let h = self.fd_step * x[k].abs().max(1.0);
                    xs[k] = x[k] + h;
                    let up = self.value(&xs)?;
                    xs[k] = x[k] - h;
                    let down = self.value(&xs)?;
                    xs[k] = x[k];
                    g.push((up - down) / (2.0 * h));
                }
                g
            }
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(format!("non-finite partial derivative at {x:?}")));
        }
        Ok(g)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if let Some(h) = &self.hessian {
            return h(x);
        }
        let n = x.len();
        let mut xs = x.to_vec();
        let mut hess = vec![vec![0.0; n]; n];
        for k in 0..n {
            let h = self.fd_step * x[k].abs().max(1.0);
            xs[k] = x[k] + h;
            let up = self.gradient(&xs)?;
            xs[k] = x[k] - h;
            let down = self.gradient(&xs)?;
            xs[k] = x[k];
            for i in 0..n {
                hess[i][k] = (up[i] - down[i]) / (2.0 * h);
            }
        }
        // Symmetrize the difference quotient.
        for i in 0..n {
            for k in 0..i {
                let s = 0.5 * (hess[i][k] + hess[k][i]);
                hess[i][k] = s;
                hess[k][i] = s;
            }
        }
        Ok(hess)
    }
}

/// `grad_H u` at `x` in the given geometry.
pub fn horizontal_gradient(geometry: Geometry, u: &ScalarField, x: &[f64]) -> Result<Vec<f64>> {
    geometry.check_len(x)?;
    let grad = u.gradient(x)?;
    Ok(geometry.horizontal_from_gradient(x, &grad))
}

/// `(X_1 u, .., X_m u, Y_1 u, .., Y_m u)` at `q`.
pub fn horizontal_apply(u: &ScalarField, q: &Point) -> Result<HorizontalVector> {
    let coeffs = horizontal_gradient(q.geometry(), u, &q.coords())?;
    Ok(HorizontalVector { m: q.m, coeffs })
}

/// `B(q) = [[I_2m, b], [b^T, 4|z|^2]]` with `b = (2y, -2x)`.
pub fn matrix_b(q: &Point) -> Vec<Vec<f64>> {
    let g = q.geometry();
    let x = q.coords();
    let b = g.border(&x);
    let n = g.dim();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n - 1 {
        out[i][i] = 1.0;
        out[i][n - 1] = b[i];
        out[n - 1][i] = b[i];
    }
    out[n - 1][n - 1] = 4.0 * q.z.iter().map(|v| v * v).sum::<f64>();
    out
}

/// `A(g) grad_H u` carried back to Euclidean components, i.e. the vector
/// field whose divergence is the phi-Laplacian. Zero where the gradient
/// vanishes, which is the continuous extension since `|flux| <= C phi(g)`.
fn flux(geometry: Geometry, u: &ScalarField, x: &[f64], phi: &Profile) -> Result<(Vec<f64>, bool)> {
    let h = horizontal_gradient(geometry, u, x)?;
    let g = norm(&h);
    if g == 0.0 {
        return Ok((vec![0.0; geometry.dim()], true));
    }
    let a = phi.eval(g)? / g;
    let out: Vec<f64> = geometry.flux_direction(x, &h).into_iter().map(|v| a * v).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("non-finite flux at {x:?}")));
    }
    Ok((out, false))
}

/// Central-difference divergence of the flux `A(|grad_H u|) B grad u` at
/// Euclidean coordinates `x`. The step along coordinate `k` is
/// `step * max(1, |x_k|)`.
pub fn phi_laplacian_fd_at(geometry: Geometry, u: &ScalarField, x: &[f64], phi: &Profile, step: f64) -> Result<f64> {
    geometry.check_len(x)?;
    if !(step > 0.0) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let mut xs = x.to_vec();
    let mut div = 0.0;
    let mut vanished = 0;
    let mut total = 0;
    for k in 0..x.len() {
        let h = step * x[k].abs().max(1.0);
        xs[k] = x[k] + h;
        let (up, z_up) = flux(geometry, u, &xs, phi)?;
        xs[k] = x[k] - h;
        let (down, z_down) = flux(geometry, u, &xs, phi)?;
        xs[k] = x[k];
        vanished += z_up as usize + z_down as usize;
        total += 2;
        div += (up[k] - down[k]) / (2.0 * h);
    }
    if vanished > 0 && vanished < total {
        // A(t) = phi(t)/t is bounded near 0 only when phi'(0) is finite.
        let bounded = phi.deriv(0.0).map(|d| d.is_finite()).unwrap_or(false);
        if !bounded {
            return Err(Error::VanishingGradient(format!("horizontal gradient vanishes near {x:?}")));
        }
    }
    if !div.is_finite() {
        return Err(Error::Singular(format!("non-finite divergence at {x:?}")));
    }
    Ok(div)
}

/// [`phi_laplacian_fd_at`] at a point of `H^m`.
pub fn phi_laplacian_fd(u: &ScalarField, q: &Point, phi: &Profile, step: f64) -> Result<f64> {
    phi_laplacian_fd_at(q.geometry(), u, &q.coords(), phi, step)
}

/// phi-Laplacian from the (analytic or FD) Hessian:
/// `(phi(g)/g) Delta_H u + ((phi'(g) - phi(g)/g)/g^2) sum u_i u_j X_i X_j u`.
pub fn phi_laplacian_hessian_at(geometry: Geometry, u: &ScalarField, x: &[f64], phi: &Profile) -> Result<f64> {
    geometry.check_len(x)?;
    let grad = u.gradient(x)?;
    let hess = u.hessian(x)?;
    let h = geometry.horizontal_from_gradient(x, &grad);
    let g = norm(&h);
    if g == 0.0 {
        return Err(Error::VanishingGradient(format!("horizontal gradient vanishes at {x:?}")));
    }
    let n = geometry.horizontal_dim();
    let b = geometry.border(x);
    let t = geometry.dim() - 1;
    // Symmetric part of X_i X_j u; the antisymmetric part drops out of
    // both the trace and the quadratic form.
    let s = |i: usize, j: usize| -> f64 {
        if b.is_empty() {
            hess[i][j]
        } else {
            hess[i][j] + b[j] * hess[i][t] + b[i] * hess[t][j] + b[i] * b[j] * hess[t][t]
        }
    };
    let mut trace = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        trace += s(i, i);
        for j in 0..n {
            quad += h[i] * h[j] * s(i, j);
        }
    }
    let a = phi.eval(g)? / g;
    let d = phi.deriv(g)?;
    Ok(a * trace + (d - a) / (g * g) * quad)
}

/// A radial profile: returns `(alpha, alpha', alpha'')` at `t`.
pub trait RadialProfile {
    fn jet(&self, t: f64) -> Result<[f64; 3]>;
}

impl<F> RadialProfile for F
where
    F: Fn(f64) -> Result<[f64; 3]>,
{
    fn jet(&self, t: f64) -> Result<[f64; 3]> {
        self(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadialKind {
    /// Function of the Koranyi gauge `r`.
    GaugeRadial,
    /// Function of `|z|` alone.
    StationaryRadial,
    /// Function of `|x|` in Euclidean space.
    EuclideanRadial,
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `sp [sp phi'(|a1| sp) a2 + kappa/rho sgn(a1) phi(|a1| sp)]` with
/// `sp = sqrt(psi)`; terms with a vanishing factor are skipped so that
/// `phi'` is never evaluated where it is not needed.
pub(crate) fn radial_formula(phi: &Profile, a1: f64, a2: f64, sp: f64, kappa: f64, rho: f64) -> Result<f64> {
    if sp == 0.0 {
        return Ok(0.0);
    }
    let g = a1.abs() * sp;
    let second = if a2 == 0.0 { 0.0 } else { sp * phi.deriv(g)? * a2 };
    let first = if a1 == 0.0 || kappa == 0.0 { 0.0 } else { kappa / rho * sgn(a1) * phi.eval(g)? };
    Ok(sp * (second + first))
}

/// Closed-form phi-Laplacian of `alpha(rho(x))` where `rho` is the gauge,
/// `|z|` or `|x|` according to `kind`, optionally centred at `base`.
/// Euclidean geometry treats every kind as Euclidean-radial.
pub fn radial_phi_laplacian_at(
    geometry: Geometry,
    alpha: &dyn RadialProfile,
    x: &[f64],
    base: Option<&[f64]>,
    phi: &Profile,
    kind: RadialKind,
) -> Result<f64> {
    geometry.check_len(x)?;
    let shifted;
    let x = match base {
        Some(b) => {
            geometry.check_len(b)?;
            shifted = geometry.left_translate(b, x);
            &shifted[..]
        }
        None => x,
    };
    match (geometry, kind) {
        (Geometry::Heisenberg { .. }, RadialKind::GaugeRadial) => {
            let Koranyi { r, psi } = geometry.gauge(x);
            if r == 0.0 {
                return Err(Error::Singular("gauge-radial operator at the origin".into()));
            }
            let [_, a1, a2] = alpha.jet(r)?;
            radial_formula(phi, a1, a2, psi.sqrt(), geometry.gauge_constant(), r)
        }
        (Geometry::Heisenberg { .. }, RadialKind::StationaryRadial) => {
            let rho = geometry.horizontal_radius(x);
            if rho < AXIS_GUARD {
                return Err(Error::Singular(format!("|z| = {rho:e} below the axis guard")));
            }
            let [_, a1, a2] = alpha.jet(rho)?;
            radial_formula(phi, a1, a2, 1.0, geometry.stationary_constant(), rho)
        }
        (Geometry::Heisenberg { .. }, RadialKind::EuclideanRadial) => {
            Err(Error::Invalid("Euclidean-radial operator requested on the Heisenberg group".into()))
        }
        (Geometry::Euclidean { .. }, _) => {
            let rho = norm(x);
            if rho == 0.0 {
                return Err(Error::Singular("radial operator at the origin".into()));
            }
            let [_, a1, a2] = alpha.jet(rho)?;
            radial_formula(phi, a1, a2, 1.0, geometry.gauge_constant(), rho)
        }
    }
}

/// [`radial_phi_laplacian_at`] at a point of `H^m`.
pub fn radial_phi_laplacian(alpha: &dyn RadialProfile, q: &Point, phi: &Profile, kind: RadialKind) -> Result<f64> {
    radial_phi_laplacian_at(q.geometry(), alpha, &q.coords(), None, phi, kind)
}

/// Value, gradient and Hessian of the radial coordinate selected by `kind`.
fn radius_jet(geometry: Geometry, x: &[f64], kind: RadialKind) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let n = geometry.dim();
    let gauge = geometry.is_heisenberg() && kind == RadialKind::GaugeRadial;
    if gauge {
        let m = geometry.m();
        let z = &x[..2 * m];
        let t = x[2 * m];
        let z2: f64 = z.iter().map(|v| v * v).sum();
        let q = z2 * z2 + t * t;
        if q == 0.0 {
            return Err(Error::Singular("gauge derivatives at the origin".into()));
        }
        let r = q.sqrt().sqrt();
        // dQ and d2Q for Q = |z|^4 + t^2.
        let mut dq = vec![0.0; n];
        for i in 0..2 * m {
            dq[i] = 4.0 * z2 * z[i];
        }
        dq[2 * m] = 2.0 * t;
        let mut d2q = vec![vec![0.0; n]; n];
        for i in 0..2 * m {
            for k in 0..2 * m {
                d2q[i][k] = 8.0 * z[i] * z[k] + if i == k { 4.0 * z2 } else { 0.0 };
            }
        }
        d2q[2 * m][2 * m] = 2.0;
        let q34 = r * r * r;
        let q74 = q34 * q;
        let grad: Vec<f64> = dq.iter().map(|d| 0.25 * d / q34).collect();
        let hess = (0..n)
            .map(|a| (0..n).map(|b| 0.25 * d2q[a][b] / q34 - 3.0 / 16.0 * dq[a] * dq[b] / q74).collect())
            .collect();
        Ok((r, grad, hess))
    } else {
        let k = geometry.horizontal_dim();
        let rho = norm(&x[..k]);
        if rho < AXIS_GUARD {
            return Err(Error::Singular(format!("radius {rho:e} below the axis guard")));
        }
        let mut grad = vec![0.0; n];
        let mut hess = vec![vec![0.0; n]; n];
        for i in 0..k {
            grad[i] = x[i] / rho;
            for j in 0..k {
                hess[i][j] = (if i == j { 1.0 } else { 0.0 } - x[i] * x[j] / (rho * rho)) / rho;
            }
        }
        Ok((rho, grad, hess))
    }
}

/// `u(x) = alpha(rho(base^{-1} o x))` with analytic gradient and Hessian by
/// the chain rule through the (affine) left translation.
pub fn radial_field<'a, P: RadialProfile + Sync + ?Sized>(
    geometry: Geometry,
    alpha: &'a P,
    base: Option<Vec<f64>>,
    kind: RadialKind,
) -> ScalarField<'a> {
    let base = base.unwrap_or_else(|| vec![0.0; geometry.dim()]);
    let jac = geometry.left_jacobian(&base);
    let b1 = base.clone();
    let b2 = base.clone();
    let j1 = jac.clone();
    ScalarField::new(move |x| {
        let y = geometry.left_translate(&base, x);
        let rho = match (geometry.is_heisenberg(), kind) {
            (true, RadialKind::GaugeRadial) => geometry.gauge(&y).r,
            _ => geometry.horizontal_radius(&y),
        };
        Ok(alpha.jet(rho)?[0])
    })
    .with_gradient(move |x| {
        let y = geometry.left_translate(&b1, x);
        let (rho, g, _) = radius_jet(geometry, &y, kind)?;
        let [_, a1, _] = alpha.jet(rho)?;
        Ok(mat_t_vec(&j1, &g).into_iter().map(|v| a1 * v).collect())
    })
    .with_hessian(move |x| {
        let y = geometry.left_translate(&b2, x);
        let (rho, g, h) = radius_jet(geometry, &y, kind)?;
        let [_, a1, a2] = alpha.jet(rho)?;
        let jg = mat_t_vec(&jac, &g);
        let n = jg.len();
        // J^T H J
        let hj: Vec<Vec<f64>> =
            (0..n).map(|a| (0..n).map(|b| (0..n).map(|c| h[a][c] * jac[c][b]).sum()).collect()).collect();
        Ok((0..n)
            .map(|a| {
                (0..n).map(|b| a2 * jg[a] * jg[b] + a1 * (0..n).map(|c| jac[c][a] * hj[c][b]).sum::<f64>()).collect()
            })
            .collect())
    })
}

fn mat_t_vec(j: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    (0..v.len()).map(|a| (0..v.len()).map(|c| j[c][a] * v[c]).sum()).collect()
}

/// The Koranyi gauge itself as a field with analytic derivatives.
pub fn gauge_field(m: usize) -> ScalarField<'static> {
    static IDENTITY: fn(f64) -> Result<[f64; 3]> = |t| Ok([t, 1.0, 0.0]);
    radial_field(Geometry::Heisenberg { m }, &IDENTITY, None, RadialKind::GaugeRadial)
}
