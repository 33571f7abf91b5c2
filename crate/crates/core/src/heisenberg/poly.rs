//! Multivariate polynomials with exact differentiation, used to apply the
//! left-invariant frame symbolically.

use std::collections::BTreeMap;

use rand::Rng;

/// Polynomial in `nvars` variables ordered `x_1..x_m, y_1..y_m, t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_term(&mut self, exponents: Vec<u32>, coeff: f64) {
        assert_eq!(exponents.len(), self.nvars);
        if coeff == 0.0 {
            return;
        }
        let e = self.terms.entry(exponents).or_insert(0.0);
        *e += coeff;
        if *e == 0.0 {
            let key: Vec<_> = self.terms.iter().find(|(_, v)| **v == 0.0).map(|(k, _)| k.clone()).unwrap();
            self.terms.remove(&key);
        }
    }

    /// Random polynomial with every monomial of total degree `<= degree`,
    /// coefficients uniform in `[-1, 1]`.
    pub fn random<R: Rng>(nvars: usize, degree: u32, rng: &mut R) -> Self {
        let mut p = Polynomial::zero(nvars);
        let mut exps = vec![0u32; nvars];
        fn rec<R: Rng>(p: &mut Polynomial, exps: &mut Vec<u32>, var: usize, left: u32, rng: &mut R) {
            if var == exps.len() {
                p.add_term(exps.clone(), rng.gen_range(-1.0..1.0));
                return;
            }
            for k in 0..=left {
                exps[var] = k;
                rec(p, exps, var + 1, left - k, rng);
            }
            exps[var] = 0;
        }
        rec(&mut p, &mut exps, 0, degree, rng);
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(e, c)| c * e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>()).sum()
    }

    pub fn partial(&self, var: usize) -> Self {
        let mut out = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[var] > 0 {
                let mut e2 = e.clone();
                e2[var] -= 1;
                out.add_term(e2, c * e[var] as f64);
            }
        }
        out
    }

    /// `coeff * x_var * self`.
    pub fn times_var(&self, var: usize, coeff: f64) -> Self {
        let mut out = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            e2[var] += 1;
            out.add_term(e2, c * coeff);
        }
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c * k);
        }
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nvars).map(|k| self.partial(k).eval(x)).collect()
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.nvars)
            .map(|i| {
                let di = self.partial(i);
                (0..self.nvars).map(|j| di.partial(j).eval(x)).collect()
            })
            .collect()
    }
}

/// `X_j p = d/dx_j p + 2 y_j d/dt p` on `H^m`, `j` zero-based.
pub fn apply_x(p: &Polynomial, m: usize, j: usize) -> Polynomial {
    let t = 2 * m;
    p.partial(j).plus(&p.partial(t).times_var(m + j, 2.0))
}

/// `Y_j p = d/dy_j p - 2 x_j d/dt p` on `H^m`, `j` zero-based.
pub fn apply_y(p: &Polynomial, m: usize, j: usize) -> Polynomial {
    let t = 2 * m;
    p.partial(m + j).plus(&p.partial(t).times_var(j, -2.0))
}
