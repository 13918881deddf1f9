//! Dense bivariate polynomials in the monomial basis.
//!
//! Monomials of total degree `n` are stored contiguously, ordered by the
//! power of `y`: `x^n, x^(n-1) y, ..., y^n`.

use std::ops::{Add, Mul, Sub};

#[derive(Clone, Debug, PartialEq)]
pub struct Poly2 {
    degree: usize,
    coeffs: Vec<f64>,
}

/// Number of monomials of total degree at most `d`.
pub fn count(d: usize) -> usize {
    (d + 1) * (d + 2) / 2
}

/// Number of monomials of total degree exactly `d`.
pub fn count_homogeneous(d: usize) -> usize {
    d + 1
}

/// Position of `x^a y^b`.
pub fn index(a: usize, b: usize) -> usize {
    let n = a + b;
    n * (n + 1) / 2 + b
}

/// Exponents `(a, b)` of every monomial up to degree `d`, in storage order.
pub fn exponents(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(count(d));
    for n in 0..=d {
        for b in 0..=n {
            out.push((n - b, b));
        }
    }
    out
}

/// Values of all monomials up to degree `d` at `(x, y)`.
pub fn monomials(d: usize, x: f64, y: f64) -> Vec<f64> {
    let mut out = vec![0.0; count(d)];
    monomials_into(d, x, y, &mut out);
    out
}

pub fn monomials_into(d: usize, x: f64, y: f64, out: &mut [f64]) {
    let mut xp = vec![1.0; d + 1];
    let mut yp = vec![1.0; d + 1];
    for i in 1..=d {
        xp[i] = xp[i - 1] * x;
        yp[i] = yp[i - 1] * y;
    }
    let mut k = 0;
    for n in 0..=d {
        for b in 0..=n {
            out[k] = xp[n - b] * yp[b];
            k += 1;
        }
    }
}

/// Values and first derivatives of all monomials up to degree `d`.
pub fn monomials_with_grad(d: usize, x: f64, y: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut xp = vec![1.0; d + 1];
    let mut yp = vec![1.0; d + 1];
    for i in 1..=d {
        xp[i] = xp[i - 1] * x;
        yp[i] = yp[i - 1] * y;
    }
    let mut val = Vec::with_capacity(count(d));
    let mut grad = Vec::with_capacity(count(d));
    for n in 0..=d {
        for b in 0..=n {
            let a = n - b;
            val.push(xp[a] * yp[b]);
            let dx = if a > 0 { a as f64 * xp[a - 1] * yp[b] } else { 0.0 };
            let dy = if b > 0 { b as f64 * xp[a] * yp[b - 1] } else { 0.0 };
            grad.push([dx, dy]);
        }
    }
    (val, grad)
}

impl Poly2 {
    pub fn zero(degree: usize) -> Self {
        Self { degree, coeffs: vec![0.0; count(degree)] }
    }

    pub fn from_coeffs(degree: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), count(degree));
        Self { degree, coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self { degree: 0, coeffs: vec![c] }
    }

    pub fn monomial(a: usize, b: usize) -> Self {
        let mut p = Self::zero(a + b);
        p.coeffs[index(a, b)] = 1.0;
        p
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, a: usize, b: usize) -> f64 {
        let i = index(a, b);
        if i < self.coeffs.len() {
            self.coeffs[i]
        } else {
            0.0
        }
    }

    /// Same polynomial stored with a larger degree bound.
    pub fn padded(&self, degree: usize) -> Self {
        assert!(degree >= self.degree);
        let mut c = self.coeffs.clone();
        c.resize(count(degree), 0.0);
        Self { degree, coeffs: c }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let m = monomials(self.degree, x, y);
        self.eval_monomials(&m)
    }

    /// Evaluate against precomputed monomial values of at least this degree.
    pub fn eval_monomials(&self, m: &[f64]) -> f64 {
        self.coeffs.iter().zip(m).map(|(c, v)| c * v).sum()
    }

    pub fn dx(&self) -> Self {
        let d = self.degree.saturating_sub(1);
        let mut out = Self::zero(d);
        for (i, (a, b)) in exponents(self.degree).into_iter().enumerate() {
            if a > 0 {
                out.coeffs[index(a - 1, b)] += a as f64 * self.coeffs[i];
            }
        }
        out
    }

    pub fn dy(&self) -> Self {
        let d = self.degree.saturating_sub(1);
        let mut out = Self::zero(d);
        for (i, (a, b)) in exponents(self.degree).into_iter().enumerate() {
            if b > 0 {
                out.coeffs[index(a, b - 1)] += b as f64 * self.coeffs[i];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { degree: self.degree, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

impl Add for &Poly2 {
    type Output = Poly2;
    fn add(self, rhs: &Poly2) -> Poly2 {
        let d = self.degree.max(rhs.degree);
        let mut out = self.padded(d);
        for (i, c) in rhs.coeffs.iter().enumerate() {
            out.coeffs[i] += c;
        }
        out
    }
}

impl Sub for &Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: &Poly2) -> Poly2 {
        self + &rhs.scale(-1.0)
    }
}

impl Mul for &Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: &Poly2) -> Poly2 {
        let mut out = Poly2::zero(self.degree + rhs.degree);
        let ea = exponents(self.degree);
        let eb = exponents(rhs.degree);
        for (i, &(a1, b1)) in ea.iter().enumerate() {
            let ci = self.coeffs[i];
            if ci == 0.0 {
                continue;
            }
            for (j, &(a2, b2)) in eb.iter().enumerate() {
                out.coeffs[index(a1 + a2, b1 + b2)] += ci * rhs.coeffs[j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_matches_exponents() {
        for (i, (a, b)) in exponents(5).into_iter().enumerate() {
            assert_eq!(index(a, b), i);
        }
        assert_eq!(count(3), 10);
    }

    #[test]
    fn product_and_derivatives() {
        // (1 + x)(x - y) = x - y + x^2 - xy
        let p = &Poly2::constant(1.0) + &Poly2::monomial(1, 0);
        let q = &Poly2::monomial(1, 0) - &Poly2::monomial(0, 1);
        let r = &p * &q;
        let (x, y) = (0.3, -1.7);
        assert!((r.eval(x, y) - (1.0 + x) * (x - y)).abs() < 1e-14);
        assert!((r.dx().eval(x, y) - (1.0 + 2.0 * x - y)).abs() < 1e-14);
        assert!((r.dy().eval(x, y) - (-1.0 - x)).abs() < 1e-14);
    }

    #[test]
    fn grad_table_matches_derivatives() {
        let (v, g) = monomials_with_grad(4, 0.7, 0.2);
        for (i, (a, b)) in exponents(4).into_iter().enumerate() {
            let m = Poly2::monomial(a, b);
            assert!((m.eval(0.7, 0.2) - v[i]).abs() < 1e-15);
            assert!((m.dx().eval(0.7, 0.2) - g[i][0]).abs() < 1e-14);
            assert!((m.dy().eval(0.7, 0.2) - g[i][1]).abs() < 1e-14);
        }
    }
}
