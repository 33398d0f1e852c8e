//! Sparse trivariate polynomials and polynomial vector fields.
//!
//! Coefficients are generic so the same code serves the exact rational
//! construction of the basis and the floating-point assembly path.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Exponent triple `(i, j, k)` of the monomial `x^i y^j z^k`.
pub type Exponent = [u32; 3];

/// Coefficient ring used by [`Poly`].
pub trait Coeff:
    Clone
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Coeff for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Coeff for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Total degree of a monomial.
pub fn total_degree(e: &Exponent) -> u32 {
    e[0] + e[1] + e[2]
}

/// All exponent triples of total degree `<= max_degree`, graded then
/// lexicographically descending in `x`.
pub fn monomials_up_to(max_degree: u32) -> Vec<Exponent> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        for i in (0..=d).rev() {
            for j in (0..=d - i).rev() {
                out.push([i, j, d - i - j]);
            }
        }
    }
    out
}

/// Sparse polynomial in `x, y, z`. Zero coefficients are never stored.
#[derive(Clone, PartialEq)]
pub struct Poly<T> {
    terms: BTreeMap<Exponent, T>,
}

impl<T: Coeff> Default for Poly<T> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Coeff> Poly<T> {
    pub fn zero() -> Self {
        Self {
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(c: T) -> Self {
        Self::monomial([0, 0, 0], c)
    }

    pub fn monomial(e: Exponent, c: T) -> Self {
        let mut p = Self::zero();
        p.add_term(e, c);
        p
    }

    /// The coordinate function `x`, `y` or `z` for `axis` 0, 1, 2.
    pub fn coordinate(axis: usize) -> Self {
        let mut e = [0; 3];
        e[axis] = 1;
        Self::monomial(e, T::one())
    }

    pub fn from_terms<I: IntoIterator<Item = (Exponent, T)>>(terms: I) -> Self {
        let mut p = Self::zero();
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    /// Adds `c * x^e`, dropping the entry if it cancels to zero.
    pub fn add_term(&mut self, e: Exponent, c: T) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&e) {
            Some(v) => {
                let s = v.clone() + c;
                if s.is_zero() {
                    self.terms.remove(&e);
                } else {
                    *v = s;
                }
            }
            None => {
                self.terms.insert(e, c);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, e: &Exponent) -> T {
        self.terms.get(e).cloned().unwrap_or_else(T::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &T)> {
        self.terms.iter()
    }

    /// Degree of the polynomial; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(total_degree).max()
    }

    pub fn scale(&self, s: &T) -> Self {
        if s.is_zero() {
            return Self::zero();
        }
        Self::from_terms(self.terms.iter().map(|(e, c)| (*e, c.clone() * s.clone())))
    }

    pub fn derivative(&self, axis: usize) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            if e[axis] == 0 {
                continue;
            }
            let mut f = *e;
            f[axis] -= 1;
            out.add_term(f, c.clone() * T::from_i64(e[axis] as i64));
        }
        out
    }

    /// Homogeneous part of degree `d`.
    pub fn homogeneous_part(&self, d: u32) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .filter(|(e, _)| total_degree(e) == d)
                .map(|(e, c)| (*e, c.clone())),
        )
    }

    pub fn map<U: Coeff, F: Fn(&T) -> U>(&self, f: F) -> Poly<U> {
        Poly::from_terms(self.terms.iter().map(|(e, c)| (*e, f(c))))
    }

    pub fn to_f64(&self) -> Poly<f64> {
        self.map(|c| c.to_f64())
    }

    pub fn eval(&self, p: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c.to_f64()
                    * p[0].powi(e[0] as i32)
                    * p[1].powi(e[1] as i32)
                    * p[2].powi(e[2] as i32)
            })
            .sum()
    }

    /// Divides by `1 - (k0 x^2 + k1 y^2 + k2 z^2)` and returns
    /// `(quotient, remainder)` with `self = chi * quotient + remainder`.
    ///
    /// The quotient is the truncation of the power series `self / chi` at
    /// degree `deg(self) - 2`, so the remainder vanishes iff `chi` divides
    /// `self`.
    pub fn div_rem_quadric(&self, k: &[T; 3]) -> (Self, Self) {
        let deg = match self.degree() {
            Some(d) => d,
            None => return (Self::zero(), Self::zero()),
        };
        let quad = Self::from_terms([
            ([2, 0, 0], k[0].clone()),
            ([0, 2, 0], k[1].clone()),
            ([0, 0, 2], k[2].clone()),
        ]);
        let mut quotient = Self::zero();
        if deg >= 2 {
            let mut prev2 = Self::zero();
            let mut prev1 = Self::zero();
            for d in 0..=deg - 2 {
                let mut qd = self.homogeneous_part(d);
                if d >= 2 {
                    qd = &qd + &(&quad * &prev2);
                }
                quotient = &quotient + &qd;
                prev2 = prev1;
                prev1 = qd;
            }
        }
        let chi = &Self::constant(T::one()) - &quad;
        let remainder = self - &(&chi * &quotient);
        (quotient, remainder)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .values()
            .map(|c| c.to_f64().abs())
            .fold(0.0, f64::max)
    }
}

impl<T: Coeff> Add for &Poly<T> {
    type Output = Poly<T>;
    fn add(self, rhs: Self) -> Poly<T> {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(*e, c.clone());
        }
        out
    }
}

impl<T: Coeff> Sub for &Poly<T> {
    type Output = Poly<T>;
    fn sub(self, rhs: Self) -> Poly<T> {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(*e, -c.clone());
        }
        out
    }
}

impl<T: Coeff> Mul for &Poly<T> {
    type Output = Poly<T>;
    fn mul(self, rhs: Self) -> Poly<T> {
        let mut out = Poly::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                out.add_term(
                    [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]],
                    ca.clone() * cb.clone(),
                );
            }
        }
        out
    }
}

impl<T: Coeff> Neg for &Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        self.map(|c| -c.clone())
    }
}

impl<T: Coeff + fmt::Display> fmt::Debug for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(e, c)| format!("{}*x^{}y^{}z^{}", c, e[0], e[1], e[2]))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// A polynomial vector field `(v_x, v_y, v_z)`.
#[derive(Clone, PartialEq)]
pub struct VectorField<T> {
    pub components: [Poly<T>; 3],
}

impl<T: Coeff> Default for VectorField<T> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Coeff + fmt::Display> fmt::Debug for VectorField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.components.iter()).finish()
    }
}

impl<T: Coeff> VectorField<T> {
    pub fn new(x: Poly<T>, y: Poly<T>, z: Poly<T>) -> Self {
        Self {
            components: [x, y, z],
        }
    }

    pub fn zero() -> Self {
        Self::new(Poly::zero(), Poly::zero(), Poly::zero())
    }

    /// The linear field `x -> G x`.
    pub fn linear(g: [[T; 3]; 3]) -> Self {
        let comp = |row: &[T; 3]| {
            Poly::from_terms((0..3).map(|a| {
                let mut e = [0; 3];
                e[a] = 1;
                (e, row[a].clone())
            }))
        };
        Self::new(comp(&g[0]), comp(&g[1]), comp(&g[2]))
    }

    /// The constant field `c`.
    pub fn constant(c: [T; 3]) -> Self {
        let [a, b, d] = c;
        Self::new(Poly::constant(a), Poly::constant(b), Poly::constant(d))
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Poly::is_zero)
    }

    pub fn degree(&self) -> Option<u32> {
        self.components.iter().filter_map(Poly::degree).max()
    }

    pub fn divergence(&self) -> Poly<T> {
        let mut d = self.components[0].derivative(0);
        d = &d + &self.components[1].derivative(1);
        &d + &self.components[2].derivative(2)
    }

    /// `grad[a][b] = d v_b / d x_a`.
    pub fn gradient(&self) -> [[Poly<T>; 3]; 3] {
        std::array::from_fn(|a| std::array::from_fn(|b| self.components[b].derivative(a)))
    }

    /// Symmetric part of the velocity gradient.
    pub fn strain(&self) -> [[Poly<T>; 3]; 3] {
        let g = self.gradient();
        let half = T::one() / T::from_i64(2);
        std::array::from_fn(|a| std::array::from_fn(|b| (&g[a][b] + &g[b][a]).scale(&half)))
    }

    pub fn dot(&self, other: &Self) -> Poly<T> {
        let mut s = Poly::zero();
        for c in 0..3 {
            s = &s + &(&self.components[c] * &other.components[c]);
        }
        s
    }

    pub fn cross(&self, other: &Self) -> Self {
        let [a0, a1, a2] = &self.components;
        let [b0, b1, b2] = &other.components;
        Self::new(
            &(a1 * b2) - &(a2 * b1),
            &(a2 * b0) - &(a0 * b2),
            &(a0 * b1) - &(a1 * b0),
        )
    }

    /// `(self . grad) other`.
    pub fn advect(&self, other: &Self) -> Self {
        let comps = std::array::from_fn(|b| {
            let mut s = Poly::zero();
            for a in 0..3 {
                s = &s + &(&self.components[a] * &other.components[b].derivative(a));
            }
            s
        });
        Self { components: comps }
    }

    /// The position field `x`.
    pub fn position() -> Self {
        Self::new(
            Poly::coordinate(0),
            Poly::coordinate(1),
            Poly::coordinate(2),
        )
    }

    pub fn scale(&self, s: &T) -> Self {
        Self {
            components: std::array::from_fn(|c| self.components[c].scale(s)),
        }
    }

    pub fn map<U: Coeff, F: Fn(&T) -> U + Copy>(&self, f: F) -> VectorField<U> {
        VectorField {
            components: std::array::from_fn(|c| self.components[c].map(f)),
        }
    }

    pub fn to_f64(&self) -> VectorField<f64> {
        self.map(|c| c.to_f64())
    }

    pub fn eval(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|c| self.components[c].eval(p))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.components
            .iter()
            .map(Poly::max_abs_coeff)
            .fold(0.0, f64::max)
    }
}

impl<T: Coeff> Add for &VectorField<T> {
    type Output = VectorField<T>;
    fn add(self, rhs: Self) -> VectorField<T> {
        VectorField {
            components: std::array::from_fn(|c| &self.components[c] + &rhs.components[c]),
        }
    }
}

impl<T: Coeff> Sub for &VectorField<T> {
    type Output = VectorField<T>;
    fn sub(self, rhs: Self) -> VectorField<T> {
        VectorField {
            components: std::array::from_fn(|c| &self.components[c] - &rhs.components[c]),
        }
    }
}

/// Linear combination `sum_i w_i f_i` of float fields.
pub fn combine(weights: &[f64], fields: &[VectorField<f64>]) -> VectorField<f64> {
    let mut out = VectorField::zero();
    for (w, f) in weights.iter().zip(fields) {
        if *w != 0.0 {
            out = &out + &f.scale(w);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn monomial_enumeration_counts() {
        assert_eq!(monomials_up_to(0).len(), 1);
        assert_eq!(monomials_up_to(1).len(), 4);
        assert_eq!(monomials_up_to(4).len(), 35);
    }

    #[test]
    fn cancellation_leaves_no_zero_terms() {
        let p = Poly::<f64>::from_terms([([1, 0, 0], 2.0), ([0, 1, 0], 1.0)]);
        let q = Poly::<f64>::from_terms([([1, 0, 0], 2.0)]);
        let d = &p - &q;
        assert_eq!(d.len(), 1);
        assert_eq!(d.degree(), Some(1));
        assert!((&p - &p).is_zero());
        assert_eq!((&p - &p).degree(), None);
    }

    #[test]
    fn product_and_derivative() {
        // (x + y)^2 differentiated in x is 2x + 2y.
        let s = &Poly::<BigRational>::coordinate(0) + &Poly::coordinate(1);
        let sq = &s * &s;
        let d = sq.derivative(0);
        assert_eq!(d.coeff(&[1, 0, 0]), rat(2, 1));
        assert_eq!(d.coeff(&[0, 1, 0]), rat(2, 1));
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn quadric_division_exact_and_inexact() {
        let k = [rat(1, 1), rat(1, 1), rat(25, 16)];
        let chi = Poly::from_terms([
            ([0, 0, 0], rat(1, 1)),
            ([2, 0, 0], rat(-1, 1)),
            ([0, 2, 0], rat(-1, 1)),
            ([0, 0, 2], rat(-25, 16)),
        ]);
        let q = Poly::from_terms([([1, 2, 0], rat(3, 7)), ([0, 0, 1], rat(-2, 1))]);
        let prod = &chi * &q;
        let (quot, rem) = prod.div_rem_quadric(&k);
        assert!(rem.is_zero());
        assert_eq!(quot, q);

        let (_, rem) = Poly::<BigRational>::coordinate(0).div_rem_quadric(&k);
        assert!(!rem.is_zero());
    }

    #[test]
    fn cross_and_divergence_of_rotation() {
        let ez = VectorField::<f64>::constant([0.0, 0.0, 1.0]);
        let r = ez.cross(&VectorField::position());
        assert_eq!(r.eval([1.0, 2.0, 3.0]), [-2.0, 1.0, 0.0]);
        assert!(r.divergence().is_zero());
        assert!(r.strain().iter().flatten().all(Poly::is_zero));
    }
}
