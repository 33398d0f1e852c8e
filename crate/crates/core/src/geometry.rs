//! Ellipsoidal container, exact volume moments and surface quadrature.
//!
//! The domain is `x^2/a^2 + y^2/b^2 + z^2/c^2 < 1`. The squared semi-axes
//! are held as exact rationals: every volume moment is then
//! `pi * a * b * (c or 1) * rational`, and the only rounding happens in the
//! final conversion to `f64`.

use std::f64::consts::PI;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::poly::{Exponent, Poly};

const KIND_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("semi-axes must be positive and finite, got ({0}, {1}, {2})")]
    BadAxes(f64, f64, f64),
    #[error("beta must satisfy beta > -1, got {0}")]
    BadBeta(f64),
    #[error("cannot represent {0:?} as an exact decimal")]
    NotDecimal(String),
    #[error("surface rule needs n_theta >= 2 and n_phi >= 4, got ({0}, {1})")]
    RuleTooSmall(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainKind {
    Sphere,
    /// Solid of revolution about `Oz` (`a = b != c`).
    SpheroidZ,
    /// Solid of revolution about `Ox` or `Oy`.
    SpheroidOther,
    Triaxial,
}

impl DomainKind {
    /// Number of independent rigid rotations tangent to the boundary.
    pub fn rotation_count(&self) -> usize {
        match self {
            DomainKind::Sphere => 3,
            DomainKind::SpheroidZ | DomainKind::SpheroidOther => 1,
            DomainKind::Triaxial => 0,
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainKind::Sphere => "sphere",
            DomainKind::SpheroidZ => "spheroid_z",
            DomainKind::SpheroidOther => "spheroid_xy",
            DomainKind::Triaxial => "triaxial",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hemisphere {
    North,
    South,
}

/// Parses a decimal literal (`"0.5625"`, `"-1.25e-3"`) into an exact rational.
pub fn parse_decimal(s: &str) -> Result<BigRational, GeometryError> {
    let err = || GeometryError::NotDecimal(s.to_string());
    let t = s.trim();
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(pos) => (&t[..pos], t[pos + 1..].parse::<i32>().map_err(|_| err())?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(pos) => (&digits[..pos], &digits[pos + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(err());
    }
    let all: String = format!("{int_part}{frac_part}");
    let num: BigInt = if all.is_empty() {
        BigInt::zero()
    } else {
        all.parse().map_err(|_| err())?
    };
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(num);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -r } else { r })
}

/// Exact rational with the same shortest decimal representation as `x`.
pub fn decimal_of(x: f64) -> Result<BigRational, GeometryError> {
    if !x.is_finite() {
        return Err(GeometryError::NotDecimal(x.to_string()));
    }
    parse_decimal(&format!("{x}"))
}

/// Ellipsoidal container with semi-axes `a`, `b`, `c`.
#[derive(Clone, Debug)]
pub struct Domain {
    a: f64,
    b: f64,
    c: f64,
    squares: [BigRational; 3],
    kind: DomainKind,
}

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        self.squares == other.squares
    }
}

impl Domain {
    /// Builds the domain from semi-axes; each axis is read as the decimal it
    /// prints as, so `0.9` means exactly `9/10`.
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, GeometryError> {
        if !(a > 0.0 && b > 0.0 && c > 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(GeometryError::BadAxes(a, b, c));
        }
        let sq = |v: f64| decimal_of(v).map(|r| &r * &r);
        Self::from_squares([sq(a)?, sq(b)?, sq(c)?])
    }

    /// Builds the domain from exact squared semi-axes.
    pub fn from_squares(squares: [BigRational; 3]) -> Result<Self, GeometryError> {
        let f: [f64; 3] = std::array::from_fn(|i| squares[i].to_f64().unwrap_or(f64::NAN));
        if f.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || squares.iter().any(|s| !s.is_positive())
        {
            return Err(GeometryError::BadAxes(f[0], f[1], f[2]));
        }
        let (a, b, c) = (f[0].sqrt(), f[1].sqrt(), f[2].sqrt());
        let close = |u: f64, v: f64| (u - v).abs() <= KIND_TOL * u.abs().max(v.abs());
        let kind = if close(a, b) && close(b, c) {
            DomainKind::Sphere
        } else if close(a, b) {
            DomainKind::SpheroidZ
        } else if close(a, c) || close(b, c) {
            DomainKind::SpheroidOther
        } else {
            DomainKind::Triaxial
        };
        Ok(Self {
            a,
            b,
            c,
            squares,
            kind,
        })
    }

    /// The spheroid `x^2 + y^2 + (1 + beta) z^2 < 1`.
    pub fn spheroid(beta: f64) -> Result<Self, GeometryError> {
        if !(beta > -1.0) || !beta.is_finite() {
            return Err(GeometryError::BadBeta(beta));
        }
        let one = BigRational::one();
        let c2 = &one / (&one + decimal_of(beta)?);
        Self::from_squares([one.clone(), one, c2])
    }

    pub fn unit_sphere() -> Self {
        Self::from_squares([BigRational::one(), BigRational::one(), BigRational::one()])
            .expect("unit sphere")
    }

    pub fn axes(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn squared_axes(&self) -> &[BigRational; 3] {
        &self.squares
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    /// Exact coefficients `k` of `chi = 1 - k0 x^2 - k1 y^2 - k2 z^2`.
    pub fn chi_coefficients(&self) -> [BigRational; 3] {
        std::array::from_fn(|i| self.squares[i].recip())
    }

    /// The defining polynomial `chi`, positive inside and zero on the boundary.
    pub fn chi(&self) -> Poly<BigRational> {
        let k = self.chi_coefficients();
        Poly::from_terms([
            ([0, 0, 0], BigRational::one()),
            ([2, 0, 0], -k[0].clone()),
            ([0, 2, 0], -k[1].clone()),
            ([0, 0, 2], -k[2].clone()),
        ])
    }

    pub fn chi_at(&self, p: [f64; 3]) -> f64 {
        1.0 - (p[0] / self.a).powi(2) - (p[1] / self.b).powi(2) - (p[2] / self.c).powi(2)
    }

    /// Outward unit normal at a boundary point.
    pub fn normal(&self, p: [f64; 3]) -> [f64; 3] {
        let g = [
            p[0] / (self.a * self.a),
            p[1] / (self.b * self.b),
            p[2] / (self.c * self.c),
        ];
        let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        [g[0] / n, g[1] / n, g[2] / n]
    }

    /// `beta` such that the domain is `x^2 + y^2 + (1 + beta) z^2 < 1` up to
    /// an overall scale, when the domain is a solid of revolution about `Oz`.
    pub fn poincare_beta(&self) -> Option<f64> {
        match self.kind {
            DomainKind::Triaxial | DomainKind::SpheroidOther => None,
            _ => Some((&self.squares[0] / &self.squares[2] - BigRational::one()).to_f64()?),
        }
    }

    pub fn volume(&self) -> f64 {
        self.monomial_integral(0, 0, 0)
    }

    /// Exact `rational` and `f64` prefactor such that the moment equals
    /// `prefactor * rational`.
    fn moment_parts(&self, p: u32, q: u32, r: u32) -> (f64, BigRational) {
        let g =
            gamma_half(p + 1) * gamma_half(q + 1) * gamma_half(r + 1) / gamma_half(p + q + r + 5);
        let pw = |s: &BigRational, e: u32| num_traits::pow(s.clone(), e as usize);
        let rat = g.rational
            * pw(&self.squares[0], p / 2)
            * pw(&self.squares[1], q / 2)
            * pw(&self.squares[2], r / 2);
        // Remaining odd powers of the axes.
        let mut pre = self.a * self.b * PI;
        pre *= if r.is_multiple_of(2) { self.c } else { 1.0 };
        let rat = if r % 2 == 1 {
            rat * &self.squares[2]
        } else {
            rat
        };
        debug_assert_eq!(g.sqrt_pi_power, 2);
        (pre, rat)
    }

    /// `int_Omega x^p y^q z^r dV`, exact up to the final float conversion.
    pub fn monomial_integral(&self, p: u32, q: u32, r: u32) -> f64 {
        if p % 2 == 1 || q % 2 == 1 || r % 2 == 1 {
            return 0.0;
        }
        let (pre, rat) = self.moment_parts(p, q, r);
        pre * rat.to_f64().unwrap_or(f64::NAN)
    }

    /// `int_{Omega, +-z > 0} x^p y^q z^r dV`.
    pub fn half_monomial_integral(&self, p: u32, q: u32, r: u32, h: Hemisphere) -> f64 {
        if p % 2 == 1 || q % 2 == 1 {
            return 0.0;
        }
        if r.is_multiple_of(2) {
            return 0.5 * self.monomial_integral(p, q, r);
        }
        // Reflection z -> -z gives int_{z>0} = (1/2) int |z|^r, which the
        // Dirichlet formula evaluates for any exponent.
        let (pre, rat) = self.moment_parts(p, q, r);
        let v = 0.5 * pre * rat.to_f64().unwrap_or(f64::NAN);
        match h {
            Hemisphere::North => v,
            Hemisphere::South => -v,
        }
    }

    /// Dense table of all moments with total degree `<= max_degree`.
    pub fn integral_table(&self, max_degree: u32) -> IntegralTable {
        IntegralTable::new(self, max_degree)
    }
}

/// `Gamma(m / 2) = rational * sqrt(pi)^sqrt_pi_power`.
struct HalfGamma {
    rational: BigRational,
    sqrt_pi_power: i32,
}

impl std::ops::Mul for HalfGamma {
    type Output = HalfGamma;
    fn mul(self, o: HalfGamma) -> HalfGamma {
        HalfGamma {
            rational: self.rational * o.rational,
            sqrt_pi_power: self.sqrt_pi_power + o.sqrt_pi_power,
        }
    }
}

impl std::ops::Div for HalfGamma {
    type Output = HalfGamma;
    fn div(self, o: HalfGamma) -> HalfGamma {
        HalfGamma {
            rational: self.rational / o.rational,
            sqrt_pi_power: self.sqrt_pi_power - o.sqrt_pi_power,
        }
    }
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn gamma_half(m: u32) -> HalfGamma {
    assert!(m >= 1);
    if m.is_multiple_of(2) {
        HalfGamma {
            rational: BigRational::from_integer(factorial(m / 2 - 1)),
            sqrt_pi_power: 0,
        }
    } else {
        // Gamma(k + 1/2) = (2k)! / (4^k k!) sqrt(pi)
        let k = (m - 1) / 2;
        let den = num_traits::pow(BigInt::from(4), k as usize) * factorial(k);
        HalfGamma {
            rational: BigRational::new(factorial(2 * k), den),
            sqrt_pi_power: 1,
        }
    }
}

/// Cached volume and hemispheric moments up to a total degree.
#[derive(Clone, Debug)]
pub struct IntegralTable {
    max_degree: u32,
    stride: usize,
    full: Vec<f64>,
    north: Vec<f64>,
}

impl IntegralTable {
    fn new(d: &Domain, max_degree: u32) -> Self {
        let stride = max_degree as usize + 1;
        let n = stride * stride * stride;
        let mut full = vec![0.0; n];
        let mut north = vec![0.0; n];
        for p in 0..=max_degree {
            for q in 0..=max_degree - p {
                for r in 0..=max_degree - p - q {
                    let idx = Self::index(stride, [p, q, r]);
                    full[idx] = d.monomial_integral(p, q, r);
                    north[idx] = d.half_monomial_integral(p, q, r, Hemisphere::North);
                }
            }
        }
        Self {
            max_degree,
            stride,
            full,
            north,
        }
    }

    fn index(stride: usize, e: Exponent) -> usize {
        (e[0] as usize * stride + e[1] as usize) * stride + e[2] as usize
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    #[inline]
    pub fn full(&self, e: Exponent) -> f64 {
        debug_assert!(e[0] + e[1] + e[2] <= self.max_degree);
        self.full[Self::index(self.stride, e)]
    }

    #[inline]
    pub fn half(&self, e: Exponent, h: Hemisphere) -> f64 {
        debug_assert!(e[0] + e[1] + e[2] <= self.max_degree);
        let v = self.north[Self::index(self.stride, e)];
        match h {
            Hemisphere::North => v,
            Hemisphere::South => {
                if e[2] % 2 == 1 {
                    -v
                } else {
                    v
                }
            }
        }
    }

    /// `int_Omega p`.
    pub fn integrate(&self, p: &Poly<f64>) -> f64 {
        p.terms().map(|(e, c)| c * self.full(*e)).sum()
    }

    /// `int_Omega p q` without forming the product polynomial.
    ///
    /// Accumulated in double-double: high-degree fields have large,
    /// cancelling monomial coefficients.
    pub fn inner(&self, p: &Poly<f64>, q: &Poly<f64>) -> f64 {
        let mut acc = DoubleDouble::default();
        for (ea, ca) in p.terms() {
            for (eb, cb) in q.terms() {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                if e[0] % 2 == 0 && e[1] % 2 == 0 && e[2] % 2 == 0 {
                    acc.add_product3(*ca, *cb, self.full(e));
                }
            }
        }
        acc.value()
    }

    /// `int_{Omega, +-z > 0} p q`.
    pub fn half_inner(&self, p: &Poly<f64>, q: &Poly<f64>, h: Hemisphere) -> f64 {
        let mut s = 0.0;
        for (ea, ca) in p.terms() {
            for (eb, cb) in q.terms() {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                if e[0] % 2 == 0 && e[1] % 2 == 0 {
                    s += ca * cb * self.half(e, h);
                }
            }
        }
        s
    }
}

/// Compensated accumulator carrying the rounding error of every operation.
#[derive(Clone, Copy, Debug, Default)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    #[inline]
    fn add(&mut self, x: f64) {
        let s = self.hi + x;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x - bp);
        self.hi = s;
        self.lo += err;
    }

    /// Adds `a * b * c` with the first product kept exact.
    #[inline]
    fn add_product3(&mut self, a: f64, b: f64, c: f64) {
        let p = a * b;
        let p_err = a.mul_add(b, -p);
        let q = p * c;
        let q_err = p.mul_add(c, -q);
        self.add(q);
        self.lo += q_err + p_err * c;
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Tensor quadrature rule on the boundary surface.
#[derive(Clone, Debug)]
pub struct SurfaceRule {
    pub nodes: Vec<([f64; 3], f64)>,
    pub orders: (usize, usize),
}

impl SurfaceRule {
    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|(_, w)| w).sum()
    }
}

/// Gauss–Legendre in `u = cos(theta)` times the trapezoidal rule in `phi`
/// on `(a sin(theta) cos(phi), b sin(theta) sin(phi), c cos(theta))`.
///
/// In `u` the area element is `sqrt(b^2c^2 (1-u^2) cos^2 + a^2c^2 (1-u^2) sin^2 + a^2b^2 u^2)`,
/// smooth on `[-1, 1]`, so the rule converges spectrally.
pub fn surface_rule(
    d: &Domain,
    n_theta: usize,
    n_phi: usize,
) -> Result<SurfaceRule, GeometryError> {
    if n_theta < 2 || n_phi < 4 {
        return Err(GeometryError::RuleTooSmall(n_theta, n_phi));
    }
    let [a, b, c] = d.axes();
    let (us, ws) = gauss_legendre(n_theta);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut nodes = Vec::with_capacity(n_theta * n_phi);
    for (u, wu) in us.iter().zip(&ws) {
        let s2 = 1.0 - u * u;
        let s = s2.sqrt();
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            let (sp, cp) = phi.sin_cos();
            let area = (b * b * c * c * s2 * cp * cp
                + a * a * c * c * s2 * sp * sp
                + a * a * b * b * u * u)
                .sqrt();
            nodes.push(([a * s * cp, b * s * sp, c * u], wu * dphi * area));
        }
    }
    Ok(SurfaceRule {
        nodes,
        orders: (n_theta, n_phi),
    })
}

/// Weighted sum of `f` over the rule's nodes.
pub fn surface_integral<F: Fn([f64; 3]) -> f64>(f: F, rule: &SurfaceRule) -> f64 {
    rule.nodes.iter().map(|(p, w)| w * f(*p)).sum()
}
