//! Discrete velocity space: divergence-free polynomial fields of total degree
//! `<= N` tangent to the ellipsoid boundary.
//!
//! A vector polynomial `v` is admissible iff `div v = 0` and `v . grad chi =
//! chi q` for some polynomial `q` of degree `<= N - 1`. Both are linear
//! identities in the coefficients of `(v, q)`, so the space is the nullspace
//! of a rational matrix, computed here by exact elimination. The identities
//! never mix monomials of different parity signature, so the system splits
//! into eight independent blocks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::geometry::{Domain, GeometryError, IntegralTable};
use crate::poly::{combine, monomials_up_to, Coeff, Exponent, Poly, VectorField};

/// Largest degree the CLI accepts by default.
pub const DEFAULT_MAX_DEGREE: usize = 8;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("basis degree must be at least 1, got {0}")]
    DegreeTooSmall(usize),
    #[error("non-positive pivot {value:e} while orthonormalizing field {index}")]
    NonPositivePivot { index: usize, value: f64 },
    #[error("beta must satisfy beta > -1 and beta != 0, got {0}")]
    SingularPoincare(f64),
    #[error("rotation axis must be a unit vector, got norm {0}")]
    AxisNotUnit(f64),
    #[error("basis file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Unknown {
    /// Coefficient of monomial `e` in component `c` of `v`.
    V(usize, Exponent),
    /// Coefficient of monomial `e` in the multiplier `q`.
    Q(Exponent),
}

impl Unknown {
    fn parity(&self) -> [u32; 3] {
        match *self {
            Unknown::V(c, e) => {
                let mut s = e;
                s[c] += 1;
                s.map(|v| v % 2)
            }
            Unknown::Q(e) => e.map(|v| v % 2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Identity {
    Divergence(Exponent),
    Tangency(Exponent),
}

fn shift(e: Exponent, axis: usize, by: i32) -> Option<Exponent> {
    let mut f = e;
    let v = f[axis] as i32 + by;
    if v < 0 {
        return None;
    }
    f[axis] = v as u32;
    Some(f)
}

/// Exact nullspace of a dense rational matrix by reduced row echelon form.
fn rational_nullspace(mut rows: Vec<Vec<BigRational>>, ncols: usize) -> Vec<Vec<BigRational>> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][col].recip();
        for v in rows[r].iter_mut() {
            *v = &*v * &inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v = &*v - &(&f * pv);
                }
            }
        }
        pivots.push(col);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    let mut is_pivot = vec![false; ncols];
    for &c in &pivots {
        is_pivot[c] = true;
    }
    let mut null = Vec::new();
    for free in (0..ncols).filter(|&c| !is_pivot[c]) {
        let mut v = vec![BigRational::zero(); ncols];
        v[free] = BigRational::one();
        for (row, &pc) in pivots.iter().enumerate() {
            v[pc] = -rows[row][free].clone();
        }
        null.push(v);
    }
    null
}

/// Exact admissible fields spanning the degree-`degree` space, before
/// orthonormalization. Fields are ordered by degree, then by parity block.
pub fn admissible_fields_exact(
    d: &Domain,
    degree: usize,
) -> Result<Vec<VectorField<BigRational>>, BasisError> {
    if degree < 1 {
        return Err(BasisError::DegreeTooSmall(degree));
    }
    let n = degree as u32;
    let k = d.chi_coefficients();
    let two = BigRational::from_i64(2);

    // Linear identities as sparse rows keyed by (identity, unknown).
    let mut unknowns = Vec::new();
    for c in 0..3 {
        for e in monomials_up_to(n) {
            unknowns.push(Unknown::V(c, e));
        }
    }
    for e in monomials_up_to(n - 1) {
        unknowns.push(Unknown::Q(e));
    }
    let mut system: BTreeMap<Identity, BTreeMap<Unknown, BigRational>> = BTreeMap::new();
    let mut add = |id: Identity, u: Unknown, v: BigRational| {
        let row = system.entry(id).or_default();
        let slot = row.entry(u).or_insert_with(BigRational::zero);
        *slot = &*slot + &v;
    };
    for &u in &unknowns {
        match u {
            Unknown::V(c, e) => {
                if let Some(f) = shift(e, c, -1) {
                    add(
                        Identity::Divergence(f),
                        u,
                        BigRational::from_i64(e[c] as i64),
                    );
                }
                // v_c * d(chi)/dx_c = -2 k_c x_c v_c
                let f = shift(e, c, 1).expect("shift up");
                add(Identity::Tangency(f), u, -(&two * &k[c]));
            }
            Unknown::Q(e) => {
                // -chi q = -q + sum k_i x_i^2 q
                add(Identity::Tangency(e), u, -BigRational::one());
                for (i, ki) in k.iter().enumerate() {
                    add(
                        Identity::Tangency(shift(e, i, 2).expect("shift up")),
                        u,
                        ki.clone(),
                    );
                }
            }
        }
    }

    let mut blocks: BTreeMap<[u32; 3], Vec<Unknown>> = BTreeMap::new();
    for &u in &unknowns {
        blocks.entry(u.parity()).or_default().push(u);
    }

    let mut fields: Vec<(u32, VectorField<BigRational>)> = Vec::new();
    for (_, cols) in blocks {
        let index: BTreeMap<Unknown, usize> =
            cols.iter().enumerate().map(|(i, u)| (*u, i)).collect();
        let rows: Vec<Vec<BigRational>> = system
            .values()
            .filter(|row| row.keys().next().is_some_and(|u| index.contains_key(u)))
            .map(|row| {
                let mut dense = vec![BigRational::zero(); cols.len()];
                for (u, v) in row {
                    dense[index[u]] = v.clone();
                }
                dense
            })
            .collect();
        for vec in rational_nullspace(rows, cols.len()) {
            let mut comps: [Poly<BigRational>; 3] = Default::default();
            for (u, v) in cols.iter().zip(vec) {
                if let Unknown::V(c, e) = u {
                    comps[*c].add_term(*e, v);
                }
            }
            let f = VectorField { components: comps };
            let deg = f.degree().unwrap_or(0);
            fields.push((deg, f));
        }
    }
    fields.sort_by_key(|(deg, _)| *deg);
    Ok(fields.into_iter().map(|(_, f)| f).collect())
}

/// Outcome of the two structural checks on one field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldCheck {
    pub divergence_free: bool,
    pub tangent: bool,
}

impl FieldCheck {
    pub fn passed(&self) -> bool {
        self.divergence_free && self.tangent
    }
}

/// Exact check: `div v == 0` and `chi | v . grad chi` as polynomial identities.
pub fn check_field_exact(v: &VectorField<BigRational>, d: &Domain) -> FieldCheck {
    let chi = d.chi();
    let grad = VectorField::new(chi.derivative(0), chi.derivative(1), chi.derivative(2));
    let flux = v.dot(&grad);
    let (_, rem) = flux.div_rem_quadric(&d.chi_coefficients());
    FieldCheck {
        divergence_free: v.divergence().is_zero(),
        tangent: rem.is_zero(),
    }
}

/// Floating-point version of [`check_field_exact`]; coefficients of the
/// divergence and of the division remainder must be below
/// `tol * max|coefficient of v|`.
pub fn check_field_numeric(v: &VectorField<f64>, d: &Domain, tol: f64) -> FieldCheck {
    let k = d.chi_coefficients().map(|r| r.to_f64());
    let chi = d.chi().to_f64();
    let grad = VectorField::new(chi.derivative(0), chi.derivative(1), chi.derivative(2));
    let (_, rem) = v.dot(&grad).div_rem_quadric(&k);
    let scale = v.max_abs_coeff().max(f64::MIN_POSITIVE);
    FieldCheck {
        divergence_free: v.divergence().max_abs_coeff() <= tol * scale,
        tangent: rem.max_abs_coeff() <= tol * scale,
    }
}

/// `int_Omega u . v`.
pub fn l2_inner(u: &VectorField<f64>, v: &VectorField<f64>, table: &IntegralTable) -> f64 {
    (0..3)
        .map(|c| table.inner(&u.components[c], &v.components[c]))
        .sum()
}

/// L2-orthonormal basis of the admissible space.
#[derive(Clone, Debug)]
pub struct Basis {
    pub domain: Domain,
    pub degree: usize,
    pub fields: Vec<VectorField<f64>>,
    /// Exact pre-orthonormalization fields; absent for imported bases.
    pub exact: Option<Vec<VectorField<BigRational>>>,
    /// Gram matrix of `fields`.
    pub gram: DMatrix<f64>,
    /// 2-norm condition number of the Gram matrix of the exact fields.
    pub raw_condition: f64,
    table: IntegralTable,
}

/// Coefficients of an L2 projection and the norm of what is left over.
#[derive(Clone, Debug)]
pub struct Projection {
    pub coeffs: DVector<f64>,
    pub residual: f64,
}

fn gram_of(fields: &[VectorField<f64>], table: &IntegralTable) -> DMatrix<f64> {
    let n = fields.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = l2_inner(&fields[i], &fields[j], table);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

fn condition_number(g: &DMatrix<f64>) -> f64 {
    if g.nrows() == 0 {
        return 1.0;
    }
    let ev = g.clone().symmetric_eigenvalues();
    let max = ev.iter().cloned().fold(f64::MIN, f64::max);
    let min = ev.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

/// Modified Gram–Schmidt with one reorthogonalization pass in the metric `g`.
/// Column `k` of the result holds the coefficients of orthonormal field `k`.
fn orthonormalize(g: &DMatrix<f64>) -> Result<DMatrix<f64>, BasisError> {
    let n = g.nrows();
    let mut q = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let mut v = DVector::<f64>::zeros(n);
        v[k] = 1.0;
        for _pass in 0..2 {
            for j in 0..k {
                let qj = q.column(j);
                let proj = qj.dot(&(g * &v));
                v.axpy(-proj, &qj, 1.0);
            }
        }
        let norm2 = v.dot(&(g * &v));
        if !(norm2 > 0.0) || norm2 <= 1e-15 * g[(k, k)] {
            return Err(BasisError::NonPositivePivot {
                index: k,
                value: norm2,
            });
        }
        q.set_column(k, &(v / norm2.sqrt()));
    }
    Ok(q)
}

impl Basis {
    /// Exact admissible space of degree `degree`, L2-orthonormalized.
    pub fn build(domain: &Domain, degree: usize) -> Result<Self, BasisError> {
        let exact = admissible_fields_exact(domain, degree)?;
        let table = domain.integral_table(3 * degree as u32 + 2);
        let raw: Vec<VectorField<f64>> = exact.iter().map(VectorField::to_f64).collect();
        let raw_gram = gram_of(&raw, &table);
        let raw_condition = condition_number(&raw_gram);
        let mut fields = raw;
        let mut gram = raw_gram;
        // A second round against the Gram of the first-round fields removes
        // the cond(G) * eps orthogonality loss at high degree.
        for _round in 0..3 {
            let q = orthonormalize(&gram)?;
            fields = (0..fields.len())
                .map(|k| {
                    let w: Vec<f64> = q.column(k).iter().cloned().collect();
                    combine(&w, &fields)
                })
                .collect();
            gram = gram_of(&fields, &table);
            let n = gram.nrows();
            if (&gram - DMatrix::<f64>::identity(n, n)).amax() < 1e-14 {
                break;
            }
        }
        Ok(Self {
            domain: domain.clone(),
            degree,
            fields,
            exact: Some(exact),
            gram,
            raw_condition,
            table,
        })
    }

    /// Wraps existing float fields (e.g. read from a file) without changing them.
    pub fn from_fields(domain: &Domain, degree: usize, fields: Vec<VectorField<f64>>) -> Self {
        let table = domain.integral_table(3 * degree as u32 + 2);
        let gram = gram_of(&fields, &table);
        let raw_condition = condition_number(&gram);
        Self {
            domain: domain.clone(),
            degree,
            fields,
            exact: None,
            gram,
            raw_condition,
            table,
        }
    }

    pub fn dim(&self) -> usize {
        self.fields.len()
    }

    pub fn table(&self) -> &IntegralTable {
        &self.table
    }

    /// Max-norm deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.dim();
        (&self.gram - DMatrix::<f64>::identity(n, n)).amax()
    }

    /// Structural checks, exact when the exact fields are available.
    pub fn check_fields(&self, tol: f64) -> Vec<FieldCheck> {
        match &self.exact {
            Some(ex) => ex
                .iter()
                .map(|f| check_field_exact(f, &self.domain))
                .collect(),
            None => self
                .fields
                .iter()
                .map(|f| check_field_numeric(f, &self.domain, tol))
                .collect(),
        }
    }

    /// L2-orthogonal projection of `v` onto the span of the basis.
    pub fn project(&self, v: &VectorField<f64>) -> Projection {
        let rhs = DVector::from_iterator(
            self.dim(),
            self.fields.iter().map(|b| l2_inner(v, b, &self.table)),
        );
        let coeffs = match self.gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => rhs,
        };
        let recon = self.reconstruct(coeffs.as_slice());
        let diff = v - &recon;
        let residual = l2_inner(&diff, &diff, &self.table).max(0.0).sqrt();
        Projection { coeffs, residual }
    }

    /// Field `sum_i c_i b_i`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> VectorField<f64> {
        combine(coeffs, &self.fields)
    }

    /// Writes the basis as text: `#` header lines, then one line per field
    /// with `x:`, `y:`, `z:` sections of `i,j,k:coefficient` terms.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        let sq = self.domain.squared_axes();
        let _ = writeln!(s, "# ellipflow basis v1");
        let _ = writeln!(s, "# axes2 {} {} {}", sq[0], sq[1], sq[2]);
        let _ = writeln!(s, "# degree {}", self.degree);
        let _ = writeln!(s, "# dim {}", self.dim());
        for f in &self.fields {
            let parts: Vec<String> = ["x", "y", "z"]
                .iter()
                .zip(&f.components)
                .map(|(name, p)| {
                    let terms: Vec<String> = p
                        .terms()
                        .map(|(e, c)| format!("{},{},{}:{:.16e}", e[0], e[1], e[2], c))
                        .collect();
                    format!("{name}: {}", terms.join(" "))
                })
                .collect();
            let _ = writeln!(s, "{}", parts.join(" | "));
        }
        s
    }

    pub fn import_text(text: &str) -> Result<Self, BasisError> {
        let perr = |line: usize, msg: &str| BasisError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut squares: Option<[BigRational; 3]> = None;
        let mut degree: Option<usize> = None;
        let mut fields = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let mut it = h.split_whitespace();
                match it.next() {
                    Some("axes2") => {
                        let v: Vec<BigRational> = it
                            .map(|t| {
                                t.parse::<BigRational>()
                                    .map_err(|_| perr(line_no, "bad axis square"))
                            })
                            .collect::<Result<_, _>>()?;
                        let arr: [BigRational; 3] = v
                            .try_into()
                            .map_err(|_| perr(line_no, "axes2 needs three values"))?;
                        squares = Some(arr);
                    }
                    Some("degree") => {
                        degree = Some(
                            it.next()
                                .and_then(|t| t.parse().ok())
                                .ok_or_else(|| perr(line_no, "bad degree"))?,
                        );
                    }
                    _ => {}
                }
                continue;
            }
            let sections: Vec<&str> = line.split('|').collect();
            if sections.len() != 3 {
                return Err(perr(line_no, "expected three components"));
            }
            let mut comps: [Poly<f64>; 3] = Default::default();
            for (c, sec) in sections.iter().enumerate() {
                let body = sec
                    .trim()
                    .strip_prefix(["x:", "y:", "z:"][c])
                    .ok_or_else(|| perr(line_no, "missing component label"))?;
                for term in body.split_whitespace() {
                    let (exp, coef) = term
                        .split_once(':')
                        .ok_or_else(|| perr(line_no, "bad term"))?;
                    let e: Vec<u32> = exp
                        .split(',')
                        .map(|t| t.parse().map_err(|_| perr(line_no, "bad exponent")))
                        .collect::<Result<_, _>>()?;
                    let e: Exponent = e
                        .try_into()
                        .map_err(|_| perr(line_no, "exponent needs three entries"))?;
                    let v: f64 = coef.parse().map_err(|_| perr(line_no, "bad coefficient"))?;
                    comps[c].add_term(e, v);
                }
            }
            fields.push(VectorField { components: comps });
        }
        let squares = squares.ok_or_else(|| perr(0, "missing axes2 header"))?;
        let degree = degree.ok_or_else(|| perr(0, "missing degree header"))?;
        let domain = Domain::from_squares(squares)?;
        Ok(Self::from_fields(&domain, degree, fields))
    }

    pub fn export_file(&self, path: &Path) -> Result<(), BasisError> {
        std::fs::write(path, self.export_text())?;
        Ok(())
    }

    pub fn import_file(path: &Path) -> Result<Self, BasisError> {
        Self::import_text(&std::fs::read_to_string(path)?)
    }
}

/// Fields `grad chi x grad psi` for every monomial `psi` with
/// `1 <= deg psi <= degree`. Used only to cross-check [`Basis::build`].
pub fn curl_form_fields(d: &Domain, degree: usize) -> Vec<VectorField<BigRational>> {
    let chi = d.chi();
    let grad_chi = VectorField::new(chi.derivative(0), chi.derivative(1), chi.derivative(2));
    monomials_up_to(degree as u32)
        .into_iter()
        .filter(|e| e[0] + e[1] + e[2] >= 1)
        .map(|e| {
            let psi = Poly::monomial(e, BigRational::one());
            let grad_psi =
                VectorField::new(psi.derivative(0), psi.derivative(1), psi.derivative(2));
            grad_chi.cross(&grad_psi)
        })
        .collect()
}

/// The steady precession flow
/// `u_P = -y e_x + (x - (2 eps/beta)(1 + beta) z) e_y + (2 eps/beta) y e_z`.
pub fn poincare_field(beta: f64, eps_p: f64) -> Result<VectorField<f64>, BasisError> {
    if beta == 0.0 || !(beta > -1.0) || !beta.is_finite() {
        return Err(BasisError::SingularPoincare(beta));
    }
    let k = 2.0 * eps_p / beta;
    Ok(VectorField::linear([
        [0.0, -1.0, 0.0],
        [1.0, 0.0, -k * (1.0 + beta)],
        [0.0, k, 0.0],
    ]))
}

/// Rigid rotation `axis x x` about a unit axis.
pub fn solid_rotation(axis: [f64; 3]) -> Result<VectorField<f64>, BasisError> {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(BasisError::AxisNotUnit(norm));
    }
    let [ax, ay, az] = axis;
    Ok(VectorField::linear([
        [0.0, -az, ay],
        [az, 0.0, -ax],
        [-ay, ax, 0.0],
    ]))
}

/// The rotation `e_z x x` about the symmetry axis.
pub fn axial_rotation() -> VectorField<f64> {
    solid_rotation([0.0, 0.0, 1.0]).expect("unit axis")
}
