//! Galerkin matrices, advection tensor and forcing for the weak form
//!
//! ```text
//! M u' + T(u, u) + V u + 2 eps_p C u = F
//! ```
//!
//! on an orthonormal admissible basis `{b_i}`. All entries are exact volume
//! integrals of polynomials. Index convention for the advection tensor:
//! `T[i][j][k] = int (b_i . grad b_j) . b_k`, so the advection contribution to
//! equation `k` is `sum_ij c_i c_j T[i][j][k]`.

use std::fmt;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::basis::{check_field_numeric, l2_inner, Basis};
use crate::geometry::{Hemisphere, IntegralTable};
use crate::poly::{Exponent, Poly, VectorField};

#[derive(Debug, Error, PartialEq)]
pub enum OperatorError {
    #[error("viscosity must be positive, got {0}")]
    BadViscosity(f64),
    #[error("{0} boundary condition needs a data field")]
    MissingData(BcForm),
    #[error("{0} boundary condition takes no data field")]
    UnexpectedData(BcForm),
    #[error("boundary data field must have a constant {0}")]
    NonConstantData(&'static str),
    #[error("boundary data field is not tangent to the domain")]
    DataNotTangent,
    #[error("precession axis must be a unit vector")]
    AxisNotUnit,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Which boundary condition closes the viscous term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcForm {
    /// `(n . eps(u)) x n = 0`.
    StressFree,
    /// `(n . eps(u)) x n = (n . eps(u_P)) x n`.
    PoincareStress,
    /// `(n . grad u) x n = 0`.
    NormalGradient,
    /// `(n . grad u) x n = (n . grad u_P) x n`.
    PoincareNormalGradient,
}

impl BcForm {
    pub const ALL: [BcForm; 4] = [
        BcForm::StressFree,
        BcForm::PoincareStress,
        BcForm::NormalGradient,
        BcForm::PoincareNormalGradient,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BcForm::StressFree => "stress_free",
            BcForm::PoincareStress => "poincare_stress",
            BcForm::NormalGradient => "normal_gradient",
            BcForm::PoincareNormalGradient => "poincare_normal_gradient",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn has_data(&self) -> bool {
        matches!(
            self,
            BcForm::PoincareStress | BcForm::PoincareNormalGradient
        )
    }

    /// True for forms whose viscous operator is the strain-rate form.
    pub fn uses_strain(&self) -> bool {
        matches!(self, BcForm::StressFree | BcForm::PoincareStress)
    }
}

impl fmt::Display for BcForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcSpec {
    pub form: BcForm,
    pub data_field: Option<VectorField<f64>>,
}

impl BcSpec {
    pub fn homogeneous(form: BcForm) -> Result<Self, OperatorError> {
        if form.has_data() {
            return Err(OperatorError::MissingData(form));
        }
        Ok(Self {
            form,
            data_field: None,
        })
    }

    pub fn with_data(form: BcForm, data: VectorField<f64>) -> Result<Self, OperatorError> {
        if !form.has_data() {
            return Err(OperatorError::UnexpectedData(form));
        }
        Ok(Self {
            form,
            data_field: Some(data),
        })
    }

    pub fn stress_free() -> Self {
        Self {
            form: BcForm::StressFree,
            data_field: None,
        }
    }
}

/// Assembled operators. Immutable once built.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub dim: usize,
    pub mass: DMatrix<f64>,
    /// `2 int eps(b_i) : eps(b_j)`.
    pub a_sym: DMatrix<f64>,
    /// `int grad b_i : grad b_j`.
    pub a_grad: DMatrix<f64>,
    /// `int (e x b_j) . b_i` for the precession axis `e`.
    pub coriolis: DMatrix<f64>,
    advection: Vec<f64>,
    pub forcing: DVector<f64>,
    /// `moments[a][i] = int (x x b_i)_a`.
    pub moments: [DVector<f64>; 3],
    pub hemi_north: DMatrix<f64>,
    pub hemi_south: DMatrix<f64>,
    /// `nu * a_sym` or `nu * a_grad` depending on the boundary condition.
    pub viscous: DMatrix<f64>,
    pub bc: BcSpec,
    pub nu: f64,
    pub eps_p: f64,
    pub precession_axis: [f64; 3],
}

/// Dense table of `m -> int x^m p` over all monomials up to a degree.
struct MomentFunctional {
    max_degree: u32,
    stride: usize,
    values: Vec<f64>,
}

impl MomentFunctional {
    fn new(p: &Poly<f64>, max_degree: u32, table: &IntegralTable) -> Self {
        let stride = max_degree as usize + 1;
        let mut values = vec![0.0; stride * stride * stride];
        for i in 0..=max_degree {
            for j in 0..=max_degree - i {
                for k in 0..=max_degree - i - j {
                    let mut s = 0.0;
                    for (e, c) in p.terms() {
                        let f = [e[0] + i, e[1] + j, e[2] + k];
                        if f[0] % 2 == 0 && f[1] % 2 == 0 && f[2] % 2 == 0 {
                            s += c * table.full(f);
                        }
                    }
                    values[(i as usize * stride + j as usize) * stride + k as usize] = s;
                }
            }
        }
        Self {
            max_degree,
            stride,
            values,
        }
    }

    #[inline]
    fn at(&self, e: &Exponent) -> f64 {
        debug_assert!(e[0] + e[1] + e[2] <= self.max_degree);
        self.values[(e[0] as usize * self.stride + e[1] as usize) * self.stride + e[2] as usize]
    }

    fn apply(&self, p: &Poly<f64>) -> f64 {
        p.terms().map(|(e, c)| c * self.at(e)).sum()
    }
}

fn frobenius_inner(a: &[[Poly<f64>; 3]; 3], b: &[[Poly<f64>; 3]; 3], table: &IntegralTable) -> f64 {
    let mut s = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            s += table.inner(&a[r][c], &b[r][c]);
        }
    }
    s
}

fn symmetric_matrix<F: Fn(usize, usize) -> f64 + Sync>(n: usize, f: F) -> DMatrix<f64> {
    let entries: Vec<(usize, usize, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (0..=i).map(move |j| (i, j)).collect::<Vec<_>>())
        .map(|(i, j)| (i, j, f(i, j)))
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, j, v) in entries {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

fn is_constant(p: &Poly<f64>) -> bool {
    p.degree().unwrap_or(0) == 0
}

/// Assembles every operator of the Galerkin system on `basis`.
pub fn assemble(
    basis: &Basis,
    bc: &BcSpec,
    nu: f64,
    eps_p: f64,
    precession_axis: [f64; 3],
) -> Result<OperatorSet, OperatorError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(OperatorError::BadViscosity(nu));
    }
    let axis_norm = precession_axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (axis_norm - 1.0).abs() > 1e-12 {
        return Err(OperatorError::AxisNotUnit);
    }
    match (&bc.data_field, bc.form.has_data()) {
        (None, true) => return Err(OperatorError::MissingData(bc.form)),
        (Some(_), false) => return Err(OperatorError::UnexpectedData(bc.form)),
        (Some(data), true) => {
            let constant = if bc.form.uses_strain() {
                data.strain().iter().flatten().all(is_constant)
            } else {
                data.gradient().iter().flatten().all(is_constant)
            };
            if !constant {
                return Err(OperatorError::NonConstantData(if bc.form.uses_strain() {
                    "strain"
                } else {
                    "gradient"
                }));
            }
            if !check_field_numeric(data, &basis.domain, 1e-12).passed() {
                return Err(OperatorError::DataNotTangent);
            }
        }
        (None, false) => {}
    }

    let n = basis.dim();
    let table = basis.table();
    let fields = &basis.fields;
    let grads: Vec<[[Poly<f64>; 3]; 3]> = fields.iter().map(VectorField::gradient).collect();
    let strains: Vec<[[Poly<f64>; 3]; 3]> = fields.iter().map(VectorField::strain).collect();

    let mass = symmetric_matrix(n, |i, j| l2_inner(&fields[i], &fields[j], table));
    let a_sym = symmetric_matrix(n, |i, j| {
        2.0 * frobenius_inner(&strains[i], &strains[j], table)
    });
    let a_grad = symmetric_matrix(n, |i, j| frobenius_inner(&grads[i], &grads[j], table));
    let hemi_north = symmetric_matrix(n, |i, j| {
        (0..3)
            .map(|c| {
                table.half_inner(
                    &fields[i].components[c],
                    &fields[j].components[c],
                    Hemisphere::North,
                )
            })
            .sum()
    });
    let hemi_south = symmetric_matrix(n, |i, j| {
        (0..3)
            .map(|c| {
                table.half_inner(
                    &fields[i].components[c],
                    &fields[j].components[c],
                    Hemisphere::South,
                )
            })
            .sum()
    });

    let e = VectorField::constant(precession_axis);
    let rotated: Vec<VectorField<f64>> = fields.iter().map(|b| e.cross(b)).collect();
    let mut coriolis = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            coriolis[(i, j)] = l2_inner(&rotated[j], &fields[i], table);
        }
    }

    let x = VectorField::position();
    let torques: Vec<VectorField<f64>> = fields.iter().map(|b| x.cross(b)).collect();
    let moments: [DVector<f64>; 3] = std::array::from_fn(|a| {
        DVector::from_iterator(n, torques.iter().map(|t| table.integrate(&t.components[a])))
    });

    let advection = assemble_advection(basis, &grads);

    let forcing = match (&bc.data_field, bc.form) {
        (Some(data), BcForm::PoincareStress) => {
            let s = data.strain();
            DVector::from_iterator(
                n,
                strains
                    .iter()
                    .map(|sk| 2.0 * nu * frobenius_inner(&s, sk, table)),
            )
        }
        (Some(data), BcForm::PoincareNormalGradient) => {
            let g = data.gradient();
            DVector::from_iterator(
                n,
                grads.iter().map(|gk| nu * frobenius_inner(&g, gk, table)),
            )
        }
        _ => DVector::zeros(n),
    };

    let viscous = if bc.form.uses_strain() {
        &a_sym * nu
    } else {
        &a_grad * nu
    };

    Ok(OperatorSet {
        dim: n,
        mass,
        a_sym,
        a_grad,
        coriolis,
        advection,
        forcing,
        moments,
        hemi_north,
        hemi_south,
        viscous,
        bc: bc.clone(),
        nu,
        eps_p,
        precession_axis,
    })
}

fn assemble_advection(basis: &Basis, grads: &[[[Poly<f64>; 3]; 3]]) -> Vec<f64> {
    let n = basis.dim();
    let table = basis.table();
    let deg = basis.degree as u32;
    // (b_i . grad b_j) has degree <= 2N - 1.
    let test_deg = (2 * deg).saturating_sub(1);
    let functionals: Vec<[MomentFunctional; 3]> = basis
        .fields
        .iter()
        .map(|b| std::array::from_fn(|c| MomentFunctional::new(&b.components[c], test_deg, table)))
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bi = &basis.fields[i];
            let mut row = vec![0.0; n * n];
            for j in 0..n {
                let w: [Poly<f64>; 3] = std::array::from_fn(|c| {
                    let mut s = Poly::zero();
                    for a in 0..3 {
                        s = &s + &(&bi.components[a] * &grads[j][a][c]);
                    }
                    s
                });
                for (k, fk) in functionals.iter().enumerate() {
                    row[j * n + k] = (0..3).map(|c| fk[c].apply(&w[c])).sum();
                }
            }
            row
        })
        .collect();
    rows.into_iter().flatten().collect()
}

impl OperatorSet {
    #[inline]
    pub fn advection_entry(&self, i: usize, j: usize, k: usize) -> f64 {
        self.advection[(i * self.dim + j) * self.dim + k]
    }

    /// Test hook: adds `delta` to one advection entry.
    pub fn perturb_advection(&mut self, i: usize, j: usize, k: usize, delta: f64) {
        let n = self.dim;
        self.advection[(i * n + j) * n + k] += delta;
    }

    fn check_dim(&self, c: &DVector<f64>) -> Result<(), OperatorError> {
        if c.len() != self.dim {
            return Err(OperatorError::DimensionMismatch {
                expected: self.dim,
                got: c.len(),
            });
        }
        Ok(())
    }

    /// `N(u)[k] = sum_ij c_i c_j T[i][j][k]`.
    pub fn advect(&self, c: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        let mut w = vec![0.0; n * n];
        for (i, ci) in c.iter().enumerate() {
            if *ci == 0.0 {
                continue;
            }
            let block = &self.advection[i * n * n..(i + 1) * n * n];
            for (wv, tv) in w.iter_mut().zip(block) {
                *wv += ci * tv;
            }
        }
        let mut out = DVector::zeros(n);
        for (j, cj) in c.iter().enumerate() {
            if *cj == 0.0 {
                continue;
            }
            for k in 0..n {
                out[k] += cj * w[j * n + k];
            }
        }
        out
    }

    /// Steady residual `N(u) + V u + 2 eps_p C u - F`.
    pub fn residual(&self, c: &DVector<f64>) -> Result<DVector<f64>, OperatorError> {
        self.check_dim(c)?;
        let mut r = self.advect(c);
        r += &self.viscous * c;
        r += (&self.coriolis * c) * (2.0 * self.eps_p);
        r -= &self.forcing;
        Ok(r)
    }

    /// `M = int x x u`.
    pub fn angular_momentum(&self, c: &DVector<f64>) -> Result<Vector3<f64>, OperatorError> {
        self.check_dim(c)?;
        Ok(Vector3::new(
            self.moments[0].dot(c),
            self.moments[1].dot(c),
            self.moments[2].dot(c),
        ))
    }

    /// Instantaneous `dE_K/dt = F . c - c . V c`; advection and Coriolis
    /// contribute nothing.
    pub fn energy_rate(&self, c: &DVector<f64>) -> f64 {
        self.forcing.dot(c) - c.dot(&(&self.viscous * c))
    }

    /// Max over `i, j, k` of `|T[i][j][k] + T[i][k][j]|`.
    pub fn advection_antisymmetry_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    worst = worst
                        .max((self.advection_entry(i, j, k) + self.advection_entry(i, k, j)).abs());
                }
            }
        }
        worst
    }

    /// Writes every matrix and vector, row-major, 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        let matrix = |w: &mut W, name: &str, m: &DMatrix<f64>| -> io::Result<()> {
            writeln!(w, "# {name} {} {}", m.nrows(), m.ncols())?;
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols())
                    .map(|c| format!("{:.16e}", m[(r, c)]))
                    .collect();
                writeln!(w, "{}", row.join(" "))?;
            }
            Ok(())
        };
        matrix(&mut w, "mass", &self.mass)?;
        matrix(&mut w, "a_sym", &self.a_sym)?;
        matrix(&mut w, "a_grad", &self.a_grad)?;
        matrix(&mut w, "coriolis", &self.coriolis)?;
        matrix(&mut w, "hemi_north", &self.hemi_north)?;
        matrix(&mut w, "hemi_south", &self.hemi_south)?;
        let vectors = [
            ("forcing", &self.forcing),
            ("moment_x", &self.moments[0]),
            ("moment_y", &self.moments[1]),
            ("moment_z", &self.moments[2]),
        ];
        for (name, v) in vectors {
            writeln!(w, "# {name} {}", v.len())?;
            let row: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        let n = self.dim;
        writeln!(w, "# advection {n} {n} {n}")?;
        for ij in 0..n * n {
            let row: Vec<String> = self.advection[ij * n..(ij + 1) * n]
                .iter()
                .map(|x| format!("{x:.16e}"))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Both sides of `int e_y . (x x v) = 2 int (e_z x x) . (e_x x v)`, each
/// integrated exactly from its own polynomial integrand.
pub fn my_identity_check(v: &VectorField<f64>, table: &IntegralTable) -> (f64, f64) {
    let x = VectorField::position();
    let lhs = table.integrate(&x.cross(v).components[1]);
    let ez_x = VectorField::constant([0.0, 0.0, 1.0]).cross(&x);
    let ex_v = VectorField::constant([1.0, 0.0, 0.0]).cross(v);
    let rhs = 2.0 * table.integrate(&ez_x.dot(&ex_v));
    (lhs, rhs)
}
